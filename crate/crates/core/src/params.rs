//! Domain types shared by every module: layered parameter containers,
//! preference weights, objective vectors and cluster bookkeeping.
//!
//! All types are plain immutable values once constructed. Arithmetic on
//! parameter containers checks shape compatibility and rejects non-finite
//! results.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A model stored as an ordered list of layer vectors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayeredParams {
    layers: Vec<Vec<f64>>,
}

/// `θ_i − θ̄`: the change of a model relative to a reference model.
///
/// Shares the layer layout of the model it was derived from.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamDelta(LayeredParams);

fn check_finite(layers: &[Vec<f64>]) -> Result<()> {
    for (l, layer) in layers.iter().enumerate() {
        if let Some(i) = layer.iter().position(|v| !v.is_finite()) {
            return Err(Error::Numeric(format!(
                "non-finite value {} at layer {l}, index {i}",
                layer[i]
            )));
        }
    }
    Ok(())
}

impl LayeredParams {
    pub fn new(layers: Vec<Vec<f64>>) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::Shape("model must have at least one layer".into()));
        }
        if let Some(l) = layers.iter().position(Vec::is_empty) {
            return Err(Error::Shape(format!("layer {l} is empty")));
        }
        check_finite(&layers)?;
        Ok(Self { layers })
    }

    /// Splits a flat vector into consecutive layers of the given sizes.
    pub fn from_flat(flat: &[f64], layer_sizes: &[usize]) -> Result<Self> {
        let total: usize = layer_sizes.iter().sum();
        if total != flat.len() {
            return Err(Error::Shape(format!(
                "layer sizes sum to {total} but flat vector has {} entries",
                flat.len()
            )));
        }
        let mut layers = Vec::with_capacity(layer_sizes.len());
        let mut offset = 0;
        for &size in layer_sizes {
            layers.push(flat[offset..offset + size].to_vec());
            offset += size;
        }
        Self::new(layers)
    }

    pub fn zeros(layer_sizes: &[usize]) -> Result<Self> {
        Self::new(layer_sizes.iter().map(|&d| vec![0.0; d]).collect())
    }

    pub fn layers(&self) -> &[Vec<f64>] {
        &self.layers
    }

    pub fn layer_count(&self) -> usize {
        self.layers.len()
    }

    pub fn layer_sizes(&self) -> Vec<usize> {
        self.layers.iter().map(Vec::len).collect()
    }

    pub fn dim(&self) -> usize {
        self.layers.iter().map(Vec::len).sum()
    }

    /// Concatenation of all layers.
    pub fn flatten(&self) -> Vec<f64> {
        self.layers.iter().flatten().copied().collect()
    }

    pub fn is_compatible(&self, other: &Self) -> bool {
        self.layers.len() == other.layers.len()
            && self
                .layers
                .iter()
                .zip(&other.layers)
                .all(|(a, b)| a.len() == b.len())
    }

    fn ensure_compatible(&self, other: &Self) -> Result<()> {
        if self.is_compatible(other) {
            Ok(())
        } else {
            Err(Error::Shape(format!(
                "layer layouts differ: {:?} vs {:?}",
                self.layer_sizes(),
                other.layer_sizes()
            )))
        }
    }

    fn zip_with(&self, other: &Self, f: impl Fn(f64, f64) -> f64) -> Result<Self> {
        self.ensure_compatible(other)?;
        let layers = self
            .layers
            .iter()
            .zip(&other.layers)
            .map(|(a, b)| a.iter().zip(b).map(|(&x, &y)| f(x, y)).collect())
            .collect::<Vec<Vec<f64>>>();
        check_finite(&layers)?;
        Ok(Self { layers })
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        self.zip_with(other, |a, b| a + b)
    }

    pub fn sub(&self, other: &Self) -> Result<Self> {
        self.zip_with(other, |a, b| a - b)
    }

    pub fn scale(&self, c: f64) -> Result<Self> {
        let layers = self
            .layers
            .iter()
            .map(|l| l.iter().map(|&x| x * c).collect())
            .collect::<Vec<Vec<f64>>>();
        check_finite(&layers)?;
        Ok(Self { layers })
    }

    /// `self − reference`, typed as a delta.
    pub fn delta_from(&self, reference: &Self) -> Result<ParamDelta> {
        self.sub(reference).map(ParamDelta)
    }

    /// Convex combination `Σ_j weights[j]·models[j]`, accumulated in index order.
    pub fn weighted_sum(models: &[&Self], weights: &[f64]) -> Result<Self> {
        let first = models
            .first()
            .ok_or_else(|| Error::Shape("weighted sum over zero models".into()))?;
        if models.len() != weights.len() {
            return Err(Error::Shape(format!(
                "{} models but {} weights",
                models.len(),
                weights.len()
            )));
        }
        let mut layers: Vec<Vec<f64>> = first.layers.iter().map(|l| vec![0.0; l.len()]).collect();
        for (model, &w) in models.iter().zip(weights) {
            first.ensure_compatible(model)?;
            for (acc, layer) in layers.iter_mut().zip(&model.layers) {
                for (a, &x) in acc.iter_mut().zip(layer) {
                    *a += w * x;
                }
            }
        }
        check_finite(&layers)?;
        Ok(Self { layers })
    }

    /// Elementwise arithmetic mean.
    pub fn mean(models: &[&Self]) -> Result<Self> {
        let first = models
            .first()
            .ok_or_else(|| Error::Shape("mean of an empty model list".into()))?;
        let mut layers = first.layers.clone();
        for model in &models[1..] {
            first.ensure_compatible(model)?;
            for (acc, layer) in layers.iter_mut().zip(&model.layers) {
                for (a, &x) in acc.iter_mut().zip(layer) {
                    *a += x;
                }
            }
        }
        let n = models.len() as f64;
        for layer in &mut layers {
            for a in layer.iter_mut() {
                *a /= n;
            }
        }
        check_finite(&layers)?;
        Ok(Self { layers })
    }
}

impl ParamDelta {
    pub fn new(layers: Vec<Vec<f64>>) -> Result<Self> {
        LayeredParams::new(layers).map(ParamDelta)
    }

    pub fn layers(&self) -> &[Vec<f64>] {
        self.0.layers()
    }

    pub fn as_params(&self) -> &LayeredParams {
        &self.0
    }

    pub fn is_compatible(&self, other: &Self) -> bool {
        self.0.is_compatible(&other.0)
    }

    pub fn scale(&self, c: f64) -> Result<Self> {
        self.0.scale(c).map(ParamDelta)
    }

    pub fn neg(&self) -> Result<Self> {
        self.scale(-1.0)
    }

    /// Euclidean norm of the concatenated layers.
    pub fn flat_norm(&self) -> f64 {
        flat_norm(self)
    }
}

impl From<LayeredParams> for ParamDelta {
    fn from(p: LayeredParams) -> Self {
        ParamDelta(p)
    }
}

/// Euclidean norm of the concatenation of all layers of `d`.
pub fn flat_norm(d: &ParamDelta) -> f64 {
    d.layers()
        .iter()
        .flatten()
        .map(|x| x * x)
        .sum::<f64>()
        .sqrt()
}

/// Tolerance on `Σ w = 1` accepted at construction.
pub const SIMPLEX_TOL: f64 = 1e-9;

/// Per-client objective weights on the probability simplex.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct PreferenceVector(Vec<f64>);

impl PreferenceVector {
    /// Validates nonnegativity and renormalises to unit sum.
    ///
    /// Negative or non-finite entries are rejected, never clamped. Exact zeros
    /// are allowed.
    pub fn new(weights: Vec<f64>) -> Result<Self> {
        if weights.is_empty() {
            return Err(Error::Shape("preference vector is empty".into()));
        }
        if let Some(w) = weights.iter().find(|w| !w.is_finite() || **w < 0.0) {
            return Err(Error::Precondition(format!(
                "preference weight {w} is negative or non-finite"
            )));
        }
        let sum: f64 = weights.iter().sum();
        if sum <= 0.0 {
            return Err(Error::Precondition("preference weights sum to zero".into()));
        }
        Ok(Self(weights.into_iter().map(|w| w / sum).collect()))
    }

    pub fn weights(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// Unit vector `e_j` in `m` objectives.
    pub fn unit(m: usize, j: usize) -> Result<Self> {
        if j >= m {
            return Err(Error::Shape(format!("objective {j} out of range for m={m}")));
        }
        let mut w = vec![0.0; m];
        w[j] = 1.0;
        Self::new(w)
    }
}

impl TryFrom<Vec<f64>> for PreferenceVector {
    type Error = Error;
    fn try_from(v: Vec<f64>) -> Result<Self> {
        Self::new(v)
    }
}

impl From<PreferenceVector> for Vec<f64> {
    fn from(p: PreferenceVector) -> Self {
        p.0
    }
}

/// `(f_1(θ), …, f_m(θ))` for one client, larger is better.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObjectiveVector(pub Vec<f64>);

impl ObjectiveVector {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if let Some(v) = values.iter().find(|v| !v.is_finite()) {
            return Err(Error::Numeric(format!("non-finite objective value {v}")));
        }
        Ok(Self(values))
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// `Σ_j w_j f_j`.
    pub fn scalarise(&self, w: &PreferenceVector) -> Result<f64> {
        if w.len() != self.len() {
            return Err(Error::Shape(format!(
                "{} weights for {} objectives",
                w.len(),
                self.len()
            )));
        }
        Ok(w.weights().iter().zip(&self.0).map(|(w, f)| w * f).sum())
    }
}

/// A live cluster: its members, the mean of their latest aggregated models
/// and the number of consecutive rounds its mean update stayed below the
/// clustering threshold.
#[derive(Debug, Clone, PartialEq)]
pub struct ClusterState {
    members: Vec<usize>,
    pub mean_model: LayeredParams,
    pub rounds_below_threshold: usize,
}

impl ClusterState {
    pub fn new(members: Vec<usize>, mean_model: LayeredParams) -> Result<Self> {
        if members.is_empty() {
            return Err(Error::Precondition("cluster has no members".into()));
        }
        let mut sorted = members.clone();
        sorted.sort_unstable();
        if sorted.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::Precondition(format!(
                "duplicate client ids in cluster {members:?}"
            )));
        }
        Ok(Self {
            members,
            mean_model,
            rounds_below_threshold: 0,
        })
    }

    pub fn members(&self) -> &[usize] {
        &self.members
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }
}

/// Checks that `clusters` partitions `0..n`.
pub fn check_partition<'a>(clusters: impl IntoIterator<Item = &'a [usize]>, n: usize) -> Result<()> {
    let mut seen = vec![false; n];
    for members in clusters {
        for &c in members {
            if c >= n {
                return Err(Error::Precondition(format!("client id {c} out of range {n}")));
            }
            if std::mem::replace(&mut seen[c], true) {
                return Err(Error::Precondition(format!("client {c} in two clusters")));
            }
        }
    }
    if let Some(c) = seen.iter().position(|s| !s) {
        return Err(Error::Precondition(format!("client {c} in no cluster")));
    }
    Ok(())
}
