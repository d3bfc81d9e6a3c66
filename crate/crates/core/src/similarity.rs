//! Layer-averaged, top-R sparsified cosine similarity between model updates.
//!
//! For two deltas `a`, `b` with `L` layers:
//!
//! ```text
//! sim(a, b) = 1/L · Σ_ℓ cos(topR(a_ℓ), topR(b_ℓ))
//! ```
//!
//! where `topR` keeps the `⌈d_ℓ·R⌉` largest-magnitude entries of a layer and
//! zeroes the rest. A layer that is zero on both sides counts as similarity 1,
//! a layer that is zero on exactly one side counts as 0.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::params::ParamDelta;

/// Symmetry tolerance accepted by [`SimilarityMatrix::from_rows`].
pub const SYMMETRY_TOL: f64 = 1e-12;

/// Number of entries `topR` keeps for a vector of dimension `dim`.
///
/// `⌈dim·R⌉`, clamped to `[1, dim]`. The product is nudged down by 1e-9
/// before rounding up so that e.g. `10·0.3 = 3.0000000000000004` keeps 3.
pub fn top_r_count(dim: usize, ratio: f64) -> usize {
    let k = (dim as f64 * ratio - 1e-9).ceil();
    (k.max(1.0) as usize).min(dim)
}

fn check_ratio(ratio: f64) -> Result<()> {
    if ratio > 0.0 && ratio <= 1.0 {
        Ok(())
    } else {
        Err(Error::Precondition(format!("topR ratio {ratio} outside (0, 1]")))
    }
}

/// Keeps the `⌈dim·R⌉` entries of largest magnitude, zeroing the rest.
///
/// Ties at the cut-off rank keep the lower index.
pub fn top_r(v: &[f64], ratio: f64) -> Result<Vec<f64>> {
    if v.is_empty() {
        return Err(Error::Shape("topR of an empty vector".into()));
    }
    check_ratio(ratio)?;
    let k = top_r_count(v.len(), ratio);
    if k == v.len() {
        return Ok(v.to_vec());
    }
    let mut order: Vec<usize> = (0..v.len()).collect();
    order.sort_by(|&i, &j| v[j].abs().total_cmp(&v[i].abs()).then(i.cmp(&j)));
    let mut out = vec![0.0; v.len()];
    for &i in &order[..k] {
        out[i] = v[i];
    }
    Ok(out)
}

fn dot(u: &[f64], v: &[f64]) -> f64 {
    u.iter().zip(v).map(|(a, b)| a * b).sum()
}

/// `⟨u,v⟩ / (‖u‖‖v‖)`, clamped to `[-1, 1]`; 0 when either norm is zero.
pub fn cos_sim(u: &[f64], v: &[f64]) -> Result<f64> {
    if u.len() != v.len() {
        return Err(Error::Shape(format!(
            "cosine similarity of vectors with dimensions {} and {}",
            u.len(),
            v.len()
        )));
    }
    let nu = dot(u, u).sqrt();
    let nv = dot(v, v).sqrt();
    if nu == 0.0 || nv == 0.0 {
        return Ok(0.0);
    }
    Ok((dot(u, v) / (nu * nv)).clamp(-1.0, 1.0))
}

fn layer_sim(u: &[f64], v: &[f64]) -> Result<f64> {
    let u_zero = u.iter().all(|x| *x == 0.0);
    let v_zero = v.iter().all(|x| *x == 0.0);
    if u_zero && v_zero {
        Ok(1.0)
    } else {
        cos_sim(u, v)
    }
}

fn sparsify(d: &ParamDelta, ratio: f64) -> Result<Vec<Vec<f64>>> {
    d.layers().iter().map(|l| top_r(l, ratio)).collect()
}

fn sparse_sim(a: &[Vec<f64>], b: &[Vec<f64>]) -> Result<f64> {
    let mut total = 0.0;
    for (u, v) in a.iter().zip(b) {
        total += layer_sim(u, v)?;
    }
    Ok((total / a.len() as f64).clamp(-1.0, 1.0))
}

/// Layer-averaged cosine similarity of top-R sparsified deltas.
pub fn model_sim(a: &ParamDelta, b: &ParamDelta, ratio: f64) -> Result<f64> {
    if !a.is_compatible(b) {
        return Err(Error::Shape(format!(
            "similarity of deltas with layouts {:?} and {:?}",
            a.as_params().layer_sizes(),
            b.as_params().layer_sizes()
        )));
    }
    sparse_sim(&sparsify(a, ratio)?, &sparsify(b, ratio)?)
}

/// Dense symmetric `n×n` similarity matrix with entries in `[-1, 1]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimilarityMatrix {
    n: usize,
    data: Vec<f64>,
}

impl SimilarityMatrix {
    /// Builds from row vectors, checking squareness and symmetry and clamping
    /// entries to `[-1, 1]`.
    pub fn from_rows(rows: Vec<Vec<f64>>) -> Result<Self> {
        let n = rows.len();
        if n == 0 {
            return Err(Error::Shape("empty similarity matrix".into()));
        }
        if let Some(r) = rows.iter().position(|r| r.len() != n) {
            return Err(Error::Shape(format!("row {r} of similarity matrix has wrong length")));
        }
        for (i, row) in rows.iter().enumerate() {
            for (j, &x) in row.iter().enumerate() {
                if !x.is_finite() || x.abs() > 1.0 + SYMMETRY_TOL {
                    return Err(Error::Numeric(format!("similarity ({i},{j}) = {x} out of range")));
                }
                if (x - rows[j][i]).abs() > SYMMETRY_TOL {
                    return Err(Error::Precondition(format!(
                        "similarity matrix not symmetric at ({i},{j})"
                    )));
                }
            }
        }
        let data = rows.into_iter().flatten().map(|x| x.clamp(-1.0, 1.0)).collect();
        Ok(Self { n, data })
    }

    /// Every entry equal to `value` except a unit diagonal.
    pub fn constant(n: usize, value: f64) -> Result<Self> {
        Self::from_rows(
            (0..n)
                .map(|i| (0..n).map(|j| if i == j { 1.0 } else { value }).collect())
                .collect(),
        )
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.n + j]
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.n..(i + 1) * self.n]
    }

    pub fn to_rows(&self) -> Vec<Vec<f64>> {
        (0..self.n).map(|i| self.row(i).to_vec()).collect()
    }

    /// Restriction to the given indices, in the given order.
    pub fn submatrix(&self, idx: &[usize]) -> Self {
        let n = idx.len();
        let mut data = Vec::with_capacity(n * n);
        for &i in idx {
            for &j in idx {
                data.push(self.get(i, j));
            }
        }
        Self { n, data }
    }

    /// Smallest off-diagonal entry, or 1 for a 1×1 matrix.
    pub fn min_off_diagonal(&self) -> f64 {
        let mut min: f64 = 1.0;
        for i in 0..self.n {
            for j in 0..self.n {
                if i != j {
                    min = min.min(self.get(i, j));
                }
            }
        }
        min
    }
}

/// Pairwise [`model_sim`] over a cluster's deltas.
///
/// Each unordered pair is evaluated once; the result does not depend on the
/// number of worker threads. The diagonal is exactly 1.
pub fn similarity_matrix(deltas: &[ParamDelta], ratio: f64) -> Result<SimilarityMatrix> {
    let first = deltas
        .first()
        .ok_or_else(|| Error::Shape("similarity matrix of zero deltas".into()))?;
    if let Some(i) = deltas.iter().position(|d| !d.is_compatible(first)) {
        return Err(Error::Shape(format!("delta {i} has a different layer layout")));
    }
    check_ratio(ratio)?;
    let n = deltas.len();
    let sparse = deltas
        .par_iter()
        .map(|d| sparsify(d, ratio))
        .collect::<Result<Vec<_>>>()?;
    let pairs: Vec<(usize, usize)> = (0..n).flat_map(|i| (i + 1..n).map(move |j| (i, j))).collect();
    let values = pairs
        .par_iter()
        .map(|&(i, j)| sparse_sim(&sparse[i], &sparse[j]))
        .collect::<Result<Vec<_>>>()?;
    let mut data = vec![0.0; n * n];
    for i in 0..n {
        data[i * n + i] = 1.0;
    }
    for (&(i, j), &s) in pairs.iter().zip(&values) {
        data[i * n + j] = s;
        data[j * n + i] = s;
    }
    Ok(SimilarityMatrix { n, data })
}
