//! Personalised similarity-weighted aggregation inside one cluster, and the
//! plain mean used by the baselines and for cluster-mean bookkeeping.

use log::warn;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::params::{LayeredParams, ParamDelta};
use crate::similarity::{similarity_matrix, SimilarityMatrix};

/// Result of a weighted aggregation round over one cluster.
#[derive(Debug, Clone)]
pub struct Aggregated {
    pub models: Vec<LayeredParams>,
    /// Local indices whose weight row summed to zero and kept their own model.
    pub zero_rows: Vec<usize>,
}

/// Maps a similarity to an aggregation weight: clip at `s_min`, then map
/// `[s_min, 1]` affinely onto `[0, 1]`.
pub fn similarity_weight(sim: f64, s_min: f64) -> f64 {
    (sim.max(s_min) - s_min) / (1.0 - s_min)
}

fn check_s_min(s_min: f64) -> Result<()> {
    if (-1.0..1.0).contains(&s_min) {
        Ok(())
    } else {
        Err(Error::Precondition(format!("minimum similarity {s_min} outside [-1, 1)")))
    }
}

/// Personalised aggregation driven by a precomputed similarity matrix.
///
/// Client `i` receives `Σ_j ŵ_ij θ_j` where `ŵ_i` is its row of clipped,
/// rescaled similarities normalised to unit sum.
pub fn weighted_aggregate_with(
    models: &[LayeredParams],
    sims: &SimilarityMatrix,
    s_min: f64,
) -> Result<Aggregated> {
    if models.is_empty() {
        return Err(Error::Precondition("weighted aggregation over an empty cluster".into()));
    }
    if sims.len() != models.len() {
        return Err(Error::Shape(format!(
            "{} models but a {}x{} similarity matrix",
            models.len(),
            sims.len(),
            sims.len()
        )));
    }
    check_s_min(s_min)?;
    let refs: Vec<&LayeredParams> = models.iter().collect();
    let rows = (0..models.len())
        .into_par_iter()
        .map(|i| {
            let raw: Vec<f64> = sims.row(i).iter().map(|&s| similarity_weight(s, s_min)).collect();
            let total: f64 = raw.iter().sum();
            if total <= 0.0 {
                return Ok((models[i].clone(), true));
            }
            let weights: Vec<f64> = raw.iter().map(|w| w / total).collect();
            LayeredParams::weighted_sum(&refs, &weights).map(|m| (m, false))
        })
        .collect::<Result<Vec<_>>>()?;
    let mut out = Vec::with_capacity(rows.len());
    let mut zero_rows = Vec::new();
    for (i, (model, zero)) in rows.into_iter().enumerate() {
        if zero {
            warn!("aggregation weight row {i} sums to zero; keeping own model");
            zero_rows.push(i);
        }
        out.push(model);
    }
    Ok(Aggregated {
        models: out,
        zero_rows,
    })
}

/// Personalised aggregation with similarities computed from `deltas`.
///
/// `models[i]` and `deltas[i]` belong to the same client. The deltas only
/// determine the weights; the mixing is applied to the full models.
pub fn weighted_aggregate(
    models: &[LayeredParams],
    deltas: &[ParamDelta],
    ratio: f64,
    s_min: f64,
) -> Result<Aggregated> {
    if models.len() != deltas.len() {
        return Err(Error::Shape(format!(
            "{} models but {} deltas",
            models.len(),
            deltas.len()
        )));
    }
    if models.is_empty() {
        return Err(Error::Precondition("weighted aggregation over an empty cluster".into()));
    }
    let sims = similarity_matrix(deltas, ratio)?;
    weighted_aggregate_with(models, &sims, s_min)
}

/// Elementwise arithmetic mean.
pub fn plain_mean(models: &[LayeredParams]) -> Result<LayeredParams> {
    let refs: Vec<&LayeredParams> = models.iter().collect();
    LayeredParams::mean(&refs)
}
