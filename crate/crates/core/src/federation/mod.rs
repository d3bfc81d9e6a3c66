//! Round-based federation drivers: the preference-aware clustered server
//! and the FedAvg, FedProx, CFL-style and no-communication baselines.
//!
//! Every driver runs synchronous full-participation rounds. Client training
//! inside a round may run on several threads; each client's result depends
//! only on its inputs and its own derived seed, so outcomes are identical
//! for any thread count.

mod baselines;
mod fedpref;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::{Algorithm, FederationConfig, InitMode};
use crate::error::{Error, Result};
use crate::params::{LayeredParams, ObjectiveVector};
use crate::problems::{local_train, ClientBank, Prox, TrainSettings};
use crate::seeds;

pub use baselines::{run_cfl, run_fedavg, run_fedprox, run_local_only};
pub use fedpref::run_fedpref;

/// Off-diagonal similarity at or above which a cluster is treated as
/// homogeneous and not split: all members move in the same direction.
pub const HOMOGENEOUS_SIMILARITY: f64 = 1.0 - 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Event {
    /// Cluster `cluster` (index in the previous round's cluster list) was
    /// split into `left` and `right`.
    Split {
        cluster: usize,
        left: Vec<usize>,
        right: Vec<usize>,
    },
    /// The client's aggregation weights summed to zero; it kept its own model.
    ZeroRowFallback { client: usize },
}

/// What happened in one round.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundReport {
    pub round: usize,
    /// Index of each client's cluster after the round.
    pub cluster_assignment: Vec<usize>,
    /// Scalarised objective of each client's model at the end of the round.
    pub per_client_scalarised_value: Vec<f64>,
    /// Norm of the cluster-mean change measured this round, one entry per
    /// cluster of `cluster_assignment`. Children of a split carry the value
    /// measured on their parent.
    pub per_cluster_mean_delta_norm: Vec<f64>,
    pub events: Vec<Event>,
}

impl RoundReport {
    pub fn cluster_count(&self) -> usize {
        self.per_cluster_mean_delta_norm.len()
    }

    /// Member lists in cluster order.
    pub fn clusters(&self) -> Vec<Vec<usize>> {
        let mut out = vec![Vec::new(); self.cluster_count()];
        for (client, &c) in self.cluster_assignment.iter().enumerate() {
            out[c].push(client);
        }
        out
    }
}

/// Final state of a run.
#[derive(Debug, Clone, PartialEq)]
pub struct FederationOutcome {
    pub models: Vec<LayeredParams>,
    pub objectives: Vec<ObjectiveVector>,
    pub history: Vec<RoundReport>,
}

impl FederationOutcome {
    pub fn final_clusters(&self) -> Vec<Vec<usize>> {
        self.history.last().map(RoundReport::clusters).unwrap_or_default()
    }

    pub fn scalarised(&self, bank: &ClientBank) -> Result<Vec<f64>> {
        self.objectives
            .iter()
            .zip(&bank.preferences)
            .map(|(f, w)| f.scalarise(w))
            .collect()
    }
}

/// Callback receiving each round report as soon as the round completes.
pub type Observer<'a> = dyn FnMut(&RoundReport) -> Result<()> + 'a;

/// Runs the algorithm named in `cfg`.
pub fn run(cfg: &FederationConfig, bank: &ClientBank) -> Result<FederationOutcome> {
    run_observed(cfg, bank, &mut |_| Ok(()))
}

pub fn run_observed(
    cfg: &FederationConfig,
    bank: &ClientBank,
    observer: &mut Observer<'_>,
) -> Result<FederationOutcome> {
    if bank.len() != cfg.clients {
        return Err(Error::Precondition(format!(
            "config names {} clients but the bank has {}",
            cfg.clients,
            bank.len()
        )));
    }
    match cfg.algorithm {
        Algorithm::FedPref => fedpref::run(cfg, bank, observer),
        Algorithm::FedAvg => baselines::run_global(cfg, bank, None, observer),
        Algorithm::FedProx => baselines::run_global(cfg, bank, Some(cfg.prox_mu), observer),
        Algorithm::Cfl => baselines::run_cfl_observed(cfg, bank, observer),
        Algorithm::LocalOnly => baselines::run_local_observed(cfg, bank, observer),
    }
}

pub(crate) fn settings(cfg: &FederationConfig) -> TrainSettings {
    TrainSettings {
        steps: cfg.local_steps,
        learning_rate: cfg.learning_rate,
        gradient_noise: cfg.gradient_noise,
    }
}

/// Initial client models drawn from `N(0, init_scale²)` per coordinate.
pub fn initial_models(cfg: &FederationConfig, bank: &ClientBank) -> Result<Vec<LayeredParams>> {
    use rand::SeedableRng;
    use rand_distr::{Distribution, Normal};
    let layers = bank.problem.layer_sizes();
    let dim = bank.problem.dim();
    let normal = Normal::new(0.0, cfg.init_scale)
        .map_err(|e| Error::Config(format!("federation.init_scale: {e}")))?;
    let draw = |stream: u64| -> Result<LayeredParams> {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seeds::derive(
            cfg.seed,
            seeds::INIT,
            stream,
            0,
        ));
        let flat: Vec<f64> = (0..dim).map(|_| normal.sample(&mut rng)).collect();
        LayeredParams::from_flat(&flat, layers)
    };
    match cfg.init {
        InitMode::Shared => {
            let shared = draw(0)?;
            Ok(vec![shared; bank.len()])
        }
        InitMode::PerClient => (0..bank.len()).map(|i| draw(i as u64)).collect(),
    }
}

/// Local training of every client from `starts[i]`, optionally pulled
/// towards `anchors[i]`.
pub(crate) fn train_all(
    cfg: &FederationConfig,
    bank: &ClientBank,
    round: usize,
    starts: &[&LayeredParams],
    prox: Option<(f64, &[&LayeredParams])>,
) -> Result<Vec<LayeredParams>> {
    let s = settings(cfg);
    starts
        .par_iter()
        .enumerate()
        .map(|(i, start)| {
            let p = prox.map(|(mu, anchors)| Prox {
                mu,
                anchor: anchors[i],
            });
            let seed = seeds::derive(cfg.seed, seeds::NOISE, round as u64, i as u64);
            local_train(start, &bank.problem, &bank.preferences[i], &s, p, seed)
        })
        .collect()
}

pub(crate) fn evaluate(bank: &ClientBank, models: &[LayeredParams]) -> Result<Vec<ObjectiveVector>> {
    models
        .iter()
        .map(|m| bank.problem.objective_vector(m))
        .collect()
}

pub(crate) fn scalarised_values(bank: &ClientBank, models: &[LayeredParams]) -> Result<Vec<f64>> {
    models
        .iter()
        .zip(&bank.preferences)
        .map(|(m, w)| bank.problem.scalarised_value(w, m))
        .collect()
}

pub(crate) fn assignment(clusters: &[Vec<usize>], n: usize) -> Vec<usize> {
    let mut out = vec![usize::MAX; n];
    for (c, members) in clusters.iter().enumerate() {
        for &i in members {
            out[i] = c;
        }
    }
    debug_assert!(out.iter().all(|&c| c != usize::MAX));
    out
}

/// Fraction of clients whose cluster's majority group equals their own
/// group. 1.0 iff every cluster contains a single group.
pub fn group_purity(clusters: &[Vec<usize>], groups: &[usize]) -> f64 {
    let n: usize = clusters.iter().map(Vec::len).sum();
    if n == 0 {
        return 1.0;
    }
    let mut agree = 0;
    for members in clusters {
        let mut counts = std::collections::BTreeMap::new();
        for &i in members {
            *counts.entry(groups[i]).or_insert(0usize) += 1;
        }
        agree += counts.values().max().copied().unwrap_or(0);
    }
    agree as f64 / n as f64
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn purity() {
        let groups = [0, 0, 1, 1];
        assert_eq!(group_purity(&[vec![0, 1], vec![2, 3]], &groups), 1.0);
        assert_eq!(group_purity(&[vec![0], vec![1], vec![2, 3]], &groups), 1.0);
        assert_eq!(group_purity(&[vec![0, 1, 2, 3]], &groups), 0.5);
    }

    #[test]
    fn report_clusters_from_assignment() {
        let r = RoundReport {
            round: 1,
            cluster_assignment: vec![1, 0, 1],
            per_client_scalarised_value: vec![0.0; 3],
            per_cluster_mean_delta_norm: vec![0.1, 0.2],
            events: vec![],
        };
        assert_eq!(r.clusters(), vec![vec![1], vec![0, 2]]);
    }
}
