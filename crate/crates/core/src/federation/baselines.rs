//! Baseline servers: FedAvg, FedProx, CFL-style clustering and isolated
//! local learning.

use log::debug;

use crate::aggregation::plain_mean;
use crate::clustering::spectral_bipartition;
use crate::config::FederationConfig;
use crate::error::{Error, Result};
use crate::params::{LayeredParams, ParamDelta};
use crate::problems::ClientBank;
use crate::similarity::similarity_matrix;

use super::{
    assignment, evaluate, initial_models, scalarised_values, train_all, Event, FederationOutcome,
    Observer, RoundReport, HOMOGENEOUS_SIMILARITY,
};

pub fn run_fedavg(cfg: &FederationConfig, bank: &ClientBank) -> Result<FederationOutcome> {
    run_global(cfg, bank, None, &mut |_| Ok(()))
}

/// FedAvg whose local objective carries `(μ/2)‖θ − θ_global‖²` with
/// `μ = cfg.prox_mu`.
pub fn run_fedprox(cfg: &FederationConfig, bank: &ClientBank) -> Result<FederationOutcome> {
    run_global(cfg, bank, Some(cfg.prox_mu), &mut |_| Ok(()))
}

pub fn run_cfl(cfg: &FederationConfig, bank: &ClientBank) -> Result<FederationOutcome> {
    run_cfl_observed(cfg, bank, &mut |_| Ok(()))
}

pub fn run_local_only(cfg: &FederationConfig, bank: &ClientBank) -> Result<FederationOutcome> {
    run_local_observed(cfg, bank, &mut |_| Ok(()))
}

fn finish(
    bank: &ClientBank,
    models: Vec<LayeredParams>,
    history: Vec<RoundReport>,
) -> Result<FederationOutcome> {
    Ok(FederationOutcome {
        objectives: evaluate(bank, &models)?,
        models,
        history,
    })
}

/// One shared model; optional proximal pull towards it during local training.
pub(super) fn run_global(
    cfg: &FederationConfig,
    bank: &ClientBank,
    prox_mu: Option<f64>,
    observer: &mut Observer<'_>,
) -> Result<FederationOutcome> {
    let n = bank.len();
    let mut global = plain_mean(&initial_models(cfg, bank)?)?;
    let mut models = vec![global.clone(); n];
    let mut history = Vec::with_capacity(cfg.rounds);

    for round in 1..=cfg.rounds {
        let mut step = || -> Result<RoundReport> {
            let trained = {
                let starts = vec![&global; n];
                let prox = prox_mu.map(|mu| (mu, starts.as_slice()));
                train_all(cfg, bank, round, &starts, prox)?
            };
            let mean = plain_mean(&trained)?;
            let change = global.delta_from(&mean)?.flat_norm();
            if cfg.fine_tune && round == cfg.rounds {
                models = trained;
            } else {
                global = mean;
                models = vec![global.clone(); n];
            }
            Ok(RoundReport {
                round,
                cluster_assignment: vec![0; n],
                per_client_scalarised_value: scalarised_values(bank, &models)?,
                per_cluster_mean_delta_norm: vec![change],
                events: Vec::new(),
            })
        };
        let report = step().map_err(|e| e.at_round(round))?;
        observer(&report).map_err(|e| e.at_round(round))?;
        history.push(report);
    }
    finish(bank, models, history)
}

struct SharedCluster {
    members: Vec<usize>,
    model: LayeredParams,
    rounds_below: usize,
}

/// Clusters share one model each. A cluster whose mean update stays at or
/// below the CFL threshold for `cfl_patience` rounds is bipartitioned on the
/// plain cosine similarity of its members' updates.
pub(super) fn run_cfl_observed(
    cfg: &FederationConfig,
    bank: &ClientBank,
    observer: &mut Observer<'_>,
) -> Result<FederationOutcome> {
    let n = bank.len();
    let threshold = cfg
        .cfl_threshold
        .ok_or_else(|| Error::Config("federation.cfl_threshold: missing field".into()))?;
    let initial = plain_mean(&initial_models(cfg, bank)?)?;
    let mut models = vec![initial.clone(); n];
    let mut clusters = vec![SharedCluster {
        members: (0..n).collect(),
        model: initial,
        rounds_below: 0,
    }];
    let mut history = Vec::with_capacity(cfg.rounds);

    for round in 1..=cfg.rounds {
        let mut step = || -> Result<RoundReport> {
            let trained = {
                let mut starts: Vec<&LayeredParams> = vec![&clusters[0].model; n];
                for c in &clusters {
                    for &i in &c.members {
                        starts[i] = &c.model;
                    }
                }
                train_all(cfg, bank, round, &starts, None)?
            };
            if cfg.fine_tune && round == cfg.rounds {
                let norms = clusters
                    .iter()
                    .map(|c| {
                        let local: Vec<LayeredParams> =
                            c.members.iter().map(|&i| trained[i].clone()).collect();
                        Ok(c.model.delta_from(&plain_mean(&local)?)?.flat_norm())
                    })
                    .collect::<Result<Vec<f64>>>()?;
                let lists: Vec<Vec<usize>> = clusters.iter().map(|c| c.members.clone()).collect();
                models = trained;
                return Ok(RoundReport {
                    round,
                    cluster_assignment: assignment(&lists, n),
                    per_client_scalarised_value: scalarised_values(bank, &models)?,
                    per_cluster_mean_delta_norm: norms,
                    events: Vec::new(),
                });
            }

            let mut next_clusters = Vec::with_capacity(clusters.len() + 1);
            let mut norms = Vec::new();
            let mut events = Vec::new();
            for (index, c) in clusters.iter().enumerate() {
                let local: Vec<LayeredParams> = c.members.iter().map(|&i| trained[i].clone()).collect();
                let mean = plain_mean(&local)?;
                let change = c.model.delta_from(&mean)?.flat_norm();
                let below = if change <= threshold { c.rounds_below + 1 } else { 0 };
                let mut split = None;
                if c.members.len() >= 2 && below >= cfg.cfl_patience {
                    let updates = local
                        .iter()
                        .map(|m| m.delta_from(&c.model))
                        .collect::<Result<Vec<ParamDelta>>>()?;
                    let sims = similarity_matrix(&updates, 1.0)?;
                    if sims.min_off_diagonal() >= HOMOGENEOUS_SIMILARITY {
                        debug!("round {round}: CFL cluster {index} homogeneous; not split");
                    } else {
                        split = Some(spectral_bipartition(&c.members, &sims)?);
                    }
                }
                match split {
                    Some(parts) => {
                        for side in [&parts.left, &parts.right] {
                            let side_models: Vec<LayeredParams> =
                                side.iter().map(|&i| trained[i].clone()).collect();
                            next_clusters.push(SharedCluster {
                                members: side.clone(),
                                model: plain_mean(&side_models)?,
                                rounds_below: 0,
                            });
                            norms.push(change);
                        }
                        events.push(Event::Split {
                            cluster: index,
                            left: parts.left,
                            right: parts.right,
                        });
                    }
                    None => {
                        next_clusters.push(SharedCluster {
                            members: c.members.clone(),
                            model: mean,
                            rounds_below: below,
                        });
                        norms.push(change);
                    }
                }
            }
            for c in &next_clusters {
                for &i in &c.members {
                    models[i] = c.model.clone();
                }
            }
            let lists: Vec<Vec<usize>> = next_clusters.iter().map(|c| c.members.clone()).collect();
            crate::params::check_partition(lists.iter().map(Vec::as_slice), n)?;
            clusters = next_clusters;
            Ok(RoundReport {
                round,
                cluster_assignment: assignment(&lists, n),
                per_client_scalarised_value: scalarised_values(bank, &models)?,
                per_cluster_mean_delta_norm: norms,
                events,
            })
        };
        let report = step().map_err(|e| e.at_round(round))?;
        observer(&report).map_err(|e| e.at_round(round))?;
        history.push(report);
    }
    finish(bank, models, history)
}

/// Every client trains alone; clusters are reported as singletons.
pub(super) fn run_local_observed(
    cfg: &FederationConfig,
    bank: &ClientBank,
    observer: &mut Observer<'_>,
) -> Result<FederationOutcome> {
    let n = bank.len();
    let mut models = initial_models(cfg, bank)?;
    let mut history = Vec::with_capacity(cfg.rounds);
    for round in 1..=cfg.rounds {
        let mut step = || -> Result<RoundReport> {
            let starts: Vec<&LayeredParams> = models.iter().collect();
            let trained = train_all(cfg, bank, round, &starts, None)?;
            let norms = models
                .iter()
                .zip(&trained)
                .map(|(old, new)| Ok(old.delta_from(new)?.flat_norm()))
                .collect::<Result<Vec<f64>>>()?;
            models = trained;
            Ok(RoundReport {
                round,
                cluster_assignment: (0..n).collect(),
                per_client_scalarised_value: scalarised_values(bank, &models)?,
                per_cluster_mean_delta_norm: norms,
                events: Vec::new(),
            })
        };
        let report = step().map_err(|e| e.at_round(round))?;
        observer(&report).map_err(|e| e.at_round(round))?;
        history.push(report);
    }
    finish(bank, models, history)
}
