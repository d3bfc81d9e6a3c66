//! Preference-aware clustered federation.
//!
//! Each round every client trains locally from its personalised model. Per
//! cluster the server then compares the mean of the new local models with
//! the mean of the previous round's aggregated models. When that change has
//! stayed at or below ε for `patience` consecutive rounds the cluster is
//! bipartitioned on the similarity of its members' updates, and each part
//! aggregates separately; otherwise the cluster aggregates as a whole.

use log::debug;

use crate::aggregation::{weighted_aggregate, weighted_aggregate_with};
use crate::clustering::spectral_bipartition;
use crate::config::FederationConfig;
use crate::error::{Error, Result};
use crate::params::{ClusterState, LayeredParams, ParamDelta};
use crate::problems::ClientBank;
use crate::similarity::similarity_matrix;

use super::{
    assignment, evaluate, initial_models, scalarised_values, train_all, Event, FederationOutcome,
    Observer, RoundReport, HOMOGENEOUS_SIMILARITY,
};

pub fn run_fedpref(cfg: &FederationConfig, bank: &ClientBank) -> Result<FederationOutcome> {
    run(cfg, bank, &mut |_| Ok(()))
}

fn pick<'a>(models: &'a [LayeredParams], members: &[usize]) -> Vec<&'a LayeredParams> {
    members.iter().map(|&i| &models[i]).collect()
}

fn mean_of(models: &[LayeredParams], members: &[usize]) -> Result<LayeredParams> {
    LayeredParams::mean(&pick(models, members))
}

fn deltas(models: &[LayeredParams], members: &[usize], reference: &LayeredParams) -> Result<Vec<ParamDelta>> {
    members.iter().map(|&i| models[i].delta_from(reference)).collect()
}

fn record_zero_rows(rows: &[usize], members: &[usize], events: &mut Vec<Event>) {
    events.extend(rows.iter().map(|&z| Event::ZeroRowFallback { client: members[z] }));
}

/// Aggregates `members` in place within `next`, recording zero-row events.
fn aggregate_into(
    next: &mut [LayeredParams],
    trained: &[LayeredParams],
    members: &[usize],
    deltas: &[ParamDelta],
    cfg: &FederationConfig,
    events: &mut Vec<Event>,
) -> Result<()> {
    let local: Vec<LayeredParams> = members.iter().map(|&i| trained[i].clone()).collect();
    let out = weighted_aggregate(&local, deltas, cfg.top_r, cfg.min_similarity)?;
    record_zero_rows(&out.zero_rows, members, events);
    for (&i, m) in members.iter().zip(out.models) {
        next[i] = m;
    }
    Ok(())
}

pub(super) fn run(
    cfg: &FederationConfig,
    bank: &ClientBank,
    observer: &mut Observer<'_>,
) -> Result<FederationOutcome> {
    let n = bank.len();
    let epsilon = cfg
        .clustering_threshold
        .ok_or_else(|| Error::Config("federation.clustering_threshold: missing field".into()))?;
    let mut models = initial_models(cfg, bank)?;
    let everyone: Vec<usize> = (0..n).collect();
    let mut clusters = vec![ClusterState::new(everyone.clone(), mean_of(&models, &everyone)?)?];
    let mut history = Vec::with_capacity(cfg.rounds);

    for round in 1..=cfg.rounds {
        let mut step = || -> Result<RoundReport> {
            let starts: Vec<&LayeredParams> = models.iter().collect();
            let trained = train_all(cfg, bank, round, &starts, None)?;
            let fine_tune_round = cfg.fine_tune && round == cfg.rounds;
            let mut next = trained.clone();
            let mut new_clusters = Vec::with_capacity(clusters.len() + 1);
            let mut norms = Vec::with_capacity(clusters.len() + 1);
            let mut events = Vec::new();

            for (index, cluster) in clusters.iter().enumerate() {
                let members = cluster.members();
                let new_mean = mean_of(&trained, members)?;
                let change = cluster.mean_model.delta_from(&new_mean)?.flat_norm();
                let below = if change <= epsilon {
                    cluster.rounds_below_threshold + 1
                } else {
                    0
                };

                if fine_tune_round {
                    let mut kept = ClusterState::new(members.to_vec(), new_mean)?;
                    kept.rounds_below_threshold = below;
                    new_clusters.push(kept);
                    norms.push(change);
                    continue;
                }

                let ds = deltas(&trained, members, &cluster.mean_model)?;
                let sims = similarity_matrix(&ds, cfg.top_r)?;
                let converged = members.len() >= 2 && below >= cfg.patience;
                let split = if !converged {
                    None
                } else if sims.min_off_diagonal() >= HOMOGENEOUS_SIMILARITY {
                    debug!("round {round}: cluster {index} converged but homogeneous; not split");
                    None
                } else {
                    Some(spectral_bipartition(members, &sims)?)
                };

                match split {
                    Some(parts) => {
                        for side in [&parts.left, &parts.right] {
                            // a new cluster has no previous mean; use its members' current one
                            let reference = mean_of(&trained, side)?;
                            let side_deltas = deltas(&trained, side, &reference)?;
                            aggregate_into(&mut next, &trained, side, &side_deltas, cfg, &mut events)?;
                            new_clusters.push(ClusterState::new(side.clone(), mean_of(&next, side)?)?);
                            norms.push(change);
                        }
                        events.push(Event::Split {
                            cluster: index,
                            left: parts.left,
                            right: parts.right,
                        });
                    }
                    None => {
                        let local: Vec<LayeredParams> =
                            members.iter().map(|&i| trained[i].clone()).collect();
                        let out = weighted_aggregate_with(&local, &sims, cfg.min_similarity)?;
                        record_zero_rows(&out.zero_rows, members, &mut events);
                        for (&i, m) in members.iter().zip(out.models) {
                            next[i] = m;
                        }
                        let mut kept = ClusterState::new(members.to_vec(), mean_of(&next, members)?)?;
                        kept.rounds_below_threshold = below;
                        new_clusters.push(kept);
                        norms.push(change);
                    }
                }
            }

            let member_lists: Vec<Vec<usize>> =
                new_clusters.iter().map(|c| c.members().to_vec()).collect();
            crate::params::check_partition(member_lists.iter().map(Vec::as_slice), n)?;
            let report = RoundReport {
                round,
                cluster_assignment: assignment(&member_lists, n),
                per_client_scalarised_value: scalarised_values(bank, &next)?,
                per_cluster_mean_delta_norm: norms,
                events,
            };
            models = next;
            clusters = new_clusters;
            Ok(report)
        };
        let report = step().map_err(|e| e.at_round(round))?;
        observer(&report).map_err(|e| e.at_round(round))?;
        history.push(report);
    }

    Ok(FederationOutcome {
        objectives: evaluate(bank, &models)?,
        models,
        history,
    })
}
