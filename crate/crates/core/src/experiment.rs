//! Run directories: executing a config, persisting its outputs, campaigns
//! over variants and seeds, and summaries across runs.
//!
//! A run directory holds
//!
//! - `manifest.json`: config, config hash, problem hash, variant, seed, files
//! - `rounds.jsonl`: one round report per line, in round order, each
//!   carrying the config hash
//! - `solutions.csv`: `client_id,w_1..w_m,f_1..f_m,scalarised`
//! - `metrics.json`: indicators of the final solution set
//!
//! A campaign directory holds one run directory per variant and seed, a
//! combined `reference_front.csv` and `campaign.json`.

use std::collections::BTreeMap;
use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use log::info;
use serde::{Deserialize, Serialize};

use crate::config::{RunConfig, Variant};
use crate::error::{Error, Result};
use crate::federation::{self, FederationOutcome, RoundReport};
use crate::metrics::{self, SolutionSet};
use crate::problems::ClientBank;

pub const MANIFEST: &str = "manifest.json";
pub const ROUNDS: &str = "rounds.jsonl";
pub const SOLUTIONS: &str = "solutions.csv";
pub const METRICS: &str = "metrics.json";
pub const CAMPAIGN: &str = "campaign.json";
pub const REFERENCE_FRONT: &str = "reference_front.csv";

/// Margin below the analytic front used for the default reference point.
pub const REFERENCE_MARGIN: f64 = 0.1;

/// Largest analytic-front sample drawn by default.
const MAX_FRONT_POINTS: usize = 5000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub config_hash: String,
    pub problem_hash: String,
    pub variant: Variant,
    pub seed: u64,
    pub clients: usize,
    pub objectives: usize,
    pub files: Vec<String>,
    pub config: RunConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunMetrics {
    pub config_hash: String,
    pub problem_hash: String,
    pub variant: Variant,
    pub seed: u64,
    pub mean_scalarised: f64,
    pub hypervolume: f64,
    pub sparsity: f64,
    pub cardinality: usize,
    pub igd: Option<f64>,
    /// `analytic` or `campaign`: which front `igd` was measured against.
    pub igd_reference: String,
    pub reference_point: Vec<f64>,
}

#[derive(Debug, Clone, Serialize)]
struct RoundRecord<'a> {
    #[serde(flatten)]
    report: &'a RoundReport,
    config_hash: &'a str,
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
}

/// Lattice divisions giving the densest analytic front of at most
/// `MAX_FRONT_POINTS` points.
fn default_divisions(m: usize) -> usize {
    let size = |d: usize| -> f64 {
        // C(d + m − 1, m − 1)
        (1..m).map(|k| (d + k) as f64 / k as f64).product()
    };
    let mut d = 1;
    while d < 200 && size(d + 1) <= MAX_FRONT_POINTS as f64 {
        d += 1;
    }
    d
}

/// Objective vectors of the analytic optima over a preference lattice.
pub fn analytic_front(cfg: &RunConfig, bank: &ClientBank) -> Result<SolutionSet> {
    let m = bank.problem.objectives();
    let divisions = cfg.metrics.front_divisions.unwrap_or_else(|| default_divisions(m));
    SolutionSet::from_objectives(&bank.problem.analytic_front(divisions)?)
}

/// Configured reference point, or the analytic front's minimum lowered by
/// [`REFERENCE_MARGIN`] of its range.
pub fn reference_point(cfg: &RunConfig, front: &SolutionSet) -> Result<Vec<f64>> {
    match &cfg.metrics.reference_point {
        Some(r) => Ok(r.clone()),
        None => metrics::default_reference_point(front, REFERENCE_MARGIN),
    }
}

fn fmt_f64(x: f64) -> String {
    format!("{x}")
}

/// Writes the final solutions, one row per client.
pub fn write_solutions(path: &Path, bank: &ClientBank, outcome: &FederationOutcome) -> Result<()> {
    let m = bank.problem.objectives();
    let mut w = csv::Writer::from_path(path)?;
    let mut header = vec!["client_id".to_string()];
    header.extend((1..=m).map(|j| format!("w_{j}")));
    header.extend((1..=m).map(|j| format!("f_{j}")));
    header.push("scalarised".into());
    w.write_record(&header)?;
    let scalarised = outcome.scalarised(bank)?;
    for (i, (f, s)) in outcome.objectives.iter().zip(&scalarised).enumerate() {
        let mut row = vec![i.to_string()];
        row.extend(bank.preferences[i].weights().iter().map(|&x| fmt_f64(x)));
        row.extend(f.values().iter().map(|&x| fmt_f64(x)));
        row.push(fmt_f64(*s));
        w.write_record(&row)?;
    }
    w.flush().map_err(|e| Error::io(path, e))?;
    Ok(())
}

/// Reads objective vectors from a CSV: the `f_*` columns if present,
/// otherwise every column.
pub fn read_objectives(path: &Path) -> Result<SolutionSet> {
    let mut r = csv::Reader::from_path(path)?;
    let header = r.headers()?.clone();
    let mut columns: Vec<usize> = header
        .iter()
        .enumerate()
        .filter(|(_, h)| h.starts_with("f_"))
        .map(|(i, _)| i)
        .collect();
    if columns.is_empty() {
        columns = (0..header.len()).collect();
    }
    let mut points = Vec::new();
    for (line, record) in r.records().enumerate() {
        let record = record?;
        let point = columns
            .iter()
            .map(|&c| {
                let cell = record.get(c).unwrap_or("");
                cell.trim().parse::<f64>().map_err(|_| {
                    Error::Config(format!(
                        "{}: row {}: column `{}` is not a number: {cell:?}",
                        path.display(),
                        line + 2,
                        &header[c]
                    ))
                })
            })
            .collect::<Result<Vec<f64>>>()?;
        points.push(point);
    }
    SolutionSet::new(points)
}

pub fn write_front(path: &Path, front: &SolutionSet) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    let m = front.objectives().unwrap_or(0);
    w.write_record((1..=m).map(|j| format!("f_{j}")))?;
    for p in front.points() {
        w.write_record(p.iter().map(|&x| fmt_f64(x)))?;
    }
    w.flush().map_err(|e| Error::io(path, e))?;
    Ok(())
}

/// Executes one run of `cfg` and writes its directory under `out`.
pub fn execute_run(cfg: &RunConfig, out: &Path) -> Result<RunMetrics> {
    cfg.validate()?;
    fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    let bank = cfg.build_clients()?;
    let config_hash = cfg.config_hash();
    let problem_hash = cfg.problem_hash();
    let variant = cfg.variant();
    let seed = cfg.federation.seed;

    let manifest = Manifest {
        config_hash: config_hash.clone(),
        problem_hash: problem_hash.clone(),
        variant,
        seed,
        clients: bank.len(),
        objectives: bank.problem.objectives(),
        files: [MANIFEST, ROUNDS, SOLUTIONS, METRICS].map(String::from).to_vec(),
        config: cfg.clone(),
    };
    write_json(&out.join(MANIFEST), &manifest)?;

    let rounds_path = out.join(ROUNDS);
    let file = File::create(&rounds_path).map_err(|e| Error::io(&rounds_path, e))?;
    let mut rounds = BufWriter::new(file);
    info!("running {variant} seed {seed} into {}", out.display());
    let outcome = federation::run_observed(&cfg.federation, &bank, &mut |report| {
        let record = RoundRecord {
            report,
            config_hash: &config_hash,
        };
        serde_json::to_writer(&mut rounds, &record)?;
        rounds
            .write_all(b"\n")
            .and_then(|_| rounds.flush())
            .map_err(|e| Error::io(&rounds_path, e))
    })?;
    drop(rounds);

    write_solutions(&out.join(SOLUTIONS), &bank, &outcome)?;

    let solutions = SolutionSet::from_objectives(&outcome.objectives)?;
    let front = analytic_front(cfg, &bank)?;
    let r = reference_point(cfg, &front)?;
    let summary = metrics::summarize(&solutions, &r, (!front.is_empty()).then_some(&front))?;
    let scalarised = outcome.scalarised(&bank)?;
    let run_metrics = RunMetrics {
        config_hash,
        problem_hash,
        variant,
        seed,
        mean_scalarised: scalarised.iter().sum::<f64>() / scalarised.len() as f64,
        hypervolume: summary.hypervolume,
        sparsity: summary.sparsity,
        cardinality: summary.cardinality,
        igd: summary.igd,
        igd_reference: "analytic".into(),
        reference_point: r,
    };
    write_json(&out.join(METRICS), &run_metrics)?;
    Ok(run_metrics)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CampaignIndex {
    pub problem_hash: String,
    pub runs: Vec<String>,
    pub reference_front: String,
}

/// Directory name of one campaign run.
pub fn run_dir_name(variant: Variant, seed: u64) -> String {
    format!("{}_seed{seed}", variant.to_string().replace('+', "_"))
}

/// Runs every variant × seed of the config's campaign (or the single
/// configured run), then measures each run's IGD against the Pareto front
/// of all runs combined.
pub fn execute_campaign(cfg: &RunConfig, out: &Path) -> Result<Vec<RunMetrics>> {
    cfg.validate()?;
    let (variants, seeds) = match &cfg.campaign {
        Some(c) => (
            c.variants.clone(),
            if c.seeds.is_empty() {
                vec![cfg.federation.seed]
            } else {
                c.seeds.clone()
            },
        ),
        None => (vec![cfg.variant()], vec![cfg.federation.seed]),
    };
    fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;

    let mut dirs = Vec::new();
    let mut results = Vec::new();
    let mut combined = SolutionSet::default();
    for &variant in &variants {
        for &seed in &seeds {
            let name = run_dir_name(variant, seed);
            let dir = out.join(&name);
            results.push(execute_run(&cfg.with_variant(variant, seed), &dir)?);
            combined = combined.merged(&read_objectives(&dir.join(SOLUTIONS))?)?;
            dirs.push((name, dir));
        }
    }
    let front = metrics::pareto_front(&combined);
    write_front(&out.join(REFERENCE_FRONT), &front)?;

    for ((_, dir), m) in dirs.iter().zip(results.iter_mut()) {
        let solutions = read_objectives(&dir.join(SOLUTIONS))?;
        m.igd = Some(metrics::igd(&solutions, &front)?);
        m.igd_reference = "campaign".into();
        write_json(&dir.join(METRICS), m)?;
    }
    write_json(
        &out.join(CAMPAIGN),
        &CampaignIndex {
            problem_hash: cfg.problem_hash(),
            runs: dirs.into_iter().map(|(name, _)| name).collect(),
            reference_front: REFERENCE_FRONT.into(),
        },
    )?;
    Ok(results)
}

/// Mean and population standard deviation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Stat {
    pub mean: f64,
    pub std: f64,
}

impl Stat {
    pub fn of(values: &[f64]) -> Stat {
        if values.is_empty() {
            return Stat {
                mean: f64::NAN,
                std: f64::NAN,
            };
        }
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let var = values.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
        Stat {
            mean,
            std: var.sqrt(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub variant: Variant,
    pub runs: usize,
    pub mean_scalarised: Stat,
    pub hypervolume: Stat,
    pub sparsity: Stat,
    pub cardinality: Stat,
    /// Absent when no pooled run reports IGD.
    pub igd: Option<Stat>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub problem_hash: String,
    pub rows: Vec<SummaryRow>,
}

/// Run directories named by `paths`; a campaign directory expands to its runs.
fn expand(paths: &[PathBuf]) -> Result<Vec<PathBuf>> {
    let mut out = Vec::new();
    for p in paths {
        if !p.is_dir() {
            return Err(Error::Config(format!("{}: no such run directory", p.display())));
        }
        if p.join(METRICS).is_file() {
            out.push(p.clone());
        } else if p.join(CAMPAIGN).is_file() {
            let index: CampaignIndex = read_json(&p.join(CAMPAIGN))?;
            out.extend(index.runs.iter().map(|r| p.join(r)));
        } else {
            return Err(Error::Config(format!(
                "{}: neither a run directory nor a campaign directory",
                p.display()
            )));
        }
    }
    Ok(out)
}

/// Per-variant mean and population standard deviation over runs. Runs must
/// share one problem hash.
pub fn summarize(paths: &[PathBuf]) -> Result<Summary> {
    let dirs = expand(paths)?;
    if dirs.is_empty() {
        return Err(Error::Config("no run directories given".into()));
    }
    let mut runs: Vec<RunMetrics> = Vec::with_capacity(dirs.len());
    for d in &dirs {
        let m: RunMetrics = read_json(&d.join(METRICS))?;
        if let Some(first) = runs.first() {
            if first.problem_hash != m.problem_hash {
                return Err(Error::Config(format!(
                    "{}: problem hash {} differs from {} of {}; refusing to pool",
                    d.display(),
                    m.problem_hash,
                    first.problem_hash,
                    dirs[0].display()
                )));
            }
        }
        runs.push(m);
    }
    let mut by_variant: BTreeMap<String, Vec<&RunMetrics>> = BTreeMap::new();
    for m in &runs {
        by_variant.entry(m.variant.to_string()).or_default().push(m);
    }
    let rows = by_variant
        .into_values()
        .map(|group| {
            let col = |f: &dyn Fn(&RunMetrics) -> f64| Stat::of(&group.iter().map(|m| f(m)).collect::<Vec<_>>());
            let igds: Vec<f64> = group.iter().filter_map(|m| m.igd).collect();
            SummaryRow {
                variant: group[0].variant,
                runs: group.len(),
                mean_scalarised: col(&|m| m.mean_scalarised),
                hypervolume: col(&|m| m.hypervolume),
                sparsity: col(&|m| m.sparsity),
                cardinality: col(&|m| m.cardinality as f64),
                igd: (!igds.is_empty()).then(|| Stat::of(&igds)),
            }
        })
        .collect();
    Ok(Summary {
        problem_hash: runs[0].problem_hash.clone(),
        rows,
    })
}

impl Summary {
    /// Fixed-width table, one row per variant, `mean ± std` cells.
    pub fn to_table(&self) -> String {
        let cell = |s: &Stat| format!("{:.4} ± {:.4}", s.mean, s.std);
        let header = ["variant", "runs", "scalarised", "hypervolume", "sparsity", "cardinality", "igd"];
        let mut rows: Vec<Vec<String>> = vec![header.iter().map(|h| h.to_string()).collect()];
        for r in &self.rows {
            rows.push(vec![
                r.variant.to_string(),
                r.runs.to_string(),
                cell(&r.mean_scalarised),
                cell(&r.hypervolume),
                cell(&r.sparsity),
                cell(&r.cardinality),
                r.igd.as_ref().map_or("-".into(), cell),
            ]);
        }
        let widths: Vec<usize> = (0..header.len())
            .map(|c| rows.iter().map(|r| r[c].chars().count()).max().unwrap_or(0))
            .collect();
        let mut out = String::new();
        for r in &rows {
            let line: Vec<String> = r
                .iter()
                .zip(&widths)
                .map(|(s, &w)| format!("{s}{}", " ".repeat(w - s.chars().count())))
                .collect();
            out.push_str(line.join("  ").trim_end());
            out.push('\n');
        }
        out
    }
}
