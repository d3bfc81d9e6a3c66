//! Command-line runner for the federated preference simulator.
//!
//! Exit codes: 0 on success, 2 for configuration or input errors, 3 for
//! numeric failures during a run (the message names the round), 1 otherwise.
//! Log verbosity is read from `FEDPREF_LOG` (e.g. `info`, `debug`).

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use log::error;

use fedpref::config::{RunConfig, Variant};
use fedpref::experiment::{self, RunMetrics};
use fedpref::metrics::{self, SolutionSet};
use fedpref::Error;

#[derive(Parser)]
#[command(name = "fedpref", version, about = "Preference-aware federated learning simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Execute a config (a single run, or every variant × seed of its campaign).
    Run {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Replace the configured seed (and campaign seed list).
        #[arg(long)]
        seed: Option<u64>,
        /// Run only this algorithm variant, e.g. `fedavg` or `fedpref+ft`.
        #[arg(long)]
        algo: Option<String>,
        /// Worker threads for client training; defaults to all cores.
        #[arg(long)]
        threads: Option<usize>,
    },
    /// Mean ± population std per variant across run or campaign directories.
    Summarize {
        #[arg(required = true)]
        dirs: Vec<PathBuf>,
        /// Print JSON instead of a table.
        #[arg(long)]
        json: bool,
    },
    /// Indicators of a solution CSV.
    Metrics {
        #[arg(long)]
        solutions: PathBuf,
        /// Comma-separated reference point, one value per objective.
        #[arg(long, value_delimiter = ',', allow_negative_numbers = true, required = true)]
        ref_point: Vec<f64>,
        #[arg(long)]
        ref_front: Option<PathBuf>,
    },
}

fn run(
    config: PathBuf,
    out: PathBuf,
    seed: Option<u64>,
    algo: Option<String>,
    threads: Option<usize>,
) -> fedpref::Result<()> {
    if let Some(n) = threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Error::Config(format!("--threads: {e}")))?;
    }
    let mut cfg = RunConfig::load(&config)?;
    if let Some(s) = seed {
        cfg.federation.seed = s;
        if let Some(c) = cfg.campaign.as_mut() {
            c.seeds = vec![s];
        }
    }
    if let Some(a) = algo {
        let v: Variant = a.parse().map_err(|e| Error::Config(format!("--algo: {e}")))?;
        cfg = cfg.with_variant(v, cfg.federation.seed);
    }
    let results: Vec<RunMetrics> = if cfg.campaign.is_some() {
        experiment::execute_campaign(&cfg, &out)?
    } else {
        vec![experiment::execute_run(&cfg, &out)?]
    };
    for m in results {
        println!(
            "{} seed {}: scalarised {:.6} hypervolume {:.6} cardinality {}",
            m.variant, m.seed, m.mean_scalarised, m.hypervolume, m.cardinality
        );
    }
    Ok(())
}

fn summarize(dirs: Vec<PathBuf>, json: bool) -> fedpref::Result<()> {
    let summary = experiment::summarize(&dirs)?;
    if json {
        println!("{}", serde_json_string(&summary)?);
    } else {
        print!("{}", summary.to_table());
    }
    Ok(())
}

fn serde_json_string<T: serde::Serialize>(value: &T) -> fedpref::Result<String> {
    Ok(serde_json::to_string_pretty(value)?)
}

fn metrics_cmd(solutions: PathBuf, ref_point: Vec<f64>, ref_front: Option<PathBuf>) -> fedpref::Result<()> {
    let set = experiment::read_objectives(&solutions)?;
    if set.objectives().is_some_and(|m| m != ref_point.len()) {
        return Err(Error::Config(format!(
            "--ref-point has {} values but {} has {} objectives",
            ref_point.len(),
            solutions.display(),
            set.objectives().unwrap_or(0)
        )));
    }
    let front: Option<SolutionSet> = ref_front.map(|p| experiment::read_objectives(&p)).transpose()?;
    let summary = metrics::summarize(&set, &ref_point, front.as_ref())?;
    println!("{}", serde_json_string(&summary)?);
    Ok(())
}

fn exit_code(e: &Error) -> u8 {
    match e {
        e if e.is_config() => 2,
        Error::Round { .. } | Error::Numeric(_) | Error::Divergence { .. } | Error::NoConvergence { .. } => 3,
        _ => 1,
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().filter_or("FEDPREF_LOG", "warn")).init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run {
            config,
            out,
            seed,
            algo,
            threads,
        } => run(config, out, seed, algo, threads),
        Command::Summarize { dirs, json } => summarize(dirs, json),
        Command::Metrics {
            solutions,
            ref_point,
            ref_front,
        } => metrics_cmd(solutions, ref_point, ref_front),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            error!("{e}");
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
