use std::fs;
use std::path::{Path, PathBuf};

use fedpref::config::RunConfig;
use fedpref::experiment::{
    execute_campaign, execute_run, read_objectives, summarize, Manifest, RunMetrics, CAMPAIGN, MANIFEST, METRICS,
    REFERENCE_FRONT, ROUNDS, SOLUTIONS,
};

fn shipped(name: &str) -> RunConfig {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs").join(name);
    RunConfig::load(path).unwrap()
}

fn small_campaign() -> RunConfig {
    RunConfig::from_toml_str(
        r#"
[federation]
algorithm = "fedpref"
rounds = 8
clients = 6
local_steps = 3
learning_rate = 0.05
clustering_threshold = 0.1
seed = 1

[problem]
kind = "conflicting_groups"
group_sizes = [3, 3]

[campaign]
variants = ["fedpref", "fedavg", "local"]
seeds = [4, 5]
"#,
    )
    .unwrap()
}

#[test]
fn shipped_configs_load() {
    for name in ["conflicting_groups.toml", "conflicting_groups_noisy.toml", "quadratic_dirichlet.toml"] {
        shipped(name);
    }
}

#[test]
fn repeated_runs_write_identical_files() {
    let cfg = shipped("quadratic_dirichlet.toml");
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    execute_run(&cfg, &a).unwrap();
    let pool = rayon::ThreadPoolBuilder::new().num_threads(3).build().unwrap();
    pool.install(|| execute_run(&cfg, &b)).unwrap();
    for file in [SOLUTIONS, ROUNDS, METRICS, MANIFEST] {
        assert_eq!(fs::read(a.join(file)).unwrap(), fs::read(b.join(file)).unwrap(), "{file}");
    }
}

#[test]
fn run_directory_contents() {
    let cfg = shipped("quadratic_dirichlet.toml");
    let dir = tempfile::tempdir().unwrap();
    let metrics = execute_run(&cfg, dir.path()).unwrap();
    let manifest: Manifest = serde_json::from_slice(&fs::read(dir.path().join(MANIFEST)).unwrap()).unwrap();
    assert_eq!(manifest.config_hash, cfg.config_hash());
    assert_eq!(manifest.config, cfg);
    assert_eq!(metrics.config_hash, cfg.config_hash());
    assert!(metrics.igd.is_some());

    let rounds = fs::read_to_string(dir.path().join(ROUNDS)).unwrap();
    assert_eq!(rounds.lines().count(), cfg.federation.rounds);
    for (k, line) in rounds.lines().enumerate() {
        let v: serde_json::Value = serde_json::from_str(line).unwrap();
        assert_eq!(v["round"], k + 1);
        assert_eq!(v["config_hash"], cfg.config_hash());
        assert_eq!(v["cluster_assignment"].as_array().unwrap().len(), cfg.federation.clients);
    }

    let csv = fs::read_to_string(dir.path().join(SOLUTIONS)).unwrap();
    assert_eq!(csv.lines().next().unwrap(), "client_id,w_1,w_2,w_3,f_1,f_2,f_3,scalarised");
    assert_eq!(csv.lines().count(), cfg.federation.clients + 1);
    assert_eq!(read_objectives(&dir.path().join(SOLUTIONS)).unwrap().len(), cfg.federation.clients);
}

#[test]
fn campaign_layout_and_summary() {
    let cfg = small_campaign();
    let dir = tempfile::tempdir().unwrap();
    let results = execute_campaign(&cfg, dir.path()).unwrap();
    assert_eq!(results.len(), 6);
    assert!(dir.path().join(CAMPAIGN).is_file());
    assert!(dir.path().join(REFERENCE_FRONT).is_file());
    let runs: Vec<PathBuf> = fs::read_dir(dir.path())
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.is_dir())
        .collect();
    assert_eq!(runs.len(), 6);
    assert!(dir.path().join("fedavg_seed5").join(SOLUTIONS).is_file());

    let summary = summarize(&[dir.path().to_path_buf()]).unwrap();
    assert_eq!(summary.problem_hash, cfg.problem_hash());
    assert_eq!(summary.rows.len(), 3);
    for row in &summary.rows {
        assert_eq!(row.runs, 2);
        let mine: Vec<&RunMetrics> = results.iter().filter(|m| m.variant == row.variant).collect();
        let (x, y) = (mine[0].mean_scalarised, mine[1].mean_scalarised);
        assert!((row.mean_scalarised.mean - (x + y) / 2.0).abs() < 1e-12);
        assert!((row.mean_scalarised.std - (x - y).abs() / 2.0).abs() < 1e-12);
        assert!(row.igd.is_some());
    }
    let fedavg = summary.rows.iter().find(|r| r.variant.to_string() == "fedavg").unwrap();
    assert_eq!(fedavg.cardinality.mean, 1.0);
    assert!(summary.to_table().lines().count() >= 4);
}

#[test]
fn summary_refuses_mixed_problems() {
    let dir = tempfile::tempdir().unwrap();
    execute_run(&shipped("quadratic_dirichlet.toml"), &dir.path().join("a")).unwrap();
    let mut other = small_campaign();
    other.campaign = None;
    execute_run(&other, &dir.path().join("b")).unwrap();
    let err = summarize(&[dir.path().join("a"), dir.path().join("b")]).unwrap_err();
    assert!(err.is_config());
    assert!(err.to_string().contains("problem hash"));
    assert!(summarize(&[dir.path().join("missing")]).unwrap_err().is_config());
}
