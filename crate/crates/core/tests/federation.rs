use fedpref::config::{Algorithm, FederationConfig, InitMode, RunConfig};
use fedpref::federation::{
    self, group_purity, initial_models, run_cfl, run_fedavg, run_fedpref, run_fedprox, run_local_only,
};
use fedpref::params::{LayeredParams, PreferenceVector};
use fedpref::problems::{local_train, ClientBank, ConflictingGroups, Prox, QuadraticProblem, TrainSettings};
use fedpref::seeds;

fn groups_config(algorithm: &str, sizes: &[usize], extra: &str) -> (FederationConfig, ClientBank) {
    let clients: usize = sizes.iter().sum();
    let text = format!(
        r#"
[federation]
algorithm = "{algorithm}"
rounds = 30
clients = {clients}
local_steps = 5
learning_rate = 0.02
clustering_threshold = 0.05
cfl_threshold = 0.05
seed = 3
{extra}

[problem]
kind = "conflicting_groups"
group_sizes = {sizes:?}
"#
    );
    let cfg = RunConfig::from_toml_str(&text).unwrap();
    let bank = cfg.build_clients().unwrap();
    (cfg.federation, bank)
}

fn distance(a: &LayeredParams, b: &LayeredParams) -> f64 {
    a.flatten().iter().zip(b.flatten()).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt()
}

#[test]
fn fedavg_two_clients_reach_midpoint() {
    let problem = QuadraticProblem::isotropic(vec![vec![2.0, 0.0], vec![0.0, -2.0]], vec![1, 1]).unwrap();
    let prefs = vec![PreferenceVector::new(vec![0.9, 0.1]).unwrap(), PreferenceVector::new(vec![0.2, 0.8]).unwrap()];
    let bank = ClientBank::new(problem, prefs).unwrap();
    let (mut cfg, _) = groups_config("fedavg", &[1, 1], "");
    cfg.rounds = 400;
    let out = run_fedavg(&cfg, &bank).unwrap();
    let optima = bank.optima().unwrap();
    let mid = LayeredParams::mean(&[&optima[0], &optima[1]]).unwrap();
    for m in &out.models {
        assert!(distance(m, &mid) < 1e-6);
        assert_eq!(m, &out.models[0]);
    }
    assert!(out.history.iter().all(|r| r.cluster_count() == 1));
}

#[test]
fn fedprox_without_penalty_is_fedavg() {
    let (mut cfg, bank) = groups_config("fedprox", &[3, 3, 2], "gradient_noise = 0.5\ninit = \"per_client\"");
    cfg.prox_mu = 0.0;
    let prox = run_fedprox(&cfg, &bank).unwrap();
    let avg = run_fedavg(&cfg, &bank).unwrap();
    assert_eq!(prox.models, avg.models);
    assert_eq!(prox.history, avg.history);
}

/// FedProx rebuilt from its public pieces; returns the final global model and
/// the largest post-training distance from the global model.
fn replay_fedprox(cfg: &FederationConfig, bank: &ClientBank) -> (LayeredParams, f64) {
    let refs = initial_models(cfg, bank).unwrap();
    let mut global = LayeredParams::mean(&refs.iter().collect::<Vec<_>>()).unwrap();
    let settings = TrainSettings {
        steps: cfg.local_steps,
        learning_rate: cfg.learning_rate,
        gradient_noise: cfg.gradient_noise,
    };
    let mut drift: f64 = 0.0;
    for round in 1..=cfg.rounds {
        let trained: Vec<LayeredParams> = (0..bank.len())
            .map(|i| {
                let seed = seeds::derive(cfg.seed, seeds::NOISE, round as u64, i as u64);
                let prox = Prox { mu: cfg.prox_mu, anchor: &global };
                local_train(&global, &bank.problem, &bank.preferences[i], &settings, Some(prox), seed).unwrap()
            })
            .collect();
        for t in &trained {
            drift = drift.max(distance(t, &global));
        }
        global = LayeredParams::mean(&trained.iter().collect::<Vec<_>>()).unwrap();
    }
    (global, drift)
}

#[test]
fn strong_penalty_pins_local_models() {
    let (mut cfg, bank) = groups_config("fedprox", &[5, 5, 5, 5], "gradient_noise = 1.0");
    cfg.prox_mu = 1e6;
    let (global, drift) = replay_fedprox(&cfg, &bank);
    assert!(drift <= 1e-3, "{drift}");
    let out = run_fedprox(&cfg, &bank).unwrap();
    assert_eq!(out.models[0], global);
}

#[test]
fn penalty_reduces_drift() {
    let (mut cfg, bank) = groups_config("fedprox", &[5, 5, 5, 5], "");
    let (_, free) = replay_fedprox(&cfg, &bank);
    cfg.prox_mu = 1.0;
    let (_, held) = replay_fedprox(&cfg, &bank);
    assert!(held < free, "{held} vs {free}");
}

#[test]
fn cfl_separates_two_groups() {
    let (mut cfg, bank) = groups_config("cfl", &[4, 4], "");
    cfg.rounds = 200;
    let out = run_cfl(&cfg, &bank).unwrap();
    let clusters = out.final_clusters();
    assert!(clusters.len() >= 2);
    assert_eq!(group_purity(&clusters, bank.groups.as_ref().unwrap()), 1.0);
    for c in &clusters {
        assert!(c.iter().all(|&i| out.models[i] == out.models[c[0]]));
    }
}

#[test]
fn local_only_reaches_optima() {
    let (mut cfg, bank) = groups_config("local", &[2, 2, 2], "");
    cfg.rounds = 200;
    let out = run_local_only(&cfg, &bank).unwrap();
    for (m, opt) in out.models.iter().zip(bank.optima().unwrap()) {
        assert!(distance(m, &opt) < 1e-4);
    }
}

#[test]
fn fedpref_separates_conflicting_groups() {
    let (mut cfg, bank) = groups_config("fedpref", &[5, 5, 5, 5], "");
    cfg.rounds = 50;
    let out = run_fedpref(&cfg, &bank).unwrap();
    let clusters = out.final_clusters();
    assert_eq!(clusters.len(), 4);
    assert_eq!(group_purity(&clusters, bank.groups.as_ref().unwrap()), 1.0);
    for (m, opt) in out.models.iter().zip(bank.optima().unwrap()) {
        assert!(distance(m, &opt) < 1e-2);
    }
    let splits = out
        .history
        .iter()
        .flat_map(|r| &r.events)
        .filter(|e| matches!(e, federation::Event::Split { .. }))
        .count();
    assert_eq!(splits, 3);
}

#[test]
fn fedpref_single_client_is_local_training() {
    let problem = QuadraticProblem::isotropic(vec![vec![1.0, 1.0], vec![-1.0, 0.0]], vec![1, 1]).unwrap();
    let bank = ClientBank::new(problem, vec![PreferenceVector::new(vec![0.3, 0.7]).unwrap()]).unwrap();
    let (mut cfg, _) = groups_config("fedpref", &[1, 1], "gradient_noise = 0.2");
    cfg.clients = 1;
    let pref = run_fedpref(&cfg, &bank).unwrap();
    cfg.algorithm = Algorithm::LocalOnly;
    let local = run_local_only(&cfg, &bank).unwrap();
    assert_eq!(pref.models, local.models);
    assert!(pref.history.iter().all(|r| r.events.is_empty()));
}

#[test]
fn fine_tune_keeps_local_models() {
    let (mut cfg, bank) = groups_config("fedpref", &[3, 3], "");
    let plain = run_fedpref(&cfg, &bank).unwrap();
    cfg.fine_tune = true;
    let tuned = run_fedpref(&cfg, &bank).unwrap();
    assert_eq!(plain.history[..cfg.rounds - 1], tuned.history[..cfg.rounds - 1]);
    let a = plain.scalarised(&bank).unwrap().iter().sum::<f64>();
    let b = tuned.scalarised(&bank).unwrap().iter().sum::<f64>();
    assert!(b >= a - 1e-12);
}

#[test]
fn outcomes_do_not_depend_on_thread_count() {
    for algorithm in ["fedpref", "fedavg", "fedprox", "cfl", "local"] {
        let (mut cfg, bank) =
            groups_config(algorithm, &[4, 3, 5, 2], "gradient_noise = 0.7\nprox_mu = 0.3\ninit = \"per_client\"");
        cfg.rounds = 15;
        let pool = |t| rayon::ThreadPoolBuilder::new().num_threads(t).build().unwrap();
        let one = pool(1).install(|| federation::run(&cfg, &bank)).unwrap();
        let four = pool(4).install(|| federation::run(&cfg, &bank)).unwrap();
        assert_eq!(one, four, "{algorithm}");
    }
}

#[test]
fn shared_init_broadcasts_one_model() {
    let (mut cfg, bank) = groups_config("fedavg", &[2, 2], "");
    let shared = initial_models(&cfg, &bank).unwrap();
    assert!(shared.iter().all(|m| m == &shared[0]));
    cfg.init = InitMode::PerClient;
    let own = initial_models(&cfg, &bank).unwrap();
    assert_ne!(own[0], own[1]);
}

#[test]
fn mismatched_bank_is_rejected() {
    let (cfg, _) = groups_config("fedavg", &[2, 2], "");
    let bank = ConflictingGroups::new(vec![3, 3]).build().unwrap();
    assert!(federation::run(&cfg, &bank).is_err());
}
