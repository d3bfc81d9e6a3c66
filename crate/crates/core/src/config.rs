//! Experiment configuration.
//!
//! A run is described by one TOML document with the sections
//! `[federation]`, `[problem]`, `[preferences]`, `[metrics]` and an optional
//! `[campaign]`. Unknown fields are rejected.
//!
//! ```toml
//! [federation]
//! algorithm = "fedpref"        # fedpref | fedavg | fedprox | cfl | local
//! rounds = 40
//! clients = 20
//! local_steps = 5
//! learning_rate = 0.05
//! clustering_threshold = 0.05  # required for fedpref
//! patience = 1
//! top_r = 0.5
//! min_similarity = 0.0
//! seed = 7
//!
//! [problem]
//! kind = "conflicting_groups"
//! group_sizes = [5, 5, 5, 5]
//! ```

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::problems::{
    generate_preferences, ClientBank, ConflictingGroups, PrefDistribution, QuadraticProblem,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Algorithm {
    #[serde(rename = "fedpref")]
    FedPref,
    #[serde(rename = "fedavg")]
    FedAvg,
    #[serde(rename = "fedprox")]
    FedProx,
    Cfl,
    #[serde(rename = "local", alias = "local_only", alias = "no_communication")]
    LocalOnly,
}

impl Algorithm {
    pub fn id(self) -> &'static str {
        match self {
            Algorithm::FedPref => "fedpref",
            Algorithm::FedAvg => "fedavg",
            Algorithm::FedProx => "fedprox",
            Algorithm::Cfl => "cfl",
            Algorithm::LocalOnly => "local",
        }
    }
}

impl fmt::Display for Algorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.id())
    }
}

impl FromStr for Algorithm {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "fedpref" => Ok(Algorithm::FedPref),
            "fedavg" => Ok(Algorithm::FedAvg),
            "fedprox" => Ok(Algorithm::FedProx),
            "cfl" => Ok(Algorithm::Cfl),
            "local" | "local_only" | "no_communication" => Ok(Algorithm::LocalOnly),
            other => Err(Error::Config(format!("unknown algorithm `{other}`"))),
        }
    }
}

/// An algorithm together with its fine-tuning flag, written `fedpref` or
/// `fedpref+ft`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Variant {
    pub algorithm: Algorithm,
    pub fine_tune: bool,
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}{}", self.algorithm, if self.fine_tune { "+ft" } else { "" })
    }
}

impl FromStr for Variant {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        let lower = s.to_ascii_lowercase();
        let (name, fine_tune) = match lower.strip_suffix("+ft").or_else(|| lower.strip_suffix("-ft")) {
            Some(base) => (base, true),
            None => (lower.as_str(), false),
        };
        Ok(Variant {
            algorithm: name.parse()?,
            fine_tune,
        })
    }
}

impl Serialize for Variant {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Variant {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// How initial client models are drawn.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InitMode {
    /// One draw broadcast to every client.
    #[default]
    Shared,
    /// An independent draw per client.
    PerClient,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FederationConfig {
    pub algorithm: Algorithm,
    pub rounds: usize,
    pub clients: usize,
    pub local_steps: usize,
    pub learning_rate: f64,
    pub seed: u64,
    /// ε: cluster mean-update norm at or below which a cluster counts as converged.
    #[serde(default)]
    pub clustering_threshold: Option<f64>,
    #[serde(default = "one")]
    pub patience: usize,
    #[serde(default = "default_top_r")]
    pub top_r: f64,
    #[serde(default)]
    pub min_similarity: f64,
    #[serde(default)]
    pub fine_tune: bool,
    #[serde(default)]
    pub prox_mu: f64,
    #[serde(default)]
    pub cfl_threshold: Option<f64>,
    #[serde(default = "one")]
    pub cfl_patience: usize,
    #[serde(default)]
    pub gradient_noise: f64,
    #[serde(default)]
    pub init: InitMode,
    #[serde(default = "default_init_scale")]
    pub init_scale: f64,
}

fn one() -> usize {
    1
}

fn default_top_r() -> f64 {
    0.5
}

fn default_init_scale() -> f64 {
    0.5
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ProblemConfig {
    /// Explicit quadratic objectives; client preferences come from `[preferences]`.
    Quadratic {
        centers: Vec<Vec<f64>>,
        #[serde(default)]
        scales: Option<Vec<Vec<Vec<f64>>>>,
        #[serde(default)]
        layer_sizes: Option<Vec<usize>>,
    },
    /// Planted groups with antipodal optima.
    ConflictingGroups(ConflictingGroups),
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MetricsConfig {
    /// Hypervolume reference point; derived from the analytic front if absent.
    #[serde(default)]
    pub reference_point: Option<Vec<f64>>,
    /// Lattice divisions used to sample the analytic Pareto front.
    #[serde(default)]
    pub front_divisions: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CampaignConfig {
    pub variants: Vec<Variant>,
    #[serde(default)]
    pub seeds: Vec<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub federation: FederationConfig,
    pub problem: ProblemConfig,
    #[serde(default)]
    pub preferences: Option<PrefDistribution>,
    #[serde(default)]
    pub metrics: MetricsConfig,
    #[serde(default)]
    pub campaign: Option<CampaignConfig>,
}

fn hash_json<T: Serialize>(value: &T) -> String {
    let bytes = serde_json::to_vec(value).expect("config types serialize");
    hex::encode(Sha256::digest(&bytes))
}

fn bad(field: &str, msg: impl fmt::Display) -> Error {
    Error::Config(format!("{field}: {msg}"))
}

impl RunConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml_str(&text)
            .map_err(|e| Error::Config(format!("{}: {}", path.display(), strip_prefix(&e))))
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("config types serialize")
    }

    pub fn variant(&self) -> Variant {
        Variant {
            algorithm: self.federation.algorithm,
            fine_tune: self.federation.fine_tune,
        }
    }

    /// Copy of this config with algorithm, fine-tuning flag and seed replaced.
    pub fn with_variant(&self, variant: Variant, seed: u64) -> Self {
        let mut cfg = self.clone();
        cfg.federation.algorithm = variant.algorithm;
        cfg.federation.fine_tune = variant.fine_tune;
        cfg.federation.seed = seed;
        cfg.campaign = None;
        cfg
    }

    /// SHA-256 of the canonical JSON form of the whole config.
    pub fn config_hash(&self) -> String {
        hash_json(self)
    }

    /// SHA-256 of what defines the clients' problems: problem section,
    /// preference distribution and client count. Seeds and algorithm
    /// settings are excluded.
    pub fn problem_hash(&self) -> String {
        hash_json(&(&self.problem, &self.preferences, self.federation.clients))
    }

    pub fn validate(&self) -> Result<()> {
        let f = &self.federation;
        if f.rounds < 1 {
            return Err(bad("federation.rounds", "must be at least 1"));
        }
        if f.clients < 1 {
            return Err(bad("federation.clients", "must be at least 1"));
        }
        if f.local_steps < 1 {
            return Err(bad("federation.local_steps", "must be at least 1"));
        }
        if !(f.learning_rate > 0.0 && f.learning_rate.is_finite()) {
            return Err(bad("federation.learning_rate", "must be positive"));
        }
        if !(f.top_r > 0.0 && f.top_r <= 1.0) {
            return Err(bad("federation.top_r", "must lie in (0, 1]"));
        }
        if !(-1.0..1.0).contains(&f.min_similarity) {
            return Err(bad("federation.min_similarity", "must lie in [-1, 1)"));
        }
        if f.patience < 1 {
            return Err(bad("federation.patience", "must be at least 1"));
        }
        if f.cfl_patience < 1 {
            return Err(bad("federation.cfl_patience", "must be at least 1"));
        }
        if !(f.prox_mu >= 0.0 && f.prox_mu.is_finite()) {
            return Err(bad("federation.prox_mu", "must be finite and nonnegative"));
        }
        if !(f.gradient_noise >= 0.0 && f.gradient_noise.is_finite()) {
            return Err(bad("federation.gradient_noise", "must be finite and nonnegative"));
        }
        if !(f.init_scale >= 0.0 && f.init_scale.is_finite()) {
            return Err(bad("federation.init_scale", "must be finite and nonnegative"));
        }
        let check_threshold = |name: &str, v: Option<f64>| match v {
            None => Err(bad(name, format!("missing field, required by algorithm `{}`", f.algorithm))),
            Some(x) if !(x >= 0.0 && x.is_finite()) => Err(bad(name, "must be finite and nonnegative")),
            Some(_) => Ok(()),
        };
        let variants: Vec<Algorithm> = match &self.campaign {
            Some(c) => c.variants.iter().map(|v| v.algorithm).collect(),
            None => vec![f.algorithm],
        };
        if variants.contains(&Algorithm::FedPref) {
            check_threshold("federation.clustering_threshold", f.clustering_threshold)?;
        }
        if variants.contains(&Algorithm::Cfl) {
            check_threshold("federation.cfl_threshold", f.cfl_threshold)?;
        }
        if let Some(c) = &self.campaign {
            if c.variants.is_empty() {
                return Err(bad("campaign.variants", "must name at least one algorithm"));
            }
        }
        match &self.problem {
            ProblemConfig::Quadratic { .. } => {
                if self.preferences.is_none() {
                    return Err(bad(
                        "preferences",
                        "missing section, required for problem kind `quadratic`",
                    ));
                }
            }
            ProblemConfig::ConflictingGroups(g) => {
                if g.clients() != f.clients {
                    return Err(bad(
                        "problem.group_sizes",
                        format!("sum to {} but federation.clients = {}", g.clients(), f.clients),
                    ));
                }
            }
        }
        let bank = self.build_clients().map_err(|e| bad("problem", strip_prefix(&e)))?;
        if let Some(r) = &self.metrics.reference_point {
            if r.len() != bank.problem.objectives() {
                return Err(bad(
                    "metrics.reference_point",
                    format!("has {} entries for {} objectives", r.len(), bank.problem.objectives()),
                ));
            }
        }
        Ok(())
    }

    /// Instantiates the problem and client preferences.
    pub fn build_clients(&self) -> Result<ClientBank> {
        match &self.problem {
            ProblemConfig::ConflictingGroups(g) => g.build(),
            ProblemConfig::Quadratic {
                centers,
                scales,
                layer_sizes,
            } => {
                let dim = centers.first().map_or(0, Vec::len);
                let layers = layer_sizes.clone().unwrap_or_else(|| default_layers(dim));
                let problem = QuadraticProblem::new(centers.clone(), scales.clone(), layers)?;
                let dist = self
                    .preferences
                    .as_ref()
                    .ok_or_else(|| bad("preferences", "missing section"))?;
                let prefs = generate_preferences(
                    dist,
                    problem.objectives(),
                    self.federation.clients,
                    crate::seeds::derive(self.federation.seed, crate::seeds::PREFERENCES, 0, 0),
                )?;
                ClientBank::new(problem, prefs)
            }
        }
    }
}

/// Two equal pseudo-layers when the dimension is even, one layer otherwise.
fn default_layers(dim: usize) -> Vec<usize> {
    if dim >= 2 && dim.is_multiple_of(2) {
        vec![dim / 2, dim / 2]
    } else {
        vec![dim]
    }
}

fn strip_prefix(e: &Error) -> String {
    match e {
        Error::Config(msg) => msg.clone(),
        other => other.to_string(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const BASE: &str = r#"
[federation]
algorithm = "fedpref"
rounds = 10
clients = 4
local_steps = 3
learning_rate = 0.05
clustering_threshold = 0.1
seed = 3

[problem]
kind = "conflicting_groups"
group_sizes = [2, 2]
"#;

    #[test]
    fn parses_with_defaults() {
        let cfg = RunConfig::from_toml_str(BASE).unwrap();
        assert_eq!(cfg.federation.patience, 1);
        assert_eq!(cfg.federation.init, InitMode::Shared);
        assert_eq!(cfg.variant().to_string(), "fedpref");
        let back = RunConfig::from_toml_str(&cfg.to_toml_string()).unwrap();
        assert_eq!(back, cfg);
    }

    #[test]
    fn missing_field_is_named() {
        let text = BASE.replace("rounds = 10\n", "");
        let err = RunConfig::from_toml_str(&text).unwrap_err().to_string();
        assert!(err.contains("rounds"), "{err}");
        let text = BASE.replace("clustering_threshold = 0.1\n", "");
        let err = RunConfig::from_toml_str(&text).unwrap_err().to_string();
        assert!(err.contains("clustering_threshold"), "{err}");
    }

    #[test]
    fn invalid_values_are_named() {
        for (from, to, field) in [
            ("rounds = 10", "rounds = 0", "rounds"),
            ("seed = 3", "seed = 3\ntop_r = 0.0", "top_r"),
            ("seed = 3", "seed = 3\nmin_similarity = 1.0", "min_similarity"),
            ("clients = 4", "clients = 5", "group_sizes"),
            ("seed = 3", "seed = 3\nbogus = 1", "bogus"),
        ] {
            let err = RunConfig::from_toml_str(&BASE.replace(from, to)).unwrap_err().to_string();
            assert!(err.contains(field), "{field}: {err}");
        }
    }

    #[test]
    fn variant_labels() {
        let v: Variant = "FedPref+FT".parse().unwrap();
        assert_eq!(v, Variant { algorithm: Algorithm::FedPref, fine_tune: true });
        assert_eq!(v.to_string(), "fedpref+ft");
        assert_eq!("local".parse::<Variant>().unwrap().algorithm, Algorithm::LocalOnly);
        assert!("maffl".parse::<Variant>().is_err());
    }

    #[test]
    fn hashes() {
        let cfg = RunConfig::from_toml_str(BASE).unwrap();
        let other = cfg.with_variant("fedavg".parse().unwrap(), 99);
        assert_ne!(cfg.config_hash(), other.config_hash());
        assert_eq!(cfg.problem_hash(), other.problem_hash());
    }

    #[test]
    fn quadratic_needs_preferences() {
        let text = r#"
[federation]
algorithm = "local"
rounds = 3
clients = 4
local_steps = 3
learning_rate = 0.05
seed = 3

[problem]
kind = "quadratic"
centers = [[0.0, 0.0], [1.0, 1.0]]
"#;
        let err = RunConfig::from_toml_str(text).unwrap_err().to_string();
        assert!(err.contains("preferences"), "{err}");
        let text = format!("{text}\n[preferences]\ndistribution = \"equidistant\"\n");
        let cfg = RunConfig::from_toml_str(&text).unwrap();
        let bank = cfg.build_clients().unwrap();
        assert_eq!(bank.len(), 4);
        assert_eq!(bank.problem.layer_sizes(), &[1, 1]);
    }
}
