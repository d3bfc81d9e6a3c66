//! Simulator for preference-aware personalised federated learning on
//! multi-objective problems.
//!
//! Clients share a problem with several objectives and each holds its own
//! preference over them. The crate provides the server algorithms
//! ([`federation`]), the building blocks they use ([`similarity`],
//! [`aggregation`], [`clustering`]), synthetic problems with known optima
//! ([`problems`]), solution-set quality indicators ([`metrics`]) and a
//! runner that writes reproducible run directories ([`experiment`]).

pub mod aggregation;
pub mod clustering;
pub mod config;
pub mod error;
pub mod experiment;
pub mod federation;
pub mod metrics;
pub mod params;
pub mod problems;
pub mod seeds;
pub mod similarity;

pub use config::{Algorithm, FederationConfig, RunConfig, Variant};
pub use error::{Error, Result};
pub use federation::{FederationOutcome, RoundReport};
pub use metrics::SolutionSet;
pub use params::{LayeredParams, ObjectiveVector, ParamDelta, PreferenceVector};
pub use problems::{ClientBank, QuadraticProblem};
pub use similarity::SimilarityMatrix;
