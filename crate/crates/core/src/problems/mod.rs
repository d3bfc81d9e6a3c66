//! Synthetic multi-objective client problems with closed-form optima,
//! preference generators and the local gradient trainer.

pub mod preferences;
mod quadratic;
mod scenario;
pub mod trainer;

pub use preferences::{generate_preferences, simplex_lattice, PrefDistribution};
pub use quadratic::QuadraticProblem;
pub use scenario::{ClientBank, ConflictingGroups};
pub use trainer::{local_train, LocalObjective, Prox, TrainSettings};
