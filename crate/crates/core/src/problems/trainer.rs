use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::params::{LayeredParams, PreferenceVector};

use super::QuadraticProblem;

/// FedProx-style pull towards an anchor model with strength `mu`.
#[derive(Debug, Clone, Copy)]
pub struct Prox<'a> {
    pub mu: f64,
    pub anchor: &'a LayeredParams,
}

/// Local optimiser settings.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainSettings {
    pub steps: usize,
    pub learning_rate: f64,
    /// Std-dev of Gaussian noise added to every gradient coordinate; 0 disables.
    pub gradient_noise: f64,
}

/// What a client maximises locally: its scalarised objective, minus
/// `(μ/2)‖θ − θ_anchor‖²` when a proximal term is present.
#[derive(Debug, Clone, Copy)]
pub struct LocalObjective<'a> {
    pub problem: &'a QuadraticProblem,
    pub preference: &'a PreferenceVector,
    pub prox: Option<Prox<'a>>,
}

impl LocalObjective<'_> {
    pub fn value(&self, theta: &[f64]) -> Result<f64> {
        let mut v = self.problem.scalarised_value_flat(self.preference, theta)?;
        if let Some(p) = self.prox {
            let sq: f64 = theta
                .iter()
                .zip(p.anchor.flatten())
                .map(|(t, a)| (t - a) * (t - a))
                .sum();
            v -= 0.5 * p.mu * sq;
        }
        Ok(v)
    }

    pub fn gradient(&self, theta: &[f64]) -> Result<Vec<f64>> {
        let mut g = self.problem.gradient_flat(self.preference, theta)?;
        if let Some(p) = self.prox {
            for (gi, (t, a)) in g.iter_mut().zip(theta.iter().zip(p.anchor.flatten())) {
                *gi -= p.mu * (t - a);
            }
        }
        Ok(g)
    }
}

/// Gradient ascent on the client's scalarised objective starting at `theta0`.
///
/// With a proximal term each step is explicit in the objective and implicit
/// in the penalty:
///
/// ```text
/// θ ← (θ + η·∇f(θ) + η·μ·θ_anchor) / (1 + η·μ)
/// ```
///
/// which is stable for any `μ ≥ 0` and reduces to the plain step, bit for
/// bit, at `μ = 0`. Gradient noise, if enabled, is drawn from a generator
/// seeded by `seed` alone.
pub fn local_train(
    theta0: &LayeredParams,
    problem: &QuadraticProblem,
    preference: &PreferenceVector,
    settings: &TrainSettings,
    prox: Option<Prox<'_>>,
    seed: u64,
) -> Result<LayeredParams> {
    if settings.steps == 0 {
        return Err(Error::Precondition("local training needs at least one step".into()));
    }
    if !(settings.learning_rate > 0.0 && settings.learning_rate.is_finite()) {
        return Err(Error::Precondition(format!(
            "learning rate {} must be positive",
            settings.learning_rate
        )));
    }
    let lr = settings.learning_rate;
    let mut theta = theta0.flatten();
    let anchor = prox.map(|p| (p.mu, p.anchor.flatten()));
    let mut rng = (settings.gradient_noise > 0.0).then(|| ChaCha8Rng::seed_from_u64(seed));

    for step in 0..settings.steps {
        let mut g = problem.gradient_flat(preference, &theta)?;
        if let Some(rng) = rng.as_mut() {
            for gi in &mut g {
                let z: f64 = StandardNormal.sample(rng);
                *gi += settings.gradient_noise * z;
            }
        }
        for (t, gi) in theta.iter_mut().zip(&g) {
            *t += lr * gi;
        }
        if let Some((mu, a)) = &anchor {
            let denom = 1.0 + lr * mu;
            for (t, ai) in theta.iter_mut().zip(a) {
                *t = (*t + lr * mu * ai) / denom;
            }
        }
        if theta.iter().any(|t| !t.is_finite()) {
            return Err(Error::Divergence { step });
        }
    }
    LayeredParams::from_flat(&theta, &theta0.layer_sizes())
}
