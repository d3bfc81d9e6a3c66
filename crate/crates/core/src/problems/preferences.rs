use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Gamma, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::params::PreferenceVector;

/// How client preference vectors are drawn.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "distribution", rename_all = "snake_case")]
pub enum PrefDistribution {
    /// Symmetric Dirichlet with concentration `alpha`.
    Dirichlet { alpha: f64 },
    /// Each weight from `Normal(1/m, sigma)`, clamped at 0, renormalised.
    Gaussian { sigma: f64 },
    /// Points of a regular simplex lattice.
    Equidistant,
}

/// All compositions of `divisions` into `m` nonnegative parts, scaled to the
/// simplex, in lexicographic order of the part counts.
pub fn simplex_lattice(m: usize, divisions: usize) -> Vec<Vec<f64>> {
    fn rec(m: usize, left: usize, prefix: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if prefix.len() == m - 1 {
            prefix.push(left);
            out.push(prefix.clone());
            prefix.pop();
            return;
        }
        for a in 0..=left {
            prefix.push(a);
            rec(m, left - a, prefix, out);
            prefix.pop();
        }
    }
    if m == 0 {
        return Vec::new();
    }
    let mut counts = Vec::new();
    rec(m, divisions, &mut Vec::with_capacity(m), &mut counts);
    let h = divisions.max(1) as f64;
    counts
        .into_iter()
        .map(|c| c.into_iter().map(|a| a as f64 / h).collect())
        .collect()
}

fn lattice_size(m: usize, divisions: usize) -> u128 {
    // C(divisions + m - 1, m - 1)
    let mut c: u128 = 1;
    for k in 1..m as u128 {
        c = c * (divisions as u128 + k) / k;
    }
    c
}

/// `n` equally spaced preference vectors.
///
/// For `m = 2` this is `w_1 = i/(n−1)`. For `m > 2` the finest lattice with
/// at least `n` points is used; when it has more than `n` points, `n` of them
/// are taken at evenly spaced positions of the lexicographic order
/// (always including both ends).
fn equidistant(m: usize, n: usize) -> Result<Vec<PreferenceVector>> {
    if n == 1 {
        return Ok(vec![PreferenceVector::new(vec![1.0; m])?]);
    }
    let mut h = 1;
    while lattice_size(m, h) < n as u128 {
        h += 1;
    }
    let lattice = simplex_lattice(m, h);
    let count = lattice.len();
    (0..n)
        .map(|k| {
            let idx = if count == n {
                k
            } else {
                ((k as f64) * (count - 1) as f64 / (n - 1) as f64).round() as usize
            };
            PreferenceVector::new(lattice[idx].clone())
        })
        .collect()
}

/// Draws `n` preference vectors over `m` objectives, deterministic in `seed`.
pub fn generate_preferences(
    dist: &PrefDistribution,
    m: usize,
    n: usize,
    seed: u64,
) -> Result<Vec<PreferenceVector>> {
    if n == 0 {
        return Err(Error::Precondition("need at least one client".into()));
    }
    if m < 2 {
        return Err(Error::Precondition(format!("need at least two objectives, got {m}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    match *dist {
        PrefDistribution::Equidistant => equidistant(m, n),
        PrefDistribution::Dirichlet { alpha } => {
            let gamma = Gamma::new(alpha, 1.0)
                .map_err(|e| Error::Config(format!("dirichlet alpha {alpha}: {e}")))?;
            (0..n)
                .map(|_| loop {
                    let draw: Vec<f64> = (0..m).map(|_| gamma.sample(&mut rng)).collect();
                    if draw.iter().sum::<f64>() > 0.0 {
                        break PreferenceVector::new(draw);
                    }
                })
                .collect()
        }
        PrefDistribution::Gaussian { sigma } => {
            let normal = Normal::new(1.0 / m as f64, sigma)
                .map_err(|e| Error::Config(format!("gaussian sigma {sigma}: {e}")))?;
            (0..n)
                .map(|_| loop {
                    let draw: Vec<f64> = (0..m).map(|_| normal.sample(&mut rng).max(0.0)).collect();
                    if draw.iter().sum::<f64>() > 0.0 {
                        break PreferenceVector::new(draw);
                    }
                })
                .collect()
        }
    }
}

/// Uniform draw on the simplex, used for random test fixtures.
pub fn uniform_simplex(m: usize, rng: &mut impl Rng) -> Result<PreferenceVector> {
    let draw: Vec<f64> = (0..m).map(|_| -rng.random::<f64>().max(1e-300).ln()).collect();
    PreferenceVector::new(draw)
}
