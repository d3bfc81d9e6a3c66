//! Solution-set quality indicators for maximisation problems: Pareto
//! extraction, exact hypervolume, sparsity, IGD and cardinality.
//!
//! Sparsity follows the usual definition for multi-objective policy sets:
//! with `P` the Pareto front and `P̃_j` its values on objective `j` sorted,
//!
//! ```text
//! S(P) = 1/(|P|−1) · Σ_j Σ_k (P̃_j(k) − P̃_j(k+1))²
//! ```
//!
//! and `S(P) = 0` when `|P| ≤ 1`.

use std::collections::HashSet;

use log::warn;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::params::ObjectiveVector;

/// Decimal digits kept when deciding whether two solutions are the same.
pub const DEDUP_DIGITS: i32 = 9;

/// Objective vectors of a set of solutions, all of the same length.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct SolutionSet {
    points: Vec<Vec<f64>>,
}

impl SolutionSet {
    pub fn new(points: Vec<Vec<f64>>) -> Result<Self> {
        if let Some(first) = points.first() {
            if first.is_empty() {
                return Err(Error::Shape("solutions need at least one objective".into()));
            }
            if points.iter().any(|p| p.len() != first.len()) {
                return Err(Error::Shape("solutions have different objective counts".into()));
            }
        }
        if points.iter().flatten().any(|x| !x.is_finite()) {
            return Err(Error::Numeric("non-finite objective value in solution set".into()));
        }
        Ok(Self { points })
    }

    pub fn from_objectives(objs: &[ObjectiveVector]) -> Result<Self> {
        Self::new(objs.iter().map(|o| o.values().to_vec()).collect())
    }

    pub fn points(&self) -> &[Vec<f64>] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Objective count, or `None` for an empty set.
    pub fn objectives(&self) -> Option<usize> {
        self.points.first().map(Vec::len)
    }

    /// Union of two sets.
    pub fn merged(&self, other: &SolutionSet) -> Result<SolutionSet> {
        let mut points = self.points.clone();
        points.extend(other.points.iter().cloned());
        Self::new(points)
    }

    fn check_dim(&self, m: usize, what: &str) -> Result<()> {
        match self.objectives() {
            Some(k) if k != m => Err(Error::Shape(format!(
                "{what} has {m} objectives but solutions have {k}"
            ))),
            _ => Ok(()),
        }
    }
}

/// `a` weakly better everywhere and strictly better somewhere.
pub fn dominates(a: &[f64], b: &[f64]) -> bool {
    let mut strictly = false;
    for (x, y) in a.iter().zip(b) {
        if x < y {
            return false;
        }
        if x > y {
            strictly = true;
        }
    }
    strictly
}

fn dedup_key(p: &[f64]) -> Vec<i64> {
    let scale = 10f64.powi(DEDUP_DIGITS);
    p.iter().map(|x| (x * scale).round() as i64).collect()
}

/// Nondominated subset with duplicates (equal after rounding to
/// [`DEDUP_DIGITS`] decimals) collapsed to their first occurrence.
pub fn pareto_front(s: &SolutionSet) -> SolutionSet {
    let mut seen = HashSet::new();
    let unique: Vec<&Vec<f64>> = s.points.iter().filter(|p| seen.insert(dedup_key(p))).collect();
    let points = unique
        .iter()
        .filter(|p| !unique.iter().any(|q| dominates(q, p)))
        .map(|p| (*p).clone())
        .collect();
    SolutionSet { points }
}

/// Number of distinct nondominated solutions.
pub fn cardinality(s: &SolutionSet) -> usize {
    pareto_front(s).len()
}

/// Volume of `∪_i [0, q_i]` for nonnegative `q_i`, by slicing along the
/// last coordinate and recursing on the rest.
fn union_volume(points: &[Vec<f64>], dims: usize) -> f64 {
    if points.is_empty() {
        return 0.0;
    }
    if dims == 1 {
        return points.iter().map(|p| p[0]).fold(0.0, f64::max);
    }
    let last = dims - 1;
    let mut sorted: Vec<&Vec<f64>> = points.iter().collect();
    sorted.sort_by(|a, b| b[last].total_cmp(&a[last]));
    let mut volume = 0.0;
    let mut slice: Vec<Vec<f64>> = Vec::with_capacity(sorted.len());
    for (k, p) in sorted.iter().enumerate() {
        let projected = p[..last].to_vec();
        if !slice.iter().any(|q| q.iter().zip(&projected).all(|(a, b)| a >= b)) {
            slice.retain(|q| !projected.iter().zip(q).all(|(a, b)| a >= b));
            slice.push(projected);
        }
        let floor = sorted.get(k + 1).map_or(0.0, |q| q[last]);
        let height = p[last] - floor;
        if height > 0.0 {
            volume += height * union_volume(&slice, last);
        }
    }
    volume
}

/// Exact hypervolume dominated by `s` relative to reference point `r`.
///
/// Solutions that do not strictly dominate `r` in every objective span no
/// volume and are ignored.
pub fn hypervolume(s: &SolutionSet, r: &[f64]) -> Result<f64> {
    if r.is_empty() {
        return Err(Error::Shape("reference point is empty".into()));
    }
    s.check_dim(r.len(), "reference point")?;
    if r.iter().any(|x| !x.is_finite()) {
        return Err(Error::Numeric("reference point must be finite".into()));
    }
    let front = pareto_front(s);
    let shifted: Vec<Vec<f64>> = front
        .points
        .iter()
        .filter(|p| p.iter().zip(r).all(|(x, y)| x > y))
        .map(|p| p.iter().zip(r).map(|(x, y)| x - y).collect())
        .collect();
    if shifted.len() < front.len() {
        warn!(
            "{} front point(s) do not dominate the reference point and add no volume",
            front.len() - shifted.len()
        );
    }
    Ok(union_volume(&shifted, r.len()))
}

/// Monte Carlo hypervolume estimate with its standard error.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct McEstimate {
    pub value: f64,
    pub std_error: f64,
}

/// Fraction of uniform samples in the box `[r, max(s)]` dominated by `s`,
/// times the box volume.
pub fn hypervolume_mc(s: &SolutionSet, r: &[f64], samples: usize, seed: u64) -> Result<McEstimate> {
    s.check_dim(r.len(), "reference point")?;
    let useful: Vec<&Vec<f64>> = s
        .points
        .iter()
        .filter(|p| p.iter().zip(r).all(|(x, y)| x > y))
        .collect();
    if useful.is_empty() || samples == 0 {
        return Ok(McEstimate {
            value: 0.0,
            std_error: 0.0,
        });
    }
    let upper: Vec<f64> = (0..r.len())
        .map(|j| useful.iter().map(|p| p[j]).fold(f64::NEG_INFINITY, f64::max))
        .collect();
    let box_volume: f64 = upper.iter().zip(r).map(|(u, l)| u - l).product();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut x = vec![0.0; r.len()];
    let mut hits = 0usize;
    for _ in 0..samples {
        for (j, xj) in x.iter_mut().enumerate() {
            *xj = r[j] + rng.random::<f64>() * (upper[j] - r[j]);
        }
        if useful.iter().any(|p| p.iter().zip(&x).all(|(a, b)| a >= b)) {
            hits += 1;
        }
    }
    let frac = hits as f64 / samples as f64;
    Ok(McEstimate {
        value: frac * box_volume,
        std_error: box_volume * (frac * (1.0 - frac) / samples as f64).sqrt(),
    })
}

/// Mean squared gap between consecutive front points, per objective.
pub fn sparsity(s: &SolutionSet) -> f64 {
    let front = pareto_front(s);
    let n = front.len();
    if n <= 1 {
        return 0.0;
    }
    let m = front.points[0].len();
    let mut total = 0.0;
    for j in 0..m {
        let mut values: Vec<f64> = front.points.iter().map(|p| p[j]).collect();
        values.sort_by(f64::total_cmp);
        total += values.windows(2).map(|w| (w[1] - w[0]).powi(2)).sum::<f64>();
    }
    total / (n - 1) as f64
}

fn euclid(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

/// Mean distance from each reference-front point to its nearest solution.
pub fn igd(s: &SolutionSet, reference: &SolutionSet) -> Result<f64> {
    if s.is_empty() || reference.is_empty() {
        return Err(Error::Precondition("IGD needs nonempty solution and reference sets".into()));
    }
    if s.objectives() != reference.objectives() {
        return Err(Error::Shape("solution and reference sets differ in objective count".into()));
    }
    let total: f64 = reference
        .points
        .iter()
        .map(|f| s.points.iter().map(|p| euclid(p, f)).fold(f64::INFINITY, f64::min))
        .sum();
    Ok(total / reference.len() as f64)
}

/// Elementwise minimum of `front` minus `margin` times its range per objective.
pub fn default_reference_point(front: &SolutionSet, margin: f64) -> Result<Vec<f64>> {
    let m = front
        .objectives()
        .ok_or_else(|| Error::Precondition("reference point from an empty front".into()))?;
    Ok((0..m)
        .map(|j| {
            let lo = front.points.iter().map(|p| p[j]).fold(f64::INFINITY, f64::min);
            let hi = front.points.iter().map(|p| p[j]).fold(f64::NEG_INFINITY, f64::max);
            let range = if hi > lo { hi - lo } else { lo.abs().max(1.0) };
            lo - margin * range
        })
        .collect())
}

/// The four indicators for one solution set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsSummary {
    pub hypervolume: f64,
    pub sparsity: f64,
    pub cardinality: usize,
    pub igd: Option<f64>,
    pub reference_point: Vec<f64>,
}

pub fn summarize(
    s: &SolutionSet,
    reference_point: &[f64],
    reference_front: Option<&SolutionSet>,
) -> Result<MetricsSummary> {
    Ok(MetricsSummary {
        hypervolume: hypervolume(s, reference_point)?,
        sparsity: sparsity(s),
        cardinality: cardinality(s),
        igd: reference_front.map(|f| igd(s, f)).transpose()?,
        reference_point: reference_point.to_vec(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn set(points: &[&[f64]]) -> SolutionSet {
        SolutionSet::new(points.iter().map(|p| p.to_vec()).collect()).unwrap()
    }

    #[test]
    fn front_examples() {
        assert_eq!(pareto_front(&set(&[&[1.0, 1.0], &[2.0, 2.0]])), set(&[&[2.0, 2.0]]));
        let three = set(&[&[1.0, 3.0], &[2.0, 2.0], &[3.0, 1.0]]);
        assert_eq!(pareto_front(&three), three);
        assert_eq!(pareto_front(&set(&[&[2.0, 2.0], &[2.0, 2.0]])), set(&[&[2.0, 2.0]]));
    }

    #[test]
    fn cardinality_examples() {
        assert_eq!(cardinality(&set(&[&[1.0, 1.0], &[2.0, 2.0]])), 1);
        assert_eq!(cardinality(&set(&[&[1.0, 3.0], &[2.0, 2.0], &[3.0, 1.0]])), 3);
        assert_eq!(cardinality(&set(&[&[0.5, 0.5] as &[f64]; 7])), 1);
        assert_eq!(cardinality(&set(&[&[0.5, 0.5], &[0.5 + 1e-12, 0.5]])), 1);
    }

    #[test]
    fn hypervolume_examples() {
        assert_eq!(hypervolume(&set(&[&[2.0, 3.0]]), &[0.0, 0.0]).unwrap(), 6.0);
        let three = set(&[&[1.0, 3.0], &[2.0, 2.0], &[3.0, 1.0]]);
        assert_eq!(hypervolume(&three, &[0.0, 0.0]).unwrap(), 6.0);
        assert_eq!(hypervolume(&set(&[&[1.0, 1.0]]), &[1.0, 1.0]).unwrap(), 0.0);
        assert_eq!(hypervolume(&SolutionSet::default(), &[0.0, 0.0]).unwrap(), 0.0);
        assert!(hypervolume(&three, &[0.0]).is_err());
    }

    #[test]
    fn hypervolume_three_d() {
        // two unit-overlapping boxes: 2·2·2 + 2·2·2 − 1·1·2
        let s = set(&[&[2.0, 2.0, 2.0], &[1.0, 3.0, 2.0]]);
        assert!((hypervolume(&s, &[0.0, 0.0, 0.0]).unwrap() - (8.0 + 6.0 - 4.0)).abs() < 1e-12);
    }

    #[test]
    fn mc_empty_is_zero() {
        let est = hypervolume_mc(&SolutionSet::default(), &[0.0, 0.0], 1000, 1).unwrap();
        assert_eq!(est.value, 0.0);
    }

    #[test]
    fn sparsity_examples() {
        assert_eq!(sparsity(&set(&[&[0.3, 0.9]])), 0.0);
        let pair = set(&[&[0.0, 1.0], &[1.0, 0.0]]);
        assert_eq!(sparsity(&pair), 2.0);
        let doubled = set(&[&[0.0, 2.0], &[2.0, 0.0]]);
        assert_eq!(sparsity(&doubled), 4.0 * sparsity(&pair));
    }

    #[test]
    fn igd_examples() {
        let reference = set(&[&[0.0, 1.0], &[1.0, 0.0]]);
        assert_eq!(igd(&reference, &reference).unwrap(), 0.0);
        assert_eq!(igd(&set(&[&[0.0, 0.0]]), &reference).unwrap(), 1.0);
        assert!(igd(&SolutionSet::default(), &reference).is_err());
    }

    #[test]
    fn reference_point_margin() {
        let front = set(&[&[0.0, -4.0], &[-4.0, 0.0]]);
        assert_eq!(default_reference_point(&front, 0.1).unwrap(), vec![-4.4, -4.4]);
    }

    #[test]
    fn rejects_ragged_sets() {
        assert!(SolutionSet::new(vec![vec![1.0], vec![1.0, 2.0]]).is_err());
        assert!(SolutionSet::new(vec![vec![f64::NAN]]).is_err());
    }
}
