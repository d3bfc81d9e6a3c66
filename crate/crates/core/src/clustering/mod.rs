//! Spectral bipartition of a cluster from its similarity matrix.
//!
//! Similarities in `[-1, 1]` become affinities `A = (S + 1) / 2`. The split
//! is the sign pattern of the Fiedler vector of the symmetric normalised
//! Laplacian `I − D^{-1/2} A D^{-1/2}`. An exhaustive normalised-cut search
//! over all proper bipartitions is provided as a reference for small `n`.

pub mod eigen;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::similarity::SimilarityMatrix;

pub use eigen::{eigen_smallest_two, jacobi_eigen, SymMatrix};

/// Largest cluster the exhaustive search accepts.
pub const BRUTE_FORCE_MAX: usize = 12;

/// Fiedler entries below this fraction of the largest magnitude are treated
/// as zero and assigned by the balance rule.
const ZERO_ENTRY_TOL: f64 = 1e-9;

/// A proper split of a member set. Both sides are sorted; `left` holds the
/// smallest id.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Bipartition {
    pub left: Vec<usize>,
    pub right: Vec<usize>,
}

impl Bipartition {
    pub fn new(mut a: Vec<usize>, mut b: Vec<usize>) -> Result<Self> {
        if a.is_empty() || b.is_empty() {
            return Err(Error::Precondition("bipartition side is empty".into()));
        }
        a.sort_unstable();
        b.sort_unstable();
        if a.iter().any(|x| b.binary_search(x).is_ok()) {
            return Err(Error::Precondition("bipartition sides overlap".into()));
        }
        if a[0] < b[0] {
            Ok(Self { left: a, right: b })
        } else {
            Ok(Self { left: b, right: a })
        }
    }

    fn from_local(members: &[usize], left_local: &[usize], right_local: &[usize]) -> Result<Self> {
        Self::new(
            left_local.iter().map(|&i| members[i]).collect(),
            right_local.iter().map(|&i| members[i]).collect(),
        )
    }
}

/// `A = (S + 1) / 2` as dense rows.
pub fn affinity(s: &SimilarityMatrix) -> Vec<Vec<f64>> {
    s.to_rows()
        .into_iter()
        .map(|row| row.into_iter().map(|x| (x + 1.0) / 2.0).collect())
        .collect()
}

/// Normalised cut `cut/vol(L) + cut/vol(R)` of a split given by a side mask.
pub fn normalized_cut(aff: &[Vec<f64>], in_left: &[bool]) -> f64 {
    let n = aff.len();
    let mut cut = 0.0;
    let mut vol_l = 0.0;
    let mut vol_r = 0.0;
    for i in 0..n {
        let deg: f64 = aff[i].iter().sum();
        if in_left[i] {
            vol_l += deg;
        } else {
            vol_r += deg;
        }
        for j in 0..n {
            if in_left[i] && !in_left[j] {
                cut += aff[i][j];
            }
        }
    }
    let term = |vol: f64| if vol > 0.0 { cut / vol } else { f64::INFINITY };
    term(vol_l) + term(vol_r)
}

fn check_members(members: &[usize], s: &SimilarityMatrix) -> Result<()> {
    if members.len() < 2 {
        return Err(Error::Precondition(format!(
            "cannot bipartition a cluster of {} member(s)",
            members.len()
        )));
    }
    if s.len() != members.len() {
        return Err(Error::Shape(format!(
            "{} members but a {}x{} similarity matrix",
            members.len(),
            s.len(),
            s.len()
        )));
    }
    Ok(())
}

/// Spectral bipartition of `members` (in matrix order) from similarities `s`.
///
/// Entries of the Fiedler vector that are numerically zero go, in index
/// order, to the currently smaller side (the side holding the lowest index on
/// equal sizes). If every entry has the same sign, the member with the lowest
/// mean affinity to the others is split off alone.
pub fn spectral_bipartition(members: &[usize], s: &SimilarityMatrix) -> Result<Bipartition> {
    check_members(members, s)?;
    let n = members.len();
    if n == 2 {
        return Bipartition::new(vec![members[0]], vec![members[1]]);
    }
    let aff = affinity(s);
    let inv_sqrt_deg: Vec<f64> = aff
        .iter()
        .map(|row| 1.0 / row.iter().sum::<f64>().sqrt())
        .collect();
    let lap: Vec<Vec<f64>> = (0..n)
        .map(|i| {
            (0..n)
                .map(|j| {
                    let norm = aff[i][j] * inv_sqrt_deg[i] * inv_sqrt_deg[j];
                    if i == j {
                        1.0 - norm
                    } else {
                        -norm
                    }
                })
                .collect()
        })
        .collect();
    // symmetrise exactly; the products above may differ in the last bit
    let lap: Vec<Vec<f64>> = (0..n)
        .map(|i| (0..n).map(|j| 0.5 * (lap[i][j] + lap[j][i])).collect())
        .collect();
    let (_, [_, fiedler]) = eigen_smallest_two(&SymMatrix::from_rows(&lap)?)?;

    let max_abs = fiedler.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    let tol = ZERO_ENTRY_TOL * max_abs;
    let mut pos = Vec::new();
    let mut neg = Vec::new();
    let mut zero = Vec::new();
    for (i, &x) in fiedler.iter().enumerate() {
        if x > tol {
            pos.push(i);
        } else if x < -tol {
            neg.push(i);
        } else {
            zero.push(i);
        }
    }
    for i in zero {
        let to_pos = match pos.len().cmp(&neg.len()) {
            std::cmp::Ordering::Less => true,
            std::cmp::Ordering::Greater => false,
            std::cmp::Ordering::Equal => match (pos.first(), neg.first()) {
                (Some(p), Some(q)) => p < q,
                (None, Some(_)) => true,
                _ => false,
            },
        };
        if to_pos {
            pos.push(i);
        } else {
            neg.push(i);
        }
    }
    if pos.is_empty() || neg.is_empty() {
        let loner = lowest_mean_affinity(&aff);
        let rest: Vec<usize> = (0..n).filter(|&i| i != loner).collect();
        return Bipartition::from_local(members, &[loner], &rest);
    }
    pos.sort_unstable();
    neg.sort_unstable();
    Bipartition::from_local(members, &pos, &neg)
}

fn lowest_mean_affinity(aff: &[Vec<f64>]) -> usize {
    let n = aff.len();
    let mut best = 0;
    let mut best_val = f64::INFINITY;
    for (i, row) in aff.iter().enumerate() {
        let mean = row
            .iter()
            .enumerate()
            .filter(|&(j, _)| j != i)
            .map(|(_, a)| a)
            .sum::<f64>()
            / (n - 1) as f64;
        if mean < best_val {
            best = i;
            best_val = mean;
        }
    }
    best
}

/// Exhaustive minimum normalised cut over all proper bipartitions of
/// `0..n`, `2 ≤ n ≤ 12`. Near-ties (1e-12) go to the lexicographically
/// smallest left set.
pub fn brute_force_min_cut(s: &SimilarityMatrix) -> Result<Bipartition> {
    let n = s.len();
    if !(2..=BRUTE_FORCE_MAX).contains(&n) {
        return Err(Error::Precondition(format!(
            "exhaustive bipartition supports 2..={BRUTE_FORCE_MAX} members, got {n}"
        )));
    }
    let aff = affinity(s);
    let mut best: Option<(f64, Vec<usize>)> = None;
    // element 0 always on the left; every proper split is visited once
    for mask in 0u32..(1 << (n - 1)) {
        let mut in_left = vec![false; n];
        in_left[0] = true;
        for (k, slot) in in_left.iter_mut().enumerate().skip(1) {
            *slot = mask & (1 << (k - 1)) != 0;
        }
        if in_left.iter().all(|&x| x) {
            continue;
        }
        let value = normalized_cut(&aff, &in_left);
        let left: Vec<usize> = (0..n).filter(|&i| in_left[i]).collect();
        let better = match &best {
            None => true,
            Some((v, l)) => value < v - 1e-12 || ((value - v).abs() <= 1e-12 && left < *l),
        };
        if better {
            best = Some((value, left));
        }
    }
    let (_, left) = best.expect("n >= 2 has a proper split");
    let right: Vec<usize> = (0..n).filter(|i| !left.contains(i)).collect();
    Bipartition::new(left, right)
}
