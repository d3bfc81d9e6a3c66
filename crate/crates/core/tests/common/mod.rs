#![allow(dead_code)]

use fedpref::params::{LayeredParams, ParamDelta};
use fedpref::similarity::SimilarityMatrix;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand::SeedableRng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn layout(rng: &mut impl Rng) -> Vec<usize> {
    let layers = rng.random_range(1..=4);
    (0..layers).map(|_| rng.random_range(1..=12)).collect()
}

pub fn params(rng: &mut impl Rng, layout: &[usize]) -> LayeredParams {
    let layers = layout
        .iter()
        .map(|&d| (0..d).map(|_| rng.random_range(-2.0..2.0)).collect())
        .collect();
    LayeredParams::new(layers).unwrap()
}

pub fn delta(rng: &mut impl Rng, layout: &[usize]) -> ParamDelta {
    ParamDelta::new(params(rng, layout).layers().to_vec()).unwrap()
}

/// Random similarity matrix with two planted blocks: `intra` within the
/// blocks and `inter` across, optionally jittered. Returns the matrix and
/// the first block.
pub fn planted_blocks(rng: &mut impl Rng, n: usize, exact: bool) -> (SimilarityMatrix, Vec<usize>) {
    let size = rng.random_range(1..n);
    let mut ids: Vec<usize> = (0..n).collect();
    for i in (1..n).rev() {
        ids.swap(i, rng.random_range(0..=i));
    }
    let mut block: Vec<usize> = ids[..size].to_vec();
    block.sort_unstable();
    let in_block: Vec<bool> = (0..n).map(|i| block.contains(&i)).collect();
    let (intra, inter) = if exact {
        (rng.random_range(0.5..=1.0), rng.random_range(-1.0..=-0.5))
    } else {
        (0.0, 0.0)
    };
    let mut rows = vec![vec![1.0; n]; n];
    for i in 0..n {
        for j in i + 1..n {
            let same = in_block[i] == in_block[j];
            let v = match (exact, same) {
                (true, true) => intra,
                (true, false) => inter,
                (false, true) => rng.random_range(0.5..=1.0),
                (false, false) => rng.random_range(-1.0..=-0.5),
            };
            rows[i][j] = v;
            rows[j][i] = v;
        }
    }
    (SimilarityMatrix::from_rows(rows).unwrap(), block)
}

/// Random maximisation front: `points` vectors in `[0, 1]^m`.
pub fn front(rng: &mut impl Rng, m: usize, points: usize) -> Vec<Vec<f64>> {
    (0..points)
        .map(|_| (0..m).map(|_| rng.random_range(0.0..1.0)).collect())
        .collect()
}
