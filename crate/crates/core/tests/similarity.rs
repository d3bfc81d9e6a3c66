mod common;

use fedpref::params::ParamDelta;
use fedpref::similarity::{cos_sim, model_sim, similarity_matrix, top_r, top_r_count};
use proptest::prelude::*;

/// Selection by repeated arg-max, independent of the sort used in `top_r`.
fn naive_top_r(v: &[f64], ratio: f64) -> Vec<f64> {
    let k = top_r_count(v.len(), ratio);
    let mut taken = vec![false; v.len()];
    for _ in 0..k {
        let mut best: Option<usize> = None;
        for i in 0..v.len() {
            if taken[i] {
                continue;
            }
            if best.is_none_or(|b| v[i].abs() > v[b].abs()) {
                best = Some(i);
            }
        }
        taken[best.unwrap()] = true;
    }
    v.iter().zip(&taken).map(|(x, &t)| if t { *x } else { 0.0 }).collect()
}

fn naive_cos(u: &[f64], v: &[f64]) -> f64 {
    let mut uv = 0.0;
    let mut uu = 0.0;
    let mut vv = 0.0;
    for (a, b) in u.iter().zip(v) {
        uv += a * b;
        uu += a * a;
        vv += b * b;
    }
    if uu == 0.0 && vv == 0.0 {
        return 1.0;
    }
    if uu == 0.0 || vv == 0.0 {
        return 0.0;
    }
    (uv / (uu.sqrt() * vv.sqrt())).clamp(-1.0, 1.0)
}

fn naive_model_sim(a: &ParamDelta, b: &ParamDelta, ratio: f64) -> f64 {
    let layers = a.layers().len() as f64;
    a.layers()
        .iter()
        .zip(b.layers())
        .map(|(u, v)| naive_cos(&naive_top_r(u, ratio), &naive_top_r(v, ratio)))
        .sum::<f64>()
        / layers
}

#[test]
fn matches_brute_force_oracle() {
    let mut rng = common::rng(11);
    for _ in 0..500 {
        let layout = common::layout(&mut rng);
        let a = common::delta(&mut rng, &layout);
        let b = common::delta(&mut rng, &layout);
        for ratio in [0.1, 0.25, 0.5, 0.9, 1.0] {
            let got = model_sim(&a, &b, ratio).unwrap();
            assert!((got - naive_model_sim(&a, &b, ratio)).abs() < 1e-12);
        }
    }
}

#[test]
fn full_ratio_is_layer_averaged_cosine() {
    let mut rng = common::rng(12);
    for _ in 0..200 {
        let layout = common::layout(&mut rng);
        let a = common::delta(&mut rng, &layout);
        let b = common::delta(&mut rng, &layout);
        let mut total = 0.0;
        for (u, v) in a.layers().iter().zip(b.layers()) {
            total += cos_sim(u, v).unwrap();
        }
        let plain = (total / layout.len() as f64).clamp(-1.0, 1.0);
        assert_eq!(model_sim(&a, &b, 1.0).unwrap().to_bits(), plain.to_bits());
    }
}

#[test]
fn matrix_entries_match_pairwise_sim() {
    let mut rng = common::rng(13);
    let layout = vec![5, 3, 7];
    let deltas: Vec<ParamDelta> = (0..9).map(|_| common::delta(&mut rng, &layout)).collect();
    let s = similarity_matrix(&deltas, 0.4).unwrap();
    for i in 0..9 {
        assert_eq!(s.get(i, i), 1.0);
        for j in 0..9 {
            if i != j {
                assert_eq!(s.get(i, j), model_sim(&deltas[i], &deltas[j], 0.4).unwrap());
                assert_eq!(s.get(i, j), s.get(j, i));
            }
        }
    }
}

fn layered() -> impl Strategy<Value = (Vec<Vec<f64>>, Vec<Vec<f64>>)> {
    prop::collection::vec(1usize..8, 1..4).prop_flat_map(|sizes| {
        let layer = |d: usize| prop::collection::vec(-5.0f64..5.0, d);
        let side = sizes.iter().map(|&d| layer(d)).collect::<Vec<_>>();
        (side.clone(), side)
    })
}

proptest! {
    #[test]
    fn symmetric_and_bounded((a, b) in layered(), ratio in 0.05f64..=1.0) {
        let a = ParamDelta::new(a).unwrap();
        let b = ParamDelta::new(b).unwrap();
        let ab = model_sim(&a, &b, ratio).unwrap();
        prop_assert_eq!(ab.to_bits(), model_sim(&b, &a, ratio).unwrap().to_bits());
        prop_assert!(ab.abs() <= 1.0 + 1e-12);
    }

    #[test]
    fn positive_scale_invariant((a, b) in layered(), ratio in 0.05f64..=1.0, c in 0.01f64..100.0) {
        let a = ParamDelta::new(a).unwrap();
        let b = ParamDelta::new(b).unwrap();
        let scaled = a.scale(c).unwrap();
        let diff = model_sim(&scaled, &b, ratio).unwrap() - model_sim(&a, &b, ratio).unwrap();
        prop_assert!(diff.abs() < 1e-12);
    }

    #[test]
    fn top_r_idempotent(v in prop::collection::vec(-5.0f64..5.0, 1..30), ratio in 0.05f64..=1.0) {
        let once = top_r(&v, ratio).unwrap();
        prop_assert_eq!(top_r(&once, ratio).unwrap(), once.clone());
        let kept = once.iter().filter(|x| **x != 0.0).count();
        prop_assert!(kept <= top_r_count(v.len(), ratio));
    }
}
