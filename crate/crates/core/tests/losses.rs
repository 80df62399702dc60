mod common;

use ndarray::{array, Array2, Axis};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use common::*;
use omog::fuse::relevance_score;
use omog::nn::pool;
use omog::pretrain::{contrastive_loss, mask_augment, scoring_loss, DIV_EPS};
use omog::propagate::HopStack;

fn cos(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    dot / (na * nb)
}

/// The contrastive objective written out term by term.
fn contrastive_oracle(f0: &Array2<f64>, f1: &Array2<f64>) -> f64 {
    let r = |f: &Array2<f64>, i: usize| f.row(i).to_vec();
    let t = f0.nrows();
    let mut denom = 0.0;
    for m in 0..t {
        for n in 0..t {
            denom += cos(&r(f0, m), &r(f0, n)).exp()
                + cos(&r(f1, m), &r(f1, n)).exp()
                + 2.0 * cos(&r(f0, m), &r(f1, n)).exp();
        }
    }
    -(0..t)
        .map(|i| (2.0 * cos(&r(f0, i), &r(f1, i)).exp() / denom).ln())
        .sum::<f64>()
}

fn embeddings(t: usize, d: usize, seed: u64) -> (Array2<f64>, Array2<f64>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut draw = || Array2::from_shape_simple_fn((t, d), || rng.gen_range(-1.0..1.0));
    (draw(), draw())
}

#[test]
fn contrastive_loss_matches_term_by_term_sum() {
    for (t, seed) in [(2, 0), (3, 1), (5, 2), (8, 3)] {
        let (f0, f1) = embeddings(t, 4, seed);
        let got = contrastive_loss(f0.view(), f1.view()).unwrap();
        let want = contrastive_oracle(&f0, &f1);
        assert!((got - want).abs() < 1e-9, "t={t}: {got} vs {want}");
    }
}

proptest! {
    #[test]
    fn contrastive_loss_ignores_row_order(t in 2usize..7, seed in any::<u64>(), shift in 1usize..6) {
        let (f0, f1) = embeddings(t, 3, seed);
        let perm: Vec<usize> = (0..t).map(|i| (i + shift) % t).collect();
        let a = contrastive_loss(f0.view(), f1.view()).unwrap();
        let b = contrastive_loss(f0.select(Axis(0), &perm).view(), f1.select(Axis(0), &perm).view()).unwrap();
        prop_assert!((a - b).abs() < 1e-9 * a.abs().max(1.0));
    }

    #[test]
    fn contrastive_loss_is_scale_invariant(t in 2usize..6, seed in any::<u64>(), s in 0.1f64..10.0) {
        let (f0, f1) = embeddings(t, 3, seed);
        let a = contrastive_loss(f0.view(), f1.view()).unwrap();
        let b = contrastive_loss((&f0 * s).view(), f1.view()).unwrap();
        prop_assert!((a - b).abs() < 1e-8);
    }
}

#[test]
fn each_dimension_masked_half_the_time() {
    let d = 8;
    let draws = 10_000;
    let h = Array2::<f64>::ones((3, d));
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    let mut counts = vec![0usize; d];
    for _ in 0..draws / 2 {
        let (v0, v1) = mask_augment(h.view(), 0.5, &mut rng);
        for v in [v0, v1] {
            for (c, col) in v.columns().into_iter().enumerate() {
                if col.iter().all(|&x| x == 0.0) {
                    counts[c] += 1;
                }
            }
        }
    }
    let sigma = (draws as f64 * 0.25).sqrt();
    for (c, &k) in counts.iter().enumerate() {
        assert!(
            (k as f64 - draws as f64 / 2.0).abs() <= 3.0 * sigma,
            "dimension {c} masked {k} of {draws} times"
        );
    }
}

#[test]
fn scoring_loss_hand_values() {
    let c = array![0.0f64, 0.0];
    let pos = array![2.0f64, 0.0];
    let neg = array![0.0f64, 4.0];
    let got = scoring_loss(pos.view(), neg.view(), c.view());
    assert!((got - (2.0 + 1.0 / (4.0 + DIV_EPS))).abs() < 1e-12);
    assert!((got - 2.25).abs() < 1e-6);
}

#[test]
fn relevance_recomposes_from_pipeline_steps() {
    let entry = toy_entry("toy", 4, 2, 8);
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let stack = ndarray::Array3::from_shape_simple_fn((5, 3, 4), || rng.gen_range(-1.0f32..1.0));
    let hops = HopStack::from_array(stack.clone()).unwrap();
    let got = relevance_score(&entry, &hops, None).unwrap();

    let mut mean = vec![0.0f64; 4];
    for i in 0..5 {
        let h = stack.slice(ndarray::s![i..i + 1, .., ..]).to_owned();
        let filtered = &h + &entry.scoring.forward(h.view()).unwrap();
        let f = pool(entry.source.forward(filtered.view()).unwrap().view());
        for c in 0..4 {
            mean[c] += f[[0, c]] as f64 / 5.0;
        }
    }
    let centroid: Vec<f64> = entry.centroid.0.iter().map(|&v| v as f64).collect();
    let want = cos(&mean, &centroid);
    assert!((got - want).abs() < 1e-6, "{got} vs {want}");

    let subset = relevance_score(&entry, &hops, Some(&[1, 3])).unwrap();
    assert!(subset.is_finite() && (-1.0..=1.0).contains(&subset));
}
