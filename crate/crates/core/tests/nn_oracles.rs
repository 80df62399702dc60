mod common;

use ndarray::ArrayView2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use common::*;
use omog::nn::{pool, Adam, AdamConfig, ParamSet, ScoringParams, SourceParams};

fn mat(a: ArrayView2<f64>) -> Vec<Vec<f64>> {
    a.outer_iter().map(|r| r.to_vec()).collect()
}

fn matmul(x: &[Vec<f64>], w: &[Vec<f64>]) -> Vec<Vec<f64>> {
    x.iter()
        .map(|row| {
            (0..w[0].len())
                .map(|j| row.iter().zip(w).map(|(a, wr)| a * wr[j]).sum())
                .collect()
        })
        .collect()
}

fn ln(rows: &[Vec<f64>], g: &[f64], b: &[f64]) -> Vec<Vec<f64>> {
    rows.iter()
        .map(|r| {
            let n = r.len() as f64;
            let mean = r.iter().sum::<f64>() / n;
            let var = r.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
            r.iter()
                .enumerate()
                .map(|(i, v)| (v - mean) / (var + 1e-5).sqrt() * g[i] + b[i])
                .collect()
        })
        .collect()
}

/// Straight-line transformer block on one node's `(L, d)` sequence.
fn block_oracle(p: &SourceParams<f64>, x: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let d = x[0].len();
    let q = matmul(x, &mat(p.w_q.view()));
    let k = matmul(x, &mat(p.w_k.view()));
    let v = matmul(x, &mat(p.w_v.view()));
    let mut z1 = x.to_vec();
    for i in 0..x.len() {
        let logits: Vec<f64> = (0..x.len())
            .map(|j| (0..d).map(|c| q[i][c] * k[j][c]).sum::<f64>() / (d as f64).sqrt())
            .collect();
        let mx = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let e: Vec<f64> = logits.iter().map(|l| (l - mx).exp()).collect();
        let s: f64 = e.iter().sum();
        for c in 0..d {
            z1[i][c] += (0..x.len()).map(|j| e[j] / s * v[j][c]).sum::<f64>();
        }
    }
    let h1 = ln(&z1, p.ln1_gain.as_slice().unwrap(), p.ln1_bias.as_slice().unwrap());
    let mut u = matmul(&h1, &mat(p.w1.view()));
    for row in &mut u {
        for (j, val) in row.iter_mut().enumerate() {
            *val = (*val + p.b1[j]).max(0.0);
        }
    }
    let m = matmul(&u, &mat(p.w2.view()));
    let z2: Vec<Vec<f64>> = h1
        .iter()
        .zip(&m)
        .map(|(h, mm)| h.iter().zip(mm).enumerate().map(|(c, (a, b))| a + b + p.b2[c]).collect())
        .collect();
    ln(&z2, p.ln2_gain.as_slice().unwrap(), p.ln2_bias.as_slice().unwrap())
}

#[test]
fn source_block_matches_straight_line_oracle() {
    for seed in 0..5 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut p = SourceParams::<f64>::init(4, 2, 8, seed);
        jitter(&mut p, &mut rng, 0.3);
        let x = random_stack(&mut rng, 3, 3, 4);
        let y = p.forward(x.view()).unwrap();
        for b in 0..3 {
            let rows: Vec<Vec<f64>> = x.index_axis(ndarray::Axis(0), b).outer_iter().map(|r| r.to_vec()).collect();
            let want = block_oracle(&p, &rows);
            for (l, row) in want.iter().enumerate() {
                for (c, w) in row.iter().enumerate() {
                    assert!((y[[b, l, c]] - w).abs() < 1e-5, "seed {seed} [{b},{l},{c}]");
                }
            }
        }
    }
}

#[test]
fn scoring_mask_matches_straight_line_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut p = ScoringParams::<f64>::init(3, 1, 5, 2);
    jitter(&mut p, &mut rng, 0.3);
    let h = random_stack(&mut rng, 4, 2, 3);
    let a = p.forward(h.view()).unwrap();
    for b in 0..4 {
        let flat: Vec<f64> = h.index_axis(ndarray::Axis(0), b).iter().copied().collect();
        let hidden: Vec<f64> = (0..5)
            .map(|j| (flat.iter().enumerate().map(|(i, v)| v * p.v1[[i, j]]).sum::<f64>() + p.c1[j]).max(0.0))
            .collect();
        for o in 0..6 {
            let want = hidden.iter().enumerate().map(|(j, r)| r * p.v2[[j, o]]).sum::<f64>() + p.c2[o];
            assert!((a[[b, o / 3, o % 3]] - want).abs() < 1e-12);
        }
    }
}

#[test]
fn batched_forward_equals_per_node_forward() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let p = SourceParams::<f64>::init(5, 3, 10, 4);
    let x = random_stack(&mut rng, 6, 4, 5);
    let all = pool(p.forward(x.view()).unwrap().view());
    for i in 0..6 {
        let one = x.slice(ndarray::s![i..i + 1, .., ..]).to_owned();
        let y = pool(p.forward(one.view()).unwrap().view());
        for c in 0..5 {
            assert!((all[[i, c]] - y[[0, c]]).abs() < 1e-12);
        }
    }
}

#[test]
fn contrastive_gradient_agrees_with_fine_differences() {
    for seed in 0..5 {
        let r = contrastive_fd(seed, 1e-5);
        assert!(r.max_rel <= 1e-4, "seed {seed}: {r:?}");
        assert!(r.checked > r.kinked);
    }
}

#[test]
fn scoring_gradient_agrees_with_fine_differences() {
    for seed in 0..5 {
        let r = scoring_fd(seed, 1e-5);
        assert!(r.max_rel <= 1e-4, "seed {seed}: {r:?}");
        assert!(r.checked > r.kinked);
    }
}

#[test]
fn adam_matches_hand_rolled_update() {
    let cfg = AdamConfig { lr: 0.05, ..AdamConfig::default() };
    let mut p = SourceParams::<f64>::init(2, 0, 2, 9);
    let mut opt = Adam::new(cfg);
    let flat0 = p.flatten();
    let (mut m, mut v) = (vec![0.0; flat0.len()], vec![0.0; flat0.len()]);
    let mut want = flat0.clone();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for t in 1..=4 {
        let g: Vec<f64> = (0..flat0.len()).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let mut grads = p.clone();
        for (i, gi) in g.iter().enumerate() {
            grads.with_scalar_mut(i, |x| *x = *gi);
        }
        opt.step(&mut p, &grads).unwrap();
        for i in 0..g.len() {
            m[i] = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * g[i];
            v[i] = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * g[i] * g[i];
            let mh = m[i] / (1.0 - cfg.beta1.powi(t));
            let vh = v[i] / (1.0 - cfg.beta2.powi(t));
            want[i] -= cfg.lr * mh / (vh.sqrt() + cfg.eps);
        }
    }
    for (a, b) in p.flatten().iter().zip(&want) {
        assert!((a - b).abs() < 1e-12);
    }
}
