#![allow(dead_code)]

use ndarray::{Array1, Array3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use omog::bank::{BankEntry, EntryConfig, ModelBank};
use omog::eval::pretrain_bank;
use omog::nn::{ParamSet, ScoringParams, SourceParams};
use omog::pretrain::{contrastive_gradients, mask_batch, scoring_gradients, DomainCentroid, TrainConfig};
use omog::synthetic::DomainSuiteSpec;
use omog::GraphDataset;

pub fn random_stack(rng: &mut ChaCha8Rng, b: usize, l: usize, d: usize) -> Array3<f64> {
    Array3::from_shape_simple_fn((b, l, d), || rng.gen_range(-1.0..1.0))
}

/// Result of a central-difference gradient check.
#[derive(Debug, Clone, Copy)]
pub struct FdCheck {
    /// Largest `|analytic - numeric| / max(|analytic|, |numeric|, floor)`.
    pub max_rel: f64,
    pub checked: usize,
    /// Coordinates whose `+-h` perturbation flips a ReLU input's sign; the
    /// loss is not differentiable across that interval.
    pub kinked: usize,
}

impl FdCheck {
    pub fn merge(self, other: FdCheck) -> FdCheck {
        FdCheck {
            max_rel: self.max_rel.max(other.max_rel),
            checked: self.checked + other.checked,
            kinked: self.kinked + other.kinked,
        }
    }
}

/// Central differences of step `h` over every scalar of `params`.
/// `relu_signs` returns the sign pattern of every ReLU input the loss
/// passes through; coordinates that change it are skipped and counted.
pub fn fd_check<P: ParamSet<f64>>(
    params: &P,
    analytic: &P,
    h: f64,
    floor: f64,
    loss: impl Fn(&P) -> f64,
    relu_signs: impl Fn(&P) -> Vec<bool>,
) -> FdCheck {
    let grads = analytic.flatten();
    let base = relu_signs(params);
    let mut out = FdCheck {
        max_rel: 0.0,
        checked: 0,
        kinked: 0,
    };
    for (i, &a) in grads.iter().enumerate() {
        let mut plus = params.clone();
        plus.with_scalar_mut(i, |v| *v += h);
        let mut minus = params.clone();
        minus.with_scalar_mut(i, |v| *v -= h);
        if relu_signs(&plus) != base || relu_signs(&minus) != base {
            out.kinked += 1;
            continue;
        }
        let numeric = (loss(&plus) - loss(&minus)) / (2.0 * h);
        let rel = (a - numeric).abs() / a.abs().max(numeric.abs()).max(floor);
        out.max_rel = out.max_rel.max(rel);
        out.checked += 1;
    }
    out
}

fn signs(u: &ndarray::Array2<f64>) -> impl Iterator<Item = bool> + '_ {
    u.iter().map(|&v| v > 0.0)
}

/// Adds `U(-scale, scale)` noise to every scalar so the check runs at a
/// generic point rather than at the structured initialisation.
pub fn jitter<P: ParamSet<f64>>(params: &mut P, rng: &mut ChaCha8Rng, scale: f64) {
    for (_, mut t) in params.tensors_mut() {
        t.mapv_inplace(|v| v + rng.gen_range(-scale..scale));
    }
}

pub const FD_STEP: f64 = 1e-3;
pub const FD_FLOOR: f64 = 1e-3;
pub const JITTER: f64 = 0.5;

/// Finite-difference check of the contrastive gradient at `d=4, alpha=2`,
/// batch 3.
pub fn contrastive_fd(seed: u64, step: f64) -> FdCheck {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut source = SourceParams::<f64>::init(4, 2, 8, seed);
    jitter(&mut source, &mut rng, JITTER);
    let batch = random_stack(&mut rng, 3, 3, 4);
    let (v0, v1) = mask_batch(batch.view(), 0.25, &mut rng);
    let (_, grads) = contrastive_gradients(&source, v0.view(), v1.view()).unwrap();
    fd_check(
        &source,
        &grads,
        step,
        FD_FLOOR,
        |p| contrastive_gradients(p, v0.view(), v1.view()).unwrap().0,
        |p| {
            let (_, t0) = p.forward_with_tape(v0.view()).unwrap();
            let (_, t1) = p.forward_with_tape(v1.view()).unwrap();
            signs(t0.relu_input()).chain(signs(t1.relu_input())).collect()
        },
    )
}

/// Finite-difference check of the scoring gradient at `d=4, alpha=2`,
/// batch 3, with the source model frozen.
pub fn scoring_fd(seed: u64, step: f64) -> FdCheck {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut source = SourceParams::<f64>::init(4, 2, 8, seed);
    let mut scoring = ScoringParams::<f64>::init(4, 2, 4, seed + 1000);
    jitter(&mut source, &mut rng, JITTER);
    jitter(&mut scoring, &mut rng, JITTER);
    let h = random_stack(&mut rng, 3, 3, 4);
    let center = Array1::from_shape_simple_fn(4, || rng.gen_range(-1.0..1.0));
    let (_, grads) = scoring_gradients(&scoring, &source, h.view(), center.view()).unwrap();
    fd_check(
        &scoring,
        &grads,
        step,
        FD_FLOOR,
        |p| scoring_gradients(p, &source, h.view(), center.view()).unwrap().0,
        |p| {
            let (a, t) = p.forward_with_tape(h.view()).unwrap();
            let filtered = &h + &a;
            let (_, tp) = source.forward_with_tape(filtered.view()).unwrap();
            let (_, tn) = source.forward_with_tape(a.view()).unwrap();
            signs(t.relu_input())
                .chain(signs(tp.relu_input()))
                .chain(signs(tn.relu_input()))
                .collect()
        },
    )
}

/// Synthetic benchmark used for the transfer-trend checks: four domains in
/// two families, 400 nodes and 4 classes each, every domain shifted by its
/// own offset so that same-family domains remain distinguishable.
pub fn trend_suite(seed: u64) -> DomainSuiteSpec {
    DomainSuiteSpec {
        seed,
        domain_offset_scale: 0.7,
        ..DomainSuiteSpec::default()
    }
}

pub fn trend_train(seed: u64) -> TrainConfig {
    TrainConfig {
        batch_size: 64,
        epochs: 10,
        lr: 3e-3,
        seed,
        ..TrainConfig::default()
    }
}

pub fn build_suite(seed: u64) -> (Vec<GraphDataset>, ModelBank) {
    let datasets = trend_suite(seed).generate().unwrap();
    let bank = pretrain_bank(&datasets, &trend_train(seed)).unwrap();
    (datasets, bank)
}

/// An untrained but valid bank entry with seeded random parameters.
pub fn toy_entry(name: &str, d: usize, alpha: usize, seed: u64) -> BankEntry {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut source = SourceParams::<f32>::init(d, alpha, 2 * d, seed);
    for (_, mut t) in source.tensors_mut() {
        t.mapv_inplace(|v| v + rng.gen_range(-0.1..0.1));
    }
    BankEntry {
        config: EntryConfig {
            name: name.to_string(),
            d,
            alpha,
            d_ff: 2 * d,
            d_h: d,
            seed,
            created_unix_ms: 0,
        },
        source,
        scoring: ScoringParams::<f32>::init(d, alpha, d, seed + 1),
        centroid: DomainCentroid(Array1::from_shape_simple_fn(d, || rng.gen_range(-1.0..1.0))),
    }
}
