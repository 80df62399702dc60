//! Numerical checks of the Gaussian model-fusion argument: KL between
//! equal-mean Gaussians, inverse-variance (BMA) weights versus softmax score
//! weights, and a Monte-Carlo estimate of the fused prediction error.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{OmogError, Result};

pub const DEFAULT_SAMPLES: usize = 100_000;
pub const MIN_SAMPLES: usize = 10_000;
const SIM_CHUNK: usize = 4096;

/// Predictive distribution of one model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GaussianDomain {
    pub mean: f64,
    pub variance: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnsembleSpec {
    pub models: Vec<GaussianDomain>,
    /// The true value every model is trying to predict.
    pub target: f64,
    pub samples: usize,
    pub seed: u64,
}

impl EnsembleSpec {
    /// Unbiased models (means equal to `target`) with the given variances.
    pub fn unbiased(target: f64, variances: &[f64], samples: usize, seed: u64) -> Self {
        EnsembleSpec {
            models: variances
                .iter()
                .map(|&variance| GaussianDomain { mean: target, variance })
                .collect(),
            target,
            samples,
            seed,
        }
    }

    pub fn variances(&self) -> Vec<f64> {
        self.models.iter().map(|m| m.variance).collect()
    }

    pub fn validate(&self) -> Result<()> {
        if self.models.len() < 2 {
            return Err(OmogError::InvalidArgument("an ensemble needs at least two models".into()));
        }
        if self.samples < MIN_SAMPLES {
            return Err(OmogError::InvalidArgument(format!(
                "at least {MIN_SAMPLES} samples required, got {}",
                self.samples
            )));
        }
        check_variances(&self.variances())?;
        if !self.target.is_finite() || self.models.iter().any(|m| !m.mean.is_finite()) {
            return Err(OmogError::InvalidArgument("means and target must be finite".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum WeightRule {
    Bma,
    Score,
}

impl WeightRule {
    pub fn weights(self, variances: &[f64]) -> Result<Vec<f64>> {
        match self {
            WeightRule::Bma => bma_weights(variances),
            WeightRule::Score => score_weights(variances),
        }
    }
}

fn check_variances(v: &[f64]) -> Result<()> {
    if v.is_empty() {
        return Err(OmogError::InvalidArgument("no variances given".into()));
    }
    if let Some(bad) = v.iter().find(|&&s| !(s > 0.0) || !s.is_finite()) {
        return Err(OmogError::InvalidArgument(format!("variance must be positive and finite, got {bad}")));
    }
    Ok(())
}

/// `(exact, first_order)` KL divergence from `N(μ, σ_t²)` to `N(μ, σ_i²)`.
pub fn gaussian_kl(sigma2_test: f64, sigma2_i: f64) -> Result<(f64, f64)> {
    check_variances(&[sigma2_test, sigma2_i])?;
    let r = sigma2_i / sigma2_test;
    let exact = 0.5 * (r - 1.0 - r.ln());
    let first_order = 0.5 * (sigma2_i - sigma2_test);
    Ok((exact, first_order))
}

/// Inverse-variance weights.
pub fn bma_weights(variances: &[f64]) -> Result<Vec<f64>> {
    check_variances(variances)?;
    let inv: Vec<f64> = variances.iter().map(|v| 1.0 / v).collect();
    let z: f64 = inv.iter().sum();
    Ok(inv.into_iter().map(|w| w / z).collect())
}

/// `softmax(-σ²/2)`.
pub fn score_weights(variances: &[f64]) -> Result<Vec<f64>> {
    check_variances(variances)?;
    let logits: Vec<f64> = variances.iter().map(|v| -0.5 * v).collect();
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|l| (l - max).exp()).collect();
    let z: f64 = exps.iter().sum();
    Ok(exps.into_iter().map(|e| e / z).collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FusedError {
    pub weights: Vec<f64>,
    pub fused_mse: f64,
    /// Standard error of `fused_mse`.
    pub fused_se: f64,
    pub per_model_mse: Vec<f64>,
    pub per_model_se: Vec<f64>,
    /// `Σ wᵢ² σᵢ² + (Σ wᵢ μᵢ − target)²`.
    pub analytic_fused_mse: f64,
}

impl FusedError {
    pub fn best_model(&self) -> usize {
        self.per_model_mse
            .iter()
            .enumerate()
            .min_by(|a, b| a.1.total_cmp(b.1))
            .map(|(i, _)| i)
            .expect("non-empty ensemble")
    }

    /// `fused_mse - best_mse` measured in combined standard errors.
    pub fn excess_over_best_in_se(&self) -> f64 {
        let b = self.best_model();
        let se = (self.fused_se.powi(2) + self.per_model_se[b].powi(2)).sqrt();
        (self.fused_mse - self.per_model_mse[b]) / se
    }
}

#[derive(Default, Clone)]
struct Moments {
    fused: (f64, f64),
    models: Vec<(f64, f64)>,
}

impl Moments {
    fn merge(mut self, other: Moments) -> Moments {
        self.fused.0 += other.fused.0;
        self.fused.1 += other.fused.1;
        if self.models.is_empty() {
            return Moments { fused: self.fused, models: other.models };
        }
        for (a, b) in self.models.iter_mut().zip(other.models) {
            a.0 += b.0;
            a.1 += b.1;
        }
        self
    }
}

fn mean_and_se(sum: f64, sum_sq: f64, n: usize) -> (f64, f64) {
    let n = n as f64;
    let mean = sum / n;
    let var = (sum_sq / n - mean * mean).max(0.0) * n / (n - 1.0);
    (mean, (var / n).sqrt())
}

/// Monte-Carlo estimate of the squared error of the weighted prediction
/// `Σ wᵢ fᵢ` and of each model alone, with independent Gaussian draws.
/// Deterministic for a given seed regardless of thread count.
pub fn fused_error_sim(spec: &EnsembleSpec, rule: WeightRule) -> Result<FusedError> {
    spec.validate()?;
    let weights = rule.weights(&spec.variances())?;
    let sds: Vec<f64> = spec.models.iter().map(|m| m.variance.sqrt()).collect();
    let m = spec.models.len();
    let chunks = spec.samples.div_ceil(SIM_CHUNK);
    let totals = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
            rng.set_stream(c as u64);
            let count = SIM_CHUNK.min(spec.samples - c * SIM_CHUNK);
            let mut acc = Moments {
                fused: (0.0, 0.0),
                models: vec![(0.0, 0.0); m],
            };
            for _ in 0..count {
                let mut fused = 0.0;
                for (i, model) in spec.models.iter().enumerate() {
                    let z: f64 = rng.sample(StandardNormal);
                    let f = model.mean + sds[i] * z;
                    fused += weights[i] * f;
                    let e = (f - spec.target).powi(2);
                    acc.models[i].0 += e;
                    acc.models[i].1 += e * e;
                }
                let e = (fused - spec.target).powi(2);
                acc.fused.0 += e;
                acc.fused.1 += e * e;
            }
            acc
        })
        .collect::<Vec<_>>()
        .into_iter()
        .fold(Moments::default(), Moments::merge);
    let (fused_mse, fused_se) = mean_and_se(totals.fused.0, totals.fused.1, spec.samples);
    let (per_model_mse, per_model_se) = totals
        .models
        .iter()
        .map(|&(s, s2)| mean_and_se(s, s2, spec.samples))
        .unzip();
    let bias: f64 = weights.iter().zip(&spec.models).map(|(w, m)| w * m.mean).sum::<f64>() - spec.target;
    let analytic_fused_mse =
        weights.iter().zip(&spec.models).map(|(w, m)| w * w * m.variance).sum::<f64>() + bias * bias;
    Ok(FusedError {
        weights,
        fused_mse,
        fused_se,
        per_model_mse,
        per_model_se,
        analytic_fused_mse,
    })
}

/// Indices sorted by decreasing weight, ties by index.
pub fn ranking(weights: &[f64]) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..weights.len()).collect();
    idx.sort_by(|&a, &b| weights[b].total_cmp(&weights[a]).then(a.cmp(&b)));
    idx
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TheoryCheck {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TheoryReport {
    pub samples: usize,
    pub seed: u64,
    pub checks: Vec<TheoryCheck>,
    pub simulations: Vec<(String, FusedError)>,
}

impl TheoryReport {
    pub fn all_passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn table(&self) -> String {
        let width = self.checks.iter().map(|c| c.name.len()).max().unwrap_or(0);
        self.checks
            .iter()
            .map(|c| {
                format!(
                    "{:<width$}  {}  {}\n",
                    c.name,
                    if c.passed { "PASS" } else { "FAIL" },
                    c.detail
                )
            })
            .collect()
    }
}

/// Default variances for the fused-error comparison.
pub const DEFAULT_VARIANCES: [f64; 4] = [1.0, 1.5, 2.0, 3.0];

fn check(name: &str, passed: bool, detail: String) -> TheoryCheck {
    TheoryCheck {
        name: name.to_string(),
        passed,
        detail,
    }
}

/// Runs every check with the given Monte-Carlo budget.
pub fn run_theory_checks(samples: usize, seed: u64) -> Result<TheoryReport> {
    let mut checks = Vec::new();
    let mut simulations = Vec::new();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    let (exact, first) = gaussian_kl(1.0, 2.0)?;
    let want = 0.5 * (1.0 - 2f64.ln());
    checks.push(check(
        "kl_value",
        (exact - want).abs() <= 1e-12 && (first - 0.5).abs() <= 1e-12,
        format!("exact={exact:.15} want={want:.15} first_order={first}"),
    ));

    let mut min_kl = f64::INFINITY;
    for _ in 0..1000 {
        let a = rng.gen_range(1e-3..10.0);
        let b = rng.gen_range(1e-3..10.0);
        min_kl = min_kl.min(gaussian_kl(a, b)?.0);
    }
    let (same, same_first) = gaussian_kl(2.5, 2.5)?;
    checks.push(check(
        "kl_nonnegative_zero_at_equality",
        min_kl >= 0.0 && same == 0.0 && same_first == 0.0,
        format!("min over 1000 pairs={min_kl:.3e} equal-variance={same}"),
    ));

    // exact / gap must shrink linearly with the gap (quadratic vanishing).
    let ratios: Vec<f64> = [1e-1, 1e-2, 1e-3, 1e-4]
        .iter()
        .map(|&g| gaussian_kl(1.0, 1.0 + g).map(|(e, _)| e / g))
        .collect::<Result<_>>()?;
    let shrinking = ratios.windows(2).all(|w| w[1] < 0.2 * w[0]) && ratios[3] < 1e-4;
    checks.push(check(
        "kl_vanishes_quadratically",
        shrinking,
        format!(
            "exact/gap at gaps 1e-1..1e-4: {}",
            ratios.iter().map(|r| format!("{r:.3e}")).collect::<Vec<_>>().join(", ")
        ),
    ));

    let bma = bma_weights(&[1.0, 2.0])?;
    checks.push(check(
        "bma_weights_example",
        (bma[0] - 2.0 / 3.0).abs() <= 1e-12 && (bma[1] - 1.0 / 3.0).abs() <= 1e-12,
        format!("{bma:?}"),
    ));

    let sw = score_weights(&[1.0, 1.0 + 2.0 * 2f64.ln()])?;
    checks.push(check(
        "score_weights_example",
        (sw[0] - 2.0 / 3.0).abs() <= 1e-12 && (sw[1] - 1.0 / 3.0).abs() <= 1e-12,
        format!("{sw:?}"),
    ));

    let mut agree = 0;
    for _ in 0..1000 {
        let m = rng.gen_range(2..=8);
        let v: Vec<f64> = (0..m).map(|_| rng.gen_range(0.05..10.0)).collect();
        if ranking(&bma_weights(&v)?) == ranking(&score_weights(&v)?) {
            agree += 1;
        }
    }
    checks.push(check(
        "ranking_agreement",
        agree == 1000,
        format!("{agree}/1000 random variance vectors"),
    ));

    let mut worst = 0.0f64;
    for _ in 0..1000 {
        let m = rng.gen_range(2..=6);
        let base = rng.gen_range(0.5..4.9);
        let v: Vec<f64> = (0..m).map(|_| base + rng.gen_range(0.0..0.1)).collect();
        let b = bma_weights(&v)?;
        let s = score_weights(&v)?;
        for (x, y) in b.iter().zip(&s) {
            worst = worst.max((x - y).abs());
        }
    }
    checks.push(check(
        "small_gap_weight_agreement",
        worst <= 0.05,
        format!("max |w_bma - w_score| = {worst:.4} over 1000 vectors with variances in [0.5, 5] and spread <= 0.1"),
    ));

    for (i, rule) in [WeightRule::Bma, WeightRule::Score].into_iter().enumerate() {
        let spec = EnsembleSpec::unbiased(0.0, &DEFAULT_VARIANCES, samples, seed.wrapping_add(1 + i as u64));
        let sim = fused_error_sim(&spec, rule)?;
        let b = sim.best_model();
        let excess = sim.excess_over_best_in_se();
        checks.push(check(
            &format!("fused_not_worse_than_best_{}", rule_name(rule)),
            excess <= 3.0,
            format!(
                "fused={:.5} best={:.5} ({:+.2} se)",
                sim.fused_mse, sim.per_model_mse[b], excess
            ),
        ));
        let z = (sim.fused_mse - sim.analytic_fused_mse) / sim.fused_se;
        checks.push(check(
            &format!("fused_variance_matches_closed_form_{}", rule_name(rule)),
            z.abs() <= 3.0,
            format!("simulated={:.5} closed-form={:.5} ({z:+.2} se)", sim.fused_mse, sim.analytic_fused_mse),
        ));
        simulations.push((rule_name(rule).to_string(), sim));
    }

    let spec = EnsembleSpec::unbiased(0.0, &[0.01, 5.0, 5.0], samples, seed.wrapping_add(3));
    let sim = fused_error_sim(&spec, WeightRule::Bma)?;
    let rel = (sim.fused_mse - sim.per_model_mse[0]).abs() / sim.per_model_mse[0];
    checks.push(check(
        "dominant_model_concentration",
        sim.weights[0] > 0.99 && rel <= 0.02,
        format!("w0={:.4} fused={:.5} model0={:.5}", sim.weights[0], sim.fused_mse, sim.per_model_mse[0]),
    ));
    simulations.push(("dominant".to_string(), sim));

    Ok(TheoryReport {
        samples,
        seed,
        checks,
        simulations,
    })
}

fn rule_name(rule: WeightRule) -> &'static str {
    match rule {
        WeightRule::Bma => "bma",
        WeightRule::Score => "score",
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_bad_variances() {
        assert!(gaussian_kl(0.0, 1.0).is_err());
        assert!(bma_weights(&[1.0, -1.0]).is_err());
        assert!(score_weights(&[]).is_err());
    }

    #[test]
    fn uniform_when_equal() {
        assert_eq!(bma_weights(&[2.0; 4]).unwrap(), vec![0.25; 4]);
        assert_eq!(score_weights(&[2.0; 4]).unwrap(), vec![0.25; 4]);
    }

    #[test]
    fn spec_validation() {
        assert!(EnsembleSpec::unbiased(0.0, &[1.0], 20_000, 0).validate().is_err());
        assert!(EnsembleSpec::unbiased(0.0, &[1.0, 2.0], 100, 0).validate().is_err());
    }

    #[test]
    fn simulation_is_seed_deterministic() {
        let spec = EnsembleSpec::unbiased(1.0, &[1.0, 2.0], 20_000, 9);
        let a = fused_error_sim(&spec, WeightRule::Bma).unwrap();
        let b = fused_error_sim(&spec, WeightRule::Bma).unwrap();
        assert_eq!(a, b);
    }
}
