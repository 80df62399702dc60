//! Metrics and experiment orchestration: leave-one-out transfer over a set
//! of datasets, strategy and `k` sweeps, ablations, and their reports.

mod fold;
mod metrics;
mod plan;

use std::fs;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bank::{bank_add, bank_load, ModelBank};
use crate::dataset::{load_dataset, write_json, GraphDataset};
use crate::error::{OmogError, Result};
use crate::fuse::Strategy;
use crate::pretrain::{pretrain_entry, TrainConfig};

pub use fold::{sample_negatives, split_edges, support_set, FoldContext, FoldResult, MIN_NEGATIVES};
pub use metrics::{accuracy, hits_at_k, HITS_K};
pub use plan::{seed_from_env, Ablation, ExperimentPlan, Mode, Task, SEED_ENV};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetSummary {
    pub dataset: String,
    pub mean: f64,
    /// Sample standard deviation over seeds (0 for a single seed).
    pub std: f64,
    pub runs: usize,
}

/// Per-fold results with per-dataset and overall means.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub metric: String,
    pub k: usize,
    pub strategy: Strategy,
    pub ablation: Ablation,
    pub rows: Vec<FoldResult>,
    pub per_dataset: Vec<DatasetSummary>,
    pub mean: f64,
}

/// One flattened CSV line.
#[derive(Debug, Serialize)]
struct CsvRow<'a> {
    dataset: &'a str,
    seed: u64,
    k: usize,
    strategy: String,
    ablation: String,
    metric: &'a str,
    value: f64,
    selected: String,
}

impl MetricReport {
    pub fn from_rows(k: usize, strategy: Strategy, ablation: Ablation, rows: Vec<FoldResult>) -> Result<Self> {
        let metric = rows
            .first()
            .map(|r| r.metric.clone())
            .ok_or_else(|| OmogError::InvalidArgument("report without rows".into()))?;
        let mut names: Vec<&str> = Vec::new();
        for r in &rows {
            if !names.contains(&r.dataset.as_str()) {
                names.push(&r.dataset);
            }
        }
        let per_dataset: Vec<DatasetSummary> = names
            .iter()
            .map(|&name| {
                let vals: Vec<f64> = rows.iter().filter(|r| r.dataset == name).map(|r| r.value).collect();
                let (mean, std) = mean_std(&vals);
                DatasetSummary {
                    dataset: name.to_string(),
                    mean,
                    std,
                    runs: vals.len(),
                }
            })
            .collect();
        let mean = per_dataset.iter().map(|s| s.mean).sum::<f64>() / per_dataset.len() as f64;
        Ok(MetricReport {
            metric,
            k,
            strategy,
            ablation,
            rows,
            per_dataset,
            mean,
        })
    }

    /// Mean over datasets of the runs with this seed.
    pub fn mean_for_seed(&self, seed: u64) -> f64 {
        let vals: Vec<f64> = self.rows.iter().filter(|r| r.seed == seed).map(|r| r.value).collect();
        vals.iter().sum::<f64>() / vals.len() as f64
    }

    pub fn write_json(&self, path: &Path) -> Result<()> {
        write_json(path, self)
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        write_csv(path, std::slice::from_ref(self))
    }
}

fn mean_std(v: &[f64]) -> (f64, f64) {
    let mean = v.iter().sum::<f64>() / v.len() as f64;
    if v.len() < 2 {
        return (mean, 0.0);
    }
    let var = v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (v.len() - 1) as f64;
    (mean, var.sqrt())
}

/// All rows of `reports` as one CSV table.
pub fn write_csv(path: &Path, reports: &[MetricReport]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_err(path, e))?;
    for report in reports {
        for r in &report.rows {
            w.serialize(CsvRow {
                dataset: &r.dataset,
                seed: r.seed,
                k: r.k,
                strategy: r.strategy.to_string(),
                ablation: r.ablation.to_string(),
                metric: &r.metric,
                value: r.value,
                selected: r
                    .selected
                    .iter()
                    .map(|(n, w)| format!("{n}:{w:.6}"))
                    .collect::<Vec<_>>()
                    .join(";"),
            })
            .map_err(|e| csv_err(path, e))?;
        }
    }
    w.flush().map_err(|e| OmogError::io(path, e))
}

fn csv_err(path: &Path, e: csv::Error) -> OmogError {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => OmogError::io(path, io),
        other => OmogError::InvalidArgument(format!("{}: csv: {other:?}", path.display())),
    }
}

/// A `(k, strategy)` configuration evaluated by [`sweep_in_memory`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub k: usize,
    pub strategy: Strategy,
}

/// The bank used when `held_out` is the test graph: every other dataset
/// in the plan. The held-out name is checked to be absent.
pub fn fold_bank(bank: &ModelBank, names: &[&str], held_out: &str) -> Result<ModelBank> {
    let others: Vec<&str> = names.iter().copied().filter(|n| *n != held_out).collect();
    let view = bank.subset(&others)?;
    assert!(
        view.get(held_out).is_none(),
        "leakage: `{held_out}` present in its own fold bank"
    );
    Ok(view)
}

fn check_datasets(datasets: &[GraphDataset]) -> Result<Vec<&str>> {
    if datasets.len() < 2 {
        return Err(OmogError::Config("leave-one-out needs at least two datasets".into()));
    }
    let mut names: Vec<&str> = datasets.iter().map(|d| d.name.as_str()).collect();
    names.sort_unstable();
    if let Some(w) = names.windows(2).find(|w| w[0] == w[1]) {
        return Err(OmogError::NameCollision(w[0].to_string()));
    }
    Ok(datasets.iter().map(|d| d.name.as_str()).collect())
}

/// Runs every point of `points` on every (held-out dataset, seed) fold,
/// sharing hop stacks and relevance scores across points. Rows of each
/// report are ordered by dataset (plan order) then seed.
pub fn sweep_in_memory(
    datasets: &[GraphDataset],
    bank: &ModelBank,
    plan: &ExperimentPlan,
    points: &[SweepPoint],
) -> Result<Vec<MetricReport>> {
    plan.validate()?;
    if points.is_empty() {
        return Err(OmogError::InvalidArgument("sweep without configurations".into()));
    }
    let names = check_datasets(datasets)?;
    let banks = datasets
        .iter()
        .map(|d| fold_bank(bank, &names, &d.name))
        .collect::<Result<Vec<_>>>()?;
    let jobs: Vec<(usize, u64)> = (0..datasets.len())
        .flat_map(|i| plan.seeds.iter().map(move |&s| (i, s)))
        .collect();
    let per_job = jobs
        .par_iter()
        .map(|&(i, seed)| {
            let ctx = FoldContext::prepare(&banks[i], &datasets[i], plan, seed)?;
            points
                .iter()
                .map(|p| ctx.evaluate(p.k, p.strategy))
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<Vec<_>>>()?;
    points
        .iter()
        .enumerate()
        .map(|(pi, p)| {
            let rows = per_job.iter().map(|r| r[pi].clone()).collect();
            MetricReport::from_rows(p.k, p.strategy, plan.ablation, rows)
        })
        .collect()
}

/// Leave-one-out evaluation of `plan.k` / `plan.strategy` with every
/// dataset held out in turn.
pub fn leave_one_out_in_memory(datasets: &[GraphDataset], bank: &ModelBank, plan: &ExperimentPlan) -> Result<MetricReport> {
    let point = SweepPoint {
        k: plan.k,
        strategy: plan.strategy,
    };
    Ok(sweep_in_memory(datasets, bank, plan, &[point])?.remove(0))
}

/// Pretrains one entry per dataset in parallel.
pub fn pretrain_bank(datasets: &[GraphDataset], config: &TrainConfig) -> Result<ModelBank> {
    let entries = datasets
        .par_iter()
        .map(|d| pretrain_entry(d, config).map(|o| o.entry))
        .collect::<Result<Vec<_>>>()?;
    ModelBank::new(entries)
}

/// Loads the plan's datasets and the bank at `bank_root`, pretraining
/// missing entries when the plan allows it.
pub fn prepare_plan(plan: &ExperimentPlan, bank_root: &Path) -> Result<(Vec<GraphDataset>, ModelBank)> {
    plan.validate()?;
    let datasets = plan
        .datasets
        .iter()
        .map(|p| load_dataset(p))
        .collect::<Result<Vec<_>>>()?;
    fs::create_dir_all(bank_root).map_err(|e| OmogError::io(bank_root, e))?;
    let mut bank = bank_load(bank_root)?;
    for ds in &datasets {
        if bank.get(&ds.name).is_some() {
            continue;
        }
        if !plan.pretrain_missing {
            return Err(OmogError::MissingEntry(ds.name.clone()));
        }
        log::info!("pretraining missing bank entry `{}`", ds.name);
        let outcome = pretrain_entry(ds, &plan.train)?;
        bank = bank_add(bank_root, &outcome.entry)?;
    }
    Ok((datasets, bank))
}

pub fn leave_one_out(plan: &ExperimentPlan, bank_root: &Path) -> Result<MetricReport> {
    let (datasets, bank) = prepare_plan(plan, bank_root)?;
    leave_one_out_in_memory(&datasets, &bank, plan)
}

pub fn sweep(plan: &ExperimentPlan, bank_root: &Path, points: &[SweepPoint]) -> Result<Vec<MetricReport>> {
    let (datasets, bank) = prepare_plan(plan, bank_root)?;
    sweep_in_memory(&datasets, &bank, plan, points)
}
