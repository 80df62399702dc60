use std::collections::{BTreeMap, HashSet};

use ndarray::{Array2, Axis};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::metrics::{accuracy, hits_at_k, HITS_K};
use super::plan::{Ablation, ExperimentPlan, Mode, Task};
use crate::bank::ModelBank;
use crate::dataset::{Csr, GraphDataset};
use crate::error::{OmogError, Result};
use crate::fuse::{
    encode_nodes, fuse_models, pooled_raw, predict_lp, predict_nc_fewshot, predict_nc_zero, relevance_scores,
    sample_nodes, select_and_weight, FusionWeights, RelevanceVector, Strategy, SupportSet,
};
use crate::propagate::{sgc_propagate, HopStack, NormalizedAdjacency};

const STREAM_SUPPORT: u64 = 11;
const STREAM_EDGES: u64 = 12;
const STREAM_NEGATIVES: u64 = 13;

/// Minimum size of the negative pair pool for link prediction.
pub const MIN_NEGATIVES: usize = 1000;

/// Outcome of one (held-out dataset, seed, configuration) run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldResult {
    pub dataset: String,
    pub seed: u64,
    pub k: usize,
    pub strategy: Strategy,
    pub ablation: Ablation,
    pub metric: String,
    pub value: f64,
    /// Names of the fused entries with their weights.
    pub selected: Vec<(String, f64)>,
    /// Every bank entry available to the fold with its relevance score.
    pub relevance: Vec<(String, f64)>,
}

#[derive(Debug, Clone)]
enum Target {
    Nc {
        nodes: Vec<usize>,
        labels: Vec<u32>,
        support: Option<SupportSet>,
    },
    Lp {
        positives: Vec<(usize, usize)>,
        negatives: Vec<(usize, usize)>,
    },
}

/// Everything about a fold that does not depend on `k` or the strategy:
/// the test hop stack, relevance scores and evaluation targets.
#[derive(Debug, Clone)]
pub struct FoldContext<'a> {
    bank: &'a ModelBank,
    test: &'a GraphDataset,
    seed: u64,
    ablation: Ablation,
    temperature: f64,
    hops: HopStack,
    relevance: RelevanceVector,
    target: Target,
}

impl<'a> FoldContext<'a> {
    /// Fails if the held-out dataset's name appears in `bank`.
    pub fn prepare(bank: &'a ModelBank, test: &'a GraphDataset, plan: &ExperimentPlan, seed: u64) -> Result<Self> {
        if bank.get(&test.name).is_some() {
            return Err(OmogError::Inconsistent(format!(
                "leakage: held-out dataset `{}` is present in its own bank",
                test.name
            )));
        }
        let (_, alpha) = bank
            .shape()
            .ok_or_else(|| OmogError::InvalidArgument("empty bank".into()))?;
        if bank.shape().map(|s| s.0) != Some(test.d()) {
            return Err(OmogError::Shape(format!(
                "dataset `{}` has d={}, bank has d={}",
                test.name,
                test.d(),
                bank.shape().map_or(0, |s| s.0)
            )));
        }
        let (adjacency, target) = match plan.task {
            Task::Nc => (test.adjacency.clone(), nc_target(test, plan, seed)?),
            Task::Lp => {
                let (residual, positives) = split_edges(&test.adjacency, plan.lp_test_fraction, seed)?;
                let negatives = sample_negatives(&test.adjacency, positives.len(), seed)?;
                (residual, Target::Lp { positives, negatives })
            }
        };
        let hops = match plan.ablation {
            Ablation::NoSgc => HopStack::repeated(test.features.view(), alpha),
            _ => sgc_propagate(&NormalizedAdjacency::from_csr(&adjacency), test.features.view(), alpha)?,
        };
        let sample = sample_nodes(test.n(), plan.relevance_sample, seed);
        let relevance = relevance_scores(bank, &hops, Some(&sample))?;
        Ok(FoldContext {
            bank,
            test,
            seed,
            ablation: plan.ablation,
            temperature: plan.temperature,
            hops,
            relevance,
            target,
        })
    }

    pub fn relevance(&self) -> &RelevanceVector {
        &self.relevance
    }

    pub fn hops(&self) -> &HopStack {
        &self.hops
    }

    pub fn weights(&self, k: usize, strategy: Strategy) -> Result<FusionWeights> {
        match self.ablation {
            Ablation::NoScore => FusionWeights::uniform_all(self.bank.len()),
            _ => select_and_weight(&self.relevance, k, strategy, self.temperature, self.seed),
        }
    }

    pub fn evaluate(&self, k: usize, strategy: Strategy) -> Result<FoldResult> {
        let names = self.bank.names();
        let weights = self.weights(k, strategy)?;
        let fused = match self.ablation {
            Ablation::NoSource => None,
            _ => Some(fuse_models(self.bank, &weights)?.source),
        };
        let embed = |nodes: &[usize]| -> Result<Array2<f32>> {
            match &fused {
                Some(model) => encode_nodes(model, &self.hops, nodes),
                None => Ok(pooled_raw(&self.hops, nodes)),
            }
        };
        let (metric, value) = match &self.target {
            Target::Nc { nodes, labels, support } => {
                let f = embed(nodes)?;
                let label_emb = self.test.label_embeddings.as_ref().map(|e| e.view());
                let pred = match support {
                    None => predict_nc_zero(f.view(), label_emb)?,
                    Some(s) => {
                        let mut means = Array2::zeros((s.classes.len(), f.ncols()));
                        for (i, ids) in s.nodes.iter().enumerate() {
                            let e = embed(ids)?;
                            let m = e.mapv(|v| v as f64).mean_axis(Axis(0)).expect("non-empty class");
                            means.row_mut(i).assign(&m.mapv(|v| v as f32));
                        }
                        predict_nc_fewshot(f.view(), &s.classes, means.view(), label_emb)?
                    }
                };
                ("accuracy".to_string(), accuracy(&pred, labels)?)
            }
            Target::Lp { positives, negatives } => {
                let all: Vec<usize> = (0..self.test.n()).collect();
                let f = embed(&all)?;
                let pos = predict_lp(f.view(), positives)?;
                let neg = predict_lp(f.view(), negatives)?;
                (format!("hits@{HITS_K}"), hits_at_k(&pos, &neg, HITS_K)?)
            }
        };
        Ok(FoldResult {
            dataset: self.test.name.clone(),
            seed: self.seed,
            k: weights.indices.len(),
            strategy,
            ablation: self.ablation,
            metric,
            value,
            selected: weights
                .indices
                .iter()
                .zip(&weights.weights)
                .map(|(&i, &w)| (names[i].to_string(), w))
                .collect(),
            relevance: names
                .iter()
                .zip(&self.relevance.0)
                .map(|(n, &s)| (n.to_string(), s))
                .collect(),
        })
    }
}

fn labeled(test: &GraphDataset, ids: impl Iterator<Item = usize>) -> Vec<usize> {
    ids.filter(|&i| test.label(i).is_some()).collect()
}

fn nc_target(test: &GraphDataset, plan: &ExperimentPlan, seed: u64) -> Result<Target> {
    if test.labels.is_none() || test.label_embeddings.is_none() {
        return Err(OmogError::InvalidArgument(format!(
            "dataset `{}` needs labels and label embeddings for node classification",
            test.name
        )));
    }
    let mut nodes = match &test.splits.test {
        Some(ids) => labeled(test, ids.iter().map(|&i| i as usize)),
        None => test.labeled_nodes(),
    };
    let support = match plan.mode {
        Mode::ZeroShot => None,
        Mode::FewShot => {
            let s = support_set(test, plan.shots, &nodes, seed)?;
            let used: HashSet<usize> = s.nodes.iter().flatten().copied().collect();
            nodes.retain(|i| !used.contains(i));
            Some(s)
        }
    };
    if nodes.is_empty() {
        return Err(OmogError::InvalidArgument(format!("dataset `{}` has no labeled test nodes", test.name)));
    }
    let labels = nodes.iter().map(|&i| test.label(i).expect("labeled")).collect();
    Ok(Target::Nc { nodes, labels, support })
}

/// Stored support ids when the dataset has them; otherwise `shots` seeded
/// picks per class from the train split (or, lacking one, from labeled
/// nodes outside the test split).
pub fn support_set(test: &GraphDataset, shots: usize, test_nodes: &[usize], seed: u64) -> Result<SupportSet> {
    if let Some(stored) = &test.splits.support {
        let mut per_class = Vec::new();
        for (key, ids) in stored {
            let class: u32 = key
                .parse()
                .map_err(|_| OmogError::InvalidArgument(format!("support key `{key}` is not a class id")))?;
            per_class.push((class, ids.iter().map(|&i| i as usize).collect()));
        }
        return SupportSet::new(per_class);
    }
    let pool = match &test.splits.train {
        Some(ids) => labeled(test, ids.iter().map(|&i| i as usize)),
        None if test.splits.test.is_some() => {
            let held: HashSet<usize> = test_nodes.iter().copied().collect();
            labeled(test, (0..test.n()).filter(|i| !held.contains(i)))
        }
        None => test.labeled_nodes(),
    };
    let mut by_class: BTreeMap<u32, Vec<usize>> = BTreeMap::new();
    for i in pool {
        by_class.entry(test.label(i).expect("labeled")).or_default().push(i);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(STREAM_SUPPORT);
    let per_class = by_class
        .into_iter()
        .map(|(c, mut ids)| {
            ids.shuffle(&mut rng);
            ids.truncate(shots);
            ids.sort_unstable();
            (c, ids)
        })
        .collect();
    SupportSet::new(per_class)
}

/// Removes a seeded `fraction` of edges (at least one) and returns the
/// residual graph with the removed edges.
pub fn split_edges(adj: &Csr, fraction: f64, seed: u64) -> Result<(Csr, Vec<(usize, usize)>)> {
    let mut edges = adj.edges();
    if edges.len() < 2 {
        return Err(OmogError::InvalidArgument("link prediction needs at least two edges".into()));
    }
    if !(fraction > 0.0 && fraction < 1.0) {
        return Err(OmogError::InvalidArgument("edge test fraction must lie in (0, 1)".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(STREAM_EDGES);
    edges.shuffle(&mut rng);
    let n_pos = ((edges.len() as f64 * fraction).round() as usize).clamp(1, edges.len() - 1);
    let mut positives: Vec<(usize, usize)> = edges[..n_pos].iter().map(|&(u, v)| (u as usize, v as usize)).collect();
    positives.sort_unstable();
    let (residual, _) = Csr::from_undirected(adj.num_nodes(), &edges[n_pos..]);
    Ok((residual, positives))
}

/// `max(10 * positives, MIN_NEGATIVES)` distinct unordered node pairs that
/// are not edges of `adj`, sampled with a fixed seed.
pub fn sample_negatives(adj: &Csr, positives: usize, seed: u64) -> Result<Vec<(usize, usize)>> {
    let n = adj.num_nodes();
    let want = (10 * positives).max(MIN_NEGATIVES);
    let available = n * n.saturating_sub(1) / 2 - adj.num_edges();
    if available < want {
        return Err(OmogError::InvalidArgument(format!(
            "graph has only {available} non-edges, {want} negatives required"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(STREAM_NEGATIVES);
    let mut seen = HashSet::with_capacity(want);
    let mut out = Vec::with_capacity(want);
    while out.len() < want {
        let u = rng.gen_range(0..n);
        let v = rng.gen_range(0..n);
        if u == v || adj.has_edge(u, v) {
            continue;
        }
        let pair = (u.min(v), u.max(v));
        if seen.insert(pair) {
            out.push(pair);
        }
    }
    Ok(out)
}
