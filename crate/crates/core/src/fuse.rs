//! Inference against an unseen graph: relevance of every bank entry,
//! selection and softmax weighting, parameter averaging of the selected
//! source models, and zero-/few-shot predictions.

use std::fmt;
use std::str::FromStr;

use ndarray::{Array1, Array2, ArrayView2};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bank::{BankEntry, ModelBank};
use crate::error::{OmogError, Result};
use crate::nn::{pool, ParamSet, SourceParams};
use crate::pretrain::{encode_with, ENCODE_CHUNK};
use crate::propagate::HopStack;
use crate::similarity::cosine;

pub const DEFAULT_K: usize = 2;
/// Upper bound on the nodes sampled for relevance scoring.
pub const RELEVANCE_SAMPLE: usize = 1024;

/// One score per bank entry, in bank order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RelevanceVector(pub Vec<f64>);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Strategy {
    /// Highest scores, softmax weights.
    #[serde(rename = "topk")]
    TopK,
    /// Highest scores, uniform weights.
    #[serde(rename = "topk-uniform")]
    TopKUniform,
    RandomK,
    LeastK,
}

impl Strategy {
    pub const ALL: [Strategy; 4] = [
        Strategy::TopK,
        Strategy::TopKUniform,
        Strategy::RandomK,
        Strategy::LeastK,
    ];
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Strategy::TopK => "topk",
            Strategy::TopKUniform => "topk-uniform",
            Strategy::RandomK => "random-k",
            Strategy::LeastK => "least-k",
        })
    }
}

impl FromStr for Strategy {
    type Err = OmogError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "topk" => Ok(Strategy::TopK),
            "topk-uniform" => Ok(Strategy::TopKUniform),
            "random-k" => Ok(Strategy::RandomK),
            "least-k" => Ok(Strategy::LeastK),
            other => Err(OmogError::InvalidArgument(format!(
                "unknown strategy `{other}` (expected topk, topk-uniform, random-k or least-k)"
            ))),
        }
    }
}

/// Selected bank indices and their weights (non-negative, summing to one).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FusionWeights {
    pub indices: Vec<usize>,
    pub weights: Vec<f64>,
}

impl FusionWeights {
    /// Every entry with weight `1 / n`.
    pub fn uniform_all(n: usize) -> Result<Self> {
        if n == 0 {
            return Err(OmogError::InvalidArgument("cannot fuse an empty bank".into()));
        }
        Ok(FusionWeights {
            indices: (0..n).collect(),
            weights: vec![1.0 / n as f64; n],
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FusedModel {
    pub source: SourceParams<f32>,
    pub weights: FusionWeights,
}

/// Few-shot support: node ids per class.
#[derive(Debug, Clone, PartialEq)]
pub struct SupportSet {
    pub classes: Vec<u32>,
    pub nodes: Vec<Vec<usize>>,
}

impl SupportSet {
    pub fn new(mut per_class: Vec<(u32, Vec<usize>)>) -> Result<Self> {
        per_class.sort_by_key(|(c, _)| *c);
        if per_class.is_empty() {
            return Err(OmogError::InvalidArgument("support set has no classes".into()));
        }
        if let Some((c, _)) = per_class.iter().find(|(_, ids)| ids.is_empty()) {
            return Err(OmogError::InvalidArgument(format!("support class {c} is empty")));
        }
        for w in per_class.windows(2) {
            if w[0].0 == w[1].0 {
                return Err(OmogError::InvalidArgument(format!("support class {} listed twice", w[0].0)));
            }
        }
        let (classes, nodes) = per_class.into_iter().unzip();
        Ok(SupportSet { classes, nodes })
    }

    /// Mean pooled embedding of each class's support nodes, `(s, d)`.
    pub fn class_means(&self, model: &SourceParams<f32>, hops: &HopStack) -> Result<Array2<f32>> {
        let mut out = Array2::zeros((self.classes.len(), model.d));
        for (i, ids) in self.nodes.iter().enumerate() {
            if let Some(&bad) = ids.iter().find(|&&v| v >= hops.num_nodes()) {
                return Err(OmogError::InvalidArgument(format!("support node {bad} out of range")));
            }
            let emb = encode_nodes(model, hops, ids)?;
            out.row_mut(i).assign(&mean_rows(emb.view()));
        }
        Ok(out)
    }
}

fn mean_rows(x: ArrayView2<f32>) -> Array1<f32> {
    let mut acc = Array1::<f64>::zeros(x.ncols());
    for row in x.outer_iter() {
        acc.zip_mut_with(&row, |a, &v| *a += v as f64);
    }
    (acc / x.nrows() as f64).mapv(|v| v as f32)
}

/// Seeded uniform sample of at most `max` node ids, ascending.
pub fn sample_nodes(n: usize, max: usize, seed: u64) -> Vec<usize> {
    if n <= max {
        return (0..n).collect();
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut ids = rand::seq::index::sample(&mut rng, n, max).into_vec();
    ids.sort_unstable();
    ids
}

fn check_entry_shape(entry: &BankEntry, hops: &HopStack) -> Result<()> {
    if hops.dim() != entry.config.d || hops.alpha() != entry.config.alpha {
        return Err(OmogError::Shape(format!(
            "test hop stack is (alpha={}, d={}), entry `{}` expects (alpha={}, d={})",
            hops.alpha(),
            hops.dim(),
            entry.name(),
            entry.config.alpha,
            entry.config.d
        )));
    }
    Ok(())
}

/// Filters each sampled node's stack with the entry's scoring MLP
/// (`h + MLP(h)`), encodes with the entry's source model, pools, averages
/// over nodes and returns the cosine similarity with the entry's centroid.
pub fn relevance_score(entry: &BankEntry, hops: &HopStack, sample: Option<&[usize]>) -> Result<f64> {
    check_entry_shape(entry, hops)?;
    let all: Vec<usize>;
    let nodes = match sample {
        Some(s) => s,
        None => {
            all = (0..hops.num_nodes()).collect();
            &all
        }
    };
    if nodes.is_empty() {
        return Err(OmogError::InvalidArgument("relevance needs at least one node".into()));
    }
    let mut acc = Array1::<f64>::zeros(entry.config.d);
    for chunk in nodes.chunks(ENCODE_CHUNK) {
        let h = hops.gather(chunk);
        let filtered = &h + &entry.scoring.forward(h.view())?;
        let emb = pool(entry.source.forward(filtered.view())?.view());
        for row in emb.outer_iter() {
            acc.zip_mut_with(&row, |a, &v| *a += v as f64);
        }
    }
    let mean = acc / nodes.len() as f64;
    Ok(cosine(mean.view(), entry.centroid.0.mapv(|v| v as f64).view()))
}

/// [`relevance_score`] for every entry, in parallel.
pub fn relevance_scores(bank: &ModelBank, hops: &HopStack, sample: Option<&[usize]>) -> Result<RelevanceVector> {
    let scores = bank
        .entries()
        .par_iter()
        .map(|e| relevance_score(e, hops, sample))
        .collect::<Result<Vec<_>>>()?;
    Ok(RelevanceVector(scores))
}

/// Picks `k` entries by `strategy`. Top-k ranks by descending score and
/// least-k by ascending score, both breaking ties by bank order. Only
/// [`Strategy::TopK`] uses softmax weights (`softmax(score / temperature)`);
/// the others weight uniformly.
pub fn select_and_weight(
    scores: &RelevanceVector,
    k: usize,
    strategy: Strategy,
    temperature: f64,
    seed: u64,
) -> Result<FusionWeights> {
    let n = scores.0.len();
    if k == 0 || k > n {
        return Err(OmogError::InvalidArgument(format!("k={k} out of range 1..={n}")));
    }
    if let Some(i) = scores.0.iter().position(|s| !s.is_finite()) {
        return Err(OmogError::NonFinite(format!("relevance score {i}")));
    }
    if !(temperature > 0.0) {
        return Err(OmogError::InvalidArgument("temperature must be positive".into()));
    }
    let mut order: Vec<usize> = (0..n).collect();
    let indices: Vec<usize> = match strategy {
        Strategy::TopK | Strategy::TopKUniform => {
            order.sort_by(|&a, &b| scores.0[b].total_cmp(&scores.0[a]).then(a.cmp(&b)));
            order.truncate(k);
            order
        }
        Strategy::LeastK => {
            order.sort_by(|&a, &b| scores.0[a].total_cmp(&scores.0[b]).then(a.cmp(&b)));
            order.truncate(k);
            order
        }
        Strategy::RandomK => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut ids = rand::seq::index::sample(&mut rng, n, k).into_vec();
            ids.sort_unstable();
            ids
        }
    };
    let weights = match strategy {
        Strategy::TopK => {
            let logits: Vec<f64> = indices.iter().map(|&i| scores.0[i] / temperature).collect();
            let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let exps: Vec<f64> = logits.iter().map(|l| (l - max).exp()).collect();
            let z: f64 = exps.iter().sum();
            exps.into_iter().map(|e| e / z).collect()
        }
        _ => vec![1.0 / k as f64; k],
    };
    Ok(FusionWeights { indices, weights })
}

/// Tensor-by-tensor weighted average of the selected source models,
/// accumulated in f64.
pub fn fuse_models(bank: &ModelBank, weights: &FusionWeights) -> Result<FusedModel> {
    if weights.indices.is_empty() || weights.indices.len() != weights.weights.len() {
        return Err(OmogError::InvalidArgument("fusion weights are empty or misaligned".into()));
    }
    let entries = bank.entries();
    let selected: Vec<&SourceParams<f32>> = weights
        .indices
        .iter()
        .map(|&i| {
            entries
                .get(i)
                .map(|e| &e.source)
                .ok_or_else(|| OmogError::InvalidArgument(format!("fusion index {i} out of range")))
        })
        .collect::<Result<_>>()?;
    let first = selected[0];
    for s in &selected[1..] {
        if (s.d, s.alpha, s.d_ff) != (first.d, first.alpha, first.d_ff) {
            return Err(OmogError::Shape("selected source models differ in shape".into()));
        }
    }
    let mut fused = first.clone();
    let views: Vec<_> = selected.iter().map(|s| s.tensors()).collect();
    for (t_idx, (_, mut out)) in fused.tensors_mut().into_iter().enumerate() {
        let mut acc: Vec<f64> = views[0][t_idx].1.iter().map(|&v| weights.weights[0] * v as f64).collect();
        for (view, &w) in views.iter().zip(&weights.weights).skip(1) {
            for (a, &v) in acc.iter_mut().zip(view[t_idx].1.iter()) {
                *a += w * v as f64;
            }
        }
        for (o, a) in out.iter_mut().zip(acc) {
            *o = a as f32;
        }
    }
    Ok(FusedModel {
        source: fused,
        weights: weights.clone(),
    })
}

/// Pooled source outputs of the unfiltered stacks of `nodes`.
pub fn encode_nodes(model: &SourceParams<f32>, hops: &HopStack, nodes: &[usize]) -> Result<Array2<f32>> {
    if hops.dim() != model.d || hops.alpha() != model.alpha {
        return Err(OmogError::Shape(format!(
            "hop stack is (alpha={}, d={}), model expects (alpha={}, d={})",
            hops.alpha(),
            hops.dim(),
            model.alpha,
            model.d
        )));
    }
    encode_with(model, |c| hops.gather(c), nodes)
}

/// Pooled raw hop stacks (no source model).
pub fn pooled_raw(hops: &HopStack, nodes: &[usize]) -> Array2<f32> {
    pool(hops.gather(nodes).view())
}

fn argmax_first(scores: impl Iterator<Item = f64>) -> usize {
    let mut best = 0;
    let mut best_v = f64::NEG_INFINITY;
    for (i, v) in scores.enumerate() {
        if v > best_v {
            best = i;
            best_v = v;
        }
    }
    best
}

/// Zero-shot node classification: most cosine-similar label embedding,
/// ties to the smallest class id.
pub fn predict_nc_zero(f_test: ArrayView2<f32>, label_embeddings: Option<ArrayView2<f32>>) -> Result<Vec<u32>> {
    let labels = label_embeddings.ok_or_else(|| OmogError::InvalidArgument("dataset has no label embeddings".into()))?;
    check_width(f_test, labels)?;
    Ok(f_test
        .outer_iter()
        .map(|f| argmax_first(labels.outer_iter().map(|l| cosine(f, l))) as u32)
        .collect())
}

/// Link logits: cosine similarity of the two endpoint embeddings. `pairs`
/// index rows of `f_test`.
pub fn predict_lp(f_test: ArrayView2<f32>, pairs: &[(usize, usize)]) -> Result<Vec<f64>> {
    pairs
        .iter()
        .map(|&(u, v)| {
            if u >= f_test.nrows() || v >= f_test.nrows() {
                return Err(OmogError::InvalidArgument(format!("pair ({u}, {v}) out of range")));
            }
            Ok(cosine(f_test.row(u), f_test.row(v)))
        })
        .collect()
}

/// Few-shot rule: `argmax_i cos(f, mean_i) + cos(f, label_i)` over the
/// support classes (rows of `class_means`, ids in `classes`).
pub fn predict_nc_fewshot(
    f_test: ArrayView2<f32>,
    classes: &[u32],
    class_means: ArrayView2<f32>,
    label_embeddings: Option<ArrayView2<f32>>,
) -> Result<Vec<u32>> {
    let labels = label_embeddings.ok_or_else(|| OmogError::InvalidArgument("dataset has no label embeddings".into()))?;
    if class_means.nrows() != classes.len() {
        return Err(OmogError::Shape("one class mean per support class required".into()));
    }
    if classes.is_empty() {
        return Err(OmogError::InvalidArgument("empty support set".into()));
    }
    check_width(f_test, labels)?;
    check_width(f_test, class_means)?;
    if let Some(&c) = classes.iter().find(|&&c| c as usize >= labels.nrows()) {
        return Err(OmogError::InvalidArgument(format!("support class {c} has no label embedding")));
    }
    let mut order: Vec<usize> = (0..classes.len()).collect();
    order.sort_by_key(|&i| classes[i]);
    Ok(f_test
        .outer_iter()
        .map(|f| {
            let best = argmax_first(order.iter().map(|&i| {
                cosine(f, class_means.row(i)) + cosine(f, labels.row(classes[i] as usize))
            }));
            classes[order[best]]
        })
        .collect())
}

fn check_width(a: ArrayView2<f32>, b: ArrayView2<f32>) -> Result<()> {
    if a.ncols() != b.ncols() {
        return Err(OmogError::Shape(format!(
            "embedding width {} vs {}",
            a.ncols(),
            b.ncols()
        )));
    }
    Ok(())
}
