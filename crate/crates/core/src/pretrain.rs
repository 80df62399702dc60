//! Per-graph pretraining: the contrastive objective over two masked views of
//! each node's hop stack, the domain centroid, and the distance objective of
//! the scoring module.

use std::time::{Instant, SystemTime, UNIX_EPOCH};

use ndarray::{s, Array1, Array2, Array3, ArrayView1, ArrayView2, ArrayView3, Axis};
use rand::seq::{index, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::bank::{BankEntry, EntryConfig};
use crate::dataset::GraphDataset;
use crate::error::{OmogError, Result};
use crate::nn::{pool, pool_backward, Adam, AdamConfig, ParamSet, Real, ScoringParams, SourceParams};
use crate::propagate::{hop_stack, HopStack, DEFAULT_ALPHA};
use crate::similarity::NORM_EPS;

/// Guards the pole of the reciprocal distance term.
pub const DIV_EPS: f64 = 1e-6;

/// Rows per forward pass when encoding whole graphs.
pub(crate) const ENCODE_CHUNK: usize = 512;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    /// Nodes per mini-batch (`t` in the contrastive objective).
    pub batch_size: usize,
    pub epochs: usize,
    pub mask_fraction: f64,
    pub lr: f64,
    pub seed: u64,
    pub alpha: usize,
    /// Defaults to `2 d`.
    pub d_ff: Option<usize>,
    /// Defaults to `d`.
    pub d_h: Option<usize>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            batch_size: 256,
            epochs: 50,
            mask_fraction: 0.5,
            lr: 1e-4,
            seed: 0,
            alpha: DEFAULT_ALPHA,
            d_ff: None,
            d_h: None,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size < 2 {
            return Err(OmogError::Config("batch size must be at least 2".into()));
        }
        if self.epochs == 0 {
            return Err(OmogError::Config("epochs must be at least 1".into()));
        }
        if !(self.mask_fraction > 0.0 && self.mask_fraction < 1.0) {
            return Err(OmogError::Config("mask fraction must lie in (0, 1)".into()));
        }
        if !(self.lr > 0.0) || !self.lr.is_finite() {
            return Err(OmogError::Config("learning rate must be positive".into()));
        }
        Ok(())
    }

    pub fn d_ff_for(&self, d: usize) -> usize {
        self.d_ff.unwrap_or(2 * d)
    }

    pub fn d_h_for(&self, d: usize) -> usize {
        self.d_h.unwrap_or(d)
    }

    fn adam(&self) -> AdamConfig {
        AdamConfig {
            lr: self.lr,
            ..AdamConfig::default()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    pub epoch: usize,
    pub mean_loss: f64,
    pub wall_ms: u64,
}

#[derive(Debug, Clone)]
pub struct Trained<P> {
    pub params: P,
    pub log: Vec<EpochLog>,
}

/// Mean pooled source embedding of a pretraining graph.
#[derive(Debug, Clone, PartialEq)]
pub struct DomainCentroid(pub Array1<f32>);

impl DomainCentroid {
    pub fn view(&self) -> ArrayView1<'_, f32> {
        self.0.view()
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }
}

/// Two independently masked views of one node's `(alpha + 1, d)` stack.
/// Each view zeroes `floor(fraction * d)` feature dimensions, the same ones
/// at every hop.
pub fn mask_augment<T: Real>(
    h: ArrayView2<T>,
    fraction: f64,
    rng: &mut impl Rng,
) -> (Array2<T>, Array2<T>) {
    let d = h.ncols();
    let count = ((fraction * d as f64).floor() as usize).min(d);
    let mut draw = || {
        let mut view = h.to_owned();
        for col in index::sample(rng, d, count) {
            view.column_mut(col).fill(T::zero());
        }
        view
    };
    let v0 = draw();
    let v1 = draw();
    (v0, v1)
}

/// Applies [`mask_augment`] to every node of a `(B, L, d)` batch.
pub fn mask_batch<T: Real>(
    batch: ArrayView3<T>,
    fraction: f64,
    rng: &mut impl Rng,
) -> (Array3<T>, Array3<T>) {
    let mut v0 = Array3::zeros(batch.raw_dim());
    let mut v1 = Array3::zeros(batch.raw_dim());
    for (i, h) in batch.outer_iter().enumerate() {
        let (a, b) = mask_augment(h, fraction, rng);
        v0.index_axis_mut(Axis(0), i).assign(&a);
        v1.index_axis_mut(Axis(0), i).assign(&b);
    }
    (v0, v1)
}

fn normalize_rows(f: &Array2<f64>) -> Result<(Array2<f64>, Vec<f64>)> {
    let mut n = f.clone();
    let mut norms = Vec::with_capacity(f.nrows());
    for (i, mut row) in n.outer_iter_mut().enumerate() {
        let r = row.dot(&row).sqrt();
        if r == 0.0 {
            return Err(OmogError::InvalidArgument(format!(
                "zero-norm embedding row {i}; cosine similarity undefined"
            )));
        }
        row.mapv_inplace(|v| v / (r + NORM_EPS));
        norms.push(r);
    }
    Ok((n, norms))
}

/// Gradient through `n = f / (|f| + eps)`.
fn normalize_backward(f: &Array2<f64>, norms: &[f64], dn: &Array2<f64>) -> Array2<f64> {
    let mut df = Array2::zeros(f.raw_dim());
    for (((fr, dnr), mut out), &r) in f
        .outer_iter()
        .zip(dn.outer_iter())
        .zip(df.outer_iter_mut())
        .zip(norms)
    {
        let s = r + NORM_EPS;
        let proj = fr.dot(&dnr) / (s * s * r);
        out.assign(&(&dnr / s - &fr * proj));
    }
    df
}

fn to_f64<T: Real>(x: ArrayView2<T>) -> Array2<f64> {
    x.mapv(|v| v.as_f64())
}

/// Negated contrastive objective over `t` nodes with pooled view embeddings
/// `f0`, `f1` (both `t x d`):
///
/// `-sum_i log[ 2 e^{s(f_i0, f_i1)} / sum_{m,n} ( e^{s(f_m0, f_n0)} + e^{s(f_m1, f_n1)} + 2 e^{s(f_m0, f_n1)} ) ]`
///
/// with cosine `s`. The denominator includes the `m = n` terms.
pub fn contrastive_loss<T: Real>(f0: ArrayView2<T>, f1: ArrayView2<T>) -> Result<f64> {
    contrastive_loss_grad(f0, f1).map(|(l, _, _)| l)
}

/// Loss and its gradients with respect to `f0` and `f1`.
pub fn contrastive_loss_grad<T: Real>(
    f0: ArrayView2<T>,
    f1: ArrayView2<T>,
) -> Result<(f64, Array2<T>, Array2<T>)> {
    if f0.dim() != f1.dim() {
        return Err(OmogError::Shape(format!(
            "view embeddings differ in shape: {:?} vs {:?}",
            f0.dim(),
            f1.dim()
        )));
    }
    let t = f0.nrows();
    if t == 0 {
        return Err(OmogError::InvalidArgument("empty batch".into()));
    }
    let tf = t as f64;
    let (f0, f1) = (to_f64(f0), to_f64(f1));
    let (n0, r0) = normalize_rows(&f0)?;
    let (n1, r1) = normalize_rows(&f1)?;
    let e00 = n0.dot(&n0.t()).mapv(f64::exp);
    let e11 = n1.dot(&n1.t()).mapv(f64::exp);
    let s01 = n0.dot(&n1.t());
    let e01 = s01.mapv(f64::exp);
    let denom = e00.sum() + e11.sum() + 2.0 * e01.sum();
    let trace: f64 = s01.diag().sum();
    let loss = -tf * std::f64::consts::LN_2 - trace + tf * denom.ln();
    if !loss.is_finite() {
        return Err(OmogError::NonFinite("contrastive loss".into()));
    }

    let g00 = e00 * (tf / denom);
    let g11 = e11 * (tf / denom);
    let mut g01 = e01 * (2.0 * tf / denom);
    for i in 0..t {
        g01[[i, i]] -= 1.0;
    }
    let dn0 = (&g00 + &g00.t()).dot(&n0) + g01.dot(&n1);
    let dn1 = (&g11 + &g11.t()).dot(&n1) + g01.t().dot(&n0);
    let df0 = normalize_backward(&f0, &r0, &dn0).mapv(T::from_f64_lossy);
    let df1 = normalize_backward(&f1, &r1, &dn1).mapv(T::from_f64_lossy);
    Ok((loss, df0, df1))
}

/// Summed contrastive loss of a batch of view pairs and its gradient with
/// respect to every source parameter.
pub fn contrastive_gradients<T: Real>(
    source: &SourceParams<T>,
    view0: ArrayView3<T>,
    view1: ArrayView3<T>,
) -> Result<(f64, SourceParams<T>)> {
    let hops = view0.shape()[1];
    let (y0, tape0) = source.forward_with_tape(view0)?;
    let (y1, tape1) = source.forward_with_tape(view1)?;
    let (loss, df0, df1) = contrastive_loss_grad(pool(y0.view()).view(), pool(y1.view()).view())?;
    let (mut grads, _) = source.backward(&tape0, pool_backward(&df0, hops).view());
    let (g1, _) = source.backward(&tape1, pool_backward(&df1, hops).view());
    grads.accumulate(&g1);
    Ok((loss, grads))
}

/// `dis(f_pos, c) + 1 / (dis(f_neg, c) + DIV_EPS)` with Euclidean `dis`.
pub fn scoring_loss<T: Real>(f_pos: ArrayView1<T>, f_neg: ArrayView1<T>, center: ArrayView1<T>) -> f64 {
    let dp = crate::similarity::euclidean(f_pos, center);
    let dn = crate::similarity::euclidean(f_neg, center);
    dp + 1.0 / (dn + DIV_EPS)
}

/// Pooled source embeddings of the filtered stacks `h + a` and of the masks
/// `a`, each `(B, d)`.
pub fn scoring_embeddings<T: Real>(
    scoring: &ScoringParams<T>,
    source: &SourceParams<T>,
    h: ArrayView3<T>,
) -> Result<(Array2<T>, Array2<T>)> {
    let a = scoring.forward(h)?;
    let filtered = &h + &a;
    let pos = pool(source.forward(filtered.view())?.view());
    let neg = pool(source.forward(a.view())?.view());
    Ok((pos, neg))
}

/// Per-node `(dis(f_pos, c), dis(f_neg, c))`.
pub fn scoring_distances<T: Real>(
    scoring: &ScoringParams<T>,
    source: &SourceParams<T>,
    h: ArrayView3<T>,
    center: ArrayView1<T>,
) -> Result<Vec<(f64, f64)>> {
    let (pos, neg) = scoring_embeddings(scoring, source, h)?;
    Ok(pos
        .outer_iter()
        .zip(neg.outer_iter())
        .map(|(p, n)| {
            (
                crate::similarity::euclidean(p, center),
                crate::similarity::euclidean(n, center),
            )
        })
        .collect())
}

/// Mean scoring loss over a batch.
pub fn scoring_batch_loss<T: Real>(
    scoring: &ScoringParams<T>,
    source: &SourceParams<T>,
    h: ArrayView3<T>,
    center: ArrayView1<T>,
) -> Result<f64> {
    let (pos, neg) = scoring_embeddings(scoring, source, h)?;
    let total: f64 = pos
        .outer_iter()
        .zip(neg.outer_iter())
        .map(|(p, n)| scoring_loss(p, n, center))
        .sum();
    Ok(total / pos.nrows() as f64)
}

/// Summed scoring loss of a batch and its gradient with respect to the
/// scoring parameters; the source model is held fixed.
pub fn scoring_gradients<T: Real>(
    scoring: &ScoringParams<T>,
    source: &SourceParams<T>,
    h: ArrayView3<T>,
    center: ArrayView1<T>,
) -> Result<(f64, ScoringParams<T>)> {
    let hops = h.shape()[1];
    let (a, s_tape) = scoring.forward_with_tape(h)?;
    let filtered = &h + &a;
    let (y_pos, tape_pos) = source.forward_with_tape(filtered.view())?;
    let (y_neg, tape_neg) = source.forward_with_tape(a.view())?;
    let f_pos = pool(y_pos.view());
    let f_neg = pool(y_neg.view());

    let c: Array1<f64> = center.mapv(|v| v.as_f64());
    let mut loss = 0.0;
    let mut g_pos = Array2::<T>::zeros(f_pos.raw_dim());
    let mut g_neg = Array2::<T>::zeros(f_neg.raw_dim());
    for i in 0..f_pos.nrows() {
        let dp_vec = f_pos.row(i).mapv(|v| v.as_f64()) - &c;
        let dn_vec = f_neg.row(i).mapv(|v| v.as_f64()) - &c;
        let dp = dp_vec.dot(&dp_vec).sqrt();
        let dn = dn_vec.dot(&dn_vec).sqrt();
        loss += dp + 1.0 / (dn + DIV_EPS);
        if dp > 0.0 {
            g_pos.row_mut(i).assign(&(dp_vec / dp).mapv(T::from_f64_lossy));
        }
        if dn > 0.0 {
            let k = -1.0 / (dn * (dn + DIV_EPS).powi(2));
            g_neg.row_mut(i).assign(&(dn_vec * k).mapv(T::from_f64_lossy));
        }
    }
    if !loss.is_finite() {
        return Err(OmogError::NonFinite("scoring loss".into()));
    }
    let (_, d_filtered) = source.backward(&tape_pos, pool_backward(&g_pos, hops).view());
    let (_, d_mask) = source.backward(&tape_neg, pool_backward(&g_neg, hops).view());
    let d_a = d_filtered + d_mask;
    Ok((loss, scoring.backward(&s_tape, d_a.view())))
}

/// Nodes used for training: the `train` split when present, else all nodes.
pub fn training_nodes(dataset: &GraphDataset) -> Vec<usize> {
    match &dataset.splits.train {
        Some(ids) => ids.iter().map(|&i| i as usize).collect(),
        None => (0..dataset.n()).collect(),
    }
}

fn shuffle_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

const STREAM_SOURCE: u64 = 1;
const STREAM_SCORING: u64 = 2;
const SCORING_INIT_OFFSET: u64 = 0x9e37_79b9;

/// Contrastive pretraining of one source model on `nodes` of a hop stack.
pub fn pretrain_source_on(hops: &HopStack, nodes: &[usize], config: &TrainConfig) -> Result<Trained<SourceParams<f32>>> {
    config.validate()?;
    if hops.alpha() != config.alpha {
        return Err(OmogError::Shape(format!(
            "hop stack has alpha={}, config says {}",
            hops.alpha(),
            config.alpha
        )));
    }
    if nodes.len() < 2 {
        return Err(OmogError::InvalidArgument("need at least two training nodes".into()));
    }
    let d = hops.dim();
    let mut params = SourceParams::<f32>::init(d, config.alpha, config.d_ff_for(d), config.seed);
    let mut adam = Adam::new(config.adam());
    let mut rng = shuffle_rng(config.seed, STREAM_SOURCE);
    let mut order = nodes.to_vec();
    let mut log = Vec::with_capacity(config.epochs);

    for epoch in 0..config.epochs {
        let start = Instant::now();
        order.shuffle(&mut rng);
        let mut total = 0.0;
        let mut seen = 0usize;
        for chunk in order.chunks(config.batch_size) {
            if chunk.len() < 2 {
                continue;
            }
            let batch = hops.gather(chunk);
            let (v0, v1) = mask_batch(batch.view(), config.mask_fraction, &mut rng);
            let (loss, grads) = contrastive_gradients(&params, v0.view(), v1.view())
                .map_err(|e| divergence(epoch, e))?;
            adam.step(&mut params, &grads).map_err(|e| divergence(epoch, e))?;
            total += loss;
            seen += chunk.len();
        }
        let mean_loss = total / seen.max(1) as f64;
        log::debug!("source epoch {epoch}: loss {mean_loss:.6}");
        log.push(EpochLog {
            epoch,
            mean_loss,
            wall_ms: start.elapsed().as_millis() as u64,
        });
    }
    Ok(Trained { params, log })
}

fn divergence(epoch: usize, e: OmogError) -> OmogError {
    match e {
        OmogError::NonFinite(what) => OmogError::Divergence { epoch, what },
        other => other,
    }
}

/// Builds the hop stack and pretrains on the dataset's training nodes.
pub fn pretrain_source(dataset: &GraphDataset, config: &TrainConfig) -> Result<Trained<SourceParams<f32>>> {
    config.validate()?;
    let hops = hop_stack(dataset, config.alpha)?;
    pretrain_source_on(&hops, &training_nodes(dataset), config)
}

/// Pooled source embeddings of `nodes`, `(nodes.len(), d)`.
pub fn encode_with<T: Real>(source: &SourceParams<T>, batch_of: impl Fn(&[usize]) -> Array3<T>, nodes: &[usize]) -> Result<Array2<T>> {
    let mut out = Array2::zeros((nodes.len(), source.d));
    for (k, chunk) in nodes.chunks(ENCODE_CHUNK).enumerate() {
        let y = source.forward(batch_of(chunk).view())?;
        let start = k * ENCODE_CHUNK;
        out.slice_mut(s![start..start + chunk.len(), ..]).assign(&pool(y.view()));
    }
    Ok(out)
}

/// Mean over all nodes of the pooled source output on the unmasked stacks.
pub fn centroid(source: &SourceParams<f32>, hops: &HopStack) -> Result<DomainCentroid> {
    let n = hops.num_nodes();
    if n == 0 {
        return Err(OmogError::InvalidArgument("empty graph has no centroid".into()));
    }
    let nodes: Vec<usize> = (0..n).collect();
    let emb = encode_with(source, |c| hops.gather(c), &nodes)?;
    let mut acc = Array1::<f64>::zeros(source.d);
    for row in emb.outer_iter() {
        acc.zip_mut_with(&row, |a, &v| *a += v as f64);
    }
    Ok(DomainCentroid((acc / n as f64).mapv(|v| v as f32)))
}

/// Trains the scoring MLP against a frozen source model.
pub fn train_scoring_on(
    hops: &HopStack,
    nodes: &[usize],
    source: &SourceParams<f32>,
    center: &DomainCentroid,
    config: &TrainConfig,
) -> Result<Trained<ScoringParams<f32>>> {
    config.validate()?;
    if nodes.is_empty() {
        return Err(OmogError::InvalidArgument("no training nodes".into()));
    }
    let d = hops.dim();
    let mut params = ScoringParams::<f32>::init(
        d,
        config.alpha,
        config.d_h_for(d),
        config.seed.wrapping_add(SCORING_INIT_OFFSET),
    );
    let mut adam = Adam::new(config.adam());
    let mut rng = shuffle_rng(config.seed, STREAM_SCORING);
    let mut order = nodes.to_vec();
    let mut log = Vec::with_capacity(config.epochs);
    for epoch in 0..config.epochs {
        let start = Instant::now();
        order.shuffle(&mut rng);
        let mut total = 0.0;
        for chunk in order.chunks(config.batch_size) {
            let batch = hops.gather(chunk);
            let (loss, grads) = scoring_gradients(&params, source, batch.view(), center.view())
                .map_err(|e| divergence(epoch, e))?;
            adam.step(&mut params, &grads).map_err(|e| divergence(epoch, e))?;
            total += loss;
        }
        let mean_loss = total / order.len() as f64;
        log::debug!("scoring epoch {epoch}: loss {mean_loss:.6}");
        log.push(EpochLog {
            epoch,
            mean_loss,
            wall_ms: start.elapsed().as_millis() as u64,
        });
    }
    Ok(Trained { params, log })
}

/// Centroid plus scoring training on the dataset's training nodes.
pub fn train_scoring(
    dataset: &GraphDataset,
    source: &SourceParams<f32>,
    config: &TrainConfig,
) -> Result<(DomainCentroid, Trained<ScoringParams<f32>>)> {
    let hops = hop_stack(dataset, config.alpha)?;
    let center = centroid(source, &hops)?;
    let trained = train_scoring_on(&hops, &training_nodes(dataset), source, &center, config)?;
    Ok((center, trained))
}

/// Output of [`pretrain_entry`]: the bank entry plus both training logs.
pub struct PretrainOutcome {
    pub entry: BankEntry,
    pub source_log: Vec<EpochLog>,
    pub scoring_log: Vec<EpochLog>,
}

/// Full pretraining of one graph: source model, centroid, scoring module.
pub fn pretrain_entry(dataset: &GraphDataset, config: &TrainConfig) -> Result<PretrainOutcome> {
    config.validate()?;
    let hops = hop_stack(dataset, config.alpha)?;
    pretrain_entry_on(dataset, &hops, config)
}

/// [`pretrain_entry`] with a precomputed hop stack of `dataset`.
pub fn pretrain_entry_on(dataset: &GraphDataset, hops: &HopStack, config: &TrainConfig) -> Result<PretrainOutcome> {
    config.validate()?;
    if hops.num_nodes() != dataset.n() || hops.dim() != dataset.d() || hops.alpha() != config.alpha {
        return Err(OmogError::Shape(format!(
            "hop stack (n={}, alpha={}, d={}) does not match dataset (n={}, d={}) at alpha={}",
            hops.num_nodes(),
            hops.alpha(),
            hops.dim(),
            dataset.n(),
            dataset.d(),
            config.alpha
        )));
    }
    let nodes = training_nodes(dataset);
    let source = pretrain_source_on(hops, &nodes, config)?;
    let center = centroid(&source.params, hops)?;
    let scoring = train_scoring_on(hops, &nodes, &source.params, &center, config)?;
    let d = dataset.d();
    let created_unix_ms = SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|t| t.as_millis() as u64)
        .unwrap_or(0);
    let entry = BankEntry {
        config: EntryConfig {
            name: dataset.name.clone(),
            d,
            alpha: config.alpha,
            d_ff: config.d_ff_for(d),
            d_h: config.d_h_for(d),
            seed: config.seed,
            created_unix_ms,
        },
        source: source.params,
        scoring: scoring.params,
        centroid: center,
    };
    Ok(PretrainOutcome {
        entry,
        source_log: source.log,
        scoring_log: scoring.log,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn single_identical_pair_gives_ln2() {
        let f = array![[0.3f64, -1.2, 2.0]];
        let l = contrastive_loss(f.view(), f.view()).unwrap();
        assert!((l - std::f64::consts::LN_2).abs() < 1e-6);
    }

    #[test]
    fn zero_norm_rows_are_rejected() {
        let f0 = array![[0.0f64, 0.0]];
        let f1 = array![[1.0f64, 0.0]];
        assert!(contrastive_loss(f0.view(), f1.view()).is_err());
    }

    #[test]
    fn scoring_loss_cases() {
        let c = array![1.0f64, 1.0];
        let at_unit = array![2.0f64, 1.0];
        assert!((scoring_loss(c.view(), at_unit.view(), c.view()) - 1.0 / (1.0 + DIV_EPS)).abs() < 1e-15);
        let pole = scoring_loss(c.view(), c.view(), c.view());
        assert!(pole.is_finite());
        assert!((pole - 1.0 / DIV_EPS).abs() < 1e-3);
        let pos = array![1.0f64, 3.0];
        let neg = array![5.0f64, 1.0];
        let l = scoring_loss(pos.view(), neg.view(), c.view());
        assert!((l - (2.0 + 1.0 / (4.0 + DIV_EPS))).abs() < 1e-12);
        assert!((l - 2.25).abs() < 1e-6);
    }

    #[test]
    fn masks_zero_one_of_two_dims() {
        let h = array![[1.0f32, 2.0], [3.0, 4.0]];
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..20 {
            let (a, b) = mask_augment(h.view(), 0.5, &mut rng);
            for v in [a, b] {
                let zero_cols: Vec<usize> = (0..2)
                    .filter(|&j| v.column(j).iter().all(|&x| x == 0.0))
                    .collect();
                assert_eq!(zero_cols.len(), 1);
            }
        }
    }

    #[test]
    fn masking_is_seeded() {
        let h = Array2::from_shape_fn((3, 4), |(i, j)| (i * 4 + j) as f32 + 1.0);
        let draw = |seed| mask_augment(h.view(), 0.5, &mut ChaCha8Rng::seed_from_u64(seed));
        assert_eq!(draw(5), draw(5));
    }

    #[test]
    fn config_validation() {
        let ok = TrainConfig::default();
        assert!(ok.validate().is_ok());
        for bad in [
            TrainConfig { epochs: 0, ..ok.clone() },
            TrainConfig { batch_size: 1, ..ok.clone() },
            TrainConfig { mask_fraction: 1.0, ..ok.clone() },
            TrainConfig { mask_fraction: 0.0, ..ok.clone() },
        ] {
            assert!(matches!(bad.validate(), Err(OmogError::Config(_))));
        }
    }
}
