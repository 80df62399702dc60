//! C interface to omog: load datasets and model banks through opaque
//! handles, score bank relevance, and run fused zero-shot node
//! classification and link scoring.
//!
//! Every fallible function returns an [`OmogStatus`]. On failure the
//! message is kept per thread and can be read with [`omog_last_error`].
//! Panics are caught at the boundary and reported as
//! [`OmogStatus::Panic`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;
use std::ptr;

use omog::bank::{bank_load, ModelBank};
use omog::fuse::{
    encode_nodes, fuse_models, predict_lp, predict_nc_zero, relevance_scores, sample_nodes, select_and_weight,
    FusedModel, Strategy, DEFAULT_K, RELEVANCE_SAMPLE,
};
use omog::propagate::{hop_stack, HopStack};
use omog::{load_dataset, GraphDataset, OmogError};

/// Result code of every fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OmogStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Io = 3,
    Format = 4,
    Shape = 5,
    NotFound = 6,
    Inconsistent = 7,
    BufferTooSmall = 8,
    Numeric = 9,
    Panic = 10,
}

/// Entry selection rule for fusion.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OmogStrategy {
    TopK = 0,
    TopKUniform = 1,
    RandomK = 2,
    LeastK = 3,
}

impl From<OmogStrategy> for Strategy {
    fn from(s: OmogStrategy) -> Self {
        match s {
            OmogStrategy::TopK => Strategy::TopK,
            OmogStrategy::TopKUniform => Strategy::TopKUniform,
            OmogStrategy::RandomK => Strategy::RandomK,
            OmogStrategy::LeastK => Strategy::LeastK,
        }
    }
}

/// Fusion settings. Obtain defaults from [`omog_fusion_params_default`].
#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct OmogFusionParams {
    pub k: usize,
    pub strategy: OmogStrategy,
    pub temperature: f64,
    pub seed: u64,
    /// Keep a bank entry named like the dataset (excluded when false).
    pub allow_self: bool,
}

/// A loaded graph dataset.
pub struct OmogDataset {
    inner: GraphDataset,
}

/// A loaded model bank.
pub struct OmogBank {
    inner: ModelBank,
    names: Vec<CString>,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

struct Failure(OmogStatus, String);

impl From<OmogError> for Failure {
    fn from(e: OmogError) -> Self {
        let status = match &e {
            OmogError::Io { .. } | OmogError::Locked(_) => OmogStatus::Io,
            OmogError::MissingFile { .. } | OmogError::MissingEntry(_) => OmogStatus::NotFound,
            OmogError::Format { .. } | OmogError::Json { .. } => OmogStatus::Format,
            OmogError::Shape(_) => OmogStatus::Shape,
            OmogError::InvalidArgument(_) | OmogError::Config(_) => OmogStatus::InvalidArgument,
            OmogError::NonFinite(_) | OmogError::Divergence { .. } => OmogStatus::Numeric,
            OmogError::NameCollision(_) | OmogError::Inconsistent(_) => OmogStatus::Inconsistent,
        };
        Failure(status, e.to_string())
    }
}

fn fail(status: OmogStatus, msg: impl Into<String>) -> Failure {
    Failure(status, msg.into())
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).expect("no interior nul");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

/// Runs `f`, recording any error or panic as the thread's last error.
fn guard(f: impl FnOnce() -> Result<(), Failure>) -> OmogStatus {
    LAST_ERROR.with(|e| *e.borrow_mut() = None);
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => OmogStatus::Ok,
        Ok(Err(Failure(status, msg))) => {
            set_error(msg);
            status
        }
        Err(payload) => {
            let msg = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic".into());
            set_error(format!("panic: {msg}"));
            OmogStatus::Panic
        }
    }
}

unsafe fn path_arg(p: *const c_char) -> Result<PathBuf, Failure> {
    if p.is_null() {
        return Err(fail(OmogStatus::NullPointer, "path is null"));
    }
    let s = CStr::from_ptr(p)
        .to_str()
        .map_err(|_| fail(OmogStatus::InvalidArgument, "path is not valid UTF-8"))?;
    Ok(PathBuf::from(s))
}

unsafe fn as_ref<'a, T>(p: *const T, what: &str) -> Result<&'a T, Failure> {
    p.as_ref()
        .ok_or_else(|| fail(OmogStatus::NullPointer, format!("{what} is null")))
}

unsafe fn out_slice<'a, T>(p: *mut T, len: usize, need: usize, what: &str) -> Result<&'a mut [T], Failure> {
    if p.is_null() {
        return Err(fail(OmogStatus::NullPointer, format!("{what} is null")));
    }
    if len < need {
        return Err(fail(
            OmogStatus::BufferTooSmall,
            format!("{what} holds {len} values, {need} needed"),
        ));
    }
    Ok(std::slice::from_raw_parts_mut(p, len))
}

/// Message of the last failed call on this thread, or null. The pointer
/// stays valid until the next omog call on the same thread.
#[no_mangle]
pub extern "C" fn omog_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |s| s.as_ptr()))
}

/// Library version as a static nul-terminated string.
#[no_mangle]
pub extern "C" fn omog_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

#[no_mangle]
pub extern "C" fn omog_fusion_params_default() -> OmogFusionParams {
    OmogFusionParams {
        k: DEFAULT_K,
        strategy: OmogStrategy::TopK,
        temperature: 1.0,
        seed: 0,
        allow_self: false,
    }
}

/// Loads the dataset directory at `dir`.
///
/// # Safety
/// `dir` must be a nul-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn omog_dataset_load(dir: *const c_char, out: *mut *mut OmogDataset) -> OmogStatus {
    guard(|| {
        if out.is_null() {
            return Err(fail(OmogStatus::NullPointer, "out is null"));
        }
        *out = ptr::null_mut();
        let ds = load_dataset(&path_arg(dir)?)?;
        *out = Box::into_raw(Box::new(OmogDataset { inner: ds }));
        Ok(())
    })
}

/// # Safety
/// `ds` must come from [`omog_dataset_load`] and not be used afterwards.
/// Null is accepted.
#[no_mangle]
pub unsafe extern "C" fn omog_dataset_free(ds: *mut OmogDataset) {
    if !ds.is_null() {
        drop(Box::from_raw(ds));
    }
}

/// Writes the node count, feature dimension and class count (0 when the
/// dataset has no label embeddings).
///
/// # Safety
/// All pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn omog_dataset_shape(
    ds: *const OmogDataset,
    n: *mut usize,
    d: *mut usize,
    classes: *mut usize,
) -> OmogStatus {
    guard(|| {
        let ds = &as_ref(ds, "dataset")?.inner;
        if n.is_null() || d.is_null() || classes.is_null() {
            return Err(fail(OmogStatus::NullPointer, "output pointer is null"));
        }
        *n = ds.n();
        *d = ds.d();
        *classes = ds.label_embeddings.as_ref().map_or(0, |e| e.nrows());
        Ok(())
    })
}

/// Loads the model bank rooted at `dir`.
///
/// # Safety
/// `dir` must be a nul-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn omog_bank_load(dir: *const c_char, out: *mut *mut OmogBank) -> OmogStatus {
    guard(|| {
        if out.is_null() {
            return Err(fail(OmogStatus::NullPointer, "out is null"));
        }
        *out = ptr::null_mut();
        let bank = bank_load(&path_arg(dir)?)?;
        let names = bank
            .names()
            .iter()
            .map(|n| CString::new(*n).map_err(|_| fail(OmogStatus::Format, "entry name contains nul")))
            .collect::<Result<_, _>>()?;
        *out = Box::into_raw(Box::new(OmogBank { inner: bank, names }));
        Ok(())
    })
}

/// # Safety
/// `bank` must come from [`omog_bank_load`] and not be used afterwards.
/// Null is accepted.
#[no_mangle]
pub unsafe extern "C" fn omog_bank_free(bank: *mut OmogBank) {
    if !bank.is_null() {
        drop(Box::from_raw(bank));
    }
}

/// Number of entries, 0 for a null handle.
///
/// # Safety
/// `bank` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn omog_bank_len(bank: *const OmogBank) -> usize {
    bank.as_ref().map_or(0, |b| b.inner.len())
}

/// Name of entry `index` in bank order, owned by the bank handle.
/// Returns null when out of range.
///
/// # Safety
/// `bank` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn omog_bank_entry_name(bank: *const OmogBank, index: usize) -> *const c_char {
    bank.as_ref()
        .and_then(|b| b.names.get(index))
        .map_or(ptr::null(), |s| s.as_ptr())
}

fn hops_for(bank: &ModelBank, ds: &GraphDataset) -> Result<HopStack, Failure> {
    let (_, alpha) = bank
        .shape()
        .ok_or_else(|| fail(OmogStatus::InvalidArgument, "bank is empty"))?;
    Ok(hop_stack(ds, alpha)?)
}

/// Relevance of every bank entry to `ds`, in bank order, computed on up to
/// 1024 nodes sampled with `seed`.
///
/// # Safety
/// Handles must be live; `out` must hold `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn omog_relevance(
    bank: *const OmogBank,
    ds: *const OmogDataset,
    seed: u64,
    out: *mut f64,
    len: usize,
) -> OmogStatus {
    guard(|| {
        let bank = &as_ref(bank, "bank")?.inner;
        let ds = &as_ref(ds, "dataset")?.inner;
        let out = out_slice(out, len, bank.len(), "out")?;
        let hops = hops_for(bank, ds)?;
        let sample = sample_nodes(ds.n(), RELEVANCE_SAMPLE, seed);
        let scores = relevance_scores(bank, &hops, Some(&sample))?;
        out[..scores.0.len()].copy_from_slice(&scores.0);
        Ok(())
    })
}

fn fused_for(bank: &ModelBank, ds: &GraphDataset, p: &OmogFusionParams) -> Result<(FusedModel, HopStack), Failure> {
    let owned;
    let bank = if !p.allow_self && bank.get(&ds.name).is_some() {
        owned = bank.without(&ds.name);
        &owned
    } else {
        bank
    };
    let hops = hops_for(bank, ds)?;
    let sample = sample_nodes(ds.n(), RELEVANCE_SAMPLE, p.seed);
    let scores = relevance_scores(bank, &hops, Some(&sample))?;
    let weights = select_and_weight(&scores, p.k, p.strategy.into(), p.temperature, p.seed)?;
    Ok((fuse_models(bank, &weights)?, hops))
}

unsafe fn params_or_default(p: *const OmogFusionParams) -> OmogFusionParams {
    p.as_ref().copied().unwrap_or_else(|| omog_fusion_params_default())
}

/// Zero-shot class prediction for every node of `ds` with the fused bank
/// model. `params` may be null for defaults.
///
/// # Safety
/// Handles must be live; `out` must hold `len >= n` values.
#[no_mangle]
pub unsafe extern "C" fn omog_infer_nc(
    bank: *const OmogBank,
    ds: *const OmogDataset,
    params: *const OmogFusionParams,
    out: *mut u32,
    len: usize,
) -> OmogStatus {
    guard(|| {
        let bank = &as_ref(bank, "bank")?.inner;
        let ds = &as_ref(ds, "dataset")?.inner;
        let out = out_slice(out, len, ds.n(), "out")?;
        let labels = ds
            .label_embeddings
            .as_ref()
            .ok_or_else(|| fail(OmogStatus::InvalidArgument, format!("dataset `{}` has no label embeddings", ds.name)))?;
        let (fused, hops) = fused_for(bank, ds, &params_or_default(params))?;
        let nodes: Vec<usize> = (0..ds.n()).collect();
        let f = encode_nodes(&fused.source, &hops, &nodes)?;
        let pred = predict_nc_zero(f.view(), Some(labels.view()))?;
        out[..pred.len()].copy_from_slice(&pred);
        Ok(())
    })
}

/// Link scores (cosine of fused embeddings) for `count` node pairs given as
/// `2 * count` ids `u0 v0 u1 v1 ...`. `params` may be null for defaults.
///
/// # Safety
/// Handles must be live; `pairs` must hold `2 * count` ids and `out`
/// `len >= count` doubles.
#[no_mangle]
pub unsafe extern "C" fn omog_score_pairs(
    bank: *const OmogBank,
    ds: *const OmogDataset,
    params: *const OmogFusionParams,
    pairs: *const usize,
    count: usize,
    out: *mut f64,
    len: usize,
) -> OmogStatus {
    guard(|| {
        let bank = &as_ref(bank, "bank")?.inner;
        let ds = &as_ref(ds, "dataset")?.inner;
        if pairs.is_null() && count > 0 {
            return Err(fail(OmogStatus::NullPointer, "pairs is null"));
        }
        let out = out_slice(out, len, count, "out")?;
        if count == 0 {
            return Ok(());
        }
        let ids = std::slice::from_raw_parts(pairs, 2 * count);
        if let Some(&bad) = ids.iter().find(|&&i| i >= ds.n()) {
            return Err(fail(
                OmogStatus::InvalidArgument,
                format!("node id {bad} out of range (n={})", ds.n()),
            ));
        }
        let mut nodes = ids.to_vec();
        nodes.sort_unstable();
        nodes.dedup();
        let local: Vec<(usize, usize)> = ids
            .chunks_exact(2)
            .map(|p| (nodes.binary_search(&p[0]).unwrap(), nodes.binary_search(&p[1]).unwrap()))
            .collect();
        let (fused, hops) = fused_for(bank, ds, &params_or_default(params))?;
        let f = encode_nodes(&fused.source, &hops, &nodes)?;
        let scores = predict_lp(f.view(), &local)?;
        out[..count].copy_from_slice(&scores);
        Ok(())
    })
}
