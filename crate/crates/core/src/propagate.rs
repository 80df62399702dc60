//! Self-loop normalised adjacency and parameter-free multi-hop feature
//! propagation.

use std::path::Path;

use ndarray::{s, Array2, Array3, ArrayView2, Axis};
use rayon::prelude::*;

use crate::binio::{self, ByteReader, ByteWriter};
use crate::dataset::{Csr, GraphDataset};
use crate::error::{OmogError, Result};

pub const DEFAULT_ALPHA: usize = 4;

/// `D^-1/2 (A + I) D^-1/2` in CSR form, diagonal included.
#[derive(Debug, Clone)]
pub struct NormalizedAdjacency {
    row_ptr: Vec<usize>,
    cols: Vec<u32>,
    vals: Vec<f64>,
}

impl NormalizedAdjacency {
    pub fn from_csr(adj: &Csr) -> Self {
        let n = adj.num_nodes();
        let inv_sqrt: Vec<f64> = (0..n)
            .map(|i| 1.0 / ((adj.degree(i) + 1) as f64).sqrt())
            .collect();
        let mut row_ptr = Vec::with_capacity(n + 1);
        let mut cols = Vec::with_capacity(adj.num_arcs() + n);
        let mut vals = Vec::with_capacity(adj.num_arcs() + n);
        row_ptr.push(0);
        for i in 0..n {
            let mut self_done = false;
            for &j in adj.neighbors(i) {
                if !self_done && j as usize > i {
                    cols.push(i as u32);
                    vals.push(inv_sqrt[i] * inv_sqrt[i]);
                    self_done = true;
                }
                cols.push(j);
                vals.push(inv_sqrt[i] * inv_sqrt[j as usize]);
            }
            if !self_done {
                cols.push(i as u32);
                vals.push(inv_sqrt[i] * inv_sqrt[i]);
            }
            row_ptr.push(cols.len());
        }
        NormalizedAdjacency { row_ptr, cols, vals }
    }

    pub fn num_nodes(&self) -> usize {
        self.row_ptr.len() - 1
    }

    /// Stored (column, value) pairs of row `i`, columns ascending.
    pub fn row(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let r = self.row_ptr[i]..self.row_ptr[i + 1];
        self.cols[r.clone()]
            .iter()
            .zip(&self.vals[r])
            .map(|(&c, &v)| (c as usize, v))
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        let r = self.row_ptr[i]..self.row_ptr[i + 1];
        match self.cols[r.clone()].binary_search(&(j as u32)) {
            Ok(k) => self.vals[r.start + k],
            Err(_) => 0.0,
        }
    }

    pub fn to_dense(&self) -> Array2<f64> {
        let n = self.num_nodes();
        let mut out = Array2::zeros((n, n));
        for i in 0..n {
            for (j, v) in self.row(i) {
                out[[i, j]] = v;
            }
        }
        out
    }

    /// One step `J X`, float32 in and out with float64 accumulation per
    /// output entry.
    pub fn apply(&self, x: ArrayView2<f32>) -> Result<Array2<f32>> {
        let n = self.num_nodes();
        if x.nrows() != n {
            return Err(OmogError::Shape(format!(
                "propagation matrix is {n}x{n}, features have {} rows",
                x.nrows()
            )));
        }
        let d = x.ncols();
        let mut out = Array2::<f32>::zeros((n, d));
        out.axis_iter_mut(Axis(0))
            .into_par_iter()
            .enumerate()
            .for_each(|(i, mut row)| {
                let mut acc = vec![0.0f64; d];
                for (j, w) in self.row(i) {
                    for (a, &xv) in acc.iter_mut().zip(x.row(j).iter()) {
                        *a += w * xv as f64;
                    }
                }
                for (o, a) in row.iter_mut().zip(acc) {
                    *o = a as f32;
                }
            });
        Ok(out)
    }
}

pub fn normalized_adjacency(dataset: &GraphDataset) -> NormalizedAdjacency {
    NormalizedAdjacency::from_csr(&dataset.adjacency)
}

/// Per-node stack of propagated features, shape `(n, alpha + 1, d)`.
/// Hop 0 is the raw feature matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct HopStack {
    data: Array3<f32>,
}

impl HopStack {
    pub fn from_array(data: Array3<f32>) -> Result<Self> {
        if data.shape()[1] == 0 {
            return Err(OmogError::Shape("hop stack needs at least one hop".into()));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(OmogError::NonFinite("hop stack".into()));
        }
        Ok(HopStack { data })
    }

    /// `alpha + 1` copies of `x`; the structure-free stack.
    pub fn repeated(x: ArrayView2<f32>, alpha: usize) -> Self {
        let (n, d) = x.dim();
        let mut data = Array3::zeros((n, alpha + 1, d));
        for k in 0..=alpha {
            data.slice_mut(s![.., k, ..]).assign(&x);
        }
        HopStack { data }
    }

    pub fn num_nodes(&self) -> usize {
        self.data.shape()[0]
    }

    pub fn num_hops(&self) -> usize {
        self.data.shape()[1]
    }

    pub fn alpha(&self) -> usize {
        self.num_hops() - 1
    }

    pub fn dim(&self) -> usize {
        self.data.shape()[2]
    }

    pub fn hop(&self, k: usize) -> ArrayView2<'_, f32> {
        self.data.slice(s![.., k, ..])
    }

    pub fn node(&self, i: usize) -> ArrayView2<'_, f32> {
        self.data.slice(s![i, .., ..])
    }

    pub fn as_array(&self) -> &Array3<f32> {
        &self.data
    }

    /// Copies the stacks of `nodes` into a `(nodes.len(), alpha + 1, d)` batch.
    pub fn gather(&self, nodes: &[usize]) -> Array3<f32> {
        self.data.select(Axis(0), nodes)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let (n, l, d) = self.data.dim();
        let mut w = ByteWriter::new();
        w.magic(binio::HOPS_MAGIC).u32(n as u32).u32(l as u32).u32(d as u32);
        let flat: Vec<f32> = self.data.iter().copied().collect();
        w.f32s(&flat);
        w.write_to(path)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let mut r = ByteReader::open(path)?;
        r.expect_magic(binio::HOPS_MAGIC)?;
        let n = r.u32()? as usize;
        let l = r.u32()? as usize;
        let d = r.u32()? as usize;
        if r.remaining() != n * l * d * 4 {
            return Err(r.error(format!(
                "shape mismatch: header declares {n}x{l}x{d}, file has {} data bytes",
                r.remaining()
            )));
        }
        let flat = r.f32s(n * l * d, "hop data")?;
        let data = Array3::from_shape_vec((n, l, d), flat).expect("length checked");
        HopStack::from_array(data)
    }
}

/// Hop `k` of the result is `J^k X`.
pub fn sgc_propagate(j: &NormalizedAdjacency, x: ArrayView2<f32>, alpha: usize) -> Result<HopStack> {
    let (n, d) = x.dim();
    if j.num_nodes() != n {
        return Err(OmogError::Shape(format!(
            "propagation matrix is {0}x{0}, features have {n} rows",
            j.num_nodes()
        )));
    }
    let mut data = Array3::<f32>::zeros((n, alpha + 1, d));
    data.slice_mut(s![.., 0, ..]).assign(&x);
    let mut current = x.to_owned();
    for k in 1..=alpha {
        current = j.apply(current.view())?;
        data.slice_mut(s![.., k, ..]).assign(&current);
    }
    HopStack::from_array(data)
}

/// Normalised adjacency plus propagation in one call.
pub fn hop_stack(dataset: &GraphDataset, alpha: usize) -> Result<HopStack> {
    sgc_propagate(&normalized_adjacency(dataset), dataset.features.view(), alpha)
}

/// File name of the cached hop stack inside a dataset directory.
pub fn hop_cache_name(alpha: usize) -> String {
    format!("hops_alpha{alpha}.bin")
}

/// Loads `dir/hops_alpha{alpha}.bin` when it matches `dataset` (shape and a
/// bit-exact hop 0), otherwise propagates and writes the cache.
pub fn cached_hop_stack(dataset: &GraphDataset, dir: &Path, alpha: usize) -> Result<HopStack> {
    let path = dir.join(hop_cache_name(alpha));
    if path.exists() {
        let cached = HopStack::load(&path)?;
        if cached.num_nodes() == dataset.n()
            && cached.alpha() == alpha
            && cached.dim() == dataset.d()
            && cached.hop(0) == dataset.features.view()
        {
            return Ok(cached);
        }
        log::warn!("{}: stale hop cache, recomputing", path.display());
    }
    let hops = hop_stack(dataset, alpha)?;
    hops.save(&path)?;
    Ok(hops)
}
