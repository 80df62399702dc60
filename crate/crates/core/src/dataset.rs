//! Graph datasets: features, undirected adjacency, labels and label-text
//! embeddings, plus the on-disk directory format.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::Path;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::binio::{self, ByteReader, ByteWriter};
use crate::error::{OmogError, Result};

/// Compressed sparse row adjacency. Both directions of every undirected edge
/// are stored; neighbour lists are sorted and free of duplicates and
/// self-loops.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Csr {
    row_ptr: Vec<usize>,
    cols: Vec<u32>,
}

impl Csr {
    /// Builds a symmetric CSR from undirected pairs. Self-loops and duplicate
    /// pairs (in either orientation) are dropped; the number of dropped
    /// duplicates is returned alongside.
    pub fn from_undirected(n: usize, pairs: &[(u32, u32)]) -> (Self, usize) {
        let mut canon: Vec<(u32, u32)> = pairs
            .iter()
            .filter(|(u, v)| u != v)
            .map(|&(u, v)| if u < v { (u, v) } else { (v, u) })
            .collect();
        let before = canon.len();
        canon.sort_unstable();
        canon.dedup();
        let dups = before - canon.len();

        let mut degree = vec![0usize; n];
        for &(u, v) in &canon {
            degree[u as usize] += 1;
            degree[v as usize] += 1;
        }
        let mut row_ptr = Vec::with_capacity(n + 1);
        row_ptr.push(0);
        for d in &degree {
            row_ptr.push(row_ptr.last().unwrap() + d);
        }
        let mut fill = row_ptr[..n].to_vec();
        let mut cols = vec![0u32; row_ptr[n]];
        for &(u, v) in &canon {
            cols[fill[u as usize]] = v;
            fill[u as usize] += 1;
            cols[fill[v as usize]] = u;
            fill[v as usize] += 1;
        }
        for i in 0..n {
            cols[row_ptr[i]..row_ptr[i + 1]].sort_unstable();
        }
        (Csr { row_ptr, cols }, dups)
    }

    pub fn num_nodes(&self) -> usize {
        self.row_ptr.len() - 1
    }

    /// Number of stored directed arcs (twice the undirected edge count).
    pub fn num_arcs(&self) -> usize {
        self.cols.len()
    }

    pub fn num_edges(&self) -> usize {
        self.cols.len() / 2
    }

    pub fn neighbors(&self, i: usize) -> &[u32] {
        &self.cols[self.row_ptr[i]..self.row_ptr[i + 1]]
    }

    pub fn degree(&self, i: usize) -> usize {
        self.row_ptr[i + 1] - self.row_ptr[i]
    }

    pub fn has_edge(&self, u: usize, v: usize) -> bool {
        self.neighbors(u).binary_search(&(v as u32)).is_ok()
    }

    /// Undirected edges, each once with `u < v`, in lexicographic order.
    pub fn edges(&self) -> Vec<(u32, u32)> {
        let mut out = Vec::with_capacity(self.num_edges());
        for u in 0..self.num_nodes() {
            for &v in self.neighbors(u) {
                if (u as u32) < v {
                    out.push((u as u32, v));
                }
            }
        }
        out
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Splits {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub train: Option<Vec<u32>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub test: Option<Vec<u32>>,
    /// Few-shot support node ids keyed by class id (JSON object keys are
    /// decimal strings).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub support: Option<BTreeMap<String, Vec<u32>>>,
}

impl Splits {
    pub fn is_empty(&self) -> bool {
        self.train.is_none() && self.test.is_none() && self.support.is_none()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Meta {
    pub name: String,
    pub n: usize,
    pub d: usize,
    pub num_classes: usize,
}

/// A validated graph dataset. Immutable once constructed.
#[derive(Debug, Clone, PartialEq)]
pub struct GraphDataset {
    pub name: String,
    pub features: Array2<f32>,
    pub adjacency: Csr,
    /// Per-node class id; `None` means unlabeled.
    pub labels: Option<Vec<Option<u32>>>,
    pub label_embeddings: Option<Array2<f32>>,
    pub splits: Splits,
}

impl GraphDataset {
    /// Validates and assembles a dataset. Edges are treated as undirected;
    /// duplicates are dropped with a warning.
    pub fn new(
        name: impl Into<String>,
        features: Array2<f32>,
        edges: &[(u32, u32)],
        labels: Option<Vec<Option<u32>>>,
        label_embeddings: Option<Array2<f32>>,
        splits: Splits,
    ) -> Result<Self> {
        let name = name.into();
        let n = features.nrows();
        if let Some((row, _)) = features
            .indexed_iter()
            .find(|(_, v)| !v.is_finite())
            .map(|(ix, _)| ix)
        {
            return Err(OmogError::NonFinite(format!("features row {row}")));
        }
        for (k, &(u, v)) in edges.iter().enumerate() {
            if u as usize >= n || v as usize >= n {
                return Err(OmogError::InvalidArgument(format!(
                    "edge {k} ({u}, {v}) has an endpoint >= n={n}"
                )));
            }
        }
        let (adjacency, dups) = Csr::from_undirected(n, edges);
        if dups > 0 {
            log::warn!("{name}: dropped {dups} duplicate edges");
        }
        let ds = GraphDataset {
            name,
            features,
            adjacency,
            labels,
            label_embeddings,
            splits,
        };
        ds.validate()?;
        Ok(ds)
    }

    pub fn n(&self) -> usize {
        self.features.nrows()
    }

    pub fn d(&self) -> usize {
        self.features.ncols()
    }

    pub fn num_classes(&self) -> usize {
        self.label_embeddings.as_ref().map_or(0, |e| e.nrows())
    }

    /// Nodes that carry a label, in id order.
    pub fn labeled_nodes(&self) -> Vec<usize> {
        match &self.labels {
            Some(l) => l
                .iter()
                .enumerate()
                .filter_map(|(i, y)| y.map(|_| i))
                .collect(),
            None => Vec::new(),
        }
    }

    pub fn label(&self, i: usize) -> Option<u32> {
        self.labels.as_ref().and_then(|l| l[i])
    }

    fn validate(&self) -> Result<()> {
        let n = self.n();
        let d = self.d();
        if let Some(emb) = &self.label_embeddings {
            if emb.ncols() != d {
                return Err(OmogError::Shape(format!(
                    "label embeddings have {} columns, features have {d}",
                    emb.ncols()
                )));
            }
            if emb.iter().any(|v| !v.is_finite()) {
                return Err(OmogError::NonFinite("label embeddings".into()));
            }
        }
        if let Some(labels) = &self.labels {
            if labels.len() != n {
                return Err(OmogError::Shape(format!(
                    "{} labels for {n} nodes",
                    labels.len()
                )));
            }
            let distinct: BTreeSet<u32> = labels.iter().flatten().copied().collect();
            let c = self.num_classes();
            if let Some(&max) = distinct.iter().next_back() {
                if self.label_embeddings.is_some() && max as usize >= c {
                    return Err(OmogError::InvalidArgument(format!(
                        "label {max} out of range for {c} label embeddings"
                    )));
                }
            }
            if self.label_embeddings.is_some() && distinct.len() != c {
                return Err(OmogError::Shape(format!(
                    "{} distinct labels but {c} label embedding rows",
                    distinct.len()
                )));
            }
        }
        let check_ids = |ids: &[u32], what: &str| -> Result<()> {
            match ids.iter().find(|&&i| i as usize >= n) {
                Some(bad) => Err(OmogError::InvalidArgument(format!(
                    "{what} split contains node {bad} >= n={n}"
                ))),
                None => Ok(()),
            }
        };
        if let Some(t) = &self.splits.train {
            check_ids(t, "train")?;
        }
        if let Some(t) = &self.splits.test {
            check_ids(t, "test")?;
        }
        if let Some(s) = &self.splits.support {
            for (class, ids) in s {
                class.parse::<u32>().map_err(|_| {
                    OmogError::InvalidArgument(format!("support class key `{class}` is not an integer"))
                })?;
                check_ids(ids, "support")?;
            }
        }
        Ok(())
    }

    /// Writes the dataset directory. Label and split files are only written
    /// when present.
    pub fn save(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir).map_err(|e| OmogError::io(dir, e))?;
        let meta = Meta {
            name: self.name.clone(),
            n: self.n(),
            d: self.d(),
            num_classes: self.num_classes(),
        };
        write_json(&dir.join("meta.json"), &meta)?;

        let feats: Vec<f32> = self.features.iter().copied().collect();
        binio::write_matrix(
            &dir.join("features.bin"),
            binio::FEATURES_MAGIC,
            self.n(),
            self.d(),
            &feats,
        )?;

        let edges = self.adjacency.edges();
        let mut w = ByteWriter::new();
        w.magic(binio::EDGES_MAGIC).u32(edges.len() as u32).u32(0);
        for (u, v) in &edges {
            w.u32(*u).u32(*v);
        }
        w.write_to(&dir.join("edges.bin"))?;

        if let Some(labels) = &self.labels {
            let raw: Vec<i32> = labels.iter().map(|l| l.map_or(-1, |c| c as i32)).collect();
            let mut w = ByteWriter::new();
            w.magic(binio::LABELS_MAGIC).u32(raw.len() as u32).u32(0).i32s(&raw);
            w.write_to(&dir.join("labels.bin"))?;
        }
        if let Some(emb) = &self.label_embeddings {
            let data: Vec<f32> = emb.iter().copied().collect();
            binio::write_matrix(
                &dir.join("label_embeddings.bin"),
                binio::LABEL_EMB_MAGIC,
                emb.nrows(),
                emb.ncols(),
                &data,
            )?;
        }
        if !self.splits.is_empty() {
            write_json(&dir.join("splits.json"), &self.splits)?;
        }
        Ok(())
    }
}

pub(crate) fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| OmogError::Json {
        path: path.to_path_buf(),
        source: e,
    })?;
    text.push('\n');
    fs::write(path, text).map_err(|e| OmogError::io(path, e))
}

pub(crate) fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|e| OmogError::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| OmogError::Json {
        path: path.to_path_buf(),
        source: e,
    })
}

/// Loads and validates a dataset directory.
pub fn load_dataset(dir: &Path) -> Result<GraphDataset> {
    let meta_path = dir.join("meta.json");
    let meta: Meta = read_json(&meta_path)?;

    let feat_path = dir.join("features.bin");
    let (n, d, feats) = binio::read_matrix(&feat_path, binio::FEATURES_MAGIC)?;
    if n != meta.n || d != meta.d {
        return Err(OmogError::format(
            &feat_path,
            8,
            format!("header is {n}x{d} but meta.json declares {}x{}", meta.n, meta.d),
        ));
    }
    let features = Array2::from_shape_vec((n, d), feats).expect("length checked by reader");

    let edge_path = dir.join("edges.bin");
    let mut r = ByteReader::open(&edge_path)?;
    r.expect_magic(binio::EDGES_MAGIC)?;
    let m = r.u32()? as usize;
    let _pad = r.u32()?;
    if r.remaining() != m * 8 {
        return Err(r.error(format!(
            "shape mismatch: header declares {m} edges ({} bytes), file has {} bytes",
            m * 8,
            r.remaining()
        )));
    }
    let mut pairs = Vec::with_capacity(m);
    for _ in 0..m {
        let at = r.offset();
        let u = r.u32()?;
        let v = r.u32()?;
        if u as usize >= n || v as usize >= n {
            return Err(OmogError::format(
                &edge_path,
                at,
                format!("edge ({u}, {v}) has an endpoint >= n={n}"),
            ));
        }
        pairs.push((u, v));
    }

    let label_path = dir.join("labels.bin");
    let labels = if label_path.exists() {
        let mut r = ByteReader::open(&label_path)?;
        r.expect_magic(binio::LABELS_MAGIC)?;
        let ln = r.u32()? as usize;
        let _pad = r.u32()?;
        if ln != n {
            return Err(OmogError::format(
                &label_path,
                8,
                format!("header declares {ln} labels, dataset has {n} nodes"),
            ));
        }
        if r.remaining() != ln * 4 {
            return Err(r.error(format!(
                "shape mismatch: expected {} bytes of labels, found {}",
                ln * 4,
                r.remaining()
            )));
        }
        let start = r.offset();
        let raw = r.i32s(ln, "labels")?;
        let mut out = Vec::with_capacity(ln);
        for (i, y) in raw.into_iter().enumerate() {
            match y {
                -1 => out.push(None),
                y if y >= 0 => out.push(Some(y as u32)),
                y => {
                    return Err(OmogError::format(
                        &label_path,
                        start + 4 * i as u64,
                        format!("invalid label {y}"),
                    ))
                }
            }
        }
        Some(out)
    } else {
        None
    };

    let emb_path = dir.join("label_embeddings.bin");
    let label_embeddings = if emb_path.exists() {
        let (c, ed, data) = binio::read_matrix(&emb_path, binio::LABEL_EMB_MAGIC)?;
        if ed != d {
            return Err(OmogError::format(
                &emb_path,
                12,
                format!("label embedding width {ed} differs from feature width {d}"),
            ));
        }
        if c != meta.num_classes {
            return Err(OmogError::format(
                &emb_path,
                8,
                format!("{c} label embedding rows but meta.json declares {} classes", meta.num_classes),
            ));
        }
        Some(Array2::from_shape_vec((c, d), data).expect("length checked by reader"))
    } else {
        None
    };

    let split_path = dir.join("splits.json");
    let splits = if split_path.exists() {
        read_json(&split_path)?
    } else {
        Splits::default()
    };

    GraphDataset::new(meta.name, features, &pairs, labels, label_embeddings, splits)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csr_is_symmetric_and_deduplicated() {
        let (csr, dups) = Csr::from_undirected(4, &[(0, 1), (1, 0), (1, 2), (2, 2), (3, 1)]);
        assert_eq!(dups, 1);
        assert_eq!(csr.num_arcs(), 6);
        for u in 0..4 {
            for &v in csr.neighbors(u) {
                assert!(csr.has_edge(v as usize, u));
                assert_ne!(v as usize, u);
            }
        }
        assert_eq!(csr.edges(), vec![(0, 1), (1, 2), (1, 3)]);
    }

    #[test]
    fn rejects_non_finite_features() {
        let mut x = Array2::<f32>::zeros((2, 2));
        x[[1, 0]] = f32::NAN;
        let err = GraphDataset::new("bad", x, &[], None, None, Splits::default()).unwrap_err();
        assert!(matches!(err, OmogError::NonFinite(_)));
    }

    #[test]
    fn label_embedding_rows_must_match_distinct_labels() {
        let x = Array2::<f32>::zeros((3, 2));
        let labels = Some(vec![Some(0), Some(0), None]);
        let emb = Some(Array2::<f32>::zeros((2, 2)));
        let err = GraphDataset::new("bad", x, &[], labels, emb, Splits::default()).unwrap_err();
        assert!(matches!(err, OmogError::Shape(_)));
    }

    #[test]
    fn rejects_out_of_range_split_ids() {
        let x = Array2::<f32>::zeros((3, 2));
        let splits = Splits {
            test: Some(vec![0, 7]),
            ..Default::default()
        };
        assert!(GraphDataset::new("bad", x, &[], None, None, splits).is_err());
    }
}
