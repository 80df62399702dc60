//! `OMOGPARM` files: magic, `u32` record count, then per record a
//! `u16`-length UTF-8 name, `u32` rank, `u32` dims and float32 data.

use std::path::Path;

use super::ParamSet;
use crate::binio::{self, ByteReader, ByteWriter};
use crate::error::{OmogError, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct ParamRecord {
    pub name: String,
    pub dims: Vec<usize>,
    pub data: Vec<f32>,
}

pub fn encode_params<P: ParamSet<f32>>(params: &P) -> Vec<u8> {
    let tensors = params.tensors();
    let mut w = ByteWriter::new();
    w.magic(binio::PARAMS_MAGIC).u32(tensors.len() as u32);
    for (name, t) in &tensors {
        w.u16(name.len() as u16).raw(name.as_bytes());
        w.u32(t.ndim() as u32);
        for &dim in t.shape() {
            w.u32(dim as u32);
        }
        let flat: Vec<f32> = t.iter().copied().collect();
        w.f32s(&flat);
    }
    w.into_bytes()
}

pub fn write_param_file<P: ParamSet<f32>>(path: &Path, params: &P) -> Result<()> {
    let bytes = encode_params(params);
    std::fs::write(path, bytes).map_err(|e| OmogError::io(path, e))
}

pub fn read_param_file(path: &Path) -> Result<Vec<ParamRecord>> {
    let mut r = ByteReader::open(path)?;
    r.expect_magic(binio::PARAMS_MAGIC)?;
    let count = r.u32()? as usize;
    let mut out = Vec::with_capacity(count);
    for _ in 0..count {
        let len = r.u16()? as usize;
        let at = r.offset();
        let raw = r.bytes(len, "record name")?;
        let name = String::from_utf8(raw)
            .map_err(|_| OmogError::format(path, at, "record name is not UTF-8"))?;
        let rank = r.u32()? as usize;
        if rank > 8 {
            return Err(r.error(format!("implausible rank {rank} for `{name}`")));
        }
        let dims: Vec<usize> = r.u32s(rank, "dims")?.into_iter().map(|d| d as usize).collect();
        let count: usize = dims.iter().product();
        let data = r.f32s(count, &format!("tensor `{name}`"))?;
        out.push(ParamRecord { name, dims, data });
    }
    r.expect_end()?;
    Ok(out)
}

/// Copies records into `target` after checking that names, order and shapes
/// agree exactly.
pub(crate) fn fill_from_records<P: ParamSet<f32>>(target: &mut P, records: &[ParamRecord], what: &str) -> Result<()> {
    let mut tensors = target.tensors_mut();
    if tensors.len() != records.len() {
        return Err(OmogError::Inconsistent(format!(
            "{what}: expected {} tensors, file has {}",
            tensors.len(),
            records.len()
        )));
    }
    for ((name, t), rec) in tensors.iter_mut().zip(records) {
        if *name != rec.name {
            return Err(OmogError::Inconsistent(format!(
                "{what}: expected tensor `{name}`, found `{}`",
                rec.name
            )));
        }
        if t.shape() != rec.dims.as_slice() {
            return Err(OmogError::Inconsistent(format!(
                "{what}: tensor `{name}` has shape {:?}, expected {:?}",
                rec.dims,
                t.shape()
            )));
        }
        for (dst, &src) in t.iter_mut().zip(&rec.data) {
            *dst = src;
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::{ScoringParams, SourceParams};

    #[test]
    fn source_params_round_trip() {
        let p = SourceParams::<f32>::init(4, 2, 8, 11);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("source.params");
        write_param_file(&path, &p).unwrap();
        let recs = read_param_file(&path).unwrap();
        let mut q = SourceParams::<f32>::zeroed(4, 2, 8);
        fill_from_records(&mut q, &recs, "source").unwrap();
        assert_eq!(p, q);
        assert_eq!(encode_params(&q), std::fs::read(&path).unwrap());
    }

    #[test]
    fn shape_disagreement_is_reported() {
        let p = ScoringParams::<f32>::init(4, 1, 4, 0);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("scoring.params");
        write_param_file(&path, &p).unwrap();
        let recs = read_param_file(&path).unwrap();
        let mut wrong = ScoringParams::<f32>::zeroed(4, 2, 4);
        assert!(fill_from_records(&mut wrong, &recs, "scoring").is_err());
    }

    #[test]
    fn truncated_file_is_a_format_error() {
        let p = ScoringParams::<f32>::init(2, 0, 2, 0);
        let bytes = encode_params(&p);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("cut.params");
        std::fs::write(&path, &bytes[..bytes.len() - 3]).unwrap();
        assert!(matches!(read_param_file(&path), Err(OmogError::Format { .. })));
    }
}
