//! The model bank: one directory per pretraining graph holding its source
//! model, scoring model, centroid and metadata.
//!
//! ```text
//! <bank>/<name>/entry.json
//! <bank>/<name>/source.params
//! <bank>/<name>/scoring.params
//! <bank>/<name>/centroid.bin
//! ```
//!
//! Adding an entry never rewrites existing files; entries are written to a
//! temporary directory and renamed into place under an exclusive lock file.

use std::fs;
use std::path::{Path, PathBuf};

use ndarray::Array1;
use serde::{Deserialize, Serialize};

use crate::binio::{self, ByteReader, ByteWriter};
use crate::dataset::read_json;
use crate::error::{OmogError, Result};
use crate::nn::{encode_params, fill_from_records, read_param_file, ScoringParams, SourceParams};
use crate::pretrain::DomainCentroid;

const LOCK_FILE: &str = ".omog.lock";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EntryConfig {
    pub name: String,
    pub d: usize,
    pub alpha: usize,
    pub d_ff: usize,
    pub d_h: usize,
    pub seed: u64,
    pub created_unix_ms: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BankEntry {
    pub config: EntryConfig,
    pub source: SourceParams<f32>,
    pub scoring: ScoringParams<f32>,
    pub centroid: DomainCentroid,
}

impl BankEntry {
    pub fn name(&self) -> &str {
        &self.config.name
    }

    pub fn validate(&self) -> Result<()> {
        let c = &self.config;
        validate_name(&c.name)?;
        let s = &self.source;
        let sc = &self.scoring;
        if (s.d, s.alpha, s.d_ff) != (c.d, c.alpha, c.d_ff) {
            return Err(OmogError::Inconsistent(format!(
                "{}: source model is (d={}, alpha={}, d_ff={}), entry says (d={}, alpha={}, d_ff={})",
                c.name, s.d, s.alpha, s.d_ff, c.d, c.alpha, c.d_ff
            )));
        }
        if (sc.d, sc.alpha, sc.d_h) != (c.d, c.alpha, c.d_h) {
            return Err(OmogError::Inconsistent(format!(
                "{}: scoring model is (d={}, alpha={}, d_h={}), entry says (d={}, alpha={}, d_h={})",
                c.name, sc.d, sc.alpha, sc.d_h, c.d, c.alpha, c.d_h
            )));
        }
        if self.centroid.dim() != c.d {
            return Err(OmogError::Inconsistent(format!(
                "{}: centroid has length {}, expected {}",
                c.name,
                self.centroid.dim(),
                c.d
            )));
        }
        Ok(())
    }

    /// Serialised files of this entry as `(file name, bytes)`.
    pub fn encode(&self) -> Result<Vec<(&'static str, Vec<u8>)>> {
        let mut json = serde_json::to_vec_pretty(&self.config).map_err(|e| OmogError::Json {
            path: PathBuf::from("entry.json"),
            source: e,
        })?;
        json.push(b'\n');
        let mut cw = ByteWriter::new();
        cw.magic(binio::CENTROID_MAGIC)
            .u32(self.centroid.dim() as u32)
            .f32s(self.centroid.0.as_slice().expect("contiguous centroid"));
        Ok(vec![
            ("entry.json", json),
            ("source.params", encode_params(&self.source)),
            ("scoring.params", encode_params(&self.scoring)),
            ("centroid.bin", cw.into_bytes()),
        ])
    }

    pub fn save(&self, dir: &Path) -> Result<()> {
        self.validate()?;
        fs::create_dir_all(dir).map_err(|e| OmogError::io(dir, e))?;
        for (file, bytes) in self.encode()? {
            let p = dir.join(file);
            fs::write(&p, bytes).map_err(|e| OmogError::io(&p, e))?;
        }
        Ok(())
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let config: EntryConfig = read_json(&dir.join("entry.json"))?;
        let mut source = SourceParams::<f32>::zeroed(config.d, config.alpha, config.d_ff);
        let src_path = dir.join("source.params");
        fill_from_records(&mut source, &read_param_file(&src_path)?, &src_path.display().to_string())?;
        let mut scoring = ScoringParams::<f32>::zeroed(config.d, config.alpha, config.d_h);
        let sc_path = dir.join("scoring.params");
        fill_from_records(&mut scoring, &read_param_file(&sc_path)?, &sc_path.display().to_string())?;

        let c_path = dir.join("centroid.bin");
        let mut r = ByteReader::open(&c_path)?;
        r.expect_magic(binio::CENTROID_MAGIC)?;
        let d = r.u32()? as usize;
        if d != config.d {
            return Err(OmogError::format(&c_path, 8, format!("centroid length {d}, entry says {}", config.d)));
        }
        let data = r.f32s(d, "centroid")?;
        r.expect_end()?;

        let entry = BankEntry {
            config,
            source,
            scoring,
            centroid: DomainCentroid(Array1::from(data)),
        };
        entry.validate()?;
        Ok(entry)
    }
}

fn validate_name(name: &str) -> Result<()> {
    if name.is_empty()
        || name.starts_with('.')
        || name.contains(['/', '\\'])
        || name.chars().any(char::is_control)
    {
        return Err(OmogError::InvalidArgument(format!(
            "`{name}` is not a valid bank entry name"
        )));
    }
    Ok(())
}

/// Entries ordered lexicographically by name; all share `(d, alpha)`.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ModelBank {
    entries: Vec<BankEntry>,
}

impl ModelBank {
    pub fn new(mut entries: Vec<BankEntry>) -> Result<Self> {
        entries.sort_by(|a, b| a.name().cmp(b.name()));
        for w in entries.windows(2) {
            if w[0].name() == w[1].name() {
                return Err(OmogError::NameCollision(w[0].name().to_string()));
            }
        }
        for e in &entries {
            e.validate()?;
        }
        if let Some(first) = entries.first() {
            let key = (first.config.d, first.config.alpha);
            if let Some(bad) = entries.iter().find(|e| (e.config.d, e.config.alpha) != key) {
                return Err(OmogError::Inconsistent(format!(
                    "entry `{}` has (d={}, alpha={}) but `{}` has (d={}, alpha={})",
                    bad.name(),
                    bad.config.d,
                    bad.config.alpha,
                    first.name(),
                    key.0,
                    key.1
                )));
            }
        }
        Ok(ModelBank { entries })
    }

    pub fn entries(&self) -> &[BankEntry] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn names(&self) -> Vec<&str> {
        self.entries.iter().map(|e| e.name()).collect()
    }

    pub fn get(&self, name: &str) -> Option<&BankEntry> {
        self.entries.iter().find(|e| e.name() == name)
    }

    /// `(d, alpha)` shared by all entries, if any.
    pub fn shape(&self) -> Option<(usize, usize)> {
        self.entries.first().map(|e| (e.config.d, e.config.alpha))
    }

    /// A bank view with one entry removed.
    pub fn without(&self, name: &str) -> ModelBank {
        ModelBank {
            entries: self.entries.iter().filter(|e| e.name() != name).cloned().collect(),
        }
    }

    /// A bank view restricted to `names`; every name must exist.
    pub fn subset(&self, names: &[&str]) -> Result<ModelBank> {
        let entries = names
            .iter()
            .map(|n| self.get(n).cloned().ok_or_else(|| OmogError::MissingEntry(n.to_string())))
            .collect::<Result<Vec<_>>>()?;
        ModelBank::new(entries)
    }

    fn check_compatible(&self, entry: &BankEntry) -> Result<()> {
        if self.get(entry.name()).is_some() {
            return Err(OmogError::NameCollision(entry.name().to_string()));
        }
        if let Some((d, alpha)) = self.shape() {
            if (entry.config.d, entry.config.alpha) != (d, alpha) {
                return Err(OmogError::Shape(format!(
                    "entry `{}` has (d={}, alpha={}), bank has (d={d}, alpha={alpha})",
                    entry.name(),
                    entry.config.d,
                    entry.config.alpha
                )));
            }
        }
        Ok(())
    }

    /// Writes every entry under `dir` (which must not already hold them).
    pub fn save(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir).map_err(|e| OmogError::io(dir, e))?;
        for e in &self.entries {
            e.save(&dir.join(e.name()))?;
        }
        Ok(())
    }
}

/// Loads every entry directory under `dir`, skipping dot-prefixed names.
pub fn bank_load(dir: &Path) -> Result<ModelBank> {
    let mut entries = Vec::new();
    let listing = fs::read_dir(dir).map_err(|e| OmogError::io(dir, e))?;
    let mut names = Vec::new();
    for item in listing {
        let item = item.map_err(|e| OmogError::io(dir, e))?;
        let name = item.file_name().to_string_lossy().into_owned();
        if name.starts_with('.') || !item.path().is_dir() {
            continue;
        }
        names.push(name);
    }
    names.sort();
    for name in names {
        let entry = BankEntry::load(&dir.join(&name))?;
        if entry.name() != name {
            return Err(OmogError::Inconsistent(format!(
                "directory `{name}` holds entry named `{}`",
                entry.name()
            )));
        }
        entries.push(entry);
    }
    ModelBank::new(entries)
}

struct BankLock {
    path: PathBuf,
}

impl BankLock {
    fn acquire(dir: &Path) -> Result<Self> {
        let path = dir.join(LOCK_FILE);
        match fs::OpenOptions::new().write(true).create_new(true).open(&path) {
            Ok(_) => Ok(BankLock { path }),
            Err(e) if e.kind() == std::io::ErrorKind::AlreadyExists => Err(OmogError::Locked(dir.to_path_buf())),
            Err(e) => Err(OmogError::io(&path, e)),
        }
    }
}

impl Drop for BankLock {
    fn drop(&mut self) {
        let _ = fs::remove_file(&self.path);
    }
}

/// Appends `entry` to the bank at `dir` (created if missing) and returns the
/// reloaded bank.
pub fn bank_add(dir: &Path, entry: &BankEntry) -> Result<ModelBank> {
    entry.validate()?;
    fs::create_dir_all(dir).map_err(|e| OmogError::io(dir, e))?;
    let _lock = BankLock::acquire(dir)?;
    let bank = bank_load(dir)?;
    bank.check_compatible(entry)?;

    let tmp = dir.join(format!(".tmp-{}", entry.name()));
    if tmp.exists() {
        fs::remove_dir_all(&tmp).map_err(|e| OmogError::io(&tmp, e))?;
    }
    entry.save(&tmp)?;
    let dest = dir.join(entry.name());
    fs::rename(&tmp, &dest).map_err(|e| OmogError::io(&dest, e))?;
    bank_load(dir)
}

/// Problems found by [`bank_verify`], one line per entry.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VerifyLine {
    pub name: String,
    pub ok: bool,
    pub detail: String,
}

/// Loads each entry independently and checks that re-encoding it
/// reproduces the stored bytes.
pub fn bank_verify(dir: &Path) -> Result<Vec<VerifyLine>> {
    let mut out = Vec::new();
    let mut names: Vec<String> = fs::read_dir(dir)
        .map_err(|e| OmogError::io(dir, e))?
        .filter_map(|e| e.ok())
        .filter(|e| e.path().is_dir())
        .map(|e| e.file_name().to_string_lossy().into_owned())
        .filter(|n| !n.starts_with('.'))
        .collect();
    names.sort();
    for name in names {
        let path = dir.join(&name);
        let line = match BankEntry::load(&path).and_then(|e| {
            for (file, bytes) in e.encode()? {
                let on_disk = fs::read(path.join(file)).map_err(|err| OmogError::io(path.join(file), err))?;
                if on_disk != bytes {
                    return Err(OmogError::Inconsistent(format!("{file} does not re-encode identically")));
                }
            }
            Ok(e)
        }) {
            Ok(e) => VerifyLine {
                name,
                ok: true,
                detail: format!("d={} alpha={} d_ff={} d_h={}", e.config.d, e.config.alpha, e.config.d_ff, e.config.d_h),
            },
            Err(err) => VerifyLine {
                name,
                ok: false,
                detail: err.to_string(),
            },
        };
        out.push(line);
    }
    if let Err(e) = bank_load(dir) {
        out.push(VerifyLine {
            name: "<bank>".into(),
            ok: false,
            detail: e.to_string(),
        });
    }
    Ok(out)
}
