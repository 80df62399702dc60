use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::dataset::read_json;
use crate::error::{OmogError, Result};
use crate::fuse::{Strategy, DEFAULT_K, RELEVANCE_SAMPLE};
use crate::pretrain::TrainConfig;

/// Environment variable that overrides every configured seed.
pub const SEED_ENV: &str = "OMOG_SEED";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Task {
    Nc,
    Lp,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Mode {
    ZeroShot,
    FewShot,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Ablation {
    None,
    /// Test hop stack replaced by copies of the raw features.
    NoSgc,
    /// Uniform fusion of every bank entry.
    NoScore,
    /// Predict from pooled raw hop stacks, no source model.
    NoSource,
}

impl Ablation {
    pub const ALL: [Ablation; 4] = [Ablation::None, Ablation::NoSgc, Ablation::NoScore, Ablation::NoSource];
}

impl fmt::Display for Ablation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Ablation::None => "none",
            Ablation::NoSgc => "no-sgc",
            Ablation::NoScore => "no-score",
            Ablation::NoSource => "no-source",
        })
    }
}

impl FromStr for Ablation {
    type Err = OmogError;

    fn from_str(s: &str) -> Result<Self> {
        Ablation::ALL
            .into_iter()
            .find(|a| a.to_string() == s)
            .ok_or_else(|| {
                OmogError::InvalidArgument(format!(
                    "unknown ablation `{s}` (expected none, no-sgc, no-score or no-source)"
                ))
            })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentPlan {
    /// Dataset directories; the held-out name is each dataset's own name.
    pub datasets: Vec<PathBuf>,
    pub task: Task,
    pub mode: Mode,
    pub shots: usize,
    pub k: usize,
    pub strategy: Strategy,
    pub ablation: Ablation,
    pub seeds: Vec<u64>,
    pub temperature: f64,
    pub relevance_sample: usize,
    /// Fraction of edges held out as link-prediction positives.
    pub lp_test_fraction: f64,
    /// Pretrain entries missing from the bank before evaluating.
    pub pretrain_missing: bool,
    pub train: TrainConfig,
}

impl Default for ExperimentPlan {
    fn default() -> Self {
        ExperimentPlan {
            datasets: Vec::new(),
            task: Task::Nc,
            mode: Mode::ZeroShot,
            shots: 5,
            k: DEFAULT_K,
            strategy: Strategy::TopK,
            ablation: Ablation::None,
            seeds: vec![0],
            temperature: 1.0,
            relevance_sample: RELEVANCE_SAMPLE,
            lp_test_fraction: 0.1,
            pretrain_missing: true,
            train: TrainConfig::default(),
        }
    }
}

impl ExperimentPlan {
    /// Reads a JSON plan and applies the `OMOG_SEED` override.
    pub fn load(path: &Path) -> Result<Self> {
        let mut plan: ExperimentPlan = read_json(path)?;
        plan.apply_seed_env()?;
        plan.validate()?;
        Ok(plan)
    }

    /// Replaces `seeds` and `train.seed` with `OMOG_SEED` when set.
    pub fn apply_seed_env(&mut self) -> Result<()> {
        if let Some(seed) = seed_from_env()? {
            self.seeds = vec![seed];
            self.train.seed = seed;
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        if self.mode == Mode::FewShot && self.shots == 0 {
            return Err(OmogError::Config("few-shot mode needs at least one shot".into()));
        }
        if self.mode == Mode::FewShot && self.task == Task::Lp {
            return Err(OmogError::Config("few-shot mode applies to node classification only".into()));
        }
        if self.k == 0 {
            return Err(OmogError::Config("k must be at least 1".into()));
        }
        if self.seeds.is_empty() {
            return Err(OmogError::Config("at least one seed required".into()));
        }
        if !(self.temperature > 0.0) {
            return Err(OmogError::Config("temperature must be positive".into()));
        }
        if self.relevance_sample == 0 {
            return Err(OmogError::Config("relevance sample must be positive".into()));
        }
        if !(self.lp_test_fraction > 0.0 && self.lp_test_fraction < 1.0) {
            return Err(OmogError::Config("lp_test_fraction must lie in (0, 1)".into()));
        }
        self.train.validate()
    }
}

pub fn seed_from_env() -> Result<Option<u64>> {
    match std::env::var(SEED_ENV) {
        Ok(v) => v
            .trim()
            .parse()
            .map(Some)
            .map_err(|_| OmogError::Config(format!("{SEED_ENV}=`{v}` is not an unsigned integer"))),
        Err(_) => Ok(None),
    }
}
