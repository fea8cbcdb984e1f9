//! Run configuration: everything a run needs, written out fully resolved as
//! `config.json`.

use std::fs;
use std::path::{Path, PathBuf};

use coca_core::{Mode, TaskSpec, TrainConfig, Vocabulary};
use serde::{Deserialize, Serialize};

use crate::error::{LabError, Result};

pub const DEFAULT_BINS: usize = 21;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvalOptions {
    /// Held-out prompts evaluated after training.
    pub n_eval: usize,
    pub ece_bins: usize,
}

impl Default for EvalOptions {
    fn default() -> Self {
        Self { n_eval: 5000, ece_bins: coca_core::metrics::DEFAULT_ECE_BINS }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReportOptions {
    /// Steps per row of the binned report series.
    pub bin_width: u64,
}

impl Default for ReportOptions {
    fn default() -> Self {
        Self { bin_width: 50 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub train: TrainConfig,
    pub task: TaskSpec,
    pub vocab: Vocabulary,
    pub out_dir: PathBuf,
    /// Checkpoint cadence in steps; 0 writes only the initial and final checkpoints.
    pub checkpoint_every: u64,
    pub eval: EvalOptions,
    pub report: ReportOptions,
}

impl RunConfig {
    /// Default task, vocabulary and hyper-parameters for `mode`.
    pub fn new(mode: Mode, seed: u64, out_dir: impl Into<PathBuf>) -> Self {
        let task = TaskSpec::default_spec();
        let vocab = Vocabulary::new(task.n_answers, task.answer_len, DEFAULT_BINS).expect("default vocabulary");
        let mut train = TrainConfig::new(mode, seed);
        if mode == Mode::Sequential {
            train = TrainConfig::sequential(1000, 1000, seed);
        }
        Self {
            train,
            task,
            vocab,
            out_dir: out_dir.into(),
            checkpoint_every: 500,
            eval: EvalOptions::default(),
            report: ReportOptions::default(),
        }
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(LabError::io(path))?;
        let cfg: RunConfig = serde_json::from_str(&text).map_err(LabError::json(path))?;
        Ok(cfg)
    }

    /// Applies derived values and checks every section.
    pub fn resolve(mut self) -> Result<Self> {
        self.train = self.train.resolve();
        self.validate()?;
        Ok(self)
    }

    pub fn validate(&self) -> Result<()> {
        self.vocab.validate()?;
        self.task.validate().map_err(|e| LabError::Config { field: "task", message: e.to_string() })?;
        self.task.check_vocab(&self.vocab).map_err(|e| LabError::Config { field: "vocab", message: e.to_string() })?;
        self.train.validate()?;
        if self.eval.ece_bins == 0 {
            return Err(LabError::Config { field: "eval.ece_bins", message: "must be at least 1".into() });
        }
        if self.report.bin_width == 0 {
            return Err(LabError::Config { field: "report.bin_width", message: "must be at least 1".into() });
        }
        Ok(())
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("config serializes");
        s.push('\n');
        s
    }
}
