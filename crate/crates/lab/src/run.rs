//! Run directory layout and the append-only JSONL logs inside it.
//!
//! ```text
//! <run>/config.json          resolved RunConfig
//! <run>/state.json           completed steps, for resuming
//! <run>/metrics.jsonl        one StepReport per step
//! <run>/events.jsonl         mode changes, skipped updates, resumes
//! <run>/timing.jsonl         wall-clock per step
//! <run>/checkpoints/step_N.json
//! <run>/eval.csv, reliability.csv, summary.json
//! ```

use std::fs::{self, File, OpenOptions};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use coca_core::{Objective, PolicyParams, StepReport};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::config::RunConfig;
use crate::error::{LabError, Result};

pub const CONFIG: &str = "config.json";
pub const STATE: &str = "state.json";
pub const METRICS: &str = "metrics.jsonl";
pub const EVENTS: &str = "events.jsonl";
pub const TIMING: &str = "timing.jsonl";
pub const CHECKPOINTS: &str = "checkpoints";
pub const EVAL_CSV: &str = "eval.csv";
pub const RELIABILITY_CSV: &str = "reliability.csv";
pub const SUMMARY: &str = "summary.json";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "event", rename_all = "kebab-case", deny_unknown_fields)]
pub enum Event {
    /// The objective changes starting at `step`.
    ModeChange { step: u64, from: Objective, to: Objective },
    /// Inner epochs at `step` whose gradient was non-finite.
    SkippedUpdate { step: u64, epochs: u32 },
    /// Training resumed from the checkpoint after `step` completed steps.
    Resumed { step: u64 },
}

impl Event {
    pub fn step(&self) -> u64 {
        match *self {
            Event::ModeChange { step, .. } | Event::SkippedUpdate { step, .. } | Event::Resumed { step } => step,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Timing {
    pub step: u64,
    pub wall_ms: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunState {
    pub completed_steps: u64,
    pub total_steps: u64,
    pub finished: bool,
}

#[derive(Clone, Debug)]
pub struct RunDir {
    root: PathBuf,
}

impl RunDir {
    pub fn create(root: impl Into<PathBuf>) -> Result<Self> {
        let root = root.into();
        let ck = root.join(CHECKPOINTS);
        fs::create_dir_all(&ck).map_err(LabError::io(&ck))?;
        Ok(Self { root })
    }

    /// Opens an existing run; it must at least have a config.
    pub fn open(root: impl Into<PathBuf>) -> Result<Self> {
        let root = root.into();
        if !root.join(CONFIG).is_file() {
            return Err(LabError::Malformed { path: root, message: format!("no {CONFIG}; not a run directory") });
        }
        Ok(Self { root })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.root.join(name)
    }

    pub fn write_config(&self, cfg: &RunConfig) -> Result<()> {
        write_atomic(&self.path(CONFIG), cfg.to_json().as_bytes())
    }

    pub fn read_config(&self) -> Result<RunConfig> {
        RunConfig::load(&self.path(CONFIG))
    }

    pub fn checkpoint_path(&self, step: u64) -> PathBuf {
        self.root.join(CHECKPOINTS).join(format!("step_{step}.json"))
    }

    pub fn write_checkpoint(&self, step: u64, params: &PolicyParams) -> Result<()> {
        let text = serde_json::to_string(params).expect("params serialize");
        write_atomic(&self.checkpoint_path(step), text.as_bytes())
    }

    /// Steps with a checkpoint on disk, ascending.
    pub fn checkpoints(&self) -> Result<Vec<u64>> {
        let dir = self.root.join(CHECKPOINTS);
        let mut steps = Vec::new();
        for entry in fs::read_dir(&dir).map_err(LabError::io(&dir))? {
            let name = entry.map_err(LabError::io(&dir))?.file_name();
            let name = name.to_string_lossy();
            if let Some(n) = name.strip_prefix("step_").and_then(|s| s.strip_suffix(".json")) {
                if let Ok(n) = n.parse() {
                    steps.push(n);
                }
            }
        }
        steps.sort_unstable();
        Ok(steps)
    }

    pub fn write_state(&self, state: &RunState) -> Result<()> {
        let text = serde_json::to_string(state).expect("state serializes");
        write_atomic(&self.path(STATE), text.as_bytes())
    }

    pub fn read_state(&self) -> Result<RunState> {
        read_json(&self.path(STATE))
    }

    pub fn read_metrics(&self) -> Result<Vec<StepReport>> {
        read_jsonl(&self.path(METRICS))
    }

    pub fn read_events(&self) -> Result<Vec<Event>> {
        read_jsonl(&self.path(EVENTS))
    }
}

pub fn read_checkpoint(path: &Path) -> Result<PolicyParams> {
    read_json(path)
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(LabError::io(path))?;
    serde_json::from_str(&text).map_err(LabError::json(path))
}

/// Reads every line; a missing file reads as empty.
pub fn read_jsonl<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>> {
    let file = match File::open(path) {
        Ok(f) => f,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(Vec::new()),
        Err(e) => return Err(LabError::io(path)(e)),
    };
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(LabError::io(path))?;
        if line.trim().is_empty() {
            continue;
        }
        let value = serde_json::from_str(&line).map_err(|e| LabError::Malformed {
            path: path.to_path_buf(),
            message: format!("line {}: {e}", i + 1),
        })?;
        out.push(value);
    }
    Ok(out)
}

/// Writes through a temporary file and renames it into place.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let tmp = path.with_extension("tmp");
    fs::write(&tmp, bytes).map_err(LabError::io(&tmp))?;
    fs::rename(&tmp, path).map_err(LabError::io(path))
}

/// Appends one JSON value per line.
pub struct JsonlWriter {
    path: PathBuf,
    out: BufWriter<File>,
}

impl JsonlWriter {
    pub fn append(path: &Path) -> Result<Self> {
        let file = OpenOptions::new().create(true).append(true).open(path).map_err(LabError::io(path))?;
        Ok(Self { path: path.to_path_buf(), out: BufWriter::new(file) })
    }

    /// Truncates the file.
    pub fn create(path: &Path) -> Result<Self> {
        let file = File::create(path).map_err(LabError::io(path))?;
        Ok(Self { path: path.to_path_buf(), out: BufWriter::new(file) })
    }

    pub fn write<T: Serialize>(&mut self, value: &T) -> Result<()> {
        serde_json::to_writer(&mut self.out, value).map_err(LabError::json(&self.path))?;
        self.out.write_all(b"\n").map_err(LabError::io(&self.path))
    }

    pub fn flush(&mut self) -> Result<()> {
        self.out.flush().map_err(LabError::io(&self.path))
    }
}

/// Rewrites a JSONL file keeping only the values `keep` accepts.
pub fn retain_jsonl<T: Serialize + DeserializeOwned>(path: &Path, keep: impl Fn(&T) -> bool) -> Result<()> {
    let values: Vec<T> = read_jsonl(path)?;
    let mut w = JsonlWriter::create(path)?;
    for v in values.iter().filter(|v| keep(v)) {
        w.write(v)?;
    }
    w.flush()
}
