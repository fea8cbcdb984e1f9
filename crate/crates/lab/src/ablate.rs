//! Multi-seed mode comparisons.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use coca_core::Mode;
use rayon::ThreadPool;

use crate::config::RunConfig;
use crate::error::{LabError, Result};
use crate::eval::{evaluate, EvalReport};
use crate::report::{windows, Window};
use crate::run::write_atomic;
use crate::train::train_in_memory;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Suite {
    /// Accuracy-then-confidence schedule against the joint reward.
    SeqVsJoint,
    /// Joint whole-sequence reward against segmented credit assignment.
    JointVsSegment,
}

impl Suite {
    pub fn modes(self) -> &'static [Mode] {
        match self {
            Suite::SeqVsJoint => &[Mode::Sequential, Mode::Joint],
            Suite::JointVsSegment => &[Mode::Joint, Mode::Coca],
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Suite::SeqVsJoint => "seq-vs-joint",
            Suite::JointVsSegment => "joint-vs-segment",
        }
    }
}

impl FromStr for Suite {
    type Err = LabError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "seq-vs-joint" => Ok(Suite::SeqVsJoint),
            "joint-vs-segment" => Ok(Suite::JointVsSegment),
            other => Err(LabError::Usage(format!("unknown suite `{other}` (expected seq-vs-joint or joint-vs-segment)"))),
        }
    }
}

#[derive(Clone, Debug)]
pub struct AblateOptions {
    /// Total steps per run; sequential runs split them evenly between phases.
    pub steps: u64,
    pub window: u64,
    pub n_eval: usize,
    pub out_dir: PathBuf,
}

#[derive(Clone, Debug)]
pub struct SeedRun {
    pub mode: Mode,
    pub seed: u64,
    pub windows: Vec<Window>,
    pub eval: EvalReport,
}

pub fn config_for(mode: Mode, seed: u64, steps: u64, n_eval: usize) -> RunConfig {
    let mut cfg = RunConfig::new(mode, seed, PathBuf::new());
    if mode == Mode::Sequential {
        let p1 = steps / 2;
        cfg.train.steps_phase1 = Some(p1);
        cfg.train.steps_phase2 = Some(steps - p1);
    }
    cfg.train.steps = steps;
    cfg.eval.n_eval = n_eval;
    cfg
}

pub fn run_suite(suite: Suite, seeds: &[u64], opts: &AblateOptions, pool: &ThreadPool) -> Result<Vec<SeedRun>> {
    if seeds.is_empty() {
        return Err(LabError::Usage("ablate needs at least one seed".into()));
    }
    if opts.window == 0 {
        return Err(LabError::Usage("--window must be positive".into()));
    }
    let mut runs = Vec::new();
    for &mode in suite.modes() {
        for &seed in seeds {
            let cfg = config_for(mode, seed, opts.steps, opts.n_eval).resolve()?;
            let (params, sink) = train_in_memory(&cfg, pool)?;
            let eval = evaluate(&params, &cfg.vocab, &cfg.task, cfg.eval.n_eval, seed, cfg.eval.ece_bins)?;
            runs.push(SeedRun { mode, seed, windows: windows(&sink.reports, opts.window), eval });
        }
    }
    Ok(runs)
}

pub fn median(xs: &mut [f64]) -> Option<f64> {
    if xs.is_empty() {
        return None;
    }
    xs.sort_by(f64::total_cmp);
    let n = xs.len();
    Some(if n % 2 == 1 { xs[n / 2] } else { 0.5 * (xs[n / 2 - 1] + xs[n / 2]) })
}

/// `mode,seed,step,mean_r_conf,mean_r_acc,refusal_rate`, one row per window with
/// `step` the window's last step.
pub fn comparison_csv(runs: &[SeedRun]) -> String {
    let mut s = String::from("mode,seed,step,mean_r_conf,mean_r_acc,refusal_rate\n");
    for r in runs {
        for w in &r.windows {
            let _ = writeln!(s, "{},{},{},{},{},{}", r.mode.name(), r.seed, w.end - 1, w.mean_r_conf, w.mean_r_acc, w.refusal_rate);
        }
    }
    s
}

/// Median over seeds per (mode, window).
pub fn median_csv(runs: &[SeedRun]) -> String {
    let mut s = String::from("mode,step,seeds,median_r_conf,median_r_acc,median_refusal_rate\n");
    let mut modes: Vec<Mode> = Vec::new();
    for r in runs {
        if !modes.contains(&r.mode) {
            modes.push(r.mode);
        }
    }
    for mode in modes {
        let of_mode: Vec<&SeedRun> = runs.iter().filter(|r| r.mode == mode).collect();
        let n_windows = of_mode.iter().map(|r| r.windows.len()).min().unwrap_or(0);
        for i in 0..n_windows {
            let col = |f: fn(&Window) -> f64| median(&mut of_mode.iter().map(|r| f(&r.windows[i])).collect::<Vec<_>>()).unwrap();
            let _ = writeln!(
                s,
                "{},{},{},{},{},{}",
                mode.name(),
                of_mode[0].windows[i].end - 1,
                of_mode.len(),
                col(|w| w.mean_r_conf),
                col(|w| w.mean_r_acc),
                col(|w| w.refusal_rate)
            );
        }
    }
    s
}

/// Held-out metrics per run.
pub fn final_csv(runs: &[SeedRun]) -> String {
    let mut s = String::from("mode,seed,accuracy,ece,brier,auroc,refusal_rate\n");
    let opt = |v: Option<f64>| v.map_or_else(|| "-".to_string(), |x| x.to_string());
    for r in runs {
        let e = &r.eval;
        let _ = writeln!(s, "{},{},{},{},{},{},{}", r.mode.name(), r.seed, e.accuracy, opt(e.ece), opt(e.brier), opt(e.auroc), e.refusal_rate);
    }
    s
}

pub fn write_outputs(dir: &Path, runs: &[SeedRun]) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(LabError::io(dir))?;
    write_atomic(&dir.join("comparison.csv"), comparison_csv(runs).as_bytes())?;
    write_atomic(&dir.join("comparison_median.csv"), median_csv(runs).as_bytes())?;
    write_atomic(&dir.join("final.csv"), final_csv(runs).as_bytes())
}
