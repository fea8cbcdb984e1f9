//! Binned step series and a markdown summary for a run directory.

use std::fmt::Write as _;
use std::path::Path;

use coca_core::StepReport;
use serde::Serialize;

use crate::error::Result;
use crate::run::{self, write_atomic, RunDir};

/// Means over one window of consecutive steps `[start, end)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Window {
    pub start: u64,
    pub end: u64,
    pub steps: usize,
    pub mean_r_conf: f64,
    pub mean_r_acc: f64,
    pub mean_response_len: f64,
    pub refusal_rate: f64,
}

/// Groups reports by `step / width`. The last window may be partial.
pub fn windows(reports: &[StepReport], width: u64) -> Vec<Window> {
    assert!(width > 0, "window width must be positive");
    let mut out: Vec<Window> = Vec::new();
    let mut sums = [0.0f64; 4];
    let mut count = 0usize;
    let mut current: Option<u64> = None;
    let close = |bin: u64, sums: &mut [f64; 4], count: &mut usize, out: &mut Vec<Window>| {
        if *count > 0 {
            let n = *count as f64;
            out.push(Window {
                start: bin * width,
                end: (bin + 1) * width,
                steps: *count,
                mean_r_conf: sums[0] / n,
                mean_r_acc: sums[1] / n,
                mean_response_len: sums[2] / n,
                refusal_rate: sums[3] / n,
            });
        }
        *sums = [0.0; 4];
        *count = 0;
    };
    for r in reports {
        let bin = r.step / width;
        if current.is_some_and(|c| c != bin) {
            close(current.unwrap(), &mut sums, &mut count, &mut out);
        }
        current = Some(bin);
        sums[0] += r.mean_r_conf;
        sums[1] += r.mean_r_acc;
        sums[2] += r.mean_response_len;
        sums[3] += r.refusal_rate;
        count += 1;
    }
    if let Some(c) = current {
        close(c, &mut sums, &mut count, &mut out);
    }
    out
}

pub type Column = fn(&Window) -> f64;

pub const SERIES: [(&str, Column); 4] = [
    ("series_r_conf.csv", |w| w.mean_r_conf),
    ("series_r_acc.csv", |w| w.mean_r_acc),
    ("series_response_len.csv", |w| w.mean_response_len),
    ("series_refusal.csv", |w| w.refusal_rate),
];

pub fn series_csv(windows: &[Window], value: Column) -> String {
    let mut s = String::from("bin_start,bin_end,steps,mean\n");
    for w in windows {
        let _ = writeln!(s, "{},{},{},{}", w.start, w.end, w.steps, value(w));
    }
    s
}

/// Writes `report.md` and the series CSVs into the run directory. Overwrites
/// previous output, so re-running is idempotent.
pub fn report(dir: &Path, bin_width: Option<u64>) -> Result<String> {
    let run = RunDir::open(dir)?;
    let cfg = run.read_config()?;
    let width = bin_width.unwrap_or(cfg.report.bin_width).max(1);
    let reports = run.read_metrics()?;
    let events = run.read_events()?;
    let wins = windows(&reports, width);
    for (name, f) in SERIES {
        write_atomic(&run.path(name), series_csv(&wins, f).as_bytes())?;
    }

    let mut md = String::new();
    let _ = writeln!(md, "# Run report\n");
    let _ = writeln!(md, "- mode: {}", cfg.train.mode.name());
    let _ = writeln!(md, "- seed: {}", cfg.train.seed);
    let _ = writeln!(md, "- configured steps: {}", cfg.train.steps);
    let _ = writeln!(md, "- logged steps: {}", reports.len());
    let _ = writeln!(md, "- group size: {}, batch: {}, lr: {}", cfg.train.group_size, cfg.train.batch_size, cfg.train.lr);
    let _ = writeln!(md, "- bin width: {width}\n");
    if reports.is_empty() {
        let _ = writeln!(md, "no steps");
    } else {
        let _ = writeln!(md, "## Step series\n");
        let _ = writeln!(md, "| steps | mean r_conf | mean r_acc | response len | refusal |");
        let _ = writeln!(md, "|---|---|---|---|---|");
        for w in &wins {
            let _ = writeln!(
                md,
                "| {}-{} | {:.4} | {:.4} | {:.2} | {:.3} |",
                w.start,
                w.end - 1,
                w.mean_r_conf,
                w.mean_r_acc,
                w.mean_response_len,
                w.refusal_rate
            );
        }
    }
    if !events.is_empty() {
        let _ = writeln!(md, "\n## Events\n");
        for e in &events {
            let _ = writeln!(md, "- {}", serde_json::to_string(e).expect("event serializes"));
        }
    }
    if let Ok(eval) = std::fs::read_to_string(run.path(run::EVAL_CSV)) {
        let _ = writeln!(md, "\n## Held-out evaluation\n");
        let _ = writeln!(md, "| metric | value |\n|---|---|");
        for line in eval.lines().skip(1) {
            if let Some((k, v)) = line.split_once(',') {
                let _ = writeln!(md, "| {k} | {v} |");
            }
        }
    }
    write_atomic(&run.path("report.md"), md.as_bytes())?;
    Ok(md)
}

#[cfg(test)]
mod tests {
    use super::*;
    use coca_core::Objective;

    fn rep(step: u64, conf: f64) -> StepReport {
        StepReport {
            step,
            objective: Objective::Segmented,
            seed: 0,
            mean_r_acc: 1.0,
            mean_r_conf: conf,
            mean_response_len: 2.0,
            mean_abs_gap: 0.0,
            refusal_rate: 0.0,
        }
    }

    #[test]
    fn two_thousand_steps_make_forty_windows() {
        let r: Vec<StepReport> = (0..2000).map(|s| rep(s, -(s as f64))).collect();
        let w = windows(&r, 50);
        assert_eq!(w.len(), 40);
        assert!(w.iter().all(|w| w.steps == 50));
        assert_eq!(w[0].mean_r_conf, -24.5);
    }

    #[test]
    fn partial_last_window() {
        let r: Vec<StepReport> = (0..7).map(|s| rep(s, 1.0)).collect();
        let w = windows(&r, 5);
        assert_eq!(w.len(), 2);
        assert_eq!((w[1].start, w[1].end, w[1].steps), (5, 10, 2));
    }

    #[test]
    fn empty_input_has_no_windows() {
        assert!(windows(&[], 50).is_empty());
    }
}
