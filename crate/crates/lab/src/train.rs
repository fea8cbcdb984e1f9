//! The training loop: snapshot, roll out B groups in parallel, apply the mode's
//! update, log.
//!
//! Every random draw comes from a substream keyed by `(seed, step, group, purpose)`
//! and gradients are reduced in group order, so results do not depend on the number
//! of worker threads.

use std::ops::Range;
use std::path::Path;
use std::time::Instant;

use coca_core::rng::{substream, Purpose};
use coca_core::trainer::{
    ascend, draw_prompt, group_gradient, rollout_group, sum_in_order, SegmentAdvantages, SurrogateParams,
};
use coca_core::{Gradient, PolicyParams, PolicyShape, PolicySnapshot, RolloutGroup, StepReport};
use rayon::prelude::*;
use rayon::ThreadPool;
use serde::Serialize;

use crate::config::RunConfig;
use crate::error::{LabError, Result};
use crate::eval::{class_gaps, evaluate, write_eval_files, ClassGap, EvalReport};
use crate::run::{self, Event, JsonlWriter, RunDir, RunState, Timing};

pub fn build_pool(threads: Option<usize>) -> Result<ThreadPool> {
    let n = threads.unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()));
    rayon::ThreadPoolBuilder::new()
        .num_threads(n.max(1))
        .build()
        .map_err(|e| LabError::Pool(e.to_string()))
}

/// Receives each completed step.
pub trait StepSink {
    fn step(&mut self, report: &StepReport, params: &PolicyParams, wall_ms: f64) -> Result<()>;
    fn event(&mut self, event: &Event) -> Result<()>;
}

/// Keeps reports and events in memory.
#[derive(Debug, Default)]
pub struct MemorySink {
    pub reports: Vec<StepReport>,
    pub events: Vec<Event>,
}

impl StepSink for MemorySink {
    fn step(&mut self, report: &StepReport, _: &PolicyParams, _: f64) -> Result<()> {
        self.reports.push(report.clone());
        Ok(())
    }

    fn event(&mut self, event: &Event) -> Result<()> {
        self.events.push(event.clone());
        Ok(())
    }
}

/// Samples the B groups of one step against the frozen snapshot.
pub fn collect_groups(cfg: &RunConfig, pool: &ThreadPool, snapshot: &PolicySnapshot, step: u64) -> Result<Vec<RolloutGroup>> {
    let t = &cfg.train;
    pool.install(|| {
        (0..t.batch_size as u64)
            .into_par_iter()
            .map(|b| {
                let mut prompt_rng = substream(t.seed, step, b, Purpose::Instance);
                let inst = draw_prompt(&cfg.task, &cfg.vocab, step * t.batch_size as u64 + b, &mut prompt_rng)?;
                let mut token_rng = substream(t.seed, step, b, Purpose::Rollout);
                let mut key_rng = substream(t.seed, step, b, Purpose::AnswerKey);
                Ok(rollout_group(
                    snapshot,
                    &cfg.vocab,
                    &cfg.task,
                    inst,
                    t.group_size,
                    t.norm_eps,
                    &mut token_rng,
                    &mut key_rng,
                ))
            })
            .collect()
    })
}

/// Runs the steps in `steps`, starting from `params`. `reference` anchors the KL
/// penalty when the mode uses one.
pub fn run_steps(
    cfg: &RunConfig,
    pool: &ThreadPool,
    mut params: PolicyParams,
    reference: &PolicyParams,
    steps: Range<u64>,
    sink: &mut dyn StepSink,
) -> Result<PolicyParams> {
    let t = &cfg.train;
    let shape: PolicyShape = params.shape;
    for step in steps {
        let started = Instant::now();
        let objective = t.objective_at(step);
        if step > 0 && t.objective_at(step - 1) != objective {
            sink.event(&Event::ModeChange { step, from: t.objective_at(step - 1), to: objective })?;
        }
        let snapshot = PolicySnapshot::take(&params);
        let groups = collect_groups(cfg, pool, &snapshot, step)?;
        let advs: Vec<SegmentAdvantages> =
            groups.iter().map(|g| SegmentAdvantages::for_group(g, objective, t.norm_eps)).collect();
        let sp = SurrogateParams::from_config(t, Some(reference));
        let outcome = ascend(&params, t, |p| {
            let parts: Vec<Gradient> = pool.install(|| {
                groups.par_iter().zip(&advs).map(|(g, a)| group_gradient(p, &cfg.vocab, g, a, sp)).collect()
            });
            sum_in_order(shape, parts)
        });
        if outcome.skipped_epochs > 0 {
            sink.event(&Event::SkippedUpdate { step, epochs: outcome.skipped_epochs })?;
        }
        params = outcome.params;
        let report = StepReport::from_groups(step, t, &groups, &cfg.vocab);
        sink.step(&report, &params, started.elapsed().as_secs_f64() * 1e3)?;
    }
    Ok(params)
}

pub fn initial_params(cfg: &RunConfig) -> PolicyParams {
    PolicyParams::zeros(PolicyShape::new(&cfg.vocab, &cfg.task))
}

/// Trains without touching the file system.
pub fn train_in_memory(cfg: &RunConfig, pool: &ThreadPool) -> Result<(PolicyParams, MemorySink)> {
    cfg.validate()?;
    let init = initial_params(cfg);
    let mut sink = MemorySink::default();
    let params = run_steps(cfg, pool, init.clone(), &init, 0..cfg.train.steps, &mut sink)?;
    Ok((params, sink))
}

#[derive(Clone, Debug, Serialize)]
pub struct TrainSummary {
    pub steps: u64,
    /// Means over the last `tail` logged steps.
    pub tail: usize,
    pub mean_r_acc: f64,
    pub mean_r_conf: f64,
    pub refusal_rate: f64,
    pub class_gaps: Vec<ClassGap>,
    /// Held-out evaluation; absent for a zero-step run.
    pub eval: Option<EvalReport>,
}

pub const SUMMARY_TAIL: usize = 50;

/// Writes metrics, events, timing, state and checkpoints as steps complete.
struct FileSink<'a> {
    run: &'a RunDir,
    every: u64,
    total: u64,
    metrics: JsonlWriter,
    events: JsonlWriter,
    timing: JsonlWriter,
}

impl StepSink for FileSink<'_> {
    fn step(&mut self, report: &StepReport, params: &PolicyParams, wall_ms: f64) -> Result<()> {
        self.metrics.write(report)?;
        self.timing.write(&Timing { step: report.step, wall_ms })?;
        let done = report.step + 1;
        if self.every > 0 && done.is_multiple_of(self.every) && done < self.total {
            self.flush()?;
            self.run.write_checkpoint(done, params)?;
            self.run.write_state(&RunState { completed_steps: done, total_steps: self.total, finished: false })?;
        }
        Ok(())
    }

    fn event(&mut self, event: &Event) -> Result<()> {
        self.events.write(event)
    }
}

impl FileSink<'_> {
    fn flush(&mut self) -> Result<()> {
        self.metrics.flush()?;
        self.events.flush()?;
        self.timing.flush()
    }
}

/// Starts a fresh run in `cfg.out_dir`, replacing any logs already there.
pub fn train(cfg: &RunConfig, pool: &ThreadPool) -> Result<TrainSummary> {
    let cfg = cfg.clone().resolve()?;
    let run = RunDir::create(&cfg.out_dir)?;
    for stale in run.checkpoints()? {
        let p = run.checkpoint_path(stale);
        std::fs::remove_file(&p).map_err(LabError::io(&p))?;
    }
    run.write_config(&cfg)?;
    let init = initial_params(&cfg);
    run.write_checkpoint(0, &init)?;
    run.write_state(&RunState { completed_steps: 0, total_steps: cfg.train.steps, finished: false })?;
    let sink = FileSink {
        run: &run,
        every: cfg.checkpoint_every,
        total: cfg.train.steps,
        metrics: JsonlWriter::create(&run.path(run::METRICS))?,
        events: JsonlWriter::create(&run.path(run::EVENTS))?,
        timing: JsonlWriter::create(&run.path(run::TIMING))?,
    };
    finish(&cfg, &run, pool, init.clone(), &init, 0, sink)
}

/// Continues an interrupted run from its latest checkpoint. Logs past that
/// checkpoint are dropped and regenerated, so the result matches an uninterrupted run.
pub fn resume(dir: &Path, pool: &ThreadPool) -> Result<TrainSummary> {
    let run = RunDir::open(dir)?;
    let cfg = run.read_config()?.resolve()?;
    let start = run
        .checkpoints()?
        .into_iter()
        .filter(|&s| s <= cfg.train.steps)
        .max()
        .ok_or_else(|| LabError::Malformed { path: dir.to_path_buf(), message: "no checkpoints".into() })?;
    let params = run::read_checkpoint(&run.checkpoint_path(start))?;
    let reference = run::read_checkpoint(&run.checkpoint_path(0))?;
    crate::eval::check_checkpoint(&params, &cfg.vocab, &cfg.task)?;
    run::retain_jsonl::<StepReport>(&run.path(run::METRICS), |r| r.step < start)?;
    run::retain_jsonl::<Event>(&run.path(run::EVENTS), |e| e.step() < start || matches!(e, Event::Resumed { .. }))?;
    run::retain_jsonl::<Timing>(&run.path(run::TIMING), |t| t.step < start)?;
    let mut sink = FileSink {
        run: &run,
        every: cfg.checkpoint_every,
        total: cfg.train.steps,
        metrics: JsonlWriter::append(&run.path(run::METRICS))?,
        events: JsonlWriter::append(&run.path(run::EVENTS))?,
        timing: JsonlWriter::append(&run.path(run::TIMING))?,
    };
    if start < cfg.train.steps {
        sink.event(&Event::Resumed { step: start })?;
    }
    finish(&cfg, &run, pool, params, &reference, start, sink)
}

fn finish(
    cfg: &RunConfig,
    run: &RunDir,
    pool: &ThreadPool,
    params: PolicyParams,
    reference: &PolicyParams,
    start: u64,
    mut sink: FileSink<'_>,
) -> Result<TrainSummary> {
    let total = cfg.train.steps;
    let params = run_steps(cfg, pool, params, reference, start..total, &mut sink)?;
    sink.flush()?;
    run.write_checkpoint(total, &params)?;
    run.write_state(&RunState { completed_steps: total, total_steps: total, finished: true })?;
    let gaps = class_gaps(&params, &cfg.vocab, &cfg.task)?;
    if total == 0 {
        return Ok(summarize(&[], gaps, None));
    }

    let eval = evaluate(&params, &cfg.vocab, &cfg.task, cfg.eval.n_eval, cfg.train.seed, cfg.eval.ece_bins)?;
    write_eval_files(run.root(), &eval)?;
    let reports = run.read_metrics()?;
    let summary = summarize(&reports, gaps, Some(eval));
    let text = serde_json::to_string_pretty(&summary).expect("summary serializes");
    run::write_atomic(&run.path(run::SUMMARY), text.as_bytes())?;
    Ok(summary)
}

pub fn summarize(reports: &[StepReport], class_gaps: Vec<ClassGap>, eval: Option<EvalReport>) -> TrainSummary {
    let tail = &reports[reports.len().saturating_sub(SUMMARY_TAIL)..];
    let mean = |f: fn(&StepReport) -> f64| {
        if tail.is_empty() {
            0.0
        } else {
            tail.iter().map(f).sum::<f64>() / tail.len() as f64
        }
    };
    TrainSummary {
        steps: reports.len() as u64,
        tail: tail.len(),
        mean_r_acc: mean(|r| r.mean_r_acc),
        mean_r_conf: mean(|r| r.mean_r_conf),
        refusal_rate: mean(|r| r.refusal_rate),
        class_gaps,
        eval,
    }
}
