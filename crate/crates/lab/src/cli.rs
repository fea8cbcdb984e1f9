use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use coca_core::{AnswerKey, Mode};

use crate::ablate::{self, AblateOptions, Suite};
use crate::config::RunConfig;
use crate::error::{LabError, Result};
use crate::eval::{evaluate, write_eval_files};
use crate::run::{self, RunDir};
use crate::train::{build_pool, resume, train};

#[derive(Debug, Parser)]
#[command(name = "coca", version, about = "Confidence-first RL experiments on synthetic tasks")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Train a policy and write a run directory.
    Train(TrainArgs),
    /// Evaluate a checkpoint on fresh prompts.
    Eval(EvalArgs),
    /// Run a multi-seed mode comparison.
    Ablate(AblateArgs),
    /// Summarize a run directory as report.md and CSV series.
    Report(ReportArgs),
    /// Compute metrics for external transcripts (JSONL).
    Ingest(IngestArgs),
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// JSON run config; flags given alongside override its fields.
    #[arg(long, conflicts_with = "resume")]
    pub config: Option<PathBuf>,
    /// coca, joint, rlvr, rlcr or sequential.
    #[arg(long, required_unless_present_any = ["config", "resume"])]
    pub mode: Option<Mode>,
    /// Continue an interrupted run directory from its latest checkpoint.
    #[arg(long)]
    pub resume: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub steps: Option<u64>,
    #[arg(long)]
    pub steps_phase1: Option<u64>,
    #[arg(long)]
    pub steps_phase2: Option<u64>,
    #[arg(long)]
    pub group_size: Option<usize>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub clip_eps: Option<f64>,
    #[arg(long)]
    pub kl_beta: Option<f64>,
    #[arg(long)]
    pub inner_epochs: Option<u32>,
    /// per-response or shared.
    #[arg(long, value_parser = parse_answer_key)]
    pub answer_key: Option<AnswerKey>,
    #[arg(long)]
    pub checkpoint_every: Option<u64>,
    #[arg(long)]
    pub n_eval: Option<usize>,
    /// Run directory (default runs/<mode>-seed<seed>).
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Rollout worker threads (default: available cores). Does not affect results.
    #[arg(long)]
    pub threads: Option<usize>,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    /// Run directory; its config.json and final checkpoint are used by default.
    #[arg(long, required_unless_present = "config")]
    pub run: Option<PathBuf>,
    /// Config describing the vocabulary and task spec.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Checkpoint file (default: the latest in the run directory).
    #[arg(long, required_unless_present = "run")]
    pub checkpoint: Option<PathBuf>,
    #[arg(long)]
    pub n_eval: Option<usize>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Output directory (default: the run directory).
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct AblateArgs {
    /// seq-vs-joint or joint-vs-segment.
    pub suite: String,
    /// Comma-separated seeds.
    #[arg(long, value_delimiter = ',', required = true)]
    pub seeds: Vec<u64>,
    #[arg(long, default_value_t = 2000)]
    pub steps: u64,
    /// Steps per comparison window.
    #[arg(long, default_value_t = 50)]
    pub window: u64,
    #[arg(long, default_value_t = 5000)]
    pub n_eval: usize,
    #[arg(long, default_value = "ablations")]
    pub out: PathBuf,
    #[arg(long)]
    pub threads: Option<usize>,
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    pub run: PathBuf,
    /// Steps per series row (default: the run's report.bin_width).
    #[arg(long)]
    pub bin_width: Option<u64>,
}

#[derive(Debug, Args)]
pub struct IngestArgs {
    pub transcripts: PathBuf,
    #[arg(long, default_value = ".")]
    pub out: PathBuf,
    #[arg(long, default_value_t = coca_core::metrics::DEFAULT_ECE_BINS)]
    pub ece_bins: usize,
}

fn parse_answer_key(s: &str) -> std::result::Result<AnswerKey, String> {
    match s {
        "per-response" => Ok(AnswerKey::PerResponse),
        "shared" => Ok(AnswerKey::Shared),
        _ => Err(format!("expected per-response or shared, got `{s}`")),
    }
}

impl TrainArgs {
    /// Config file (if any) with flag overrides applied, resolved and validated.
    pub fn to_config(&self) -> Result<RunConfig> {
        let mut cfg = match (&self.config, self.mode) {
            (Some(path), _) => RunConfig::load(path)?,
            (None, Some(mode)) => RunConfig::new(mode, self.seed.unwrap_or(0), PathBuf::new()),
            (None, None) => return Err(LabError::Usage("--mode or --config is required".into())),
        };
        let t = &mut cfg.train;
        if let Some(mode) = self.mode {
            if mode != t.mode && (mode == Mode::Sequential || t.mode == Mode::Sequential) {
                t.steps_phase1 = None;
                t.steps_phase2 = None;
            }
            t.mode = mode;
        }
        macro_rules! set {
            ($($flag:ident => $field:expr),* $(,)?) => {
                $(if let Some(v) = self.$flag { $field = v; })*
            };
        }
        set!(
            seed => t.seed,
            steps => t.steps,
            group_size => t.group_size,
            batch_size => t.batch_size,
            lr => t.lr,
            clip_eps => t.clip_eps,
            kl_beta => t.kl_beta,
            inner_epochs => t.inner_epochs,
            answer_key => cfg.task.answer_key,
            checkpoint_every => cfg.checkpoint_every,
            n_eval => cfg.eval.n_eval,
        );
        let t = &mut cfg.train;
        if self.steps_phase1.is_some() {
            t.steps_phase1 = self.steps_phase1;
        }
        if self.steps_phase2.is_some() {
            t.steps_phase2 = self.steps_phase2;
        }
        if t.mode == Mode::Sequential && (t.steps_phase1.is_none() || t.steps_phase2.is_none()) && self.config.is_none() {
            let p1 = t.steps / 2;
            t.steps_phase1.get_or_insert(p1);
            let p1 = t.steps_phase1.unwrap();
            t.steps_phase2.get_or_insert(t.steps.saturating_sub(p1));
        }
        if let Some(out) = &self.out {
            cfg.out_dir = out.clone();
        } else if cfg.out_dir.as_os_str().is_empty() {
            cfg.out_dir = PathBuf::from(format!("runs/{}-seed{}", cfg.train.mode.name(), cfg.train.seed));
        }
        cfg.resolve()
    }
}

pub fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Train(args) => cmd_train(&args),
        Command::Eval(args) => cmd_eval(&args),
        Command::Ablate(args) => cmd_ablate(&args),
        Command::Report(args) => {
            let md = crate::report::report(&args.run, args.bin_width)?;
            println!("{}", md.trim_end());
            Ok(())
        }
        Command::Ingest(args) => cmd_ingest(&args),
    }
}

fn cmd_train(args: &TrainArgs) -> Result<()> {
    let pool = build_pool(args.threads)?;
    let (summary, dir) = match &args.resume {
        Some(dir) => (resume(dir, &pool)?, dir.clone()),
        None => {
            let cfg = args.to_config()?;
            (train(&cfg, &pool)?, cfg.out_dir)
        }
    };
    println!("run: {}", dir.display());
    println!("steps: {}", summary.steps);
    println!("mean r_acc (last {}): {:.4}", summary.tail, summary.mean_r_acc);
    println!("mean r_conf (last {}): {:.4}", summary.tail, summary.mean_r_conf);
    println!("refusal rate (last {}): {:.4}", summary.tail, summary.refusal_rate);
    println!("class  target  E|s - target|");
    for g in &summary.class_gaps {
        println!("{:>5}  {:.4}  {:.4}", g.class_id, g.target, g.gap);
    }
    if let Some(e) = &summary.eval {
        let opt = |v: Option<f64>| v.map_or_else(|| "-".into(), |x| format!("{x:.4}"));
        println!(
            "held-out: accuracy {:.2}%  ece {}  brier {}  auroc {}  sr {:.3}",
            e.accuracy,
            opt(e.ece),
            opt(e.brier),
            opt(e.auroc),
            e.success_rate
        );
    }
    Ok(())
}

fn cmd_eval(args: &EvalArgs) -> Result<()> {
    let cfg = match (&args.config, &args.run) {
        (Some(path), _) => RunConfig::load(path)?,
        (None, Some(dir)) => RunDir::open(dir)?.read_config()?,
        (None, None) => return Err(LabError::Usage("--run or --config is required".into())),
    }
    .resolve()?;
    let checkpoint = match (&args.checkpoint, &args.run) {
        (Some(p), _) => p.clone(),
        (None, Some(dir)) => {
            let run = RunDir::open(dir)?;
            let last = run.checkpoints()?.into_iter().max().ok_or_else(|| LabError::Malformed {
                path: dir.clone(),
                message: "no checkpoints".into(),
            })?;
            run.checkpoint_path(last)
        }
        (None, None) => return Err(LabError::Usage("--checkpoint or --run is required".into())),
    };
    let params = run::read_checkpoint(&checkpoint)?;
    let n_eval = args.n_eval.unwrap_or(cfg.eval.n_eval);
    let report = evaluate(&params, &cfg.vocab, &cfg.task, n_eval, args.seed, cfg.eval.ece_bins)?;
    let out = args.out.clone().or_else(|| args.run.clone()).unwrap_or_else(|| PathBuf::from("."));
    write_eval_files(&out, &report)?;
    print!("{}", crate::eval::eval_csv(&report));
    Ok(())
}

fn cmd_ablate(args: &AblateArgs) -> Result<()> {
    let suite: Suite = args.suite.parse()?;
    let pool = build_pool(args.threads)?;
    let opts = AblateOptions { steps: args.steps, window: args.window, n_eval: args.n_eval, out_dir: args.out.clone() };
    let runs = ablate::run_suite(suite, &args.seeds, &opts, &pool)?;
    ablate::write_outputs(&opts.out_dir, &runs)?;
    println!("suite {} over seeds {:?}: {}", suite.name(), args.seeds, opts.out_dir.display());
    println!("mode         median r_conf(last)  median r_acc(last)  median refusal(last)  median ece");
    for &mode in suite.modes() {
        let of: Vec<_> = runs.iter().filter(|r| r.mode == mode).collect();
        let last = |f: fn(&crate::report::Window) -> f64| {
            ablate::median(&mut of.iter().filter_map(|r| r.windows.last().map(f)).collect::<Vec<_>>())
        };
        let ece = ablate::median(&mut of.iter().filter_map(|r| r.eval.ece).collect::<Vec<_>>());
        let fmt = |v: Option<f64>| v.map_or_else(|| "-".into(), |x| format!("{x:.4}"));
        println!(
            "{:<12} {:>19} {:>19} {:>21} {:>11}",
            mode.name(),
            fmt(last(|w| w.mean_r_conf)),
            fmt(last(|w| w.mean_r_acc)),
            fmt(last(|w| w.refusal_rate)),
            fmt(ece)
        );
    }
    Ok(())
}

fn cmd_ingest(args: &IngestArgs) -> Result<()> {
    let outcome = crate::ingest::ingest(&args.transcripts, args.ece_bins)?;
    write_eval_files(&args.out, &outcome.report)?;
    print!("{}", crate::eval::eval_csv(&outcome.report));
    println!("records: {}  skipped: {}", outcome.records.len(), outcome.skipped);
    Ok(())
}
