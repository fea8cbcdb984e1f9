//! Held-out evaluation of a policy and the CSV files it produces.

use std::fmt::Write as _;
use std::path::Path;

use coca_core::metrics::{self, EvalRecord, ReliabilityRow};
use coca_core::rng::{substream, Purpose};
use coca_core::tasks::ans_correct;
use coca_core::trainer::draw_prompt;
use coca_core::{PolicyParams, PolicyShape, TaskSpec, Vocabulary};
use serde::Serialize;

use crate::error::{LabError, Result};
use crate::run::write_atomic;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EvalReport {
    pub n: usize,
    /// Percent correct.
    pub accuracy: f64,
    pub auroc: Option<f64>,
    pub ece: Option<f64>,
    pub brier: Option<f64>,
    pub mean_ttc: f64,
    pub success_rate: f64,
    pub refusal_rate: f64,
    pub reliability: Vec<ReliabilityRow>,
}

/// Per-class expected distance between the sampled confidence and the class's
/// solvability under the optimal answer policy.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct ClassGap {
    pub class_id: u32,
    pub target: f64,
    pub gap: f64,
}

pub fn check_checkpoint(params: &PolicyParams, vocab: &Vocabulary, spec: &TaskSpec) -> Result<()> {
    let want = PolicyShape::new(vocab, spec);
    if params.shape != want {
        return Err(LabError::CheckpointMismatch(format!("checkpoint shape {:?}, expected {want:?}", params.shape)));
    }
    if !params.is_finite() {
        return Err(LabError::CheckpointMismatch("checkpoint has non-finite logits".into()));
    }
    Ok(())
}

/// One response per fresh prompt at temperature 1, graded against the prompt's
/// hidden answer. Prompt `i` uses substreams `(seed, i, 0, Eval*)`.
pub fn eval_records(
    params: &PolicyParams,
    vocab: &Vocabulary,
    spec: &TaskSpec,
    n_eval: usize,
    seed: u64,
) -> Result<(Vec<EvalRecord>, usize)> {
    let mut records = Vec::with_capacity(n_eval);
    let mut refusals = 0;
    for i in 0..n_eval as u64 {
        let mut prompt_rng = substream(seed, i, 0, Purpose::EvalInstance);
        let inst = draw_prompt(spec, vocab, i, &mut prompt_rng)?;
        let mut rng = substream(seed, i, 0, Purpose::EvalRollout);
        let traj = params.sample_response(vocab, &inst, 1.0, &mut rng);
        refusals += traj.is_refusal(vocab) as usize;
        records.push(EvalRecord::from_trajectory(&traj, ans_correct(&inst, traj.answer()) == 1));
    }
    Ok((records, refusals))
}

pub fn summarize(records: &[EvalRecord], refusals: usize, ece_bins: usize) -> Result<EvalReport> {
    if records.is_empty() {
        return Err(LabError::Empty("n_eval = 0".into()));
    }
    let parsed = |r: std::result::Result<f64, metrics::MetricsError>| match r {
        Ok(v) => Ok(Some(v)),
        Err(metrics::MetricsError::NoParsed) => Ok(None),
        Err(e) => Err(e),
    };
    let n = records.len();
    Ok(EvalReport {
        n,
        accuracy: metrics::accuracy(records)?,
        auroc: metrics::auroc(records),
        ece: parsed(metrics::ece(records, ece_bins))?,
        brier: parsed(metrics::brier_score(records))?,
        mean_ttc: records.iter().map(|r| r.ttc as f64).sum::<f64>() / n as f64,
        success_rate: metrics::success_rate(records)?,
        refusal_rate: refusals as f64 / n as f64,
        reliability: metrics::reliability_table(records, ece_bins)?,
    })
}

pub fn evaluate(
    params: &PolicyParams,
    vocab: &Vocabulary,
    spec: &TaskSpec,
    n_eval: usize,
    seed: u64,
    ece_bins: usize,
) -> Result<EvalReport> {
    if n_eval == 0 {
        return Err(LabError::Empty("n_eval = 0".into()));
    }
    check_checkpoint(params, vocab, spec)?;
    let (records, refusals) = eval_records(params, vocab, spec, n_eval, seed)?;
    summarize(&records, refusals, ece_bins)
}

pub fn class_gaps(params: &PolicyParams, vocab: &Vocabulary, spec: &TaskSpec) -> Result<Vec<ClassGap>> {
    spec.classes
        .iter()
        .map(|c| {
            let target = spec.true_solvability(c.class_id)?;
            let gap = params.expected_confidence_gap(vocab, c.class_id as usize, target);
            Ok(ClassGap { class_id: c.class_id, target, gap })
        })
        .collect()
}

fn opt(v: Option<f64>) -> String {
    v.map_or_else(|| "-".to_string(), |x| x.to_string())
}

/// `metric,value` rows; undefined values are written as `-`.
pub fn eval_csv(report: &EvalReport) -> String {
    let mut s = String::from("metric,value\n");
    let rows = [
        ("n", report.n.to_string()),
        ("accuracy", report.accuracy.to_string()),
        ("auroc", opt(report.auroc)),
        ("ece", opt(report.ece)),
        ("brier", opt(report.brier)),
        ("ttc", report.mean_ttc.to_string()),
        ("sr", report.success_rate.to_string()),
        ("refusal_rate", report.refusal_rate.to_string()),
    ];
    for (k, v) in rows {
        let _ = writeln!(s, "{k},{v}");
    }
    s
}

pub fn reliability_csv(rows: &[ReliabilityRow]) -> String {
    let mut s = String::from("bin_lo,bin_hi,count,mean_conf,mean_acc\n");
    for r in rows {
        let _ = writeln!(s, "{},{},{},{},{}", r.bin_lo, r.bin_hi, r.count, opt(r.mean_conf), opt(r.mean_acc));
    }
    s
}

pub fn write_eval_files(dir: &Path, report: &EvalReport) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(LabError::io(dir))?;
    write_atomic(&dir.join(crate::run::EVAL_CSV), eval_csv(report).as_bytes())?;
    write_atomic(&dir.join(crate::run::RELIABILITY_CSV), reliability_csv(&report.reliability).as_bytes())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn setup() -> (Vocabulary, TaskSpec) {
        let spec = TaskSpec::default_spec();
        let vocab = Vocabulary::new(8, 1, 21).unwrap();
        (vocab, spec)
    }

    #[test]
    fn zero_prompts_is_an_error() {
        let (vocab, spec) = setup();
        let p = PolicyParams::zeros(PolicyShape::new(&vocab, &spec));
        assert!(matches!(evaluate(&p, &vocab, &spec, 0, 1, 10), Err(LabError::Empty(_))));
    }

    #[test]
    fn shape_mismatch_is_reported() {
        let (vocab, spec) = setup();
        let other = TaskSpec::latent([0.5], 8, 1);
        let p = PolicyParams::zeros(PolicyShape::new(&vocab, &other));
        assert!(matches!(evaluate(&p, &vocab, &spec, 10, 1, 10), Err(LabError::CheckpointMismatch(_))));
    }

    #[test]
    fn optimal_policy_accuracy_matches_oracle() {
        // single class q = 0.7: accuracy of the analytic optimum is 0.7 within 3 s.e.
        let spec = TaskSpec::latent([0.7], 8, 1);
        let vocab = Vocabulary::new(8, 1, 21).unwrap();
        let p = PolicyParams::analytic_optimum(&vocab, &spec, 30.0);
        let n = 20_000;
        let r = evaluate(&p, &vocab, &spec, n, 3, 10).unwrap();
        let se = (0.7f64 * 0.3 / n as f64).sqrt();
        assert!((r.accuracy / 100.0 - 0.7).abs() < 3.0 * se, "{}", r.accuracy);
        assert_eq!(r.mean_ttc, 3.0);
        assert_eq!(r.success_rate, 1.0);
        // confidence sits on the 0.7 bin
        assert!(r.ece.unwrap() < 3.0 * se + 1e-9);
    }

    #[test]
    fn evaluation_is_deterministic() {
        let (vocab, spec) = setup();
        let p = PolicyParams::zeros(PolicyShape::new(&vocab, &spec));
        let a = evaluate(&p, &vocab, &spec, 500, 11, 10).unwrap();
        let b = evaluate(&p, &vocab, &spec, 500, 11, 10).unwrap();
        assert_eq!(eval_csv(&a), eval_csv(&b));
        assert_eq!(reliability_csv(&a.reliability), reliability_csv(&b.reliability));
    }
}
