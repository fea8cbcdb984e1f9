//! Objectives and update steps for every training mode.
//!
//! All modes share one clipped surrogate. They differ only in which advantage reaches
//! which span:
//!
//! | objective         | confidence tokens        | answer tokens            |
//! |-------------------|--------------------------|--------------------------|
//! | segmented (coca)  | `norm(r_c)`              | `norm(r_a)`              |
//! | joint             | `norm(r_a + r_c)`        | `norm(r_a + r_c)`        |
//! | accuracy (rlvr)   | `norm(r_a)`              | `norm(r_a)`              |
//! | rlcr              | `norm(r_a - (s - r_a)^2)`| same                     |
//! | confidence-only   | `norm(r_c)`              | `norm(r_c)`              |
//!
//! Per step the objective is `sum_groups (1/G) sum_i sum_t clip-surrogate - beta * KL`
//! and one plain gradient-ascent step is taken per inner epoch.

use alloc::vec::Vec;
use rand_core::RngCore;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::group::RolloutGroup;
use crate::policy::{Gradient, PolicyError, PolicyParams, PolicySnapshot};
use crate::rewards::{group_normalize, joint_reward, rlcr_reward, DEFAULT_NORM_EPS};
use crate::rng::below;
use crate::tasks::{AnswerKey, TaskError, TaskInstance, TaskSpec};
use crate::vocab::Vocabulary;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Mode {
    Coca,
    Joint,
    Rlvr,
    Rlcr,
    Sequential,
}

impl Mode {
    pub fn name(self) -> &'static str {
        match self {
            Mode::Coca => "coca",
            Mode::Joint => "joint",
            Mode::Rlvr => "rlvr",
            Mode::Rlcr => "rlcr",
            Mode::Sequential => "sequential",
        }
    }
}

impl core::str::FromStr for Mode {
    type Err = ConfigError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Ok(match s {
            "coca" => Mode::Coca,
            "joint" => Mode::Joint,
            "rlvr" => Mode::Rlvr,
            "rlcr" => Mode::Rlcr,
            "sequential" => Mode::Sequential,
            _ => return Err(ConfigError::UnknownMode),
        })
    }
}

/// The reward routing used for one update.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Objective {
    Segmented,
    Joint,
    Accuracy,
    Rlcr,
    ConfidenceOnly,
}

impl Objective {
    pub fn name(self) -> &'static str {
        match self {
            Objective::Segmented => "segmented",
            Objective::Joint => "joint",
            Objective::Accuracy => "accuracy",
            Objective::Rlcr => "rlcr",
            Objective::ConfidenceOnly => "confidence-only",
        }
    }

    pub fn is_segmented(self) -> bool {
        self == Objective::Segmented
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum ConfigError {
    #[error("unknown mode (expected coca, joint, rlvr, rlcr or sequential)")]
    UnknownMode,
    #[error("group_size must be at least 2, got {0}")]
    GroupSize(usize),
    #[error("batch_size must be at least 1")]
    BatchSize,
    #[error("batch_size {0} exceeds the substream index range")]
    BatchTooLarge(usize),
    #[error("clip_eps must lie in (0, 1), got {0}")]
    ClipEps(f64),
    #[error("lr must be positive and finite, got {0}")]
    Lr(f64),
    #[error("kl_beta must be >= 0, got {0}")]
    KlBeta(f64),
    #[error("norm_eps must be positive, got {0}")]
    NormEps(f64),
    #[error("inner_epochs must be at least 1")]
    InnerEpochs,
    #[error("sequential mode needs steps_phase1 and steps_phase2")]
    MissingPhases,
    #[error("steps_phase1/steps_phase2 are only meaningful in sequential mode")]
    UnexpectedPhases,
    #[error("steps = {steps} but steps_phase1 + steps_phase2 = {sum}")]
    PhaseSum { steps: u64, sum: u64 },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    pub mode: Mode,
    pub group_size: usize,
    pub batch_size: usize,
    pub steps: u64,
    #[serde(default)]
    pub steps_phase1: Option<u64>,
    #[serde(default)]
    pub steps_phase2: Option<u64>,
    pub clip_eps: f64,
    pub lr: f64,
    pub kl_beta: f64,
    pub norm_eps: f64,
    pub inner_epochs: u32,
    pub seed: u64,
}

impl TrainConfig {
    pub fn new(mode: Mode, seed: u64) -> Self {
        Self {
            mode,
            group_size: 16,
            batch_size: 16,
            steps: 2000,
            steps_phase1: None,
            steps_phase2: None,
            clip_eps: 0.2,
            lr: 0.1,
            kl_beta: 0.0,
            norm_eps: DEFAULT_NORM_EPS,
            inner_epochs: 1,
            seed,
        }
    }

    /// Sequential schedule with the given phase lengths.
    pub fn sequential(phase1: u64, phase2: u64, seed: u64) -> Self {
        Self {
            steps: phase1 + phase2,
            steps_phase1: Some(phase1),
            steps_phase2: Some(phase2),
            ..Self::new(Mode::Sequential, seed)
        }
    }

    /// Fills what can be derived: the sequential total and `kl_beta = 0` for coca,
    /// whose objective has no KL term.
    pub fn resolve(mut self) -> Self {
        if self.mode == Mode::Coca {
            self.kl_beta = 0.0;
        }
        if self.mode == Mode::Sequential {
            if let (Some(a), Some(b)) = (self.steps_phase1, self.steps_phase2) {
                self.steps = a + b;
            }
        }
        self
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.group_size < 2 {
            return Err(ConfigError::GroupSize(self.group_size));
        }
        if self.batch_size == 0 {
            return Err(ConfigError::BatchSize);
        }
        if self.batch_size as u64 > crate::rng::MAX_INDEX {
            return Err(ConfigError::BatchTooLarge(self.batch_size));
        }
        if !(self.clip_eps > 0.0 && self.clip_eps < 1.0) {
            return Err(ConfigError::ClipEps(self.clip_eps));
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return Err(ConfigError::Lr(self.lr));
        }
        if !(self.kl_beta >= 0.0 && self.kl_beta.is_finite()) {
            return Err(ConfigError::KlBeta(self.kl_beta));
        }
        if self.norm_eps.is_nan() || self.norm_eps <= 0.0 {
            return Err(ConfigError::NormEps(self.norm_eps));
        }
        if self.inner_epochs == 0 {
            return Err(ConfigError::InnerEpochs);
        }
        match (self.mode, self.steps_phase1, self.steps_phase2) {
            (Mode::Sequential, Some(a), Some(b)) => {
                if a + b != self.steps {
                    return Err(ConfigError::PhaseSum { steps: self.steps, sum: a + b });
                }
            }
            (Mode::Sequential, _, _) => return Err(ConfigError::MissingPhases),
            (_, None, None) => {}
            _ => return Err(ConfigError::UnexpectedPhases),
        }
        Ok(())
    }

    /// KL coefficient actually applied; always 0 in coca mode.
    pub fn effective_kl_beta(&self) -> f64 {
        if self.mode == Mode::Coca {
            0.0
        } else {
            self.kl_beta
        }
    }

    /// Objective used at `step` (0-based).
    pub fn objective_at(&self, step: u64) -> Objective {
        match self.mode {
            Mode::Coca => Objective::Segmented,
            Mode::Joint => Objective::Joint,
            Mode::Rlvr => Objective::Accuracy,
            Mode::Rlcr => Objective::Rlcr,
            Mode::Sequential => {
                if step < self.steps_phase1.unwrap_or(self.steps) {
                    Objective::Accuracy
                } else {
                    Objective::ConfidenceOnly
                }
            }
        }
    }
}

/// One training step's summary; one line of `metrics.jsonl`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StepReport {
    pub step: u64,
    pub objective: Objective,
    pub seed: u64,
    pub mean_r_acc: f64,
    pub mean_r_conf: f64,
    pub mean_response_len: f64,
    pub mean_abs_gap: f64,
    pub refusal_rate: f64,
}

impl StepReport {
    pub fn from_groups(step: u64, cfg: &TrainConfig, groups: &[RolloutGroup], vocab: &Vocabulary) -> Self {
        let mut n = 0usize;
        let (mut acc, mut conf, mut len, mut gap, mut refusals) = (0.0, 0.0, 0.0, 0.0, 0usize);
        for g in groups {
            for (i, t) in g.trajectories.iter().enumerate() {
                n += 1;
                acc += g.acc_rewards[i];
                conf += g.conf_rewards[i];
                len += t.n_learnable() as f64;
                // an unparseable confidence counts as maximally far from the target
                gap += t.parsed_confidence.map_or(1.0, |s| libm::fabs(s - g.gesr));
                refusals += t.is_refusal(vocab) as usize;
            }
        }
        let n_f = n.max(1) as f64;
        Self {
            step,
            objective: cfg.objective_at(step),
            seed: cfg.seed,
            mean_r_acc: acc / n_f,
            mean_r_conf: conf / n_f,
            mean_response_len: len / n_f,
            mean_abs_gap: gap / n_f,
            refusal_rate: refusals as f64 / n_f,
        }
    }
}

/// `min(rho * A, clip(rho, 1 - eps, 1 + eps) * A)`.
pub fn clipped_surrogate(rho: f64, advantage: f64, clip_eps: f64) -> f64 {
    let clipped = rho.clamp(1.0 - clip_eps, 1.0 + clip_eps);
    (rho * advantage).min(clipped * advantage)
}

/// `d/d rho` of [`clipped_surrogate`]: `A` where the unclipped term is the minimum,
/// 0 where the clip binds. Ties take the unclipped branch.
pub fn clipped_surrogate_slope(rho: f64, advantage: f64, clip_eps: f64) -> f64 {
    let clipped = rho.clamp(1.0 - clip_eps, 1.0 + clip_eps);
    if rho * advantage <= clipped * advantage {
        advantage
    } else {
        0.0
    }
}

/// Advantages routed to each span of each response.
#[derive(Clone, Debug, PartialEq)]
pub struct SegmentAdvantages {
    pub conf: Vec<f64>,
    pub ans: Vec<f64>,
}

impl SegmentAdvantages {
    pub fn for_group(group: &RolloutGroup, objective: Objective, norm_eps: f64) -> Self {
        let whole = |rewards: Vec<f64>| {
            let a = group_normalize(&rewards, norm_eps).expect("G >= 2");
            Self { conf: a.clone(), ans: a }
        };
        match objective {
            Objective::Segmented => Self { conf: group.adv_conf.clone(), ans: group.adv_ans.clone() },
            Objective::Accuracy => Self { conf: group.adv_ans.clone(), ans: group.adv_ans.clone() },
            Objective::ConfidenceOnly => Self { conf: group.adv_conf.clone(), ans: group.adv_conf.clone() },
            Objective::Joint => whole(
                group
                    .acc_rewards
                    .iter()
                    .zip(&group.conf_rewards)
                    .map(|(&a, &c)| joint_reward(a, c))
                    .collect(),
            ),
            Objective::Rlcr => whole(
                group
                    .trajectories
                    .iter()
                    .zip(&group.acc_rewards)
                    .map(|(t, &a)| rlcr_reward(t.parsed_confidence, a))
                    .collect(),
            ),
        }
    }

    /// Same advantages with one span's channel zeroed.
    pub fn without_conf(mut self) -> Self {
        self.conf.iter_mut().for_each(|a| *a = 0.0);
        self
    }

    pub fn without_ans(mut self) -> Self {
        self.ans.iter_mut().for_each(|a| *a = 0.0);
        self
    }
}

/// Hyper-parameters the surrogate needs.
#[derive(Clone, Copy, Debug)]
pub struct SurrogateParams<'a> {
    pub clip_eps: f64,
    pub kl_beta: f64,
    pub reference: Option<&'a PolicyParams>,
}

impl<'a> SurrogateParams<'a> {
    pub fn from_config(cfg: &TrainConfig, reference: Option<&'a PolicyParams>) -> Self {
        Self { clip_eps: cfg.clip_eps, kl_beta: cfg.effective_kl_beta(), reference }
    }

    fn kl(&self) -> Option<(f64, &'a PolicyParams)> {
        match self.reference {
            Some(r) if self.kl_beta > 0.0 => Some((self.kl_beta, r)),
            _ => None,
        }
    }
}

/// One group's share of the objective:
/// `(1/G) sum_i [sum_{t in conf} clip(rho, A_c) + sum_{t in ans} clip(rho, A_a)] - beta KL`.
pub fn group_objective(
    params: &PolicyParams,
    vocab: &Vocabulary,
    group: &RolloutGroup,
    adv: &SegmentAdvantages,
    sp: SurrogateParams<'_>,
) -> f64 {
    let inv_g = 1.0 / group.size() as f64;
    let mut total = 0.0;
    for (i, traj) in group.trajectories.iter().enumerate() {
        for t in traj.conf_span.range() {
            let rho = params.prob_ratio(vocab, &group.instance, traj, t).expect("learnable");
            total += inv_g * clipped_surrogate(rho, adv.conf[i], sp.clip_eps);
        }
        for t in traj.ans_span.range() {
            let rho = params.prob_ratio(vocab, &group.instance, traj, t).expect("learnable");
            total += inv_g * clipped_surrogate(rho, adv.ans[i], sp.clip_eps);
        }
    }
    if let Some((beta, reference)) = sp.kl() {
        total -= beta * kl_penalty(params, reference, &group.instance);
    }
    total
}

/// Exact gradient of [`group_objective`].
pub fn group_gradient(
    params: &PolicyParams,
    vocab: &Vocabulary,
    group: &RolloutGroup,
    adv: &SegmentAdvantages,
    sp: SurrogateParams<'_>,
) -> Gradient {
    let mut grad = Gradient::zeros(params.shape);
    let inv_g = 1.0 / group.size() as f64;
    for (i, traj) in group.trajectories.iter().enumerate() {
        for t in traj.learnable_positions() {
            let a = if traj.conf_span.contains(t) { adv.conf[i] } else { adv.ans[i] };
            if a == 0.0 {
                continue;
            }
            let rho = params.prob_ratio(vocab, &group.instance, traj, t).expect("learnable");
            let slope = clipped_surrogate_slope(rho, a, sp.clip_eps);
            if slope != 0.0 {
                let (head, index) = params.head_at(vocab, &group.instance, traj, t).expect("learnable");
                // d rho = rho * d log pi
                params.accumulate_score(&mut grad, head, index, inv_g * slope * rho);
            }
        }
    }
    if let Some((beta, reference)) = sp.kl() {
        params.accumulate_kl_grad(reference, &group.instance, -beta, &mut grad);
    }
    grad
}

/// Exact KL(pi || pi_ref) over the rows the instance's response is drawn from.
pub fn kl_penalty(params: &PolicyParams, reference: &PolicyParams, instance: &TaskInstance) -> f64 {
    params.kl_to(reference, instance)
}

/// Batch objective: the sum of the group objectives.
pub fn batch_objective(
    params: &PolicyParams,
    vocab: &Vocabulary,
    groups: &[RolloutGroup],
    advs: &[SegmentAdvantages],
    sp: SurrogateParams<'_>,
) -> f64 {
    groups
        .iter()
        .zip(advs)
        .map(|(g, a)| group_objective(params, vocab, g, a, sp))
        .sum()
}

/// Batch gradient, summed over groups in order.
pub fn batch_gradient(
    params: &PolicyParams,
    vocab: &Vocabulary,
    groups: &[RolloutGroup],
    advs: &[SegmentAdvantages],
    sp: SurrogateParams<'_>,
) -> Gradient {
    sum_in_order(
        params.shape,
        groups.iter().zip(advs).map(|(g, a)| group_gradient(params, vocab, g, a, sp)),
    )
}

/// Left fold from zero; every reducer in the workspace uses it so serial and parallel
/// runs add in the same order.
pub fn sum_in_order(shape: crate::policy::PolicyShape, parts: impl IntoIterator<Item = Gradient>) -> Gradient {
    let mut total = Gradient::zeros(shape);
    for g in parts {
        total.add_assign(&g);
    }
    total
}

/// Result of one update.
#[derive(Clone, Debug, PartialEq)]
pub struct StepOutcome {
    pub params: PolicyParams,
    /// Inner epochs whose gradient was non-finite and therefore not applied.
    pub skipped_epochs: u32,
}

/// Runs `inner_epochs` ascent steps, recomputing the gradient at the current
/// parameters each time. A non-finite gradient skips that epoch.
pub fn ascend(
    params: &PolicyParams,
    cfg: &TrainConfig,
    mut gradient: impl FnMut(&PolicyParams) -> Gradient,
) -> StepOutcome {
    let mut current = params.clone();
    let mut skipped_epochs = 0;
    for _ in 0..cfg.inner_epochs {
        let g = gradient(&current);
        match current.apply_update(&g, cfg.lr) {
            Ok(next) => current = next,
            Err(PolicyError::NonFiniteGradient) => skipped_epochs += 1,
            Err(e) => panic!("update rejected: {e}"),
        }
    }
    StepOutcome { params: current, skipped_epochs }
}

#[derive(Debug, Error, PartialEq)]
#[error("{step} expects objective {expected:?}, config gives {found:?}")]
pub struct ObjectiveMismatch {
    pub step: &'static str,
    pub expected: Objective,
    pub found: Objective,
}

#[allow(clippy::too_many_arguments)]
fn step_with(
    name: &'static str,
    expected: Objective,
    params: &PolicyParams,
    reference: Option<&PolicyParams>,
    vocab: &Vocabulary,
    groups: &[RolloutGroup],
    cfg: &TrainConfig,
    step: u64,
) -> Result<(StepOutcome, StepReport), ObjectiveMismatch> {
    let found = cfg.objective_at(step);
    if found != expected {
        return Err(ObjectiveMismatch { step: name, expected, found });
    }
    let advs: Vec<SegmentAdvantages> = groups
        .iter()
        .map(|g| SegmentAdvantages::for_group(g, expected, cfg.norm_eps))
        .collect();
    let sp = SurrogateParams::from_config(cfg, reference);
    let outcome = ascend(params, cfg, |p| batch_gradient(p, vocab, groups, &advs, sp));
    Ok((outcome, StepReport::from_groups(step, cfg, groups, vocab)))
}

/// Segmented update: confidence advantage on confidence tokens, answer advantage on
/// answer tokens, no KL term.
pub fn segmented_step(
    params: &PolicyParams,
    vocab: &Vocabulary,
    groups: &[RolloutGroup],
    cfg: &TrainConfig,
    step: u64,
) -> Result<(StepOutcome, StepReport), ObjectiveMismatch> {
    step_with("segmented_step", Objective::Segmented, params, None, vocab, groups, cfg, step)
}

/// Whole-sequence update on `r_a + r_c`, with the optional KL penalty.
pub fn joint_step(
    params: &PolicyParams,
    reference: Option<&PolicyParams>,
    vocab: &Vocabulary,
    groups: &[RolloutGroup],
    cfg: &TrainConfig,
    step: u64,
) -> Result<(StepOutcome, StepReport), ObjectiveMismatch> {
    step_with("joint_step", Objective::Joint, params, reference, vocab, groups, cfg, step)
}

pub fn rlvr_step(
    params: &PolicyParams,
    reference: Option<&PolicyParams>,
    vocab: &Vocabulary,
    groups: &[RolloutGroup],
    cfg: &TrainConfig,
    step: u64,
) -> Result<(StepOutcome, StepReport), ObjectiveMismatch> {
    step_with("rlvr_step", Objective::Accuracy, params, reference, vocab, groups, cfg, step)
}

pub fn rlcr_step(
    params: &PolicyParams,
    reference: Option<&PolicyParams>,
    vocab: &Vocabulary,
    groups: &[RolloutGroup],
    cfg: &TrainConfig,
    step: u64,
) -> Result<(StepOutcome, StepReport), ObjectiveMismatch> {
    step_with("rlcr_step", Objective::Rlcr, params, reference, vocab, groups, cfg, step)
}

/// Second phase of the sequential schedule: `r_c` alone drives the whole response.
pub fn confidence_only_step(
    params: &PolicyParams,
    reference: Option<&PolicyParams>,
    vocab: &Vocabulary,
    groups: &[RolloutGroup],
    cfg: &TrainConfig,
    step: u64,
) -> Result<(StepOutcome, StepReport), ObjectiveMismatch> {
    step_with("confidence_only_step", Objective::ConfidenceOnly, params, reference, vocab, groups, cfg, step)
}

/// Draws the class uniformly, then a prompt of that class.
pub fn draw_prompt<R: RngCore + ?Sized>(
    spec: &TaskSpec,
    vocab: &Vocabulary,
    instance_id: u64,
    rng: &mut R,
) -> Result<TaskInstance, TaskError> {
    let class = below(rng, spec.n_classes() as u64) as u32;
    spec.sample_instance(vocab, class, instance_id, rng)
}

/// Samples G responses from the snapshot and scores them. Token draws come from
/// `token_rng`; per-response answer keys from `key_rng`.
#[allow(clippy::too_many_arguments)]
pub fn rollout_group<R: RngCore + ?Sized, K: RngCore + ?Sized>(
    snapshot: &PolicySnapshot,
    vocab: &Vocabulary,
    spec: &TaskSpec,
    instance: TaskInstance,
    group_size: usize,
    norm_eps: f64,
    token_rng: &mut R,
    key_rng: &mut K,
) -> RolloutGroup {
    assert!(group_size >= 2, "group size must be at least 2");
    let trajectories: Vec<_> = (0..group_size)
        .map(|_| snapshot.sample_response(vocab, &instance, 1.0, token_rng))
        .collect();
    let keys = (0..group_size)
        .map(|_| match spec.answer_key {
            AnswerKey::Shared => instance.hidden_answer.clone(),
            AnswerKey::PerResponse => spec.redraw_answer(vocab, &instance, key_rng),
        })
        .collect();
    RolloutGroup::score(instance, keys, trajectories, norm_eps)
}
