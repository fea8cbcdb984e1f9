//! Tabular categorical policy.
//!
//! The confidence head holds one row of `n_bins` logits per class. The answer head holds
//! one row of `K + 1` logits (answers plus refusal) per class, observation context and
//! answer position. Delimiters are forced with probability one and carry no parameters,
//! so every learnable token is a draw from exactly one row and its score function is
//! `onehot(token) - softmax(row)`.

use alloc::vec;
use alloc::vec::Vec;
use core::ops::{Deref, Range};
use rand_core::RngCore;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::math::{categorical_kl_grad, categorical_kl_logits, log_softmax_at, softmax_into};
use crate::rng::categorical;
use crate::tasks::{Observation, TaskInstance, TaskSpec};
use crate::trajectory::Trajectory;
use crate::vocab::Vocabulary;

#[derive(Debug, Error, PartialEq)]
pub enum PolicyError {
    #[error("position {0} is a forced delimiter or out of range, not a learnable token")]
    NotLearnable(usize),
    #[error("token at position {0} does not belong to the head that governs it")]
    ForeignToken(usize),
    #[error("gradient has non-finite entries")]
    NonFiniteGradient,
    #[error("learning rate must be positive, got {0}")]
    BadLearningRate(f64),
    #[error("shapes differ: {0:?} vs {1:?}")]
    ShapeMismatch(PolicyShape, PolicyShape),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PolicyShape {
    pub n_classes: usize,
    pub n_bins: usize,
    pub n_contexts: usize,
    pub answer_len: usize,
    pub answer_width: usize,
}

impl PolicyShape {
    pub fn new(vocab: &Vocabulary, spec: &TaskSpec) -> Self {
        Self {
            n_classes: spec.n_classes(),
            n_bins: vocab.n_bins(),
            n_contexts: spec.n_contexts(),
            answer_len: vocab.answer_len,
            answer_width: vocab.answer_width(),
        }
    }

    pub fn conf_len(&self) -> usize {
        self.n_classes * self.n_bins
    }

    pub fn ans_len(&self) -> usize {
        self.n_classes * self.n_contexts * self.answer_len * self.answer_width
    }
}

/// One softmax row of the policy.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Head {
    Confidence { class: usize },
    Answer { class: usize, context: usize, position: usize },
}

impl Head {
    fn range(self, shape: &PolicyShape) -> Range<usize> {
        match self {
            Head::Confidence { class } => {
                let start = class * shape.n_bins;
                start..start + shape.n_bins
            }
            Head::Answer { class, context, position } => {
                let row = (class * shape.n_contexts + context) * shape.answer_len + position;
                let start = row * shape.answer_width;
                start..start + shape.answer_width
            }
        }
    }

    fn is_confidence(self) -> bool {
        matches!(self, Head::Confidence { .. })
    }
}

/// Live parameters. `version` counts applied updates.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PolicyParams {
    pub shape: PolicyShape,
    pub version: u64,
    pub conf_logits: Vec<f64>,
    pub ans_logits: Vec<f64>,
}

/// Frozen copy of the parameters that sampled a batch (the "old" policy).
#[derive(Clone, Debug, PartialEq)]
pub struct PolicySnapshot {
    params: PolicyParams,
}

impl PolicySnapshot {
    pub fn take(params: &PolicyParams) -> Self {
        Self { params: params.clone() }
    }
}

impl Deref for PolicySnapshot {
    type Target = PolicyParams;

    fn deref(&self) -> &PolicyParams {
        &self.params
    }
}

/// Gradient with the same layout as [`PolicyParams`].
#[derive(Clone, Debug, PartialEq)]
pub struct Gradient {
    pub shape: PolicyShape,
    pub conf: Vec<f64>,
    pub ans: Vec<f64>,
}

impl Gradient {
    pub fn zeros(shape: PolicyShape) -> Self {
        Self { shape, conf: vec![0.0; shape.conf_len()], ans: vec![0.0; shape.ans_len()] }
    }

    pub fn add_assign(&mut self, other: &Gradient) {
        assert_eq!(self.shape, other.shape);
        for (a, b) in self.conf.iter_mut().zip(&other.conf) {
            *a += b;
        }
        for (a, b) in self.ans.iter_mut().zip(&other.ans) {
            *a += b;
        }
    }

    pub fn scale(&mut self, factor: f64) {
        self.conf.iter_mut().chain(self.ans.iter_mut()).for_each(|g| *g *= factor);
    }

    pub fn is_finite(&self) -> bool {
        self.conf.iter().chain(&self.ans).all(|g| g.is_finite())
    }

    pub fn max_abs(&self) -> f64 {
        self.conf.iter().chain(&self.ans).fold(0.0, |m, g| m.max(g.abs()))
    }

    pub fn dot(&self, other: &Gradient) -> f64 {
        self.conf.iter().zip(&other.conf).map(|(a, b)| a * b).sum::<f64>()
            + self.ans.iter().zip(&other.ans).map(|(a, b)| a * b).sum::<f64>()
    }

    /// Flattened view, confidence head first.
    pub fn iter(&self) -> impl Iterator<Item = f64> + '_ {
        self.conf.iter().chain(&self.ans).copied()
    }

    pub(crate) fn row_mut(&mut self, head: Head) -> &mut [f64] {
        let r = head.range(&self.shape);
        if head.is_confidence() {
            &mut self.conf[r]
        } else {
            &mut self.ans[r]
        }
    }
}

impl PolicyParams {
    /// All-zero logits: uniform confidence, uniform answers including refusal.
    pub fn zeros(shape: PolicyShape) -> Self {
        Self {
            shape,
            version: 0,
            conf_logits: vec![0.0; shape.conf_len()],
            ans_logits: vec![0.0; shape.ans_len()],
        }
    }

    /// Deterministic-in-the-limit optimum: the confidence head peaks on the bin nearest
    /// each class's solvability and the answer head on the optimal answer (uniform over
    /// answers when there is nothing to go on). `margin` is the logit gap.
    pub fn analytic_optimum(vocab: &Vocabulary, spec: &TaskSpec, margin: f64) -> Self {
        let shape = PolicyShape::new(vocab, spec);
        let mut p = Self::zeros(shape);
        for class in 0..shape.n_classes {
            let target = spec.true_solvability(class as u32).expect("class in range");
            p.row_mut(Head::Confidence { class })[vocab.nearest_bin(target)] = margin;
            for context in 0..shape.n_contexts {
                let observation = if context == 0 {
                    match spec.family {
                        crate::tasks::TaskFamily::LatentAnswer => Observation::Latent,
                        crate::tasks::TaskFamily::HintedChannel => Observation::NoHint,
                    }
                } else {
                    let mut code = context - 1;
                    let tokens = (0..shape.answer_len)
                        .map(|_| {
                            let a = code % spec.n_answers;
                            code /= spec.n_answers;
                            vocab.answer_tokens[a]
                        })
                        .collect();
                    Observation::Hint(tokens)
                };
                let best = match observation {
                    Observation::NoHint => None,
                    ref obs => Some(spec.optimal_answer(vocab, class as u32, obs)),
                };
                for position in 0..shape.answer_len {
                    let row = p.row_mut(Head::Answer { class, context, position });
                    row[shape.answer_width - 1] = -margin;
                    if let Some(best) = &best {
                        row[best[position]] = margin;
                    }
                }
            }
        }
        p
    }

    pub fn row(&self, head: Head) -> &[f64] {
        let r = head.range(&self.shape);
        if head.is_confidence() {
            &self.conf_logits[r]
        } else {
            &self.ans_logits[r]
        }
    }

    pub(crate) fn row_mut(&mut self, head: Head) -> &mut [f64] {
        let r = head.range(&self.shape);
        if head.is_confidence() {
            &mut self.conf_logits[r]
        } else {
            &mut self.ans_logits[r]
        }
    }

    pub fn probs(&self, head: Head, temperature: f64) -> Vec<f64> {
        let logits = self.row(head);
        let mut out = vec![0.0; logits.len()];
        softmax_into(logits, temperature, &mut out);
        out
    }

    pub fn confidence_head(&self, class: usize) -> Head {
        Head::Confidence { class }
    }

    pub fn answer_head(&self, instance: &TaskInstance, position: usize) -> Head {
        Head::Answer { class: instance.class_id as usize, context: instance.context, position }
    }

    /// The row governing position `t` of `traj`, and the token's index within it.
    pub fn head_at(
        &self,
        vocab: &Vocabulary,
        instance: &TaskInstance,
        traj: &Trajectory,
        t: usize,
    ) -> Result<(Head, usize), PolicyError> {
        let token = *traj.tokens.get(t).ok_or(PolicyError::NotLearnable(t))?;
        if traj.conf_span.contains(t) {
            let index = vocab.bin_index(token).ok_or(PolicyError::ForeignToken(t))?;
            Ok((self.confidence_head(instance.class_id as usize), index))
        } else if traj.ans_span.contains(t) {
            let index = vocab.choice_index(token).ok_or(PolicyError::ForeignToken(t))?;
            Ok((self.answer_head(instance, t - traj.ans_span.start), index))
        } else {
            Err(PolicyError::NotLearnable(t))
        }
    }

    /// Samples one response in the enforced format. Tokens are drawn at `temperature`;
    /// `logprobs_old` always records the temperature-1 log-probabilities.
    pub fn sample_response<R: RngCore + ?Sized>(
        &self,
        vocab: &Vocabulary,
        instance: &TaskInstance,
        temperature: f64,
        rng: &mut R,
    ) -> Trajectory {
        assert!(temperature > 0.0, "temperature must be positive");
        let len = vocab.response_len();
        let mut tokens = Vec::with_capacity(len);
        let mut logprobs = Vec::with_capacity(len);
        let mut buf = vec![0.0; self.shape.n_bins.max(self.shape.answer_width)];

        tokens.push(vocab.conf_open);
        logprobs.push(0.0);

        let head = self.confidence_head(instance.class_id as usize);
        let logits = self.row(head);
        softmax_into(logits, temperature, &mut buf[..logits.len()]);
        let bin = categorical(rng, &buf[..logits.len()]);
        tokens.push(vocab.bin_token(bin));
        logprobs.push(log_softmax_at(logits, bin));

        tokens.push(vocab.conf_close);
        logprobs.push(0.0);

        for position in 0..vocab.answer_len {
            let logits = self.row(self.answer_head(instance, position));
            softmax_into(logits, temperature, &mut buf[..logits.len()]);
            let choice = categorical(rng, &buf[..logits.len()]);
            tokens.push(vocab.choice_token(choice));
            logprobs.push(log_softmax_at(logits, choice));
        }

        tokens.push(vocab.eos);
        logprobs.push(0.0);

        Trajectory::from_tokens(tokens, logprobs, vocab).expect("sampler emits the fixed grammar")
    }

    pub fn token_logprob(
        &self,
        vocab: &Vocabulary,
        instance: &TaskInstance,
        traj: &Trajectory,
        t: usize,
    ) -> Result<f64, PolicyError> {
        let (head, index) = self.head_at(vocab, instance, traj, t)?;
        Ok(log_softmax_at(self.row(head), index))
    }

    /// `pi(token_t) / pi_old(token_t)`, with the denominator taken from the
    /// log-probabilities recorded when the snapshot sampled `traj`.
    pub fn prob_ratio(
        &self,
        vocab: &Vocabulary,
        instance: &TaskInstance,
        traj: &Trajectory,
        t: usize,
    ) -> Result<f64, PolicyError> {
        let lp = self.token_logprob(vocab, instance, traj, t)?;
        Ok(libm::exp(lp - traj.logprobs_old[t]))
    }

    /// Gradient of `log pi(token_t)`: `onehot - softmax` on the governing row, zero elsewhere.
    pub fn logprob_grad(
        &self,
        vocab: &Vocabulary,
        instance: &TaskInstance,
        traj: &Trajectory,
        t: usize,
    ) -> Result<Gradient, PolicyError> {
        let (head, index) = self.head_at(vocab, instance, traj, t)?;
        let mut g = Gradient::zeros(self.shape);
        self.accumulate_score(&mut g, head, index, 1.0);
        Ok(g)
    }

    /// `grad += scale * (onehot(index) - softmax(row))` on `head`'s row.
    pub(crate) fn accumulate_score(&self, grad: &mut Gradient, head: Head, index: usize, scale: f64) {
        if scale == 0.0 {
            return;
        }
        let logits = self.row(head);
        let mut p = vec![0.0; logits.len()];
        softmax_into(logits, 1.0, &mut p);
        let row = grad.row_mut(head);
        for (g, pk) in row.iter_mut().zip(&p) {
            *g -= scale * pk;
        }
        row[index] += scale;
    }

    /// Every row the policy reads for `instance`.
    pub fn heads_for(&self, instance: &TaskInstance) -> impl Iterator<Item = Head> + '_ {
        let class = instance.class_id as usize;
        let context = instance.context;
        core::iter::once(Head::Confidence { class }).chain(
            (0..self.shape.answer_len).map(move |position| Head::Answer { class, context, position }),
        )
    }

    /// Exact KL(pi || reference) summed over the rows used by `instance`.
    pub fn kl_to(&self, reference: &PolicyParams, instance: &TaskInstance) -> f64 {
        self.heads_for(instance)
            .map(|h| categorical_kl_logits(self.row(h), reference.row(h)))
            .sum()
    }

    pub(crate) fn accumulate_kl_grad(
        &self,
        reference: &PolicyParams,
        instance: &TaskInstance,
        scale: f64,
        grad: &mut Gradient,
    ) {
        for h in self.heads_for(instance) {
            categorical_kl_grad(self.row(h), reference.row(h), scale, grad.row_mut(h));
        }
    }

    /// Gradient-ascent step `params + lr * grad`; bumps the version.
    pub fn apply_update(&self, grad: &Gradient, lr: f64) -> Result<PolicyParams, PolicyError> {
        if lr.is_nan() || lr <= 0.0 {
            return Err(PolicyError::BadLearningRate(lr));
        }
        if grad.shape != self.shape {
            return Err(PolicyError::ShapeMismatch(grad.shape, self.shape));
        }
        if !grad.is_finite() {
            return Err(PolicyError::NonFiniteGradient);
        }
        let mut next = self.clone();
        for (p, g) in next.conf_logits.iter_mut().zip(&grad.conf) {
            *p += lr * g;
        }
        for (p, g) in next.ans_logits.iter_mut().zip(&grad.ans) {
            *p += lr * g;
        }
        next.version += 1;
        Ok(next)
    }

    pub fn is_finite(&self) -> bool {
        self.conf_logits.iter().chain(&self.ans_logits).all(|z| z.is_finite())
    }

    /// Expected `|s - target|` under the class's confidence distribution.
    pub fn expected_confidence_gap(&self, vocab: &Vocabulary, class: usize, target: f64) -> f64 {
        self.probs(Head::Confidence { class }, 1.0)
            .iter()
            .enumerate()
            .map(|(b, p)| p * libm::fabs(vocab.bin_value(b) - target))
            .sum()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{substream, Purpose};
    use crate::trajectory::validate_trajectory;
    use libm::log;

    fn setup() -> (Vocabulary, TaskSpec, TaskInstance) {
        let spec = TaskSpec::default_spec();
        let vocab = Vocabulary::new(8, 1, 21).unwrap();
        let mut rng = substream(0, 0, 0, Purpose::Instance);
        let inst = spec.sample_instance(&vocab, 2, 0, &mut rng).unwrap();
        (vocab, spec, inst)
    }

    fn sample(p: &PolicyParams, v: &Vocabulary, inst: &TaskInstance, seed: u64) -> Trajectory {
        let mut rng = substream(seed, 0, 0, Purpose::Rollout);
        p.sample_response(v, inst, 1.0, &mut rng)
    }

    #[test]
    fn saturated_confidence_head_always_emits_its_bin() {
        let (v, spec, inst) = setup();
        let mut p = PolicyParams::zeros(PolicyShape::new(&v, &spec));
        p.row_mut(Head::Confidence { class: 2 })[10] = 50.0;
        let mut rng = substream(1, 0, 0, Purpose::Rollout);
        for _ in 0..10_000 {
            let t = p.sample_response(&v, &inst, 1.0, &mut rng);
            assert_eq!(t.parsed_confidence, Some(0.5));
        }
    }

    #[test]
    fn uniform_answer_head_frequencies() {
        let (v, spec, inst) = setup();
        let p = PolicyParams::zeros(PolicyShape::new(&v, &spec));
        let mut rng = substream(2, 0, 0, Purpose::Rollout);
        let n = 100_000;
        let mut counts = [0usize; 9];
        for _ in 0..n {
            let t = p.sample_response(&v, &inst, 1.0, &mut rng);
            counts[v.choice_index(t.answer()[0]).unwrap()] += 1;
        }
        let f = 1.0 / 9.0;
        let se = (f * (1.0 - f) / n as f64).sqrt();
        for c in counts {
            assert!((c as f64 / n as f64 - f).abs() < 3.0 * se, "{counts:?}");
        }
    }

    #[test]
    fn sampled_responses_are_grammatical() {
        let (v, spec, inst) = setup();
        let mut p = PolicyParams::zeros(PolicyShape::new(&v, &spec));
        p.conf_logits.iter_mut().enumerate().for_each(|(i, z)| *z = (i % 7) as f64 * 0.3);
        let mut rng = substream(3, 0, 0, Purpose::Rollout);
        for temperature in [0.3, 1.0, 4.0] {
            for _ in 0..500 {
                let t = p.sample_response(&v, &inst, temperature, &mut rng);
                assert_eq!(validate_trajectory(&t, &v), Ok(()));
            }
        }
    }

    #[test]
    fn uniform_confidence_logprob() {
        let (v, spec, inst) = setup();
        let p = PolicyParams::zeros(PolicyShape::new(&v, &spec));
        let t = sample(&p, &v, &inst, 4);
        let lp = p.token_logprob(&v, &inst, &t, 1).unwrap();
        // mpmath: log(1/21) = -3.04452243772342299650...
        assert!((lp - (-3.044_522_437_723_423)).abs() < 1e-14);
        assert!((lp - log(1.0 / 21.0)).abs() < 1e-14);
    }

    #[test]
    fn logprob_against_high_precision_value() {
        let (v, spec, inst) = setup();
        let mut p = PolicyParams::zeros(PolicyShape::new(&v, &spec));
        p.row_mut(Head::Confidence { class: 2 })[0] = 1.0;
        let tokens = alloc::vec![v.conf_open, v.bin_token(0), v.conf_close, v.answer_tokens[0], v.eos];
        let t = Trajectory::from_tokens(tokens, alloc::vec![0.0; 5], &v).unwrap();
        // mpmath (40 digits): 1 - ln(e + 20) = -2.123169967245929665843...
        let lp = p.token_logprob(&v, &inst, &t, 1).unwrap();
        assert!((lp - (-2.123_169_967_245_93)).abs() < 1e-14);
    }

    #[test]
    fn delimiters_are_not_learnable() {
        let (v, spec, inst) = setup();
        let p = PolicyParams::zeros(PolicyShape::new(&v, &spec));
        let t = sample(&p, &v, &inst, 5);
        for pos in [0, 2, 4, 5, 99] {
            assert_eq!(p.token_logprob(&v, &inst, &t, pos), Err(PolicyError::NotLearnable(pos)));
            assert!(p.logprob_grad(&v, &inst, &t, pos).is_err());
        }
    }

    #[test]
    fn snapshot_logprobs_match_stored_values() {
        let (v, spec, inst) = setup();
        let mut p = PolicyParams::zeros(PolicyShape::new(&v, &spec));
        p.ans_logits.iter_mut().enumerate().for_each(|(i, z)| *z = (i as f64).sin());
        let snap = PolicySnapshot::take(&p);
        let t = sample(&snap, &v, &inst, 6);
        for pos in t.learnable_positions() {
            assert_eq!(p.token_logprob(&v, &inst, &t, pos).unwrap(), t.logprobs_old[pos]);
            assert_eq!(p.prob_ratio(&v, &inst, &t, pos).unwrap(), 1.0);
        }
        // later updates never touch what was recorded
        let recorded = t.logprobs_old.clone();
        let g = p.logprob_grad(&v, &inst, &t, 3).unwrap();
        let mut live = p.clone();
        for _ in 0..5 {
            live = live.apply_update(&g, 0.5).unwrap();
        }
        assert_eq!(t.logprobs_old, recorded);
        assert_eq!(snap.conf_logits, p.conf_logits);
        assert!(snap.version < live.version);
    }

    #[test]
    fn ratio_follows_exponential_law() {
        let (v, spec, inst) = setup();
        let p = PolicyParams::zeros(PolicyShape::new(&v, &spec));
        let mut t = sample(&p, &v, &inst, 7);
        t.logprobs_old[1] -= core::f64::consts::LN_2;
        assert!((p.prob_ratio(&v, &inst, &t, 1).unwrap() - 2.0).abs() < 1e-15);
    }

    #[test]
    fn score_function_on_uniform_head() {
        let (v, spec, inst) = setup();
        let p = PolicyParams::zeros(PolicyShape::new(&v, &spec));
        let t = sample(&p, &v, &inst, 8);
        let g = p.logprob_grad(&v, &inst, &t, 1).unwrap();
        let j = v.bin_index(t.tokens[1]).unwrap();
        let row = &g.conf[2 * 21..3 * 21];
        for (k, &x) in row.iter().enumerate() {
            let want = if k == j { 20.0 / 21.0 } else { -1.0 / 21.0 };
            assert!((x - want).abs() < 1e-15);
        }
        assert!(g.ans.iter().all(|&x| x == 0.0));
        let outside: f64 = g.conf.iter().map(|x| x.abs()).sum::<f64>() - row.iter().map(|x| x.abs()).sum::<f64>();
        assert_eq!(outside, 0.0);
    }

    #[test]
    fn saturated_score_vanishes() {
        let (v, spec, inst) = setup();
        let mut p = PolicyParams::zeros(PolicyShape::new(&v, &spec));
        p.row_mut(Head::Confidence { class: 2 })[4] = 50.0;
        let t = sample(&p, &v, &inst, 9);
        let g = p.logprob_grad(&v, &inst, &t, 1).unwrap();
        assert!(g.max_abs() <= 1e-9);
    }

    #[test]
    fn apply_update_cases() {
        let (v, spec, _) = setup();
        let shape = PolicyShape::new(&v, &spec);
        let p = PolicyParams::zeros(shape);
        let zero = Gradient::zeros(shape);
        let q = p.apply_update(&zero, 0.1).unwrap();
        assert_eq!(q.conf_logits, p.conf_logits);
        assert_eq!(q.version, 1);

        let mut unit = Gradient::zeros(shape);
        unit.conf[5] = 1.0;
        let q = p.apply_update(&unit, 1.0).unwrap();
        assert_eq!(q.conf_logits[5], 1.0);

        let mut bad = Gradient::zeros(shape);
        bad.ans[0] = f64::NAN;
        assert_eq!(p.apply_update(&bad, 0.1), Err(PolicyError::NonFiniteGradient));
        assert_eq!(p.apply_update(&zero, 0.0), Err(PolicyError::BadLearningRate(0.0)));
    }

    #[test]
    fn successive_steps_commute_with_summed_step() {
        let (v, spec, inst) = setup();
        let shape = PolicyShape::new(&v, &spec);
        let p = PolicyParams::zeros(shape);
        let t = sample(&p, &v, &inst, 10);
        let a = p.logprob_grad(&v, &inst, &t, 1).unwrap();
        let b = p.logprob_grad(&v, &inst, &t, 3).unwrap();
        let two = p.apply_update(&a, 0.25).unwrap().apply_update(&b, 0.25).unwrap();
        let mut sum = a.clone();
        sum.add_assign(&b);
        let one = p.apply_update(&sum, 0.25).unwrap();
        for (x, y) in two.conf_logits.iter().chain(&two.ans_logits).zip(one.conf_logits.iter().chain(&one.ans_logits)) {
            assert!((x - y).abs() < 1e-15);
        }
    }

    #[test]
    fn analytic_optimum_peaks_where_expected() {
        let (v, spec, _) = setup();
        let p = PolicyParams::analytic_optimum(&v, &spec, 30.0);
        let conf = p.probs(Head::Confidence { class: 6 }, 1.0);
        assert!(conf[14] > 0.999_999); // 0.7
        let ans = p.probs(Head::Answer { class: 6, context: 0, position: 0 }, 1.0);
        assert!(ans[6] > 0.999_999);
        // q = 0.1 < 1/8: the modal answer is not the best guess
        let ans0 = p.probs(Head::Answer { class: 0, context: 0, position: 0 }, 1.0);
        assert!(ans0[1] > 0.999_999);
    }
}
