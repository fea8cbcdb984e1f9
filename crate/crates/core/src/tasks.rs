//! Synthetic verifiable tasks whose best achievable accuracy is known in closed form.
//!
//! Two families:
//!
//! * **latent-answer**: the prompt only names its class. The correct answer is the
//!   class's modal answer with probability `q`, otherwise uniform over the other
//!   `K^L - 1` answers.
//! * **hinted-channel**: the correct answer is uniform; with probability `q` the
//!   observation reveals it.
//!
//! With [`AnswerKey::PerResponse`] every response in a group is graded against its own
//! draw of the hidden answer, conditioned on the shared observation. The group success
//! rate is then an unbiased estimate of the policy's accuracy on the prompt, which is
//! what the confidence head is trained to report.

use alloc::vec::Vec;
use rand_core::RngCore;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::rng::{below, uniform};
use crate::vocab::{Token, Vocabulary};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TaskFamily {
    LatentAnswer,
    HintedChannel,
}

/// How the hidden answer is shared within a rollout group.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AnswerKey {
    /// Each response is graded against an independent draw given the observation.
    #[default]
    PerResponse,
    /// All responses are graded against the instance's single hidden answer.
    Shared,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TaskClass {
    pub class_id: u32,
    /// Modal-answer probability (latent-answer) or hint probability (hinted-channel).
    pub q: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TaskSpec {
    pub family: TaskFamily,
    pub classes: Vec<TaskClass>,
    pub n_answers: usize,
    pub answer_len: usize,
    #[serde(default)]
    pub answer_key: AnswerKey,
}

#[derive(Debug, Error, PartialEq)]
pub enum TaskError {
    #[error("task spec has no classes")]
    NoClasses,
    #[error("class at position {position} has id {found}; ids must be 0..n in order")]
    ClassOrder { position: usize, found: u32 },
    #[error("class {class_id}: q = {q} outside [0, 1]")]
    QOutOfRange { class_id: u32, q: f64 },
    #[error("unknown class id {0}")]
    UnknownClass(u32),
    #[error("need K >= 2 answers and L >= 1, got K = {k}, L = {l}")]
    Shape { k: usize, l: usize },
    #[error("K^L = {k}^{l} answer sequences is too many to enumerate")]
    TooManySequences { k: usize, l: usize },
    #[error("vocabulary (K = {vk}, L = {vl}) does not match task spec (K = {k}, L = {l})")]
    VocabMismatch { vk: usize, vl: usize, k: usize, l: usize },
}

/// What the policy sees about a prompt besides its class.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Observation {
    Latent,
    Hint(Vec<Token>),
    NoHint,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TaskInstance {
    pub instance_id: u64,
    pub class_id: u32,
    pub observation: Observation,
    /// Row of the answer head this observation selects.
    pub context: usize,
    pub hidden_answer: Vec<Token>,
}

/// An answer of the wrong length; scored 0 and counted as an anomaly by callers.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Error)]
#[error("answer has {found} tokens, expected {expected}")]
pub struct LengthMismatch {
    pub found: usize,
    pub expected: usize,
}

const MAX_SEQUENCES: usize = 1 << 20;

impl TaskSpec {
    /// Latent-answer family, nine classes with q = 0.1 … 0.9, K = 8, L = 1.
    pub fn default_spec() -> Self {
        Self::latent((1..=9).map(|i| i as f64 / 10.0), 8, 1)
    }

    pub fn latent(qs: impl IntoIterator<Item = f64>, n_answers: usize, answer_len: usize) -> Self {
        Self::with_family(TaskFamily::LatentAnswer, qs, n_answers, answer_len)
    }

    pub fn hinted(qs: impl IntoIterator<Item = f64>, n_answers: usize, answer_len: usize) -> Self {
        Self::with_family(TaskFamily::HintedChannel, qs, n_answers, answer_len)
    }

    fn with_family(
        family: TaskFamily,
        qs: impl IntoIterator<Item = f64>,
        n_answers: usize,
        answer_len: usize,
    ) -> Self {
        let classes = qs
            .into_iter()
            .enumerate()
            .map(|(i, q)| TaskClass { class_id: i as u32, q })
            .collect();
        Self { family, classes, n_answers, answer_len, answer_key: AnswerKey::PerResponse }
    }

    pub fn validate(&self) -> Result<(), TaskError> {
        if self.classes.is_empty() {
            return Err(TaskError::NoClasses);
        }
        if self.n_answers < 2 || self.answer_len == 0 {
            return Err(TaskError::Shape { k: self.n_answers, l: self.answer_len });
        }
        if self.checked_sequences().is_none() {
            return Err(TaskError::TooManySequences { k: self.n_answers, l: self.answer_len });
        }
        for (position, c) in self.classes.iter().enumerate() {
            if c.class_id as usize != position {
                return Err(TaskError::ClassOrder { position, found: c.class_id });
            }
            if !(0.0..=1.0).contains(&c.q) {
                return Err(TaskError::QOutOfRange { class_id: c.class_id, q: c.q });
            }
        }
        Ok(())
    }

    pub fn check_vocab(&self, vocab: &Vocabulary) -> Result<(), TaskError> {
        if vocab.n_answers() != self.n_answers || vocab.answer_len != self.answer_len {
            return Err(TaskError::VocabMismatch {
                vk: vocab.n_answers(),
                vl: vocab.answer_len,
                k: self.n_answers,
                l: self.answer_len,
            });
        }
        Ok(())
    }

    pub fn n_classes(&self) -> usize {
        self.classes.len()
    }

    pub fn class(&self, class_id: u32) -> Result<&TaskClass, TaskError> {
        self.classes
            .get(class_id as usize)
            .ok_or(TaskError::UnknownClass(class_id))
    }

    fn checked_sequences(&self) -> Option<usize> {
        let n = self.n_answers.checked_pow(u32::try_from(self.answer_len).ok()?)?;
        (n <= MAX_SEQUENCES).then_some(n)
    }

    /// K^L, the number of distinct answers.
    pub fn n_sequences(&self) -> usize {
        self.checked_sequences().expect("validated spec")
    }

    /// Number of answer-head rows per class: one for latent prompts, one per hint
    /// plus the no-hint row for hinted prompts.
    pub fn n_contexts(&self) -> usize {
        match self.family {
            TaskFamily::LatentAnswer => 1,
            TaskFamily::HintedChannel => 1 + self.n_sequences(),
        }
    }

    /// Modal answer of a class as answer indices: position j holds `(class_id + j) mod K`.
    pub fn modal_answer(&self, class_id: u32) -> Vec<usize> {
        (0..self.answer_len)
            .map(|j| (class_id as usize + j) % self.n_answers)
            .collect()
    }

    fn decode(&self, mut code: usize) -> Vec<usize> {
        let mut out = Vec::with_capacity(self.answer_len);
        for _ in 0..self.answer_len {
            out.push(code % self.n_answers);
            code /= self.n_answers;
        }
        out
    }

    fn encode(&self, answer: &[usize]) -> usize {
        answer.iter().rev().fold(0, |acc, &a| acc * self.n_answers + a)
    }

    fn to_tokens(&self, vocab: &Vocabulary, answer: &[usize]) -> Vec<Token> {
        answer.iter().map(|&a| vocab.answer_tokens[a]).collect()
    }

    fn token_indices(&self, vocab: &Vocabulary, tokens: &[Token]) -> Vec<usize> {
        tokens
            .iter()
            .map(|&t| vocab.choice_index(t).filter(|&i| i < self.n_answers).expect("answer token"))
            .collect()
    }

    /// Best achievable single-sample accuracy for a class.
    ///
    /// Latent-answer: `max(q, (1 - q) / (K^L - 1))`, which is `q` whenever the modal
    /// answer really is the most likely one. Hinted-channel: `q + (1 - q) / K^L`.
    pub fn true_solvability(&self, class_id: u32) -> Result<f64, TaskError> {
        let q = self.class(class_id)?.q;
        let n = self.n_sequences() as f64;
        Ok(match self.family {
            TaskFamily::LatentAnswer => q.max((1.0 - q) / (n - 1.0)),
            TaskFamily::HintedChannel => q + (1.0 - q) / n,
        })
    }

    /// Answer indices of the analytically optimal response for an observation.
    pub fn optimal_answer(&self, vocab: &Vocabulary, class_id: u32, observation: &Observation) -> Vec<usize> {
        match observation {
            Observation::Hint(h) => self.token_indices(vocab, h),
            Observation::NoHint => self.modal_answer(class_id),
            Observation::Latent => {
                let q = self.classes[class_id as usize].q;
                let modal = self.modal_answer(class_id);
                if q >= (1.0 - q) / (self.n_sequences() as f64 - 1.0) {
                    modal
                } else {
                    // every other sequence is equally likely; pick the next one
                    let code = (self.encode(&modal) + 1) % self.n_sequences();
                    self.decode(code)
                }
            }
        }
    }

    /// Draws a prompt of class `class_id`.
    pub fn sample_instance<R: RngCore + ?Sized>(
        &self,
        vocab: &Vocabulary,
        class_id: u32,
        instance_id: u64,
        rng: &mut R,
    ) -> Result<TaskInstance, TaskError> {
        let q = self.class(class_id)?.q;
        let n = self.n_sequences();
        let (observation, context, hidden) = match self.family {
            TaskFamily::LatentAnswer => {
                let hidden = self.draw_latent(class_id, q, rng);
                (Observation::Latent, 0, hidden)
            }
            TaskFamily::HintedChannel => {
                let hidden = self.decode(below(rng, n as u64) as usize);
                if uniform(rng) < q {
                    let code = self.encode(&hidden);
                    (Observation::Hint(self.to_tokens(vocab, &hidden)), 1 + code, hidden)
                } else {
                    (Observation::NoHint, 0, hidden)
                }
            }
        };
        Ok(TaskInstance {
            instance_id,
            class_id,
            observation,
            context,
            hidden_answer: self.to_tokens(vocab, &hidden),
        })
    }

    fn draw_latent<R: RngCore + ?Sized>(&self, class_id: u32, q: f64, rng: &mut R) -> Vec<usize> {
        let modal = self.modal_answer(class_id);
        if uniform(rng) < q {
            return modal;
        }
        let n = self.n_sequences();
        let modal_code = self.encode(&modal);
        let j = below(rng, (n - 1) as u64) as usize;
        self.decode(if j < modal_code { j } else { j + 1 })
    }

    /// A fresh hidden answer consistent with `instance`'s observation.
    pub fn redraw_answer<R: RngCore + ?Sized>(
        &self,
        vocab: &Vocabulary,
        instance: &TaskInstance,
        rng: &mut R,
    ) -> Vec<Token> {
        match &instance.observation {
            Observation::Latent => {
                let q = self.classes[instance.class_id as usize].q;
                let a = self.draw_latent(instance.class_id, q, rng);
                self.to_tokens(vocab, &a)
            }
            Observation::Hint(h) => h.clone(),
            Observation::NoHint => {
                let a = self.decode(below(rng, self.n_sequences() as u64) as usize);
                self.to_tokens(vocab, &a)
            }
        }
    }
}

/// Element-wise comparison with the hidden answer; a wrong length is an error.
pub fn check_answer(key: &[Token], answer: &[Token]) -> Result<bool, LengthMismatch> {
    if answer.len() != key.len() {
        return Err(LengthMismatch { found: answer.len(), expected: key.len() });
    }
    Ok(answer == key)
}

/// The verifier: 1 iff `answer` equals the hidden answer. Refusal can never match
/// because hidden answers only hold answer tokens.
pub fn ans_correct(instance: &TaskInstance, answer: &[Token]) -> u8 {
    check_answer(&instance.hidden_answer, answer).unwrap_or(false) as u8
}
