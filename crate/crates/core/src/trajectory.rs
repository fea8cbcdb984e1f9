use alloc::vec::Vec;
use core::ops::Range;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::vocab::{Token, TokenClass, Vocabulary};

/// Half-open token range `[start, end)` inside a response.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct SegmentSpan {
    pub start: usize,
    pub end: usize,
}

impl SegmentSpan {
    pub fn new(start: usize, end: usize) -> Self {
        debug_assert!(start <= end);
        Self { start, end }
    }

    pub fn len(&self) -> usize {
        self.end - self.start
    }

    pub fn is_empty(&self) -> bool {
        self.start == self.end
    }

    pub fn contains(&self, t: usize) -> bool {
        self.start <= t && t < self.end
    }

    pub fn range(&self) -> Range<usize> {
        self.start..self.end
    }
}

/// First position where a token sequence leaves the response grammar.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Error)]
#[error("format violation at position {position}: expected {expected}")]
pub struct FormatViolation {
    pub position: usize,
    pub expected: TokenClass,
}

/// Ways a trajectory can be inconsistent beyond its token grammar.
#[derive(Clone, Debug, PartialEq, Error)]
pub enum TrajectoryError {
    #[error(transparent)]
    Format(#[from] FormatViolation),
    #[error("segment spans {conf:?}/{ans:?} do not match the grammar")]
    Spans { conf: SegmentSpan, ans: SegmentSpan },
    #[error("parsed confidence {found:?} differs from bin value {expected}")]
    Confidence { found: Option<f64>, expected: f64 },
    #[error("{found} recorded log-probabilities for {expected} tokens")]
    LogprobCount { found: usize, expected: usize },
}

/// One sampled response with its segment spans and the sampling policy's
/// per-token log-probabilities (0 for forced delimiters).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub tokens: Vec<Token>,
    pub conf_span: SegmentSpan,
    pub ans_span: SegmentSpan,
    pub logprobs_old: Vec<f64>,
    pub parsed_confidence: Option<f64>,
}

/// Spans and parsed confidence of a grammatical response.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Segments {
    pub conf_span: SegmentSpan,
    pub ans_span: SegmentSpan,
    pub parsed_confidence: f64,
}

/// Checks `tokens` against `conf_open, bin, conf_close, answer × L, eos`.
pub fn validate_tokens(tokens: &[Token], vocab: &Vocabulary) -> Result<(), FormatViolation> {
    let expected = expected_classes(vocab);
    for (position, &class) in expected.iter().enumerate() {
        let ok = tokens
            .get(position)
            .is_some_and(|&t| vocab.classify(t) == Some(class));
        if !ok {
            return Err(FormatViolation { position, expected: class });
        }
    }
    if tokens.len() > expected.len() {
        // nothing may follow eos
        return Err(FormatViolation { position: expected.len(), expected: TokenClass::Eos });
    }
    Ok(())
}

fn expected_classes(vocab: &Vocabulary) -> Vec<TokenClass> {
    let mut classes = Vec::with_capacity(vocab.response_len());
    classes.extend([TokenClass::ConfOpen, TokenClass::ConfBin, TokenClass::ConfClose]);
    classes.extend(core::iter::repeat_n(TokenClass::Answer, vocab.answer_len));
    classes.push(TokenClass::Eos);
    classes
}

/// Full trajectory check: grammar, spans, parsed confidence and log-prob bookkeeping.
pub fn validate_trajectory(traj: &Trajectory, vocab: &Vocabulary) -> Result<(), TrajectoryError> {
    validate_tokens(&traj.tokens, vocab)?;
    let seg = segments_of(&traj.tokens, vocab);
    if traj.conf_span != seg.conf_span || traj.ans_span != seg.ans_span {
        return Err(TrajectoryError::Spans { conf: traj.conf_span, ans: traj.ans_span });
    }
    if traj.parsed_confidence != Some(seg.parsed_confidence) {
        return Err(TrajectoryError::Confidence {
            found: traj.parsed_confidence,
            expected: seg.parsed_confidence,
        });
    }
    if traj.logprobs_old.len() != traj.tokens.len() {
        return Err(TrajectoryError::LogprobCount {
            found: traj.logprobs_old.len(),
            expected: traj.tokens.len(),
        });
    }
    Ok(())
}

/// Reads the spans and the confidence value off a response that passed validation.
pub fn extract_segments(traj: &Trajectory, vocab: &Vocabulary) -> Segments {
    segments_of(&traj.tokens, vocab)
}

fn segments_of(tokens: &[Token], vocab: &Vocabulary) -> Segments {
    let conf_span = SegmentSpan::new(1, 2);
    let ans_span = SegmentSpan::new(3, 3 + vocab.answer_len);
    let bin = vocab
        .bin_index(tokens[1])
        .expect("extract_segments requires a validated trajectory");
    Segments { conf_span, ans_span, parsed_confidence: vocab.bin_value(bin) }
}

impl Trajectory {
    /// Builds a trajectory from grammatical tokens, filling spans and the parsed confidence.
    pub fn from_tokens(
        tokens: Vec<Token>,
        logprobs_old: Vec<f64>,
        vocab: &Vocabulary,
    ) -> Result<Self, TrajectoryError> {
        validate_tokens(&tokens, vocab)?;
        let seg = segments_of(&tokens, vocab);
        let traj = Self {
            tokens,
            conf_span: seg.conf_span,
            ans_span: seg.ans_span,
            logprobs_old,
            parsed_confidence: Some(seg.parsed_confidence),
        };
        validate_trajectory(&traj, vocab)?;
        Ok(traj)
    }

    pub fn answer(&self) -> &[Token] {
        &self.tokens[self.ans_span.range()]
    }

    /// Positions that carry gradient: the confidence span then the answer span.
    pub fn learnable_positions(&self) -> impl Iterator<Item = usize> + '_ {
        self.conf_span.range().chain(self.ans_span.range())
    }

    pub fn n_learnable(&self) -> usize {
        self.conf_span.len() + self.ans_span.len()
    }

    pub fn is_refusal(&self, vocab: &Vocabulary) -> bool {
        self.answer().contains(&vocab.refuse)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    fn vocab(l: usize) -> Vocabulary {
        Vocabulary::new(8, l, 21).unwrap()
    }

    fn bin(v: &Vocabulary, x: f64) -> Token {
        v.bin_token(v.nearest_bin(x))
    }

    #[test]
    fn well_formed_response_passes() {
        let v = vocab(1);
        let toks = vec![v.conf_open, bin(&v, 0.5), v.conf_close, v.answer_tokens[3], v.eos];
        assert_eq!(validate_tokens(&toks, &v), Ok(()));
        let t = Trajectory::from_tokens(toks, vec![0.0; 5], &v).unwrap();
        assert_eq!(validate_trajectory(&t, &v), Ok(()));
    }

    #[test]
    fn answer_in_confidence_slot_is_flagged_at_one() {
        let v = vocab(1);
        let toks = [v.conf_open, v.answer_tokens[3], v.conf_close, v.answer_tokens[3], v.eos];
        assert_eq!(
            validate_tokens(&toks, &v),
            Err(FormatViolation { position: 1, expected: TokenClass::ConfBin })
        );
    }

    #[test]
    fn empty_sequence_is_flagged_at_zero() {
        let v = vocab(1);
        assert_eq!(
            validate_tokens(&[], &v),
            Err(FormatViolation { position: 0, expected: TokenClass::ConfOpen })
        );
    }

    #[test]
    fn trailing_tokens_are_rejected() {
        let v = vocab(1);
        let toks = [v.conf_open, bin(&v, 0.5), v.conf_close, v.refuse, v.eos, v.eos];
        assert_eq!(validate_tokens(&toks, &v).unwrap_err().position, 5);
    }

    #[test]
    fn segments_for_single_token_answer() {
        let v = vocab(1);
        let toks = vec![v.conf_open, bin(&v, 0.25), v.conf_close, v.answer_tokens[1], v.eos];
        let t = Trajectory::from_tokens(toks, vec![0.0; 5], &v).unwrap();
        let s = extract_segments(&t, &v);
        assert_eq!(s.conf_span, SegmentSpan::new(1, 2));
        assert_eq!(s.ans_span, SegmentSpan::new(3, 4));
        assert_eq!(s.parsed_confidence, 0.25);
    }

    #[test]
    fn segments_for_two_token_answer() {
        let v = vocab(2);
        let toks = vec![v.conf_open, bin(&v, 1.0), v.conf_close, v.answer_tokens[1], v.refuse, v.eos];
        let t = Trajectory::from_tokens(toks, vec![0.0; 6], &v).unwrap();
        let s = extract_segments(&t, &v);
        assert_eq!(s.conf_span, SegmentSpan::new(1, 2));
        assert_eq!(s.ans_span, SegmentSpan::new(3, 5));
        assert_eq!(s.parsed_confidence, 1.0);
        assert!(t.is_refusal(&v));
        assert_eq!(t.learnable_positions().collect::<Vec<_>>(), vec![1, 3, 4]);
    }

    #[test]
    fn inconsistent_bookkeeping_is_caught() {
        let v = vocab(1);
        let toks = vec![v.conf_open, bin(&v, 0.5), v.conf_close, v.answer_tokens[0], v.eos];
        let mut t = Trajectory::from_tokens(toks, vec![0.0; 5], &v).unwrap();
        t.parsed_confidence = Some(0.3);
        assert!(matches!(validate_trajectory(&t, &v), Err(TrajectoryError::Confidence { .. })));
        t.parsed_confidence = Some(0.5);
        t.ans_span = SegmentSpan::new(2, 4);
        assert!(matches!(validate_trajectory(&t, &v), Err(TrajectoryError::Spans { .. })));
        t.ans_span = SegmentSpan::new(3, 4);
        t.logprobs_old.pop();
        assert!(matches!(validate_trajectory(&t, &v), Err(TrajectoryError::LogprobCount { .. })));
    }
}
