use alloc::vec::Vec;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// A token id in the response alphabet.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Token(pub u16);

/// The grammatical role a token can play in a response.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TokenClass {
    ConfOpen,
    ConfClose,
    Eos,
    ConfBin,
    /// One of the K answer tokens or the refusal token.
    Answer,
}

impl core::fmt::Display for TokenClass {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        f.write_str(match self {
            TokenClass::ConfOpen => "<confidence>",
            TokenClass::ConfClose => "</confidence>",
            TokenClass::Eos => "<eos>",
            TokenClass::ConfBin => "confidence bin",
            TokenClass::Answer => "answer token",
        })
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum VocabError {
    #[error("need at least 2 confidence bins, got {0}")]
    TooFewBins(usize),
    #[error("need at least 2 answer tokens, got {0}")]
    TooFewAnswers(usize),
    #[error("answer length must be positive")]
    ZeroAnswerLength,
    #[error("vocabulary of {0} tokens does not fit 16-bit ids")]
    TooLarge(usize),
    #[error("token id {0} used twice")]
    DuplicateToken(u16),
    #[error("confidence bin values must rise strictly from 0.0 to 1.0")]
    BadBinValues,
}

/// The response alphabet: three forced delimiters, a refusal token, the confidence
/// bins and the K answer tokens.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Vocabulary {
    pub conf_open: Token,
    pub conf_close: Token,
    pub eos: Token,
    pub refuse: Token,
    pub conf_bins: Vec<(Token, f64)>,
    pub answer_tokens: Vec<Token>,
    pub answer_len: usize,
}

impl Vocabulary {
    /// Lays out ids as `open, close, eos, refuse, bins.., answers..` with evenly spaced
    /// bin values `i / (n_bins - 1)`.
    pub fn new(n_answers: usize, answer_len: usize, n_bins: usize) -> Result<Self, VocabError> {
        if n_bins < 2 {
            return Err(VocabError::TooFewBins(n_bins));
        }
        if n_answers < 2 {
            return Err(VocabError::TooFewAnswers(n_answers));
        }
        if answer_len == 0 {
            return Err(VocabError::ZeroAnswerLength);
        }
        let total = 4 + n_bins + n_answers;
        if total > u16::MAX as usize {
            return Err(VocabError::TooLarge(total));
        }
        let last = (n_bins - 1) as f64;
        let conf_bins = (0..n_bins)
            .map(|i| (Token((4 + i) as u16), i as f64 / last))
            .collect();
        let answer_tokens = (0..n_answers).map(|i| Token((4 + n_bins + i) as u16)).collect();
        Ok(Self {
            conf_open: Token(0),
            conf_close: Token(1),
            eos: Token(2),
            refuse: Token(3),
            conf_bins,
            answer_tokens,
            answer_len,
        })
    }

    /// Checks the invariants of a vocabulary that did not come from [`Vocabulary::new`].
    pub fn validate(&self) -> Result<(), VocabError> {
        if self.conf_bins.len() < 2 {
            return Err(VocabError::TooFewBins(self.conf_bins.len()));
        }
        if self.answer_tokens.len() < 2 {
            return Err(VocabError::TooFewAnswers(self.answer_tokens.len()));
        }
        if self.answer_len == 0 {
            return Err(VocabError::ZeroAnswerLength);
        }
        let mut ids: Vec<u16> = [self.conf_open, self.conf_close, self.eos, self.refuse]
            .iter()
            .chain(self.conf_bins.iter().map(|(t, _)| t))
            .chain(self.answer_tokens.iter())
            .map(|t| t.0)
            .collect();
        ids.sort_unstable();
        if let Some(w) = ids.windows(2).find(|w| w[0] == w[1]) {
            return Err(VocabError::DuplicateToken(w[0]));
        }
        let values: Vec<f64> = self.conf_bins.iter().map(|&(_, v)| v).collect();
        let rising = values.windows(2).all(|w| w[0] < w[1]);
        if !rising || values[0] != 0.0 || values[values.len() - 1] != 1.0 {
            return Err(VocabError::BadBinValues);
        }
        Ok(())
    }

    pub fn n_bins(&self) -> usize {
        self.conf_bins.len()
    }

    /// K, the number of answer tokens (refusal excluded).
    pub fn n_answers(&self) -> usize {
        self.answer_tokens.len()
    }

    /// Width of one answer head: the K answers plus refusal.
    pub fn answer_width(&self) -> usize {
        self.answer_tokens.len() + 1
    }

    /// Length of every well-formed response: open, bin, close, L answers, eos.
    pub fn response_len(&self) -> usize {
        4 + self.answer_len
    }

    pub fn bin_index(&self, token: Token) -> Option<usize> {
        self.conf_bins.iter().position(|&(t, _)| t == token)
    }

    pub fn bin_value(&self, index: usize) -> f64 {
        self.conf_bins[index].1
    }

    pub fn bin_token(&self, index: usize) -> Token {
        self.conf_bins[index].0
    }

    /// Index of `token` inside an answer head: `0..K` for answers, `K` for refusal.
    pub fn choice_index(&self, token: Token) -> Option<usize> {
        if token == self.refuse {
            return Some(self.answer_tokens.len());
        }
        self.answer_tokens.iter().position(|&t| t == token)
    }

    pub fn choice_token(&self, index: usize) -> Token {
        if index == self.answer_tokens.len() {
            self.refuse
        } else {
            self.answer_tokens[index]
        }
    }

    pub fn classify(&self, token: Token) -> Option<TokenClass> {
        if token == self.conf_open {
            Some(TokenClass::ConfOpen)
        } else if token == self.conf_close {
            Some(TokenClass::ConfClose)
        } else if token == self.eos {
            Some(TokenClass::Eos)
        } else if self.bin_index(token).is_some() {
            Some(TokenClass::ConfBin)
        } else if self.choice_index(token).is_some() {
            Some(TokenClass::Answer)
        } else {
            None
        }
    }

    /// The bin whose value is nearest to `p`; exact midpoints go to the lower bin.
    pub fn nearest_bin(&self, p: f64) -> usize {
        let mut best = 0;
        for (i, &(_, v)) in self.conf_bins.iter().enumerate() {
            if libm::fabs(v - p) < libm::fabs(self.conf_bins[best].1 - p) {
                best = i;
            }
        }
        best
    }
}
