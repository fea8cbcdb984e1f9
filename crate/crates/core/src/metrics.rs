//! Calibration and discrimination metrics, confidence parsing and TTC accounting.
//!
//! Records whose confidence failed to parse count toward accuracy and the success
//! rate but are left out of ECE, Brier score and AUROC.

use alloc::vec::Vec;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::trajectory::Trajectory;

pub const DEFAULT_ECE_BINS: usize = 10;

pub const OPEN_TAG: &str = "<confidence>";
pub const CLOSE_TAG: &str = "</confidence>";

/// One scored example. `score` is `None` when the confidence could not be parsed.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalRecord {
    pub score: Option<f64>,
    pub label: bool,
    pub ttc: u32,
}

impl EvalRecord {
    pub fn from_trajectory(traj: &Trajectory, correct: bool) -> Self {
        Self { score: traj.parsed_confidence, label: correct, ttc: trajectory_ttc(traj) }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Error)]
pub enum MetricsError {
    #[error("no records")]
    NoRecords,
    #[error("no record has a parsed confidence")]
    NoParsed,
    #[error("bin count must be at least 1")]
    ZeroBins,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Error)]
pub enum ParseFailure {
    #[error("no <confidence> tag")]
    MissingOpen,
    #[error("unterminated <confidence> tag")]
    MissingClose,
    #[error("confidence is not a plain decimal number")]
    NotNumeric,
    #[error("confidence outside [0, 1]")]
    OutOfRange,
}

/// Extracts the first `<confidence>...</confidence>` span and parses it as a plain
/// decimal in [0, 1]. Accepts `0`, `1`, `0.5` and `.5`; rejects signs, exponents,
/// percentages and words.
pub fn parse_confidence(text: &str) -> Result<f64, ParseFailure> {
    let start = text.find(OPEN_TAG).ok_or(ParseFailure::MissingOpen)? + OPEN_TAG.len();
    let len = text[start..].find(CLOSE_TAG).ok_or(ParseFailure::MissingClose)?;
    let body = text[start..start + len].trim();
    let (int, frac) = match body.split_once('.') {
        Some((i, f)) => (i, f),
        None => (body, ""),
    };
    let digits = |s: &str| s.bytes().all(|b| b.is_ascii_digit());
    if int.len() + frac.len() == 0 || !digits(int) || !digits(frac) {
        return Err(ParseFailure::NotNumeric);
    }
    let value: f64 = body.parse().map_err(|_| ParseFailure::NotNumeric)?;
    if (0.0..=1.0).contains(&value) {
        Ok(value)
    } else {
        Err(ParseFailure::OutOfRange)
    }
}

fn parsed(records: &[EvalRecord]) -> impl Iterator<Item = (f64, bool)> + '_ {
    records.iter().filter_map(|r| r.score.map(|s| (s, r.label)))
}

/// Percentage of correct records, parse failures included.
pub fn accuracy(records: &[EvalRecord]) -> Result<f64, MetricsError> {
    if records.is_empty() {
        return Err(MetricsError::NoRecords);
    }
    let hits = records.iter().filter(|r| r.label).count();
    Ok(100.0 * hits as f64 / records.len() as f64)
}

/// Fraction of records with a parsed confidence.
pub fn success_rate(records: &[EvalRecord]) -> Result<f64, MetricsError> {
    if records.is_empty() {
        return Err(MetricsError::NoRecords);
    }
    Ok(parsed(records).count() as f64 / records.len() as f64)
}

/// Equal-width bin of `s`: `[lo, hi)` except the last bin, which also takes 1.0.
pub fn bin_index(s: f64, n_bins: usize) -> usize {
    let i = libm::floor(s * n_bins as f64);
    if i < 0.0 {
        0
    } else {
        (i as usize).min(n_bins - 1)
    }
}

/// `sum_b (n_b / N) |acc_b - conf_b|` over equal-width bins.
pub fn ece(records: &[EvalRecord], n_bins: usize) -> Result<f64, MetricsError> {
    if n_bins == 0 {
        return Err(MetricsError::ZeroBins);
    }
    let mut conf = alloc::vec![0.0; n_bins];
    let mut acc = alloc::vec![0.0; n_bins];
    let mut n = 0usize;
    for (s, y) in parsed(records) {
        let b = bin_index(s, n_bins);
        conf[b] += s;
        acc[b] += y as u8 as f64;
        n += 1;
    }
    if n == 0 {
        return Err(MetricsError::NoParsed);
    }
    Ok(conf.iter().zip(&acc).map(|(c, a)| libm::fabs(a - c)).sum::<f64>() / n as f64)
}

/// Mean `(s - label)^2` over parsed records.
pub fn brier_score(records: &[EvalRecord]) -> Result<f64, MetricsError> {
    let mut total = 0.0;
    let mut n = 0usize;
    for (s, y) in parsed(records) {
        let d = s - y as u8 as f64;
        total += d * d;
        n += 1;
    }
    if n == 0 {
        return Err(MetricsError::NoParsed);
    }
    Ok(total / n as f64)
}

/// Probability that a random positive outscores a random negative, ties credited
/// one half. `None` when either class is empty.
///
/// Uses midranks: with 1-based positions `i..=j` for a tie block, twice the midrank
/// is `i + j`, so the whole Mann-Whitney statistic stays in integers.
pub fn auroc(records: &[EvalRecord]) -> Option<f64> {
    let mut pts: Vec<(f64, bool)> = parsed(records).collect();
    let n_pos = pts.iter().filter(|p| p.1).count() as u64;
    let n_neg = pts.len() as u64 - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return None;
    }
    pts.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut twice_rank_sum = 0u64;
    let mut i = 0;
    while i < pts.len() {
        let mut j = i;
        while j + 1 < pts.len() && pts[j + 1].0 == pts[i].0 {
            j += 1;
        }
        let twice_rank = (i + 1 + j + 1) as u64;
        let pos_in_block = pts[i..=j].iter().filter(|p| p.1).count() as u64;
        twice_rank_sum += twice_rank * pos_in_block;
        i = j + 1;
    }
    let twice_u = twice_rank_sum - n_pos * (n_pos + 1);
    Some(twice_u as f64 / (2 * n_pos * n_neg) as f64)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReliabilityRow {
    pub bin_lo: f64,
    pub bin_hi: f64,
    pub count: u64,
    pub mean_conf: Option<f64>,
    pub mean_acc: Option<f64>,
}

/// One row per bin in ascending order, empty bins included.
pub fn reliability_table(records: &[EvalRecord], n_bins: usize) -> Result<Vec<ReliabilityRow>, MetricsError> {
    if n_bins == 0 {
        return Err(MetricsError::ZeroBins);
    }
    let mut sums = alloc::vec![(0u64, 0.0f64, 0.0f64); n_bins];
    for (s, y) in parsed(records) {
        let cell = &mut sums[bin_index(s, n_bins)];
        cell.0 += 1;
        cell.1 += s;
        cell.2 += y as u8 as f64;
    }
    Ok(sums
        .iter()
        .enumerate()
        .map(|(b, &(count, conf, acc))| ReliabilityRow {
            bin_lo: b as f64 / n_bins as f64,
            bin_hi: (b + 1) as f64 / n_bins as f64,
            count,
            mean_conf: (count > 0).then(|| conf / count as f64),
            mean_acc: (count > 0).then(|| acc / count as f64),
        })
        .collect())
}

/// ECE recomputed from a reliability table; `None` if the table is empty.
pub fn ece_from_table(rows: &[ReliabilityRow]) -> Option<f64> {
    let n: u64 = rows.iter().map(|r| r.count).sum();
    if n == 0 {
        return None;
    }
    Some(
        rows.iter()
            .filter_map(|r| Some(r.count as f64 / n as f64 * libm::fabs(r.mean_acc? - r.mean_conf?)))
            .sum(),
    )
}

/// Generated tokens up to and including the confidence close delimiter.
pub fn trajectory_ttc(traj: &Trajectory) -> u32 {
    traj.conf_span.end as u32 + 1
}

/// Character end offsets of the tokens the built-in splitter produces. Each tag is
/// one token, runs of alphanumerics and `.` are one token, any other non-space
/// character is a token of its own, and whitespace is dropped.
pub fn split_transcript(text: &str) -> Vec<u64> {
    let mut ends = Vec::new();
    let mut rest = text;
    let mut pos = 0u64;
    let is_word = |c: char| c.is_alphanumeric() || c == '.';
    while let Some(c) = rest.chars().next() {
        let taken = if let Some(tag) = [OPEN_TAG, CLOSE_TAG].into_iter().find(|t| rest.starts_with(*t)) {
            tag.len()
        } else if is_word(c) {
            rest.find(|d: char| !is_word(d)).unwrap_or(rest.len())
        } else {
            c.len_utf8()
        };
        let chars = rest[..taken].chars().count() as u64;
        pos += chars;
        if !c.is_whitespace() {
            ends.push(pos);
        }
        rest = &rest[taken..];
    }
    ends
}

/// Character offset just past the first close tag that follows an open tag.
pub fn confidence_end_char(text: &str) -> Option<u64> {
    let start = text.find(OPEN_TAG)? + OPEN_TAG.len();
    let end = start + text[start..].find(CLOSE_TAG)? + CLOSE_TAG.len();
    Some(text[..end].chars().count() as u64)
}

/// TTC from per-token character end offsets: tokens up to the one that completes the
/// close tag. Without a close tag every generated token counts.
pub fn ttc_from_offsets(token_ends: &[u64], confidence_end: Option<u64>) -> u32 {
    let n = match confidence_end {
        Some(cut) => token_ends.iter().position(|&e| e >= cut).map_or(token_ends.len(), |i| i + 1),
        None => token_ends.len(),
    };
    n as u32
}

/// TTC for a transcript using the built-in splitter, capped at `generated` when the
/// true token count is known.
pub fn transcript_ttc(text: &str, generated: Option<u64>) -> u32 {
    let ttc = ttc_from_offsets(&split_transcript(text), confidence_end_char(text));
    match generated {
        Some(g) => ttc.min(g.min(u32::MAX as u64) as u32),
        None => ttc,
    }
}
