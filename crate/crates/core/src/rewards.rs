//! Rewards and group-relative advantages.

use alloc::vec::Vec;
use thiserror::Error;

use crate::tasks::check_answer;
use crate::trajectory::Trajectory;
use crate::vocab::Token;

/// Stabilizer added to the group standard deviation.
pub const DEFAULT_NORM_EPS: f64 = 1e-8;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Error)]
pub enum RewardError {
    #[error("empty group")]
    EmptyGroup,
    #[error("group normalization needs at least 2 rewards, got {0}")]
    GroupTooSmall(usize),
    #[error("majority vote over an empty list")]
    NoAnswers,
}

/// Mean and population standard deviation of a group's rewards.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GroupStats {
    pub mean: f64,
    pub std: f64,
    pub eps: f64,
}

impl GroupStats {
    pub fn of(rewards: &[f64], eps: f64) -> Result<Self, RewardError> {
        if rewards.is_empty() {
            return Err(RewardError::EmptyGroup);
        }
        let n = rewards.len() as f64;
        let mut mean = rewards.iter().sum::<f64>() / n;
        // second pass removes most of the rounding left by the naive sum
        mean += rewards.iter().map(|r| r - mean).sum::<f64>() / n;
        let var = rewards.iter().map(|r| (r - mean) * (r - mean)).sum::<f64>() / n;
        Ok(Self { mean, std: libm::sqrt(var), eps })
    }
}

/// Per-response correctness against each response's answer key, plus the number of
/// answers that had the wrong length (scored 0).
pub fn accuracy_reward(keys: &[Vec<Token>], trajectories: &[Trajectory]) -> (Vec<f64>, usize) {
    let mut anomalies = 0;
    let rewards = keys
        .iter()
        .zip(trajectories)
        .map(|(k, t)| match check_answer(k, t.answer()) {
            Ok(hit) => hit as u8 as f64,
            Err(_) => {
                anomalies += 1;
                0.0
            }
        })
        .collect();
    (rewards, anomalies)
}

/// Group-wise empirical success rate: the plain mean over all G responses.
pub fn gesr(acc_rewards: &[f64]) -> Result<f64, RewardError> {
    if acc_rewards.is_empty() {
        return Err(RewardError::EmptyGroup);
    }
    Ok(acc_rewards.iter().sum::<f64>() / acc_rewards.len() as f64)
}

/// Reward for an unparseable confidence.
pub const UNPARSEABLE_CONFIDENCE_REWARD: f64 = -1.0;

/// `-(s - p)^2`, or -1 when the confidence could not be parsed.
pub fn brier_confidence_reward(s: Option<f64>, p_hat: f64) -> f64 {
    match s {
        Some(s) => -(s - p_hat) * (s - p_hat),
        None => UNPARSEABLE_CONFIDENCE_REWARD,
    }
}

/// Answer-first calibration reward `c - (s - c)^2`; an unparseable confidence is
/// scored as `s = 1 - c`.
pub fn rlcr_reward(s: Option<f64>, correct: f64) -> f64 {
    let s = s.unwrap_or(1.0 - correct);
    correct - (s - correct) * (s - correct)
}

/// Unweighted sum of accuracy and confidence rewards.
pub fn joint_reward(r_acc: f64, r_conf: f64) -> f64 {
    r_acc + r_conf
}

/// `(r_i - mean) / (std + eps)` with the population standard deviation.
pub fn group_normalize(rewards: &[f64], eps: f64) -> Result<Vec<f64>, RewardError> {
    if rewards.len() < 2 {
        return Err(RewardError::GroupTooSmall(rewards.len()));
    }
    if rewards.iter().all(|&r| r == rewards[0]) {
        return Ok(alloc::vec![0.0; rewards.len()]);
    }
    let stats = GroupStats::of(rewards, eps)?;
    let denom = stats.std + eps;
    Ok(rewards.iter().map(|r| (r - stats.mean) / denom).collect())
}

/// The most frequent answer (exact equality) and its share of the votes.
/// Ties go to the answer that appeared first.
pub fn majority_vote_confidence<A: PartialEq + Clone>(answers: &[A]) -> Result<(A, f64), RewardError> {
    if answers.is_empty() {
        return Err(RewardError::NoAnswers);
    }
    let mut best = 0;
    let mut best_count = 0;
    for (i, a) in answers.iter().enumerate() {
        if answers[..i].contains(a) {
            continue;
        }
        let count = answers[i..].iter().filter(|b| *b == a).count();
        if count > best_count {
            best = i;
            best_count = count;
        }
    }
    Ok((answers[best].clone(), best_count as f64 / answers.len() as f64))
}
