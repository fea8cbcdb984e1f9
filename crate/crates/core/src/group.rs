use alloc::vec::Vec;
use serde::{Deserialize, Serialize};

use crate::rewards::{accuracy_reward, brier_confidence_reward, gesr, group_normalize};
use crate::tasks::TaskInstance;
use crate::trajectory::Trajectory;
use crate::vocab::Token;

/// G responses to one prompt with their rewards and segmented advantages.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RolloutGroup {
    pub instance: TaskInstance,
    /// Answer key each response was graded against.
    pub answer_keys: Vec<Vec<Token>>,
    pub trajectories: Vec<Trajectory>,
    pub acc_rewards: Vec<f64>,
    pub conf_rewards: Vec<f64>,
    pub gesr: f64,
    pub adv_conf: Vec<f64>,
    pub adv_ans: Vec<f64>,
    /// Answers of the wrong length seen while scoring.
    pub anomalies: usize,
}

impl RolloutGroup {
    /// Scores the responses: accuracy rewards, success rate, Brier-style confidence
    /// rewards and both normalized advantage vectors.
    pub fn score(
        instance: TaskInstance,
        answer_keys: Vec<Vec<Token>>,
        trajectories: Vec<Trajectory>,
        norm_eps: f64,
    ) -> Self {
        assert!(trajectories.len() >= 2, "a group needs at least two responses");
        assert_eq!(answer_keys.len(), trajectories.len());
        let (acc_rewards, anomalies) = accuracy_reward(&answer_keys, &trajectories);
        let p_hat = gesr(&acc_rewards).expect("nonempty group");
        let conf_rewards: Vec<f64> = trajectories
            .iter()
            .map(|t| brier_confidence_reward(t.parsed_confidence, p_hat))
            .collect();
        let adv_conf = group_normalize(&conf_rewards, norm_eps).expect("G >= 2");
        let adv_ans = group_normalize(&acc_rewards, norm_eps).expect("G >= 2");
        Self {
            instance,
            answer_keys,
            trajectories,
            acc_rewards,
            conf_rewards,
            gesr: p_hat,
            adv_conf,
            adv_ans,
            anomalies,
        }
    }

    pub fn size(&self) -> usize {
        self.trajectories.len()
    }

    pub fn confidences(&self) -> impl Iterator<Item = Option<f64>> + '_ {
        self.trajectories.iter().map(|t| t.parsed_confidence)
    }

    /// Lengths agree, the success rate is the mean accuracy reward, and every
    /// response has ordered, disjoint spans.
    pub fn check_invariants(&self) -> bool {
        let g = self.size();
        let lengths = [
            self.answer_keys.len(),
            self.acc_rewards.len(),
            self.conf_rewards.len(),
            self.adv_conf.len(),
            self.adv_ans.len(),
        ];
        let spans_ok = self.trajectories.iter().all(|t| {
            t.conf_span.start <= t.conf_span.end
                && t.conf_span.end <= t.ans_span.start
                && t.ans_span.end <= t.tokens.len()
        });
        g >= 2
            && lengths.iter().all(|&n| n == g)
            && gesr(&self.acc_rewards).is_ok_and(|p| p == self.gesr)
            && spans_ok
    }
}
