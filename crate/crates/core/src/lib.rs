//! Segmented group-relative policy optimization for confidence-first outputs.
//!
//! A response is `<confidence> s </confidence> answer <eos>`: the policy commits to a
//! confidence bin before it answers. Training samples a group of responses per prompt,
//! scores answers with a verifier, uses the group's success rate as the confidence
//! target, and routes each advantage only to the tokens it is about:
//!
//! ```text
//! r_a(i) = 1[answer i correct]          p = mean_j r_a(j)
//! r_c(i) = -(s_i - p)^2
//! A_c(i) = norm(r_c)(i) -> confidence tokens
//! A_a(i) = norm(r_a)(i) -> answer tokens
//! ```
//!
//! Everything here is pure and allocation-only (`no_std` + `alloc`). File formats, run
//! directories and the command line live in the `coca-lab` crate.
#![no_std]
#![forbid(unsafe_code)]

extern crate alloc;
#[cfg(test)]
extern crate std;

mod math;

pub mod group;
pub mod metrics;
pub mod policy;
pub mod rewards;
pub mod rng;
pub mod tasks;
pub mod trainer;
pub mod trajectory;
pub mod vocab;

pub use group::RolloutGroup;
pub use metrics::EvalRecord;
pub use policy::{Gradient, PolicyParams, PolicyShape, PolicySnapshot};
pub use tasks::{AnswerKey, Observation, TaskClass, TaskFamily, TaskInstance, TaskSpec};
pub use trainer::{Mode, Objective, StepReport, TrainConfig};
pub use trajectory::{SegmentSpan, Trajectory};
pub use vocab::{Token, TokenClass, Vocabulary};
