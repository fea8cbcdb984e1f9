//! Counter-based random substreams.
//!
//! Every draw in a run comes from a ChaCha8 stream keyed by the master seed. The stream
//! id packs `(step, index, purpose)` as `step << 24 | index << 8 | purpose`, which is
//! injective for `step < 2^40`, `index < 2^16`, so no two substreams of a run collide and
//! a rollout produces the same tokens whichever worker thread runs it.

use rand_chacha::ChaCha8Rng;
use rand_core::{RngCore, SeedableRng};

pub use rand_core::RngCore as Rng;

/// What a substream is used for. The discriminant is the low byte of the stream id.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
#[repr(u8)]
pub enum Purpose {
    /// Class choice, observation and hidden answer of a prompt.
    Instance = 1,
    /// Token sampling for the group of responses.
    Rollout = 2,
    /// Per-response answer-key draws.
    AnswerKey = 3,
    /// Held-out evaluation prompts.
    EvalInstance = 4,
    /// Held-out evaluation responses.
    EvalRollout = 5,
}

pub const MAX_STEP: u64 = 1 << 40;
pub const MAX_INDEX: u64 = 1 << 16;

pub fn stream_id(step: u64, index: u64, purpose: Purpose) -> u64 {
    assert!(step < MAX_STEP, "step {step} exceeds substream range");
    assert!(index < MAX_INDEX, "index {index} exceeds substream range");
    (step << 24) | (index << 8) | purpose as u64
}

pub fn substream(seed: u64, step: u64, index: u64, purpose: Purpose) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream_id(step, index, purpose));
    rng
}

/// Uniform draw in `[0, 1)` with 53 random bits.
pub fn uniform<R: RngCore + ?Sized>(rng: &mut R) -> f64 {
    (rng.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
}

/// Unbiased uniform integer in `0..n` (Lemire's multiply-and-reject).
pub fn below<R: RngCore + ?Sized>(rng: &mut R, n: u64) -> u64 {
    assert!(n > 0);
    let threshold = n.wrapping_neg() % n;
    loop {
        let m = (rng.next_u64() as u128) * (n as u128);
        if (m as u64) >= threshold {
            return (m >> 64) as u64;
        }
    }
}

/// Inverse-CDF draw from a probability vector. Consumes exactly one `u64`.
pub fn categorical<R: RngCore + ?Sized>(rng: &mut R, probs: &[f64]) -> usize {
    let u = uniform(rng);
    let mut acc = 0.0;
    for (i, &p) in probs.iter().enumerate() {
        acc += p;
        if u < acc {
            return i;
        }
    }
    // rounding left the cumulative sum just under 1; fall back to the last
    // index with nonzero mass
    probs.iter().rposition(|&p| p > 0.0).unwrap_or(probs.len() - 1)
}
