use libm::{exp, log};

/// Writes `softmax(logits / temperature)` into `out`.
pub(crate) fn softmax_into(logits: &[f64], temperature: f64, out: &mut [f64]) {
    debug_assert_eq!(logits.len(), out.len());
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut total = 0.0;
    for (o, &z) in out.iter_mut().zip(logits) {
        *o = exp((z - max) / temperature);
        total += *o;
    }
    for o in out.iter_mut() {
        *o /= total;
    }
}

pub(crate) fn log_sum_exp(logits: &[f64]) -> f64 {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let total: f64 = logits.iter().map(|&z| exp(z - max)).sum();
    max + log(total)
}

pub(crate) fn log_softmax_at(logits: &[f64], index: usize) -> f64 {
    logits[index] - log_sum_exp(logits)
}

/// Exact categorical KL(p || q) for two logit vectors, in nats.
pub(crate) fn categorical_kl_logits(p_logits: &[f64], q_logits: &[f64]) -> f64 {
    let lp = log_sum_exp(p_logits);
    let lq = log_sum_exp(q_logits);
    p_logits
        .iter()
        .zip(q_logits)
        .map(|(&zp, &zq)| {
            let log_p = zp - lp;
            exp(log_p) * (log_p - (zq - lq))
        })
        .sum()
}

/// Gradient of KL(softmax(p) || softmax(q)) with respect to the logits of `p`:
/// `p_j (log p_j - log q_j - KL)`.
pub(crate) fn categorical_kl_grad(p_logits: &[f64], q_logits: &[f64], scale: f64, out: &mut [f64]) {
    let lp = log_sum_exp(p_logits);
    let lq = log_sum_exp(q_logits);
    let kl = categorical_kl_logits(p_logits, q_logits);
    for ((o, &zp), &zq) in out.iter_mut().zip(p_logits).zip(q_logits) {
        let log_p = zp - lp;
        *o += scale * exp(log_p) * (log_p - (zq - lq) - kl);
    }
}
