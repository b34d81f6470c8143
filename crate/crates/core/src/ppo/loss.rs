//! The PPO objective and its gradient with respect to the network outputs.
//!
//! Per sample the maximized quantity is
//! `min(r A, clip(r, 1-eps, 1+eps) A) - c_v (V - R)^2 + c_e H`.

use super::dist::{ActionBounds, SquashedGaussian};
use super::network::PolicyOutput;

pub fn prob_ratio(logp_new: f64, logp_old: f64) -> f64 {
    (logp_new - logp_old).exp()
}

pub fn clipped_term(ratio: f64, adv: f64, eps: f64) -> f64 {
    (ratio * adv).min(ratio.clamp(1.0 - eps, 1.0 + eps) * adv)
}

/// Minibatch mean of the clipped surrogate.
pub fn clipped_objective(ratios: &[f64], advs: &[f64], eps: f64) -> f64 {
    assert_eq!(ratios.len(), advs.len());
    if ratios.is_empty() {
        return 0.0;
    }
    ratios
        .iter()
        .zip(advs)
        .map(|(&r, &a)| clipped_term(r, a, eps))
        .sum::<f64>()
        / ratios.len() as f64
}

/// Minibatch mean of the unclipped ratio objective.
pub fn ratio_objective(ratios: &[f64], advs: &[f64]) -> f64 {
    if ratios.is_empty() {
        return 0.0;
    }
    ratios.iter().zip(advs).map(|(r, a)| r * a).sum::<f64>() / ratios.len() as f64
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossWeights {
    pub clip: f64,
    pub value_coef: f64,
    pub entropy_coef: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct SampleTerms {
    pub surrogate: f64,
    pub value_loss: f64,
    pub entropy: f64,
    pub ratio: f64,
    pub log_prob: f64,
    /// The combined per-sample objective.
    pub objective: f64,
}

/// Evaluates one sample and returns `dJ/d(outputs)` laid out as
/// `[mean | log_std | value]`.
pub fn sample_objective(
    out: &PolicyOutput,
    raw: &[f64],
    logp_old: f64,
    adv: f64,
    ret: f64,
    bounds: &ActionBounds,
    w: &LossWeights,
) -> (SampleTerms, Vec<f64>) {
    let a = out.mean.len();
    let dist = SquashedGaussian {
        mean: &out.mean,
        log_std: &out.log_std,
        bounds,
    };
    let logp = dist.log_prob_raw(raw);
    let ratio = prob_ratio(logp, logp_old);
    let surrogate = clipped_term(ratio, adv, w.clip);
    let unclipped = ratio * adv;
    let clipped = ratio.clamp(1.0 - w.clip, 1.0 + w.clip) * adv;
    let in_range = (1.0 - w.clip..=1.0 + w.clip).contains(&ratio);
    // Only the unclipped branch depends on the parameters.
    let d_logp = if unclipped < clipped || (unclipped == clipped && in_range) {
        unclipped
    } else {
        0.0
    };

    let value_err = out.value - ret;
    let entropy = dist.entropy();
    let objective = surrogate - w.value_coef * value_err * value_err + w.entropy_coef * entropy;

    let mut d_out = vec![0.0; 2 * a + 1];
    for i in 0..a {
        let inv_var = (-2.0 * out.log_std[i]).exp();
        let diff = raw[i] - out.mean[i];
        d_out[i] = d_logp * diff * inv_var;
        d_out[a + i] = d_logp * (diff * diff * inv_var - 1.0) + w.entropy_coef;
    }
    d_out[2 * a] = -2.0 * w.value_coef * value_err;

    (
        SampleTerms {
            surrogate,
            value_loss: value_err * value_err,
            entropy,
            ratio,
            log_prob: logp,
            objective,
        },
        d_out,
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream_rng;
    use rand::Rng;

    #[test]
    fn ratio_examples() {
        assert_eq!(prob_ratio(-1.3, -1.3), 1.0);
        assert!((prob_ratio(2f64.ln(), 0.0) - 2.0).abs() < 1e-15);
        let mut rng = stream_rng(1, 0);
        for _ in 0..1000 {
            let old: f64 = rng.random_range(-20.0..0.0);
            let new: f64 = rng.random_range(-20.0..0.0);
            let r = prob_ratio(new, old);
            assert!((r * old.exp() - new.exp()).abs() <= 1e-12 * new.exp().max(1e-300));
        }
    }

    #[test]
    fn clipped_examples() {
        assert_eq!(clipped_objective(&[1.5], &[1.0], 0.2), 1.2);
        assert_eq!(clipped_objective(&[0.5], &[-1.0], 0.2), -0.8);
        for a in [-3.0, -0.1, 0.0, 2.5] {
            assert_eq!(clipped_term(1.0, a, 0.2), a);
        }
        assert!((clipped_objective(&[1.5, 0.5], &[1.0, -1.0], 0.2) - 0.2).abs() < 1e-15);
    }

    #[test]
    fn clipped_never_exceeds_unclipped() {
        let mut rng = stream_rng(2, 0);
        for _ in 0..10_000 {
            let r = rng.random_range(0.0..3.0);
            let a = rng.random_range(-5.0..5.0);
            let e = rng.random_range(0.01..0.99);
            assert!(clipped_term(r, a, e) <= r * a);
        }
    }
}
