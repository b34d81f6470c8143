//! Tanh-squashed diagonal Gaussian over a box of actions.
//!
//! A raw sample `u ~ N(mean, std^2)` maps to `lo + (hi - lo) * (tanh(u) + 1) / 2`.
//! Log-densities are over the squashed action and include the change of
//! variables term, so they integrate to one over the box.

use std::f64::consts::{LN_2, PI};

use rand::Rng;
use rand_distr::StandardNormal;

/// Per-coordinate action bounds.
#[derive(Debug, Clone, PartialEq)]
pub struct ActionBounds {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
}

impl ActionBounds {
    pub fn dim(&self) -> usize {
        self.lo.len()
    }

    pub fn volume(&self) -> f64 {
        self.lo.iter().zip(&self.hi).map(|(l, h)| h - l).product()
    }

    pub fn squash(&self, raw: &[f64]) -> Vec<f64> {
        raw.iter()
            .zip(self.lo.iter().zip(&self.hi))
            .map(|(&u, (&l, &h))| l + (h - l) * 0.5 * (u.tanh() + 1.0))
            .collect()
    }

    /// Inverse of [`squash`](Self::squash); infinite at the bounds.
    pub fn unsquash(&self, action: &[f64]) -> Vec<f64> {
        action
            .iter()
            .zip(self.lo.iter().zip(&self.hi))
            .map(|(&a, (&l, &h))| (2.0 * (a - l) / (h - l) - 1.0).atanh())
            .collect()
    }
}

/// `ln |d tanh(u) / du| = ln(1 - tanh(u)^2)`, evaluated without cancellation.
fn log_dtanh(u: f64) -> f64 {
    let x = -2.0 * u.abs();
    2.0 * (LN_2 - u.abs() - x.exp().ln_1p())
}

#[derive(Debug, Clone, PartialEq)]
pub struct SquashedGaussian<'a> {
    pub mean: &'a [f64],
    pub log_std: &'a [f64],
    pub bounds: &'a ActionBounds,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ActionSample {
    /// Pre-squash Gaussian draw.
    pub raw: Vec<f64>,
    /// Squashed action inside the bounds.
    pub action: Vec<f64>,
    pub log_prob: f64,
}

impl SquashedGaussian<'_> {
    /// Gaussian log-density of the raw draw, without the squash correction.
    pub fn gaussian_log_prob(&self, raw: &[f64]) -> f64 {
        raw.iter()
            .zip(self.mean.iter().zip(self.log_std))
            .map(|(&u, (&mu, &ls))| {
                let z = (u - mu) * (-ls).exp();
                -0.5 * z * z - ls - 0.5 * (2.0 * PI).ln()
            })
            .sum()
    }

    /// Log-density of the squashed action produced by `raw`.
    pub fn log_prob_raw(&self, raw: &[f64]) -> f64 {
        let correction: f64 = raw
            .iter()
            .zip(self.bounds.lo.iter().zip(&self.bounds.hi))
            .map(|(&u, (&l, &h))| (0.5 * (h - l)).ln() + log_dtanh(u))
            .sum();
        self.gaussian_log_prob(raw) - correction
    }

    pub fn log_prob_action(&self, action: &[f64]) -> f64 {
        self.log_prob_raw(&self.bounds.unsquash(action))
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> ActionSample {
        let raw: Vec<f64> = self
            .mean
            .iter()
            .zip(self.log_std)
            .map(|(&mu, &ls)| mu + ls.exp() * rng.sample::<f64, _>(StandardNormal))
            .collect();
        let action = self.bounds.squash(&raw);
        let log_prob = self.log_prob_raw(&raw);
        ActionSample { raw, action, log_prob }
    }

    /// The squashed mean, used for greedy evaluation.
    pub fn mode_action(&self) -> Vec<f64> {
        self.bounds.squash(self.mean)
    }

    /// Entropy of the pre-squash Gaussian.
    pub fn entropy(&self) -> f64 {
        self.log_std
            .iter()
            .map(|ls| ls + 0.5 * (1.0 + (2.0 * PI).ln()))
            .sum()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream_rng;

    fn uav_bounds(n: usize) -> ActionBounds {
        ActionBounds {
            lo: (0..n).flat_map(|_| [0.0, -PI / 3.0]).collect(),
            hi: (0..n).flat_map(|_| [5.0, PI / 3.0]).collect(),
        }
    }

    #[test]
    fn saturation_and_zero_variance() {
        let b = uav_bounds(1);
        let mean = [1e3, 1e3];
        let ls = [-5.0, -5.0];
        let d = SquashedGaussian { mean: &mean, log_std: &ls, bounds: &b };
        let s = d.sample(&mut stream_rng(0, 0));
        assert!((s.action[0] - 5.0).abs() < 1e-12 && (s.action[1] - PI / 3.0).abs() < 1e-12);

        let mean = [0.3, -0.2];
        let ls = [-40.0, -40.0];
        let d = SquashedGaussian { mean: &mean, log_std: &ls, bounds: &b };
        let s = d.sample(&mut stream_rng(0, 1));
        let m = d.mode_action();
        assert!((s.action[0] - m[0]).abs() < 1e-12 && (s.action[1] - m[1]).abs() < 1e-12);
    }

    #[test]
    fn log_prob_consistent_between_raw_and_action() {
        let b = uav_bounds(2);
        let mean = [0.1, -0.3, 0.5, 0.0];
        let ls = [-0.5, 0.0, -1.0, 0.2];
        let d = SquashedGaussian { mean: &mean, log_std: &ls, bounds: &b };
        let mut rng = stream_rng(4, 0);
        for _ in 0..100 {
            let s = d.sample(&mut rng);
            let lp = d.log_prob_action(&s.action);
            assert!((lp - s.log_prob).abs() < 1e-6 * s.log_prob.abs().max(1.0));
        }
    }

    #[test]
    fn stable_jacobian_term() {
        for u in [-30.0, -3.0, 0.0, 0.7, 25.0] {
            let t: f64 = u;
            let naive = (1.0 - t.tanh().powi(2)).ln();
            if naive.is_finite() {
                assert!((log_dtanh(u) - naive).abs() < 1e-9, "{u}");
            }
            assert!(log_dtanh(u).is_finite());
        }
    }

    #[test]
    fn sample_mean_matches_quadrature() {
        let b = uav_bounds(1);
        let mean = [0.4, -0.6];
        let ls = [-0.3, 0.1];
        let d = SquashedGaussian { mean: &mean, log_std: &ls, bounds: &b };
        let mut rng = stream_rng(5, 0);
        let n = 100_000;
        let mut sum = [0.0; 2];
        let mut sq = [0.0; 2];
        for _ in 0..n {
            let s = d.sample(&mut rng);
            for c in 0..2 {
                sum[c] += s.action[c];
                sq[c] += s.action[c] * s.action[c];
            }
        }
        for c in 0..2 {
            // E[squash(u)] by midpoint rule over +-10 std.
            let sigma = ls[c].exp();
            let steps = 200_000;
            let (lo, hi) = (mean[c] - 10.0 * sigma, mean[c] + 10.0 * sigma);
            let du = (hi - lo) / steps as f64;
            let mut expect = 0.0;
            for i in 0..steps {
                let u = lo + (i as f64 + 0.5) * du;
                let z = (u - mean[c]) / sigma;
                let pdf = (-0.5 * z * z).exp() / (sigma * (2.0 * PI).sqrt());
                expect += pdf * (b.lo[c] + (b.hi[c] - b.lo[c]) * 0.5 * (u.tanh() + 1.0)) * du;
            }
            let emp = sum[c] / n as f64;
            let var = sq[c] / n as f64 - emp * emp;
            let se = (var / n as f64).sqrt();
            assert!((emp - expect).abs() <= 3.0 * se, "coord {c}: {emp} vs {expect} (se {se})");
        }
    }

    #[test]
    fn density_integrates_to_one() {
        let b = uav_bounds(1);
        let mean = [0.2, -0.1];
        let ls = [-0.4, -0.2];
        let d = SquashedGaussian { mean: &mean, log_std: &ls, bounds: &b };
        let mut rng = stream_rng(6, 0);
        let n = 1_000_000;
        let mut acc = 0.0;
        for _ in 0..n {
            let a = [rng.random_range(b.lo[0]..b.hi[0]), rng.random_range(b.lo[1]..b.hi[1])];
            acc += d.log_prob_action(&a).exp();
        }
        let integral = acc / n as f64 * b.volume();
        assert!((0.97..=1.03).contains(&integral), "{integral}");
    }
}
