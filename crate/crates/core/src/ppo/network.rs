//! Shared-trunk actor-critic MLP with hand-written backpropagation.
//!
//! Parameters live in one flat vector so optimizers, checkpoints and
//! finite-difference checks can treat them uniformly. The output layer emits
//! `[means (A) | log-std (A) | value (1)]` for an action dimension `A`.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const LOG_STD_MIN: f64 = -5.0;
pub const LOG_STD_MAX: f64 = 2.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
struct Dense {
    n_in: usize,
    n_out: usize,
    /// Offset of the `n_out x n_in` weight block; biases follow it.
    offset: usize,
}

impl Dense {
    fn n_params(&self) -> usize {
        self.n_out * (self.n_in + 1)
    }

    fn bias_offset(&self) -> usize {
        self.offset + self.n_out * self.n_in
    }
}

/// Weights and biases of the policy/value network.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicyParams {
    pub obs_dim: usize,
    pub act_dim: usize,
    pub hidden: Vec<usize>,
    pub theta: Vec<f64>,
    layers: Vec<Dense>,
}

/// Distribution parameters and value produced by one forward pass.
#[derive(Debug, Clone, PartialEq)]
pub struct PolicyOutput {
    pub mean: Vec<f64>,
    /// Clamped to `[LOG_STD_MIN, LOG_STD_MAX]`.
    pub log_std: Vec<f64>,
    pub value: f64,
}

/// Activations kept for the backward pass.
#[derive(Debug, Clone)]
pub struct ForwardCache {
    /// Input followed by each hidden activation (post-tanh).
    acts: Vec<Vec<f64>>,
    /// Raw output-layer values, before clamping.
    pub raw_out: Vec<f64>,
}

impl PolicyParams {
    pub fn new(obs_dim: usize, act_dim: usize, hidden: &[usize], init_log_std: f64, rng: &mut impl Rng) -> Self {
        let mut p = Self::zeros(obs_dim, act_dim, hidden);
        let n_layers = p.layers.len();
        for (li, layer) in p.layers.clone().into_iter().enumerate() {
            let scale = (1.0 / layer.n_in as f64).sqrt();
            for o in 0..layer.n_out {
                let head_scale = if li + 1 < n_layers {
                    1.0
                } else if o < act_dim {
                    0.01
                } else if o < 2 * act_dim {
                    0.0
                } else {
                    1.0
                };
                for i in 0..layer.n_in {
                    let z: f64 = rng.sample(StandardNormal);
                    p.theta[layer.offset + o * layer.n_in + i] = z * scale * head_scale;
                }
            }
            if li + 1 == n_layers {
                for o in act_dim..2 * act_dim {
                    p.theta[layer.bias_offset() + o] = init_log_std;
                }
            }
        }
        p
    }

    pub fn zeros(obs_dim: usize, act_dim: usize, hidden: &[usize]) -> Self {
        let mut sizes = vec![obs_dim];
        sizes.extend_from_slice(hidden);
        sizes.push(2 * act_dim + 1);
        let mut offset = 0;
        let layers: Vec<Dense> = sizes
            .windows(2)
            .map(|w| {
                let d = Dense {
                    n_in: w[0],
                    n_out: w[1],
                    offset,
                };
                offset += d.n_params();
                d
            })
            .collect();
        Self {
            obs_dim,
            act_dim,
            hidden: hidden.to_vec(),
            theta: vec![0.0; offset],
            layers,
        }
    }

    pub fn n_params(&self) -> usize {
        self.theta.len()
    }

    /// Rebuilds the layer table after deserialization and checks the parameter count.
    pub fn validated(self) -> Result<Self> {
        let fresh = Self::zeros(self.obs_dim, self.act_dim, &self.hidden);
        if fresh.theta.len() != self.theta.len() || fresh.layers != self.layers {
            return Err(Error::Shape {
                expected: fresh.theta.len(),
                got: self.theta.len(),
            });
        }
        if self.theta.iter().any(|v| !v.is_finite()) {
            return Err(Error::Checkpoint("non-finite parameter".into()));
        }
        Ok(self)
    }

    pub fn forward(&self, obs: &[f64]) -> Result<PolicyOutput> {
        Ok(self.forward_cached(obs)?.0)
    }

    pub fn forward_cached(&self, obs: &[f64]) -> Result<(PolicyOutput, ForwardCache)> {
        if obs.len() != self.obs_dim {
            return Err(Error::Shape {
                expected: self.obs_dim,
                got: obs.len(),
            });
        }
        let mut acts = Vec::with_capacity(self.layers.len());
        let mut x = obs.to_vec();
        let last = self.layers.len() - 1;
        for (li, layer) in self.layers.iter().enumerate() {
            let mut y = self.theta[layer.bias_offset()..layer.bias_offset() + layer.n_out].to_vec();
            for (o, yo) in y.iter_mut().enumerate() {
                let row = &self.theta[layer.offset + o * layer.n_in..layer.offset + (o + 1) * layer.n_in];
                *yo += row.iter().zip(&x).map(|(w, xi)| w * xi).sum::<f64>();
            }
            if li < last {
                y.iter_mut().for_each(|v| *v = v.tanh());
            }
            acts.push(std::mem::replace(&mut x, y));
        }
        let raw_out = x;
        let a = self.act_dim;
        let out = PolicyOutput {
            mean: raw_out[..a].to_vec(),
            log_std: raw_out[a..2 * a]
                .iter()
                .map(|v| v.clamp(LOG_STD_MIN, LOG_STD_MAX))
                .collect(),
            value: raw_out[2 * a],
        };
        Ok((out, ForwardCache { acts, raw_out }))
    }

    /// Accumulates `d_out^T * d(raw output)/d(theta)` into `grad`.
    ///
    /// `d_out` is the gradient with respect to the raw output layer; the
    /// log-std clamp is applied here, so callers pass gradients with respect
    /// to the clamped values.
    pub fn backward(&self, cache: &ForwardCache, d_out: &[f64], grad: &mut [f64]) {
        let a = self.act_dim;
        let mut delta = d_out.to_vec();
        for (o, d) in delta.iter_mut().enumerate().skip(a).take(a) {
            let raw = cache.raw_out[o];
            if !(LOG_STD_MIN..=LOG_STD_MAX).contains(&raw) {
                *d = 0.0;
            }
        }
        for li in (0..self.layers.len()).rev() {
            let layer = self.layers[li];
            let x = &cache.acts[li];
            let b_off = layer.bias_offset();
            let mut d_x = vec![0.0; layer.n_in];
            for (o, &d) in delta.iter().enumerate() {
                if d == 0.0 {
                    continue;
                }
                grad[b_off + o] += d;
                let w_off = layer.offset + o * layer.n_in;
                let row = &self.theta[w_off..w_off + layer.n_in];
                let g_row = &mut grad[w_off..w_off + layer.n_in];
                for i in 0..layer.n_in {
                    g_row[i] += d * x[i];
                    d_x[i] += row[i] * d;
                }
            }
            if li == 0 {
                break;
            }
            // x is the tanh output of the previous layer.
            delta = d_x.iter().zip(x).map(|(d, h)| d * (1.0 - h * h)).collect();
        }
    }
}
