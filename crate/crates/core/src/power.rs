//! Transmit-power control by successive convex approximation.
//!
//! The slot objective is written as a difference of concave functions
//! `l(p) - h(p)` with
//!
//! ```text
//! l(p) = sum_links log2(p_km * h0)
//! h(p) = sum_links log2(psi_km(p) + noise_km)
//! ```
//!
//! so `l - h = sum log2(sinr)`. Each outer iteration linearizes `h` at the
//! current point, which yields a concave lower bound that touches the
//! objective at the anchor. The bound separates per UAV into
//! `max sum_m log2(p_m) - g_m p_m` under the power budget, solved in closed
//! form by water-filling with a bisection on the budget multiplier.
//! Maximizing a tangent minorant at every step makes the objective sequence
//! non-decreasing.

use std::f64::consts::LN_2;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::config::{InterferenceMode, NetworkConfig, ScaConfig};
use crate::error::{Error, Result};
use crate::model::{Association, LinkChannels, PowerAllocation, Topology};

const BISECTION_ITERS: usize = 200;

/// Linearization of `h` at an anchor point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SurrogateModel {
    pub anchor: PowerAllocation,
    /// `dh/dp` at the anchor, 1/W; zero off the associated links.
    pub grad: PowerAllocation,
    pub h_at_anchor: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScaReport {
    pub iterations: usize,
    /// D.C. objective `l - h` at the start point and after every outer iteration.
    pub objective_trace: Vec<f64>,
    /// Sum of achievable rates (bit/s) at the same points.
    pub rate_trace: Vec<f64>,
    pub converged: bool,
    /// Last value of the stopping statistic `|R(p_j+1) - R(p_j)|`.
    pub final_e: f64,
}

/// One slot's power-control problem: channels are fixed, powers vary.
#[derive(Debug, Clone)]
pub struct PowerProblem {
    pub channels: LinkChannels,
    pub p_max: f64,
}

impl PowerProblem {
    pub fn new(topology: &Topology, association: &Association, config: &NetworkConfig) -> Result<Self> {
        Ok(Self {
            channels: LinkChannels::new(topology, association, config)?,
            p_max: config.p_max,
        })
    }

    fn serving_powers(&self, p: &PowerAllocation) -> Result<Vec<f64>> {
        self.channels
            .serving
            .iter()
            .enumerate()
            .map(|(m, &k)| {
                let v = p.get(k, m);
                if v > 0.0 {
                    Ok(v)
                } else {
                    Err(Error::Domain(format!(
                        "power on associated link ({k}, {m}) must be > 0, got {v}"
                    )))
                }
            })
            .collect()
    }

    /// `(l, h)` of the D.C. split.
    pub fn dc_parts(&self, p: &PowerAllocation) -> Result<(f64, f64)> {
        let own = self.serving_powers(p)?;
        let psi = self.channels.serving_interference(p);
        let l = own.iter().map(|&v| (v * self.channels.h0).log2()).sum();
        let h = psi
            .iter()
            .zip(&self.channels.noise)
            .map(|(s, n)| (s + n).log2())
            .sum();
        Ok((l, h))
    }

    pub fn dc_objective(&self, p: &PowerAllocation) -> Result<f64> {
        let (l, h) = self.dc_parts(p)?;
        Ok(l - h)
    }

    pub fn sum_rate(&self, p: &PowerAllocation) -> f64 {
        self.channels.gu_rates(p).iter().sum()
    }

    /// Analytic `dh/dp` on the associated links.
    pub fn grad_h(&self, p: &PowerAllocation) -> PowerAllocation {
        let ch = &self.channels;
        let psi = ch.serving_interference(p);
        // c_j = 1 / (ln2 (psi_j + noise_j)) for the serving link of GU j.
        let c: Vec<f64> = psi
            .iter()
            .zip(&ch.noise)
            .map(|(s, n)| 1.0 / (LN_2 * (s + n)))
            .collect();
        let mut grad = PowerAllocation::zeros(ch.n_uavs, ch.n_gus);
        match ch.mode {
            InterferenceMode::Literal => {
                // p[k][m] enters psi_j for every link j served by another UAV.
                let mut c_total = vec![0.0; ch.n_uavs];
                for (j, &kj) in ch.serving.iter().enumerate() {
                    c_total[kj] += c[j];
                }
                let all: f64 = c_total.iter().sum();
                for (m, &k) in ch.serving.iter().enumerate() {
                    grad.set(k, m, ch.gain_of(k, m) * (all - c_total[k]));
                }
            }
            InterferenceMode::Physical => {
                // p[k][m] enters psi_j through UAV k's total power on GU j's channel.
                let mut per_uav = vec![0.0; ch.n_uavs];
                for (k, acc) in per_uav.iter_mut().enumerate() {
                    *acc = ch
                        .serving
                        .iter()
                        .enumerate()
                        .filter(|(_, &kj)| kj != k)
                        .map(|(j, _)| c[j] * ch.gain_of(k, j))
                        .sum();
                }
                for (m, &k) in ch.serving.iter().enumerate() {
                    grad.set(k, m, per_uav[k]);
                }
            }
        }
        grad
    }

    pub fn surrogate_model(&self, anchor: &PowerAllocation) -> Result<SurrogateModel> {
        let (_, h) = self.dc_parts(anchor)?;
        Ok(SurrogateModel {
            anchor: anchor.clone(),
            grad: self.grad_h(anchor),
            h_at_anchor: h,
        })
    }

    /// `l(p) - [h(p') + grad . (p - p')]`.
    pub fn surrogate_value(&self, p: &PowerAllocation, model: &SurrogateModel) -> Result<f64> {
        let (l, _) = self.dc_parts(p)?;
        let lin: f64 = p
            .as_slice()
            .iter()
            .zip(model.anchor.as_slice())
            .zip(model.grad.as_slice())
            .map(|((a, b), g)| g * (a - b))
            .sum();
        Ok(l - (model.h_at_anchor + lin))
    }

    /// Runs SCA from `p0` until the objective changes by less than `cfg.tol`.
    pub fn sca(&self, p0: &PowerAllocation, assoc: &Association, cfg: &ScaConfig) -> Result<(PowerAllocation, ScaReport)> {
        let mut p = p0.clone();
        let mut obj = self.dc_objective(&p)?;
        let mut report = ScaReport {
            iterations: 0,
            objective_trace: vec![obj],
            rate_trace: vec![self.sum_rate(&p)],
            converged: false,
            final_e: f64::INFINITY,
        };
        for _ in 0..cfg.max_outer {
            let model = self.surrogate_model(&p)?;
            let next = inner_solve(&model, assoc, self.p_max);
            let next_obj = self.dc_objective(&next)?;
            let e = (next_obj - obj).abs();
            report.iterations += 1;
            report.objective_trace.push(next_obj);
            report.rate_trace.push(self.sum_rate(&next));
            report.final_e = e;
            p = next;
            obj = next_obj;
            if e < cfg.tol {
                report.converged = true;
                break;
            }
        }
        Ok((p, report))
    }
}

pub fn dc_parts(
    p: &PowerAllocation,
    topology: &Topology,
    association: &Association,
    config: &NetworkConfig,
) -> Result<(f64, f64)> {
    PowerProblem::new(topology, association, config)?.dc_parts(p)
}

pub fn grad_h(
    p: &PowerAllocation,
    topology: &Topology,
    association: &Association,
    config: &NetworkConfig,
) -> Result<PowerAllocation> {
    Ok(PowerProblem::new(topology, association, config)?.grad_h(p))
}

pub fn sca(
    p0: &PowerAllocation,
    topology: &Topology,
    association: &Association,
    config: &NetworkConfig,
    sca_cfg: &ScaConfig,
) -> Result<(PowerAllocation, ScaReport)> {
    PowerProblem::new(topology, association, config)?.sca(p0, association, sca_cfg)
}

/// Maximizes the surrogate under the per-UAV budget and box constraints.
pub fn inner_solve(model: &SurrogateModel, association: &Association, p_max: f64) -> PowerAllocation {
    let mut out = PowerAllocation::zeros(association.n_uavs(), association.n_gus());
    for k in 0..association.n_uavs() {
        let links: Vec<usize> = association.members(k).collect();
        if links.is_empty() {
            continue;
        }
        let g: Vec<f64> = links.iter().map(|&m| model.grad.get(k, m)).collect();
        let wf = water_fill(&g, p_max);
        for (&m, &v) in links.iter().zip(&wf.powers) {
            out.set(k, m, v);
        }
    }
    out
}

/// Solution of `max sum log2(p_m) - g_m p_m` s.t. `sum p <= P`, `0 <= p <= P`.
#[derive(Debug, Clone, PartialEq)]
pub struct WaterFill {
    pub powers: Vec<f64>,
    /// Budget multiplier.
    pub mu: f64,
}

fn fill_level(g: &[f64], mu: f64, p_max: f64) -> impl Iterator<Item = f64> + '_ {
    g.iter().map(move |&gm| {
        let denom = LN_2 * (gm + mu);
        if denom > 0.0 {
            (1.0 / denom).min(p_max)
        } else {
            p_max
        }
    })
}

pub fn water_fill(g: &[f64], p_max: f64) -> WaterFill {
    let total = |mu: f64| fill_level(g, mu, p_max).sum::<f64>();
    if total(0.0) <= p_max {
        return WaterFill {
            powers: fill_level(g, 0.0, p_max).collect(),
            mu: 0.0,
        };
    }
    // At mu_hi every link gets at most P/L, so the budget holds.
    let mut lo = 0.0;
    let mut hi = g.len() as f64 / (LN_2 * p_max);
    for _ in 0..BISECTION_ITERS {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if total(mid) > p_max {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    WaterFill {
        powers: fill_level(g, hi, p_max).collect(),
        mu: hi,
    }
}

/// Largest violation of the KKT conditions of [`water_fill`]'s problem.
pub fn kkt_residual(g: &[f64], powers: &[f64], mu: f64, p_max: f64) -> f64 {
    let sum: f64 = powers.iter().sum();
    let mut r = (sum - p_max).max(0.0).max(-mu);
    r = r.max((mu * (p_max - sum)).abs());
    for (&gm, &p) in g.iter().zip(powers) {
        r = r.max(-p).max(p - p_max);
        let stat = 1.0 / (LN_2 * p) - gm - mu;
        // At the upper box bound the box multiplier absorbs a positive residual.
        r = r.max(if p >= p_max { (-stat).max(0.0) } else { stat.abs() });
    }
    r
}

/// Uniform draws per associated link, rescaled so each UAV spends exactly `p_max`.
pub fn random_allocation(association: &Association, p_max: f64, mut draw: impl FnMut() -> f64) -> PowerAllocation {
    let mut out = PowerAllocation::zeros(association.n_uavs(), association.n_gus());
    for k in 0..association.n_uavs() {
        let links: Vec<usize> = association.members(k).collect();
        let raw: Vec<f64> = links.iter().map(|_| draw()).collect();
        let s: f64 = raw.iter().sum();
        for (&m, &r) in links.iter().zip(&raw) {
            let v = if s > 0.0 { p_max * r / s } else { p_max / links.len() as f64 };
            out.set(k, m, v);
        }
    }
    out
}

/// [`random_allocation`] with draws from `U(0, 1)`.
pub fn random_powers<R: Rng + ?Sized>(association: &Association, p_max: f64, rng: &mut R) -> PowerAllocation {
    random_allocation(association, p_max, || rng.random::<f64>())
}
