//! Link geometry, THz channel gains, interference, SINR and achievable rates,
//! plus feasibility checks for a full trajectory.

use serde::{Deserialize, Serialize};

use crate::config::{InterferenceMode, NetworkConfig};
use crate::error::{Error, Result};

pub type Point2 = [f64; 2];
pub type Point3 = [f64; 3];

/// UAV and GU positions at one time slot.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Topology {
    pub uav_pos: Vec<Point3>,
    /// Headings in `[-pi, pi)`.
    pub uav_heading: Vec<f64>,
    pub gu_pos: Vec<Point2>,
}

impl Topology {
    pub fn n_uavs(&self) -> usize {
        self.uav_pos.len()
    }

    pub fn n_gus(&self) -> usize {
        self.gu_pos.len()
    }

    /// Horizontal UAV positions.
    pub fn uav_xy(&self) -> Vec<Point2> {
        self.uav_pos.iter().map(|q| [q[0], q[1]]).collect()
    }

    /// True when every coordinate lies in the area box and every UAV flies at `altitude`.
    pub fn within_bounds(&self, area_side: f64, altitude: f64) -> bool {
        let inside = |v: f64| (0.0..=area_side).contains(&v);
        self.uav_pos
            .iter()
            .all(|q| inside(q[0]) && inside(q[1]) && q[2] == altitude)
            && self.gu_pos.iter().all(|o| inside(o[0]) && inside(o[1]))
            && self
                .uav_heading
                .iter()
                .all(|h| (-std::f64::consts::PI..std::f64::consts::PI).contains(h))
    }
}

/// Binary GU-to-UAV association: `assign[m]` is the serving UAV of GU `m`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Association {
    assign: Vec<usize>,
    n_uavs: usize,
}

impl Association {
    pub fn new(assign: Vec<usize>, n_uavs: usize) -> Result<Self> {
        if let Some(&k) = assign.iter().find(|&&k| k >= n_uavs) {
            return Err(Error::Index {
                what: "uav for gu",
                index: k,
                len: n_uavs,
            });
        }
        Ok(Self { assign, n_uavs })
    }

    pub fn assign(&self) -> &[usize] {
        &self.assign
    }

    pub fn uav_of(&self, gu: usize) -> usize {
        self.assign[gu]
    }

    pub fn n_uavs(&self) -> usize {
        self.n_uavs
    }

    pub fn n_gus(&self) -> usize {
        self.assign.len()
    }

    pub fn members(&self, uav: usize) -> impl Iterator<Item = usize> + '_ {
        self.assign
            .iter()
            .enumerate()
            .filter(move |(_, &k)| k == uav)
            .map(|(m, _)| m)
    }

    pub fn cluster_sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0; self.n_uavs];
        for &k in &self.assign {
            sizes[k] += 1;
        }
        sizes
    }

    /// Sizes differ by at most one and exactly `M mod K` clusters have the larger size.
    pub fn is_balanced(&self) -> bool {
        let m = self.assign.len();
        let k = self.n_uavs;
        let lo = m / k;
        let sizes = self.cluster_sizes();
        let big = sizes.iter().filter(|&&s| s == lo + 1).count();
        sizes.iter().all(|&s| s == lo || s == lo + 1) && (m.is_multiple_of(k) || big == m % k)
    }
}

/// Per-link transmit powers (W), a K x M matrix stored row-major by UAV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PowerAllocation {
    n_uavs: usize,
    n_gus: usize,
    p: Vec<f64>,
}

impl PowerAllocation {
    pub fn zeros(n_uavs: usize, n_gus: usize) -> Self {
        Self {
            n_uavs,
            n_gus,
            p: vec![0.0; n_uavs * n_gus],
        }
    }

    /// `P^max / |cluster|` on every associated link.
    pub fn uniform(assoc: &Association, p_max: f64) -> Self {
        let sizes = assoc.cluster_sizes();
        let mut out = Self::zeros(assoc.n_uavs(), assoc.n_gus());
        for (m, &k) in assoc.assign().iter().enumerate() {
            out.set(k, m, p_max / sizes[k] as f64);
        }
        out
    }

    pub fn n_uavs(&self) -> usize {
        self.n_uavs
    }

    pub fn n_gus(&self) -> usize {
        self.n_gus
    }

    #[inline]
    pub fn get(&self, k: usize, m: usize) -> f64 {
        self.p[k * self.n_gus + m]
    }

    #[inline]
    pub fn set(&mut self, k: usize, m: usize, v: f64) {
        self.p[k * self.n_gus + m] = v;
    }

    pub fn row(&self, k: usize) -> &[f64] {
        &self.p[k * self.n_gus..(k + 1) * self.n_gus]
    }

    pub fn uav_total(&self, k: usize) -> f64 {
        self.row(k).iter().sum()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.p
    }
}

/// Euclidean distance from a UAV to a GU on the ground.
pub fn link_distance(uav: Point3, gu: Point2) -> f64 {
    let dx = uav[0] - gu[0];
    let dy = uav[1] - gu[1];
    (dx * dx + dy * dy + uav[2] * uav[2]).sqrt()
}

/// Spreading plus molecular absorption gain, `d^-2 * exp(-a d)`.
pub fn channel_gain(d: f64, a: f64) -> Result<f64> {
    if !(d > 0.0) {
        return Err(Error::Domain(format!("channel_gain needs d > 0, got {d}")));
    }
    Ok(channel_gain_unchecked(d, a))
}

#[inline]
fn channel_gain_unchecked(d: f64, a: f64) -> f64 {
    (-a * d).exp() / (d * d)
}

/// SINR of one link given its interference and bandwidth share.
pub fn sinr(p_km: f64, interference: f64, bw_share: f64, d: f64, config: &NetworkConfig) -> f64 {
    let noise = noise_term(bw_share, d, config);
    p_km * config.h0_linear() / (interference + noise)
}

/// Noise contribution in the SINR denominator: `bw * d^2 * exp(a d) * sigma^2`.
pub fn noise_term(bw_share: f64, d: f64, config: &NetworkConfig) -> f64 {
    bw_share * d * d * (config.carrier_absorption * d).exp() * config.noise_psd_w_hz()
}

pub fn link_rate(bw_share: f64, sinr: f64) -> f64 {
    bw_share * (1.0 + sinr).log2()
}

/// Interference at link `(k, m)`.
pub fn interference(
    k: usize,
    m: usize,
    topology: &Topology,
    association: &Association,
    powers: &PowerAllocation,
    config: &NetworkConfig,
) -> Result<f64> {
    let ch = LinkChannels::new(topology, association, config)?;
    ch.check_link(k, m)?;
    Ok(ch.interference(k, m, powers))
}

/// Sum of the achievable rates of the GUs served by UAV `k`.
pub fn uav_slot_rate(
    k: usize,
    topology: &Topology,
    association: &Association,
    powers: &PowerAllocation,
    config: &NetworkConfig,
) -> Result<f64> {
    let ch = LinkChannels::new(topology, association, config)?;
    if k >= ch.n_uavs {
        return Err(Error::Index {
            what: "uav",
            index: k,
            len: ch.n_uavs,
        });
    }
    Ok(ch.uav_rates(powers)[k])
}

/// Distances, gains and noise terms of one slot, shared by every per-link evaluation.
#[derive(Debug, Clone)]
pub struct LinkChannels {
    pub n_uavs: usize,
    pub n_gus: usize,
    /// Serving UAV of each GU.
    pub serving: Vec<usize>,
    /// `dist[k * M + m]`.
    pub dist: Vec<f64>,
    /// `gain[k * M + m]`, the channel of link `(k, m)`.
    pub gain: Vec<f64>,
    /// Bandwidth of each link of UAV `k`, `B / |cluster_k|`.
    pub bw_share: Vec<f64>,
    /// Noise term of each GU's serving link.
    pub noise: Vec<f64>,
    pub h0: f64,
    pub mode: InterferenceMode,
}

impl LinkChannels {
    pub fn new(topology: &Topology, association: &Association, config: &NetworkConfig) -> Result<Self> {
        let k_n = topology.n_uavs();
        let m_n = topology.n_gus();
        if association.n_uavs() != k_n {
            return Err(Error::Shape {
                expected: k_n,
                got: association.n_uavs(),
            });
        }
        if association.n_gus() != m_n {
            return Err(Error::Shape {
                expected: m_n,
                got: association.n_gus(),
            });
        }
        let mut dist = Vec::with_capacity(k_n * m_n);
        let mut gain = Vec::with_capacity(k_n * m_n);
        for q in &topology.uav_pos {
            for o in &topology.gu_pos {
                let d = link_distance(*q, *o);
                dist.push(d);
                gain.push(channel_gain(d, config.carrier_absorption)?);
            }
        }
        let sizes = association.cluster_sizes();
        let bw_share: Vec<f64> = sizes
            .iter()
            .map(|&s| if s == 0 { 0.0 } else { config.bandwidth_total / s as f64 })
            .collect();
        let serving = association.assign().to_vec();
        let noise = serving
            .iter()
            .enumerate()
            .map(|(m, &k)| noise_term(bw_share[k], dist[k * m_n + m], config))
            .collect();
        Ok(Self {
            n_uavs: k_n,
            n_gus: m_n,
            serving,
            dist,
            gain,
            bw_share,
            noise,
            h0: config.h0_linear(),
            mode: config.interference_mode,
        })
    }

    fn check_link(&self, k: usize, m: usize) -> Result<()> {
        if k >= self.n_uavs {
            return Err(Error::Index {
                what: "uav",
                index: k,
                len: self.n_uavs,
            });
        }
        if m >= self.n_gus {
            return Err(Error::Index {
                what: "gu",
                index: m,
                len: self.n_gus,
            });
        }
        Ok(())
    }

    #[inline]
    pub fn gain_of(&self, k: usize, m: usize) -> f64 {
        self.gain[k * self.n_gus + m]
    }

    #[inline]
    pub fn dist_of(&self, k: usize, m: usize) -> f64 {
        self.dist[k * self.n_gus + m]
    }

    /// Interference at link `(k, m)` under the configured mode.
    pub fn interference(&self, k: usize, m: usize, p: &PowerAllocation) -> f64 {
        let mut psi = 0.0;
        for kk in (0..self.n_uavs).filter(|&kk| kk != k) {
            match self.mode {
                InterferenceMode::Literal => {
                    for mm in (0..self.n_gus).filter(|&mm| mm != m) {
                        psi += p.get(kk, mm) * self.gain_of(kk, mm);
                    }
                }
                InterferenceMode::Physical => {
                    psi += p.uav_total(kk) * self.gain_of(kk, m);
                }
            }
        }
        psi
    }

    /// Interference at each GU's serving link.
    pub fn serving_interference(&self, p: &PowerAllocation) -> Vec<f64> {
        match self.mode {
            InterferenceMode::Literal => {
                // psi(k, m) = total(k' != k) - sum_{k' != k} p[k'][m] h[k'][m]
                let per_uav: Vec<f64> = (0..self.n_uavs)
                    .map(|kk| (0..self.n_gus).map(|mm| p.get(kk, mm) * self.gain_of(kk, mm)).sum())
                    .collect();
                self.serving
                    .iter()
                    .enumerate()
                    .map(|(m, &k)| {
                        let mut psi = 0.0;
                        for kk in (0..self.n_uavs).filter(|&kk| kk != k) {
                            psi += per_uav[kk] - p.get(kk, m) * self.gain_of(kk, m);
                        }
                        psi
                    })
                    .collect()
            }
            InterferenceMode::Physical => {
                let totals: Vec<f64> = (0..self.n_uavs).map(|kk| p.uav_total(kk)).collect();
                self.serving
                    .iter()
                    .enumerate()
                    .map(|(m, &k)| {
                        (0..self.n_uavs)
                            .filter(|&kk| kk != k)
                            .map(|kk| totals[kk] * self.gain_of(kk, m))
                            .sum()
                    })
                    .collect()
            }
        }
    }

    /// SINR of each GU's serving link.
    pub fn sinrs(&self, p: &PowerAllocation) -> Vec<f64> {
        let psi = self.serving_interference(p);
        self.serving
            .iter()
            .enumerate()
            .map(|(m, &k)| p.get(k, m) * self.h0 / (psi[m] + self.noise[m]))
            .collect()
    }

    /// Achievable rate of each GU, bit/s.
    pub fn gu_rates(&self, p: &PowerAllocation) -> Vec<f64> {
        self.sinrs(p)
            .iter()
            .zip(&self.serving)
            .map(|(&g, &k)| link_rate(self.bw_share[k], g))
            .collect()
    }

    /// Per-UAV sum rates, bit/s.
    pub fn uav_rates(&self, p: &PowerAllocation) -> Vec<f64> {
        let mut out = vec![0.0; self.n_uavs];
        for (r, &k) in self.gu_rates(p).iter().zip(&self.serving) {
            out[k] += r;
        }
        out
    }
}

/// Constraint violations of a trajectory. Slot indices are positions in the input sequence.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ConstraintReport {
    /// (slot, gu): serving-link rate below `r_min`.
    pub qos: Vec<(usize, usize)>,
    /// gu: association refers to a non-existent UAV.
    pub association: Vec<usize>,
    /// (slot, uav): per-UAV power sum above `p_max`.
    pub power_budget: Vec<(usize, usize)>,
    /// (slot, uav, gu): power outside `[0, p_max]`, or nonzero on an unassociated link.
    pub power_box: Vec<(usize, usize, usize)>,
    /// (slot, i, j): UAVs `i < j` closer than `d_min`.
    pub separation: Vec<(usize, usize, usize)>,
    /// (slot, uav): movement into this slot faster than `v_max`.
    pub speed: Vec<(usize, usize)>,
}

impl ConstraintReport {
    pub fn is_feasible(&self) -> bool {
        self.qos.is_empty()
            && self.association.is_empty()
            && self.power_budget.is_empty()
            && self.power_box.is_empty()
            && self.separation.is_empty()
            && self.speed.is_empty()
    }
}

/// Pairs of UAVs `(i, j)`, `i < j`, whose separation is below `d_min`.
pub fn proximity_violations(uav_pos: &[Point3], d_min: f64) -> Vec<(usize, usize)> {
    let mut out = Vec::new();
    for i in 0..uav_pos.len() {
        for j in i + 1..uav_pos.len() {
            let d2: f64 = (0..3).map(|c| (uav_pos[i][c] - uav_pos[j][c]).powi(2)).sum();
            if d2 < d_min * d_min {
                out.push((i, j));
            }
        }
    }
    out
}

const SPEED_SLACK: f64 = 1e-9;
const POWER_SLACK: f64 = 1e-12;

pub fn check_constraints(
    topologies: &[Topology],
    association: &Association,
    powers: &[PowerAllocation],
    config: &NetworkConfig,
) -> Result<ConstraintReport> {
    if topologies.len() != powers.len() {
        return Err(Error::Shape {
            expected: topologies.len(),
            got: powers.len(),
        });
    }
    let mut rep = ConstraintReport::default();
    let n_uavs = association.n_uavs();
    rep.association = association
        .assign()
        .iter()
        .enumerate()
        .filter(|(_, &k)| k >= n_uavs)
        .map(|(m, _)| m)
        .collect();

    let p_tol = config.p_max * POWER_SLACK;
    for (slot, (topo, p)) in topologies.iter().zip(powers).enumerate() {
        for k in 0..p.n_uavs() {
            if p.uav_total(k) > config.p_max + p_tol {
                rep.power_budget.push((slot, k));
            }
            for m in 0..p.n_gus() {
                let v = p.get(k, m);
                let assoc = association.assign().get(m) == Some(&k);
                if !(v >= 0.0 && v <= config.p_max + p_tol) || (!assoc && v != 0.0) {
                    rep.power_box.push((slot, k, m));
                }
            }
        }
        let ch = LinkChannels::new(topo, association, config)?;
        for (m, r) in ch.gu_rates(p).into_iter().enumerate() {
            if r < config.r_min {
                rep.qos.push((slot, m));
            }
        }
        for (i, j) in proximity_violations(&topo.uav_pos, config.d_min) {
            rep.separation.push((slot, i, j));
        }
        if slot > 0 {
            let prev = &topologies[slot - 1];
            for (k, (a, b)) in prev.uav_pos.iter().zip(&topo.uav_pos).enumerate() {
                let step: f64 = (0..3).map(|c| (a[c] - b[c]).powi(2)).sum::<f64>().sqrt();
                if step / config.slot_duration > config.v_max + SPEED_SLACK {
                    rep.speed.push((slot, k));
                }
            }
        }
    }
    Ok(rep)
}
