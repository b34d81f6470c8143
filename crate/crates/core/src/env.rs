//! The UAV trajectory MDP.
//!
//! An episode places GUs uniformly at random, associates them once with
//! balanced k-means, then advances `n_slots` slots. Each step turns and moves
//! every UAV, allocates transmit power with the configured policy and scores
//! the slot:
//!
//! - `-2` if any two UAVs are closer than `d_min` (ends the episode unless
//!   `terminate_on_violation` is off),
//! - `+2` on the last slot,
//! - otherwise the slot sum rate times `reward_scale`.

use std::f64::consts::PI;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::association::bkmc;
use crate::config::{EnvConfig, ExperimentConfig, NetworkConfig, PowerPolicy, ScaConfig};
use crate::error::{Error, Result};
use crate::model::{proximity_violations, Association, LinkChannels, Point2, Point3, PowerAllocation, Topology};
use crate::power::{random_powers, PowerProblem};
use crate::ppo::dist::ActionBounds;
use crate::rng::{stream_rng, SimRng};

/// Largest heading change per slot, rad.
pub const MAX_TURN: f64 = PI / 3.0;

pub const COLLISION_REWARD: f64 = -2.0;
pub const FINISH_REWARD: f64 = 2.0;

/// Normalized observation: all UAV `(x, y, z)` then all GU `(x, y)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnvState(pub Vec<f64>);

impl EnvState {
    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn dim(net: &NetworkConfig) -> usize {
        3 * net.n_uavs + 2 * net.n_gus
    }
}

/// Speed (m/s) and relative turn (rad) of every UAV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnvAction {
    pub speed: Vec<f64>,
    pub turn: Vec<f64>,
}

impl EnvAction {
    /// All UAVs hover in place.
    pub fn hover(n_uavs: usize) -> Self {
        Self {
            speed: vec![0.0; n_uavs],
            turn: vec![0.0; n_uavs],
        }
    }

    /// From the interleaved layout `[v_0, phi_0, v_1, phi_1, ...]`.
    pub fn from_flat(flat: &[f64]) -> Self {
        Self {
            speed: flat.iter().step_by(2).copied().collect(),
            turn: flat.iter().skip(1).step_by(2).copied().collect(),
        }
    }

    pub fn to_flat(&self) -> Vec<f64> {
        self.speed.iter().zip(&self.turn).flat_map(|(&v, &p)| [v, p]).collect()
    }
}

/// Box of valid actions in the interleaved layout.
pub fn action_bounds(net: &NetworkConfig) -> ActionBounds {
    ActionBounds {
        lo: (0..net.n_uavs).flat_map(|_| [0.0, -MAX_TURN]).collect(),
        hi: (0..net.n_uavs).flat_map(|_| [net.v_max, MAX_TURN]).collect(),
    }
}

/// Per-slot trajectory record, one entry per UAV in each vector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SlotRecord {
    pub slot: usize,
    pub uav_pos: Vec<Point3>,
    pub speed: Vec<f64>,
    pub turn: Vec<f64>,
    pub uav_rates: Vec<f64>,
    pub reward: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepInfo {
    /// Per-UAV sum rate, bit/s.
    pub uav_rates: Vec<f64>,
    pub gu_rates: Vec<f64>,
    pub mean_gu_rate: f64,
    /// UAV pairs closer than `d_min` after the move.
    pub proximity: Vec<(usize, usize)>,
    /// Number of GUs below the QoS floor.
    pub qos_violations: usize,
    pub powers: PowerAllocation,
    /// `sum log2(sinr)` of the allocated powers; `None` if some link got zero power.
    pub dc_objective: Option<f64>,
    pub record: SlotRecord,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepOutcome {
    pub next_state: EnvState,
    pub reward: f64,
    pub done: bool,
    pub info: StepInfo,
}

/// UAV start positions: evenly spaced along the horizontal center line, at altitude.
pub fn start_positions(net: &NetworkConfig) -> Vec<Point3> {
    let k = net.n_uavs as f64;
    (0..net.n_uavs)
        .map(|i| [(i as f64 + 0.5) * net.area_side / k, 0.5 * net.area_side, net.uav_altitude])
        .collect()
}

/// GUs i.i.d. uniform over the area; UAVs at their start positions with heading 0.
pub fn initial_topology(net: &NetworkConfig, seed: u64) -> Topology {
    let mut rng = stream_rng(seed, 0);
    let gu_pos: Vec<Point2> = (0..net.n_gus)
        .map(|_| [rng.random_range(0.0..=net.area_side), rng.random_range(0.0..=net.area_side)])
        .collect();
    Topology {
        uav_pos: start_positions(net),
        uav_heading: vec![0.0; net.n_uavs],
        gu_pos,
    }
}

/// Slot sum rate times `reward_scale`.
pub fn raw_reward(
    topology: &Topology,
    association: &Association,
    powers: &PowerAllocation,
    net: &NetworkConfig,
    reward_scale: f64,
) -> Result<f64> {
    let ch = LinkChannels::new(topology, association, net)?;
    Ok(ch.uav_rates(powers).iter().sum::<f64>() * reward_scale)
}

/// Wraps an angle into `[-pi, pi)`.
pub fn wrap_angle(x: f64) -> f64 {
    if (-PI..PI).contains(&x) {
        return x;
    }
    let r = (x + PI).rem_euclid(2.0 * PI) - PI;
    if r >= PI {
        r - 2.0 * PI
    } else {
        r
    }
}

#[derive(Debug, Clone)]
pub struct Env {
    net: NetworkConfig,
    env_cfg: EnvConfig,
    sca_cfg: ScaConfig,
    bkmc_iters: usize,
    topology: Topology,
    association: Association,
    slot: usize,
    done: bool,
    power_rng: SimRng,
}

impl Env {
    pub fn new(cfg: &ExperimentConfig) -> Result<Self> {
        cfg.validate()?;
        let net = cfg.network.clone();
        let topology = initial_topology(&net, 0);
        let association = Association::new(vec![0; net.n_gus], net.n_uavs)?;
        Ok(Self {
            env_cfg: cfg.env.clone(),
            sca_cfg: cfg.sca.clone(),
            bkmc_iters: cfg.association.max_iters,
            topology,
            association,
            slot: 1,
            done: true,
            power_rng: stream_rng(0, 1),
            net,
        })
    }

    /// Overrides the per-slot power rule.
    pub fn with_power_policy(mut self, policy: PowerPolicy) -> Self {
        self.env_cfg.power_policy = policy;
        self
    }

    pub fn with_termination(mut self, terminate_on_violation: bool) -> Self {
        self.env_cfg.terminate_on_violation = terminate_on_violation;
        self
    }

    pub fn network(&self) -> &NetworkConfig {
        &self.net
    }

    pub fn topology(&self) -> &Topology {
        &self.topology
    }

    pub fn association(&self) -> &Association {
        &self.association
    }

    /// Slot the next `step` will play (1-based).
    pub fn slot(&self) -> usize {
        self.slot
    }

    pub fn is_done(&self) -> bool {
        self.done
    }

    pub fn state_dim(&self) -> usize {
        EnvState::dim(&self.net)
    }

    pub fn action_bounds(&self) -> ActionBounds {
        action_bounds(&self.net)
    }

    pub fn reset(&mut self, seed: u64) -> Result<EnvState> {
        let topology = initial_topology(&self.net, seed);
        self.reset_with(topology, seed)
    }

    /// Starts an episode from a given layout.
    pub fn reset_with(&mut self, topology: Topology, seed: u64) -> Result<EnvState> {
        if topology.n_uavs() != self.net.n_uavs || topology.n_gus() != self.net.n_gus {
            return Err(Error::Shape {
                expected: EnvState::dim(&self.net),
                got: 3 * topology.n_uavs() + 2 * topology.n_gus(),
            });
        }
        let res = bkmc(&topology.gu_pos, &topology.uav_xy(), self.bkmc_iters)?;
        self.association = res.association;
        self.topology = topology;
        self.slot = 1;
        self.done = false;
        self.power_rng = stream_rng(seed, 1);
        Ok(self.state())
    }

    pub fn state(&self) -> EnvState {
        let side = self.net.area_side;
        let mut v = Vec::with_capacity(self.state_dim());
        for q in &self.topology.uav_pos {
            v.extend([q[0] / side, q[1] / side, q[2] / self.net.uav_altitude]);
        }
        for o in &self.topology.gu_pos {
            v.extend([o[0] / side, o[1] / side]);
        }
        EnvState(v)
    }

    fn allocate(&mut self, problem: &PowerProblem) -> Result<PowerAllocation> {
        let uniform = PowerAllocation::uniform(&self.association, self.net.p_max);
        Ok(match self.env_cfg.power_policy {
            PowerPolicy::FixedUniform => uniform,
            PowerPolicy::Random => random_powers(&self.association, self.net.p_max, &mut self.power_rng),
            PowerPolicy::Sca => problem.sca(&uniform, &self.association, &self.sca_cfg)?.0,
        })
    }

    pub fn step(&mut self, action: &EnvAction) -> Result<StepOutcome> {
        if self.done {
            return Err(Error::EpisodeDone);
        }
        let k = self.net.n_uavs;
        if action.speed.len() != k || action.turn.len() != k {
            return Err(Error::Shape {
                expected: 2 * k,
                got: action.speed.len() + action.turn.len(),
            });
        }
        let speed: Vec<f64> = action.speed.iter().map(|v| v.clamp(0.0, self.net.v_max)).collect();
        let turn: Vec<f64> = action.turn.iter().map(|p| p.clamp(-MAX_TURN, MAX_TURN)).collect();
        let side = self.net.area_side;
        for i in 0..k {
            let heading = wrap_angle(self.topology.uav_heading[i] + turn[i]);
            let step = speed[i] * self.net.slot_duration;
            let q = &mut self.topology.uav_pos[i];
            q[0] = (q[0] + step * heading.cos()).clamp(0.0, side);
            q[1] = (q[1] + step * heading.sin()).clamp(0.0, side);
            self.topology.uav_heading[i] = heading;
        }

        let problem = PowerProblem::new(&self.topology, &self.association, &self.net)?;
        let powers = self.allocate(&problem)?;
        let gu_rates = problem.channels.gu_rates(&powers);
        let mut uav_rates = vec![0.0; k];
        for (r, &u) in gu_rates.iter().zip(self.association.assign()) {
            uav_rates[u] += r;
        }
        let mean_gu_rate = gu_rates.iter().sum::<f64>() / gu_rates.len() as f64;
        let qos_violations = gu_rates.iter().filter(|&&r| r < self.net.r_min).count();
        let dc_objective = problem.dc_objective(&powers).ok();
        let proximity = proximity_violations(&self.topology.uav_pos, self.net.d_min);

        let last = self.slot >= self.net.n_slots;
        let (reward, done) = if !proximity.is_empty() {
            (COLLISION_REWARD, self.env_cfg.terminate_on_violation || last)
        } else if last {
            (FINISH_REWARD, true)
        } else {
            (uav_rates.iter().sum::<f64>() * self.env_cfg.reward_scale, false)
        };

        let record = SlotRecord {
            slot: self.slot,
            uav_pos: self.topology.uav_pos.clone(),
            speed,
            turn,
            uav_rates: uav_rates.clone(),
            reward,
        };
        self.done = done;
        self.slot += 1;
        Ok(StepOutcome {
            next_state: self.state(),
            reward,
            done,
            info: StepInfo {
                uav_rates,
                gu_rates,
                mean_gu_rate,
                proximity,
                qos_violations,
                powers,
                dc_objective,
                record,
            },
        })
    }
}
