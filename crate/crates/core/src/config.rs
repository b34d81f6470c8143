//! Simulation, solver and learning configuration.
//!
//! Every table in the on-disk TOML format maps one-to-one onto a struct here,
//! and field names are the TOML keys. Unknown keys are rejected.

use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::ppo::PpoConfig;

/// How co-channel interference at a link is summed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum InterferenceMode {
    /// Sum of `p[k'][m'] * h[k'][m']` over every other UAV `k'` and every other GU `m'`.
    #[default]
    Literal,
    /// Total transmit power of every other UAV `k'` evaluated on the channel from `k'` to this GU.
    Physical,
}

/// Physical-layer and protocol constants of the network.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NetworkConfig {
    /// Total bandwidth B, Hz.
    pub bandwidth_total: f64,
    /// Molecular absorption coefficient a, 1/m.
    pub carrier_absorption: f64,
    /// Reference channel gain at 1 m, dB.
    pub ref_gain_db: f64,
    /// Noise power spectral density, dBm/Hz.
    pub noise_psd_dbm_hz: f64,
    /// Per-UAV transmit power budget, W.
    pub p_max: f64,
    /// Per-link QoS rate floor, bit/s.
    pub r_min: f64,
    /// Side of the square service area, m.
    pub area_side: f64,
    /// Fixed UAV altitude, m.
    pub uav_altitude: f64,
    /// Maximum UAV speed, m/s.
    pub v_max: f64,
    /// Minimum pairwise UAV separation, m.
    pub d_min: f64,
    /// Duration of one time slot, s.
    pub slot_duration: f64,
    pub n_slots: usize,
    pub n_uavs: usize,
    pub n_gus: usize,
    pub interference_mode: InterferenceMode,
}

impl Default for NetworkConfig {
    fn default() -> Self {
        Self {
            bandwidth_total: 0.1e12,
            carrier_absorption: 0.005,
            ref_gain_db: -40.0,
            noise_psd_dbm_hz: -174.0,
            p_max: 2.0,
            r_min: 0.02e12,
            area_side: 200.0,
            uav_altitude: 20.0,
            v_max: 5.0,
            d_min: 10.0,
            slot_duration: 1.0,
            n_slots: 25,
            n_uavs: 3,
            n_gus: 36,
            interference_mode: InterferenceMode::Literal,
        }
    }
}

impl NetworkConfig {
    /// The reduced setting used for desk-scale training runs: two UAVs, eight GUs, 50 m square.
    pub fn scaled() -> Self {
        Self {
            n_uavs: 2,
            n_gus: 8,
            area_side: 50.0,
            ..Self::default()
        }
    }

    /// Reference gain as a linear factor.
    pub fn h0_linear(&self) -> f64 {
        10f64.powf(self.ref_gain_db / 10.0)
    }

    /// Noise PSD in W/Hz.
    pub fn noise_psd_w_hz(&self) -> f64 {
        10f64.powf((self.noise_psd_dbm_hz - 30.0) / 10.0)
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("bandwidth_total", self.bandwidth_total),
            ("p_max", self.p_max),
            ("r_min", self.r_min),
            ("area_side", self.area_side),
            ("uav_altitude", self.uav_altitude),
            ("v_max", self.v_max),
            ("d_min", self.d_min),
            ("slot_duration", self.slot_duration),
        ];
        for (name, v) in positive {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::Config(format!("{name} must be finite and > 0, got {v}")));
            }
        }
        if !(self.carrier_absorption.is_finite() && self.carrier_absorption >= 0.0) {
            return Err(Error::Config(format!(
                "carrier_absorption must be finite and >= 0, got {}",
                self.carrier_absorption
            )));
        }
        if !self.ref_gain_db.is_finite() || !self.noise_psd_dbm_hz.is_finite() {
            return Err(Error::Config("dB quantities must be finite".into()));
        }
        if self.d_min >= self.area_side {
            return Err(Error::Config(format!(
                "d_min ({}) must be smaller than area_side ({})",
                self.d_min, self.area_side
            )));
        }
        if self.n_uavs == 0 || self.n_gus < self.n_uavs {
            return Err(Error::Config(format!(
                "need n_gus >= n_uavs >= 1, got n_gus={} n_uavs={}",
                self.n_gus, self.n_uavs
            )));
        }
        if self.n_slots == 0 {
            return Err(Error::Config("n_slots must be >= 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AssociationConfig {
    pub max_iters: usize,
}

impl Default for AssociationConfig {
    fn default() -> Self {
        Self { max_iters: 100 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScaConfig {
    /// Stopping tolerance on the change of the D.C. objective between outer iterations.
    pub tol: f64,
    pub max_outer: usize,
}

impl Default for ScaConfig {
    fn default() -> Self {
        Self {
            tol: 1e-3,
            max_outer: 50,
        }
    }
}

/// Per-slot transmit power rule used by the environment.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum PowerPolicy {
    #[default]
    Sca,
    Random,
    FixedUniform,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EnvConfig {
    /// Multiplier turning the slot sum rate (bit/s) into a reward.
    pub reward_scale: f64,
    pub terminate_on_violation: bool,
    pub power_policy: PowerPolicy,
}

impl Default for EnvConfig {
    fn default() -> Self {
        Self {
            reward_scale: 1e-12,
            terminate_on_violation: true,
            power_policy: PowerPolicy::Sca,
        }
    }
}

/// Everything a run depends on, as stored in config files and run manifests.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub network: NetworkConfig,
    pub association: AssociationConfig,
    pub sca: ScaConfig,
    pub env: EnvConfig,
    pub ppo: PpoConfig,
}

impl ExperimentConfig {
    pub fn from_toml_str(s: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(s)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml_str(&text)
    }

    pub fn to_toml_string(&self) -> Result<String> {
        Ok(toml::to_string(self)?)
    }

    pub fn validate(&self) -> Result<()> {
        self.network.validate()?;
        if !(self.sca.tol.is_finite() && self.sca.tol > 0.0) || self.sca.max_outer == 0 {
            return Err(Error::Config("sca.tol must be > 0 and sca.max_outer >= 1".into()));
        }
        if self.association.max_iters == 0 {
            return Err(Error::Config("association.max_iters must be >= 1".into()));
        }
        if !(self.env.reward_scale.is_finite() && self.env.reward_scale > 0.0) {
            return Err(Error::Config("env.reward_scale must be > 0".into()));
        }
        self.ppo.validate()
    }

    /// SHA-256 over the canonical TOML serialization, hex encoded.
    pub fn content_hash(&self) -> String {
        let text = self
            .to_toml_string()
            .expect("experiment config is always serializable");
        content_hash(text.as_bytes())
    }
}

/// Git-style content hash: SHA-256 of `blob <len>\0<bytes>`.
pub fn content_hash(bytes: &[u8]) -> String {
    let mut h = Sha256::new();
    h.update(format!("blob {}\0", bytes.len()).as_bytes());
    h.update(bytes);
    hex::encode(h.finalize())
}
