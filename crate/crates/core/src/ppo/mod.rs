//! Proximal policy optimization for the centralized trajectory controller.

pub mod checkpoint;
pub mod dist;
pub mod gae;
pub mod loss;
pub mod memory;
pub mod network;
pub mod optimizer;
pub mod train;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use checkpoint::Checkpoint;
pub use dist::{ActionBounds, ActionSample, SquashedGaussian};
pub use memory::{Transition, TrajectoryMemory};
pub use network::{PolicyOutput, PolicyParams};
pub use optimizer::{Optimizer, OptimizerKind};
pub use train::{policy_forward, random_policy_rewards, sample_action, train, train_with, update, PpoAgent, TrainResult, UpdateStats};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PpoConfig {
    pub clip: f64,
    pub gamma: f64,
    pub gae_lambda: f64,
    pub learning_rate: f64,
    /// Capped at the rollout length when larger.
    pub minibatch_size: usize,
    pub epochs: usize,
    pub episodes: usize,
    pub actors: usize,
    pub value_coef: f64,
    pub entropy_coef: f64,
    pub hidden: Vec<usize>,
    pub optimizer: OptimizerKind,
    /// Initial bias of the log-std head.
    pub init_log_std: f64,
    /// Normalize advantages to zero mean and unit variance per update batch.
    pub normalize_advantages: bool,
}

impl Default for PpoConfig {
    fn default() -> Self {
        Self {
            clip: 0.2,
            gamma: 0.99,
            gae_lambda: 0.95,
            learning_rate: 3e-4,
            minibatch_size: 120,
            epochs: 3,
            episodes: 2000,
            actors: 4,
            value_coef: 0.5,
            entropy_coef: 0.01,
            hidden: vec![128, 128],
            optimizer: OptimizerKind::Sgd,
            init_log_std: -0.5,
            normalize_advantages: true,
        }
    }
}

impl PpoConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Config(msg));
        if !(self.clip > 0.0 && self.clip < 1.0) {
            return bad(format!("clip must be in (0, 1), got {}", self.clip));
        }
        if !(self.gamma > 0.0 && self.gamma <= 1.0) {
            return bad(format!("gamma must be in (0, 1], got {}", self.gamma));
        }
        if !(0.0..=1.0).contains(&self.gae_lambda) {
            return bad(format!("gae_lambda must be in [0, 1], got {}", self.gae_lambda));
        }
        if !(self.learning_rate.is_finite() && self.learning_rate > 0.0) {
            return bad(format!("learning_rate must be > 0, got {}", self.learning_rate));
        }
        if self.minibatch_size == 0 || self.epochs == 0 || self.actors == 0 {
            return bad("minibatch_size, epochs and actors must be >= 1".into());
        }
        if !(self.value_coef.is_finite() && self.value_coef >= 0.0) {
            return bad(format!("value_coef must be >= 0, got {}", self.value_coef));
        }
        if !(self.entropy_coef.is_finite() && self.entropy_coef >= 0.0) {
            return bad(format!("entropy_coef must be >= 0, got {}", self.entropy_coef));
        }
        if self.hidden.is_empty() || self.hidden.contains(&0) {
            return bad("hidden needs at least one non-empty layer".into());
        }
        if !self.init_log_std.is_finite() {
            return bad("init_log_std must be finite".into());
        }
        Ok(())
    }

    pub fn loss_weights(&self) -> loss::LossWeights {
        loss::LossWeights {
            clip: self.clip,
            value_coef: self.value_coef,
            entropy_coef: self.entropy_coef,
        }
    }

    /// Hash of the TOML serialization, stored in checkpoints.
    pub fn content_hash(&self) -> String {
        let text = toml::to_string(self).expect("PpoConfig serializes");
        crate::config::content_hash(text.as_bytes())
    }
}
