//! Simulation and optimization toolkit for a THz-band multi-UAV downlink.
//!
//! The pipeline mirrors one decision epoch of the network:
//!
//! - [`association`]: balanced k-means clustering of GUs onto UAVs, with a
//!   Hungarian matching over pre-sized cluster slots.
//! - [`power`]: per-slot transmit powers by successive convex approximation.
//! - [`env`]: the trajectory MDP that moves UAVs and scores each slot.
//! - [`ppo`]: a small actor-critic trained with the clipped PPO objective.
//! - [`harness`]: benchmark schemes, sweeps and file export.
//!
//! [`model`] holds the channel, SINR and rate math that all of them share.

pub mod association;
pub mod config;
pub mod env;
pub mod error;
pub mod harness;
pub mod model;
pub mod power;
pub mod ppo;
pub mod rng;

pub use config::{ExperimentConfig, InterferenceMode, NetworkConfig, PowerPolicy};
pub use error::{Error, Result};
pub use model::{Association, PowerAllocation, Topology};
