//! Distributed inter-cell inter-slice resource partitioning with multi-agent
//! TD3, and generalist-to-specialist transfer of the learned policies.
//!
//! Modules, bottom-up:
//! - [`env`]: multi-cell RAN surrogate with load-coupled interference.
//! - [`mdp`]: states, actions, messages and rewards derived from KPI reports.
//! - [`approx`]: MLPs, gradients, Adam and checkpoints.
//! - [`td3`]: twin delayed DDPG agent.
//! - [`agent`]: per-cell agents, replay, exploration schedule and the
//!   distributed training loop.
//! - [`transfer`]: generalist training, knowledge packages and specialist
//!   finetuning.
//! - [`harness`]: baselines, experiment runner and plots.

// Index loops mirror the per-(cell, slice) formulas; negated comparisons
// intentionally reject NaN.
#![allow(clippy::needless_range_loop, clippy::neg_cmp_op_on_partial_ord)]

pub mod agent;
pub mod approx;
pub mod env;
pub mod error;
pub mod harness;
pub mod mdp;
pub mod rng;
pub mod td3;
pub mod transfer;

pub use error::{Error, Result};
