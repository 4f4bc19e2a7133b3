//! Receding-horizon path integral control with a learned probabilistic
//! quadrotor model.
//!
//! - [`lwpr`]: incremental locally weighted regression with mean and
//!   variance predictions.
//! - [`dynamics`]: analytic, hybrid (learned) and ground-truth quadrotor
//!   models on a shared Euler kinematic core.
//! - [`controller`]: sampled rollouts, sub-rollout averaging, the
//!   exponentially weighted plan update and the receding-horizon loop.
//! - [`simworld`]: the waypoint navigation task, its cost and trials.
//! - [`harness`]: configuration, training, experiment sweeps, reports and
//!   benchmarks.

pub mod controller;
pub mod dynamics;
pub mod error;
pub mod flightlog;
pub mod harness;
pub mod lwpr;
pub mod rng;
pub mod simworld;

pub use error::{Error, Result};
