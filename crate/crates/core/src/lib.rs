//! Dual-path indoor tracking: algorithmic RF multilateration and visual
//! odometry feature extraction feeding a learned cross-attention/LSTM
//! fusion model, together with EKF and pure-learning baselines, a
//! deterministic sensor-trace simulator, and trajectory-error metrics.

pub mod baselines;
pub mod error;
pub mod eval;
pub mod fusion;
pub mod nn;
pub mod rf;
pub mod sim;
pub mod types;
pub mod vo;

pub use error::{Error, Result};
pub use types::{Anchor, AnchorLayout, Position2D, RngStream, TimedSample, Trajectory};
