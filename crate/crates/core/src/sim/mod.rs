//! Deterministic sensor-trace simulator: trajectories, LoS/NLoS ranging,
//! received power, and keypoint-coupled VO noise under configurable
//! environments.

pub mod channels;
pub mod env;
pub mod noise;
pub mod scenario;
pub mod trace;
pub mod trajgen;

pub use channels::{simulate_keypoints, simulate_power, vo_noise_scale, RfChannel, VoChannel};
pub use env::{los_test, DimZone, Environment, Rect};
pub use noise::{NoiseModel, WALKING_SPEED};
pub use scenario::{run_scenario, ScenarioConfig};
pub use trace::{read_trace, write_trace, RfEntry, RfSample, Rates, Trace, VoSample};
pub use trajgen::{generate_trajectory, ShapeSpec};
