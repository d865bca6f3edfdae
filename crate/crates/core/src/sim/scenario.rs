//! Scenario configuration files and end-to-end trace synthesis.
//!
//! Configs are TOML with `[environment]`, `[anchors]`, `[trajectory]`,
//! `[noise]`, and `[rates]` sections; every noise field is overridable and
//! omitted sections fall back to calibrated defaults.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sim::channels::{RfChannel, VoChannel};
use crate::sim::env::Environment;
use crate::sim::noise::NoiseModel;
use crate::sim::trace::{Rates, Trace};
use crate::sim::trajgen::{generate_trajectory, ShapeSpec};
use crate::types::{Anchor, AnchorLayout, RngStream};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnchorsSection {
    /// Anchor positions; ids are assigned in order starting at 0.
    pub positions: Vec<[f64; 2]>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectorySection {
    #[serde(flatten)]
    pub shape: ShapeSpec,
    /// Nominal speed (m/s); waypoint paths may override per leg.
    pub speed: f64,
    pub duration: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioConfig {
    #[serde(default = "default_name")]
    pub name: String,
    pub environment: Environment,
    pub anchors: AnchorsSection,
    pub trajectory: TrajectorySection,
    #[serde(default)]
    pub noise: NoiseModel,
    #[serde(default)]
    pub rates: Rates,
}

fn default_name() -> String {
    "scenario".to_string()
}

impl ScenarioConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| {
            let line = e
                .span()
                .map(|s| text[..s.start.min(text.len())].matches('\n').count() + 1)
                .unwrap_or(0);
            Error::Parse { line, msg: e.message().to_string() }
        })
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        Self::from_toml(&std::fs::read_to_string(path)?)
    }

    pub fn layout(&self) -> Result<AnchorLayout> {
        AnchorLayout::new(
            self.anchors
                .positions
                .iter()
                .enumerate()
                .map(|(i, p)| Anchor { id: i as u32, x: p[0], y: p[1] })
                .collect(),
        )
    }

    pub fn validate(&self) -> Result<()> {
        self.environment.validate()?;
        self.noise.validate().map_err(|e| Error::Validation(format!("[noise] {e}")))?;
        let layout = self.layout()?;
        for a in layout.anchors() {
            if !self.environment.bounds.contains(&a.position()) {
                return Err(Error::Validation(format!(
                    "anchor {} at ({}, {}) outside environment bounds",
                    a.id, a.x, a.y
                )));
            }
        }
        if self.trajectory.speed <= 0.0 || self.trajectory.duration <= 0.0 {
            return Err(Error::Validation(
                "[trajectory] speed and duration must be > 0".into(),
            ));
        }
        if self.rates.rf_hz <= 0.0 {
            return Err(Error::Validation("[rates] rf_hz must be > 0".into()));
        }
        if (self.rates.vo_hz - self.rates.rf_hz).abs() > 1e-9 {
            return Err(Error::Validation(
                "[rates] vo_hz must equal rf_hz: both sensors are emitted on a common epoch clock"
                    .into(),
            ));
        }
        Ok(())
    }
}

/// Synthesizes the full trace for a scenario: ground truth at the RF epoch
/// rate, then per-epoch RF and VO measurements on that common clock.
/// Identical `(config, seed)` pairs produce identical traces.
pub fn run_scenario(cfg: &ScenarioConfig, seed: u64) -> Result<Trace> {
    cfg.validate()?;
    let layout = cfg.layout()?;
    let rate = cfg.rates.rf_hz;
    let mut traj_rng = RngStream::named(seed, "sim.trajectory");
    let gt = generate_trajectory(
        &cfg.trajectory.shape,
        cfg.trajectory.speed,
        cfg.trajectory.duration,
        rate,
        &mut traj_rng,
    )?;
    for s in gt.samples() {
        if !cfg.environment.bounds.contains(&s.value) {
            return Err(Error::Validation(format!(
                "trajectory leaves environment bounds at t={} ({}, {})",
                s.t, s.value.x, s.value.y
            )));
        }
    }

    let mut rf_ch = RfChannel::new(seed);
    let mut vo_ch = VoChannel::new(seed);
    let samples = gt.samples();
    let mut rf = Vec::with_capacity(samples.len());
    let mut vo = Vec::with_capacity(samples.len());
    for (i, s) in samples.iter().enumerate() {
        rf.push(rf_ch.epoch(s.t, &s.value, &layout, &cfg.environment, &cfg.noise)?);
        let prev = if i == 0 { &samples[0].value } else { &samples[i - 1].value };
        vo.push(vo_ch.epoch(s.t, prev, &s.value, &cfg.environment, &cfg.noise, rate)?);
    }

    let trace = Trace {
        scenario: cfg.name.clone(),
        seed,
        layout,
        environment: cfg.environment.clone(),
        gt,
        rf,
        vo,
        rates: cfg.rates,
        noise: cfg.noise,
    };
    trace.validate()?;
    Ok(trace)
}
