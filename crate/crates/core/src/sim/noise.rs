//! Sensor noise parameters.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Nominal walking speed; keypoint counts degrade above it.
pub const WALKING_SPEED: f64 = 1.4;

/// Simulator noise configuration. The defaults are calibrated so that
/// all-LoS multilateration lands near a 0.2 m median error and all-NLoS
/// near 1.0 m with multi-meter outliers, and so that received power stays
/// above -90 dBm at 30 m in LoS while dropping below -95 dBm within 15 m
/// behind a wall.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct NoiseModel {
    /// Range noise std dev under line of sight (m).
    pub sigma_los: f64,
    /// Mean of the exponential positive range bias under NLoS (m).
    pub nlos_bias_mean: f64,
    /// Additional Gaussian range noise under NLoS (m).
    pub sigma_nlos: f64,
    /// Received power at the reference distance (dBm).
    pub p0: f64,
    /// Reference distance for `p0` (m).
    pub d0: f64,
    /// Path-loss exponent, line of sight.
    pub gamma_los: f64,
    /// Path-loss exponent when occluded.
    pub gamma_nlos: f64,
    /// Extra attenuation per occluder crossed (dB).
    pub wall_penalty: f64,
    /// Log-normal shadowing std dev (dB).
    pub shadow_sigma: f64,
    /// VO translation noise std dev per step at full certainty (m).
    pub vo_r_sigma0: f64,
    /// VO heading-change noise std dev per step at full certainty (rad).
    pub vo_theta_sigma0: f64,
    /// Matched keypoints in a well-lit scene at walking speed.
    pub m_well_lit: u32,
    /// Fractional keypoint loss per m/s above walking speed.
    pub m_speed_penalty: f64,
}

impl Default for NoiseModel {
    fn default() -> Self {
        Self {
            sigma_los: 0.25,
            nlos_bias_mean: 0.9,
            sigma_nlos: 0.35,
            p0: -60.0,
            d0: 1.0,
            gamma_los: 1.8,
            gamma_nlos: 2.6,
            wall_penalty: 9.0,
            shadow_sigma: 2.5,
            vo_r_sigma0: 0.01,
            vo_theta_sigma0: 0.002,
            m_well_lit: 568,
            m_speed_penalty: 0.25,
        }
    }
}

impl NoiseModel {
    /// Noise-free variant: ranges, powers, and VO steps become exact.
    pub fn noiseless() -> Self {
        Self {
            sigma_los: 0.0,
            nlos_bias_mean: 0.0,
            sigma_nlos: 0.0,
            shadow_sigma: 0.0,
            vo_r_sigma0: 0.0,
            vo_theta_sigma0: 0.0,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let sigmas = [
            ("sigma_los", self.sigma_los),
            ("sigma_nlos", self.sigma_nlos),
            ("nlos_bias_mean", self.nlos_bias_mean),
            ("shadow_sigma", self.shadow_sigma),
            ("vo_r_sigma0", self.vo_r_sigma0),
            ("vo_theta_sigma0", self.vo_theta_sigma0),
            ("m_speed_penalty", self.m_speed_penalty),
        ];
        for (name, v) in sigmas {
            if v < 0.0 || !v.is_finite() {
                return Err(Error::Validation(format!("{name} must be >= 0, got {v}")));
            }
        }
        if self.gamma_nlos <= self.gamma_los {
            return Err(Error::Validation(format!(
                "gamma_nlos ({}) must exceed gamma_los ({})",
                self.gamma_nlos, self.gamma_los
            )));
        }
        if self.d0 <= 0.0 {
            return Err(Error::Validation(format!("d0 must be > 0, got {}", self.d0)));
        }
        if self.m_well_lit == 0 {
            return Err(Error::Validation("m_well_lit must be positive".into()));
        }
        Ok(())
    }
}
