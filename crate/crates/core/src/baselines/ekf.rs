//! Extended Kalman filter fusing VO polar steps (control input) with
//! multilaterated RF positions (measurement).

use nalgebra::{Matrix2, Matrix2x3, Matrix3, Matrix3x2, Vector2, Vector3};

use crate::error::{Error, Result};
use crate::rf::multilaterate;
use crate::sim::noise::NoiseModel;
use crate::sim::trace::Trace;
use crate::types::{Position2D, TimedSample, Trajectory};

/// Noise configuration. Defaults derive from the simulator's own noise
/// scales, the best case for this baseline.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EkfConfig {
    /// Variance of the VO translation per step (m^2).
    pub sigma_r2: f64,
    /// Variance of the VO heading change per step (rad^2).
    pub sigma_theta2: f64,
    /// Position process-noise floor per step (m^2).
    pub q_pos: f64,
    /// Heading process-noise floor per step (rad^2).
    pub q_heading: f64,
    /// RF position measurement variance per axis (m^2).
    pub r_pos: f64,
    /// Initial position variance (m^2).
    pub p0_pos: f64,
    /// Initial heading variance (rad^2).
    pub p0_heading: f64,
}

impl EkfConfig {
    /// Maps simulator noise onto filter covariances: measurement noise at
    /// the LoS multilateration error scale, process noise at the VO step
    /// scale.
    pub fn from_noise_model(nm: &NoiseModel) -> Self {
        let sigma_pos = (0.8 * nm.sigma_los).max(0.02);
        Self {
            sigma_r2: nm.vo_r_sigma0.powi(2).max(1e-8),
            sigma_theta2: nm.vo_theta_sigma0.powi(2).max(1e-10),
            q_pos: 1e-6,
            q_heading: 1e-8,
            r_pos: sigma_pos * sigma_pos,
            p0_pos: 4.0 * sigma_pos * sigma_pos,
            p0_heading: 1.0,
        }
    }
}

/// Runs the filter over a trace. State is `[p_x, p_y, heading]`; each
/// epoch predicts through the nonlinear step model (Jacobian-linearized)
/// and updates with the all-anchor multilaterated position (identity on
/// position). Joseph-form updates plus explicit symmetrization keep the
/// covariance PSD.
pub fn ekf_fuse(trace: &Trace, cfg: &EkfConfig) -> Result<Trajectory> {
    if trace.epochs() == 0 {
        return Err(Error::invalid("empty trace"));
    }
    let measure = |idx: usize| -> Result<Position2D> {
        let rf = &trace.rf[idx];
        let ranges: Vec<(Position2D, f64)> = rf
            .entries
            .iter()
            .map(|e| (trace.layout.by_id(e.id).expect("layout id").position(), e.range))
            .collect();
        Ok(multilaterate(&ranges, None)?.position)
    };

    let z0 = measure(0)?;
    let mut x = Vector3::new(z0.x, z0.y, 0.0);
    let mut p = Matrix3::from_diagonal(&Vector3::new(cfg.p0_pos, cfg.p0_pos, cfg.p0_heading));
    let h_mat = Matrix2x3::new(1.0, 0.0, 0.0, 0.0, 1.0, 0.0);
    let r_mat = Matrix2::from_diagonal(&Vector2::new(cfg.r_pos, cfg.r_pos));

    let mut out = Vec::with_capacity(trace.epochs());
    out.push(TimedSample::new(trace.rf[0].t, Position2D::new(x[0], x[1])));

    for idx in 1..trace.epochs() {
        let vo = &trace.vo[idx];

        // Predict through the step model.
        let heading = x[2] + vo.theta;
        let (sin_h, cos_h) = heading.sin_cos();
        x = Vector3::new(x[0] + vo.r * cos_h, x[1] + vo.r * sin_h, heading);
        let f = Matrix3::new(
            1.0, 0.0, -vo.r * sin_h,
            0.0, 1.0, vo.r * cos_h,
            0.0, 0.0, 1.0,
        );
        // Q = G diag(sigma_r2, sigma_theta2) G^T + floor.
        let g = Matrix3x2::new(
            cos_h, -vo.r * sin_h,
            sin_h, vo.r * cos_h,
            0.0, 1.0,
        );
        let q = g * Matrix2::from_diagonal(&Vector2::new(cfg.sigma_r2, cfg.sigma_theta2))
            * g.transpose()
            + Matrix3::from_diagonal(&Vector3::new(cfg.q_pos, cfg.q_pos, cfg.q_heading));
        p = f * p * f.transpose() + q;
        p = 0.5 * (p + p.transpose());

        // Update with the multilaterated position.
        let z = measure(idx)?;
        let innovation = Vector2::new(z.x - x[0], z.y - x[1]);
        let s = h_mat * p * h_mat.transpose() + r_mat;
        let s_inv = s.try_inverse().ok_or_else(|| {
            Error::Numerical(format!("EKF innovation covariance singular at epoch {idx}"))
        })?;
        let k = p * h_mat.transpose() * s_inv;
        x += k * innovation;
        let i_kh = Matrix3::identity() - k * h_mat;
        p = i_kh * p * i_kh.transpose() + k * r_mat * k.transpose();
        p = 0.5 * (p + p.transpose());

        if !x.iter().all(|v| v.is_finite()) || !p.iter().all(|v| v.is_finite()) {
            return Err(Error::Numerical(format!("EKF state diverged at epoch {idx}")));
        }
        out.push(TimedSample::new(trace.rf[idx].t, Position2D::new(x[0], x[1])));
    }
    Trajectory::new(out)
}
