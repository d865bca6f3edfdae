//! Visual-odometry feature path: polar step extraction, dead-reckoning
//! integration, and VO feature composition.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::types::{Position2D, TimedSample, Trajectory};

/// Wraps an angle to (-pi, pi].
pub fn wrap_angle(a: f64) -> f64 {
    let w = a.rem_euclid(std::f64::consts::TAU);
    if w > std::f64::consts::PI {
        w - std::f64::consts::TAU
    } else {
        w
    }
}

/// Per-step translation and heading change in the body frame.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PolarStep {
    /// Translation magnitude (m), >= 0.
    pub r: f64,
    /// Heading change (rad) in (-pi, pi].
    pub theta: f64,
}

/// Dead-reckoning integrator state.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DeadReckonState {
    pub position: Position2D,
    /// Accumulated absolute heading (rad), not wrapped.
    pub heading: f64,
}

/// Polar step from `prev` to `cur` relative to the previous heading.
/// A zero-length step reports `theta = 0` by convention.
pub fn polar_step(prev: &Position2D, cur: &Position2D, prev_heading: f64) -> PolarStep {
    let dx = cur.x - prev.x;
    let dy = cur.y - prev.y;
    let r = (dx * dx + dy * dy).sqrt();
    if r == 0.0 {
        return PolarStep { r: 0.0, theta: 0.0 };
    }
    PolarStep { r, theta: wrap_angle(dy.atan2(dx) - prev_heading) }
}

/// Integrates polar steps from an origin state:
/// `heading_k = heading_{k-1} + theta_k`,
/// `position_k = position_{k-1} + r_k * (cos heading_k, sin heading_k)`.
/// Timestamps are carried from the source samples; the returned trajectory
/// starts with the origin at `origin_t`.
pub fn integrate_steps(
    origin: &DeadReckonState,
    origin_t: f64,
    steps: &[TimedSample<PolarStep>],
) -> Result<Trajectory> {
    let mut samples = Vec::with_capacity(steps.len() + 1);
    samples.push(TimedSample::new(origin_t, origin.position));
    let mut state = *origin;
    for s in steps {
        state.heading += s.value.theta;
        state.position = Position2D::new(
            state.position.x + s.value.r * state.heading.cos(),
            state.position.y + s.value.r * state.heading.sin(),
        );
        samples.push(TimedSample::new(s.t, state.position));
    }
    Trajectory::new(samples)
}

/// Composed VO feature vector `[r, theta, min(M, m_ref) / m_ref]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VoFeature(pub [f64; 3]);

impl VoFeature {
    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub const LEN: usize = 3;
}

/// Combines a polar step with the keypoint certainty, normalized by the
/// well-lit reference count and clamped to [0, 1].
pub fn compose_vo_features(step: &PolarStep, m: u32, m_ref: u32) -> Result<VoFeature> {
    if m_ref == 0 {
        return Err(Error::invalid("m_ref must be positive"));
    }
    let m_norm = (m.min(m_ref) as f64) / m_ref as f64;
    Ok(VoFeature([step.r, step.theta, m_norm]))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::f64::consts::{FRAC_PI_2, PI};

    fn p(x: f64, y: f64) -> Position2D {
        Position2D::new(x, y)
    }

    #[test]
    fn polar_step_axes() {
        let s = polar_step(&p(0.0, 0.0), &p(1.0, 0.0), 0.0);
        assert_eq!((s.r, s.theta), (1.0, 0.0));

        let s = polar_step(&p(0.0, 0.0), &p(0.0, 2.0), 0.0);
        assert_eq!(s.r, 2.0);
        assert!((s.theta - FRAC_PI_2).abs() < 1e-15);

        let s = polar_step(&p(0.0, 0.0), &p(-1.0, 0.0), FRAC_PI_2);
        assert_eq!(s.r, 1.0);
        assert!((s.theta - FRAC_PI_2).abs() < 1e-15);
    }

    #[test]
    fn zero_step_zero_theta() {
        let s = polar_step(&p(3.0, 3.0), &p(3.0, 3.0), 1.2);
        assert_eq!((s.r, s.theta), (0.0, 0.0));
    }

    #[test]
    fn integrate_rectangle_closes() {
        // 4 x 10 steps tracing a square; heading changes of pi/2 at corners.
        let mut steps = Vec::new();
        let mut t = 0.0;
        for side in 0..4 {
            for i in 0..10 {
                t += 0.1;
                let theta = if i == 0 && side > 0 { FRAC_PI_2 } else { 0.0 };
                steps.push(TimedSample::new(t, PolarStep { r: 1.0, theta }));
            }
        }
        let origin = DeadReckonState { position: p(2.0, 2.0), heading: 0.0 };
        let traj = integrate_steps(&origin, 0.0, &steps).unwrap();
        let end = traj.samples().last().unwrap().value;
        assert!(end.distance_to(&p(2.0, 2.0)) < 1e-9, "end {end:?}");
    }

    #[test]
    fn integrate_empty_is_origin() {
        let origin = DeadReckonState { position: p(1.0, -1.0), heading: 0.3 };
        let traj = integrate_steps(&origin, 5.0, &[]).unwrap();
        assert_eq!(traj.len(), 1);
        assert_eq!(traj.samples()[0].value, p(1.0, -1.0));
        assert_eq!(traj.samples()[0].t, 5.0);
    }

    #[test]
    fn heading_bias_closed_form() {
        // n straight steps of length l, each corrupted by heading bias d:
        // cross-track end offset is l * sum_k sin(k d).
        let (n, l, d) = (20usize, 0.5, 0.01);
        let steps: Vec<TimedSample<PolarStep>> = (0..n)
            .map(|k| TimedSample::new((k + 1) as f64, PolarStep { r: l, theta: d }))
            .collect();
        let origin = DeadReckonState { position: p(0.0, 0.0), heading: 0.0 };
        let traj = integrate_steps(&origin, 0.0, &steps).unwrap();
        let end = traj.samples().last().unwrap().value;
        let expected_y: f64 = (1..=n).map(|k| l * (k as f64 * d).sin()).sum();
        assert!((end.y - expected_y).abs() < 1e-6, "y {} vs {expected_y}", end.y);
    }

    #[test]
    fn single_r_corruption_is_bounded() {
        let truth: Vec<TimedSample<PolarStep>> = (0..30)
            .map(|k| TimedSample::new((k + 1) as f64, PolarStep { r: 0.4, theta: 0.05 }))
            .collect();
        let mut corrupted = truth.clone();
        let delta = 0.35;
        corrupted[7].value.r += delta;
        let origin = DeadReckonState { position: p(0.0, 0.0), heading: 0.0 };
        let a = integrate_steps(&origin, 0.0, &truth).unwrap();
        let b = integrate_steps(&origin, 0.0, &corrupted).unwrap();
        let end_err = a
            .samples()
            .last()
            .unwrap()
            .value
            .distance_to(&b.samples().last().unwrap().value);
        assert!(end_err <= delta + 1e-12, "end err {end_err} vs corruption {delta}");
    }

    #[test]
    fn single_theta_corruption_grows_with_remaining_path() {
        let mk = |corrupt_at: usize| {
            let mut steps: Vec<TimedSample<PolarStep>> = (0..40)
                .map(|k| TimedSample::new((k + 1) as f64, PolarStep { r: 0.4, theta: 0.0 }))
                .collect();
            steps[corrupt_at].value.theta += 0.1;
            let origin = DeadReckonState { position: p(0.0, 0.0), heading: 0.0 };
            integrate_steps(&origin, 0.0, &steps).unwrap()
        };
        let truth = {
            let steps: Vec<TimedSample<PolarStep>> = (0..40)
                .map(|k| TimedSample::new((k + 1) as f64, PolarStep { r: 0.4, theta: 0.0 }))
                .collect();
            let origin = DeadReckonState { position: p(0.0, 0.0), heading: 0.0 };
            integrate_steps(&origin, 0.0, &steps).unwrap()
        };
        let err = |traj: &Trajectory| {
            traj.samples()
                .last()
                .unwrap()
                .value
                .distance_to(&truth.samples().last().unwrap().value)
        };
        let early = err(&mk(5));
        let late = err(&mk(35));
        assert!(early > late, "early {early} late {late}");
    }

    #[test]
    fn compose_reference_scale() {
        let f = compose_vo_features(&PolarStep { r: 0.1, theta: 0.05 }, 568, 568).unwrap();
        assert_eq!(f.0, [0.1, 0.05, 1.0]);
        let f = compose_vo_features(&PolarStep { r: 0.0, theta: 0.0 }, 0, 568).unwrap();
        assert_eq!(f.0[2], 0.0);
        let f = compose_vo_features(&PolarStep { r: 0.0, theta: 0.0 }, 2 * 568, 568).unwrap();
        assert_eq!(f.0[2], 1.0);
    }

    #[test]
    fn wrap_angle_range() {
        assert!((wrap_angle(3.0 * PI) - PI).abs() < 1e-12);
        assert!((wrap_angle(-3.0 * PI) - PI).abs() < 1e-12);
        assert_eq!(wrap_angle(0.0), 0.0);
    }

    proptest! {
        #[test]
        fn step_integrate_round_trip(
            px in -10.0f64..10.0, py in -10.0f64..10.0,
            cx in -10.0f64..10.0, cy in -10.0f64..10.0,
            heading in -6.0f64..6.0,
        ) {
            let prev = p(px, py);
            let cur = p(cx, cy);
            let step = polar_step(&prev, &cur, heading);
            let origin = DeadReckonState { position: prev, heading };
            let traj = integrate_steps(&origin, 0.0, &[TimedSample::new(1.0, step)]).unwrap();
            let end = traj.samples().last().unwrap().value;
            prop_assert!(end.distance_to(&cur) < 1e-9);
        }

        #[test]
        fn wrapped_angles_in_range(a in -100.0f64..100.0) {
            let w = wrap_angle(a);
            prop_assert!(w > -PI - 1e-12 && w <= PI + 1e-12);
        }
    }
}
