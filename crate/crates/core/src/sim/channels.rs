//! Per-epoch sensor measurement synthesis.

use crate::error::{Error, Result};
use crate::sim::env::{los_test, Environment};
use crate::sim::noise::{NoiseModel, WALKING_SPEED};
use crate::sim::trace::{RfEntry, RfSample, VoSample};
use crate::types::{AnchorLayout, Position2D, RngStream};
use crate::vo::wrap_angle;

/// Log-distance path loss with a per-wall penalty and Gaussian shadowing:
/// `p0 - 10 g log10(d / d0) - crossings * wall_penalty + N(0, shadow_sigma)`
/// where `g` is the LoS exponent for zero crossings and the NLoS exponent
/// otherwise.
pub fn simulate_power(
    distance: f64,
    crossings: u32,
    nm: &NoiseModel,
    rng: &mut RngStream,
) -> Result<f64> {
    if distance <= 0.0 {
        return Err(Error::invalid(format!("distance must be > 0, got {distance}")));
    }
    let gamma = if crossings == 0 { nm.gamma_los } else { nm.gamma_nlos };
    let shadow = rng.next_gauss(0.0, nm.shadow_sigma)?;
    Ok(nm.p0 - 10.0 * gamma * (distance / nm.d0).log10()
        - crossings as f64 * nm.wall_penalty
        + shadow)
}

/// Streams used by the RF channel; one per noise source so adding a source
/// never perturbs the others.
pub struct RfChannel {
    range_rng: RngStream,
    power_rng: RngStream,
}

impl RfChannel {
    pub fn new(seed: u64) -> Self {
        Self {
            range_rng: RngStream::named(seed, "sim.rf.range"),
            power_rng: RngStream::named(seed, "sim.rf.power"),
        }
    }

    /// One ranging round: per anchor, LoS ranges carry Gaussian noise while
    /// NLoS ranges gain an exponential positive bias plus Gaussian noise
    /// (paths through or around obstacles only lengthen). Ranges are
    /// clamped positive; the true LoS flag is recorded.
    pub fn epoch(
        &mut self,
        t: f64,
        gt_pos: &Position2D,
        layout: &AnchorLayout,
        env: &Environment,
        nm: &NoiseModel,
    ) -> Result<RfSample> {
        if !env.bounds.contains(gt_pos) {
            return Err(Error::OutOfRange(format!(
                "ground-truth position ({}, {}) outside environment bounds",
                gt_pos.x, gt_pos.y
            )));
        }
        let mut entries = Vec::with_capacity(layout.len());
        for anchor in layout.anchors() {
            let apos = anchor.position();
            let d = gt_pos.distance_to(&apos).max(1e-6);
            let (los, crossings) = los_test(gt_pos, &apos, env);
            let range = if los {
                d + self.range_rng.next_gauss(0.0, nm.sigma_los)?
            } else {
                d + self.range_rng.next_exp(nm.nlos_bias_mean)?
                    + self.range_rng.next_gauss(0.0, nm.sigma_nlos)?
            };
            let power = simulate_power(d, crossings, nm, &mut self.power_rng)?;
            entries.push(RfEntry { id: anchor.id, range: range.max(1e-3), power, los });
        }
        Ok(RfSample { t, entries })
    }
}

/// Matched-keypoint count at a position: the well-lit reference scaled by
/// the dim-zone factor and a speed factor, plus Poisson-like integer noise
/// (sigma = sqrt of the scaled count).
pub fn simulate_keypoints(
    pos: &Position2D,
    speed: f64,
    env: &Environment,
    nm: &NoiseModel,
    rng: &mut RngStream,
) -> Result<u32> {
    let zone = env.keypoint_scale_at(pos);
    let speed_factor = if speed <= WALKING_SPEED {
        1.0
    } else {
        (1.0 - nm.m_speed_penalty * (speed - WALKING_SPEED)).max(0.0)
    };
    let base = nm.m_well_lit as f64 * zone * speed_factor;
    let noisy = base + rng.next_gauss(0.0, base.sqrt())?;
    Ok(noisy.round().max(0.0) as u32)
}

/// VO step-noise multiplier as a function of matched keypoints. Flat above
/// 500 matches, ramping linearly to 2x at 300, 5x at 100, and up to 15x at
/// zero; tracking additionally fails outright when the count stays below
/// 100 (see [`VoChannel`]).
pub fn vo_noise_scale(m: u32) -> f64 {
    let m = m as f64;
    if m >= 500.0 {
        1.0
    } else if m >= 300.0 {
        1.0 + (500.0 - m) / 200.0
    } else if m >= 100.0 {
        2.0 + 3.0 * (300.0 - m) / 200.0
    } else {
        5.0 + 10.0 * (100.0 - m) / 100.0
    }
}

/// Epochs of consecutive sub-100 keypoint counts after which tracking fails.
pub const TRACKING_LOSS_STREAK: u32 = 3;

/// Stateful VO measurement channel: tracks the previous ground-truth
/// heading (theta is the per-step heading *change*), the low-keypoint
/// streak, and the last emitted step for loss repetition.
pub struct VoChannel {
    step_rng: RngStream,
    kp_rng: RngStream,
    prev_heading: Option<f64>,
    low_streak: u32,
    last_step: (f64, f64),
}

impl VoChannel {
    pub fn new(seed: u64) -> Self {
        Self {
            step_rng: RngStream::named(seed, "sim.vo.step"),
            kp_rng: RngStream::named(seed, "sim.vo.keypoints"),
            prev_heading: None,
            low_streak: 0,
            last_step: (0.0, 0.0),
        }
    }

    /// One VO epoch from the ground-truth step `prev -> cur`. Noise on the
    /// true polar step scales with `vo_noise_scale(m)`; a sustained
    /// sub-100 keypoint streak flips `lost` and repeats the last step.
    pub fn epoch(
        &mut self,
        t: f64,
        prev_gt: &Position2D,
        cur_gt: &Position2D,
        env: &Environment,
        nm: &NoiseModel,
        rate_hz: f64,
    ) -> Result<VoSample> {
        let dx = cur_gt.x - prev_gt.x;
        let dy = cur_gt.y - prev_gt.y;
        let r_true = (dx * dx + dy * dy).sqrt();
        let speed = r_true * rate_hz;
        let m = simulate_keypoints(cur_gt, speed, env, nm, &mut self.kp_rng)?;

        // True heading change in the body frame; stationary steps keep the
        // previous heading.
        let theta_true = if r_true > 1e-12 {
            let abs_heading = dy.atan2(dx);
            let change = match self.prev_heading {
                Some(prev) => wrap_angle(abs_heading - prev),
                None => 0.0,
            };
            self.prev_heading = Some(abs_heading);
            change
        } else {
            0.0
        };

        if m < 100 {
            self.low_streak += 1;
        } else {
            self.low_streak = 0;
        }
        let lost = self.low_streak >= TRACKING_LOSS_STREAK;

        let (r, theta) = if lost {
            self.last_step
        } else {
            let s = vo_noise_scale(m);
            let r = (r_true + self.step_rng.next_gauss(0.0, nm.vo_r_sigma0 * s)?).max(0.0);
            let theta =
                wrap_angle(theta_true + self.step_rng.next_gauss(0.0, nm.vo_theta_sigma0 * s)?);
            self.last_step = (r, theta);
            (r, theta)
        };

        Ok(VoSample { t, r, theta, m, lost })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim::env::Rect;
    use crate::sim::env::DimZone;
    use crate::types::Anchor;

    fn env_10x10() -> Environment {
        Environment::open(Rect::new(0.0, 0.0, 40.0, 40.0).unwrap())
    }

    fn layout() -> AnchorLayout {
        AnchorLayout::new(vec![
            Anchor { id: 0, x: 1.0, y: 1.0 },
            Anchor { id: 1, x: 39.0, y: 1.0 },
            Anchor { id: 2, x: 20.0, y: 39.0 },
        ])
        .unwrap()
    }

    #[test]
    fn power_reference_distance() {
        let nm = NoiseModel { shadow_sigma: 0.0, ..NoiseModel::default() };
        let mut rng = RngStream::named(1, "p");
        let p = simulate_power(nm.d0, 0, &nm, &mut rng).unwrap();
        assert_eq!(p, nm.p0);
    }

    #[test]
    fn power_doubling_distance() {
        let nm = NoiseModel {
            shadow_sigma: 0.0,
            gamma_los: 2.0,
            ..NoiseModel::default()
        };
        let mut rng = RngStream::named(1, "p");
        let p1 = simulate_power(5.0, 0, &nm, &mut rng).unwrap();
        let p2 = simulate_power(10.0, 0, &nm, &mut rng).unwrap();
        let drop = p1 - p2;
        assert!((drop - 10.0 * 2.0 * 2f64.log10()).abs() < 1e-9, "drop {drop}");
    }

    #[test]
    fn power_calibration_markers() {
        // Expected (noise-free) power: LoS at 30 m stays above -90 dBm,
        // one-wall NLoS at 15 m is already below -95 dBm.
        let nm = NoiseModel { shadow_sigma: 0.0, ..NoiseModel::default() };
        let mut rng = RngStream::named(1, "p");
        let los_30 = simulate_power(30.0, 0, &nm, &mut rng).unwrap();
        let nlos_15 = simulate_power(15.0, 1, &nm, &mut rng).unwrap();
        assert!(los_30 > -90.0, "LoS at 30 m: {los_30}");
        assert!(nlos_15 < -95.0, "NLoS at 15 m: {nlos_15}");
    }

    #[test]
    fn power_rejects_nonpositive_distance() {
        let nm = NoiseModel::default();
        let mut rng = RngStream::named(1, "p");
        assert!(simulate_power(0.0, 0, &nm, &mut rng).is_err());
    }

    #[test]
    fn rf_epoch_noiseless_exact() {
        let nm = NoiseModel::noiseless();
        let env = env_10x10();
        let lay = layout();
        let mut ch = RfChannel::new(3);
        let pos = Position2D::new(12.0, 9.0);
        let s = ch.epoch(0.0, &pos, &lay, &env, &nm).unwrap();
        for e in &s.entries {
            let d = pos.distance_to(&lay.by_id(e.id).unwrap().position());
            assert!((e.range - d).abs() < 1e-12);
            assert!(e.los);
        }
    }

    #[test]
    fn rf_epoch_nlos_error_exceeds_los() {
        let nm = NoiseModel::default();
        let mut env = env_10x10();
        // Box around anchor 0 makes it NLoS from everywhere outside.
        env.occluders.push(Rect::new(0.5, 0.5, 1.5, 1.5).unwrap());
        let lay = layout();
        let mut ch = RfChannel::new(11);
        let pos = Position2D::new(20.0, 20.0);
        let (mut los_err, mut nlos_err, mut n) = (0.0, 0.0, 0);
        for i in 0..10_000 {
            let s = ch.epoch(i as f64, &pos, &lay, &env, &nm).unwrap();
            for e in &s.entries {
                let d = pos.distance_to(&lay.by_id(e.id).unwrap().position());
                if e.id == 0 {
                    assert!(!e.los);
                    nlos_err += (e.range - d).abs();
                } else {
                    assert!(e.los);
                    los_err += (e.range - d).abs();
                }
            }
            n += 1;
        }
        let nlos_mean = nlos_err / n as f64;
        let los_mean = los_err / (2 * n) as f64;
        assert!(nlos_mean > los_mean, "nlos {nlos_mean} vs los {los_mean}");
    }

    #[test]
    fn rf_epoch_deterministic() {
        let nm = NoiseModel::default();
        let env = env_10x10();
        let lay = layout();
        let run = || {
            let mut ch = RfChannel::new(5);
            (0..20)
                .map(|i| ch.epoch(i as f64, &Position2D::new(10.0, 10.0), &lay, &env, &nm).unwrap())
                .collect::<Vec<_>>()
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn keypoints_well_lit_mean() {
        let nm = NoiseModel::default();
        let env = env_10x10();
        let mut rng = RngStream::named(2, "kp");
        let n = 1000;
        let total: u64 = (0..n)
            .map(|_| {
                simulate_keypoints(&Position2D::new(5.0, 5.0), 1.0, &env, &nm, &mut rng).unwrap()
                    as u64
            })
            .sum();
        let mean = total as f64 / n as f64;
        assert!((mean - 568.0).abs() < 56.8, "mean {mean}");
    }

    #[test]
    fn keypoints_dim_zone_mean() {
        let nm = NoiseModel::default();
        let mut env = env_10x10();
        let scale = 252.0 / 568.0;
        env.dim_zones
            .push(DimZone { rect: Rect::new(0.0, 0.0, 10.0, 10.0).unwrap(), keypoint_scale: scale });
        let mut rng = RngStream::named(2, "kp");
        let n = 1000;
        let total: u64 = (0..n)
            .map(|_| {
                simulate_keypoints(&Position2D::new(5.0, 5.0), 1.0, &env, &nm, &mut rng).unwrap()
                    as u64
            })
            .sum();
        let mean = total as f64 / n as f64;
        assert!((mean - 252.0).abs() < 25.2, "mean {mean}");
    }

    #[test]
    fn keypoints_deep_dim_drops_below_100() {
        let nm = NoiseModel::default();
        let mut env = env_10x10();
        env.dim_zones
            .push(DimZone { rect: Rect::new(0.0, 0.0, 10.0, 10.0).unwrap(), keypoint_scale: 0.1 });
        let mut rng = RngStream::named(2, "kp");
        let below: usize = (0..1000)
            .filter(|_| {
                simulate_keypoints(&Position2D::new(5.0, 5.0), 1.0, &env, &nm, &mut rng).unwrap()
                    < 100
            })
            .count();
        assert!(below > 900, "below-100 count {below}");
    }

    #[test]
    fn running_reduces_keypoints() {
        let nm = NoiseModel::default();
        let env = env_10x10();
        let mut rng = RngStream::named(2, "kp");
        let mean = |speed: f64, rng: &mut RngStream| -> f64 {
            let total: u64 = (0..500)
                .map(|_| {
                    simulate_keypoints(&Position2D::new(5.0, 5.0), speed, &env, &nm, rng).unwrap()
                        as u64
                })
                .sum();
            total as f64 / 500.0
        };
        let walk = mean(1.0, &mut rng);
        let run = mean(2.8, &mut rng);
        assert!(run < walk * 0.8, "run {run} vs walk {walk}");
    }

    #[test]
    fn vo_noise_scale_monotone() {
        let values: Vec<f64> = (0..=700).map(|m| vo_noise_scale(m)).collect();
        for w in values.windows(2) {
            assert!(w[1] <= w[0]);
        }
        assert_eq!(vo_noise_scale(600), 1.0);
        assert_eq!(vo_noise_scale(500), 1.0);
        assert_eq!(vo_noise_scale(300), 2.0);
        assert_eq!(vo_noise_scale(100), 5.0);
    }

    #[test]
    fn vo_epoch_noiseless_exact() {
        let nm = NoiseModel::noiseless();
        let env = env_10x10();
        let mut ch = VoChannel::new(9);
        let a = Position2D::new(5.0, 5.0);
        let b = Position2D::new(5.5, 5.0);
        let c = Position2D::new(5.5, 5.5);
        let s1 = ch.epoch(0.0, &a, &b, &env, &nm, 15.0).unwrap();
        assert!((s1.r - 0.5).abs() < 1e-12);
        assert_eq!(s1.theta, 0.0); // first step defines the heading
        let s2 = ch.epoch(1.0 / 15.0, &b, &c, &env, &nm, 15.0).unwrap();
        assert!((s2.r - 0.5).abs() < 1e-12);
        assert!((s2.theta - std::f64::consts::FRAC_PI_2).abs() < 1e-12);
    }

    #[test]
    fn vo_noise_shrinks_with_keypoints() {
        let nm = NoiseModel::default();
        let env = env_10x10();
        // Compare r-error spread between high and low keypoint regimes by
        // sampling the channel in a dim vs bright environment.
        let mut dim_env = env.clone();
        dim_env.dim_zones.push(DimZone {
            rect: Rect::new(0.0, 0.0, 40.0, 40.0).unwrap(),
            keypoint_scale: 200.0 / 568.0,
        });
        let step_err = |env: &Environment, seed: u64| -> f64 {
            let mut ch = VoChannel::new(seed);
            let mut total = 0.0;
            let mut prev = Position2D::new(5.0, 5.0);
            for i in 0..10_000 {
                let cur = Position2D::new(5.0 + 0.1 * (i + 1) as f64 % 30.0, 5.0);
                let s = ch.epoch(i as f64, &prev, &cur, env, &nm, 15.0).unwrap();
                let true_r = prev.distance_to(&cur);
                total += (s.r - true_r).abs();
                prev = cur;
            }
            total / 10_000.0
        };
        let bright = step_err(&env, 4);
        let dim = step_err(&dim_env, 4);
        assert!(bright < dim, "bright {bright} dim {dim}");
    }

    #[test]
    fn tracking_lost_after_streak() {
        let nm = NoiseModel::default();
        let mut env = env_10x10();
        env.dim_zones
            .push(DimZone { rect: Rect::new(0.0, 0.0, 40.0, 40.0).unwrap(), keypoint_scale: 0.05 });
        let mut ch = VoChannel::new(9);
        let mut lost_at = None;
        let mut prev = Position2D::new(5.0, 5.0);
        for i in 0..5 {
            let cur = Position2D::new(5.0 + 0.1 * (i + 1) as f64, 5.0);
            let s = ch.epoch(i as f64, &prev, &cur, &env, &nm, 15.0).unwrap();
            assert!(s.m < 100);
            if s.lost && lost_at.is_none() {
                lost_at = Some(i);
            }
            prev = cur;
        }
        assert_eq!(lost_at, Some(2)); // third consecutive low epoch
    }
}
