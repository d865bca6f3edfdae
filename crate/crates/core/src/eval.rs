//! Trajectory-error metrics: ATE, multi-user relative errors, exact CDFs,
//! and cross-method comparison tables.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::types::Trajectory;

/// Absolute trajectory error summary over time-aligned point pairs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AteSummary {
    /// Per-pair Euclidean distances (m), in time order.
    pub errors: Vec<f64>,
    pub mean: f64,
    /// Median of the per-pair errors; even counts average the two middle
    /// values.
    pub median: f64,
    pub std: f64,
    pub max: f64,
    pub count: usize,
}

pub fn median_of(values: &[f64]) -> f64 {
    let mut sorted = values.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = sorted.len();
    if n == 0 {
        return f64::NAN;
    }
    if n % 2 == 1 {
        sorted[n / 2]
    } else {
        0.5 * (sorted[n / 2 - 1] + sorted[n / 2])
    }
}

pub fn summarize_errors(errors: Vec<f64>) -> Result<AteSummary> {
    if errors.is_empty() {
        return Err(Error::invalid("no aligned pairs to summarize"));
    }
    let count = errors.len();
    let mean = errors.iter().sum::<f64>() / count as f64;
    let var = errors.iter().map(|e| (e - mean).powi(2)).sum::<f64>() / count as f64;
    let max = errors.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let median = median_of(&errors);
    Ok(AteSummary { errors, mean, median, std: var.sqrt(), max, count })
}

/// Absolute trajectory error: Euclidean distance between corresponding
/// points of the estimate and ground truth, aligned on the estimate's
/// timestamps (linear interpolation of the ground truth). No rigid-body
/// fitting is applied; both trajectories share the anchor frame.
pub fn ate(est: &Trajectory, gt: &Trajectory) -> Result<AteSummary> {
    let pairs = est.align_pairs(gt, 0.0);
    if pairs.is_empty() {
        return Err(Error::invalid("estimate and ground truth do not overlap in time"));
    }
    summarize_errors(pairs.iter().map(|(a, b)| a.distance_to(b)).collect())
}

/// Relative-position errors between two agents: per-epoch error in their
/// relative distance (m) and relative bearing (degrees, wrapped to
/// [0, 180]). Epochs where the ground-truth pair distance is below 1e-6 m
/// are skipped (the angle is undefined there).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairwiseRelError {
    pub dist_errors: Vec<f64>,
    pub angle_errors_deg: Vec<f64>,
    pub median_dist: f64,
    pub median_angle_deg: f64,
}

pub fn relative_errors(
    est_a: &Trajectory,
    est_b: &Trajectory,
    gt_a: &Trajectory,
    gt_b: &Trajectory,
) -> Result<PairwiseRelError> {
    let t0 = est_a
        .start_time()
        .max(est_b.start_time())
        .max(gt_a.start_time())
        .max(gt_b.start_time());
    let t1 = est_a.end_time().min(est_b.end_time()).min(gt_a.end_time()).min(gt_b.end_time());
    if t0 > t1 {
        return Err(Error::invalid("trajectories share no common time span"));
    }
    let mut dist_errors = Vec::new();
    let mut angle_errors = Vec::new();
    for s in est_a.samples().iter().filter(|s| s.t >= t0 && s.t <= t1) {
        let a_hat = s.value;
        let b_hat = est_b.interpolate(s.t)?;
        let a = gt_a.interpolate(s.t)?;
        let b = gt_b.interpolate(s.t)?;
        let d_gt = a.distance_to(&b);
        if d_gt < 1e-6 {
            continue;
        }
        let d_est = a_hat.distance_to(&b_hat);
        dist_errors.push((d_est - d_gt).abs());
        let ang_est = (b_hat.y - a_hat.y).atan2(b_hat.x - a_hat.x);
        let ang_gt = (b.y - a.y).atan2(b.x - a.x);
        let diff = crate::vo::wrap_angle(ang_est - ang_gt).abs().to_degrees();
        angle_errors.push(diff);
    }
    if dist_errors.is_empty() {
        return Err(Error::invalid("no usable epochs in the common time span"));
    }
    let median_dist = median_of(&dist_errors);
    let median_angle_deg = median_of(&angle_errors);
    Ok(PairwiseRelError { dist_errors, angle_errors_deg: angle_errors, median_dist, median_angle_deg })
}

/// Exact empirical CDF: sorted values with cumulative fractions k/n, no
/// binning.
pub fn cdf(errors: &[f64]) -> Result<Vec<(f64, f64)>> {
    if errors.is_empty() {
        return Err(Error::invalid("cdf of an empty sample"));
    }
    let mut sorted = errors.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = sorted.len() as f64;
    Ok(sorted.iter().enumerate().map(|(k, &v)| (v, (k + 1) as f64 / n)).collect())
}

/// Pearson correlation coefficient.
pub fn pearson(xs: &[f64], ys: &[f64]) -> Result<f64> {
    if xs.len() != ys.len() || xs.len() < 2 {
        return Err(Error::invalid("pearson needs two equal-length samples of size >= 2"));
    }
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let mut cov = 0.0;
    let mut vx = 0.0;
    let mut vy = 0.0;
    for (x, y) in xs.iter().zip(ys) {
        cov += (x - mx) * (y - my);
        vx += (x - mx).powi(2);
        vy += (y - my).powi(2);
    }
    if vx == 0.0 || vy == 0.0 {
        return Err(Error::Numerical("pearson undefined for a constant sample".into()));
    }
    Ok(cov / (vx * vy).sqrt())
}

/// Cross-method comparison: one row per method, sorted by ascending
/// median.
#[derive(Debug, Clone, PartialEq)]
pub struct CompareReport {
    pub rows: Vec<(String, AteSummary)>,
}

pub fn compare_report(named: &[(String, AteSummary)]) -> Result<CompareReport> {
    if named.is_empty() {
        return Err(Error::invalid("comparison needs at least one method"));
    }
    let mut rows = named.to_vec();
    rows.sort_by(|a, b| a.1.median.partial_cmp(&b.1.median).unwrap().then(a.0.cmp(&b.0)));
    Ok(CompareReport { rows })
}

impl CompareReport {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("method,mean_m,median_m,std_m,max_m,count\n");
        for (name, s) in &self.rows {
            out.push_str(&format!(
                "{name},{},{},{},{},{}\n",
                s.mean, s.median, s.std, s.max, s.count
            ));
        }
        out
    }

    /// Fixed-width text table for human eyes (stderr).
    pub fn to_text(&self) -> String {
        let mut out = format!(
            "{:<14} {:>9} {:>9} {:>9} {:>9} {:>7}\n",
            "method", "mean[m]", "median[m]", "std[m]", "max[m]", "count"
        );
        for (name, s) in &self.rows {
            out.push_str(&format!(
                "{:<14} {:>9.4} {:>9.4} {:>9.4} {:>9.4} {:>7}\n",
                name, s.mean, s.median, s.std, s.max, s.count
            ));
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::types::{Position2D, TimedSample};
    use proptest::prelude::*;

    fn traj(points: &[(f64, f64, f64)]) -> Trajectory {
        Trajectory::new(
            points
                .iter()
                .map(|&(t, x, y)| TimedSample::new(t, Position2D::new(x, y)))
                .collect(),
        )
        .unwrap()
    }

    fn line_traj(n: usize, shift: (f64, f64)) -> Trajectory {
        traj(&(0..n)
            .map(|i| (i as f64, i as f64 + shift.0, shift.1))
            .collect::<Vec<_>>())
    }

    #[test]
    fn ate_identity_zero() {
        let t = line_traj(11, (0.0, 0.0));
        let s = ate(&t, &t).unwrap();
        assert_eq!(s.max, 0.0);
        assert_eq!(s.median, 0.0);
        assert_eq!(s.count, 11);
    }

    #[test]
    fn ate_three_four_five_offset() {
        let gt = line_traj(11, (0.0, 0.0));
        let est = line_traj(11, (0.3, 0.4));
        let s = ate(&est, &gt).unwrap();
        for e in &s.errors {
            assert!((e - 0.5).abs() < 1e-12);
        }
        assert!((s.median - 0.5).abs() < 1e-12);
        assert!((s.std - 0.0).abs() < 1e-12);
    }

    #[test]
    fn ate_rotated_line_max() {
        // 10 m straight line rotated 90 degrees about its start: the far
        // end lands 10 * sqrt(2) away.
        let gt = traj(&(0..=10).map(|i| (i as f64, i as f64, 0.0)).collect::<Vec<_>>());
        let est = traj(&(0..=10).map(|i| (i as f64, 0.0, i as f64)).collect::<Vec<_>>());
        let s = ate(&est, &gt).unwrap();
        assert!((s.max - 10.0 * 2f64.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn ate_no_overlap_is_error() {
        let a = traj(&[(0.0, 0.0, 0.0), (1.0, 1.0, 0.0)]);
        let b = traj(&[(5.0, 0.0, 0.0), (6.0, 1.0, 0.0)]);
        assert!(ate(&a, &b).is_err());
    }

    #[test]
    fn relative_errors_exact_estimates() {
        let gt_a = line_traj(11, (0.0, 0.0));
        let gt_b = line_traj(11, (0.0, 3.0));
        let e = relative_errors(&gt_a, &gt_b, &gt_a, &gt_b).unwrap();
        assert!(e.dist_errors.iter().all(|&d| d < 1e-12));
        assert!(e.angle_errors_deg.iter().all(|&a| a < 1e-9));
    }

    #[test]
    fn relative_errors_common_translation_invariant() {
        let gt_a = line_traj(11, (0.0, 0.0));
        let gt_b = line_traj(11, (0.0, 3.0));
        let est_a = line_traj(11, (1.0, 0.5));
        let est_b = line_traj(11, (1.0, 3.5));
        let e = relative_errors(&est_a, &est_b, &gt_a, &gt_b).unwrap();
        assert!(e.median_dist < 1e-12);
        assert!(e.median_angle_deg < 1e-9);
    }

    #[test]
    fn relative_errors_pure_rotation() {
        // B rotated 10 degrees about A with the distance preserved.
        let gt_a = traj(&[(0.0, 0.0, 0.0), (1.0, 0.0, 0.0)]);
        let gt_b = traj(&[(0.0, 5.0, 0.0), (1.0, 5.0, 0.0)]);
        let ang = 10f64.to_radians();
        let est_b = traj(&[
            (0.0, 5.0 * ang.cos(), 5.0 * ang.sin()),
            (1.0, 5.0 * ang.cos(), 5.0 * ang.sin()),
        ]);
        let e = relative_errors(&gt_a, &est_b, &gt_a, &gt_b).unwrap();
        assert!(e.median_dist < 1e-9, "dist {}", e.median_dist);
        assert!((e.median_angle_deg - 10.0).abs() < 1e-9, "angle {}", e.median_angle_deg);
    }

    #[test]
    fn cdf_basic() {
        let c = cdf(&[3.0, 1.0, 2.0]).unwrap();
        assert_eq!(c, vec![(1.0, 1.0 / 3.0), (2.0, 2.0 / 3.0), (3.0, 1.0)]);
    }

    #[test]
    fn cdf_duplicates_and_median_consistency() {
        let errors = vec![0.5, 0.5, 1.0, 2.0, 4.0];
        let c = cdf(&errors).unwrap();
        assert_eq!(c[0], (0.5, 0.2));
        assert_eq!(c[1], (0.5, 0.4));
        let s = summarize_errors(errors.clone()).unwrap();
        let at_half = c.iter().find(|(_, f)| *f >= 0.5).unwrap().0;
        assert_eq!(at_half, s.median);
    }

    #[test]
    fn cdf_empty_is_error() {
        assert!(cdf(&[]).is_err());
    }

    #[test]
    fn compare_single_method() {
        let s = summarize_errors(vec![0.1, 0.2, 0.3]).unwrap();
        let rep = compare_report(&[("rf".into(), s)]).unwrap();
        assert_eq!(rep.rows.len(), 1);
        let csv = rep.to_csv();
        assert!(csv.starts_with("method,"));
        assert_eq!(csv.lines().count(), 2);
    }

    #[test]
    fn compare_sorted_by_median() {
        let hi = summarize_errors(vec![1.0, 2.0, 3.0]).unwrap();
        let lo = summarize_errors(vec![0.1, 0.2, 0.3]).unwrap();
        let rep = compare_report(&[("worse".into(), hi), ("better".into(), lo)]).unwrap();
        assert_eq!(rep.rows[0].0, "better");
    }

    #[test]
    fn pearson_signs() {
        let xs: Vec<f64> = (0..50).map(|i| i as f64).collect();
        let ys: Vec<f64> = xs.iter().map(|x| -2.0 * x + 3.0).collect();
        assert!((pearson(&xs, &ys).unwrap() + 1.0).abs() < 1e-12);
    }

    proptest! {
        #[test]
        fn ate_reparameterization_invariant(scale in 0.1f64..10.0, n in 3usize..20) {
            let gt: Vec<(f64, f64, f64)> =
                (0..n).map(|i| (i as f64, (i as f64).sin(), (i as f64).cos())).collect();
            let est: Vec<(f64, f64, f64)> =
                (0..n).map(|i| (i as f64, (i as f64).sin() + 0.1, (i as f64).cos())).collect();
            let s1 = ate(&traj(&est), &traj(&gt)).unwrap();
            let re_time = |pts: &[(f64, f64, f64)]| -> Vec<(f64, f64, f64)> {
                pts.iter().map(|&(t, x, y)| (t * scale, x, y)).collect()
            };
            let s2 = ate(&traj(&re_time(&est)), &traj(&re_time(&gt))).unwrap();
            prop_assert!((s1.median - s2.median).abs() < 1e-12);
            prop_assert!((s1.max - s2.max).abs() < 1e-12);
        }

        #[test]
        fn cdf_monotone_ends_at_one(values in proptest::collection::vec(0.0f64..100.0, 1..60)) {
            let c = cdf(&values).unwrap();
            for w in c.windows(2) {
                prop_assert!(w[1].0 >= w[0].0);
                prop_assert!(w[1].1 >= w[0].1);
            }
            prop_assert!((c.last().unwrap().1 - 1.0).abs() < 1e-12);
        }
    }
}
