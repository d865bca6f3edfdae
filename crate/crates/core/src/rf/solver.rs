//! Least-squares multilateration via Gauss-Newton with Levenberg damping.

use crate::error::{Error, Result};
use crate::types::{are_collinear, Position2D};

/// Step-norm threshold below which the solve is declared converged (m).
pub const STEP_TOL: f64 = 1e-9;
/// Iteration cap.
pub const MAX_ITERATIONS: u32 = 100;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MultilaterationResult {
    pub position: Position2D,
    /// Root-mean-square of the range residuals at the solution (m).
    pub residual_rms: f64,
    pub iterations: u32,
    /// True when the damped Gauss-Newton step norm fell below [`STEP_TOL`],
    /// which bounds the residual gradient at the returned point.
    pub converged: bool,
}

/// Sum of squared range residuals `f_i = R_i - |anchor_i - p|`.
pub fn range_objective(ranges: &[(Position2D, f64)], p: &Position2D) -> f64 {
    ranges
        .iter()
        .map(|(a, r)| {
            let f = r - a.distance_to(p);
            f * f
        })
        .sum()
}

/// Solves for the position minimizing the squared range residuals.
/// Needs at least three non-collinear anchors; `init` defaults to the
/// anchor centroid. The squared-residual surface has mirror basins for
/// thin geometries, so damped Gauss-Newton runs from the init point plus a
/// coarse lattice of fallback starts over the anchor box and the best
/// final objective wins. Steps are only accepted when they decrease the
/// objective, so the returned objective never exceeds the one at the init
/// point.
pub fn multilaterate(
    ranges: &[(Position2D, f64)],
    init: Option<Position2D>,
) -> Result<MultilaterationResult> {
    if ranges.len() < 3 {
        return Err(Error::Geometry(format!(
            "multilateration needs >= 3 anchors, got {}",
            ranges.len()
        )));
    }
    let anchors: Vec<Position2D> = ranges.iter().map(|(a, _)| *a).collect();
    if are_collinear(&anchors) {
        return Err(Error::Geometry("anchor set is collinear".into()));
    }
    if ranges.iter().any(|(_, r)| !r.is_finite()) {
        return Err(Error::invalid("ranges must be finite"));
    }

    let centroid = {
        let n = anchors.len() as f64;
        let (sx, sy) = anchors.iter().fold((0.0, 0.0), |(sx, sy), a| (sx + a.x, sy + a.y));
        Position2D::new(sx / n, sy / n)
    };
    let mut starts = vec![init.unwrap_or(centroid)];
    let (mut lo_x, mut hi_x, mut lo_y, mut hi_y) =
        (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY);
    for a in &anchors {
        lo_x = lo_x.min(a.x);
        hi_x = hi_x.max(a.x);
        lo_y = lo_y.min(a.y);
        hi_y = hi_y.max(a.y);
    }
    let margin = 0.25 * ((hi_x - lo_x) + (hi_y - lo_y)).max(1.0);
    for i in 0..3 {
        for j in 0..3 {
            starts.push(Position2D::new(
                lo_x - margin + (hi_x - lo_x + 2.0 * margin) * i as f64 / 2.0,
                lo_y - margin + (hi_y - lo_y + 2.0 * margin) * j as f64 / 2.0,
            ));
        }
    }

    let mut best: Option<MultilaterationResult> = None;
    for start in starts {
        let res = lm_from(ranges, start);
        let better = match &best {
            None => true,
            Some(b) => res.residual_rms < b.residual_rms,
        };
        if better {
            best = Some(res);
        }
    }
    Ok(best.expect("at least one start"))
}

fn lm_from(ranges: &[(Position2D, f64)], start: Position2D) -> MultilaterationResult {
    let mut p = start;
    let mut obj = range_objective(ranges, &p);
    let mut lambda = 1e-3;
    let mut iterations = 0;
    let mut converged = false;

    while iterations < MAX_ITERATIONS {
        iterations += 1;
        // J_i = d f_i / d p = (anchor_i - p) / d_i; gradient g = J^T f.
        let (mut jtj_xx, mut jtj_xy, mut jtj_yy) = (0.0f64, 0.0f64, 0.0f64);
        let (mut g_x, mut g_y) = (0.0f64, 0.0f64);
        for (a, r) in ranges {
            let d = a.distance_to(&p).max(1e-12);
            let f = r - d;
            let jx = (a.x - p.x) / d;
            let jy = (a.y - p.y) / d;
            jtj_xx += jx * jx;
            jtj_xy += jx * jy;
            jtj_yy += jy * jy;
            g_x += jx * f;
            g_y += jy * f;
        }

        // Damped normal equations (J^T J + lambda diag(J^T J)) s = -g.
        let mut stepped = false;
        for _ in 0..12 {
            let axx = jtj_xx * (1.0 + lambda) + 1e-15;
            let ayy = jtj_yy * (1.0 + lambda) + 1e-15;
            let det = axx * ayy - jtj_xy * jtj_xy;
            if det.abs() < 1e-30 {
                lambda *= 10.0;
                continue;
            }
            let sx = (-g_x * ayy + g_y * jtj_xy) / det;
            let sy = (-g_y * axx + g_x * jtj_xy) / det;
            let trial = Position2D::new(p.x + sx, p.y + sy);
            let trial_obj = range_objective(ranges, &trial);
            if trial_obj <= obj {
                p = trial;
                obj = trial_obj;
                lambda = (lambda / 3.0).max(1e-12);
                if (sx * sx + sy * sy).sqrt() < STEP_TOL {
                    converged = true;
                }
                stepped = true;
                break;
            }
            lambda *= 10.0;
        }
        if converged || !stepped {
            // No acceptable step exists at any damping: a stationary point.
            converged = converged || !stepped;
            break;
        }
    }

    MultilaterationResult {
        position: p,
        residual_rms: (obj / ranges.len() as f64).sqrt(),
        iterations,
        converged,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::types::RngStream;

    fn p(x: f64, y: f64) -> Position2D {
        Position2D::new(x, y)
    }

    /// Independent oracle: coarse grid scan over the same objective,
    /// recursively refined around the best cell.
    fn grid_search_oracle(ranges: &[(Position2D, f64)]) -> Position2D {
        let xs: Vec<f64> = ranges.iter().map(|(a, _)| a.x).collect();
        let ys: Vec<f64> = ranges.iter().map(|(a, _)| a.y).collect();
        let margin = 5.0;
        let mut cx_lo = xs.iter().cloned().fold(f64::INFINITY, f64::min) - margin;
        let mut cx_hi = xs.iter().cloned().fold(f64::NEG_INFINITY, f64::max) + margin;
        let mut cy_lo = ys.iter().cloned().fold(f64::INFINITY, f64::min) - margin;
        let mut cy_hi = ys.iter().cloned().fold(f64::NEG_INFINITY, f64::max) + margin;
        let mut best = p(0.0, 0.0);
        for _ in 0..14 {
            let mut best_obj = f64::INFINITY;
            for i in 0..=200 {
                for j in 0..=200 {
                    let cand = p(
                        cx_lo + (cx_hi - cx_lo) * i as f64 / 200.0,
                        cy_lo + (cy_hi - cy_lo) * j as f64 / 200.0,
                    );
                    let obj = range_objective(ranges, &cand);
                    if obj < best_obj {
                        best_obj = obj;
                        best = cand;
                    }
                }
            }
            let (w, h) = ((cx_hi - cx_lo) * 0.05, (cy_hi - cy_lo) * 0.05);
            cx_lo = best.x - w;
            cx_hi = best.x + w;
            cy_lo = best.y - h;
            cy_hi = best.y + h;
        }
        best
    }

    #[test]
    fn exact_symmetric_geometry() {
        let ranges = vec![
            (p(0.0, 0.0), 50f64.sqrt()),
            (p(10.0, 0.0), 50f64.sqrt()),
            (p(0.0, 10.0), 50f64.sqrt()),
        ];
        let res = multilaterate(&ranges, None).unwrap();
        assert!(res.position.distance_to(&p(5.0, 5.0)) < 1e-6, "{:?}", res.position);
        assert!(res.residual_rms < 1e-9);
        assert!(res.converged);
    }

    #[test]
    fn noisy_ranges_match_grid_oracle() {
        let mut rng = RngStream::named(17, "solver-test");
        let anchors = [p(0.0, 0.0), p(10.0, 0.0), p(10.0, 10.0), p(0.0, 10.0)];
        let truth = p(3.7, 6.2);
        let ranges: Vec<(Position2D, f64)> = anchors
            .iter()
            .map(|a| (*a, a.distance_to(&truth) + rng.next_gauss(0.0, 0.3).unwrap()))
            .collect();
        let res = multilaterate(&ranges, None).unwrap();
        let oracle = grid_search_oracle(&ranges);
        assert!(
            res.position.distance_to(&oracle) < 1e-6,
            "solver {:?} vs oracle {:?}",
            res.position,
            oracle
        );
    }

    #[test]
    fn collinear_anchor_set_rejected() {
        let ranges = vec![(p(0.0, 0.0), 1.0), (p(5.0, 0.0), 2.0), (p(10.0, 0.0), 3.0)];
        assert!(matches!(multilaterate(&ranges, None), Err(Error::Geometry(_))));
    }

    #[test]
    fn too_few_anchors_rejected() {
        let ranges = vec![(p(0.0, 0.0), 1.0), (p(5.0, 1.0), 2.0)];
        assert!(matches!(multilaterate(&ranges, None), Err(Error::Geometry(_))));
    }

    #[test]
    fn objective_never_worse_than_init() {
        let mut rng = RngStream::named(23, "solver-obj");
        for _ in 0..50 {
            let anchors: Vec<Position2D> = (0..5)
                .map(|_| p(rng.next_range(0.0, 20.0), rng.next_range(0.0, 20.0)))
                .collect();
            if are_collinear(&anchors) {
                continue;
            }
            let ranges: Vec<(Position2D, f64)> =
                anchors.iter().map(|a| (*a, rng.next_range(1.0, 25.0))).collect();
            let init = p(rng.next_range(-5.0, 25.0), rng.next_range(-5.0, 25.0));
            let res = multilaterate(&ranges, Some(init)).unwrap();
            assert!(
                range_objective(&ranges, &res.position) <= range_objective(&ranges, &init) + 1e-12
            );
        }
    }

    #[test]
    fn exact_ranges_recover_truth() {
        let mut rng = RngStream::named(29, "solver-exact");
        let mut solved = 0;
        for _ in 0..200 {
            let n = 3 + (rng.next_u64() % 5) as usize;
            let anchors: Vec<Position2D> = (0..n)
                .map(|_| p(rng.next_range(0.0, 20.0), rng.next_range(0.0, 20.0)))
                .collect();
            if are_collinear(&anchors) {
                continue;
            }
            // Reject thin geometry the same way the acceptance suite does.
            let spread = anchors
                .iter()
                .flat_map(|a| anchors.iter().map(move |b| a.distance_to(b)))
                .fold(0.0f64, f64::max);
            if spread < 5.0 {
                continue;
            }
            let truth = p(rng.next_range(2.0, 18.0), rng.next_range(2.0, 18.0));
            let ranges: Vec<(Position2D, f64)> =
                anchors.iter().map(|a| (*a, a.distance_to(&truth))).collect();
            let res = multilaterate(&ranges, None).unwrap();
            assert!(
                res.position.distance_to(&truth) < 1e-6,
                "missed truth {truth:?} by {}",
                res.position.distance_to(&truth)
            );
            solved += 1;
        }
        assert!(solved > 100);
    }
}
