//! Simulated floor plan: bounds, RF occluders, and dim-light zones.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::types::Position2D;

/// Axis-aligned rectangle, serialized as `[min_x, min_y, max_x, max_y]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(into = "[f64; 4]", try_from = "[f64; 4]")]
pub struct Rect {
    pub min_x: f64,
    pub min_y: f64,
    pub max_x: f64,
    pub max_y: f64,
}

impl Rect {
    pub fn new(min_x: f64, min_y: f64, max_x: f64, max_y: f64) -> Result<Self> {
        let r = Rect { min_x, min_y, max_x, max_y };
        if !(min_x < max_x && min_y < max_y)
            || ![min_x, min_y, max_x, max_y].iter().all(|v| v.is_finite())
        {
            return Err(Error::invalid(format!("degenerate rectangle {r:?}")));
        }
        Ok(r)
    }

    pub fn width(&self) -> f64 {
        self.max_x - self.min_x
    }

    pub fn height(&self) -> f64 {
        self.max_y - self.min_y
    }

    pub fn contains(&self, p: &Position2D) -> bool {
        p.x >= self.min_x && p.x <= self.max_x && p.y >= self.min_y && p.y <= self.max_y
    }

    pub fn contains_rect(&self, other: &Rect) -> bool {
        other.min_x >= self.min_x
            && other.max_x <= self.max_x
            && other.min_y >= self.min_y
            && other.max_y <= self.max_y
    }

    pub fn center(&self) -> Position2D {
        Position2D::new((self.min_x + self.max_x) / 2.0, (self.min_y + self.max_y) / 2.0)
    }

    pub fn corners(&self) -> [Position2D; 4] {
        [
            Position2D::new(self.min_x, self.min_y),
            Position2D::new(self.max_x, self.min_y),
            Position2D::new(self.max_x, self.max_y),
            Position2D::new(self.min_x, self.max_y),
        ]
    }
}

impl From<Rect> for [f64; 4] {
    fn from(r: Rect) -> Self {
        [r.min_x, r.min_y, r.max_x, r.max_y]
    }
}

impl TryFrom<[f64; 4]> for Rect {
    type Error = Error;
    fn try_from(v: [f64; 4]) -> Result<Self> {
        Rect::new(v[0], v[1], v[2], v[3])
    }
}

/// Region of reduced visual feature density.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DimZone {
    pub rect: Rect,
    /// Multiplier on matched keypoints inside the zone, in (0, 1].
    pub keypoint_scale: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Environment {
    pub bounds: Rect,
    #[serde(default)]
    pub occluders: Vec<Rect>,
    #[serde(default)]
    pub dim_zones: Vec<DimZone>,
}

impl Environment {
    pub fn open(bounds: Rect) -> Self {
        Self { bounds, occluders: Vec::new(), dim_zones: Vec::new() }
    }

    pub fn validate(&self) -> Result<()> {
        for occ in &self.occluders {
            if !self.bounds.contains_rect(occ) {
                return Err(Error::Validation(format!(
                    "occluder {occ:?} lies outside bounds {:?}",
                    self.bounds
                )));
            }
        }
        for z in &self.dim_zones {
            if !self.bounds.contains_rect(&z.rect) {
                return Err(Error::Validation(format!(
                    "dim zone {:?} lies outside bounds {:?}",
                    z.rect, self.bounds
                )));
            }
            if !(z.keypoint_scale > 0.0 && z.keypoint_scale <= 1.0) {
                return Err(Error::Validation(format!(
                    "keypoint_scale must be in (0, 1], got {}",
                    z.keypoint_scale
                )));
            }
        }
        Ok(())
    }

    /// Smallest keypoint scale among dim zones containing `p` (1.0 outside).
    pub fn keypoint_scale_at(&self, p: &Position2D) -> f64 {
        self.dim_zones
            .iter()
            .filter(|z| z.rect.contains(p))
            .map(|z| z.keypoint_scale)
            .fold(1.0, f64::min)
    }
}

/// Liang-Barsky clip of the segment a-b against a closed rectangle.
/// Returns true when the *open* segment (endpoints excluded) meets the
/// rectangle; touching the boundary counts as contact.
fn segment_meets_rect(a: &Position2D, b: &Position2D, r: &Rect) -> bool {
    let (dx, dy) = (b.x - a.x, b.y - a.y);
    let mut t0 = 0.0f64;
    let mut t1 = 1.0f64;
    let mut clip = |p: f64, q: f64| -> bool {
        if p == 0.0 {
            return q >= 0.0;
        }
        let t = q / p;
        if p < 0.0 {
            if t > t1 {
                return false;
            }
            if t > t0 {
                t0 = t;
            }
        } else {
            if t < t0 {
                return false;
            }
            if t < t1 {
                t1 = t;
            }
        }
        true
    };
    if !(clip(-dx, a.x - r.min_x)
        && clip(dx, r.max_x - a.x)
        && clip(-dy, a.y - r.min_y)
        && clip(dy, r.max_y - a.y))
    {
        return false;
    }
    // Open-segment rule: the clipped interval must overlap (0, 1).
    t0 <= t1 && t1 > 0.0 && t0 < 1.0
}

/// LoS verdict for the open segment a-b: `crossings` counts occluder
/// rectangles the segment meets (boundary contact included), and
/// `los = (crossings == 0)`.
pub fn los_test(a: &Position2D, b: &Position2D, env: &Environment) -> (bool, u32) {
    let crossings =
        env.occluders.iter().filter(|r| segment_meets_rect(a, b, r)).count() as u32;
    (crossings == 0, crossings)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn p(x: f64, y: f64) -> Position2D {
        Position2D::new(x, y)
    }

    #[test]
    fn no_occluders_is_los() {
        let env = Environment::open(Rect::new(0.0, 0.0, 10.0, 10.0).unwrap());
        let (los, crossings) = los_test(&p(1.0, 1.0), &p(9.0, 9.0), &env);
        assert!(los);
        assert_eq!(crossings, 0);
    }

    #[test]
    fn centered_occluder_blocks() {
        let mut env = Environment::open(Rect::new(0.0, 0.0, 10.0, 10.0).unwrap());
        env.occluders.push(Rect::new(4.0, 4.0, 6.0, 6.0).unwrap());
        let (los, crossings) = los_test(&p(1.0, 5.0), &p(9.0, 5.0), &env);
        assert!(!los);
        assert_eq!(crossings, 1);
    }

    #[test]
    fn tangent_counts_as_crossing() {
        // Segment grazing the top edge y = 6 of the occluder.
        let mut env = Environment::open(Rect::new(0.0, 0.0, 10.0, 10.0).unwrap());
        env.occluders.push(Rect::new(4.0, 4.0, 6.0, 6.0).unwrap());
        let (los, crossings) = los_test(&p(1.0, 6.0), &p(9.0, 6.0), &env);
        assert!(!los);
        assert_eq!(crossings, 1);
    }

    #[test]
    fn miss_above_edge() {
        let mut env = Environment::open(Rect::new(0.0, 0.0, 10.0, 10.0).unwrap());
        env.occluders.push(Rect::new(4.0, 4.0, 6.0, 6.0).unwrap());
        let (los, crossings) = los_test(&p(1.0, 6.01), &p(9.0, 6.01), &env);
        assert!(los);
        assert_eq!(crossings, 0);
    }

    #[test]
    fn anchor_inside_box_is_nlos() {
        let mut env = Environment::open(Rect::new(0.0, 0.0, 10.0, 10.0).unwrap());
        env.occluders.push(Rect::new(4.0, 4.0, 6.0, 6.0).unwrap());
        let (los, _) = los_test(&p(5.0, 5.0), &p(9.0, 9.0), &env);
        assert!(!los);
    }

    #[test]
    fn endpoint_only_touch_is_not_crossing() {
        // Segment ending exactly on the boundary corner, otherwise outside.
        let mut env = Environment::open(Rect::new(0.0, 0.0, 10.0, 10.0).unwrap());
        env.occluders.push(Rect::new(4.0, 4.0, 6.0, 6.0).unwrap());
        let (los, _) = los_test(&p(1.0, 1.0), &p(4.0, 4.0), &env);
        assert!(los);
    }

    #[test]
    fn validation_rejects_out_of_bounds() {
        let mut env = Environment::open(Rect::new(0.0, 0.0, 10.0, 10.0).unwrap());
        env.occluders.push(Rect::new(8.0, 8.0, 12.0, 9.0).unwrap());
        assert!(env.validate().is_err());
    }

    #[test]
    fn keypoint_scale_lookup() {
        let mut env = Environment::open(Rect::new(0.0, 0.0, 10.0, 10.0).unwrap());
        env.dim_zones
            .push(DimZone { rect: Rect::new(0.0, 0.0, 5.0, 10.0).unwrap(), keypoint_scale: 0.4 });
        assert_eq!(env.keypoint_scale_at(&p(2.0, 2.0)), 0.4);
        assert_eq!(env.keypoint_scale_at(&p(7.0, 2.0)), 1.0);
    }
}
