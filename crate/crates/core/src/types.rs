//! Shared geometric and time-series primitives plus deterministic randomness.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A 2D position in meters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Position2D {
    pub x: f64,
    pub y: f64,
}

impl Position2D {
    pub fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn distance_to(&self, other: &Position2D) -> f64 {
        ((self.x - other.x).powi(2) + (self.y - other.y).powi(2)).sqrt()
    }

    pub fn is_finite(&self) -> bool {
        self.x.is_finite() && self.y.is_finite()
    }
}

impl std::ops::Add for Position2D {
    type Output = Position2D;
    fn add(self, rhs: Position2D) -> Position2D {
        Position2D::new(self.x + rhs.x, self.y + rhs.y)
    }
}

impl std::ops::Sub for Position2D {
    type Output = Position2D;
    fn sub(self, rhs: Position2D) -> Position2D {
        Position2D::new(self.x - rhs.x, self.y - rhs.y)
    }
}

/// A payload stamped with a time in seconds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimedSample<T> {
    pub t: f64,
    pub value: T,
}

impl<T> TimedSample<T> {
    pub fn new(t: f64, value: T) -> Self {
        Self { t, value }
    }
}

/// A timestamped 2D path with strictly increasing timestamps.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    samples: Vec<TimedSample<Position2D>>,
}

impl Trajectory {
    pub fn new(samples: Vec<TimedSample<Position2D>>) -> Result<Self> {
        if samples.is_empty() {
            return Err(Error::invalid("trajectory must contain at least one sample"));
        }
        for pair in samples.windows(2) {
            if !(pair[1].t > pair[0].t) {
                return Err(Error::invalid(format!(
                    "trajectory timestamps must be strictly increasing: {} then {}",
                    pair[0].t, pair[1].t
                )));
            }
        }
        for s in &samples {
            if !s.t.is_finite() || s.t < 0.0 || !s.value.is_finite() {
                return Err(Error::invalid("trajectory samples must be finite with t >= 0"));
            }
        }
        Ok(Self { samples })
    }

    pub fn samples(&self) -> &[TimedSample<Position2D>] {
        &self.samples
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn start_time(&self) -> f64 {
        self.samples[0].t
    }

    pub fn end_time(&self) -> f64 {
        self.samples[self.samples.len() - 1].t
    }

    /// Linear interpolation of the path at time `t`. Exact sample values are
    /// returned when `t` matches a sample timestamp.
    pub fn interpolate(&self, t: f64) -> Result<Position2D> {
        if t < self.start_time() || t > self.end_time() {
            return Err(Error::OutOfRange(format!(
                "t={} outside trajectory span [{}, {}]",
                t,
                self.start_time(),
                self.end_time()
            )));
        }
        // partition_point returns the first index with sample.t > t.
        let hi = self.samples.partition_point(|s| s.t <= t);
        if hi == 0 {
            return Ok(self.samples[0].value);
        }
        let lo = hi - 1;
        let a = &self.samples[lo];
        if a.t == t || hi == self.samples.len() {
            return Ok(a.value);
        }
        let b = &self.samples[hi];
        let w = (t - a.t) / (b.t - a.t);
        Ok(Position2D::new(
            a.value.x + w * (b.value.x - a.value.x),
            a.value.y + w * (b.value.y - a.value.y),
        ))
    }

    /// Pairs every sample of `self` whose timestamp lies within `other`'s span
    /// with `other` linearly interpolated at that timestamp. Samples outside
    /// the span are dropped; an empty intersection yields an empty list.
    ///
    /// `_tol` is reserved for a nearest-sample pairing mode and is currently
    /// ignored; interpolation is always linear.
    pub fn align_pairs(&self, other: &Trajectory, _tol: f64) -> Vec<(Position2D, Position2D)> {
        self.samples
            .iter()
            .filter(|s| s.t >= other.start_time() && s.t <= other.end_time())
            .map(|s| (s.value, other.interpolate(s.t).expect("t within span")))
            .collect()
    }
}

/// A fixed RF node with a known position.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Anchor {
    pub id: u32,
    pub x: f64,
    pub y: f64,
}

impl Anchor {
    pub fn position(&self) -> Position2D {
        Position2D::new(self.x, self.y)
    }
}

/// True when all points lie on a single line (within a relative tolerance).
pub fn are_collinear(points: &[Position2D]) -> bool {
    if points.len() < 3 {
        return true;
    }
    // Use the most distant pair as the baseline, then test perpendicular
    // offsets against it.
    let mut best = (0usize, 1usize, 0.0f64);
    for i in 0..points.len() {
        for j in (i + 1)..points.len() {
            let d = points[i].distance_to(&points[j]);
            if d > best.2 {
                best = (i, j, d);
            }
        }
    }
    let (i, j, base_len) = best;
    if base_len == 0.0 {
        return true;
    }
    let a = points[i];
    let dir = points[j] - a;
    let tol = 1e-9 * base_len.max(1.0);
    points.iter().all(|p| {
        let v = *p - a;
        (dir.x * v.y - dir.y * v.x).abs() / base_len <= tol
    })
}

/// The deployed set of anchors. Anchors are stored sorted by id.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnchorLayout {
    anchors: Vec<Anchor>,
}

impl AnchorLayout {
    pub fn new(mut anchors: Vec<Anchor>) -> Result<Self> {
        if anchors.len() < 3 {
            return Err(Error::invalid(format!(
                "anchor layout needs at least 3 anchors, got {}",
                anchors.len()
            )));
        }
        anchors.sort_by_key(|a| a.id);
        if anchors.windows(2).any(|w| w[0].id == w[1].id) {
            return Err(Error::invalid("anchor ids must be unique"));
        }
        if anchors.iter().any(|a| !a.position().is_finite()) {
            return Err(Error::invalid("anchor positions must be finite"));
        }
        let positions: Vec<Position2D> = anchors.iter().map(|a| a.position()).collect();
        if are_collinear(&positions) {
            return Err(Error::Geometry("anchor positions are collinear".into()));
        }
        Ok(Self { anchors })
    }

    pub fn anchors(&self) -> &[Anchor] {
        &self.anchors
    }

    pub fn len(&self) -> usize {
        self.anchors.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn by_id(&self, id: u32) -> Option<&Anchor> {
        self.anchors.iter().find(|a| a.id == id)
    }

    /// Geometric centroid of the anchor positions.
    pub fn centroid(&self) -> Position2D {
        let n = self.anchors.len() as f64;
        let (sx, sy) = self
            .anchors
            .iter()
            .fold((0.0, 0.0), |(sx, sy), a| (sx + a.x, sy + a.y));
        Position2D::new(sx / n, sy / n)
    }
}

const GAMMA: u64 = 0x9E37_79B9_7F4A_7C15;

/// SplitMix64 finalizer (Steele, Lea & Flood; used by Java's
/// SplittableRandom). Bijective avalanche mix of a 64-bit word.
#[inline]
fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn fnv1a64(bytes: &[u8]) -> u64 {
    let mut h = 0xCBF2_9CE4_8422_2325u64;
    for &b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01B3);
    }
    h
}

/// Deterministic counter-based random stream.
///
/// Draw `k` of stream `(seed, stream_id)` is
/// `mix64(key + k * GAMMA)` with `key = mix64(seed) + mix64(stream_id)`,
/// where `mix64` is the SplitMix64 finalizer and `GAMMA` the 64-bit golden
/// ratio. The output is a pure function of `(seed, stream_id, counter)`, so
/// sequences are reproducible across platforms and adding a new named stream
/// never perturbs existing ones.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RngStream {
    seed: u64,
    stream_id: u64,
    counter: u64,
}

impl RngStream {
    pub fn new(seed: u64, stream_id: u64) -> Self {
        Self { seed, stream_id, counter: 0 }
    }

    /// Stream identified by a name, e.g. `"sim.rf.range"`. The id is the
    /// FNV-1a hash of the name bytes.
    pub fn named(seed: u64, name: &str) -> Self {
        Self::new(seed, fnv1a64(name.as_bytes()))
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn stream_id(&self) -> u64 {
        self.stream_id
    }

    pub fn counter(&self) -> u64 {
        self.counter
    }

    #[inline]
    pub fn next_u64(&mut self) -> u64 {
        self.counter += 1;
        let key = mix64(self.seed).wrapping_add(mix64(self.stream_id));
        mix64(key.wrapping_add(self.counter.wrapping_mul(GAMMA)))
    }

    /// Uniform draw in [0, 1) with 53 bits of precision.
    #[inline]
    pub fn next_uniform(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Deterministic Gaussian draw via the Box-Muller transform; consumes
    /// exactly two u64 draws. `sigma = 0` returns `mu` exactly.
    pub fn next_gauss(&mut self, mu: f64, sigma: f64) -> Result<f64> {
        if sigma < 0.0 || !sigma.is_finite() {
            return Err(Error::invalid(format!("sigma must be >= 0, got {sigma}")));
        }
        let u1 = 1.0 - self.next_uniform(); // (0, 1]; avoids ln(0)
        let u2 = self.next_uniform();
        let z = (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos();
        Ok(mu + sigma * z)
    }

    /// Exponentially distributed draw with the given mean (inverse CDF).
    pub fn next_exp(&mut self, mean: f64) -> Result<f64> {
        if mean < 0.0 || !mean.is_finite() {
            return Err(Error::invalid(format!("mean must be >= 0, got {mean}")));
        }
        let u = self.next_uniform();
        Ok(mean * -(1.0 - u).ln())
    }

    /// Uniform draw in [lo, hi).
    pub fn next_range(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.next_uniform()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn traj(points: &[(f64, (f64, f64))]) -> Trajectory {
        Trajectory::new(
            points
                .iter()
                .map(|&(t, (x, y))| TimedSample::new(t, Position2D::new(x, y)))
                .collect(),
        )
        .unwrap()
    }

    #[test]
    fn interpolate_midpoint() {
        let tr = traj(&[(0.0, (0.0, 0.0)), (1.0, (2.0, 0.0))]);
        let p = tr.interpolate(0.5).unwrap();
        assert_eq!((p.x, p.y), (1.0, 0.0));
    }

    #[test]
    fn interpolate_endpoint_exact() {
        let tr = traj(&[(0.0, (0.0, 0.0)), (1.0, (2.0, 0.0))]);
        let p = tr.interpolate(1.0).unwrap();
        assert_eq!((p.x, p.y), (2.0, 0.0));
    }

    #[test]
    fn interpolate_out_of_range() {
        let tr = traj(&[(0.0, (0.0, 0.0)), (1.0, (2.0, 0.0))]);
        assert!(matches!(tr.interpolate(2.0), Err(Error::OutOfRange(_))));
    }

    #[test]
    fn align_identical_trajectories() {
        let tr = traj(&[(0.0, (0.0, 0.0)), (1.0, (1.0, 2.0)), (2.0, (3.0, 3.0))]);
        let pairs = tr.align_pairs(&tr, 0.0);
        assert_eq!(pairs.len(), 3);
        for (a, b) in pairs {
            assert_eq!(a.distance_to(&b), 0.0);
        }
    }

    #[test]
    fn align_span_intersection() {
        let a = traj(&(0..=10).map(|i| (i as f64, (i as f64, 0.0))).collect::<Vec<_>>());
        let b = traj(&[(5.0, (5.0, 0.0)), (8.0, (8.0, 0.0))]);
        let pairs = a.align_pairs(&b, 0.0);
        assert_eq!(pairs.len(), 4); // t = 5, 6, 7, 8
    }

    #[test]
    fn align_rate_mismatch_count() {
        // a at 10 Hz, b at 15 Hz over the same [0, 2] s span.
        let a = traj(&(0..=20).map(|i| (i as f64 / 10.0, (i as f64, 0.0))).collect::<Vec<_>>());
        let b = traj(&(0..=30).map(|i| (i as f64 / 15.0, (0.0, i as f64))).collect::<Vec<_>>());
        assert_eq!(a.align_pairs(&b, 0.0).len(), a.len());
    }

    #[test]
    fn gauss_zero_sigma_is_mu() {
        let mut rng = RngStream::named(7, "test");
        assert_eq!(rng.next_gauss(3.25, 0.0).unwrap(), 3.25);
    }

    #[test]
    fn gauss_negative_sigma_rejected() {
        let mut rng = RngStream::named(7, "test");
        assert!(rng.next_gauss(0.0, -1.0).is_err());
    }

    #[test]
    fn rng_deterministic_across_instances() {
        let mut a = RngStream::new(42, 9);
        let mut b = RngStream::new(42, 9);
        for _ in 0..100 {
            assert_eq!(a.next_u64(), b.next_u64());
        }
        let mut c = RngStream::new(42, 10);
        assert_ne!(RngStream::new(42, 9).next_u64(), c.next_u64());
    }

    #[test]
    fn gauss_sample_moments() {
        let mut rng = RngStream::named(123, "moments");
        let n = 100_000;
        let draws: Vec<f64> = (0..n).map(|_| rng.next_gauss(0.0, 1.0).unwrap()).collect();
        let mean = draws.iter().sum::<f64>() / n as f64;
        let var = draws.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n as f64;
        assert!(mean.abs() < 0.02, "mean {mean}");
        assert!((var.sqrt() - 1.0).abs() < 0.02, "std {}", var.sqrt());
    }

    #[test]
    fn collinear_detection() {
        let line: Vec<Position2D> =
            (0..5).map(|i| Position2D::new(i as f64 * 2.0, i as f64 * 3.0)).collect();
        assert!(are_collinear(&line));
        let mut bent = line.clone();
        bent[2].y += 0.5;
        assert!(!are_collinear(&bent));
    }

    #[test]
    fn layout_validation() {
        let mk = |pts: &[(u32, f64, f64)]| {
            AnchorLayout::new(pts.iter().map(|&(id, x, y)| Anchor { id, x, y }).collect())
        };
        assert!(mk(&[(0, 0.0, 0.0), (1, 1.0, 0.0)]).is_err());
        assert!(mk(&[(0, 0.0, 0.0), (1, 5.0, 0.0), (2, 10.0, 0.0)]).is_err());
        assert!(mk(&[(0, 0.0, 0.0), (0, 5.0, 0.0), (2, 1.0, 7.0)]).is_err());
        let ok = mk(&[(3, 0.0, 0.0), (1, 5.0, 0.0), (2, 1.0, 7.0)]).unwrap();
        assert_eq!(ok.anchors()[0].id, 1); // sorted by id
    }

    proptest! {
        #[test]
        fn interpolate_exact_at_sample_times(ts in proptest::collection::vec(0.01f64..10.0, 2..20)) {
            let mut t_acc = 0.0;
            let samples: Vec<TimedSample<Position2D>> = ts.iter().enumerate().map(|(i, dt)| {
                t_acc += dt;
                TimedSample::new(t_acc, Position2D::new(i as f64 * 1.5, (i as f64).sin()))
            }).collect();
            let tr = Trajectory::new(samples.clone()).unwrap();
            for s in &samples {
                let p = tr.interpolate(s.t).unwrap();
                prop_assert_eq!(p, s.value);
            }
        }

        #[test]
        fn self_alignment_zero_distance(n in 2usize..30, seed in 0u64..1000) {
            let mut rng = RngStream::new(seed, 0);
            let samples: Vec<TimedSample<Position2D>> = (0..n).map(|i| {
                TimedSample::new(i as f64 * 0.1, Position2D::new(rng.next_range(-5.0, 5.0), rng.next_range(-5.0, 5.0)))
            }).collect();
            let tr = Trajectory::new(samples).unwrap();
            for (a, b) in tr.align_pairs(&tr, 0.0) {
                prop_assert!(a.distance_to(&b) < 1e-12);
            }
        }
    }
}
