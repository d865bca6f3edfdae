//! Comparison suite: RF-only multilateration, VO-only dead reckoning,
//! EKF fusion, and the pure-learning blackbox model.

pub mod blackbox;
pub mod ekf;

pub use blackbox::{
    predict_blackbox, train_blackbox, BlackboxConfig, BlackboxModel, BlackboxTraining,
};
pub use ekf::{ekf_fuse, EkfConfig};

use crate::error::{Error, Result};
use crate::rf::{multilaterate, AnchorSelectorModel};
use crate::sim::trace::Trace;
use crate::types::{Position2D, TimedSample, Trajectory};
use crate::vo::{integrate_steps, DeadReckonState, PolarStep};

/// Per-epoch multilateration, optionally behind the anchor selector.
/// Epochs whose geometry defeats the solver are dropped from the output.
pub fn rf_only(trace: &Trace, selector: Option<&AnchorSelectorModel>) -> Result<Trajectory> {
    let mut samples = Vec::with_capacity(trace.epochs());
    for rf in &trace.rf {
        let ids: Vec<u32> = match selector {
            Some(model) => model.select(rf)?,
            None => rf.entries.iter().map(|e| e.id).collect(),
        };
        let ranges: Vec<(Position2D, f64)> = rf
            .entries
            .iter()
            .filter(|e| ids.contains(&e.id))
            .map(|e| (trace.layout.by_id(e.id).expect("layout id").position(), e.range))
            .collect();
        match multilaterate(&ranges, None) {
            Ok(res) => samples.push(TimedSample::new(rf.t, res.position)),
            Err(Error::Geometry(_)) => continue,
            Err(e) => return Err(e),
        }
    }
    Trajectory::new(samples)
}

/// Dead-reckoned VO trajectory, origin-aligned to the ground-truth start
/// (position and initial heading), as odometry baselines conventionally
/// are.
pub fn vo_only(trace: &Trace) -> Result<Trajectory> {
    let gt = trace.gt.samples();
    let origin = DeadReckonState {
        position: gt[0].value,
        heading: initial_heading(trace)?,
    };
    let steps: Vec<TimedSample<PolarStep>> = trace
        .vo
        .iter()
        .skip(1)
        .map(|s| TimedSample::new(s.t, PolarStep { r: s.r, theta: s.theta }))
        .collect();
    integrate_steps(&origin, trace.vo[0].t, &steps)
}

/// Absolute heading of the first ground-truth movement; VO step streams
/// are relative, so origin alignment needs it.
pub fn initial_heading(trace: &Trace) -> Result<f64> {
    let gt = trace.gt.samples();
    for pair in gt.windows(2) {
        let dx = pair[1].value.x - pair[0].value.x;
        let dy = pair[1].value.y - pair[0].value.y;
        if dx * dx + dy * dy > 1e-18 {
            return Ok(dy.atan2(dx));
        }
    }
    Err(Error::invalid("ground truth never moves; initial heading undefined"))
}
