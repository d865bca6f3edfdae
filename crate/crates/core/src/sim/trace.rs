//! Simulated run container and its JSONL file format.
//!
//! A trace file holds one meta record followed by one record per epoch:
//!
//! ```text
//! {"kind":"meta","scenario":...,"seed":...,"anchors":[{"id":0,"x":..,"y":..},..],
//!  "rates":{"rf_hz":15.0,"vo_hz":15.0},"noise_model":{..},"environment":{..}}
//! {"kind":"epoch","t":0.0,"gt":{"x":..,"y":..},
//!  "rf":[{"id":0,"range":..,"power":..,"los":true},..],
//!  "vo":{"r":..,"theta":..,"m":568,"lost":false}}
//! ```

use std::io::{BufRead, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sim::env::Environment;
use crate::sim::noise::NoiseModel;
use crate::types::{Anchor, AnchorLayout, Position2D, TimedSample, Trajectory};

/// Per-anchor measurement in one RF epoch.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RfEntry {
    pub id: u32,
    /// Estimated range (m), always positive.
    pub range: f64,
    /// Received power (dBm).
    pub power: f64,
    /// Simulator truth: whether the anchor was line-of-sight.
    pub los: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RfSample {
    pub t: f64,
    pub entries: Vec<RfEntry>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VoSample {
    pub t: f64,
    /// Per-step translation (m), >= 0.
    pub r: f64,
    /// Per-step heading change (rad), wrapped to (-pi, pi].
    pub theta: f64,
    /// Matched keypoints.
    pub m: u32,
    /// True when tracking has failed; (r, theta) then repeat the last
    /// known step.
    pub lost: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Rates {
    pub rf_hz: f64,
    pub vo_hz: f64,
}

impl Default for Rates {
    fn default() -> Self {
        Self { rf_hz: 15.0, vo_hz: 15.0 }
    }
}

/// One simulated run: ground truth plus per-epoch RF and VO measurements
/// on a common epoch clock.
#[derive(Debug, Clone, PartialEq)]
pub struct Trace {
    pub scenario: String,
    pub seed: u64,
    pub layout: AnchorLayout,
    pub environment: Environment,
    pub gt: Trajectory,
    pub rf: Vec<RfSample>,
    pub vo: Vec<VoSample>,
    pub rates: Rates,
    pub noise: NoiseModel,
}

impl Trace {
    pub fn epochs(&self) -> usize {
        self.rf.len()
    }

    pub fn validate(&self) -> Result<()> {
        if self.rf.len() != self.vo.len() || self.rf.len() != self.gt.len() {
            return Err(Error::Validation(format!(
                "trace channels disagree: gt {}, rf {}, vo {}",
                self.gt.len(),
                self.rf.len(),
                self.vo.len()
            )));
        }
        let (t0, t1) = (self.gt.start_time(), self.gt.end_time());
        for s in &self.rf {
            if s.t < t0 || s.t > t1 {
                return Err(Error::Validation(format!(
                    "rf timestamp {} outside ground-truth span [{t0}, {t1}]",
                    s.t
                )));
            }
            if s.entries.len() != self.layout.len() {
                return Err(Error::Validation("rf sample missing anchor entries".into()));
            }
            if s.entries.iter().any(|e| e.range <= 0.0) {
                return Err(Error::Validation("rf range must be positive".into()));
            }
        }
        for s in &self.vo {
            if s.t < t0 || s.t > t1 || s.r < 0.0 {
                return Err(Error::Validation("vo sample out of range".into()));
            }
        }
        Ok(())
    }
}

#[derive(Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
enum TraceRecord {
    Meta {
        scenario: String,
        seed: u64,
        anchors: Vec<Anchor>,
        rates: Rates,
        noise_model: NoiseModel,
        environment: Environment,
    },
    Epoch {
        t: f64,
        gt: Position2D,
        rf: Vec<RfEntry>,
        vo: VoBody,
    },
}

#[derive(Serialize, Deserialize)]
struct VoBody {
    r: f64,
    theta: f64,
    m: u32,
    lost: bool,
}

pub fn write_trace_to(trace: &Trace, w: &mut impl Write) -> Result<()> {
    let meta = TraceRecord::Meta {
        scenario: trace.scenario.clone(),
        seed: trace.seed,
        anchors: trace.layout.anchors().to_vec(),
        rates: trace.rates,
        noise_model: trace.noise,
        environment: trace.environment.clone(),
    };
    writeln!(w, "{}", serde_json::to_string(&meta).map_err(json_io)?)?;
    for ((g, rf), vo) in trace.gt.samples().iter().zip(&trace.rf).zip(&trace.vo) {
        let rec = TraceRecord::Epoch {
            t: rf.t,
            gt: g.value,
            rf: rf.entries.clone(),
            vo: VoBody { r: vo.r, theta: vo.theta, m: vo.m, lost: vo.lost },
        };
        writeln!(w, "{}", serde_json::to_string(&rec).map_err(json_io)?)?;
    }
    Ok(())
}

pub fn write_trace(trace: &Trace, path: &Path) -> Result<()> {
    let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
    write_trace_to(trace, &mut f)
}

fn json_io(e: serde_json::Error) -> Error {
    Error::Numerical(format!("json encoding failed: {e}"))
}

pub fn read_trace_from(r: impl BufRead) -> Result<Trace> {
    let mut meta: Option<(String, u64, Vec<Anchor>, Rates, NoiseModel, Environment)> = None;
    let mut gt_samples = Vec::new();
    let mut rf = Vec::new();
    let mut vo = Vec::new();
    for (idx, line) in r.lines().enumerate() {
        let line_no = idx + 1;
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: TraceRecord = serde_json::from_str(&line)
            .map_err(|e| Error::Parse { line: line_no, msg: e.to_string() })?;
        match rec {
            TraceRecord::Meta { scenario, seed, anchors, rates, noise_model, environment } => {
                if meta.is_some() {
                    return Err(Error::Parse {
                        line: line_no,
                        msg: "duplicate meta record".into(),
                    });
                }
                meta = Some((scenario, seed, anchors, rates, noise_model, environment));
            }
            TraceRecord::Epoch { t, gt, rf: entries, vo: body } => {
                if meta.is_none() {
                    return Err(Error::Parse {
                        line: line_no,
                        msg: "epoch record before meta record".into(),
                    });
                }
                gt_samples.push(TimedSample::new(t, gt));
                rf.push(RfSample { t, entries });
                vo.push(VoSample { t, r: body.r, theta: body.theta, m: body.m, lost: body.lost });
            }
        }
    }
    let (scenario, seed, anchors, rates, noise, environment) =
        meta.ok_or(Error::Parse { line: 1, msg: "missing meta record".into() })?;
    let layout = AnchorLayout::new(anchors)?;
    let gt = Trajectory::new(gt_samples)?;
    let trace = Trace { scenario, seed, layout, environment, gt, rf, vo, rates, noise };
    trace.validate()?;
    Ok(trace)
}

pub fn read_trace(path: &Path) -> Result<Trace> {
    let f = std::io::BufReader::new(std::fs::File::open(path)?);
    read_trace_from(f)
}
