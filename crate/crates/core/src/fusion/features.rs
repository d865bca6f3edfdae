//! Per-epoch feature extraction: the algorithmic RF and VO paths feeding
//! the fusion model.

use crate::error::{Error, Result};
use crate::rf::{compose_rf_features, multilaterate, AnchorSelectorModel, RfFeature};
use crate::sim::trace::Trace;
use crate::types::Position2D;
use crate::vo::{compose_vo_features, PolarStep, VoFeature};

#[derive(Debug, Clone)]
pub struct EpochFeatures {
    pub t: f64,
    pub rf: RfFeature,
    pub vo: VoFeature,
    /// Ground-truth position at this epoch (training target).
    pub target: Position2D,
}

#[derive(Debug, Clone)]
pub struct FeatureSet {
    pub epochs: Vec<EpochFeatures>,
    pub rf_dim: usize,
    pub vo_dim: usize,
}

/// Runs the RF path (anchor selection then multilateration) and the VO
/// path over every epoch. With `selector = None` the anchor filter is
/// bypassed: all anchors feed both the solver and the feature vector
/// (K = n), which is the no-anchor-selection ablation.
pub fn extract_features(trace: &Trace, selector: Option<&AnchorSelectorModel>) -> Result<FeatureSet> {
    let n = trace.layout.len();
    let k = selector.map_or(n, |s| s.k);
    let m_ref = trace.noise.m_well_lit;
    let mut epochs = Vec::with_capacity(trace.epochs());
    let mut last_position: Option<Position2D> = None;

    for ((gt, rf), vo) in trace.gt.samples().iter().zip(&trace.rf).zip(&trace.vo) {
        let mut entries = rf.entries.clone();
        entries.sort_by_key(|e| e.id);

        let selected_ids: Vec<u32> = match selector {
            Some(model) => model.select(rf)?,
            None => entries.iter().map(|e| e.id).collect(),
        };
        let triples: Vec<(u32, f64, f64)> = entries
            .iter()
            .filter(|e| selected_ids.contains(&e.id))
            .map(|e| (e.id, e.range, e.power))
            .collect();
        let ranges: Vec<(Position2D, f64)> = triples
            .iter()
            .map(|(id, r, _)| (trace.layout.by_id(*id).expect("selected id").position(), *r))
            .collect();

        // Selected subsets can be geometrically degenerate; fall back to
        // the full anchor set, then to the previous fix.
        let mlr = match multilaterate(&ranges, last_position) {
            Ok(r) => r,
            Err(_) => {
                let all: Vec<(Position2D, f64)> = entries
                    .iter()
                    .map(|e| (trace.layout.by_id(e.id).expect("layout id").position(), e.range))
                    .collect();
                multilaterate(&all, last_position)?
            }
        };
        last_position = Some(mlr.position);

        let rf_feature = compose_rf_features(&mlr, &triples, k)?;
        let step = PolarStep { r: vo.r, theta: vo.theta };
        let vo_feature = compose_vo_features(&step, vo.m, m_ref)?;
        epochs.push(EpochFeatures { t: rf.t, rf: rf_feature, vo: vo_feature, target: gt.value });
    }

    Ok(FeatureSet { epochs, rf_dim: RfFeature::expected_len(k), vo_dim: VoFeature::LEN })
}

/// Raw blackbox inputs: every anchor's range and power, no algorithmic
/// localization. Layout `[R_1..R_n, P_1..P_n]` in ascending-id order.
pub fn extract_raw_rf(trace: &Trace) -> Vec<Vec<f64>> {
    trace
        .rf
        .iter()
        .map(|rf| {
            let mut entries = rf.entries.clone();
            entries.sort_by_key(|e| e.id);
            let mut v: Vec<f64> = entries.iter().map(|e| e.range).collect();
            v.extend(entries.iter().map(|e| e.power));
            v
        })
        .collect()
}

/// One training window: channel-major `[dim, window]` matrices plus the
/// target position at the window's final epoch.
#[derive(Debug, Clone)]
pub struct Window {
    pub t_end: f64,
    /// RF input, `rf_dim x L`, row-major.
    pub rf: Vec<f64>,
    /// VO input, `vo_dim x L`, row-major.
    pub vo: Vec<f64>,
    pub target: [f64; 2],
}

/// Slides a length-`window` cursor over the epochs; one window per end
/// epoch from `window - 1` onward.
pub fn build_windows(features: &FeatureSet, window: usize) -> Result<Vec<Window>> {
    if window < 2 {
        return Err(Error::invalid(format!("window length must be >= 2, got {window}")));
    }
    let n = features.epochs.len();
    if n < window {
        return Err(Error::invalid(format!(
            "trace has {n} epochs, shorter than the window length {window}"
        )));
    }
    let (rf_dim, vo_dim) = (features.rf_dim, features.vo_dim);
    let mut out = Vec::with_capacity(n - window + 1);
    for end in (window - 1)..n {
        let start = end + 1 - window;
        let mut rf = vec![0.0; rf_dim * window];
        let mut vo = vec![0.0; vo_dim * window];
        for (tau, e) in features.epochs[start..=end].iter().enumerate() {
            if e.rf.len() != rf_dim {
                return Err(Error::shape(format!(
                    "rf feature length {} != {rf_dim}",
                    e.rf.len()
                )));
            }
            for c in 0..rf_dim {
                rf[c * window + tau] = e.rf.as_slice()[c];
            }
            for c in 0..vo_dim {
                vo[c * window + tau] = e.vo.as_slice()[c];
            }
        }
        let last = &features.epochs[end];
        out.push(Window { t_end: last.t, rf, vo, target: [last.target.x, last.target.y] });
    }
    Ok(out)
}
