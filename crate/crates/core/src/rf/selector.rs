//! Best-anchor labeling and the classifier-chain anchor selector.
//!
//! Labels come from brute force: localize with every K-subset of anchors
//! and mark the subset landing closest to ground truth. The selector is a
//! chain of binary logistic links (ascending anchor id), each seeing all
//! ranges, all powers, and the labels (training) or predictions
//! (inference) of the previous links.

use itertools::Itertools;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rf::solver::multilaterate;
use crate::sim::trace::{RfSample, Trace};
use crate::types::{AnchorLayout, Position2D, RngStream};

/// One labeled epoch: per-anchor ranges and powers in ascending-id order,
/// plus the best-subset membership vector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectorSample {
    pub ranges: Vec<f64>,
    pub powers: Vec<f64>,
    pub labels: Vec<bool>,
}

/// Marks the K-subset of anchors whose multilateration lands closest to
/// ground truth. Subsets are scanned in lexicographic anchor-id order and
/// ties keep the first, so the result is deterministic. Subsets that fail
/// geometry checks are skipped.
pub fn label_best_anchors(
    sample: &RfSample,
    layout: &AnchorLayout,
    gt: &Position2D,
    k: usize,
) -> Result<Vec<bool>> {
    let n = layout.len();
    if k < 3 || k > n {
        return Err(Error::invalid(format!("need 3 <= K <= {n}, got {k}")));
    }
    if sample.entries.len() != n {
        return Err(Error::invalid("rf sample does not cover the anchor layout"));
    }
    // Entries in ascending anchor id order, aligned with the layout.
    let mut entries = sample.entries.clone();
    entries.sort_by_key(|e| e.id);

    let mut best: Option<(f64, Vec<usize>)> = None;
    for subset in (0..n).combinations(k) {
        let ranges: Vec<(Position2D, f64)> = subset
            .iter()
            .map(|&i| (layout.anchors()[i].position(), entries[i].range))
            .collect();
        let res = match multilaterate(&ranges, None) {
            Ok(r) => r,
            Err(_) => continue,
        };
        let err = res.position.distance_to(gt);
        if best.as_ref().map_or(true, |(e, _)| err < *e) {
            best = Some((err, subset));
        }
    }
    let (_, subset) = best.ok_or_else(|| {
        Error::Geometry("no K-subset of anchors admits multilateration".into())
    })?;
    let mut labels = vec![false; n];
    for i in subset {
        labels[i] = true;
    }
    Ok(labels)
}

/// Brute-force labels for every epoch of a trace.
pub fn label_trace(trace: &Trace, k: usize) -> Result<Vec<SelectorSample>> {
    let mut out = Vec::with_capacity(trace.epochs());
    for (gt, rf) in trace.gt.samples().iter().zip(&trace.rf) {
        let labels = label_best_anchors(rf, &trace.layout, &gt.value, k)?;
        let mut entries = rf.entries.clone();
        entries.sort_by_key(|e| e.id);
        out.push(SelectorSample {
            ranges: entries.iter().map(|e| e.range).collect(),
            powers: entries.iter().map(|e| e.power).collect(),
            labels,
        });
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct ChainLink {
    /// Weights over [standardized ranges, standardized powers,
    /// previous-link labels, bias].
    weights: Vec<f64>,
    /// Set for single-class training labels; the link then predicts that
    /// class regardless of input.
    constant: Option<bool>,
}

/// Classifier-chain anchor selector, serializable as version-tagged JSON.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnchorSelectorModel {
    pub version: u32,
    /// Chain order: ascending anchor id.
    pub anchor_ids: Vec<u32>,
    pub k: usize,
    feat_mean: Vec<f64>,
    feat_std: Vec<f64>,
    links: Vec<ChainLink>,
}

#[derive(Debug, Clone, Copy)]
pub struct SelectorTrainConfig {
    pub learning_rate: f64,
    pub epochs: usize,
    pub l2: f64,
}

impl Default for SelectorTrainConfig {
    fn default() -> Self {
        Self { learning_rate: 1.0, epochs: 2500, l2: 1e-6 }
    }
}

fn sigmoid(z: f64) -> f64 {
    1.0 / (1.0 + (-z).exp())
}

/// Per-link log-loss over the dataset (used by tests to see monotone
/// descent and by training for reporting).
fn link_log_loss(xs: &[Vec<f64>], ys: &[f64], w: &[f64]) -> f64 {
    let mut loss = 0.0;
    for (x, y) in xs.iter().zip(ys) {
        let z: f64 = x.iter().zip(w).map(|(a, b)| a * b).sum();
        let p = sigmoid(z).clamp(1e-12, 1.0 - 1e-12);
        loss -= y * p.ln() + (1.0 - y) * (1.0 - p).ln();
    }
    loss / xs.len() as f64
}

fn fit_link(
    xs: &[Vec<f64>],
    ys: &[f64],
    cfg: &SelectorTrainConfig,
    rng: &mut RngStream,
) -> (Vec<f64>, Vec<f64>) {
    let dim = xs[0].len();
    let mut w: Vec<f64> = (0..dim).map(|_| rng.next_range(-0.01, 0.01)).collect();
    let m = xs.len() as f64;
    let mut losses = Vec::with_capacity(cfg.epochs);
    for _ in 0..cfg.epochs {
        losses.push(link_log_loss(xs, ys, &w));
        let mut grad = vec![0.0; dim];
        for (x, y) in xs.iter().zip(ys) {
            let z: f64 = x.iter().zip(&w).map(|(a, b)| a * b).sum();
            let err = sigmoid(z) - y;
            for (g, xv) in grad.iter_mut().zip(x) {
                *g += err * xv;
            }
        }
        for (wv, g) in w.iter_mut().zip(&grad) {
            *wv -= cfg.learning_rate * (g / m + cfg.l2 * *wv);
        }
    }
    (w, losses)
}

/// Outcome of selector training, including per-link loss curves and any
/// degenerate-link warnings.
pub struct SelectorTraining {
    pub model: AnchorSelectorModel,
    pub link_losses: Vec<Vec<f64>>,
    pub warnings: Vec<String>,
}

/// Fits the chain on labeled epochs. Each link trains on the true labels
/// of its predecessors (teacher forcing); inference feeds predictions
/// instead. Identical seeds give identical weights.
pub fn train_anchor_selector(
    dataset: &[SelectorSample],
    anchor_ids: &[u32],
    k: usize,
    cfg: &SelectorTrainConfig,
    rng: &mut RngStream,
) -> Result<SelectorTraining> {
    if dataset.is_empty() {
        return Err(Error::invalid("selector training set is empty"));
    }
    let n = anchor_ids.len();
    if dataset.iter().any(|s| s.ranges.len() != n || s.powers.len() != n || s.labels.len() != n) {
        return Err(Error::invalid("selector samples disagree on anchor count"));
    }

    // Standardize ranges and powers with training statistics.
    let mut feat_mean = vec![0.0; 2 * n];
    let mut feat_std = vec![0.0; 2 * n];
    let m = dataset.len() as f64;
    for s in dataset {
        for i in 0..n {
            feat_mean[i] += s.ranges[i] / m;
            feat_mean[n + i] += s.powers[i] / m;
        }
    }
    for s in dataset {
        for i in 0..n {
            feat_std[i] += (s.ranges[i] - feat_mean[i]).powi(2) / m;
            feat_std[n + i] += (s.powers[i] - feat_mean[n + i]).powi(2) / m;
        }
    }
    for v in &mut feat_std {
        *v = v.sqrt().max(1e-9);
    }

    let base_features = |s: &SelectorSample| -> Vec<f64> {
        let mut x = Vec::with_capacity(2 * n);
        for i in 0..n {
            x.push((s.ranges[i] - feat_mean[i]) / feat_std[i]);
        }
        for i in 0..n {
            x.push((s.powers[i] - feat_mean[n + i]) / feat_std[n + i]);
        }
        x
    };

    let mut links = Vec::with_capacity(n);
    let mut link_losses = Vec::with_capacity(n);
    let mut warnings = Vec::new();
    for link_idx in 0..n {
        let ys: Vec<f64> =
            dataset.iter().map(|s| if s.labels[link_idx] { 1.0 } else { 0.0 }).collect();
        let positives = ys.iter().filter(|&&y| y > 0.5).count();
        if positives == 0 || positives == dataset.len() {
            let class = positives > 0;
            warnings.push(format!(
                "anchor {} has a single training class ({class}); link is a constant predictor",
                anchor_ids[link_idx]
            ));
            links.push(ChainLink { weights: Vec::new(), constant: Some(class) });
            link_losses.push(Vec::new());
            continue;
        }
        let xs: Vec<Vec<f64>> = dataset
            .iter()
            .map(|s| {
                let mut x = base_features(s);
                for prev in 0..link_idx {
                    x.push(if s.labels[prev] { 1.0 } else { 0.0 });
                }
                x.push(1.0); // bias
                x
            })
            .collect();
        let (w, losses) = fit_link(&xs, &ys, cfg, rng);
        links.push(ChainLink { weights: w, constant: None });
        link_losses.push(losses);
    }

    Ok(SelectorTraining {
        model: AnchorSelectorModel {
            version: 1,
            anchor_ids: anchor_ids.to_vec(),
            k,
            feat_mean,
            feat_std,
            links,
        },
        link_losses,
        warnings,
    })
}

impl AnchorSelectorModel {
    /// Per-anchor selection scores in chain order, feeding each link the
    /// hard predictions of its predecessors.
    pub fn scores(&self, ranges: &[f64], powers: &[f64]) -> Result<Vec<f64>> {
        let n = self.anchor_ids.len();
        if ranges.len() != n || powers.len() != n {
            return Err(Error::invalid(format!(
                "selector expects {n} ranges and powers, got {} and {}",
                ranges.len(),
                powers.len()
            )));
        }
        let mut base = Vec::with_capacity(2 * n);
        for i in 0..n {
            base.push((ranges[i] - self.feat_mean[i]) / self.feat_std[i]);
        }
        for i in 0..n {
            base.push((powers[i] - self.feat_mean[n + i]) / self.feat_std[n + i]);
        }
        let mut scores = Vec::with_capacity(n);
        let mut hard = Vec::with_capacity(n);
        for (link_idx, link) in self.links.iter().enumerate() {
            let p = match link.constant {
                Some(class) => {
                    if class {
                        1.0
                    } else {
                        0.0
                    }
                }
                None => {
                    let mut x = base.clone();
                    for &h in hard.iter().take(link_idx) {
                        x.push(h);
                    }
                    x.push(1.0);
                    let z: f64 = x.iter().zip(&link.weights).map(|(a, b)| a * b).sum();
                    sigmoid(z)
                }
            };
            hard.push(if p >= 0.5 { 1.0 } else { 0.0 });
            scores.push(p);
        }
        Ok(scores)
    }

    /// Top-K anchor ids by score, ties broken toward lower ids. Equal
    /// scores therefore yield the K lowest ids.
    pub fn select(&self, sample: &RfSample) -> Result<Vec<u32>> {
        let mut entries = sample.entries.clone();
        entries.sort_by_key(|e| e.id);
        if entries.iter().map(|e| e.id).ne(self.anchor_ids.iter().copied()) {
            return Err(Error::invalid("rf sample anchors do not match the selector's set"));
        }
        let ranges: Vec<f64> = entries.iter().map(|e| e.range).collect();
        let powers: Vec<f64> = entries.iter().map(|e| e.power).collect();
        let scores = self.scores(&ranges, &powers)?;
        let mut order: Vec<usize> = (0..scores.len()).collect();
        order.sort_by(|&a, &b| {
            scores[b].partial_cmp(&scores[a]).unwrap().then(self.anchor_ids[a].cmp(&self.anchor_ids[b]))
        });
        let mut chosen: Vec<u32> = order.iter().take(self.k).map(|&i| self.anchor_ids[i]).collect();
        chosen.sort_unstable();
        Ok(chosen)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("selector model serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Parse { line: 0, msg: e.to_string() })
    }

    pub fn save(&self, path: &std::path::Path) -> Result<()> {
        std::fs::write(path, self.to_json())?;
        Ok(())
    }

    pub fn load(path: &std::path::Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }
}
