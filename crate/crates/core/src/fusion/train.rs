//! Window datasets, normalization, and the Adam training loop shared by
//! the fusion and blackbox models.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fusion::features::{build_windows, extract_features, Window};
use crate::fusion::model::{
    forward_window, init_params, insert_params, Ablation, FusionConfig, FusionModel,
};
use crate::nn::{AdamState, ParamMap, Tape, Tensor, Var};
use crate::rf::AnchorSelectorModel;
use crate::sim::trace::Trace;
use crate::types::{Position2D, RngStream, TimedSample, Trajectory};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    /// Epochs per window (L).
    pub window: usize,
    pub batch: usize,
    pub learning_rate: f64,
    pub epochs: usize,
    /// Train / validation / test fractions; must sum to 1.
    pub split: [f64; 3],
    pub seed: u64,
    /// Fraction of the training windows actually used (training-size
    /// study); 1.0 = all.
    pub train_fraction: f64,
    /// Keep every `window_stride`-th training window; overlapping windows
    /// carry little extra signal, so 2 halves training cost cheaply.
    /// Validation, test, and inference always run at stride 1.
    pub window_stride: usize,
    pub ablation: Ablation,
    pub swap_attention_inputs: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            window: 8,
            batch: 32,
            learning_rate: 3e-3,
            epochs: 30,
            split: [0.7, 0.1, 0.2],
            seed: 1,
            train_fraction: 1.0,
            window_stride: 1,
            ablation: Ablation::None,
            swap_attention_inputs: false,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if (self.split.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
            return Err(Error::invalid(format!("split fractions must sum to 1: {:?}", self.split)));
        }
        if self.window < 2 {
            return Err(Error::invalid("window length must be >= 2"));
        }
        if !(self.train_fraction > 0.0 && self.train_fraction <= 1.0) {
            return Err(Error::invalid("train_fraction must be in (0, 1]"));
        }
        if self.batch == 0 || self.epochs == 0 || self.learning_rate <= 0.0 {
            return Err(Error::invalid("batch, epochs and learning_rate must be positive"));
        }
        if self.window_stride == 0 {
            return Err(Error::invalid("window_stride must be >= 1"));
        }
        Ok(())
    }
}

/// Contiguous-block split of each trace's windows (70/10/20 by default):
/// no window of the validation or test block overlaps a training epoch
/// from the future side.
pub struct SplitWindows {
    pub train: Vec<Window>,
    pub val: Vec<Window>,
    pub test: Vec<Window>,
}

pub fn split_windows(per_trace: Vec<Vec<Window>>, split: [f64; 3]) -> SplitWindows {
    let mut out = SplitWindows { train: Vec::new(), val: Vec::new(), test: Vec::new() };
    for windows in per_trace {
        let n = windows.len();
        let n_train = (n as f64 * split[0]).floor() as usize;
        let n_val = (n as f64 * split[1]).floor() as usize;
        for (i, w) in windows.into_iter().enumerate() {
            if i < n_train {
                out.train.push(w);
            } else if i < n_train + n_val {
                out.val.push(w);
            } else {
                out.test.push(w);
            }
        }
    }
    out
}

/// Per-feature means over the training windows (rf features then vo
/// features). Subtracting them everywhere is the dataset normalization;
/// the means live in the model so inference applies the same shift.
pub fn feature_means(train: &[Window], rf_dim: usize, vo_dim: usize, window: usize) -> Result<Vec<f64>> {
    if train.is_empty() {
        return Err(Error::invalid("cannot normalize an empty training split"));
    }
    let mut means = vec![0.0; rf_dim + vo_dim];
    let count = (train.len() * window) as f64;
    for w in train {
        for c in 0..rf_dim {
            for tau in 0..window {
                means[c] += w.rf[c * window + tau] / count;
            }
        }
        for c in 0..vo_dim {
            for tau in 0..window {
                means[rf_dim + c] += w.vo[c * window + tau] / count;
            }
        }
    }
    Ok(means)
}

/// Fixed per-feature scales: reciprocal std over the training windows,
/// clamped to avoid exploding constant features. Applied after mean
/// subtraction so meters, dBm, and keypoint fractions enter the encoders
/// at comparable magnitude.
pub fn feature_scales(
    train: &[Window],
    means: &[f64],
    rf_dim: usize,
    vo_dim: usize,
    window: usize,
) -> Vec<f64> {
    let mut var = vec![0.0; rf_dim + vo_dim];
    let count = (train.len() * window) as f64;
    for w in train {
        for c in 0..rf_dim {
            for tau in 0..window {
                var[c] += (w.rf[c * window + tau] - means[c]).powi(2) / count;
            }
        }
        for c in 0..vo_dim {
            for tau in 0..window {
                var[rf_dim + c] += (w.vo[c * window + tau] - means[rf_dim + c]).powi(2) / count;
            }
        }
    }
    var.iter().map(|v| 1.0 / v.sqrt().clamp(1e-3, 1e6)).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LogRow {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: f64,
}

pub fn log_to_csv(log: &[LogRow]) -> String {
    let mut out = String::from("epoch,train_loss,val_loss\n");
    for r in log {
        out.push_str(&format!("{},{},{}\n", r.epoch, r.train_loss, r.val_loss));
    }
    out
}

/// Builds the scalar loss for one window: squared Euclidean distance
/// between the prediction and the target.
fn window_loss(
    tape: &mut Tape,
    pred: Var,
    target: [f64; 2],
) -> Result<Var> {
    let t = tape.input(Tensor::vector(target.to_vec()));
    let d = tape.sub(pred, t)?;
    let sq = tape.mul(d, d)?;
    Ok(tape.sum(sq))
}

/// One model-agnostic training step driver. `forward` builds the
/// prediction for a normalized window on a fresh tape. Gradients are
/// averaged over the minibatch with an ordered reduction, so runs are
/// deterministic for a fixed seed regardless of thread count.
pub fn train_loop(
    mut params: ParamMap,
    forward: impl Fn(&mut Tape, &BTreeMap<String, Var>, &Window) -> Result<Var> + Sync,
    train: &[Window],
    val: &[Window],
    lr: f64,
    epochs: usize,
    batch: usize,
    seed: u64,
) -> Result<(ParamMap, Vec<LogRow>)> {
    if train.is_empty() || val.is_empty() {
        return Err(Error::invalid(format!(
            "training needs non-empty splits (train {}, val {})",
            train.len(),
            val.len()
        )));
    }
    let mut adam = AdamState::new(lr);
    let mut shuffle_rng = RngStream::named(seed, "train.shuffle");
    let mut order: Vec<usize> = (0..train.len()).collect();
    let mut best: Option<(f64, ParamMap)> = None;
    let mut log = Vec::with_capacity(epochs);

    let eval_loss = |params: &ParamMap, set: &[Window]| -> Result<f64> {
        let losses: Vec<Result<f64>> = set
            .par_iter()
            .map(|w| {
                let mut tape = Tape::new();
                let vars = insert_params(&mut tape, params);
                let pred = forward(&mut tape, &vars, w)?;
                let loss = window_loss(&mut tape, pred, w.target)?;
                tape.value(loss).item()
            })
            .collect();
        let mut total = 0.0;
        for l in losses {
            total += l?;
        }
        Ok(total / set.len() as f64)
    };

    for epoch in 0..epochs {
        // Step schedule: drop the rate at 60% and 85% of the run.
        let progress = epoch as f64 / epochs as f64;
        adam.lr = lr * if progress >= 0.85 {
            0.09
        } else if progress >= 0.6 {
            0.3
        } else {
            1.0
        };
        // Fisher-Yates with the named stream; identical seeds shuffle
        // identically.
        for i in (1..order.len()).rev() {
            let j = (shuffle_rng.next_u64() % (i as u64 + 1)) as usize;
            order.swap(i, j);
        }
        let mut epoch_loss = 0.0;
        let mut seen = 0usize;
        for chunk in order.chunks(batch) {
            let results: Vec<Result<(f64, BTreeMap<String, Tensor>)>> = chunk
                .par_iter()
                .map(|&idx| {
                    let w = &train[idx];
                    let mut tape = Tape::new();
                    let vars = insert_params(&mut tape, &params);
                    let pred = forward(&mut tape, &vars, w)?;
                    let loss = window_loss(&mut tape, pred, w.target)?;
                    let grads = tape.backward(loss)?;
                    let mut by_name = BTreeMap::new();
                    for (name, var) in &vars {
                        by_name.insert(name.clone(), grads.wrt(&tape, *var));
                    }
                    Ok((tape.value(loss).item()?, by_name))
                })
                .collect();

            let mut batch_grads: BTreeMap<String, Tensor> = BTreeMap::new();
            let mut batch_loss = 0.0;
            let m = chunk.len() as f64;
            for r in results {
                let (l, grads) = r?;
                batch_loss += l;
                for (name, g) in grads {
                    match batch_grads.get_mut(&name) {
                        Some(acc) => {
                            for (a, b) in acc.data_mut().iter_mut().zip(g.data()) {
                                *a += b / m;
                            }
                        }
                        None => {
                            let mut g0 = g.clone();
                            for v in g0.data_mut() {
                                *v /= m;
                            }
                            batch_grads.insert(name, g0);
                        }
                    }
                }
            }
            adam.step(&mut params, &batch_grads)?;
            epoch_loss += batch_loss;
            seen += chunk.len();
        }
        let train_loss = epoch_loss / seen as f64;
        let val_loss = eval_loss(&params, val)?;
        log.push(LogRow { epoch, train_loss, val_loss });
        if best.as_ref().map_or(true, |(b, _)| val_loss < *b) {
            best = Some((val_loss, params.clone()));
        }
    }

    let (_, best_params) = best.expect("at least one epoch ran");
    Ok((best_params, log))
}

pub struct FusionTraining {
    pub model: FusionModel,
    pub log: Vec<LogRow>,
    /// Window test split, for held-out evaluation.
    pub test: Vec<Window>,
}

/// Full fusion training pipeline over one or more traces: feature
/// extraction (with or without anchor selection), sliding windows,
/// per-trace block splits, mean normalization, Adam on squared position
/// error, best-validation checkpoint.
pub fn train_fusion(
    traces: &[Trace],
    selector: Option<&AnchorSelectorModel>,
    cfg: &TrainConfig,
) -> Result<FusionTraining> {
    cfg.validate()?;
    if traces.is_empty() {
        return Err(Error::invalid("training needs at least one trace"));
    }
    let selector = match cfg.ablation {
        Ablation::NoAnchorSelection => None,
        _ => selector,
    };
    let mut per_trace = Vec::with_capacity(traces.len());
    let mut rf_dim = None;
    for trace in traces {
        let feats = extract_features(trace, selector)?;
        match rf_dim {
            None => rf_dim = Some(feats.rf_dim),
            Some(d) if d != feats.rf_dim => {
                return Err(Error::shape(format!(
                    "traces disagree on rf feature dimension: {d} vs {}",
                    feats.rf_dim
                )));
            }
            _ => {}
        }
        per_trace.push(build_windows(&feats, cfg.window)?);
    }
    let rf_dim = rf_dim.expect("at least one trace");
    let vo_dim = 3;
    let mut split = split_windows(per_trace, cfg.split);
    if cfg.window_stride > 1 {
        split.train = split.train.iter().step_by(cfg.window_stride).cloned().collect();
    }
    if cfg.train_fraction < 1.0 {
        let keep = ((split.train.len() as f64) * cfg.train_fraction).ceil() as usize;
        // Deterministic subsample: evenly strided to preserve coverage.
        let stride = split.train.len() as f64 / keep.max(1) as f64;
        let mut sub = Vec::with_capacity(keep);
        let mut cursor = 0.0;
        while sub.len() < keep && (cursor as usize) < split.train.len() {
            sub.push(split.train[cursor as usize].clone());
            cursor += stride;
        }
        split.train = sub;
    }

    let means = feature_means(&split.train, rf_dim, vo_dim, cfg.window)?;
    let scales = feature_scales(&split.train, &means, rf_dim, vo_dim, cfg.window);

    let mut model_cfg = FusionConfig::with_k((rf_dim - 2) / 2);
    model_cfg.rf_dim = rf_dim;
    model_cfg.window = cfg.window;
    model_cfg.ablation = cfg.ablation;
    model_cfg.swap_attention_inputs = cfg.swap_attention_inputs;

    let mut init_rng = RngStream::named(cfg.seed, "fusion.init");
    let params = init_params(&model_cfg, &mut init_rng);

    let shell = FusionModel {
        config: model_cfg.clone(),
        params: ParamMap::new(),
        norm_means: means.clone(),
        input_scales: scales.clone(),
    };
    let normalize = move |w: &Window| shell.normalize_window(w);
    let cfg_for_forward = model_cfg.clone();
    let forward = move |tape: &mut Tape,
                        vars: &BTreeMap<String, Var>,
                        w: &Window|
          -> Result<Var> {
        let (rf_t, vo_t) = normalize(w);
        let rf = tape.input(rf_t);
        let vo = tape.input(vo_t);
        Ok(forward_window(tape, vars, &cfg_for_forward, rf, vo)?.pred)
    };

    let (best_params, log) = train_loop(
        params,
        forward,
        &split.train,
        &split.val,
        cfg.learning_rate,
        cfg.epochs,
        cfg.batch,
        cfg.seed,
    )?;

    Ok(FusionTraining {
        model: FusionModel {
            config: model_cfg,
            params: best_params,
            norm_means: means,
            input_scales: scales,
        },
        log,
        test: split.test,
    })
}

/// Rolls the model over a full trace: one prediction per epoch from index
/// `L - 1` onward, timestamps from the RF epochs.
pub fn predict_trace(
    model: &FusionModel,
    trace: &Trace,
    selector: Option<&AnchorSelectorModel>,
) -> Result<Trajectory> {
    let selector = match model.config.ablation {
        Ablation::NoAnchorSelection => None,
        _ => selector,
    };
    let feats = extract_features(trace, selector)?;
    if feats.rf_dim != model.config.rf_dim {
        return Err(Error::shape(format!(
            "trace yields rf dimension {}, model expects {}",
            feats.rf_dim, model.config.rf_dim
        )));
    }
    let windows = build_windows(&feats, model.config.window)?;
    let preds: Vec<Result<TimedSample<Position2D>>> = windows
        .par_iter()
        .map(|w| {
            let r = model.predict_window(w)?;
            Ok(TimedSample::new(w.t_end, Position2D::new(r.x, r.y)))
        })
        .collect();
    let mut samples = Vec::with_capacity(preds.len());
    for p in preds {
        samples.push(p?);
    }
    Trajectory::new(samples)
}

/// Per-epoch mean attention masks over a trace, for inspection and CSV
/// export: (t, mean mask on VO features, mean mask on RF features).
pub fn attention_report(
    model: &FusionModel,
    trace: &Trace,
    selector: Option<&AnchorSelectorModel>,
) -> Result<Vec<(f64, f64, f64)>> {
    let selector = match model.config.ablation {
        Ablation::NoAnchorSelection => None,
        _ => selector,
    };
    let feats = extract_features(trace, selector)?;
    let windows = build_windows(&feats, model.config.window)?;
    let rows: Vec<Result<(f64, f64, f64)>> = windows
        .par_iter()
        .map(|w| {
            let r = model.predict_window(w)?;
            Ok((w.t_end, r.rv_mask_mean, r.vr_mask_mean))
        })
        .collect();
    rows.into_iter().collect()
}

pub fn attention_report_csv(rows: &[(f64, f64, f64)]) -> String {
    let mut out = String::from("t,vo_mask_mean,rf_mask_mean\n");
    for (t, rv, vr) in rows {
        out.push_str(&format!("{t},{rv},{vr}\n"));
    }
    out
}
