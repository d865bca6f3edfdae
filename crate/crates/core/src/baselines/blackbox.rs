//! Pure-learning fusion baseline: deep encoders over raw sensor streams,
//! self-attention per sensor, then the same cross-attention/LSTM/FC
//! pipeline as the fusion model.

use std::collections::BTreeMap;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fusion::features::{build_windows, FeatureSet, EpochFeatures, Window};
use crate::fusion::model::insert_params;
use crate::fusion::train::{
    feature_means, feature_scales, split_windows, train_loop, LogRow, TrainConfig,
};
use crate::nn::{lstm_cell, LstmCellVars, ParamMap, Tape, Tensor, Var};
use crate::rf::RfFeature;
use crate::sim::trace::Trace;
use crate::types::{Position2D, RngStream, TimedSample, Trajectory};
use crate::vo::VoFeature;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlackboxConfig {
    /// Raw RF input dimension: 2 * anchor count (all ranges, all powers).
    pub rf_dim: usize,
    pub vo_dim: usize,
    pub window: usize,
    /// Conv channels (three layers per sensor).
    pub conv: usize,
    /// Hidden width of the time-distributed dense pair.
    pub dense: usize,
    pub kernel: usize,
    pub lstm_hidden: usize,
    pub fc_hidden: usize,
}

impl BlackboxConfig {
    pub fn for_anchors(n: usize) -> Self {
        Self {
            rf_dim: 2 * n,
            vo_dim: 3,
            window: 8,
            conv: 128,
            dense: 256,
            kernel: 3,
            lstm_hidden: 128,
            fc_hidden: 64,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BlackboxModel {
    pub config: BlackboxConfig,
    pub params: ParamMap,
    pub norm_means: Vec<f64>,
    pub input_scales: Vec<f64>,
}

fn glorot(shape: &[usize], fan_in: usize, rng: &mut RngStream) -> Tensor {
    Tensor::uniform_init(shape, 1.0 / (fan_in as f64).sqrt(), rng)
}

pub fn init_blackbox_params(cfg: &BlackboxConfig, rng: &mut RngStream) -> ParamMap {
    let mut p = ParamMap::new();
    let (c, d, k) = (cfg.conv, cfg.dense, cfg.kernel);
    for (prefix, input_dim) in [("rf", cfg.rf_dim), ("vo", cfg.vo_dim)] {
        p.insert(format!("{prefix}.conv1.k"), glorot(&[c, input_dim, k], input_dim * k, rng));
        p.insert(format!("{prefix}.conv1.b"), Tensor::zeros(&[c]));
        p.insert(format!("{prefix}.conv2.k"), glorot(&[c, c, k], c * k, rng));
        p.insert(format!("{prefix}.conv2.b"), Tensor::zeros(&[c]));
        p.insert(format!("{prefix}.conv3.k"), glorot(&[c, c, k], c * k, rng));
        p.insert(format!("{prefix}.conv3.b"), Tensor::zeros(&[c]));
        p.insert(format!("{prefix}.dense1.w"), glorot(&[d, c], c, rng));
        p.insert(format!("{prefix}.dense1.b"), Tensor::zeros(&[d]));
        p.insert(format!("{prefix}.dense2.w"), glorot(&[c, d], d, rng));
        p.insert(format!("{prefix}.dense2.b"), Tensor::zeros(&[c]));
        p.insert(format!("self.{prefix}.w1"), glorot(&[c, c], c, rng));
        p.insert(format!("self.{prefix}.w2"), glorot(&[c, c], c, rng));
    }
    for name in ["att.rv.w1", "att.rv.w2", "att.vr.w1", "att.vr.w2"] {
        p.insert(name, glorot(&[c, c], c, rng));
    }
    let h = cfg.lstm_hidden;
    p.insert("lstm1.w", glorot(&[4 * h, 2 * c], 2 * c, rng));
    p.insert("lstm1.u", glorot(&[4 * h, h], h, rng));
    p.insert("lstm1.b", Tensor::zeros(&[4 * h]));
    p.insert("lstm2.w", glorot(&[4 * h, h], h, rng));
    p.insert("lstm2.u", glorot(&[4 * h, h], h, rng));
    p.insert("lstm2.b", Tensor::zeros(&[4 * h]));
    p.insert("fc1.w", glorot(&[cfg.fc_hidden, h], h, rng));
    p.insert("fc1.b", Tensor::zeros(&[cfg.fc_hidden]));
    p.insert("fc2.w", glorot(&[2, cfg.fc_hidden], cfg.fc_hidden, rng));
    p.insert("fc2.b", Tensor::zeros(&[2]));
    p
}

fn get(vars: &BTreeMap<String, Var>, name: &str) -> Result<Var> {
    vars.get(name).copied().ok_or_else(|| Error::invalid(format!("missing parameter '{name}'")))
}

/// Self- or cross-attention mask: `sigmoid((W1 f) (*) (W2 f))`; zero
/// weights give 0.5 everywhere.
fn mask(tape: &mut Tape, w1: Var, w2: Var, f: Var) -> Result<Var> {
    let u = tape.matvec(w1, f)?;
    let v = tape.matvec(w2, f)?;
    let p = tape.mul(u, v)?;
    Ok(tape.sigmoid(p))
}

/// Blackbox forward pass over one normalized window.
pub fn forward_blackbox(
    tape: &mut Tape,
    vars: &BTreeMap<String, Var>,
    cfg: &BlackboxConfig,
    rf_mat: Var,
    vo_mat: Var,
) -> Result<Var> {
    let l = cfg.window;
    let c = cfg.conv;
    let encode = |tape: &mut Tape, x: Var, prefix: &str| -> Result<Var> {
        let mut cur = x;
        for layer in 1..=3 {
            let kk = get(vars, &format!("{prefix}.conv{layer}.k"))?;
            let bb = get(vars, &format!("{prefix}.conv{layer}.b"))?;
            let conv = tape.conv1d_same(cur, kk, bb)?;
            cur = tape.tanh(conv);
        }
        tape.transpose2d(cur)
    };
    let rf_enc = encode(tape, rf_mat, "rf")?;
    let vo_enc = encode(tape, vo_mat, "vo")?;

    let h = cfg.lstm_hidden;
    let lstm1 = LstmCellVars {
        w: get(vars, "lstm1.w")?,
        u: get(vars, "lstm1.u")?,
        b: get(vars, "lstm1.b")?,
    };
    let lstm2 = LstmCellVars {
        w: get(vars, "lstm2.w")?,
        u: get(vars, "lstm2.u")?,
        b: get(vars, "lstm2.b")?,
    };
    let mut h1 = tape.input(Tensor::zeros(&[h]));
    let mut c1 = tape.input(Tensor::zeros(&[h]));
    let mut h2 = tape.input(Tensor::zeros(&[h]));
    let mut c2 = tape.input(Tensor::zeros(&[h]));

    for epoch in 0..l {
        let embed = |tape: &mut Tape, enc: Var, prefix: &str| -> Result<Var> {
            let raw = tape.slice(enc, epoch * c, c)?;
            let w1 = get(vars, &format!("{prefix}.dense1.w"))?;
            let b1 = get(vars, &format!("{prefix}.dense1.b"))?;
            let z1 = tape.dense(raw, w1, b1)?;
            let a1 = tape.tanh(z1);
            let w2 = get(vars, &format!("{prefix}.dense2.w"))?;
            let b2 = get(vars, &format!("{prefix}.dense2.b"))?;
            let z2 = tape.dense(a1, w2, b2)?;
            let z = tape.tanh(z2);
            // Self-attended features: mask from the sensor's own stream.
            let m = mask(
                tape,
                get(vars, &format!("self.{prefix}.w1"))?,
                get(vars, &format!("self.{prefix}.w2"))?,
                z,
            )?;
            tape.mul(m, z)
        };
        let z_r = embed(tape, rf_enc, "rf")?;
        let z_v = embed(tape, vo_enc, "vo")?;

        let a_rv = mask(tape, get(vars, "att.rv.w1")?, get(vars, "att.rv.w2")?, z_v)?;
        let a_vr = mask(tape, get(vars, "att.vr.w1")?, get(vars, "att.vr.w2")?, z_r)?;
        let gated_v = tape.mul(a_rv, z_v)?;
        let gated_r = tape.mul(a_vr, z_r)?;
        let fused = tape.concat(&[gated_v, gated_r])?;

        let (nh1, nc1) = lstm_cell(tape, fused, h1, c1, &lstm1)?;
        h1 = nh1;
        c1 = nc1;
        let (nh2, nc2) = lstm_cell(tape, h1, h2, c2, &lstm2)?;
        h2 = nh2;
        c2 = nc2;
    }

    let z = tape.dense(h2, get(vars, "fc1.w")?, get(vars, "fc1.b")?)?;
    let a = tape.tanh(z);
    tape.dense(a, get(vars, "fc2.w")?, get(vars, "fc2.b")?)
}

/// Raw per-epoch features for the blackbox: all ranges and powers, raw
/// (r, theta, normalized keypoints). No multilateration, no selection.
pub fn extract_raw_features(trace: &Trace) -> Result<FeatureSet> {
    let m_ref = trace.noise.m_well_lit;
    let mut epochs = Vec::with_capacity(trace.epochs());
    for ((gt, rf), vo) in trace.gt.samples().iter().zip(&trace.rf).zip(&trace.vo) {
        let mut entries = rf.entries.clone();
        entries.sort_by_key(|e| e.id);
        let mut raw: Vec<f64> = entries.iter().map(|e| e.range).collect();
        raw.extend(entries.iter().map(|e| e.power));
        let m_norm = (vo.m.min(m_ref) as f64) / m_ref as f64;
        epochs.push(EpochFeatures {
            t: rf.t,
            rf: RfFeature(raw),
            vo: VoFeature([vo.r, vo.theta, m_norm]),
            target: gt.value,
        });
    }
    let rf_dim = 2 * trace.layout.len();
    Ok(FeatureSet { epochs, rf_dim, vo_dim: 3 })
}

impl BlackboxModel {
    pub fn normalize_window(&self, w: &Window) -> (Tensor, Tensor) {
        let l = self.config.window;
        let rf_dim = self.config.rf_dim;
        let vo_dim = self.config.vo_dim;
        let mut rf = w.rf.clone();
        for ch in 0..rf_dim {
            for tau in 0..l {
                rf[ch * l + tau] =
                    (rf[ch * l + tau] - self.norm_means[ch]) * self.input_scales[ch];
            }
        }
        let mut vo = w.vo.clone();
        for ch in 0..vo_dim {
            for tau in 0..l {
                vo[ch * l + tau] = (vo[ch * l + tau] - self.norm_means[rf_dim + ch])
                    * self.input_scales[rf_dim + ch];
            }
        }
        (
            Tensor::new(vec![rf_dim, l], rf).expect("rf shape"),
            Tensor::new(vec![vo_dim, l], vo).expect("vo shape"),
        )
    }

    pub fn predict_window(&self, w: &Window) -> Result<Position2D> {
        let (rf_t, vo_t) = self.normalize_window(w);
        let mut tape = Tape::new();
        let vars = insert_params(&mut tape, &self.params);
        let rf = tape.input(rf_t);
        let vo = tape.input(vo_t);
        let pred = forward_blackbox(&mut tape, &vars, &self.config, rf, vo)?;
        let d = tape.value(pred).data();
        Ok(Position2D::new(d[0], d[1]))
    }

    pub fn num_parameters(&self) -> usize {
        self.params.num_scalars()
    }

    pub fn save(&self, stem: &Path) -> Result<()> {
        self.params.save(&stem.with_extension("ntc"))?;
        let sidecar = BlackboxSidecar {
            kind: "blackbox".to_string(),
            version: 1,
            config: self.config.clone(),
            norm_means: self.norm_means.clone(),
            input_scales: self.input_scales.clone(),
        };
        std::fs::write(
            stem.with_extension("json"),
            serde_json::to_string_pretty(&sidecar)
                .map_err(|e| Error::Numerical(e.to_string()))?,
        )?;
        Ok(())
    }

    pub fn load(stem: &Path) -> Result<Self> {
        let params = ParamMap::load(&stem.with_extension("ntc"))?;
        let text = std::fs::read_to_string(stem.with_extension("json"))?;
        let sidecar: BlackboxSidecar =
            serde_json::from_str(&text).map_err(|e| Error::Parse { line: 0, msg: e.to_string() })?;
        if sidecar.kind != "blackbox" {
            return Err(Error::Validation(format!(
                "checkpoint kind '{}' is not a blackbox model",
                sidecar.kind
            )));
        }
        Ok(Self {
            config: sidecar.config,
            params,
            norm_means: sidecar.norm_means,
            input_scales: sidecar.input_scales,
        })
    }
}

#[derive(Serialize, Deserialize)]
struct BlackboxSidecar {
    kind: String,
    version: u32,
    config: BlackboxConfig,
    norm_means: Vec<f64>,
    input_scales: Vec<f64>,
}

pub struct BlackboxTraining {
    pub model: BlackboxModel,
    pub log: Vec<LogRow>,
    pub test: Vec<Window>,
}

/// Trains the blackbox on raw sensor windows with the same regime as the
/// fusion model (Adam, squared position error, best-validation
/// checkpoint).
pub fn train_blackbox(traces: &[Trace], cfg: &TrainConfig) -> Result<BlackboxTraining> {
    cfg.validate()?;
    if traces.is_empty() {
        return Err(Error::invalid("training needs at least one trace"));
    }
    let mut per_trace = Vec::with_capacity(traces.len());
    let mut rf_dim = None;
    for trace in traces {
        let feats = extract_raw_features(trace)?;
        match rf_dim {
            None => rf_dim = Some(feats.rf_dim),
            Some(d) if d != feats.rf_dim => {
                return Err(Error::shape("traces disagree on anchor count"));
            }
            _ => {}
        }
        per_trace.push(build_windows(&feats, cfg.window)?);
    }
    let rf_dim = rf_dim.expect("at least one trace");
    let mut split = split_windows(per_trace, cfg.split);
    if cfg.window_stride > 1 {
        split.train = split.train.iter().step_by(cfg.window_stride).cloned().collect();
    }
    if cfg.train_fraction < 1.0 {
        let keep = ((split.train.len() as f64) * cfg.train_fraction).ceil() as usize;
        let stride = split.train.len() as f64 / keep.max(1) as f64;
        let mut sub = Vec::with_capacity(keep);
        let mut cursor = 0.0;
        while sub.len() < keep && (cursor as usize) < split.train.len() {
            sub.push(split.train[cursor as usize].clone());
            cursor += stride;
        }
        split.train = sub;
    }

    let means = feature_means(&split.train, rf_dim, 3, cfg.window)?;
    let scales = feature_scales(&split.train, &means, rf_dim, 3, cfg.window);

    let mut model_cfg = BlackboxConfig::for_anchors(rf_dim / 2);
    model_cfg.window = cfg.window;

    let mut init_rng = RngStream::named(cfg.seed, "blackbox.init");
    let params = init_blackbox_params(&model_cfg, &mut init_rng);

    let shell = BlackboxModel {
        config: model_cfg.clone(),
        params: ParamMap::new(),
        norm_means: means.clone(),
        input_scales: scales.clone(),
    };
    let cfg_for_forward = model_cfg.clone();
    let forward = move |tape: &mut Tape,
                        vars: &BTreeMap<String, Var>,
                        w: &Window|
          -> Result<Var> {
        let (rf_t, vo_t) = shell.normalize_window(w);
        let rf = tape.input(rf_t);
        let vo = tape.input(vo_t);
        forward_blackbox(tape, vars, &cfg_for_forward, rf, vo)
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

    Ok(BlackboxTraining {
        model: BlackboxModel {
            config: model_cfg,
            params: best_params,
            norm_means: means,
            input_scales: scales,
        },
        log,
        test: split.test,
    })
}

/// Rolls the blackbox over a trace.
pub fn predict_blackbox(model: &BlackboxModel, trace: &Trace) -> Result<Trajectory> {
    let feats = extract_raw_features(trace)?;
    if feats.rf_dim != model.config.rf_dim {
        return Err(Error::shape(format!(
            "trace yields raw rf dimension {}, model expects {}",
            feats.rf_dim, model.config.rf_dim
        )));
    }
    let windows = build_windows(&feats, model.config.window)?;
    let preds: Vec<Result<TimedSample<Position2D>>> = windows
        .par_iter()
        .map(|w| Ok(TimedSample::new(w.t_end, model.predict_window(w)?)))
        .collect();
    let mut samples = Vec::with_capacity(preds.len());
    for p in preds {
        samples.push(p?);
    }
    Trajectory::new(samples)
}
