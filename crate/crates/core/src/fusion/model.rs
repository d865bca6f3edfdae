//! The fusion network: per-sensor conv encoders, jointly learned
//! cross-attention masks, a 2-layer LSTM, and a 2-layer FC head.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fusion::features::Window;
use crate::nn::{lstm_cell, LstmCellVars, ParamMap, Tape, Tensor, Var};
use crate::types::RngStream;

/// Which pipeline component is disabled, if any.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Ablation {
    #[default]
    None,
    /// Masks replaced by ones: features merge directly.
    NoCrossAttention,
    /// Anchor filter bypassed: all anchors feed the solver and features.
    NoAnchorSelection,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FusionConfig {
    /// RF feature dimension (2 + 2K).
    pub rf_dim: usize,
    /// VO feature dimension.
    pub vo_dim: usize,
    /// Epochs per window (L).
    pub window: usize,
    /// First conv layer channels.
    pub conv1: usize,
    /// Second conv layer channels; also the encoded feature and mask
    /// dimension.
    pub conv2: usize,
    pub kernel: usize,
    pub lstm_hidden: usize,
    pub fc_hidden: usize,
    pub ablation: Ablation,
    /// Swaps which sensor's features drive each cross-attention mask
    /// (the alternative reading of the mask equations).
    pub swap_attention_inputs: bool,
}

impl FusionConfig {
    pub fn with_k(k: usize) -> Self {
        Self {
            rf_dim: 2 + 2 * k,
            vo_dim: 3,
            window: 8,
            conv1: 8,
            conv2: 16,
            kernel: 3,
            lstm_hidden: 64,
            fc_hidden: 32,
            ablation: Ablation::None,
            swap_attention_inputs: false,
        }
    }
}

impl Default for FusionConfig {
    fn default() -> Self {
        Self::with_k(3)
    }
}

/// Trained fusion model: parameters plus normalization constants.
#[derive(Debug, Clone, PartialEq)]
pub struct FusionModel {
    pub config: FusionConfig,
    pub params: ParamMap,
    /// Per-feature means (rf then vo), training split only.
    pub norm_means: Vec<f64>,
    /// Fixed per-feature input scales (rf then vo), applied after mean
    /// subtraction so metric and dBm features enter the encoders at
    /// comparable magnitude.
    pub input_scales: Vec<f64>,
}

fn glorot(shape: &[usize], fan_in: usize, rng: &mut RngStream) -> Tensor {
    Tensor::uniform_init(shape, 1.0 / (fan_in as f64).sqrt(), rng)
}

/// Parameter layout for the fusion network.
pub fn init_params(cfg: &FusionConfig, rng: &mut RngStream) -> ParamMap {
    let mut p = ParamMap::new();
    let (c1, c2, k) = (cfg.conv1, cfg.conv2, cfg.kernel);
    p.insert("rf.conv1.k", glorot(&[c1, cfg.rf_dim, k], cfg.rf_dim * k, rng));
    p.insert("rf.conv1.b", Tensor::zeros(&[c1]));
    p.insert("rf.conv2.k", glorot(&[c2, c1, k], c1 * k, rng));
    p.insert("rf.conv2.b", Tensor::zeros(&[c2]));
    p.insert("vo.conv1.k", glorot(&[c1, cfg.vo_dim, k], cfg.vo_dim * k, rng));
    p.insert("vo.conv1.b", Tensor::zeros(&[c1]));
    p.insert("vo.conv2.k", glorot(&[c2, c1, k], c1 * k, rng));
    p.insert("vo.conv2.b", Tensor::zeros(&[c2]));
    if cfg.ablation != Ablation::NoCrossAttention {
        for name in ["att.rv.w1", "att.rv.w2", "att.vr.w1", "att.vr.w2"] {
            p.insert(name, glorot(&[c2, c2], c2, rng));
        }
    }
    let h = cfg.lstm_hidden;
    let fused = 2 * c2;
    p.insert("lstm1.w", glorot(&[4 * h, fused], fused, rng));
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

/// Loads every parameter onto a tape, keyed by name.
pub fn insert_params(tape: &mut Tape, params: &ParamMap) -> BTreeMap<String, Var> {
    params.iter().map(|(name, t)| (name.clone(), tape.input(t.clone()))).collect()
}

pub struct ForwardOut {
    /// Predicted position, shape [2].
    pub pred: Var,
    /// Mean cross-attention mask applied to the VO features, per epoch.
    pub rv_mask_means: Vec<f64>,
    /// Mean cross-attention mask applied to the RF features, per epoch.
    pub vr_mask_means: Vec<f64>,
}

fn get(vars: &BTreeMap<String, Var>, name: &str) -> Result<Var> {
    vars.get(name).copied().ok_or_else(|| Error::invalid(format!("missing parameter '{name}'")))
}

/// Sigmoid of the per-component product of two linear projections:
/// `mask = sigmoid((W1 f) (*) (W2 f))`. The mask has the encoded feature
/// dimension and gates elementwise; zero weights give a uniform 0.5 mask.
fn attention_mask(tape: &mut Tape, w1: Var, w2: Var, f: Var) -> Result<Var> {
    let u = tape.matvec(w1, f)?;
    let v = tape.matvec(w2, f)?;
    let p = tape.mul(u, v)?;
    Ok(tape.sigmoid(p))
}

fn mean_of(tape: &Tape, v: Var) -> f64 {
    let t = tape.value(v);
    t.data().iter().sum::<f64>() / t.numel() as f64
}

/// Whole-window forward pass: encode both sensors with two tanh conv
/// layers, gate per epoch with the cross-attention masks, fuse by
/// concatenation, run the fused sequence through the 2-layer LSTM, and
/// map the final hidden state through the FC head.
pub fn forward_window(
    tape: &mut Tape,
    vars: &BTreeMap<String, Var>,
    cfg: &FusionConfig,
    rf_mat: Var,
    vo_mat: Var,
) -> Result<ForwardOut> {
    let l = cfg.window;
    if tape.value(rf_mat).shape() != [cfg.rf_dim, l] {
        return Err(Error::shape(format!(
            "rf window shape {:?}, expected [{}, {l}]",
            tape.value(rf_mat).shape(),
            cfg.rf_dim
        )));
    }
    if tape.value(vo_mat).shape() != [cfg.vo_dim, l] {
        return Err(Error::shape(format!(
            "vo window shape {:?}, expected [{}, {l}]",
            tape.value(vo_mat).shape(),
            cfg.vo_dim
        )));
    }

    let encode = |tape: &mut Tape, x: Var, prefix: &str| -> Result<Var> {
        let k1 = get(vars, &format!("{prefix}.conv1.k"))?;
        let b1 = get(vars, &format!("{prefix}.conv1.b"))?;
        let c1 = tape.conv1d_same(x, k1, b1)?;
        let a1 = tape.tanh(c1);
        let k2 = get(vars, &format!("{prefix}.conv2.k"))?;
        let b2 = get(vars, &format!("{prefix}.conv2.b"))?;
        let c2 = tape.conv1d_same(a1, k2, b2)?;
        let a2 = tape.tanh(c2);
        // [c2, L] -> [L, c2] so per-epoch vectors are contiguous rows.
        tape.transpose2d(a2)
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
    let mut c1s = tape.input(Tensor::zeros(&[h]));
    let mut h2 = tape.input(Tensor::zeros(&[h]));
    let mut c2s = tape.input(Tensor::zeros(&[h]));

    let mut rv_means = Vec::with_capacity(l);
    let mut vr_means = Vec::with_capacity(l);
    for epoch in 0..l {
        let f_r = tape.slice(rf_enc, epoch * cfg.conv2, cfg.conv2)?;
        let f_v = tape.slice(vo_enc, epoch * cfg.conv2, cfg.conv2)?;
        let fused = if cfg.ablation == Ablation::NoCrossAttention {
            rv_means.push(1.0);
            vr_means.push(1.0);
            tape.concat(&[f_v, f_r])?
        } else {
            // Mask gating VO comes from the VO features through RF-side
            // weights and vice versa; the swap flag flips the sources.
            let (rv_src, vr_src) =
                if cfg.swap_attention_inputs { (f_r, f_v) } else { (f_v, f_r) };
            let a_rv = attention_mask(
                tape,
                get(vars, "att.rv.w1")?,
                get(vars, "att.rv.w2")?,
                rv_src,
            )?;
            let a_vr = attention_mask(
                tape,
                get(vars, "att.vr.w1")?,
                get(vars, "att.vr.w2")?,
                vr_src,
            )?;
            rv_means.push(mean_of(tape, a_rv));
            vr_means.push(mean_of(tape, a_vr));
            let gated_v = tape.mul(a_rv, f_v)?;
            let gated_r = tape.mul(a_vr, f_r)?;
            tape.concat(&[gated_v, gated_r])?
        };
        let (nh1, nc1) = lstm_cell(tape, fused, h1, c1s, &lstm1)?;
        h1 = nh1;
        c1s = nc1;
        let (nh2, nc2) = lstm_cell(tape, h1, h2, c2s, &lstm2)?;
        h2 = nh2;
        c2s = nc2;
    }

    let fc1w = get(vars, "fc1.w")?;
    let fc1b = get(vars, "fc1.b")?;
    let z = tape.dense(h2, fc1w, fc1b)?;
    let a = tape.tanh(z);
    let fc2w = get(vars, "fc2.w")?;
    let fc2b = get(vars, "fc2.b")?;
    let pred = tape.dense(a, fc2w, fc2b)?;
    Ok(ForwardOut { pred, rv_mask_means: rv_means, vr_mask_means: vr_means })
}

impl FusionModel {
    /// Mean-subtracts and scales a raw window into model inputs.
    pub fn normalize_window(&self, w: &Window) -> (Tensor, Tensor) {
        let l = self.config.window;
        let rf_dim = self.config.rf_dim;
        let vo_dim = self.config.vo_dim;
        let mut rf = w.rf.clone();
        for c in 0..rf_dim {
            for tau in 0..l {
                rf[c * l + tau] = (rf[c * l + tau] - self.norm_means[c]) * self.input_scales[c];
            }
        }
        let mut vo = w.vo.clone();
        for c in 0..vo_dim {
            for tau in 0..l {
                vo[c * l + tau] = (vo[c * l + tau] - self.norm_means[rf_dim + c])
                    * self.input_scales[rf_dim + c];
            }
        }
        (
            Tensor::new(vec![rf_dim, l], rf).expect("rf window shape"),
            Tensor::new(vec![vo_dim, l], vo).expect("vo window shape"),
        )
    }

    /// Inference on one window.
    pub fn predict_window(&self, w: &Window) -> Result<ForwardResult> {
        let (rf_t, vo_t) = self.normalize_window(w);
        let mut tape = Tape::new();
        let vars = insert_params(&mut tape, &self.params);
        let rf = tape.input(rf_t);
        let vo = tape.input(vo_t);
        let out = forward_window(&mut tape, &vars, &self.config, rf, vo)?;
        let pred = tape.value(out.pred).data().to_vec();
        Ok(ForwardResult {
            x: pred[0],
            y: pred[1],
            rv_mask_mean: out.rv_mask_means.iter().sum::<f64>() / out.rv_mask_means.len() as f64,
            vr_mask_mean: out.vr_mask_means.iter().sum::<f64>() / out.vr_mask_means.len() as f64,
        })
    }

    pub fn num_parameters(&self) -> usize {
        self.params.num_scalars()
    }

    /// Writes `<stem>.ntc` (tensor container) and `<stem>.json` (config
    /// sidecar).
    pub fn save(&self, stem: &Path) -> Result<()> {
        self.params.save(&stem.with_extension("ntc"))?;
        let sidecar = FusionSidecar {
            kind: "fusion".to_string(),
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
        let sidecar: FusionSidecar =
            serde_json::from_str(&text).map_err(|e| Error::Parse { line: 0, msg: e.to_string() })?;
        if sidecar.kind != "fusion" {
            return Err(Error::Validation(format!(
                "checkpoint kind '{}' is not a fusion model",
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

#[derive(Debug, Clone, Copy)]
pub struct ForwardResult {
    pub x: f64,
    pub y: f64,
    pub rv_mask_mean: f64,
    pub vr_mask_mean: f64,
}

#[derive(Serialize, Deserialize)]
struct FusionSidecar {
    kind: String,
    version: u32,
    config: FusionConfig,
    norm_means: Vec<f64>,
    input_scales: Vec<f64>,
}
