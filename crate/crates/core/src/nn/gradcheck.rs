//! Central finite-difference verification of tape gradients.
//!
//! The differencing route only ever evaluates forward passes, so it stays
//! independent of the reverse-mode path it checks.

use crate::error::Result;
use crate::nn::tape::{lstm_cell, LstmCellVars, Tape, Var};
use crate::nn::tensor::Tensor;
use crate::types::RngStream;

pub const DEFAULT_EPS: f64 = 1e-5;

#[derive(Debug, Clone)]
pub struct BlockReport {
    pub block: String,
    pub max_rel_err: f64,
}

impl BlockReport {
    pub fn passed(&self, tol: f64) -> bool {
        self.max_rel_err < tol
    }
}

fn flatten(inputs: &[Tensor]) -> Vec<f64> {
    inputs.iter().flat_map(|t| t.data().iter().copied()).collect()
}

fn unflatten(template: &[Tensor], flat: &[f64]) -> Vec<Tensor> {
    let mut out = Vec::with_capacity(template.len());
    let mut off = 0;
    for t in template {
        let n = t.numel();
        out.push(Tensor::new(t.shape().to_vec(), flat[off..off + n].to_vec()).expect("shape"));
        off += n;
    }
    out
}

fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-6)
}

/// Compares reverse-mode gradients of `build`'s scalar output against
/// central differences with step `eps`, over every input coordinate.
pub fn check_scalar_fn(
    name: &str,
    inputs: &[Tensor],
    eps: f64,
    build: impl Fn(&mut Tape, &[Var]) -> Result<Var>,
) -> Result<BlockReport> {
    // Reverse-mode route.
    let mut tape = Tape::new();
    let vars: Vec<Var> = inputs.iter().map(|t| tape.input(t.clone())).collect();
    let loss = build(&mut tape, &vars)?;
    let grads = tape.backward(loss)?;
    let ad: Vec<f64> = vars.iter().flat_map(|&v| grads.wrt(&tape, v).data().to_vec()).collect();

    // Finite-difference route.
    let eval = |flat: &[f64]| -> Result<f64> {
        let tensors = unflatten(inputs, flat);
        let mut tape = Tape::new();
        let vars: Vec<Var> = tensors.iter().map(|t| tape.input(t.clone())).collect();
        let loss = build(&mut tape, &vars)?;
        tape.value(loss).item()
    };
    let base = flatten(inputs);
    let mut max_err = 0.0f64;
    for i in 0..base.len() {
        let mut plus = base.clone();
        let mut minus = base.clone();
        plus[i] += eps;
        minus[i] -= eps;
        let fd = (eval(&plus)? - eval(&minus)?) / (2.0 * eps);
        max_err = max_err.max(rel_err(ad[i], fd));
    }
    Ok(BlockReport { block: name.to_string(), max_rel_err: max_err })
}

fn rand_tensor(shape: &[usize], rng: &mut RngStream) -> Tensor {
    Tensor::uniform_init(shape, 0.8, rng)
}

/// Inputs bounded away from zero, for kinked ops like relu.
fn rand_tensor_offset(shape: &[usize], rng: &mut RngStream) -> Tensor {
    let mut t = Tensor::uniform_init(shape, 0.8, rng);
    for v in t.data_mut() {
        if v.abs() < 0.2 {
            *v += if *v >= 0.0 { 0.3 } else { -0.3 };
        }
    }
    t
}

/// Finite-difference battery over every differentiable tape op.
pub fn check_all_blocks(eps: f64) -> Result<Vec<BlockReport>> {
    let mut rng = RngStream::named(0xD1FF, "gradcheck");
    let mut reports = Vec::new();

    reports.push(check_scalar_fn(
        "dense",
        &[rand_tensor(&[4], &mut rng), rand_tensor(&[3, 4], &mut rng), rand_tensor(&[3], &mut rng)],
        eps,
        |t, v| {
            let y = t.dense(v[0], v[1], v[2])?;
            t.mean_square(y)
        },
    )?);

    reports.push(check_scalar_fn(
        "matvec",
        &[rand_tensor(&[3, 5], &mut rng), rand_tensor(&[5], &mut rng)],
        eps,
        |t, v| {
            let y = t.matvec(v[0], v[1])?;
            t.mean_square(y)
        },
    )?);

    reports.push(check_scalar_fn("sigmoid", &[rand_tensor(&[6], &mut rng)], eps, |t, v| {
        let y = t.sigmoid(v[0]);
        t.mean_square(y)
    })?);

    reports.push(check_scalar_fn("tanh", &[rand_tensor(&[6], &mut rng)], eps, |t, v| {
        let y = t.tanh(v[0]);
        t.mean_square(y)
    })?);

    reports.push(check_scalar_fn("relu", &[rand_tensor_offset(&[8], &mut rng)], eps, |t, v| {
        let y = t.relu(v[0]);
        t.mean_square(y)
    })?);

    reports.push(check_scalar_fn(
        "add_sub_mul",
        &[rand_tensor(&[5], &mut rng), rand_tensor(&[5], &mut rng)],
        eps,
        |t, v| {
            let s = t.add(v[0], v[1])?;
            let d = t.sub(v[0], v[1])?;
            let p = t.mul(s, d)?;
            Ok(t.sum(p))
        },
    )?);

    reports.push(check_scalar_fn(
        "concat_slice",
        &[rand_tensor(&[3], &mut rng), rand_tensor(&[4], &mut rng)],
        eps,
        |t, v| {
            let c = t.concat(&[v[0], v[1]])?;
            let s = t.slice(c, 1, 5)?;
            t.mean_square(s)
        },
    )?);

    reports.push(check_scalar_fn(
        "scale",
        &[rand_tensor(&[4], &mut rng)],
        eps,
        |t, v| {
            let y = t.scale(v[0], -1.7);
            t.mean_square(y)
        },
    )?);

    reports.push(check_scalar_fn(
        "conv1d",
        &[
            rand_tensor(&[2, 6], &mut rng),
            rand_tensor(&[3, 2, 3], &mut rng),
            rand_tensor(&[3], &mut rng),
        ],
        eps,
        |t, v| {
            let y = t.conv1d_same(v[0], v[1], v[2])?;
            t.mean_square(y)
        },
    )?);

    reports.push(check_scalar_fn(
        "transpose2d",
        &[rand_tensor(&[3, 4], &mut rng), rand_tensor(&[4, 3], &mut rng)],
        eps,
        |t, v| {
            let xt = t.transpose2d(v[0])?;
            let p = t.mul(xt, v[1])?;
            t.mean_square(p)
        },
    )?);

    reports.push(check_scalar_fn(
        "lstm_cell",
        &[
            rand_tensor(&[3], &mut rng),
            rand_tensor(&[4], &mut rng),
            rand_tensor(&[4], &mut rng),
            rand_tensor(&[16, 3], &mut rng),
            rand_tensor(&[16, 4], &mut rng),
            rand_tensor(&[16], &mut rng),
        ],
        eps,
        |t, v| {
            let p = LstmCellVars { w: v[3], u: v[4], b: v[5] };
            let (h, c) = lstm_cell(t, v[0], v[1], v[2], &p)?;
            let hc = t.concat(&[h, c])?;
            t.mean_square(hc)
        },
    )?);

    Ok(reports)
}
