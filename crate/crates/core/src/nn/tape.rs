//! Reverse-mode differentiation over a recorded op tape.
//!
//! Ops execute eagerly and append a node; `backward` walks the nodes in
//! reverse order (tape order is topological by construction). Ops never
//! mutate their inputs and `backward` is a pure function of the tape, so
//! replay is idempotent.

use crate::error::{Error, Result};
use crate::nn::tensor::Tensor;

/// Handle to a tape node.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Var(usize);

#[derive(Debug, Clone)]
enum Op {
    Leaf,
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Scale(Var, f64),
    MatVec { w: Var, x: Var },
    Dense { x: Var, w: Var, b: Var },
    Sigmoid(Var),
    Tanh(Var),
    Relu(Var),
    Concat(Vec<Var>),
    Slice { x: Var, start: usize, len: usize },
    Reshape(Var),
    Conv1dSame { x: Var, k: Var, b: Var },
    Transpose2d(Var),
    Sum(Var),
}

struct Node {
    op: Op,
    value: Tensor,
}

/// Gradients keyed by tape node; nodes off the loss path carry `None`.
pub struct Gradients {
    grads: Vec<Option<Tensor>>,
}

impl Gradients {
    /// Gradient of the loss w.r.t. `v`; zeros if `v` does not influence it.
    pub fn wrt(&self, tape: &Tape, v: Var) -> Tensor {
        match &self.grads[v.0] {
            Some(g) => g.clone(),
            None => Tensor::zeros(tape.value(v).shape()),
        }
    }
}

#[derive(Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

fn same_shape(a: &Tensor, b: &Tensor, op: &str) -> Result<()> {
    if a.shape() != b.shape() {
        return Err(Error::shape(format!(
            "{op}: shapes {:?} and {:?} differ",
            a.shape(),
            b.shape()
        )));
    }
    Ok(())
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    fn push(&mut self, op: Op, value: Tensor) -> Var {
        self.nodes.push(Node { op, value });
        Var(self.nodes.len() - 1)
    }

    /// Insert a leaf value (input or parameter).
    pub fn input(&mut self, t: Tensor) -> Var {
        self.push(Op::Leaf, t)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        same_shape(self.value(a), self.value(b), "add")?;
        let data =
            self.value(a).data().iter().zip(self.value(b).data()).map(|(x, y)| x + y).collect();
        let out = Tensor::new(self.value(a).shape().to_vec(), data)?;
        Ok(self.push(Op::Add(a, b), out))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        same_shape(self.value(a), self.value(b), "sub")?;
        let data =
            self.value(a).data().iter().zip(self.value(b).data()).map(|(x, y)| x - y).collect();
        let out = Tensor::new(self.value(a).shape().to_vec(), data)?;
        Ok(self.push(Op::Sub(a, b), out))
    }

    /// Elementwise product.
    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        same_shape(self.value(a), self.value(b), "mul")?;
        let data =
            self.value(a).data().iter().zip(self.value(b).data()).map(|(x, y)| x * y).collect();
        let out = Tensor::new(self.value(a).shape().to_vec(), data)?;
        Ok(self.push(Op::Mul(a, b), out))
    }

    pub fn scale(&mut self, a: Var, c: f64) -> Var {
        let data = self.value(a).data().iter().map(|x| x * c).collect();
        let out = Tensor::new(self.value(a).shape().to_vec(), data).expect("same shape");
        self.push(Op::Scale(a, c), out)
    }

    /// Matrix-vector product `W x` with `W: [m, n]`, `x: [n]`.
    pub fn matvec(&mut self, w: Var, x: Var) -> Result<Var> {
        let (ws, xs) = (self.value(w).shape().to_vec(), self.value(x).shape().to_vec());
        if ws.len() != 2 || xs.len() != 1 || ws[1] != xs[0] {
            return Err(Error::shape(format!("matvec: W {ws:?} incompatible with x {xs:?}")));
        }
        let (m, n) = (ws[0], ws[1]);
        let wd = self.value(w).data();
        let xd = self.value(x).data();
        let mut out = vec![0.0; m];
        for i in 0..m {
            let row = &wd[i * n..(i + 1) * n];
            out[i] = row.iter().zip(xd).map(|(a, b)| a * b).sum();
        }
        let out = Tensor::new(vec![m], out)?;
        Ok(self.push(Op::MatVec { w, x }, out))
    }

    /// Affine layer `W x + b` with `W: [m, n]`, `x: [n]`, `b: [m]`.
    pub fn dense(&mut self, x: Var, w: Var, b: Var) -> Result<Var> {
        let (ws, xs, bs) =
            (self.value(w).shape().to_vec(), self.value(x).shape().to_vec(), self.value(b).shape().to_vec());
        if ws.len() != 2 || xs.len() != 1 || ws[1] != xs[0] || bs != [ws[0]] {
            return Err(Error::shape(format!(
                "dense: W {ws:?}, x {xs:?}, b {bs:?} incompatible"
            )));
        }
        let (m, n) = (ws[0], ws[1]);
        let wd = self.value(w).data();
        let xd = self.value(x).data();
        let bd = self.value(b).data();
        let mut out = vec![0.0; m];
        for i in 0..m {
            let row = &wd[i * n..(i + 1) * n];
            out[i] = bd[i] + row.iter().zip(xd).map(|(a, v)| a * v).sum::<f64>();
        }
        let out = Tensor::new(vec![m], out)?;
        Ok(self.push(Op::Dense { x, w, b }, out))
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        let data = self.value(a).data().iter().map(|x| 1.0 / (1.0 + (-x).exp())).collect();
        let out = Tensor::new(self.value(a).shape().to_vec(), data).expect("same shape");
        self.push(Op::Sigmoid(a), out)
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        let data = self.value(a).data().iter().map(|x| x.tanh()).collect();
        let out = Tensor::new(self.value(a).shape().to_vec(), data).expect("same shape");
        self.push(Op::Tanh(a), out)
    }

    pub fn relu(&mut self, a: Var) -> Var {
        let data = self.value(a).data().iter().map(|x| x.max(0.0)).collect();
        let out = Tensor::new(self.value(a).shape().to_vec(), data).expect("same shape");
        self.push(Op::Relu(a), out)
    }

    /// Concatenate flattened inputs into one vector.
    pub fn concat(&mut self, parts: &[Var]) -> Result<Var> {
        if parts.is_empty() {
            return Err(Error::invalid("concat needs at least one input"));
        }
        let mut data = Vec::new();
        for &p in parts {
            data.extend_from_slice(self.value(p).data());
        }
        let out = Tensor::vector(data);
        Ok(self.push(Op::Concat(parts.to_vec()), out))
    }

    /// Contiguous slice of a flattened input.
    pub fn slice(&mut self, x: Var, start: usize, len: usize) -> Result<Var> {
        let total = self.value(x).numel();
        if start + len > total {
            return Err(Error::shape(format!(
                "slice [{start}, {}) exceeds input of {total} elements",
                start + len
            )));
        }
        let data = self.value(x).data()[start..start + len].to_vec();
        let out = Tensor::vector(data);
        Ok(self.push(Op::Slice { x, start, len }, out))
    }

    pub fn reshape(&mut self, x: Var, shape: Vec<usize>) -> Result<Var> {
        let out = self.value(x).reshaped(shape)?;
        Ok(self.push(Op::Reshape(x), out))
    }

    /// 1D cross-correlation with stride 1 and zero "same" padding.
    /// `x: [c_in, L]`, `k: [c_out, c_in, kw]` (odd `kw`), `b: [c_out]`;
    /// output `[c_out, L]`.
    pub fn conv1d_same(&mut self, x: Var, k: Var, b: Var) -> Result<Var> {
        let xs = self.value(x).shape().to_vec();
        let ks = self.value(k).shape().to_vec();
        let bs = self.value(b).shape().to_vec();
        if xs.len() != 2 || ks.len() != 3 || ks[1] != xs[0] || bs != [ks[0]] {
            return Err(Error::shape(format!(
                "conv1d: x {xs:?}, kernels {ks:?}, b {bs:?} incompatible"
            )));
        }
        let (c_in, l) = (xs[0], xs[1]);
        let (c_out, kw) = (ks[0], ks[2]);
        if kw % 2 == 0 {
            return Err(Error::invalid(format!("conv1d kernel width must be odd, got {kw}")));
        }
        let pad = (kw - 1) / 2;
        let xd = self.value(x).data();
        let kd = self.value(k).data();
        let bd = self.value(b).data();
        let mut out = vec![0.0; c_out * l];
        for o in 0..c_out {
            for i in 0..l {
                let mut acc = bd[o];
                for c in 0..c_in {
                    for j in 0..kw {
                        let xi = i + j;
                        if xi >= pad && xi - pad < l {
                            acc += xd[c * l + (xi - pad)] * kd[(o * c_in + c) * kw + j];
                        }
                    }
                }
                out[o * l + i] = acc;
            }
        }
        let out = Tensor::new(vec![c_out, l], out)?;
        Ok(self.push(Op::Conv1dSame { x, k, b }, out))
    }

    /// Transpose of a 2D tensor.
    pub fn transpose2d(&mut self, x: Var) -> Result<Var> {
        let shape = self.value(x).shape().to_vec();
        if shape.len() != 2 {
            return Err(Error::shape(format!("transpose2d expects 2 dims, got {shape:?}")));
        }
        let (r, c) = (shape[0], shape[1]);
        let xd = self.value(x).data();
        let mut out = vec![0.0; r * c];
        for i in 0..r {
            for j in 0..c {
                out[j * r + i] = xd[i * c + j];
            }
        }
        let out = Tensor::new(vec![c, r], out)?;
        Ok(self.push(Op::Transpose2d(x), out))
    }

    /// Sum of all elements, as a scalar.
    pub fn sum(&mut self, a: Var) -> Var {
        let s = self.value(a).data().iter().sum();
        self.push(Op::Sum(a), Tensor::scalar(s))
    }

    /// Mean squared value of all elements: `sum(x^2) / numel`.
    pub fn mean_square(&mut self, a: Var) -> Result<Var> {
        let n = self.value(a).numel();
        let sq = self.mul(a, a)?;
        let s = self.sum(sq);
        Ok(self.scale(s, 1.0 / n as f64))
    }

    /// Reverse-mode gradients of a scalar loss w.r.t. every node.
    pub fn backward(&self, loss: Var) -> Result<Gradients> {
        if !self.value(loss).is_scalar() {
            return Err(Error::invalid(format!(
                "backward requires a scalar loss, got shape {:?}",
                self.value(loss).shape()
            )));
        }
        let mut grads: Vec<Option<Tensor>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[loss.0] = Some(Tensor::scalar(1.0));

        for id in (0..=loss.0).rev() {
            let gy = match grads[id].take() {
                Some(g) => g,
                None => continue,
            };
            self.accumulate_node(id, &gy, &mut grads);
            grads[id] = Some(gy);
        }
        Ok(Gradients { grads })
    }

    fn accumulate_node(&self, id: usize, gy: &Tensor, grads: &mut [Option<Tensor>]) {
        let add_into = |grads: &mut [Option<Tensor>], v: Var, delta: &[f64], shape: &[usize]| {
            let slot = grads[v.0].get_or_insert_with(|| Tensor::zeros(shape));
            for (g, d) in slot.data_mut().iter_mut().zip(delta) {
                *g += d;
            }
        };

        match &self.nodes[id].op {
            Op::Leaf => {}
            Op::Add(a, b) => {
                add_into(grads, *a, gy.data(), self.value(*a).shape());
                add_into(grads, *b, gy.data(), self.value(*b).shape());
            }
            Op::Sub(a, b) => {
                add_into(grads, *a, gy.data(), self.value(*a).shape());
                let neg: Vec<f64> = gy.data().iter().map(|g| -g).collect();
                add_into(grads, *b, &neg, self.value(*b).shape());
            }
            Op::Mul(a, b) => {
                let ga: Vec<f64> =
                    gy.data().iter().zip(self.value(*b).data()).map(|(g, y)| g * y).collect();
                let gb: Vec<f64> =
                    gy.data().iter().zip(self.value(*a).data()).map(|(g, x)| g * x).collect();
                add_into(grads, *a, &ga, self.value(*a).shape());
                add_into(grads, *b, &gb, self.value(*b).shape());
            }
            Op::Scale(a, c) => {
                let ga: Vec<f64> = gy.data().iter().map(|g| g * c).collect();
                add_into(grads, *a, &ga, self.value(*a).shape());
            }
            Op::MatVec { w, x } => {
                let (m, n) = (self.value(*w).shape()[0], self.value(*w).shape()[1]);
                let wd = self.value(*w).data();
                let xd = self.value(*x).data();
                let mut gw = vec![0.0; m * n];
                let mut gx = vec![0.0; n];
                for i in 0..m {
                    let g = gy.data()[i];
                    for j in 0..n {
                        gw[i * n + j] += g * xd[j];
                        gx[j] += g * wd[i * n + j];
                    }
                }
                add_into(grads, *w, &gw, self.value(*w).shape());
                add_into(grads, *x, &gx, self.value(*x).shape());
            }
            Op::Dense { x, w, b } => {
                let (m, n) = (self.value(*w).shape()[0], self.value(*w).shape()[1]);
                let wd = self.value(*w).data();
                let xd = self.value(*x).data();
                let mut gw = vec![0.0; m * n];
                let mut gx = vec![0.0; n];
                for i in 0..m {
                    let g = gy.data()[i];
                    for j in 0..n {
                        gw[i * n + j] += g * xd[j];
                        gx[j] += g * wd[i * n + j];
                    }
                }
                add_into(grads, *w, &gw, self.value(*w).shape());
                add_into(grads, *x, &gx, self.value(*x).shape());
                add_into(grads, *b, gy.data(), self.value(*b).shape());
            }
            Op::Sigmoid(a) => {
                let ga: Vec<f64> = gy
                    .data()
                    .iter()
                    .zip(self.nodes[id].value.data())
                    .map(|(g, y)| g * y * (1.0 - y))
                    .collect();
                add_into(grads, *a, &ga, self.value(*a).shape());
            }
            Op::Tanh(a) => {
                let ga: Vec<f64> = gy
                    .data()
                    .iter()
                    .zip(self.nodes[id].value.data())
                    .map(|(g, y)| g * (1.0 - y * y))
                    .collect();
                add_into(grads, *a, &ga, self.value(*a).shape());
            }
            Op::Relu(a) => {
                let ga: Vec<f64> = gy
                    .data()
                    .iter()
                    .zip(self.value(*a).data())
                    .map(|(g, x)| if *x > 0.0 { *g } else { 0.0 })
                    .collect();
                add_into(grads, *a, &ga, self.value(*a).shape());
            }
            Op::Concat(parts) => {
                let mut offset = 0;
                for &p in parts {
                    let n = self.value(p).numel();
                    add_into(grads, p, &gy.data()[offset..offset + n], self.value(p).shape());
                    offset += n;
                }
            }
            Op::Slice { x, start, len } => {
                let mut gx = vec![0.0; self.value(*x).numel()];
                gx[*start..start + len].copy_from_slice(gy.data());
                add_into(grads, *x, &gx, self.value(*x).shape());
            }
            Op::Reshape(x) => {
                add_into(grads, *x, gy.data(), self.value(*x).shape());
            }
            Op::Conv1dSame { x, k, b } => {
                let xs = self.value(*x).shape();
                let ks = self.value(*k).shape();
                let (c_in, l) = (xs[0], xs[1]);
                let (c_out, kw) = (ks[0], ks[2]);
                let pad = (kw - 1) / 2;
                let xd = self.value(*x).data();
                let kd = self.value(*k).data();
                let mut gx = vec![0.0; c_in * l];
                let mut gk = vec![0.0; c_out * c_in * kw];
                let mut gb = vec![0.0; c_out];
                for o in 0..c_out {
                    for i in 0..l {
                        let g = gy.data()[o * l + i];
                        gb[o] += g;
                        for c in 0..c_in {
                            for j in 0..kw {
                                let xi = i + j;
                                if xi >= pad && xi - pad < l {
                                    gk[(o * c_in + c) * kw + j] += g * xd[c * l + (xi - pad)];
                                    gx[c * l + (xi - pad)] += g * kd[(o * c_in + c) * kw + j];
                                }
                            }
                        }
                    }
                }
                add_into(grads, *x, &gx, self.value(*x).shape());
                add_into(grads, *k, &gk, self.value(*k).shape());
                add_into(grads, *b, &gb, self.value(*b).shape());
            }
            Op::Transpose2d(x) => {
                let shape = self.value(*x).shape();
                let (r, c) = (shape[0], shape[1]);
                let mut gx = vec![0.0; r * c];
                for j in 0..c {
                    for i in 0..r {
                        gx[i * c + j] = gy.data()[j * r + i];
                    }
                }
                add_into(grads, *x, &gx, shape);
            }
            Op::Sum(a) => {
                let g = gy.data()[0];
                let ga = vec![g; self.value(*a).numel()];
                add_into(grads, *a, &ga, self.value(*a).shape());
            }
        }
    }
}

/// Parameter handles for one LSTM cell: `w: [4H, I]`, `u: [4H, H]`,
/// `b: [4H]`, gate blocks ordered `[input, forget, cell, output]`.
#[derive(Debug, Clone, Copy)]
pub struct LstmCellVars {
    pub w: Var,
    pub u: Var,
    pub b: Var,
}

/// Standard LSTM cell: gates `i, f, o` through sigmoid, candidate `g`
/// through tanh; `c = f (*) c_prev + i (*) g`, `h = o (*) tanh(c)`.
pub fn lstm_cell(
    tape: &mut Tape,
    x: Var,
    h_prev: Var,
    c_prev: Var,
    p: &LstmCellVars,
) -> Result<(Var, Var)> {
    let hidden = tape.value(c_prev).numel();
    let zx = tape.dense(x, p.w, p.b)?;
    let zh = tape.matvec(p.u, h_prev)?;
    let z = tape.add(zx, zh)?;
    if tape.value(z).numel() != 4 * hidden {
        return Err(Error::shape(format!(
            "lstm_cell: gate vector has {} elements, expected 4 * {hidden}",
            tape.value(z).numel()
        )));
    }
    let zi = tape.slice(z, 0, hidden)?;
    let zf = tape.slice(z, hidden, hidden)?;
    let zg = tape.slice(z, 2 * hidden, hidden)?;
    let zo = tape.slice(z, 3 * hidden, hidden)?;
    let i = tape.sigmoid(zi);
    let f = tape.sigmoid(zf);
    let g = tape.tanh(zg);
    let o = tape.sigmoid(zo);
    let fc = tape.mul(f, c_prev)?;
    let ig = tape.mul(i, g)?;
    let c = tape.add(fc, ig)?;
    let tc = tape.tanh(c);
    let h = tape.mul(o, tc)?;
    Ok((h, c))
}
