//! Small dense layers with hand-written backward passes.

use nalgebra::DMatrixView;
use rand::Rng;

use crate::checkpoint::{Checkpoint, CheckpointError};

#[derive(Debug, Clone, PartialEq)]
pub struct Linear {
    in_dim: usize,
    out_dim: usize,
    /// `out_dim x in_dim`, row-major.
    pub weight: Vec<f64>,
    pub bias: Vec<f64>,
}

/// Parameter gradients of a [`Linear`] layer.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearGrad {
    pub weight: Vec<f64>,
    pub bias: Vec<f64>,
}

impl Linear {
    pub fn zeros(in_dim: usize, out_dim: usize) -> Self {
        Self { in_dim, out_dim, weight: vec![0.0; in_dim * out_dim], bias: vec![0.0; out_dim] }
    }

    /// Uniform in `±1/sqrt(in_dim)` for weights and bias.
    pub fn random<R: Rng + ?Sized>(in_dim: usize, out_dim: usize, rng: &mut R) -> Self {
        let bound = 1.0 / (in_dim.max(1) as f64).sqrt();
        Self::random_scaled(in_dim, out_dim, bound, rng)
    }

    pub fn random_scaled<R: Rng + ?Sized>(in_dim: usize, out_dim: usize, bound: f64, rng: &mut R) -> Self {
        let mut draw = || rng.random_range(-bound..=bound);
        Self {
            in_dim,
            out_dim,
            weight: (0..in_dim * out_dim).map(|_| draw()).collect(),
            bias: (0..out_dim).map(|_| draw()).collect(),
        }
    }

    /// `W = [I 0]`, zero bias: passes through the first `out_dim` inputs.
    pub fn identity_prefix(in_dim: usize, out_dim: usize) -> Self {
        assert!(in_dim >= out_dim);
        let mut l = Self::zeros(in_dim, out_dim);
        for i in 0..out_dim {
            l.weight[i * in_dim + i] = 1.0;
        }
        l
    }

    pub fn in_dim(&self) -> usize {
        self.in_dim
    }

    pub fn out_dim(&self) -> usize {
        self.out_dim
    }

    pub fn forward_into(&self, x: &[f64], out: &mut [f64]) {
        debug_assert_eq!(x.len(), self.in_dim);
        debug_assert_eq!(out.len(), self.out_dim);
        for (o, (row, b)) in out.iter_mut().zip(self.weight.chunks_exact(self.in_dim.max(1)).zip(&self.bias)) {
            *o = dot(row, x) + b;
        }
    }

    /// Apply the layer to every row of a row-major `rows x in_dim` matrix.
    pub fn forward_rows(&self, x: &[f64], rows: usize) -> Vec<f64> {
        assert_eq!(x.len(), rows * self.in_dim, "input is not rows x in_dim");
        // Column-major views of row-major buffers are transposes: Y^T = W X^T.
        let w = DMatrixView::from_slice(&self.weight, self.in_dim, self.out_dim).transpose();
        let xt = DMatrixView::from_slice(x, self.in_dim, rows);
        let mut yt = w * xt;
        for mut col in yt.column_iter_mut() {
            for (y, b) in col.iter_mut().zip(&self.bias) {
                *y += b;
            }
        }
        yt.data.into()
    }

    pub fn forward(&self, x: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.out_dim];
        self.forward_into(x, &mut out);
        out
    }

    /// Gradients given `x` and `dL/dy`; returns `(dL/dx, parameter grads)`.
    pub fn backward(&self, x: &[f64], grad_out: &[f64]) -> (Vec<f64>, LinearGrad) {
        let mut gx = vec![0.0; self.in_dim];
        let mut gw = vec![0.0; self.weight.len()];
        for (o, &g) in grad_out.iter().enumerate() {
            let row = &self.weight[o * self.in_dim..(o + 1) * self.in_dim];
            let grow = &mut gw[o * self.in_dim..(o + 1) * self.in_dim];
            for i in 0..self.in_dim {
                gx[i] += g * row[i];
                grow[i] = g * x[i];
            }
        }
        (gx, LinearGrad { weight: gw, bias: grad_out.to_vec() })
    }

    pub fn param_count(&self) -> usize {
        self.weight.len() + self.bias.len()
    }

    /// Weights then bias.
    pub fn params(&self) -> Vec<f64> {
        self.weight.iter().chain(&self.bias).copied().collect()
    }

    pub fn set_params(&mut self, p: &[f64]) {
        let (w, b) = p.split_at(self.weight.len());
        self.weight.copy_from_slice(w);
        self.bias.copy_from_slice(b);
    }

    pub fn export(&self, name: &str, ckpt: &mut Checkpoint) {
        ckpt.insert(format!("{name}.weight"), vec![self.out_dim, self.in_dim], self.weight.clone());
        ckpt.insert(format!("{name}.bias"), vec![self.out_dim], self.bias.clone());
    }

    pub fn import(name: &str, ckpt: &Checkpoint) -> Result<Self, CheckpointError> {
        let (shape, weight) = ckpt.get(&format!("{name}.weight"))?;
        let [out_dim, in_dim] = shape[..] else {
            return Err(CheckpointError::Shape(format!("{name}.weight")));
        };
        let bias = ckpt.get_shaped(&format!("{name}.bias"), &[out_dim])?;
        Ok(Self { in_dim, out_dim, weight: weight.to_vec(), bias })
    }
}

impl LinearGrad {
    pub fn flatten(&self) -> Vec<f64> {
        self.weight.iter().chain(&self.bias).copied().collect()
    }
}

/// One hidden layer with rectified-linear activation.
#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    pub hidden: Linear,
    pub output: Linear,
}

impl Mlp {
    pub fn random<R: Rng + ?Sized>(in_dim: usize, hidden: usize, out_dim: usize, rng: &mut R) -> Self {
        Self { hidden: Linear::random(in_dim, hidden, rng), output: Linear::random(hidden, out_dim, rng) }
    }

    /// Random hidden layer, zero output layer: the MLP outputs zeros.
    pub fn zero_output<R: Rng + ?Sized>(in_dim: usize, hidden: usize, out_dim: usize, rng: &mut R) -> Self {
        Self { hidden: Linear::random(in_dim, hidden, rng), output: Linear::zeros(hidden, out_dim) }
    }

    pub fn in_dim(&self) -> usize {
        self.hidden.in_dim()
    }

    pub fn out_dim(&self) -> usize {
        self.output.out_dim()
    }

    fn activations(&self, x: &[f64]) -> Vec<f64> {
        let mut h = self.hidden.forward(x);
        for v in &mut h {
            *v = v.max(0.0);
        }
        h
    }

    pub fn forward(&self, x: &[f64]) -> Vec<f64> {
        self.output.forward(&self.activations(x))
    }

    /// `(dL/dx, dL/dparams)` with parameters flattened as in [`Mlp::params`].
    pub fn backward(&self, x: &[f64], grad_out: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let pre = self.hidden.forward(x);
        let act: Vec<f64> = pre.iter().map(|v| v.max(0.0)).collect();
        let (g_act, g_out) = self.output.backward(&act, grad_out);
        let g_pre: Vec<f64> = g_act.iter().zip(&pre).map(|(g, p)| if *p > 0.0 { *g } else { 0.0 }).collect();
        let (gx, g_hidden) = self.hidden.backward(x, &g_pre);
        let mut gp = g_hidden.flatten();
        gp.extend(g_out.flatten());
        (gx, gp)
    }

    pub fn param_count(&self) -> usize {
        self.hidden.param_count() + self.output.param_count()
    }

    /// Hidden weights, hidden bias, output weights, output bias.
    pub fn params(&self) -> Vec<f64> {
        let mut p = self.hidden.params();
        p.extend(self.output.params());
        p
    }

    pub fn set_params(&mut self, p: &[f64]) {
        let (a, b) = p.split_at(self.hidden.param_count());
        self.hidden.set_params(a);
        self.output.set_params(b);
    }

    pub fn export(&self, name: &str, ckpt: &mut Checkpoint) {
        self.hidden.export(&format!("{name}.hidden"), ckpt);
        self.output.export(&format!("{name}.output"), ckpt);
    }

    pub fn import(name: &str, ckpt: &Checkpoint) -> Result<Self, CheckpointError> {
        Ok(Self {
            hidden: Linear::import(&format!("{name}.hidden"), ckpt)?,
            output: Linear::import(&format!("{name}.output"), ckpt)?,
        })
    }
}

/// Inner product with four independent partial sums, so the compiler
/// can keep the pipeline full. The summation order is fixed.
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len().min(b.len());
    let (a, b) = (&a[..n], &b[..n]);
    let mut acc = [0.0f64; 4];
    let (ca, cb) = (a.chunks_exact(4), b.chunks_exact(4));
    let (ra, rb) = (ca.remainder(), cb.remainder());
    for (x, y) in ca.zip(cb) {
        for k in 0..4 {
            acc[k] += x[k] * y[k];
        }
    }
    let mut tail = 0.0;
    for (x, y) in ra.iter().zip(rb) {
        tail += x * y;
    }
    (acc[0] + acc[1]) + (acc[2] + acc[3]) + tail
}

pub fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Per-token layer normalization with learnable scale and shift.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerNorm {
    pub gamma: Vec<f64>,
    pub beta: Vec<f64>,
}

impl LayerNorm {
    const EPS: f64 = 1e-6;

    pub fn new(dim: usize) -> Self {
        Self { gamma: vec![1.0; dim], beta: vec![0.0; dim] }
    }

    pub fn forward(&self, x: &[f64]) -> Vec<f64> {
        let n = x.len() as f64;
        let mean = x.iter().sum::<f64>() / n;
        let var = x.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
        let inv = 1.0 / (var + Self::EPS).sqrt();
        x.iter().zip(self.gamma.iter().zip(&self.beta)).map(|(v, (g, b))| (v - mean) * inv * g + b).collect()
    }

    pub fn export(&self, name: &str, ckpt: &mut Checkpoint) {
        ckpt.insert(format!("{name}.gamma"), vec![self.gamma.len()], self.gamma.clone());
        ckpt.insert(format!("{name}.beta"), vec![self.beta.len()], self.beta.clone());
    }

    pub fn import(name: &str, ckpt: &Checkpoint) -> Result<Self, CheckpointError> {
        let (shape, gamma) = ckpt.get(&format!("{name}.gamma"))?;
        let beta = ckpt.get_shaped(&format!("{name}.beta"), shape)?;
        Ok(Self { gamma: gamma.to_vec(), beta })
    }
}
