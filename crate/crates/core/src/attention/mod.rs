//! Bin-wise relative position bias for self-attention over mixed sparse
//! voxel and text tokens.
//!
//! Every axis (x, y, z for voxels, token position for text) uses the same
//! 32-bin scheme over the signed offset `key - query`:
//!
//! | bins    | offsets                                               |
//! |---------|-------------------------------------------------------|
//! | 0..8    | `[-128, -8)` in half-octave log steps, below -128 clamps to 0 |
//! | 8..24   | `[-8, 8]` in unit steps, `[k, k + 1)`, last bin closed |
//! | 24..32  | `(8, 128]` in half-octave log steps, above 128 clamps to 31 |
//!
//! Log edges are `8 * 2^(k/2)` for `k = 0..=8`.

mod encoder;

pub use encoder::{BiasedEncoder, EncoderConfig, EncoderLayer};

use rand::Rng;
use thiserror::Error;

use crate::checkpoint::{Checkpoint, CheckpointError};
use nalgebra::DMatrixView;

pub const NUM_BINS: usize = 32;
const LINEAR_LIMIT: f64 = 8.0;
const FIRST_LINEAR_BIN: usize = 8;
const FIRST_POSITIVE_LOG_BIN: usize = 24;

/// `8 * 2^(k/2)`, `k = 0..=8`, with the exact powers of two written out.
const LOG_EDGES: [f64; 9] = [
    8.0,
    8.0 * std::f64::consts::SQRT_2,
    16.0,
    16.0 * std::f64::consts::SQRT_2,
    32.0,
    32.0 * std::f64::consts::SQRT_2,
    64.0,
    64.0 * std::f64::consts::SQRT_2,
    128.0,
];

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AttentionError {
    #[error("shape mismatch: {0}")]
    Shape(String),
}

fn log_bin(magnitude: f64) -> usize {
    // magnitude > 8; first k with magnitude <= edge[k + 1], clamped to 7.
    (0..8).find(|&k| magnitude <= LOG_EDGES[k + 1]).unwrap_or(7)
}

/// Bin of a signed relative offset (meters for voxels, token steps for
/// text).
pub fn bin_index(delta: f64) -> usize {
    debug_assert!(!delta.is_nan());
    if delta.abs() <= LINEAR_LIMIT {
        if delta >= LINEAR_LIMIT {
            return FIRST_POSITIVE_LOG_BIN - 1;
        }
        return (delta.floor() + LINEAR_LIMIT) as usize + FIRST_LINEAR_BIN;
    }
    if delta > 0.0 {
        FIRST_POSITIVE_LOG_BIN + log_bin(delta)
    } else {
        FIRST_LINEAR_BIN - 1 - log_bin(-delta)
    }
}

/// Nominal `(low, high)` offsets covered by each bin. Linear bins are
/// `[low, high)` except bin 23 which is closed; positive log bins are
/// `(low, high]`; negative log bins `[low, high)`. The outermost bins also
/// absorb offsets beyond ±128.
pub fn bin_bounds() -> [(f64, f64); NUM_BINS] {
    std::array::from_fn(|b| {
        if b < FIRST_LINEAR_BIN {
            let k = FIRST_LINEAR_BIN - 1 - b;
            (-LOG_EDGES[k + 1], -LOG_EDGES[k])
        } else if b < FIRST_POSITIVE_LOG_BIN {
            let lo = b as f64 - 16.0;
            (lo, lo + 1.0)
        } else {
            let k = b - FIRST_POSITIVE_LOG_BIN;
            (LOG_EDGES[k], LOG_EDGES[k + 1])
        }
    })
}

/// Learnable biases of one attention head in one layer.
#[derive(Debug, Clone, PartialEq)]
pub struct HeadBias {
    pub x: [f64; NUM_BINS],
    pub y: [f64; NUM_BINS],
    pub z: [f64; NUM_BINS],
    pub text: [f64; NUM_BINS],
    /// Text query attending to a voxel key.
    pub text_to_visual: f64,
    /// Voxel query attending to a text key.
    pub visual_to_text: f64,
}

impl HeadBias {
    pub fn zeros() -> Self {
        Self {
            x: [0.0; NUM_BINS],
            y: [0.0; NUM_BINS],
            z: [0.0; NUM_BINS],
            text: [0.0; NUM_BINS],
            text_to_visual: 0.0,
            visual_to_text: 0.0,
        }
    }

    pub fn random<R: Rng + ?Sized>(scale: f64, rng: &mut R) -> Self {
        let mut table = || std::array::from_fn(|_| rng.random_range(-scale..scale));
        let (x, y, z, text) = (table(), table(), table(), table());
        Self {
            x,
            y,
            z,
            text,
            text_to_visual: rng.random_range(-scale..scale),
            visual_to_text: rng.random_range(-scale..scale),
        }
    }

    pub const PARAM_COUNT: usize = 4 * NUM_BINS + 2;

    /// x, y, z, text tables then the two cross-modality scalars.
    pub fn params(&self) -> Vec<f64> {
        let mut p = Vec::with_capacity(Self::PARAM_COUNT);
        for t in [&self.x, &self.y, &self.z, &self.text] {
            p.extend_from_slice(t);
        }
        p.push(self.text_to_visual);
        p.push(self.visual_to_text);
        p
    }

    pub fn from_params(p: &[f64]) -> Self {
        assert_eq!(p.len(), Self::PARAM_COUNT);
        let table = |i: usize| -> [f64; NUM_BINS] { p[i * NUM_BINS..(i + 1) * NUM_BINS].try_into().unwrap() };
        Self {
            x: table(0),
            y: table(1),
            z: table(2),
            text: table(3),
            text_to_visual: p[4 * NUM_BINS],
            visual_to_text: p[4 * NUM_BINS + 1],
        }
    }
}

/// Bias tables for every `(layer, head)`.
#[derive(Debug, Clone, PartialEq)]
pub struct BiasTables {
    layers: usize,
    heads: usize,
    entries: Vec<HeadBias>,
}

impl BiasTables {
    pub fn zeros(layers: usize, heads: usize) -> Self {
        Self { layers, heads, entries: vec![HeadBias::zeros(); layers * heads] }
    }

    pub fn random<R: Rng + ?Sized>(layers: usize, heads: usize, scale: f64, rng: &mut R) -> Self {
        Self { layers, heads, entries: (0..layers * heads).map(|_| HeadBias::random(scale, rng)).collect() }
    }

    pub fn layers(&self) -> usize {
        self.layers
    }

    pub fn heads(&self) -> usize {
        self.heads
    }

    pub fn get(&self, layer: usize, head: usize) -> &HeadBias {
        &self.entries[layer * self.heads + head]
    }

    pub fn get_mut(&mut self, layer: usize, head: usize) -> &mut HeadBias {
        &mut self.entries[layer * self.heads + head]
    }

    pub fn export(&self, prefix: &str, ckpt: &mut Checkpoint) {
        for l in 0..self.layers {
            for h in 0..self.heads {
                let b = self.get(l, h);
                let name = |axis: &str| format!("{prefix}.layer{l}.head{h}.{axis}");
                for (axis, t) in [("bins_x", &b.x), ("bins_y", &b.y), ("bins_z", &b.z), ("bins_p", &b.text)] {
                    ckpt.insert(name(axis), vec![NUM_BINS], t.to_vec());
                }
                ckpt.insert(name("text_to_visual"), vec![1], vec![b.text_to_visual]);
                ckpt.insert(name("visual_to_text"), vec![1], vec![b.visual_to_text]);
            }
        }
    }

    pub fn import(prefix: &str, layers: usize, heads: usize, ckpt: &Checkpoint) -> Result<Self, CheckpointError> {
        let mut t = Self::zeros(layers, heads);
        for l in 0..layers {
            for h in 0..heads {
                let name = |axis: &str| format!("{prefix}.layer{l}.head{h}.{axis}");
                let table = |axis: &str| -> Result<[f64; NUM_BINS], CheckpointError> {
                    Ok(ckpt.get_shaped(&name(axis), &[NUM_BINS])?.try_into().unwrap())
                };
                let b = t.get_mut(l, h);
                b.x = table("bins_x")?;
                b.y = table("bins_y")?;
                b.z = table("bins_z")?;
                b.text = table("bins_p")?;
                b.text_to_visual = ckpt.get_shaped(&name("text_to_visual"), &[1])?[0];
                b.visual_to_text = ckpt.get_shaped(&name("visual_to_text"), &[1])?[0];
            }
        }
        Ok(t)
    }
}

/// Positions of a token sequence: voxel tokens first, then text tokens.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct TokenLayout {
    pub visual_coords: Vec<[f64; 3]>,
    pub text_positions: Vec<f64>,
}

impl TokenLayout {
    pub fn len(&self) -> usize {
        self.visual_coords.len() + self.text_positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Which learnable entry produced one element of a bias matrix.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum BiasSource {
    Visual([usize; 3]),
    Text(usize),
    TextToVisual,
    VisualToText,
}

fn bias_source(layout: &TokenLayout, i: usize, j: usize) -> BiasSource {
    let m = layout.visual_coords.len();
    match (i < m, j < m) {
        (true, true) => {
            let (a, b) = (layout.visual_coords[i], layout.visual_coords[j]);
            BiasSource::Visual([bin_index(b[0] - a[0]), bin_index(b[1] - a[1]), bin_index(b[2] - a[2])])
        }
        (false, false) => BiasSource::Text(bin_index(layout.text_positions[j - m] - layout.text_positions[i - m])),
        (false, true) => BiasSource::TextToVisual,
        (true, false) => BiasSource::VisualToText,
    }
}

/// Bin lookup of every (query, key) pair of a layout, computed once and
/// shared by all heads and layers.
#[derive(Debug, Clone, PartialEq)]
pub struct RelativeBins {
    n: usize,
    sources: Vec<BiasSource>,
}

impl RelativeBins {
    pub fn new(layout: &TokenLayout) -> Self {
        let n = layout.len();
        let sources =
            (0..n).flat_map(|i| (0..n).map(move |j| (i, j))).map(|(i, j)| bias_source(layout, i, j)).collect();
        Self { n, sources }
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    /// `(M + N) x (M + N)` bias, row = query, column = key.
    pub fn bias_matrix(&self, bias: &HeadBias) -> Vec<f64> {
        self.sources
            .iter()
            .map(|s| match *s {
                BiasSource::Visual([bx, by, bz]) => bias.x[bx] + bias.y[by] + bias.z[bz],
                BiasSource::Text(b) => bias.text[b],
                BiasSource::TextToVisual => bias.text_to_visual,
                BiasSource::VisualToText => bias.visual_to_text,
            })
            .collect()
    }

    /// Scatter a gradient w.r.t. the bias matrix back onto the bins.
    pub fn grad_to_bins(&self, grad_matrix: &[f64]) -> HeadBias {
        let mut g = HeadBias::zeros();
        for (s, &v) in self.sources.iter().zip(grad_matrix) {
            match *s {
                BiasSource::Visual([bx, by, bz]) => {
                    g.x[bx] += v;
                    g.y[by] += v;
                    g.z[bz] += v;
                }
                BiasSource::Text(b) => g.text[b] += v,
                BiasSource::TextToVisual => g.text_to_visual += v,
                BiasSource::VisualToText => g.visual_to_text += v,
            }
        }
        g
    }
}

/// `(M + N) x (M + N)` bias, row = query, column = key.
pub fn relative_bias_matrix(layout: &TokenLayout, bias: &HeadBias) -> Vec<f64> {
    RelativeBins::new(layout).bias_matrix(bias)
}

/// Scatter a gradient w.r.t. the bias matrix back onto the bins.
pub fn bias_matrix_grad_to_bins(layout: &TokenLayout, grad_matrix: &[f64]) -> HeadBias {
    RelativeBins::new(layout).grad_to_bins(grad_matrix)
}

/// Row-major `rows x cols` view used by the attention kernels.
#[derive(Debug, Clone, Copy)]
pub struct MatRef<'a> {
    pub data: &'a [f64],
    pub rows: usize,
    pub cols: usize,
}

impl<'a> MatRef<'a> {
    pub fn new(data: &'a [f64], rows: usize, cols: usize) -> Result<Self, AttentionError> {
        if data.len() != rows * cols {
            return Err(AttentionError::Shape(format!("{} values for a {rows}x{cols} matrix", data.len())));
        }
        Ok(Self { data, rows, cols })
    }

    fn row(&self, i: usize) -> &'a [f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }
}

fn check_qkv(q: MatRef, k: MatRef, v: MatRef) -> Result<(), AttentionError> {
    if q.cols == 0 {
        return Err(AttentionError::Shape("head dimension is zero".into()));
    }
    if q.cols != k.cols || q.rows != k.rows || k.rows != v.rows {
        return Err(AttentionError::Shape(format!(
            "q {}x{}, k {}x{}, v {}x{}",
            q.rows, q.cols, k.rows, k.cols, v.rows, v.cols
        )));
    }
    Ok(())
}

/// Row-major `Q K^T / sqrt(d)`.
fn scores(q: MatRef, k: MatRef) -> Vec<f64> {
    let scale = 1.0 / (q.cols as f64).sqrt();
    // A row-major matrix read column-major is its transpose, so the
    // column-major product K Q^T holds Q K^T in row-major order.
    let qt = DMatrixView::from_slice(q.data, q.cols, q.rows);
    let kmat = DMatrixView::from_slice(k.data, k.cols, k.rows).transpose();
    let mut s = kmat * qt;
    s *= scale;
    s.data.into()
}

fn softmax_rows(logits: &mut [f64], n: usize) {
    for row in logits.chunks_exact_mut(n) {
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mut sum = 0.0;
        for v in row.iter_mut() {
            *v = (*v - max).exp();
            sum += *v;
        }
        for v in row.iter_mut() {
            *v /= sum;
        }
    }
}

/// Row-major `P V`, computed as the column-major `V^T P^T`.
fn mix(p: &[f64], v: MatRef) -> Vec<f64> {
    let n = v.rows;
    let vt = DMatrixView::from_slice(v.data, v.cols, n);
    let pt = DMatrixView::from_slice(p, n, n);
    (vt * pt).data.into()
}

/// Row-stochastic attention weights `softmax(Q K^T / sqrt(d) - bias)`.
pub fn attention_weights(q: MatRef, k: MatRef, bias: Option<&[f64]>) -> Vec<f64> {
    let n = q.rows;
    let mut logits = scores(q, k);
    if let Some(b) = bias {
        for (l, b) in logits.iter_mut().zip(b) {
            *l -= b;
        }
    }
    softmax_rows(&mut logits, n);
    logits
}

/// `softmax(Q K^T / sqrt(d)) V`.
pub fn scaled_dot_attention(q: MatRef, k: MatRef, v: MatRef) -> Result<Vec<f64>, AttentionError> {
    check_qkv(q, k, v)?;
    Ok(mix(&attention_weights(q, k, None), v))
}

/// `softmax(Q K^T / sqrt(d) - B) V`; the bias is subtracted from the
/// logits.
pub fn biased_attention(q: MatRef, k: MatRef, v: MatRef, bias: &[f64]) -> Result<Vec<f64>, AttentionError> {
    check_qkv(q, k, v)?;
    if bias.len() != q.rows * q.rows {
        return Err(AttentionError::Shape(format!("bias has {} entries for {} tokens", bias.len(), q.rows)));
    }
    Ok(mix(&attention_weights(q, k, Some(bias)), v))
}

/// Gradient of a loss w.r.t. the bias matrix, given `dL/d(output)`.
pub fn biased_attention_grad_bias(
    q: MatRef,
    k: MatRef,
    v: MatRef,
    bias: &[f64],
    grad_out: &[f64],
) -> Result<Vec<f64>, AttentionError> {
    check_qkv(q, k, v)?;
    let n = q.rows;
    let p = attention_weights(q, k, Some(bias));
    let mut grad = vec![0.0; n * n];
    for i in 0..n {
        let go = &grad_out[i * v.cols..(i + 1) * v.cols];
        // dL/dP_ij = dO_i . V_j
        let gp: Vec<f64> = (0..n).map(|j| go.iter().zip(v.row(j)).map(|(a, b)| a * b).sum()).collect();
        let pi = &p[i * n..(i + 1) * n];
        let dot: f64 = pi.iter().zip(&gp).map(|(a, b)| a * b).sum();
        for j in 0..n {
            // logits = s - b, so dL/db = -dL/dlogit.
            grad[i * n + j] = -pi[j] * (gp[j] - dot);
        }
    }
    Ok(grad)
}
