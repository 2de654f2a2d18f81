use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{attention_weights, BiasTables, MatRef, RelativeBins, TokenLayout};
use crate::checkpoint::{Checkpoint, CheckpointError};
use crate::nn::{LayerNorm, Linear};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EncoderConfig {
    pub layers: usize,
    pub heads: usize,
    pub dim: usize,
}

impl Default for EncoderConfig {
    fn default() -> Self {
        Self { layers: 2, heads: 4, dim: 64 }
    }
}

/// Pre-norm transformer layer.
#[derive(Debug, Clone, PartialEq)]
pub struct EncoderLayer {
    pub norm_attn: LayerNorm,
    pub wq: Linear,
    pub wk: Linear,
    pub wv: Linear,
    pub wo: Linear,
    pub norm_ff: LayerNorm,
    pub ff_in: Linear,
    pub ff_out: Linear,
}

/// Small transformer encoder whose self-attention carries the relative
/// position bias.
#[derive(Debug, Clone, PartialEq)]
pub struct BiasedEncoder {
    pub config: EncoderConfig,
    pub layers: Vec<EncoderLayer>,
    pub bias: BiasTables,
}

fn project_rows(w: &Linear, x: &[f64], rows: usize) -> Vec<f64> {
    w.forward_rows(x, rows)
}

/// Columns `[start, start + width)` of a row-major `rows x cols` matrix.
fn columns(m: &[f64], cols: usize, start: usize, width: usize) -> Vec<f64> {
    m.chunks_exact(cols).flat_map(|r| r[start..start + width].iter().copied()).collect()
}

impl BiasedEncoder {
    /// Random projections, zero bias tables.
    pub fn init<R: Rng + ?Sized>(config: EncoderConfig, rng: &mut R) -> Self {
        let d = config.dim;
        let layers = (0..config.layers)
            .map(|_| EncoderLayer {
                norm_attn: LayerNorm::new(d),
                wq: Linear::random(d, d, rng),
                wk: Linear::random(d, d, rng),
                wv: Linear::random(d, d, rng),
                wo: Linear::random(d, d, rng),
                norm_ff: LayerNorm::new(d),
                ff_in: Linear::random(d, 2 * d, rng),
                ff_out: Linear::random(2 * d, d, rng),
            })
            .collect();
        Self { bias: BiasTables::zeros(config.layers, config.heads), config, layers }
    }

    pub fn head_dim(&self) -> usize {
        self.config.dim / self.config.heads
    }

    /// Encode `tokens` (`n x dim`, voxel tokens first).
    pub fn forward(&self, tokens: &[f64], layout: &TokenLayout) -> Vec<f64> {
        self.run(tokens, layout, true)
    }

    /// The same network with the relative bias removed entirely.
    pub fn forward_unbiased(&self, tokens: &[f64], layout: &TokenLayout) -> Vec<f64> {
        self.run(tokens, layout, false)
    }

    fn run(&self, tokens: &[f64], layout: &TokenLayout, biased: bool) -> Vec<f64> {
        let d = self.config.dim;
        let n = layout.len();
        assert_eq!(tokens.len(), n * d, "token matrix does not match layout");
        let dh = self.head_dim();
        let bins = biased.then(|| RelativeBins::new(layout));
        let mut x = tokens.to_vec();
        for (l, layer) in self.layers.iter().enumerate() {
            let normed: Vec<f64> = x.chunks_exact(d).flat_map(|r| layer.norm_attn.forward(r)).collect();
            let q = project_rows(&layer.wq, &normed, n);
            let k = project_rows(&layer.wk, &normed, n);
            let v = project_rows(&layer.wv, &normed, n);
            let mut heads_out = vec![0.0; n * d];
            for h in 0..self.config.heads {
                let qh = columns(&q, d, h * dh, dh);
                let kh = columns(&k, d, h * dh, dh);
                let vh = columns(&v, d, h * dh, dh);
                let qm = MatRef { data: &qh, rows: n, cols: dh };
                let km = MatRef { data: &kh, rows: n, cols: dh };
                let b = bins.as_ref().map(|r| r.bias_matrix(self.bias.get(l, h)));
                let p = attention_weights(qm, km, b.as_deref());
                for i in 0..n {
                    let out = &mut heads_out[i * d + h * dh..i * d + (h + 1) * dh];
                    for j in 0..n {
                        let w = p[i * n + j];
                        for (o, vc) in out.iter_mut().zip(&vh[j * dh..(j + 1) * dh]) {
                            *o += w * vc;
                        }
                    }
                }
            }
            let attn = project_rows(&layer.wo, &heads_out, n);
            for (xi, a) in x.iter_mut().zip(&attn) {
                *xi += a;
            }
            let normed: Vec<f64> = x.chunks_exact(d).flat_map(|r| layer.norm_ff.forward(r)).collect();
            let mut hidden = project_rows(&layer.ff_in, &normed, n);
            for v in &mut hidden {
                *v = v.max(0.0);
            }
            let ff = project_rows(&layer.ff_out, &hidden, n);
            for (xi, f) in x.iter_mut().zip(&ff) {
                *xi += f;
            }
        }
        x
    }

    pub fn export(&self, prefix: &str, ckpt: &mut Checkpoint) {
        for (l, layer) in self.layers.iter().enumerate() {
            let p = format!("{prefix}.layer{l}");
            layer.norm_attn.export(&format!("{p}.norm_attn"), ckpt);
            layer.wq.export(&format!("{p}.wq"), ckpt);
            layer.wk.export(&format!("{p}.wk"), ckpt);
            layer.wv.export(&format!("{p}.wv"), ckpt);
            layer.wo.export(&format!("{p}.wo"), ckpt);
            layer.norm_ff.export(&format!("{p}.norm_ff"), ckpt);
            layer.ff_in.export(&format!("{p}.ff_in"), ckpt);
            layer.ff_out.export(&format!("{p}.ff_out"), ckpt);
        }
        self.bias.export(&format!("{prefix}.bias"), ckpt);
    }

    pub fn import(prefix: &str, config: EncoderConfig, ckpt: &Checkpoint) -> Result<Self, CheckpointError> {
        let layers = (0..config.layers)
            .map(|l| {
                let p = format!("{prefix}.layer{l}");
                Ok(EncoderLayer {
                    norm_attn: LayerNorm::import(&format!("{p}.norm_attn"), ckpt)?,
                    wq: Linear::import(&format!("{p}.wq"), ckpt)?,
                    wk: Linear::import(&format!("{p}.wk"), ckpt)?,
                    wv: Linear::import(&format!("{p}.wv"), ckpt)?,
                    wo: Linear::import(&format!("{p}.wo"), ckpt)?,
                    norm_ff: LayerNorm::import(&format!("{p}.norm_ff"), ckpt)?,
                    ff_in: Linear::import(&format!("{p}.ff_in"), ckpt)?,
                    ff_out: Linear::import(&format!("{p}.ff_out"), ckpt)?,
                })
            })
            .collect::<Result<Vec<_>, CheckpointError>>()?;
        let bias = BiasTables::import(&format!("{prefix}.bias"), config.layers, config.heads, ckpt)?;
        Ok(Self { config, layers, bias })
    }
}
