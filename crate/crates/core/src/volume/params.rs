use rand::Rng;
use serde::{Deserialize, Serialize};

use super::VolumeGrid;
use crate::checkpoint::{Checkpoint, CheckpointError};
use crate::nn::{Linear, Mlp};

/// Shapes of the lifting pipeline.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LiftConfig {
    /// Image feature channels `C`.
    pub channels: usize,
    /// Gate feature channels `C'`.
    pub gate_channels: usize,
    /// Number of historical frames `T` (0 disables temporal fusion).
    pub history_frames: usize,
    /// Seconds between consecutive frames.
    pub frame_interval_s: f64,
    pub gate_hidden: usize,
    pub fourier_levels: usize,
    pub posemb_hidden: usize,
    /// Sparse voxel budget `M`.
    pub top_m: usize,
    pub grid: VolumeGrid,
}

impl Default for LiftConfig {
    fn default() -> Self {
        Self::desk()
    }
}

impl LiftConfig {
    pub fn desk() -> Self {
        Self {
            channels: 64,
            gate_channels: 8,
            history_frames: 1,
            frame_interval_s: 0.5,
            gate_hidden: 64,
            fourier_levels: 6,
            posemb_hidden: 64,
            top_m: 256,
            grid: VolumeGrid::desk(),
        }
    }

    /// Channel widths, grid and voxel budget of the full-size model.
    pub fn full_scale() -> Self {
        Self { channels: 1536, gate_channels: 96, top_m: 6000, grid: VolumeGrid::full_scale(), ..Self::desk() }
    }

    pub fn frames(&self) -> usize {
        self.history_frames + 1
    }
}

/// Learnable blocks of the lifting pipeline.
#[derive(Debug, Clone, PartialEq)]
pub struct LiftParams {
    /// `C -> C'` per-cell reduction ahead of gate lifting.
    pub gate_fc: Linear,
    /// `(T+1) C' -> hidden -> 1`; logistic applied outside.
    pub gate_mlp: Mlp,
    /// Feature assigned to empty space, `C`.
    pub vacant: Vec<f64>,
    /// `6 L -> hidden -> C` over Fourier features of the normalized coordinate.
    pub posemb: Mlp,
    /// `(T+1) C -> C` fusion across frames.
    pub temporal_fc: Linear,
    pub fourier_levels: usize,
}

impl LiftParams {
    /// Fresh parameters: random reduction and gate MLP, zero vacant feature,
    /// zero final position-embedding layer, and `[I 0]` temporal fusion.
    pub fn init<R: Rng + ?Sized>(cfg: &LiftConfig, rng: &mut R) -> Self {
        let c = cfg.channels;
        let frames = cfg.frames();
        Self {
            gate_fc: Linear::random(c, cfg.gate_channels, rng),
            gate_mlp: Mlp::random(frames * cfg.gate_channels, cfg.gate_hidden, 1, rng),
            vacant: vec![0.0; c],
            posemb: Mlp::zero_output(6 * cfg.fourier_levels, cfg.posemb_hidden, c, rng),
            temporal_fc: Linear::identity_prefix(frames * c, c),
            fourier_levels: cfg.fourier_levels,
        }
    }

    /// Every block random, for oracle and gradient tests.
    pub fn random<R: Rng + ?Sized>(cfg: &LiftConfig, rng: &mut R) -> Self {
        let c = cfg.channels;
        let frames = cfg.frames();
        Self {
            gate_fc: Linear::random(c, cfg.gate_channels, rng),
            gate_mlp: Mlp::random(frames * cfg.gate_channels, cfg.gate_hidden, 1, rng),
            vacant: (0..c).map(|_| rng.random_range(-1.0..1.0)).collect(),
            posemb: Mlp::random(6 * cfg.fourier_levels, cfg.posemb_hidden, c, rng),
            temporal_fc: Linear::random(frames * c, c, rng),
            fourier_levels: cfg.fourier_levels,
        }
    }

    pub fn channels(&self) -> usize {
        self.vacant.len()
    }

    pub fn gate_channels(&self) -> usize {
        self.gate_fc.out_dim()
    }

    /// `T + 1`.
    pub fn frames(&self) -> usize {
        self.temporal_fc.in_dim() / self.channels().max(1)
    }

    pub fn export(&self, prefix: &str, ckpt: &mut Checkpoint) {
        self.gate_fc.export(&format!("{prefix}.gate_fc"), ckpt);
        self.gate_mlp.export(&format!("{prefix}.gate_mlp"), ckpt);
        ckpt.insert(format!("{prefix}.vacant"), vec![self.vacant.len()], self.vacant.clone());
        self.posemb.export(&format!("{prefix}.posemb"), ckpt);
        self.temporal_fc.export(&format!("{prefix}.temporal_fc"), ckpt);
    }

    pub fn import(prefix: &str, ckpt: &Checkpoint) -> Result<Self, CheckpointError> {
        let gate_fc = Linear::import(&format!("{prefix}.gate_fc"), ckpt)?;
        let gate_mlp = Mlp::import(&format!("{prefix}.gate_mlp"), ckpt)?;
        let posemb = Mlp::import(&format!("{prefix}.posemb"), ckpt)?;
        let temporal_fc = Linear::import(&format!("{prefix}.temporal_fc"), ckpt)?;
        let c = gate_fc.in_dim();
        let vacant = ckpt.get_shaped(&format!("{prefix}.vacant"), &[c])?;
        let consistent = posemb.out_dim() == c
            && posemb.in_dim() % 6 == 0
            && temporal_fc.out_dim() == c
            && temporal_fc.in_dim() % c.max(1) == 0
            && gate_mlp.in_dim() == (temporal_fc.in_dim() / c.max(1)) * gate_fc.out_dim()
            && gate_mlp.out_dim() == 1;
        if !consistent {
            return Err(CheckpointError::Shape(prefix.to_string()));
        }
        Ok(Self { fourier_levels: posemb.in_dim() / 6, gate_fc, gate_mlp, vacant, posemb, temporal_fc })
    }
}
