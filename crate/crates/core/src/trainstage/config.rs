use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::alss::{AlssConfig, DEFAULT_FORWARD_STRIDE};
use crate::error::{Error, Result};
use crate::model::{trainable_mask, GroupSet, NetConfig, RoutingConfig, TEMPORAL_SLOTS};
use crate::stage::Stage;

/// How often each video's loop sequence is redrawn.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AlssMode {
    /// A fresh sequence on every iteration.
    #[default]
    PerIteration,
    /// One sequence per video per pass over the dataset.
    Epoch,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct StageConfig {
    pub stage: Stage,
    pub forward_frames: usize,
    pub stride: usize,
    pub lr: f64,
    pub iterations: u64,
    pub drop_r: f64,
    pub grad_accum: usize,
    pub routing_preset: usize,
    pub seed: u64,
    pub net: NetConfig,
    /// Checkpoint period in iterations; 0 writes only the final checkpoint.
    pub checkpoint_every: u64,
    pub alss_mode: AlssMode,
    pub manifest: Option<PathBuf>,
    pub output_dir: Option<PathBuf>,
}

/// On-disk form: every key optional, unknown keys rejected.
#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawStageConfig {
    stage: u8,
    forward_frames: Option<usize>,
    stride: Option<usize>,
    lr: Option<f64>,
    iterations: Option<u64>,
    drop_r: Option<f64>,
    grad_accum: Option<usize>,
    routing_preset: Option<usize>,
    seed: Option<u64>,
    channels: Option<usize>,
    ctx_dim: Option<usize>,
    checkpoint_every: Option<u64>,
    alss_mode: Option<AlssMode>,
    manifest: Option<PathBuf>,
    output_dir: Option<PathBuf>,
}

impl StageConfig {
    pub fn for_stage(stage: Stage) -> Self {
        Self {
            stage,
            forward_frames: stage.default_forward_frames(),
            stride: DEFAULT_FORWARD_STRIDE,
            lr: stage.default_learning_rate(),
            iterations: stage.default_iterations() as u64,
            drop_r: 0.5,
            grad_accum: 1,
            routing_preset: 0,
            seed: 0,
            net: NetConfig::default(),
            checkpoint_every: 0,
            alss_mode: AlssMode::PerIteration,
            manifest: None,
            output_dir: None,
        }
    }

    /// Parses TOML; relative paths are resolved against `base_dir`.
    pub fn from_toml(text: &str, base_dir: Option<&Path>) -> Result<Self> {
        let raw: RawStageConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        let stage = Stage::from_number(raw.stage).map_err(|e| Error::Config(e.to_string()))?;
        let d = Self::for_stage(stage);
        let resolve = |p: PathBuf| match base_dir {
            Some(b) if p.is_relative() => b.join(p),
            _ => p,
        };
        let cfg = Self {
            stage,
            forward_frames: raw.forward_frames.unwrap_or(d.forward_frames),
            stride: raw.stride.unwrap_or(d.stride),
            lr: raw.lr.unwrap_or(d.lr),
            iterations: raw.iterations.unwrap_or(d.iterations),
            drop_r: raw.drop_r.unwrap_or(d.drop_r),
            grad_accum: raw.grad_accum.unwrap_or(d.grad_accum),
            routing_preset: raw.routing_preset.unwrap_or(d.routing_preset),
            seed: raw.seed.unwrap_or(d.seed),
            net: NetConfig {
                channels: raw.channels.unwrap_or(d.net.channels),
                ctx_dim: raw.ctx_dim.unwrap_or(d.net.ctx_dim),
            },
            checkpoint_every: raw.checkpoint_every.unwrap_or(d.checkpoint_every),
            alss_mode: raw.alss_mode.unwrap_or(d.alss_mode),
            manifest: raw.manifest.map(resolve),
            output_dir: raw.output_dir.map(resolve),
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml(&text, path.parent())
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Config(msg));
        let frames = 2 * self.forward_frames.max(1) - 1;
        if frames > TEMPORAL_SLOTS {
            return bad(format!(
                "2f−1 = {frames} exceeds the {TEMPORAL_SLOTS}-slot temporal position table"
            ));
        }
        if !(0.0..=1.0).contains(&self.drop_r) {
            return bad(format!("drop_r {} outside [0, 1]", self.drop_r));
        }
        if !(self.lr.is_finite() && self.lr > 0.0) {
            return bad(format!("learning rate must be positive, got {}", self.lr));
        }
        if self.grad_accum == 0 {
            return bad("grad_accum must be ≥ 1".into());
        }
        self.routing().map_err(|e| Error::Config(e.to_string()))?;
        self.alss().map_err(|e| Error::Config(e.to_string()))?;
        self.net.validate().map_err(|e| Error::Config(e.to_string()))?;
        Ok(())
    }

    pub fn frames(&self) -> usize {
        2 * self.forward_frames - 1
    }

    pub fn alss(&self) -> Result<AlssConfig> {
        AlssConfig::new(self.stride, self.forward_frames)
    }

    pub fn routing(&self) -> Result<RoutingConfig> {
        RoutingConfig::preset(self.routing_preset)
    }

    pub fn trainable(&self) -> GroupSet {
        trainable_mask(self.stage)
    }
}
