use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::dataset::LoadedVideo;
use crate::conditioning::{assemble_condition, downsample_mask, inference_conditions, toy_decode, toy_encode};
use crate::error::Result;
use crate::metrics::{evaluate_video, Embedder, EvalRecord};
use crate::model::{Checkpoint, EmbeddingProviders, RoutingConfig, UNetLite};
use crate::numerics::Tensor;
use crate::schedule::{denoise_loop, initial_latent, LatentInit, NoiseSchedule};
use crate::stage::Stage;
use crate::trainstage::{run_stage, RunOutput, StageConfig, TrainState, TrainingVideo};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GenerateOptions {
    pub steps: usize,
    pub init: LatentInit,
    pub seed: u64,
}

impl Default for GenerateOptions {
    fn default() -> Self {
        Self {
            steps: 25,
            init: LatentInit::Gaussian,
            seed: 0,
        }
    }
}

/// What the sampler needs besides the weights.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SamplerSetup {
    pub stage: Stage,
    pub forward_frames: usize,
    pub routing: RoutingConfig,
}

impl SamplerSetup {
    pub fn from_checkpoint(ckpt: &Checkpoint) -> Self {
        Self {
            stage: ckpt.meta.stage.unwrap_or(Stage::One),
            forward_frames: ckpt.meta.forward_frames,
            routing: ckpt.meta.routing,
        }
    }
}

/// Samples `2f−1` frames `[3×H×W]` from a first frame, caption and optional pixel mask.
pub fn generate_frames(
    net: &UNetLite,
    setup: &SamplerSetup,
    image: &Tensor,
    caption: &str,
    mask: Option<&Tensor>,
    sched: &NoiseSchedule,
    opts: &GenerateOptions,
) -> Result<Vec<Tensor>> {
    let first = toy_encode(image)?;
    let m0 = match mask {
        Some(m) => downsample_mask(m)?,
        None => Tensor::ones(&[1, first.shape()[1], first.shape()[2]]),
    };
    let f = setup.forward_frames;
    let (z_sd, z_m) = inference_conditions(&first, &m0, f, setup.stage)?;
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let z_t = initial_latent(opts.init, &first, 2 * f - 1, sched, &mut rng)?;
    let bundle = assemble_condition(&z_t, &z_sd, &z_m)?;
    let ctx = EmbeddingProviders::toy(net.config().ctx_dim).context(image, caption)?;
    let z0 = denoise_loop(|b, t| net.forward(b, t, &ctx, &setup.routing), &bundle, sched, opts.steps)?;
    (0..z0.shape()[0])
        .map(|i| Ok(toy_decode(&z0.outer(i))?.map(|v| v.clamp(0.0, 1.0))))
        .collect()
}

/// Per-preset evaluation row.
#[derive(Clone, Debug, PartialEq)]
pub struct AblationRecord {
    pub preset: usize,
    pub final_loss: f64,
    pub eval: EvalRecord,
}

pub const ABLATION_HEADER: &str = "preset,final_loss,video_id,clip_i,mse_f0,fc,motion,loop_c,frames";

impl AblationRecord {
    pub fn csv(&self) -> String {
        format!("{},{},{}", self.preset, self.final_loss, self.eval.csv())
    }
}

/// Trains a fresh stage-1 network under `preset` and scores generations from
/// the first frame of every evaluation video.
pub fn ablate_routing(
    base: &StageConfig,
    preset: usize,
    train: &[TrainingVideo],
    eval: &[LoadedVideo],
    embedder: &dyn Embedder,
    sched: &NoiseSchedule,
    opts: &GenerateOptions,
) -> Result<Vec<AblationRecord>> {
    let mut cfg = base.clone();
    cfg.stage = Stage::One;
    cfg.routing_preset = preset;
    cfg.validate()?;
    let mut state = TrainState::fresh(&cfg)?;
    let log = run_stage(&cfg, &mut state, train, sched, &RunOutput::default())?;
    let final_loss = log.last().map_or(f64::NAN, |r| r.loss);
    let setup = SamplerSetup {
        stage: cfg.stage,
        forward_frames: cfg.forward_frames,
        routing: cfg.routing()?,
    };
    eval.iter()
        .map(|v| {
            let frames = generate_frames(&state.net, &setup, &v.frames[0], &v.caption, Some(&v.masks[0]), sched, opts)?;
            Ok(AblationRecord {
                preset,
                final_loss,
                eval: evaluate_video(&v.id, None, &frames, &v.frames[0], embedder)?,
            })
        })
        .collect()
}
