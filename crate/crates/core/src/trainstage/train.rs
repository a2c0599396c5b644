use std::fs::OpenOptions;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::alss::{required_source_length, AlssSampler, AlssSequence};
use crate::conditioning::{
    assemble_condition, downsample_mask, toy_encode, training_conditions, ConditionBundle, MaskPair,
};
use crate::error::{Error, Result};
use crate::model::{Checkpoint, CheckpointMeta, Context, EmbeddingProviders, GroupSet, UNetLite};
use crate::numerics::Tensor;
use crate::schedule::{q_sample, NoiseSchedule};
use crate::stage::Stage;

use super::config::{AlssMode, StageConfig};
use super::optim::Adam;

/// A source video prepared for training: per-frame latents, latent-resolution
/// masks and image tokens, plus caption tokens.
#[derive(Clone, Debug)]
pub struct TrainingVideo {
    pub id: String,
    pub latents: Vec<Tensor>,
    pub masks: Vec<Tensor>,
    pub image_tokens: Vec<Tensor>,
    pub text_tokens: Option<Tensor>,
}

impl TrainingVideo {
    /// `frames` are `[3×H×W]` pixels, `pixel_masks` binary `[1×H×W]`.
    pub fn from_frames(
        id: impl Into<String>,
        frames: &[Tensor],
        pixel_masks: &[Tensor],
        caption: &str,
        providers: &EmbeddingProviders,
    ) -> Result<Self> {
        let id = id.into();
        if frames.len() != pixel_masks.len() {
            return Err(Error::Data(format!(
                "{id}: {} frames but {} masks",
                frames.len(),
                pixel_masks.len()
            )));
        }
        Ok(Self {
            latents: frames.iter().map(toy_encode).collect::<Result<_>>()?,
            masks: pixel_masks.iter().map(downsample_mask).collect::<Result<_>>()?,
            image_tokens: frames.iter().map(|f| providers.image.embed(f)).collect::<Result<_>>()?,
            text_tokens: providers.text.embed(caption)?,
            id,
        })
    }

    pub fn len(&self) -> usize {
        self.latents.len()
    }

    pub fn is_empty(&self) -> bool {
        self.latents.is_empty()
    }
}

/// Everything a training step mutates.
#[derive(Clone, Debug)]
pub struct TrainState {
    pub net: UNetLite,
    pub adam: Adam,
    pub stage: Stage,
    pub iteration: u64,
    pub seed: u64,
}

impl TrainState {
    /// Pretrained stand-in with freshly extended conv_in; stage 1 only.
    pub fn fresh(cfg: &StageConfig) -> Result<Self> {
        if cfg.stage != Stage::One {
            return Err(Error::Config(format!(
                "stage {} must start from a completed stage {} checkpoint",
                cfg.stage,
                cfg.stage.number() - 1
            )));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        rng.set_stream(u64::MAX);
        let net = UNetLite::new(cfg.net, &mut rng)?;
        let adam = Adam::new(cfg.lr, net.values());
        Ok(Self {
            net,
            adam,
            stage: cfg.stage,
            iteration: 0,
            seed: cfg.seed,
        })
    }

    /// Resumes an unfinished run of the same stage, or starts `cfg.stage`
    /// from the completed previous stage with fresh optimizer state.
    pub fn from_checkpoint(cfg: &StageConfig, ckpt: Checkpoint) -> Result<Self> {
        if *ckpt.net.config() != cfg.net {
            return Err(Error::Config(format!(
                "checkpoint network {:?} differs from config {:?}",
                ckpt.net.config(),
                cfg.net
            )));
        }
        let meta = &ckpt.meta;
        if meta.stage == Some(cfg.stage) {
            let adam = match ckpt.moments {
                Some(m) => Adam::from_moments(cfg.lr, m),
                None => Adam::new(cfg.lr, ckpt.net.values()),
            };
            return Ok(Self {
                iteration: meta.iteration,
                seed: meta.seed,
                net: ckpt.net,
                adam,
                stage: cfg.stage,
            });
        }
        let starts_here = match (meta.stage, cfg.stage.previous()) {
            (None, None) => true,
            (Some(done), Some(prev)) => done == prev && meta.completed,
            _ => false,
        };
        if !starts_here {
            let have = meta.stage.map_or("a fresh network".to_string(), |s| {
                format!("stage {s} ({})", if meta.completed { "completed" } else { "unfinished" })
            });
            return Err(Error::Config(format!(
                "stage {} cannot start from {have}",
                cfg.stage
            )));
        }
        let adam = Adam::new(cfg.lr, ckpt.net.values());
        Ok(Self {
            net: ckpt.net,
            adam,
            stage: cfg.stage,
            iteration: 0,
            seed: cfg.seed,
        })
    }

    pub fn to_checkpoint(&self, cfg: &StageConfig) -> Checkpoint {
        Checkpoint {
            net: self.net.clone(),
            meta: CheckpointMeta {
                stage: Some(self.stage),
                completed: self.iteration >= cfg.iterations,
                iteration: self.iteration,
                seed: self.seed,
                forward_frames: cfg.forward_frames,
                routing: cfg.routing().unwrap_or_default(),
            },
            moments: Some(self.adam.moments()),
        }
    }
}

/// Random stream for one iteration; independent of everything before it.
pub fn iteration_rng(seed: u64, iteration: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(iteration);
    rng
}

/// One fully assembled training example.
#[derive(Clone, Debug)]
pub struct TrainingSample {
    pub video: usize,
    pub offset: usize,
    pub sequence: AlssSequence,
    pub t: usize,
    pub dropped: bool,
    pub z0: Tensor,
    pub eps: Tensor,
    pub bundle: ConditionBundle,
    pub context: Context,
}

/// Latent clip `[(2f−1)×4×h×w]` read from `video` along `seq` starting at `offset`.
pub fn clip_latents(video: &TrainingVideo, offset: usize, seq: &AlssSequence) -> Result<Tensor> {
    let frames: Vec<Tensor> = seq.indices.iter().map(|&i| video.latents[offset + i].clone()).collect();
    Tensor::stack(&frames)
}

fn check_lengths(data: &[TrainingVideo], need: usize) -> Result<()> {
    if data.is_empty() {
        return Err(Error::Data("empty training set".into()));
    }
    for v in data {
        if v.len() < need {
            return Err(Error::Data(format!(
                "video {} has {} frames, loop sampling needs at least {need}",
                v.id,
                v.len()
            )));
        }
    }
    Ok(())
}

/// Draws the `slot`-th example of iteration `iteration`.
pub fn draw_sample<R: Rng + ?Sized>(
    data: &[TrainingVideo],
    cfg: &StageConfig,
    sampler: &AlssSampler,
    sched: &NoiseSchedule,
    position: u64,
    rng: &mut R,
) -> Result<TrainingSample> {
    let need = required_source_length(sampler.config());
    check_lengths(data, need)?;
    let (video, offset, sequence) = match cfg.alss_mode {
        AlssMode::PerIteration => {
            let v = rng.random_range(0..data.len());
            let offset = rng.random_range(0..=data[v].len() - need);
            (v, offset, sampler.sample(rng))
        }
        AlssMode::Epoch => {
            let n = data.len() as u64;
            let v = (position % n) as usize;
            let epoch = position / n;
            let mut erng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0xE90C_0000_0000_0000 ^ epoch);
            erng.set_stream(v as u64);
            let offset = erng.random_range(0..=data[v].len() - need);
            (v, offset, sampler.sample(&mut erng))
        }
    };
    let src = &data[video];
    let z0 = clip_latents(src, offset, &sequence)?;
    let turning = offset + sequence.indices[sequence.turning_index];
    let masks = MaskPair::new(src.masks[offset].clone(), Some(src.masks[turning].clone()))?;
    let cond = training_conditions(
        &src.latents[offset],
        &src.latents[turning],
        &masks,
        cfg.forward_frames,
        cfg.stage,
        cfg.drop_r,
        rng,
    )?;
    let t = rng.random_range(0..sched.steps());
    let eps = Tensor::randn(z0.shape(), 1.0, rng);
    let z_t = q_sample(&z0, t, &eps, sched)?;
    let bundle = assemble_condition(&z_t, &cond.z_sd, &cond.z_m)?;
    let context = Context {
        image: Some(src.image_tokens[offset].clone()),
        text: src.text_tokens.clone(),
    };
    Ok(TrainingSample {
        video,
        offset,
        sequence,
        t,
        dropped: cond.dropped,
        z0,
        eps,
        bundle,
        context,
    })
}

/// Noise-prediction loss and gradients for the parameters in `trainable`.
pub fn sample_loss(
    net: &UNetLite,
    sample: &TrainingSample,
    cfg: &StageConfig,
    trainable: &GroupSet,
) -> Result<(f64, Vec<Option<Tensor>>)> {
    let routing = cfg.routing()?;
    let pass = net.forward_pass(&sample.bundle.z_c, sample.t, &sample.context, &routing, trainable, false)?;
    let mut g = pass.graph;
    let loss_var = g.mse(pass.output, &sample.eps)?;
    let loss = g.value(loss_var).data()[0];
    if !loss.is_finite() {
        return Err(Error::Training(format!(
            "non-finite loss {loss} (video {}, offset {}, t {}, dropped {})",
            sample.video, sample.offset, sample.t, sample.dropped
        )));
    }
    let mut grads = g.backward(loss_var)?;
    let out = pass.params.iter().map(|&p| grads.take(p)).collect();
    Ok((loss, out))
}

/// One optimizer update over `cfg.grad_accum` examples; returns their mean loss.
pub fn training_step(
    state: &mut TrainState,
    data: &[TrainingVideo],
    cfg: &StageConfig,
    sched: &NoiseSchedule,
) -> Result<f64> {
    let sampler = AlssSampler::new(cfg.alss()?)?;
    let trainable = cfg.trainable();
    let mut rng = iteration_rng(state.seed, state.iteration);
    let k = cfg.grad_accum;
    let mut total = 0.0;
    let mut acc: Vec<Option<Tensor>> = vec![None; state.net.values().len()];
    for slot in 0..k {
        let position = state.iteration * k as u64 + slot as u64;
        let sample = draw_sample(data, cfg, &sampler, sched, position, &mut rng)?;
        let (loss, grads) = sample_loss(&state.net, &sample, cfg, &trainable)?;
        total += loss;
        for (a, g) in acc.iter_mut().zip(grads) {
            if let Some(g) = g {
                *a = Some(match a.take() {
                    Some(prev) => prev.add(&g)?,
                    None => g,
                });
            }
        }
    }
    if k > 1 {
        let s = 1.0 / k as f64;
        for g in acc.iter_mut().flatten() {
            *g = g.scale(s);
        }
    }
    state.adam.lr = cfg.lr;
    state.adam.step(state.net.values_mut(), &acc);
    state.iteration += 1;
    Ok(total / k as f64)
}

#[derive(Clone, Debug, PartialEq)]
pub struct LossRecord {
    pub iteration: u64,
    pub stage: Stage,
    pub loss: f64,
    pub lr: f64,
    pub wallclock_ms: u128,
}

pub const LOSS_LOG_HEADER: &str = "iteration,stage,loss,lr,wallclock_ms";

impl LossRecord {
    pub fn csv(&self) -> String {
        format!(
            "{},{},{},{},{}",
            self.iteration, self.stage, self.loss, self.lr, self.wallclock_ms
        )
    }
}

/// Where a run writes checkpoints and its loss log.
#[derive(Clone, Debug, Default)]
pub struct RunOutput {
    pub dir: Option<PathBuf>,
    /// Stop after this many total iterations even if the budget is larger.
    pub stop_at: Option<u64>,
}

pub fn checkpoint_path(dir: &Path, stage: Stage) -> PathBuf {
    dir.join(format!("stage{stage}.ckpt"))
}

pub fn loss_log_path(dir: &Path, stage: Stage) -> PathBuf {
    dir.join(format!("loss_stage{stage}.csv"))
}

fn append_log(path: &Path, records: &[LossRecord]) -> Result<()> {
    let fresh = !path.exists();
    let mut f = OpenOptions::new()
        .create(true)
        .append(true)
        .open(path)
        .map_err(|e| Error::io(path, e))?;
    let mut text = String::new();
    if fresh {
        text.push_str(LOSS_LOG_HEADER);
        text.push('\n');
    }
    for r in records {
        text.push_str(&r.csv());
        text.push('\n');
    }
    f.write_all(text.as_bytes()).map_err(|e| Error::io(path, e))
}

/// Runs `training_step` until the stage budget (or `out.stop_at`) is reached.
pub fn run_stage(
    cfg: &StageConfig,
    state: &mut TrainState,
    data: &[TrainingVideo],
    sched: &NoiseSchedule,
    out: &RunOutput,
) -> Result<Vec<LossRecord>> {
    cfg.validate()?;
    if state.stage != cfg.stage {
        return Err(Error::Config(format!(
            "state is at stage {}, config is stage {}",
            state.stage, cfg.stage
        )));
    }
    check_lengths(data, required_source_length(&cfg.alss()?))?;
    if let Some(dir) = &out.dir {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    let end = out.stop_at.map_or(cfg.iterations, |s| s.min(cfg.iterations));
    let start = Instant::now();
    let mut log = Vec::new();
    let mut pending = Vec::new();
    while state.iteration < end {
        let iteration = state.iteration;
        let loss = training_step(state, data, cfg, sched)?;
        let rec = LossRecord {
            iteration,
            stage: cfg.stage,
            loss,
            lr: cfg.lr,
            wallclock_ms: start.elapsed().as_millis(),
        };
        pending.push(rec.clone());
        log.push(rec);
        let periodic = cfg.checkpoint_every > 0 && state.iteration.is_multiple_of(cfg.checkpoint_every);
        if let (Some(dir), true) = (&out.dir, periodic || state.iteration == end) {
            append_log(&loss_log_path(dir, cfg.stage), &pending)?;
            pending.clear();
            state.to_checkpoint(cfg).save(&checkpoint_path(dir, cfg.stage))?;
        }
    }
    Ok(log)
}

/// Mean of the first and last `window` losses.
pub fn smoothed_endpoints(log: &[LossRecord], window: usize) -> Option<(f64, f64)> {
    if log.len() < window || window == 0 {
        return None;
    }
    let mean = |rs: &[LossRecord]| rs.iter().map(|r| r.loss).sum::<f64>() / rs.len() as f64;
    Some((mean(&log[..window]), mean(&log[log.len() - window..])))
}
