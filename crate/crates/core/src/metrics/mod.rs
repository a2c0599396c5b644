//! Video quality measures: SSIM-based motion, embedding consistency between
//! consecutive and endpoint frames, and first-frame fidelity.

mod ssim;

pub use ssim::{gaussian_taps, ssim, ssim_from_stats, C1, C2, SIGMA, WINDOW};

use serde::Serialize;

use crate::error::{dim_err, param_err, Result};
use crate::numerics::{compensated_sum, Tensor};

/// Maps an image `[3×H×W]` to a unit-norm feature vector.
pub trait Embedder {
    fn embed(&self, image: &Tensor) -> Result<Vec<f64>>;
}

fn normalise(mut v: Vec<f64>) -> Vec<f64> {
    let norm = compensated_sum(v.iter().map(|x| x * x)).sqrt();
    if norm == 0.0 {
        let u = 1.0 / (v.len() as f64).sqrt();
        v.iter_mut().for_each(|x| *x = u);
    } else {
        v.iter_mut().for_each(|x| *x /= norm);
    }
    v
}

/// Per-channel means of non-overlapping `block×block` tiles, L2-normalised.
#[derive(Clone, Copy, Debug)]
pub struct BlockMeanEmbedder {
    pub block: usize,
}

impl Default for BlockMeanEmbedder {
    fn default() -> Self {
        Self { block: 8 }
    }
}

impl Embedder for BlockMeanEmbedder {
    fn embed(&self, image: &Tensor) -> Result<Vec<f64>> {
        image.expect_rank(3, "embedder input")?;
        let (c, h, w) = (image.shape()[0], image.shape()[1], image.shape()[2]);
        let b = self.block;
        if b == 0 || h % b != 0 || w % b != 0 {
            return dim_err(format!("{h}×{w} not divisible into {b}×{b} blocks"));
        }
        let mut out = Vec::with_capacity(c * (h / b) * (w / b));
        for ch in 0..c {
            for by in 0..h / b {
                for bx in 0..w / b {
                    let mut s = 0.0;
                    for y in 0..b {
                        for x in 0..b {
                            s += image.at(&[ch, by * b + y, bx * b + x]);
                        }
                    }
                    out.push(s / (b * b) as f64);
                }
            }
        }
        Ok(normalise(out))
    }
}

/// Every pixel as a feature, L2-normalised.
#[derive(Clone, Copy, Debug, Default)]
pub struct PixelEmbedder;

impl Embedder for PixelEmbedder {
    fn embed(&self, image: &Tensor) -> Result<Vec<f64>> {
        Ok(normalise(image.data().to_vec()))
    }
}

/// Cosine similarity; exactly 1 for bit-equal inputs since `sqrt(s·s) = s`.
pub fn cosine(a: &[f64], b: &[f64]) -> f64 {
    let dot = compensated_sum(a.iter().zip(b).map(|(x, y)| x * y));
    let na2 = compensated_sum(a.iter().map(|x| x * x));
    let nb2 = compensated_sum(b.iter().map(|x| x * x));
    dot / (na2 * nb2).sqrt()
}

fn check_video(frames: &[Tensor]) -> Result<()> {
    if frames.len() < 2 {
        return param_err(format!("need at least 2 frames, got {}", frames.len()));
    }
    for f in &frames[1..] {
        frames[0].expect_same_shape(f, "video frames")?;
    }
    Ok(())
}

/// `1 − mean SSIM` over consecutive frame pairs.
pub fn motion_score(frames: &[Tensor]) -> Result<f64> {
    check_video(frames)?;
    let sims = frames.windows(2).map(|p| ssim(&p[0], &p[1])).collect::<Result<Vec<_>>>()?;
    Ok(1.0 - compensated_sum(sims.iter().copied()) / sims.len() as f64)
}

/// Mean cosine similarity of consecutive frame embeddings.
pub fn frame_consistency(frames: &[Tensor], e: &dyn Embedder) -> Result<f64> {
    check_video(frames)?;
    let embs = frames.iter().map(|f| e.embed(f)).collect::<Result<Vec<_>>>()?;
    let sims: Vec<f64> = embs.windows(2).map(|p| cosine(&p[0], &p[1])).collect();
    Ok(compensated_sum(sims.iter().copied()) / sims.len() as f64)
}

/// Cosine similarity between the first and last frame embeddings.
pub fn loop_c(frames: &[Tensor], e: &dyn Embedder) -> Result<f64> {
    check_video(frames)?;
    Ok(cosine(&e.embed(&frames[0])?, &e.embed(&frames[frames.len() - 1])?))
}

/// Mean squared error between frame 0 and the input on the 0–255 scale.
pub fn mse_f0(frames: &[Tensor], input: &Tensor) -> Result<f64> {
    let Some(first) = frames.first() else {
        return param_err("empty video");
    };
    first.expect_same_shape(input, "mse_f0")?;
    let n = first.len() as f64;
    Ok(compensated_sum(first.data().iter().zip(input.data()).map(|(a, b)| {
        let d = (a - b) * 255.0;
        d * d
    })) / n)
}

/// One evaluation row.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EvalRecord {
    pub video_id: String,
    pub clip_i: Option<usize>,
    pub mse_f0: f64,
    pub fc: f64,
    pub motion: f64,
    pub loop_c: f64,
    pub frames: usize,
}

pub const REPORT_HEADER: &str = "video_id,clip_i,mse_f0,fc,motion,loop_c,frames";

impl EvalRecord {
    pub fn csv(&self) -> String {
        format!(
            "{},{},{},{},{},{},{}",
            self.video_id,
            self.clip_i.map(|c| c.to_string()).unwrap_or_default(),
            self.mse_f0,
            self.fc,
            self.motion,
            self.loop_c,
            self.frames
        )
    }
}

/// All four measures for one generated video.
pub fn evaluate_video(
    video_id: &str,
    clip_i: Option<usize>,
    frames: &[Tensor],
    input: &Tensor,
    e: &dyn Embedder,
) -> Result<EvalRecord> {
    Ok(EvalRecord {
        video_id: video_id.to_string(),
        clip_i,
        mse_f0: mse_f0(frames, input)?,
        fc: frame_consistency(frames, e)?,
        motion: motion_score(frames)?,
        loop_c: loop_c(frames, e)?,
        frames: frames.len(),
    })
}
