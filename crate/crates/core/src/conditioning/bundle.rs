use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{dim_err, param_err, Result};
use crate::numerics::Tensor;
use crate::stage::Stage;

use super::masks::MaskPair;

pub const CONDITION_CHANNELS: usize = 9;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Training,
    Inference,
}

/// Network input for one clip. `z_c` is always `[z_t | z_sd | z_m]` along channels.
#[derive(Clone, Debug, PartialEq)]
pub struct ConditionBundle {
    pub z_t: Tensor,
    pub z_sd: Tensor,
    pub z_m: Tensor,
    pub z_c: Tensor,
}

impl ConditionBundle {
    pub fn frames(&self) -> usize {
        self.z_t.shape()[0]
    }

    /// Forward frame count `f` with `frames = 2f−1`.
    pub fn forward_frames(&self) -> usize {
        self.frames().div_ceil(2)
    }

    pub fn latent_hw(&self) -> (usize, usize) {
        (self.z_t.shape()[2], self.z_t.shape()[3])
    }

    /// Same conditions around a new noisy latent.
    pub fn with_z_t(&self, z_t: Tensor) -> Result<Self> {
        assemble_condition(&z_t, &self.z_sd, &self.z_m)
    }
}

pub fn assemble_condition(z_t: &Tensor, z_sd: &Tensor, z_m: &Tensor) -> Result<ConditionBundle> {
    z_t.expect_rank(4, "z_t")?;
    z_sd.expect_rank(4, "z_sd")?;
    z_m.expect_rank(4, "z_m")?;
    let (t, s, m) = (z_t.shape(), z_sd.shape(), z_m.shape());
    if t[1] != 4 || s != t || m[0] != t[0] || m[1] != 1 || m[2..] != t[2..] {
        return dim_err(format!(
            "condition extents disagree: z_t {t:?}, z_sd {s:?}, z_m {m:?}"
        ));
    }
    let z_c = Tensor::concat_channels(&[z_t, z_sd, z_m])?;
    Ok(ConditionBundle {
        z_t: z_t.clone(),
        z_sd: z_sd.clone(),
        z_m: z_m.clone(),
        z_c,
    })
}

/// One Bernoulli(r) draw deciding whether the turning frame is withheld.
pub fn draw_drop<R: Rng + ?Sized>(r: f64, rng: &mut R) -> Result<bool> {
    if !(0.0..=1.0).contains(&r) {
        return param_err(format!("drop probability {r} outside [0, 1]"));
    }
    Ok(rng.random::<f64>() < r)
}

pub fn drop_last_frame<R: Rng + ?Sized>(latent: &Tensor, r: f64, rng: &mut R) -> Result<Tensor> {
    Ok(if draw_drop(r, rng)? {
        Tensor::zeros(latent.shape())
    } else {
        latent.clone()
    })
}

fn check_forward_frames(f: usize) -> Result<()> {
    if f < 2 {
        return param_err(format!("forward frame count must be ≥ 2, got {f}"));
    }
    Ok(())
}

/// Static/dynamic stacking code `[(2f−1)×4×h×w]`: endpoints hold the first
/// frame, frame `f−1` holds the turning frame in training, zeros elsewhere.
pub fn build_sdslc(f0_lat: &Tensor, flast_lat_or_zero: &Tensor, f: usize, mode: Mode) -> Result<Tensor> {
    check_forward_frames(f)?;
    f0_lat.expect_rank(3, "first-frame latent")?;
    f0_lat.expect_same_shape(flast_lat_or_zero, "build_sdslc")?;
    let zero = Tensor::zeros(f0_lat.shape());
    let frames: Vec<Tensor> = (0..2 * f - 1)
        .map(|i| {
            if i == 0 || i == 2 * f - 2 {
                f0_lat.clone()
            } else if i == f - 1 && mode == Mode::Training {
                flast_lat_or_zero.clone()
            } else {
                zero.clone()
            }
        })
        .collect();
    Tensor::stack(&frames)
}

/// Foreground-mask channel `[(2f−1)×1×h×w]`.
///
/// `last_dropped` must come from the same draw that withheld the turning
/// frame latent; a withheld mask becomes all-ones.
pub fn build_fgsm(masks: &MaskPair, f: usize, stage: Stage, mode: Mode, last_dropped: bool) -> Result<Tensor> {
    check_forward_frames(f)?;
    let (h, w) = masks.spatial();
    let ones = Tensor::ones(&[1, h, w]);
    let n = 2 * f - 1;
    if stage == Stage::One {
        return Ok(Tensor::ones(&[n, 1, h, w]));
    }
    let turning = match mode {
        Mode::Inference => ones.clone(),
        Mode::Training if last_dropped => ones.clone(),
        Mode::Training => match &masks.m_last {
            Some(m) => m.clone(),
            None => {
                return param_err("turning-frame mask required for stage 2/3 training without drop")
            }
        },
    };
    let frames: Vec<Tensor> = (0..n)
        .map(|i| {
            if i == 0 || i == n - 1 {
                masks.m0.clone()
            } else if i == f - 1 {
                turning.clone()
            } else {
                ones.clone()
            }
        })
        .collect();
    Tensor::stack(&frames)
}

/// Drop decision and the two condition tensors for a training sample.
#[derive(Clone, Debug)]
pub struct TrainingConditions {
    pub z_sd: Tensor,
    pub z_m: Tensor,
    pub dropped: bool,
}

/// Draws the shared drop decision once and builds both conditions.
pub fn training_conditions<R: Rng + ?Sized>(
    first_lat: &Tensor,
    turning_lat: &Tensor,
    masks: &MaskPair,
    f: usize,
    stage: Stage,
    r: f64,
    rng: &mut R,
) -> Result<TrainingConditions> {
    let dropped = draw_drop(r, rng)?;
    let turning = if dropped {
        Tensor::zeros(turning_lat.shape())
    } else {
        turning_lat.clone()
    };
    let z_sd = build_sdslc(first_lat, &turning, f, Mode::Training)?;
    let z_m = build_fgsm(masks, f, stage, Mode::Training, dropped)?;
    Ok(TrainingConditions { z_sd, z_m, dropped })
}

/// Conditions for sampling from a single image latent and its mask.
pub fn inference_conditions(first_lat: &Tensor, m0: &Tensor, f: usize, stage: Stage) -> Result<(Tensor, Tensor)> {
    let zero = Tensor::zeros(first_lat.shape());
    let z_sd = build_sdslc(first_lat, &zero, f, Mode::Inference)?;
    let masks = MaskPair::new(m0.clone(), None)?;
    let z_m = build_fgsm(&masks, f, stage, Mode::Inference, false)?;
    Ok((z_sd, z_m))
}
