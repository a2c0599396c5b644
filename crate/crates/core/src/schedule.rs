//! Noise schedule, closed-form forward noising, and the deterministic
//! DDIM-style (eta = 0) sampler.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::conditioning::ConditionBundle;
use crate::error::{param_err, Error, Result};
use crate::numerics::Tensor;

pub const DEFAULT_STEPS: usize = 1000;
pub const DEFAULT_BETA_START: f64 = 1e-4;
pub const DEFAULT_BETA_END: f64 = 2e-2;

#[derive(Clone, Debug, PartialEq)]
pub struct NoiseSchedule {
    betas: Vec<f64>,
    alphas: Vec<f64>,
    alpha_bars: Vec<f64>,
}

impl Default for NoiseSchedule {
    fn default() -> Self {
        Self::linear(DEFAULT_STEPS, DEFAULT_BETA_START, DEFAULT_BETA_END)
            .expect("default schedule is valid")
    }
}

impl NoiseSchedule {
    /// Betas linearly spaced from `beta_start` to `beta_end`, both inclusive.
    pub fn linear(steps: usize, beta_start: f64, beta_end: f64) -> Result<Self> {
        if steps == 0 {
            return param_err("schedule needs at least one step");
        }
        if !(beta_start > 0.0 && beta_start <= beta_end && beta_end < 1.0) {
            return param_err(format!(
                "need 0 < beta_start <= beta_end < 1, got {beta_start}..{beta_end}"
            ));
        }
        let betas: Vec<f64> = (0..steps)
            .map(|i| {
                if steps == 1 {
                    beta_start
                } else {
                    beta_start + (beta_end - beta_start) * i as f64 / (steps - 1) as f64
                }
            })
            .collect();
        Self::from_betas(betas)
    }

    pub fn from_betas(betas: Vec<f64>) -> Result<Self> {
        if betas.is_empty() {
            return param_err("schedule needs at least one step");
        }
        if let Some(b) = betas.iter().find(|b| !(**b > 0.0 && **b < 1.0)) {
            return param_err(format!("beta {b} outside (0, 1)"));
        }
        let alphas: Vec<f64> = betas.iter().map(|b| 1.0 - b).collect();
        let alpha_bars = alphas
            .iter()
            .scan(1.0, |acc, a| {
                *acc *= a;
                Some(*acc)
            })
            .collect();
        Ok(Self {
            betas,
            alphas,
            alpha_bars,
        })
    }

    pub fn steps(&self) -> usize {
        self.betas.len()
    }

    pub fn betas(&self) -> &[f64] {
        &self.betas
    }

    pub fn alphas(&self) -> &[f64] {
        &self.alphas
    }

    pub fn alpha_bars(&self) -> &[f64] {
        &self.alpha_bars
    }

    pub fn alpha_bar(&self, t: usize) -> f64 {
        self.alpha_bars[t]
    }

    fn check_step(&self, t: usize) -> Result<()> {
        if t >= self.steps() {
            return param_err(format!("timestep {t} outside [0, {})", self.steps()));
        }
        Ok(())
    }
}

/// `√ᾱ_t·z0 + √(1−ᾱ_t)·eps`
pub fn q_sample(z0: &Tensor, t: usize, eps: &Tensor, sched: &NoiseSchedule) -> Result<Tensor> {
    sched.check_step(t)?;
    let ab = sched.alpha_bar(t);
    let (a, b) = (ab.sqrt(), (1.0 - ab).sqrt());
    z0.zip_map(eps, |z, e| a * z + b * e)
}

/// Inverts [`q_sample`] given the noise: `(x_t − √(1−ᾱ_t)·eps)/√ᾱ_t`.
pub fn predict_z0(x_t: &Tensor, t: usize, eps: &Tensor, sched: &NoiseSchedule) -> Result<Tensor> {
    sched.check_step(t)?;
    let ab = sched.alpha_bar(t);
    let (a, b) = (ab.sqrt(), (1.0 - ab).sqrt());
    x_t.zip_map(eps, |x, e| (x - b * e) / a)
}

/// Evenly spaced descending timesteps starting at `T−1`.
pub fn sampling_timesteps(total: usize, num_steps: usize) -> Vec<usize> {
    (0..num_steps).map(|i| total - 1 - i * total / num_steps).collect()
}

/// How the `z_t` slot of an inference bundle is initialised.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LatentInit {
    /// Independent unit Gaussian draws for every frame.
    #[default]
    Gaussian,
    /// The first-frame latent tiled over time and noised to the final timestep.
    Degraded,
}

impl std::str::FromStr for LatentInit {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "gaussian" => Ok(Self::Gaussian),
            "degraded" => Ok(Self::Degraded),
            other => param_err(format!("unknown latent init '{other}' (gaussian|degraded)")),
        }
    }
}

/// Starting latent video `[frames×C×h×w]` for sampling from a first-frame latent `[C×h×w]`.
pub fn initial_latent<R: Rng + ?Sized>(
    init: LatentInit,
    first_latent: &Tensor,
    frames: usize,
    sched: &NoiseSchedule,
    rng: &mut R,
) -> Result<Tensor> {
    let mut shape = vec![frames];
    shape.extend_from_slice(first_latent.shape());
    let noise = Tensor::randn(&shape, 1.0, rng);
    match init {
        LatentInit::Gaussian => Ok(noise),
        LatentInit::Degraded => {
            let tiled = Tensor::stack(&vec![first_latent.clone(); frames])?;
            q_sample(&tiled, sched.steps() - 1, &noise, sched)
        }
    }
}

/// Runs `num_steps` deterministic DDIM updates from the bundle's `z_t`, taken to
/// sit at timestep `T−1`, and returns the final clean-latent estimate.
///
/// `model(bundle, t)` must return a noise prediction shaped like `bundle.z_t`.
pub fn denoise_loop<F>(
    mut model: F,
    bundle: &ConditionBundle,
    sched: &NoiseSchedule,
    num_steps: usize,
) -> Result<Tensor>
where
    F: FnMut(&ConditionBundle, usize) -> Result<Tensor>,
{
    if num_steps > sched.steps() {
        return param_err(format!(
            "num_steps {num_steps} exceeds schedule length {}",
            sched.steps()
        ));
    }
    let timesteps = sampling_timesteps(sched.steps(), num_steps);
    let mut current = bundle.clone();
    for (i, &t) in timesteps.iter().enumerate() {
        let eps = model(&current, t)?;
        if eps.shape() != current.z_t.shape() {
            return Err(Error::Contract(format!(
                "model returned {:?}, expected {:?}",
                eps.shape(),
                current.z_t.shape()
            )));
        }
        let z0 = predict_z0(&current.z_t, t, &eps, sched)?;
        let next = match timesteps.get(i + 1) {
            Some(&t_prev) => {
                let ab = sched.alpha_bar(t_prev);
                let (a, b) = (ab.sqrt(), (1.0 - ab).sqrt());
                z0.zip_map(&eps, |z, e| a * z + b * e)?
            }
            None => z0,
        };
        current = current.with_z_t(next)?;
    }
    Ok(current.z_t)
}
