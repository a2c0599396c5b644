//! Fixed linear patch codec standing in for a learned image autoencoder.
//!
//! Each non-overlapping 8×8×3 pixel patch is projected onto four orthonormal
//! vectors: the three per-channel patch means and one luminance ramp along
//! the patch rows. Coefficients are multiplied by [`LATENT_SCALE`], which
//! makes the first three latent channels equal to the RGB patch means.
//! Decoding is the adjoint, so `decode(encode(x))` is the orthogonal
//! projection of `x` onto the retained subspace.

use crate::error::{dim_err, Result};
use crate::numerics::Tensor;

pub const PATCH: usize = 8;
pub const LATENT_CHANNELS: usize = 4;
pub const IMAGE_CHANNELS: usize = 3;
pub const LATENT_SCALE: f64 = 1.0 / 8.0;

/// Basis vector `k` evaluated at pixel `(c, py, px)` of a patch.
pub fn basis(k: usize, c: usize, py: usize, _px: usize) -> f64 {
    match k {
        0..=2 => {
            if c == k {
                1.0 / PATCH as f64
            } else {
                0.0
            }
        }
        3 => {
            // Σ_py (py − 3.5)² = 42 over 8 rows, times 8 columns and 3 channels
            let norm = (IMAGE_CHANNELS as f64 * PATCH as f64 * 42.0).sqrt();
            (py as f64 - 3.5) / norm
        }
        _ => panic!("basis index {k} out of range"),
    }
}

fn basis_table() -> Vec<f64> {
    let mut t = Vec::with_capacity(LATENT_CHANNELS * IMAGE_CHANNELS * PATCH * PATCH);
    for k in 0..LATENT_CHANNELS {
        for c in 0..IMAGE_CHANNELS {
            for py in 0..PATCH {
                for px in 0..PATCH {
                    t.push(basis(k, c, py, px));
                }
            }
        }
    }
    t
}

/// `[3×H×W]` pixels → `[4×H/8×W/8]` latent.
pub fn toy_encode(image: &Tensor) -> Result<Tensor> {
    image.expect_rank(3, "toy_encode")?;
    let s = image.shape();
    if s[0] != IMAGE_CHANNELS || !s[1].is_multiple_of(PATCH) || !s[2].is_multiple_of(PATCH) {
        return dim_err(format!(
            "toy_encode needs [3×H×W] with H, W divisible by {PATCH}, got {s:?}"
        ));
    }
    let (hh, ww) = (s[1], s[2]);
    let (h, w) = (hh / PATCH, ww / PATCH);
    let table = basis_table();
    let px_per_k = IMAGE_CHANNELS * PATCH * PATCH;
    let d = image.data();
    let mut out = vec![0.0; LATENT_CHANNELS * h * w];
    for i in 0..h {
        for j in 0..w {
            for k in 0..LATENT_CHANNELS {
                let b = &table[k * px_per_k..(k + 1) * px_per_k];
                let mut acc = 0.0;
                for c in 0..IMAGE_CHANNELS {
                    for py in 0..PATCH {
                        let row = c * hh * ww + (i * PATCH + py) * ww + j * PATCH;
                        let brow = &b[(c * PATCH + py) * PATCH..(c * PATCH + py + 1) * PATCH];
                        for px in 0..PATCH {
                            acc += brow[px] * d[row + px];
                        }
                    }
                }
                out[k * h * w + i * w + j] = acc * LATENT_SCALE;
            }
        }
    }
    Ok(Tensor::from_parts(vec![LATENT_CHANNELS, h, w], out))
}

/// `[4×h×w]` latent → `[3×8h×8w]` pixels.
pub fn toy_decode(latent: &Tensor) -> Result<Tensor> {
    latent.expect_rank(3, "toy_decode")?;
    let s = latent.shape();
    if s[0] != LATENT_CHANNELS {
        return dim_err(format!("toy_decode needs {LATENT_CHANNELS} channels, got {s:?}"));
    }
    let (h, w) = (s[1], s[2]);
    let (hh, ww) = (h * PATCH, w * PATCH);
    let table = basis_table();
    let px_per_k = IMAGE_CHANNELS * PATCH * PATCH;
    let d = latent.data();
    let mut out = vec![0.0; IMAGE_CHANNELS * hh * ww];
    for i in 0..h {
        for j in 0..w {
            for k in 0..LATENT_CHANNELS {
                let coef = d[k * h * w + i * w + j] / LATENT_SCALE;
                let b = &table[k * px_per_k..(k + 1) * px_per_k];
                for c in 0..IMAGE_CHANNELS {
                    for py in 0..PATCH {
                        let row = c * hh * ww + (i * PATCH + py) * ww + j * PATCH;
                        let brow = &b[(c * PATCH + py) * PATCH..(c * PATCH + py + 1) * PATCH];
                        for px in 0..PATCH {
                            out[row + px] += brow[px] * coef;
                        }
                    }
                }
            }
        }
    }
    Ok(Tensor::from_parts(vec![IMAGE_CHANNELS, hh, ww], out))
}

/// Encodes each frame of `[T×3×H×W]` into `[T×4×h×w]`.
pub fn encode_frames(frames: &[Tensor]) -> Result<Vec<Tensor>> {
    frames.iter().map(toy_encode).collect()
}
