use crate::error::{dim_err, Error, Result};
use crate::numerics::Tensor;

use super::encoder::PATCH;

/// First-frame and turning-frame foreground masks at latent resolution.
#[derive(Clone, Debug, PartialEq)]
pub struct MaskPair {
    pub m0: Tensor,
    pub m_last: Option<Tensor>,
}

impl MaskPair {
    pub fn new(m0: Tensor, m_last: Option<Tensor>) -> Result<Self> {
        check_binary(&m0, "m0")?;
        if let Some(m) = &m_last {
            check_binary(m, "m_last")?;
            if m.shape() != m0.shape() {
                return dim_err(format!("mask shapes differ: {:?} vs {:?}", m0.shape(), m.shape()));
            }
        }
        Ok(Self { m0, m_last })
    }

    pub fn ones(h: usize, w: usize) -> Self {
        Self {
            m0: Tensor::ones(&[1, h, w]),
            m_last: Some(Tensor::ones(&[1, h, w])),
        }
    }

    pub fn spatial(&self) -> (usize, usize) {
        (self.m0.shape()[1], self.m0.shape()[2])
    }
}

fn check_binary(m: &Tensor, what: &str) -> Result<()> {
    if m.rank() != 3 || m.shape()[0] != 1 {
        return dim_err(format!("{what} must be [1×h×w], got {:?}", m.shape()));
    }
    if m.data().iter().any(|&v| v != 0.0 && v != 1.0) {
        return Err(Error::Parameter(format!("{what} is not binary")));
    }
    Ok(())
}

/// Pixel mask `[1×H×W]` (or `[H×W]`) to latent resolution by 8×8 block
/// majority vote. A value counts as foreground when ≥ 0.5; ties go to 1.
pub fn downsample_mask(mask: &Tensor) -> Result<Tensor> {
    let (hh, ww) = match mask.shape() {
        [1, h, w] | [h, w] => (*h, *w),
        s => return dim_err(format!("mask must be [1×H×W] or [H×W], got {s:?}")),
    };
    if hh % PATCH != 0 || ww % PATCH != 0 {
        return dim_err(format!("mask extents {hh}×{ww} not divisible by {PATCH}"));
    }
    let (h, w) = (hh / PATCH, ww / PATCH);
    let d = mask.data();
    let mut out = vec![0.0; h * w];
    for i in 0..h {
        for j in 0..w {
            let mut count = 0;
            for py in 0..PATCH {
                for px in 0..PATCH {
                    if d[(i * PATCH + py) * ww + j * PATCH + px] >= 0.5 {
                        count += 1;
                    }
                }
            }
            if 2 * count >= PATCH * PATCH {
                out[i * w + j] = 1.0;
            }
        }
    }
    Ok(Tensor::from_parts(vec![1, h, w], out))
}

/// Source of foreground masks for a single image `[3×H×W]`.
///
/// Implementations return a binary `[1×H×W]` mask at pixel resolution.
pub trait MaskProvider {
    fn mask(&self, image: &Tensor) -> Result<Tensor>;
}

/// Treats the whole frame as foreground.
#[derive(Clone, Copy, Debug, Default)]
pub struct NullMaskProvider;

impl MaskProvider for NullMaskProvider {
    fn mask(&self, image: &Tensor) -> Result<Tensor> {
        image.expect_rank(3, "mask provider input")?;
        Ok(Tensor::ones(&[1, image.shape()[1], image.shape()[2]]))
    }
}

/// Returns a mask supplied up front, e.g. generator ground truth or a file.
#[derive(Clone, Debug)]
pub struct FixedMaskProvider {
    mask: Tensor,
}

impl FixedMaskProvider {
    pub fn new(mask: Tensor) -> Result<Self> {
        check_binary(&mask, "provided mask")?;
        Ok(Self { mask })
    }
}

impl MaskProvider for FixedMaskProvider {
    fn mask(&self, image: &Tensor) -> Result<Tensor> {
        image.expect_rank(3, "mask provider input")?;
        if image.shape()[1..] != self.mask.shape()[1..] {
            return Err(Error::Provider(format!(
                "mask extents {:?} do not match image {:?}",
                &self.mask.shape()[1..],
                &image.shape()[1..]
            )));
        }
        Ok(self.mask.clone())
    }
}
