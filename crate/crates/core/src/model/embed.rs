//! Deterministic stand-ins for image and caption encoders.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::conditioning::{toy_encode, LATENT_CHANNELS};
use crate::error::Result;
use crate::numerics::{matmul, Tensor};

const IMAGE_PROJECTION_SEED: u64 = 0x1A6E_0001;

/// Pixels `[3×H×W]` to context tokens `[L×d]`.
pub trait ImageEmbedder: Send + Sync {
    fn embed(&self, image: &Tensor) -> Result<Tensor>;
}

/// Caption to context tokens `[L×d]`; `None` when the caption has no tokens.
pub trait TextEmbedder: Send + Sync {
    fn embed(&self, caption: &str) -> Result<Option<Tensor>>;
}

/// One token per latent position: the four patch coefficients and the
/// normalised row/column coordinate, through a fixed random projection.
#[derive(Clone, Debug)]
pub struct PatchImageEmbedder {
    projection: Tensor,
}

impl PatchImageEmbedder {
    pub fn new(dim: usize) -> Self {
        let features = LATENT_CHANNELS + 2;
        let mut rng = ChaCha8Rng::seed_from_u64(IMAGE_PROJECTION_SEED);
        let projection = Tensor::randn(&[features, dim], 1.0 / (features as f64).sqrt(), &mut rng);
        Self { projection }
    }
}

impl ImageEmbedder for PatchImageEmbedder {
    fn embed(&self, image: &Tensor) -> Result<Tensor> {
        let lat = toy_encode(image)?;
        let (h, w) = (lat.shape()[1], lat.shape()[2]);
        let features = LATENT_CHANNELS + 2;
        let mut tokens = Vec::with_capacity(h * w * features);
        for i in 0..h {
            for j in 0..w {
                for c in 0..LATENT_CHANNELS {
                    tokens.push(lat.at(&[c, i, j]));
                }
                tokens.push((i as f64 + 0.5) / h as f64 - 0.5);
                tokens.push((j as f64 + 0.5) / w as f64 - 0.5);
            }
        }
        matmul(&Tensor::new(vec![h * w, features], tokens)?, &self.projection)
    }
}

/// One Gaussian vector per lowercase alphanumeric word, seeded by its hash.
#[derive(Clone, Debug)]
pub struct HashTextEmbedder {
    dim: usize,
}

impl HashTextEmbedder {
    pub fn new(dim: usize) -> Self {
        Self { dim }
    }
}

pub(crate) fn fnv1a(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

impl TextEmbedder for HashTextEmbedder {
    fn embed(&self, caption: &str) -> Result<Option<Tensor>> {
        let words: Vec<String> = caption
            .split(|c: char| !c.is_alphanumeric())
            .filter(|w| !w.is_empty())
            .map(str::to_lowercase)
            .collect();
        if words.is_empty() {
            return Ok(None);
        }
        let rows: Vec<Tensor> = words
            .iter()
            .map(|w| {
                let mut rng = ChaCha8Rng::seed_from_u64(fnv1a(w.as_bytes()));
                Tensor::randn(&[self.dim], 1.0, &mut rng)
            })
            .collect();
        Ok(Some(Tensor::stack(&rows)?))
    }
}

/// Context tokens for one clip. A missing entry cannot feed a routed block.
#[derive(Clone, Debug, PartialEq)]
pub struct Context {
    pub image: Option<Tensor>,
    pub text: Option<Tensor>,
}

pub struct EmbeddingProviders {
    pub image: Box<dyn ImageEmbedder>,
    pub text: Box<dyn TextEmbedder>,
}

impl EmbeddingProviders {
    pub fn toy(dim: usize) -> Self {
        Self {
            image: Box::new(PatchImageEmbedder::new(dim)),
            text: Box::new(HashTextEmbedder::new(dim)),
        }
    }

    pub fn context(&self, image: &Tensor, caption: &str) -> Result<Context> {
        Ok(Context {
            image: Some(self.image.embed(image)?),
            text: self.text.embed(caption)?,
        })
    }
}
