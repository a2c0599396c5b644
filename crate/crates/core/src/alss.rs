//! Asymmetric loop sampling: frame-index sequences that run forward at a fixed
//! stride to a turning frame, then return to frame 0 through a randomly drawn
//! composition of reverse strides.
//!
//! Reverse strides are drawn exactly uniformly over every admissible
//! composition by walking a dynamic-programming count table, so no rejection
//! loop is involved.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{param_err, Error, Result};

pub const DEFAULT_FORWARD_STRIDE: usize = 6;
pub const DEFAULT_ALLOWED_STRIDES: [usize; 4] = [2, 4, 6, 8];

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct AlssConfig {
    /// Source frames between consecutive forward samples.
    pub stride: usize,
    /// Number of forward samples including frame 0 and the turning frame.
    pub forward_frames: usize,
    /// Admissible reverse strides, sorted ascending without duplicates.
    pub allowed_strides: Vec<usize>,
}

impl AlssConfig {
    pub fn new(stride: usize, forward_frames: usize) -> Result<Self> {
        Self::with_strides(stride, forward_frames, DEFAULT_ALLOWED_STRIDES.to_vec())
    }

    pub fn with_strides(stride: usize, forward_frames: usize, mut allowed: Vec<usize>) -> Result<Self> {
        if stride == 0 {
            return param_err("forward stride must be >= 1");
        }
        if forward_frames < 2 {
            return param_err(format!("forward frame count must be >= 2, got {forward_frames}"));
        }
        allowed.sort_unstable();
        allowed.dedup();
        if allowed.is_empty() || allowed.iter().any(|&d| d == 0 || d % 2 != 0) {
            return param_err(format!(
                "allowed strides must be a non-empty set of positive even integers, got {allowed:?}"
            ));
        }
        let cfg = Self {
            stride,
            forward_frames,
            allowed_strides: allowed,
        };
        if count_compositions(cfg.span(), forward_frames - 1, &cfg.allowed_strides)? == 0 {
            return param_err(format!(
                "infeasible: {} cannot be split into {} strides from {:?}",
                cfg.span(),
                forward_frames - 1,
                cfg.allowed_strides
            ));
        }
        Ok(cfg)
    }

    /// Offset of the turning frame, `s·(f−1)`.
    pub fn span(&self) -> usize {
        self.stride * (self.forward_frames - 1)
    }

    /// Length of every generated sequence, `2f−1`.
    pub fn sequence_len(&self) -> usize {
        2 * self.forward_frames - 1
    }
}

/// Minimum source-video length the sampler can index into.
pub fn required_source_length(cfg: &AlssConfig) -> usize {
    cfg.span() + 1
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct AlssSequence {
    pub indices: Vec<usize>,
    pub turning_index: usize,
}

impl AlssSequence {
    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    /// Strides taken after the turning frame.
    pub fn reverse_strides(&self) -> Vec<usize> {
        self.indices[self.turning_index..]
            .windows(2)
            .map(|w| w[0] - w[1])
            .collect()
    }

    /// Checks every structural property against `cfg`.
    pub fn validate(&self, cfg: &AlssConfig) -> Result<()> {
        let f = cfg.forward_frames;
        let fail = |msg: String| Err(Error::Parameter(format!("invalid ALSS sequence: {msg}")));
        if self.indices.len() != cfg.sequence_len() {
            return fail(format!("length {} != {}", self.indices.len(), cfg.sequence_len()));
        }
        if self.turning_index != f - 1 {
            return fail(format!("turning index {} != {}", self.turning_index, f - 1));
        }
        if self.indices[0] != 0 || self.indices[2 * f - 2] != 0 {
            return fail("endpoints must both be frame 0".into());
        }
        if self.indices[f - 1] != cfg.span() {
            return fail(format!("turning frame {} != {}", self.indices[f - 1], cfg.span()));
        }
        for i in 0..f - 1 {
            if self.indices[i + 1] != self.indices[i] + cfg.stride {
                return fail(format!("forward step at {i} is not {}", cfg.stride));
            }
        }
        let mut total = 0;
        for i in f - 1..2 * f - 2 {
            let (a, b) = (self.indices[i], self.indices[i + 1]);
            if b >= a || !cfg.allowed_strides.contains(&(a - b)) {
                return fail(format!("reverse step {a}->{b} not in {:?}", cfg.allowed_strides));
            }
            total += a - b;
        }
        if total != cfg.span() {
            return fail(format!("reverse strides sum to {total}, expected {}", cfg.span()));
        }
        Ok(())
    }
}

/// `table[p][t]`: ordered `p`-tuples from `allowed` summing to `t`.
fn count_table(total: usize, parts: usize, allowed: &[usize]) -> Result<Vec<Vec<u128>>> {
    let mut table = vec![vec![0u128; total + 1]; parts + 1];
    table[0][0] = 1;
    for p in 1..=parts {
        for t in 0..=total {
            let mut acc: u128 = 0;
            for &d in allowed {
                if d <= t {
                    acc = acc.checked_add(table[p - 1][t - d]).ok_or_else(|| {
                        Error::Parameter(format!(
                            "composition count for {total} into {parts} parts overflows u128"
                        ))
                    })?;
                }
            }
            table[p][t] = acc;
        }
    }
    Ok(table)
}

/// Number of ordered `parts`-tuples drawn from `allowed` that sum to `total`.
///
/// Fails only if the count exceeds `u128`.
pub fn count_compositions(total: usize, parts: usize, allowed: &[usize]) -> Result<u128> {
    Ok(count_table(total, parts, allowed)?[parts][total])
}

/// Exact-uniform reverse-stride sampler with a precomputed count table.
#[derive(Clone, Debug)]
pub struct AlssSampler {
    cfg: AlssConfig,
    table: Vec<Vec<u128>>,
}

impl AlssSampler {
    pub fn new(cfg: AlssConfig) -> Result<Self> {
        let table = count_table(cfg.span(), cfg.forward_frames - 1, &cfg.allowed_strides)?;
        if table[cfg.forward_frames - 1][cfg.span()] == 0 {
            return param_err("infeasible ALSS configuration");
        }
        Ok(Self { cfg, table })
    }

    pub fn config(&self) -> &AlssConfig {
        &self.cfg
    }

    /// Number of distinct reverse-stride compositions.
    pub fn composition_count(&self) -> u128 {
        self.table[self.cfg.forward_frames - 1][self.cfg.span()]
    }

    pub fn sample_strides<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<usize> {
        let parts = self.cfg.forward_frames - 1;
        let mut remaining = self.cfg.span();
        let mut strides = Vec::with_capacity(parts);
        for left in (1..=parts).rev() {
            let total = self.table[left][remaining];
            let mut r = rng.random_range(0..total);
            let mut chosen = None;
            for &d in &self.cfg.allowed_strides {
                if d > remaining {
                    break;
                }
                let c = self.table[left - 1][remaining - d];
                if r < c {
                    chosen = Some(d);
                    break;
                }
                r -= c;
            }
            let d = chosen.expect("count table is consistent");
            strides.push(d);
            remaining -= d;
        }
        debug_assert_eq!(remaining, 0);
        strides
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> AlssSequence {
        let strides = self.sample_strides(rng);
        build_sequence(&self.cfg, &strides).expect("sampled strides are valid")
    }
}

pub fn sample_reverse_strides<R: Rng + ?Sized>(cfg: &AlssConfig, rng: &mut R) -> Result<Vec<usize>> {
    Ok(AlssSampler::new(cfg.clone())?.sample_strides(rng))
}

/// Forward offsets `0, s, …, s(f−1)` followed by the cumulative reverse walk to 0.
pub fn build_sequence(cfg: &AlssConfig, strides: &[usize]) -> Result<AlssSequence> {
    let f = cfg.forward_frames;
    if strides.len() != f - 1 {
        return param_err(format!("expected {} reverse strides, got {}", f - 1, strides.len()));
    }
    if let Some(d) = strides.iter().find(|d| !cfg.allowed_strides.contains(d)) {
        return param_err(format!("stride {d} not in {:?}", cfg.allowed_strides));
    }
    let sum: usize = strides.iter().sum();
    if sum != cfg.span() {
        return param_err(format!("reverse strides sum to {sum}, expected {}", cfg.span()));
    }
    let mut indices: Vec<usize> = (0..f).map(|i| i * cfg.stride).collect();
    let mut pos = cfg.span();
    for &d in strides {
        pos -= d;
        indices.push(pos);
    }
    Ok(AlssSequence {
        indices,
        turning_index: f - 1,
    })
}
