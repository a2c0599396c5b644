//! Binary checkpoint container.
//!
//! Layout: 8-byte magic, `u32` format version, `u32` header length, a JSON
//! header (network config, run metadata, parameter manifest), then every
//! parameter as little-endian `f64` in manifest order, followed by the
//! optimizer's first and second moments when the header says they exist.

use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::Tensor;
use crate::stage::Stage;

use super::net::{NetConfig, ParamSpec, UNetLite};
use super::routing::RoutingConfig;

const MAGIC: &[u8; 8] = b"LOOPANIM";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CheckpointMeta {
    /// Stage that produced the weights; `None` for a fresh network.
    pub stage: Option<Stage>,
    /// Whether that stage ran to its full iteration budget.
    pub completed: bool,
    /// Iterations finished within `stage`.
    pub iteration: u64,
    pub seed: u64,
    pub forward_frames: usize,
    pub routing: RoutingConfig,
}

/// Adam state aligned with the parameter manifest.
#[derive(Clone, Debug, PartialEq)]
pub struct Moments {
    pub step: u64,
    pub m: Vec<Tensor>,
    pub v: Vec<Tensor>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Header {
    config: NetConfig,
    meta: CheckpointMeta,
    params: Vec<ParamSpec>,
    moments_step: Option<u64>,
}

#[derive(Clone, Debug)]
pub struct Checkpoint {
    pub net: UNetLite,
    pub meta: CheckpointMeta,
    pub moments: Option<Moments>,
}

fn ckpt_err<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::Checkpoint(msg.into()))
}

impl Checkpoint {
    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let header = Header {
            config: *self.net.config(),
            meta: self.meta.clone(),
            params: self.net.specs().to_vec(),
            moments_step: self.moments.as_ref().map(|m| m.step),
        };
        let json = serde_json::to_vec(&header).map_err(|e| Error::Checkpoint(e.to_string()))?;
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
        out.extend_from_slice(&(json.len() as u32).to_le_bytes());
        out.extend_from_slice(&json);
        let mut put = |ts: &[Tensor]| {
            for t in ts {
                for v in t.data() {
                    out.extend_from_slice(&v.to_le_bytes());
                }
            }
        };
        put(self.net.values());
        if let Some(m) = &self.moments {
            put(&m.m);
            put(&m.v);
        }
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < 16 || &bytes[..8] != MAGIC {
            return ckpt_err("not a checkpoint file");
        }
        let version = u32::from_le_bytes(bytes[8..12].try_into().unwrap());
        if version != FORMAT_VERSION {
            return ckpt_err(format!("unsupported format version {version}"));
        }
        let hlen = u32::from_le_bytes(bytes[12..16].try_into().unwrap()) as usize;
        let Some(json) = bytes.get(16..16 + hlen) else {
            return ckpt_err("truncated header");
        };
        let header: Header = serde_json::from_slice(json).map_err(|e| Error::Checkpoint(format!("bad header: {e}")))?;
        // Rebuild the layout from the config; the stored manifest must match it exactly.
        let mut net = UNetLite::new(header.config, &mut ChaCha8Rng::seed_from_u64(0))
            .map_err(|e| Error::Checkpoint(format!("bad network config: {e}")))?;
        if net.specs() != header.params.as_slice() {
            let first = net
                .specs()
                .iter()
                .zip(&header.params)
                .find(|(a, b)| a != b)
                .map(|(a, b)| format!("expected {a:?}, found {b:?}"))
                .unwrap_or_else(|| format!("{} vs {} entries", net.specs().len(), header.params.len()));
            return ckpt_err(format!("parameter manifest mismatch: {first}"));
        }
        let numel: usize = header.params.iter().map(ParamSpec::numel).sum();
        let copies = if header.moments_step.is_some() { 3 } else { 1 };
        let body = &bytes[16 + hlen..];
        if body.len() != copies * numel * 8 {
            return ckpt_err(format!(
                "payload holds {} bytes, expected {}",
                body.len(),
                copies * numel * 8
            ));
        }
        let mut values = body
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()));
        let mut read_set = || -> Result<Vec<Tensor>> {
            header
                .params
                .iter()
                .map(|s| Tensor::new(s.shape.clone(), values.by_ref().take(s.numel()).collect()))
                .collect()
        };
        net.set_values(read_set()?)?;
        let moments = match header.moments_step {
            Some(step) => Some(Moments {
                step,
                m: read_set()?,
                v: read_set()?,
            }),
            None => None,
        };
        Ok(Self {
            net,
            meta: header.meta,
            moments,
        })
    }

    /// Writes to a sibling temporary file and renames it into place.
    pub fn save(&self, path: &Path) -> Result<()> {
        let bytes = self.to_bytes()?;
        let tmp = path.with_extension("tmp");
        {
            let f = fs::File::create(&tmp).map_err(|e| Error::io(&tmp, e))?;
            let mut w = BufWriter::new(f);
            w.write_all(&bytes).map_err(|e| Error::io(&tmp, e))?;
            w.flush().map_err(|e| Error::io(&tmp, e))?;
        }
        fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes)
    }
}
