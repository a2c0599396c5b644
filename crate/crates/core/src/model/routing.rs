use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{param_err, Error, Result};

/// Which embedding a cross-attention block attends to.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ContextSource {
    Image,
    Text,
    None,
}

impl FromStr for ContextSource {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "image" => Ok(Self::Image),
            "text" => Ok(Self::Text),
            "none" => Ok(Self::None),
            other => param_err(format!("unknown context source '{other}' (image|text|none)")),
        }
    }
}

impl fmt::Display for ContextSource {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Image => "image",
            Self::Text => "text",
            Self::None => "none",
        })
    }
}

/// Context source per UNet stage.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct RoutingConfig {
    pub down: ContextSource,
    pub middle: ContextSource,
    pub up: ContextSource,
}

impl RoutingConfig {
    pub const PRESET_COUNT: usize = 5;

    /// Ablation presets. Index 0 is the default: appearance into the
    /// downsampling path, semantics into middle and upsampling.
    pub fn preset(index: usize) -> Result<Self> {
        use ContextSource::*;
        let (down, middle, up) = match index {
            0 => (Image, Text, Text),
            1 => (Image, None, Text),
            2 => (Text, Text, Text),
            3 => (Image, Image, Image),
            4 => (Text, Text, Image),
            _ => return param_err(format!("routing preset must be 0..=4, got {index}")),
        };
        Ok(Self { down, middle, up })
    }

    pub fn uses(&self, source: ContextSource) -> bool {
        [self.down, self.middle, self.up].contains(&source)
    }
}

impl Default for RoutingConfig {
    fn default() -> Self {
        Self::preset(0).expect("preset 0 exists")
    }
}

impl fmt::Display for RoutingConfig {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "down={} middle={} up={}", self.down, self.middle, self.up)
    }
}
