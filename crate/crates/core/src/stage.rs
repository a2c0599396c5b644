use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{param_err, Error, Result};

/// One of the three progressive fine-tuning phases.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "u8", into = "u8")]
pub enum Stage {
    One,
    Two,
    Three,
}

impl Stage {
    pub const ALL: [Stage; 3] = [Stage::One, Stage::Two, Stage::Three];

    pub fn number(self) -> u8 {
        match self {
            Stage::One => 1,
            Stage::Two => 2,
            Stage::Three => 3,
        }
    }

    pub fn from_number(n: u8) -> Result<Self> {
        match n {
            1 => Ok(Stage::One),
            2 => Ok(Stage::Two),
            3 => Ok(Stage::Three),
            _ => param_err(format!("stage must be 1, 2 or 3, got {n}")),
        }
    }

    /// The stage this one fine-tunes from, if any.
    pub fn previous(self) -> Option<Stage> {
        match self {
            Stage::One => None,
            Stage::Two => Some(Stage::One),
            Stage::Three => Some(Stage::Two),
        }
    }

    /// Default forward frame count: 8, 11, 18.
    pub fn default_forward_frames(self) -> usize {
        match self {
            Stage::One => 8,
            Stage::Two => 11,
            Stage::Three => 18,
        }
    }

    /// Generated video length `2f−1` at the default frame count: 15, 21, 35.
    pub fn default_video_frames(self) -> usize {
        2 * self.default_forward_frames() - 1
    }

    pub fn default_learning_rate(self) -> f64 {
        match self {
            Stage::One => 2e-4,
            Stage::Two => 6e-5,
            Stage::Three => 2e-5,
        }
    }

    /// Desk-scale iteration budget (full-scale runs used 200k / 100k / 100k).
    pub fn default_iterations(self) -> usize {
        match self {
            Stage::One => 2000,
            Stage::Two => 1000,
            Stage::Three => 1000,
        }
    }
}

impl TryFrom<u8> for Stage {
    type Error = Error;

    fn try_from(n: u8) -> Result<Self> {
        Stage::from_number(n)
    }
}

impl From<Stage> for u8 {
    fn from(s: Stage) -> u8 {
        s.number()
    }
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.number())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn stage_defaults() {
        let frames: Vec<_> = Stage::ALL.iter().map(|s| s.default_video_frames()).collect();
        assert_eq!(frames, vec![15, 21, 35]);
        assert_eq!(Stage::One.default_learning_rate(), 2e-4);
        assert_eq!(Stage::Two.default_learning_rate(), 6e-5);
        assert_eq!(Stage::Three.default_learning_rate(), 2e-5);
        assert!(Stage::from_number(4).is_err());
        assert_eq!(Stage::Three.previous(), Some(Stage::Two));
    }
}
