use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{param_err, Error, Result};
use crate::stage::Stage;

/// Partition of the network's parameters used for staged fine-tuning.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum ParamGroup {
    #[serde(rename = "conv_in")]
    ConvIn,
    /// Every cross-attention projection.
    #[serde(rename = "CAB")]
    CrossAttn,
    #[serde(rename = "TEMM.Q")]
    TemmQ,
    #[serde(rename = "TEMM.K")]
    TemmK,
    #[serde(rename = "TEMM.V")]
    TemmV,
    /// Positional tables and output projections of the temporal blocks.
    #[serde(rename = "TEMM.other")]
    TemmOther,
    #[serde(rename = "backbone")]
    Backbone,
}

impl ParamGroup {
    pub const ALL: [ParamGroup; 7] = [
        ParamGroup::ConvIn,
        ParamGroup::CrossAttn,
        ParamGroup::TemmQ,
        ParamGroup::TemmK,
        ParamGroup::TemmV,
        ParamGroup::TemmOther,
        ParamGroup::Backbone,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ParamGroup::ConvIn => "conv_in",
            ParamGroup::CrossAttn => "CAB",
            ParamGroup::TemmQ => "TEMM.Q",
            ParamGroup::TemmK => "TEMM.K",
            ParamGroup::TemmV => "TEMM.V",
            ParamGroup::TemmOther => "TEMM.other",
            ParamGroup::Backbone => "backbone",
        }
    }
}

impl fmt::Display for ParamGroup {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ParamGroup {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        ParamGroup::ALL
            .into_iter()
            .find(|g| g.name() == s)
            .map_or_else(|| param_err(format!("unknown parameter group '{s}'")), Ok)
    }
}

pub type GroupSet = BTreeSet<ParamGroup>;

/// Groups updated during `stage`.
pub fn trainable_mask(stage: Stage) -> GroupSet {
    use ParamGroup::*;
    let groups: &[ParamGroup] = match stage {
        Stage::One => &[ConvIn, CrossAttn, TemmQ, TemmK, TemmV, TemmOther],
        Stage::Two => &[ConvIn, TemmQ, TemmK, TemmV, TemmOther],
        Stage::Three => &[ConvIn, TemmQ, TemmV],
    };
    groups.iter().copied().collect()
}

/// Exact scalar counts per group.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct ParamReport {
    pub groups: BTreeMap<ParamGroup, usize>,
    pub total: usize,
}

impl ParamReport {
    pub fn count(&self, group: ParamGroup) -> usize {
        self.groups.get(&group).copied().unwrap_or(0)
    }

    pub fn trainable_total(&self, set: &GroupSet) -> usize {
        set.iter().map(|&g| self.count(g)).sum()
    }
}
