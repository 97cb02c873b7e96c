use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::ensemble::{EnsembleSpec, SubsetId};
use crate::error::{Error, Result};

/// The original model: an input, a sequence of blocks and a classifier.
/// Upstreams are prefixes of its blocks.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OriginalArch {
    pub input_dim: usize,
    pub block_widths: Vec<usize>,
    pub classes: usize,
    /// Number of upstreams in each candidate ensemble.
    #[serde(default = "two")]
    pub upstreams: usize,
}

fn two() -> usize {
    2
}

/// A candidate combiner architecture, identified by `tag`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DownstreamOption {
    pub tag: String,
    #[serde(default)]
    pub hidden: Vec<usize>,
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct FamilyEntry {
    /// Upstream prefix length, in blocks.
    pub blocks: usize,
    pub downstream: String,
    /// Parameter count of the whole ensemble.
    pub demand: u64,
}

/// Resource budget in parameter units; serializes as a number or `"inf"`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "serde_json::Value", into = "serde_json::Value")]
pub enum Budget {
    Limited(u64),
    Unlimited,
}

impl Budget {
    pub fn admits(self, demand: u64) -> bool {
        match self {
            Budget::Limited(b) => demand <= b,
            Budget::Unlimited => true,
        }
    }
}

impl FromStr for Budget {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "inf" | "unlimited" => Ok(Budget::Unlimited),
            other => other
                .parse()
                .map(Budget::Limited)
                .map_err(|_| Error::Argument(format!("budget must be a non-negative integer or \"inf\", got {s:?}"))),
        }
    }
}

impl fmt::Display for Budget {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Budget::Limited(b) => write!(f, "{b}"),
            Budget::Unlimited => f.write_str("inf"),
        }
    }
}

impl TryFrom<serde_json::Value> for Budget {
    type Error = Error;

    fn try_from(v: serde_json::Value) -> Result<Self> {
        match v {
            serde_json::Value::Number(n) => n
                .as_u64()
                .map(Budget::Limited)
                .ok_or_else(|| Error::Argument(format!("budget {n} is not a non-negative integer"))),
            serde_json::Value::String(s) => s.parse(),
            other => Err(Error::Argument(format!("invalid budget {other}"))),
        }
    }
}

impl From<Budget> for serde_json::Value {
    fn from(b: Budget) -> Self {
        match b {
            Budget::Limited(n) => n.into(),
            Budget::Unlimited => "inf".into(),
        }
    }
}

impl OriginalArch {
    pub fn validate(&self) -> Result<()> {
        if self.input_dim == 0 || self.classes == 0 || self.block_widths.is_empty() || self.block_widths.contains(&0) {
            return Err(Error::Argument("original architecture needs positive widths and classes".into()));
        }
        if self.upstreams < 2 {
            return Err(Error::Argument("an ensemble needs at least two upstreams".into()));
        }
        Ok(())
    }

    /// Symmetric ensemble whose upstreams are the first `blocks` blocks.
    pub fn ensemble_spec(&self, blocks: usize, option: &DownstreamOption) -> EnsembleSpec {
        EnsembleSpec::symmetric(
            self.upstreams,
            self.input_dim,
            &self.block_widths[..blocks],
            &option.hidden,
            |_: &SubsetId| self.classes,
        )
    }
}

/// Iterates prefixes (outer) and combiner options (inner), keeping each pair
/// the predicate accepts.
pub fn ensemble_family_with(
    arch: &OriginalArch,
    options: &[DownstreamOption],
    mut feasible: impl FnMut(&FamilyEntry) -> bool,
) -> Result<Vec<FamilyEntry>> {
    arch.validate()?;
    let mut family = Vec::new();
    for blocks in 1..=arch.block_widths.len() {
        for option in options {
            let entry = FamilyEntry {
                blocks,
                downstream: option.tag.clone(),
                demand: arch.ensemble_spec(blocks, option).total_params() as u64,
            };
            if feasible(&entry) {
                family.push(entry);
            }
        }
    }
    Ok(family)
}

/// Ensembles whose total parameter count fits the memory budget.
pub fn ensemble_family(arch: &OriginalArch, options: &[DownstreamOption], budget: Budget) -> Result<Vec<FamilyEntry>> {
    ensemble_family_with(arch, options, |e| budget.admits(e.demand))
}
