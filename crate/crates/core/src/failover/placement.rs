use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::ensemble::SubsetId;
use crate::error::{Error, Result};

pub type ServerId = String;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ServerSpec {
    pub id: ServerId,
    /// Memory capacity in parameter units.
    pub capacity: u64,
    /// Work units processed per millisecond.
    #[serde(default = "unit_rate")]
    pub compute_rate: f64,
}

fn unit_rate() -> f64 {
    1.0
}

/// A deployable piece: an upstream (with its exit), a combiner, or one stage
/// of a sequentially split model. Written as `upstream:1`, `downstream:{1,2}`
/// or `stage:1`.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum PartId {
    Upstream(usize),
    Downstream(SubsetId),
    Stage(usize),
}

impl fmt::Display for PartId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PartId::Upstream(i) => write!(f, "upstream:{i}"),
            PartId::Downstream(s) => write!(f, "downstream:{s}"),
            PartId::Stage(k) => write!(f, "stage:{k}"),
        }
    }
}

impl FromStr for PartId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::Argument(format!("invalid part id {s:?}"));
        let (kind, rest) = s.split_once(':').ok_or_else(bad)?;
        let index = |r: &str| r.trim().parse::<usize>().ok().filter(|&i| i >= 1).ok_or_else(bad);
        match kind.trim() {
            "upstream" => Ok(PartId::Upstream(index(rest)?)),
            "stage" => Ok(PartId::Stage(index(rest)?)),
            "downstream" => Ok(PartId::Downstream(rest.parse()?)),
            _ => Err(bad()),
        }
    }
}

impl TryFrom<String> for PartId {
    type Error = Error;
    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<PartId> for String {
    fn from(p: PartId) -> Self {
        p.to_string()
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Part {
    pub id: PartId,
    pub demand: u64,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PlacementPolicy {
    /// Tightest server that still fits.
    #[default]
    BestFit,
    /// Loosest server; spreads load.
    WorstFit,
}

impl FromStr for PlacementPolicy {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "best-fit" => Ok(Self::BestFit),
            "worst-fit" => Ok(Self::WorstFit),
            _ => Err(Error::Argument(format!("unknown placement policy {s:?}"))),
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct PlacementPlan {
    pub assignment: BTreeMap<PartId, ServerId>,
    #[serde(default)]
    pub demand: BTreeMap<PartId, u64>,
}

impl PlacementPlan {
    pub fn host(&self, part: &PartId) -> Option<&ServerId> {
        self.assignment.get(part)
    }

    pub fn load(&self, server: &str) -> u64 {
        self.assignment
            .iter()
            .filter(|(_, s)| s.as_str() == server)
            .map(|(p, _)| self.demand.get(p).copied().unwrap_or(0))
            .sum()
    }

    /// Every host is a known server and no server is over capacity.
    pub fn validate(&self, servers: &[ServerSpec]) -> Result<()> {
        for (part, host) in &self.assignment {
            if !servers.iter().any(|s| &s.id == host) {
                return Err(Error::Config(format!("{part} placed on unknown server {host:?}")));
            }
        }
        for s in servers {
            let load = self.load(&s.id);
            if load > s.capacity {
                return Err(Error::Config(format!("server {:?} holds {load} > capacity {}", s.id, s.capacity)));
            }
        }
        Ok(())
    }
}

/// Places parts in descending demand (ties by part id). Among servers with
/// room, best-fit picks the least remaining capacity and worst-fit the most;
/// ties go to the earlier server.
pub fn place(parts: &[Part], servers: &[ServerSpec], policy: PlacementPolicy) -> Result<PlacementPlan> {
    let mut ids = std::collections::BTreeSet::new();
    for s in servers {
        if !ids.insert(&s.id) {
            return Err(Error::Config(format!("duplicate server id {:?}", s.id)));
        }
    }
    let mut order: Vec<&Part> = parts.iter().collect();
    order.sort_by(|a, b| b.demand.cmp(&a.demand).then_with(|| a.id.cmp(&b.id)));
    let mut remaining: Vec<u64> = servers.iter().map(|s| s.capacity).collect();
    let mut plan = PlacementPlan::default();
    for part in order {
        if plan.demand.insert(part.id.clone(), part.demand).is_some() {
            return Err(Error::Config(format!("part {} listed twice", part.id)));
        }
        let fits = remaining.iter().enumerate().filter(|(_, &r)| r >= part.demand);
        let chosen = match policy {
            PlacementPolicy::BestFit => fits.min_by_key(|&(j, &r)| (r - part.demand, j)),
            PlacementPolicy::WorstFit => fits.min_by_key(|&(j, &r)| (std::cmp::Reverse(r - part.demand), j)),
        };
        let (j, _) = chosen.ok_or_else(|| Error::Placement { part: part.id.to_string(), demand: part.demand })?;
        remaining[j] -= part.demand;
        plan.assignment.insert(part.id.clone(), servers[j].id.clone());
    }
    Ok(plan)
}

pub fn best_fit_place(parts: &[Part], servers: &[ServerSpec]) -> Result<PlacementPlan> {
    place(parts, servers, PlacementPolicy::BestFit)
}
