use std::cmp::Reverse;
use std::collections::{BTreeMap, BinaryHeap};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::detect::{FailureTrace, ServerEvent};
use super::placement::{place, Part, PartId, PlacementPlan, PlacementPolicy, ServerId, ServerSpec};
use crate::ensemble::SubsetId;
use crate::error::{Error, Result};

/// Work per part and the cost of moving a representation across one edge.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LatencyModel {
    /// Body work of each upstream.
    pub upstream_work: Vec<f64>,
    /// Exit-head work of each upstream, paid only when it serves alone.
    pub exit_work: Vec<f64>,
    /// Combiner work per subset, keyed like `"{1,2}"`.
    #[serde(default)]
    pub downstream_work: BTreeMap<SubsetId, f64>,
    /// Representation size each upstream sends to its combiner.
    pub rep_size: Vec<f64>,
    /// Stages of the sequentially split original model; empty disables the
    /// comparison.
    #[serde(default)]
    pub stage_work: Vec<f64>,
    /// Output size of every stage but the last.
    #[serde(default)]
    pub stage_output_size: Vec<f64>,
    /// Size units per ms.
    pub bandwidth: f64,
    pub rtt_ms: f64,
    /// Extra cost when the detector still believes a dead server is up and
    /// the request must be reissued.
    #[serde(default)]
    pub retry_penalty_ms: f64,
}

impl LatencyModel {
    pub fn transfer(&self, size: f64) -> f64 {
        size / self.bandwidth + self.rtt_ms
    }

    fn validate(&self, m: usize) -> Result<()> {
        if self.upstream_work.len() != m || self.exit_work.len() != m || self.rep_size.len() != m {
            return Err(Error::Config(format!(
                "latency model needs {m} entries for upstream work, exit work and rep size"
            )));
        }
        if !self.stage_work.is_empty() && self.stage_output_size.len() + 1 != self.stage_work.len() {
            return Err(Error::Config("stage_output_size needs one entry per stage boundary".into()));
        }
        let costs = self
            .upstream_work
            .iter()
            .chain(&self.exit_work)
            .chain(self.downstream_work.values())
            .chain(&self.rep_size)
            .chain(&self.stage_work)
            .chain(&self.stage_output_size)
            .chain([&self.rtt_ms, &self.retry_penalty_ms]);
        for &c in costs {
            if !(c.is_finite() && c >= 0.0) {
                return Err(Error::Config(format!("latency costs must be finite and non-negative, got {c}")));
            }
        }
        if !(self.bandwidth.is_finite() && self.bandwidth > 0.0) {
            return Err(Error::Config("bandwidth must be positive".into()));
        }
        if let Some(s) = self.downstream_work.keys().find(|s| s.is_singleton() || !s.fits(m)) {
            return Err(Error::Config(format!("no combiner {s} in a {m}-upstream ensemble")));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AutoPlacement {
    Auto,
}

/// `"auto"` to run the placement heuristic over `demands`, or an explicit
/// part-to-server map.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum PlacementSource {
    Auto(AutoPlacement),
    Explicit(BTreeMap<PartId, ServerId>),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Requests {
    Times(Vec<u64>),
    Periodic { start_ms: u64, end_ms: u64, every_ms: u64 },
}

impl Requests {
    pub fn times(&self) -> Result<Vec<u64>> {
        match *self {
            Requests::Times(ref t) => Ok(t.clone()),
            Requests::Periodic { start_ms, end_ms, every_ms } => {
                if every_ms == 0 {
                    return Err(Error::Config("request period must be positive".into()));
                }
                Ok((start_ms..=end_ms).step_by(every_ms as usize).collect())
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClusterScenario {
    pub servers: Vec<ServerSpec>,
    /// Block count of each upstream; its length is the ensemble size.
    pub upstream_blocks: Vec<usize>,
    pub placement: PlacementSource,
    #[serde(default)]
    pub demands: BTreeMap<PartId, u64>,
    #[serde(default)]
    pub policy: PlacementPolicy,
    pub latency: LatencyModel,
    pub trace: FailureTrace,
    pub requests: Requests,
}

impl ClusterScenario {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Ok(serde_json::from_str(&text)?)
    }

    pub fn m(&self) -> usize {
        self.upstream_blocks.len()
    }

    pub fn server_ids(&self) -> Vec<ServerId> {
        self.servers.iter().map(|s| s.id.clone()).collect()
    }

    /// Every part the scenario deploys.
    pub fn parts(&self) -> Vec<PartId> {
        let m = self.m();
        let mut parts: Vec<PartId> = (1..=m).map(PartId::Upstream).collect();
        parts.extend(self.latency.downstream_work.keys().cloned().map(PartId::Downstream));
        parts.extend((1..=self.latency.stage_work.len()).map(PartId::Stage));
        parts
    }

    /// Validates the scenario and resolves its placement.
    pub fn resolve_placement(&self) -> Result<PlacementPlan> {
        if self.m() == 0 {
            return Err(Error::Config("scenario needs at least one upstream".into()));
        }
        for s in &self.servers {
            if !(s.compute_rate.is_finite() && s.compute_rate > 0.0) {
                return Err(Error::Config(format!("server {:?} needs a positive compute rate", s.id)));
            }
        }
        self.latency.validate(self.m())?;
        self.trace.validate(&self.server_ids()).map_err(|e| Error::Config(e.to_string()))?;
        let parts = self.parts();
        let plan = match &self.placement {
            PlacementSource::Auto(AutoPlacement::Auto) => {
                let with_demand = parts
                    .iter()
                    .map(|p| {
                        let demand =
                            self.demands.get(p).copied().ok_or_else(|| Error::Config(format!("no demand for {p}")))?;
                        Ok(Part { id: p.clone(), demand })
                    })
                    .collect::<Result<Vec<_>>>()?;
                place(&with_demand, &self.servers, self.policy)?
            }
            PlacementSource::Explicit(map) => {
                let plan = PlacementPlan { assignment: map.clone(), demand: self.demands.clone() };
                plan.validate(&self.servers)?;
                plan
            }
        };
        if let Some(p) = parts.iter().find(|p| plan.host(p).is_none()) {
            return Err(Error::Config(format!("placement does not cover {p}")));
        }
        Ok(plan)
    }
}

/// Picks the subset to serve with, given which servers are usable.
///
/// The largest servable combined subset wins (ties: lexicographically
/// smallest); otherwise the live upstream with the most blocks (ties: lowest
/// index); `None` when every upstream is down.
pub fn select_active_subset(
    placement: &PlacementPlan,
    availability: &BTreeMap<ServerId, bool>,
    upstream_blocks: &[usize],
) -> Option<SubsetId> {
    let alive = |part: &PartId| placement.host(part).and_then(|h| availability.get(h)).copied().unwrap_or(false);
    let m = upstream_blocks.len();
    let mut combined = SubsetId::combined(m);
    // `combined` runs by size then lexicographically; scan largest first.
    combined.sort_by(|a, b| b.len().cmp(&a.len()).then_with(|| a.cmp(b)));
    if let Some(s) = combined
        .into_iter()
        .find(|s| s.members().iter().all(|&i| alive(&PartId::Upstream(i))) && alive(&PartId::Downstream(s.clone())))
    {
        return Some(s);
    }
    (1..=m)
        .filter(|&i| alive(&PartId::Upstream(i)))
        .min_by_key(|&i| (Reverse(upstream_blocks[i - 1]), i))
        .map(SubsetId::singleton)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RequestRecord {
    pub time_ms: u64,
    pub subset: Option<SubsetId>,
    pub latency_ms: Option<f64>,
    pub served: bool,
    /// The detector's first choice touched a dead server.
    pub retried: bool,
    pub split_latency_ms: Option<f64>,
    pub split_served: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SimOutput {
    pub placement: PlacementPlan,
    pub records: Vec<RequestRecord>,
}

impl SimOutput {
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(["time", "subset", "latency_ms", "served", "split_latency_ms", "split_served", "retried"])?;
        let opt = |x: Option<f64>| x.map(|v| format!("{v:?}")).unwrap_or_default();
        for r in &self.records {
            w.write_record([
                r.time_ms.to_string(),
                r.subset.as_ref().map(ToString::to_string).unwrap_or_default(),
                opt(r.latency_ms),
                r.served.to_string(),
                opt(r.split_latency_ms),
                r.split_served.to_string(),
                r.retried.to_string(),
            ])?;
        }
        w.flush().map_err(|e| Error::io(path, e))?;
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SimSummary {
    pub requests: usize,
    pub availability: f64,
    pub mean_latency_ms: Option<f64>,
    pub p99_latency_ms: Option<f64>,
    pub split_availability: Option<f64>,
    pub split_mean_latency_ms: Option<f64>,
    pub split_p99_latency_ms: Option<f64>,
    pub retries: usize,
    /// Requests per serving subset; unserved requests count under `"none"`.
    pub subset_usage: BTreeMap<String, usize>,
}

fn mean(xs: &[f64]) -> Option<f64> {
    (!xs.is_empty()).then(|| xs.iter().sum::<f64>() / xs.len() as f64)
}

/// Nearest-rank 99th percentile.
fn p99(xs: &[f64]) -> Option<f64> {
    if xs.is_empty() {
        return None;
    }
    let mut v = xs.to_vec();
    v.sort_by(f64::total_cmp);
    let rank = (0.99 * v.len() as f64).ceil() as usize;
    Some(v[rank.max(1) - 1])
}

pub fn summarize(output: &SimOutput, has_split: bool) -> SimSummary {
    let records = &output.records;
    let n = records.len();
    let frac = |k: usize| if n == 0 { 0.0 } else { k as f64 / n as f64 };
    let lat: Vec<f64> = records.iter().filter_map(|r| r.latency_ms).collect();
    let split: Vec<f64> = records.iter().filter_map(|r| r.split_latency_ms).collect();
    let mut usage = BTreeMap::new();
    for r in records {
        let key = r.subset.as_ref().map_or_else(|| "none".to_string(), ToString::to_string);
        *usage.entry(key).or_insert(0) += 1;
    }
    SimSummary {
        requests: n,
        availability: frac(records.iter().filter(|r| r.served).count()),
        mean_latency_ms: mean(&lat),
        p99_latency_ms: p99(&lat),
        split_availability: has_split.then(|| frac(records.iter().filter(|r| r.split_served).count())),
        split_mean_latency_ms: mean(&split),
        split_p99_latency_ms: p99(&split),
        retries: records.iter().filter(|r| r.retried).count(),
        subset_usage: usage,
    }
}

// Same-time events run in this order: recoveries, heartbeats, failures,
// then requests.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord)]
enum EventKind {
    Up(usize),
    Heartbeat,
    Down(usize),
    Request(usize),
}

struct Cluster<'a> {
    scenario: &'a ClusterScenario,
    placement: &'a PlacementPlan,
    rate: BTreeMap<&'a str, f64>,
}

impl Cluster<'_> {
    fn compute(&self, part: &PartId, work: f64) -> f64 {
        let host = self.placement.host(part).expect("placement covers every part");
        work / self.rate[host.as_str()]
    }

    fn ensemble_latency(&self, s: &SubsetId) -> f64 {
        let lat = &self.scenario.latency;
        if s.is_singleton() {
            let i = s.members()[0];
            let part = PartId::Upstream(i);
            return self.compute(&part, lat.upstream_work[i - 1]) + self.compute(&part, lat.exit_work[i - 1]);
        }
        let slowest = s
            .members()
            .iter()
            .map(|&i| self.compute(&PartId::Upstream(i), lat.upstream_work[i - 1]) + lat.transfer(lat.rep_size[i - 1]))
            .fold(0.0, f64::max);
        let down = lat.downstream_work.get(s).copied().unwrap_or(0.0);
        slowest + self.compute(&PartId::Downstream(s.clone()), down)
    }

    fn split_latency(&self) -> f64 {
        let lat = &self.scenario.latency;
        let stages: f64 = lat.stage_work.iter().enumerate().map(|(k, &w)| self.compute(&PartId::Stage(k + 1), w)).sum();
        stages + lat.stage_output_size.iter().map(|&s| lat.transfer(s)).sum::<f64>()
    }
}

/// Runs the scenario's requests through a single-clock event queue.
pub fn simulate(scenario: &ClusterScenario) -> Result<SimOutput> {
    let placement = scenario.resolve_placement()?;
    let times = scenario.requests.times()?;
    let ids = scenario.server_ids();
    let index: BTreeMap<&str, usize> = ids.iter().enumerate().map(|(k, s)| (s.as_str(), k)).collect();
    let cluster = Cluster {
        scenario,
        placement: &placement,
        rate: scenario.servers.iter().map(|s| (s.id.as_str(), s.compute_rate)).collect(),
    };
    let trace = &scenario.trace;
    let horizon = times.iter().copied().max().unwrap_or(0);

    let mut queue = BinaryHeap::new();
    for e in trace.events.iter().filter(|e| e.time_ms <= horizon) {
        let k = index[e.server.as_str()];
        let kind = match e.event {
            ServerEvent::Up => EventKind::Up(k),
            ServerEvent::Down => EventKind::Down(k),
        };
        queue.push(Reverse((e.time_ms, kind)));
    }
    for (r, &t) in times.iter().enumerate() {
        queue.push(Reverse((t, EventKind::Request(r))));
    }
    if !times.is_empty() {
        queue.push(Reverse((0, EventKind::Heartbeat)));
    }

    let mut up = vec![true; ids.len()];
    let mut last_beat = vec![0u64; ids.len()];
    let mut records: Vec<Option<RequestRecord>> = vec![None; times.len()];
    let timeout = trace.timeout_ms();
    while let Some(Reverse((now, kind))) = queue.pop() {
        match kind {
            EventKind::Up(k) => up[k] = true,
            EventKind::Down(k) => up[k] = false,
            EventKind::Heartbeat => {
                for k in 0..ids.len() {
                    if up[k] {
                        last_beat[k] = now;
                    }
                }
                let next = now + trace.heartbeat_interval_ms;
                if next <= horizon {
                    queue.push(Reverse((next, EventKind::Heartbeat)));
                }
            }
            EventKind::Request(r) => {
                let detected: BTreeMap<ServerId, bool> =
                    ids.iter().enumerate().map(|(k, s)| (s.clone(), now - last_beat[k] < timeout)).collect();
                let usable: BTreeMap<ServerId, bool> =
                    ids.iter().enumerate().map(|(k, s)| (s.clone(), detected[s] && up[k])).collect();
                let believed = select_active_subset(&placement, &detected, &scenario.upstream_blocks);
                let subset = select_active_subset(&placement, &usable, &scenario.upstream_blocks);
                let retried = believed != subset;
                let latency = subset.as_ref().map(|s| {
                    cluster.ensemble_latency(s) + if retried { scenario.latency.retry_penalty_ms } else { 0.0 }
                });
                let has_split = !scenario.latency.stage_work.is_empty();
                let split_served = has_split
                    && (1..=scenario.latency.stage_work.len())
                        .all(|k| placement.host(&PartId::Stage(k)).is_some_and(|h| usable[h]));
                records[r] = Some(RequestRecord {
                    time_ms: now,
                    served: subset.is_some(),
                    subset,
                    latency_ms: latency,
                    retried,
                    split_latency_ms: split_served.then(|| cluster.split_latency()),
                    split_served,
                });
            }
        }
    }
    let records = records.into_iter().map(|r| r.expect("every request is processed")).collect();
    Ok(SimOutput { placement, records })
}
