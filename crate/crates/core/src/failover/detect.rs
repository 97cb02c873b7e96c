use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::placement::ServerId;
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ServerEvent {
    Up,
    Down,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TraceEvent {
    pub time_ms: u64,
    pub server: ServerId,
    pub event: ServerEvent,
}

/// Ground-truth up/down history plus the heartbeat detector settings.
///
/// Every server is up at time 0. A server emits a heartbeat at each multiple
/// of the interval at which it is up; the instant it fails and the instant it
/// recovers both count as up. It is deemed failed once
/// `interval * multiplier` ms pass without a heartbeat.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FailureTrace {
    #[serde(default)]
    pub events: Vec<TraceEvent>,
    pub heartbeat_interval_ms: u64,
    pub timeout_multiplier: u64,
}

impl FailureTrace {
    /// Builds a trace from per-server down windows `[down, up)`; overlapping
    /// or touching windows of one server merge, `None` never recovers.
    pub fn from_down_windows(
        windows: &BTreeMap<ServerId, Vec<(u64, Option<u64>)>>,
        heartbeat_interval_ms: u64,
        timeout_multiplier: u64,
    ) -> Result<Self> {
        let mut events = Vec::new();
        for (server, ws) in windows {
            let mut ws = ws.clone();
            if let Some(&(d, u)) = ws.iter().find(|&&(d, u)| u.is_some_and(|u| u <= d)) {
                return Err(Error::Trace(format!("window [{d}, {u:?}) of {server:?} is empty")));
            }
            ws.sort();
            let mut merged: Vec<(u64, Option<u64>)> = Vec::new();
            for (d, u) in ws {
                match merged.last_mut() {
                    Some((_, last)) if last.is_none_or(|l| d <= l) => {
                        *last = match (*last, u) {
                            (Some(a), Some(b)) => Some(a.max(b)),
                            _ => None,
                        };
                    }
                    _ => merged.push((d, u)),
                }
            }
            for (d, u) in merged {
                events.push(TraceEvent { time_ms: d, server: server.clone(), event: ServerEvent::Down });
                if let Some(u) = u {
                    events.push(TraceEvent { time_ms: u, server: server.clone(), event: ServerEvent::Up });
                }
            }
        }
        events.sort_by(|a, b| a.time_ms.cmp(&b.time_ms).then_with(|| a.server.cmp(&b.server)));
        Ok(Self { events, heartbeat_interval_ms, timeout_multiplier })
    }

    pub fn timeout_ms(&self) -> u64 {
        self.heartbeat_interval_ms * self.timeout_multiplier
    }

    pub fn validate(&self, servers: &[ServerId]) -> Result<()> {
        if self.heartbeat_interval_ms == 0 || self.timeout_multiplier == 0 {
            return Err(Error::Trace("heartbeat interval and timeout multiplier must be positive".into()));
        }
        let mut last_time = 0;
        let mut up: BTreeMap<&str, bool> = servers.iter().map(|s| (s.as_str(), true)).collect();
        for (k, e) in self.events.iter().enumerate() {
            if e.time_ms < last_time {
                return Err(Error::Trace(format!("event {k} at {} ms goes back in time", e.time_ms)));
            }
            last_time = e.time_ms;
            let state = up
                .get_mut(e.server.as_str())
                .ok_or_else(|| Error::Trace(format!("event {k} names unknown server {:?}", e.server)))?;
            let going_up = e.event == ServerEvent::Up;
            if *state == going_up {
                return Err(Error::Trace(format!(
                    "event {k}: server {:?} is already {}",
                    e.server,
                    if going_up { "up" } else { "down" }
                )));
            }
            *state = going_up;
        }
        Ok(())
    }

    /// Down intervals `[down, up)` of one server; `None` means never recovers.
    pub fn down_windows(&self, server: &str) -> Vec<(u64, Option<u64>)> {
        let mut windows = Vec::new();
        let mut open = None;
        for e in self.events.iter().filter(|e| e.server == server) {
            match e.event {
                ServerEvent::Down => open = Some(e.time_ms),
                ServerEvent::Up => {
                    if let Some(d) = open.take() {
                        windows.push((d, Some(e.time_ms)));
                    }
                }
            }
        }
        if let Some(d) = open {
            windows.push((d, None));
        }
        windows
    }

    pub fn truly_up(&self, server: &str, t: u64) -> bool {
        !self.down_windows(server).iter().any(|&(d, u)| t >= d && u.is_none_or(|u| t < u))
    }

    /// Latest heartbeat at or before `t`.
    pub fn last_heartbeat(&self, server: &str, t: u64) -> u64 {
        let windows = self.down_windows(server);
        let step = self.heartbeat_interval_ms;
        let mut tick = t / step * step;
        // Walk back past the interior of any down window.
        while let Some(&(d, _)) = windows.iter().find(|&&(d, u)| d < tick && u.is_none_or(|u| tick < u)) {
            tick = d / step * step;
        }
        tick
    }

    pub fn deemed_up(&self, server: &str, t: u64) -> bool {
        t - self.last_heartbeat(server, t) < self.timeout_ms()
    }
}

/// Detector view at time `now`: `true` means the server is believed up.
pub fn detect_failures(trace: &FailureTrace, servers: &[ServerId], now: u64) -> BTreeMap<ServerId, bool> {
    servers.iter().map(|s| (s.clone(), trace.deemed_up(s, now))).collect()
}

/// Ground truth at time `now`.
pub fn true_availability(trace: &FailureTrace, servers: &[ServerId], now: u64) -> BTreeMap<ServerId, bool> {
    servers.iter().map(|s| (s.clone(), trace.truly_up(s, now))).collect()
}
