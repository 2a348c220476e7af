//! Failure injection, backup cadence and availability accounting.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use rand_distr::{Distribution, Exp};

use crate::kernel::{RngStream, SimTime, MICROS_PER_HOUR, MICROS_PER_MONTH};

/// Mean repair time the fault model targets when none is given.
pub const DEFAULT_MTTR_HOURS: f64 = 9.0;

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct OutageInterval {
    pub node: String,
    pub start: SimTime,
    pub end: SimTime,
}

impl OutageInterval {
    pub fn contains(&self, t: SimTime) -> bool {
        self.start <= t && t < self.end
    }

    pub fn duration(&self) -> u64 {
        self.end.micros() - self.start.micros()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NodeFault {
    pub node: String,
    /// Absent means the node never fails.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mtbf_h: Option<f64>,
    #[serde(default = "default_mttr")]
    pub mttr_h: f64,
}

fn default_mttr() -> f64 {
    DEFAULT_MTTR_HOURS
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FixedOutage {
    pub node: String,
    pub start_s: f64,
    pub end_s: f64,
}

/// `policies.faults`
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FaultModel {
    #[serde(default)]
    pub nodes: Vec<NodeFault>,
    /// Outages injected verbatim, on top of the random ones.
    #[serde(default)]
    pub outages: Vec<FixedOutage>,
}

#[derive(Debug, Error, PartialEq)]
pub enum ResilienceError {
    #[error("fault model for `{node}`: {reason}")]
    InvalidFault { node: String, reason: String },
    #[error("backup policy: {0}")]
    InvalidBackup(String),
    #[error("unknown node `{0}`")]
    UnknownNode(String),
}

impl FaultModel {
    pub fn validate(&self) -> Result<(), ResilienceError> {
        for f in &self.nodes {
            let bad = |reason: &str| ResilienceError::InvalidFault {
                node: f.node.clone(),
                reason: reason.into(),
            };
            if let Some(m) = f.mtbf_h {
                if !(m > 0.0) {
                    return Err(bad("mtbf must be > 0"));
                }
            }
            if !(f.mttr_h > 0.0 && f.mttr_h.is_finite()) {
                return Err(bad("mttr must be > 0"));
            }
        }
        for o in &self.outages {
            if !(o.end_s > o.start_s && o.start_s >= 0.0) {
                return Err(ResilienceError::InvalidFault {
                    node: o.node.clone(),
                    reason: format!("outage [{}, {}] is empty", o.start_s, o.end_s),
                });
            }
        }
        Ok(())
    }
}

/// Alternating exponential up/down renewal process per node, plus fixed outages.
///
/// Node `i` draws from `stream.substream(i)`. Intervals starting before the
/// horizon are kept with their true end; overlapping intervals on one node merge.
pub fn inject_failures(model: &FaultModel, stream: &RngStream, horizon: SimTime) -> Vec<OutageInterval> {
    let mut out = Vec::new();
    for (i, f) in model.nodes.iter().enumerate() {
        let Some(mtbf) = f.mtbf_h.filter(|m| m.is_finite()) else {
            continue;
        };
        let mut rng = stream.substream(i as u64);
        let up = Exp::new(1.0 / mtbf).expect("mtbf > 0");
        let down = Exp::new(1.0 / f.mttr_h).expect("mttr > 0");
        let mut t = 0u64;
        loop {
            t += hours_to_micros(up.sample(&mut rng));
            if t >= horizon.micros() {
                break;
            }
            let repair = hours_to_micros(down.sample(&mut rng)).max(1);
            out.push(OutageInterval {
                node: f.node.clone(),
                start: SimTime(t),
                end: SimTime(t + repair),
            });
            t += repair;
        }
    }
    for o in &model.outages {
        let start = SimTime::from_secs_f64(o.start_s);
        if start < horizon {
            out.push(OutageInterval {
                node: o.node.clone(),
                start,
                end: SimTime::from_secs_f64(o.end_s),
            });
        }
    }
    merge_overlaps(out)
}

fn hours_to_micros(h: f64) -> u64 {
    (h * MICROS_PER_HOUR as f64).round() as u64
}

fn merge_overlaps(mut v: Vec<OutageInterval>) -> Vec<OutageInterval> {
    v.sort_by(|a, b| (&a.node, a.start, a.end).cmp(&(&b.node, b.start, b.end)));
    let mut merged: Vec<OutageInterval> = Vec::with_capacity(v.len());
    for o in v {
        match merged.last_mut() {
            Some(last) if last.node == o.node && o.start <= last.end => {
                last.end = last.end.max(o.end);
            }
            _ => merged.push(o),
        }
    }
    merged.sort_by(|a, b| (a.start, &a.node).cmp(&(b.start, &b.node)));
    merged
}

/// `policies.backup`
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BackupPolicy {
    #[serde(default = "default_period")]
    pub period_h: f64,
    #[serde(default = "default_copies")]
    pub copies: u32,
    #[serde(default = "default_locations")]
    pub locations: u32,
    #[serde(default = "default_offsite")]
    pub offsite: u32,
    #[serde(default)]
    pub encrypted_at_rest: bool,
    #[serde(default)]
    pub encrypted_in_flight: bool,
}

fn default_period() -> f64 {
    12.0
}
fn default_copies() -> u32 {
    3
}
fn default_locations() -> u32 {
    2
}
fn default_offsite() -> u32 {
    1
}

impl Default for BackupPolicy {
    fn default() -> Self {
        BackupPolicy {
            period_h: default_period(),
            copies: default_copies(),
            locations: default_locations(),
            offsite: default_offsite(),
            encrypted_at_rest: true,
            encrypted_in_flight: true,
        }
    }
}

impl BackupPolicy {
    pub fn validate(&self) -> Result<(), ResilienceError> {
        if !(self.period_h > 0.0 && self.period_h.is_finite()) {
            return Err(ResilienceError::InvalidBackup(format!("period {}h", self.period_h)));
        }
        if self.copies < self.locations {
            return Err(ResilienceError::InvalidBackup(format!(
                "{} copies cannot cover {} locations",
                self.copies, self.locations
            )));
        }
        if self.offsite > self.locations {
            return Err(ResilienceError::InvalidBackup("more offsite than total locations".into()));
        }
        Ok(())
    }

    pub fn period(&self) -> SimTime {
        SimTime(hours_to_micros(self.period_h))
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct BackupEvent {
    pub time: SimTime,
    pub copies: u32,
    pub locations: u32,
    pub offsite: u32,
    pub encrypted_at_rest: bool,
    pub encrypted_in_flight: bool,
    /// Encryption-in-transit latency charged to the copy transfers.
    pub transfer_overhead_us: u64,
}

/// Backups at exactly `k * period` for `k >= 1` up to and including the horizon.
pub fn schedule_backups(policy: &BackupPolicy, horizon: SimTime) -> Vec<BackupEvent> {
    let period = policy.period().micros();
    if period == 0 {
        return Vec::new();
    }
    (1..=horizon.micros() / period)
        .map(|k| BackupEvent {
            time: SimTime(k * period),
            copies: policy.copies,
            locations: policy.locations,
            offsite: policy.offsite,
            encrypted_at_rest: policy.encrypted_at_rest,
            encrypted_in_flight: policy.encrypted_in_flight,
            transfer_overhead_us: 0,
        })
        .collect()
}

/// Length of the union of `node`'s outages (all nodes when `None`) clipped to `[0, horizon)`.
pub fn downtime(outages: &[OutageInterval], node: Option<&str>, horizon: SimTime) -> u64 {
    let mut spans: Vec<(u64, u64)> = outages
        .iter()
        .filter(|o| node.is_none_or(|n| o.node == n))
        .map(|o| (o.start.micros().min(horizon.micros()), o.end.micros().min(horizon.micros())))
        .filter(|(s, e)| e > s)
        .collect();
    spans.sort_unstable();
    let mut total = 0;
    let mut cursor = 0u64;
    for (s, e) in spans {
        let s = s.max(cursor);
        if e > s {
            total += e - s;
            cursor = e;
        }
    }
    total
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Availability {
    pub fraction: f64,
    /// Downtime scaled to a 30-day month.
    pub downtime_minutes: f64,
    pub downtime_us: u64,
}

impl Availability {
    pub fn from_downtime(down: u64, horizon: SimTime) -> Self {
        if horizon == SimTime::ZERO {
            return Availability {
                fraction: 1.0,
                downtime_minutes: 0.0,
                downtime_us: 0,
            };
        }
        let h = horizon.micros() as f64;
        Availability {
            fraction: 1.0 - down as f64 / h,
            downtime_minutes: down as f64 / 60e6 * (MICROS_PER_MONTH as f64 / h),
            downtime_us: down,
        }
    }

    /// Exact test of monthly-normalized downtime against a limit in minutes.
    pub fn monthly_downtime_at_most(&self, horizon: SimTime, minutes: u64) -> bool {
        let lhs = self.downtime_us as u128 * MICROS_PER_MONTH as u128;
        let rhs = minutes as u128 * 60_000_000 * horizon.micros() as u128;
        lhs <= rhs
    }
}
