//! Inference cluster model: deployments, weighted canary routing over a
//! VirtualService/DestinationRule style mesh, the pooled CPU model and the
//! threshold + calendar autoscaler.

use std::collections::BTreeSet;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::kernel::{RngStream, SimTime, MICROS_PER_DAY};

/// Floor on `1 - cpu` in the latency model; caps the slowdown at 100x.
pub const SATURATION_EPSILON: f64 = 0.01;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Deployment {
    pub name: String,
    /// Service whose selector matches this deployment.
    pub service: String,
    /// `version` label on the pods.
    pub version: String,
    pub replicas: u32,
    /// Requests per second one replica can serve.
    pub capacity: f64,
    /// Mean service time per request in microseconds.
    pub service_time: u64,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Service {
    pub name: String,
    /// Container-cluster node hosting the service.
    pub cluster: String,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WeightedRoute {
    pub subset: String,
    pub weight: u32,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VirtualService {
    pub host: String,
    pub routes: Vec<WeightedRoute>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Subset {
    pub name: String,
    pub version: String,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DestinationRule {
    pub host: String,
    pub subsets: Vec<Subset>,
}

/// The `mesh` key of a scenario document.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MeshConfig {
    #[serde(default)]
    pub services: Vec<Service>,
    #[serde(default)]
    pub deployments: Vec<Deployment>,
    #[serde(default)]
    pub virtual_services: Vec<VirtualService>,
    #[serde(default)]
    pub destination_rules: Vec<DestinationRule>,
}

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub enum MeshViolation {
    /// Route weights for a host do not add up to 100.
    WeightSum { host: String, sum: u32 },
    /// A route names a subset its host's destination rule does not declare.
    UnknownSubset { host: String, subset: String },
    /// A virtual-service host has no destination rule.
    UnmatchedHost { host: String },
    /// A destination-rule host matches no service.
    DanglingService { host: String },
    /// A subset's version label matches no deployment of the service.
    UnmatchedVersion { host: String, subset: String, version: String },
}

impl fmt::Display for MeshViolation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            MeshViolation::WeightSum { host, sum } => write!(f, "{host}: route weights sum to {sum}, not 100"),
            MeshViolation::UnknownSubset { host, subset } => write!(f, "{host}: subset `{subset}` is not declared"),
            MeshViolation::UnmatchedHost { host } => write!(f, "{host}: no destination rule for host"),
            MeshViolation::DanglingService { host } => write!(f, "{host}: destination rule matches no service"),
            MeshViolation::UnmatchedVersion { host, subset, version } => {
                write!(f, "{host}: subset `{subset}` selects version `{version}` with no deployment")
            }
        }
    }
}

pub fn validate_mesh(mesh: &MeshConfig, deployments: &[Deployment]) -> Vec<MeshViolation> {
    let mut out = Vec::new();
    for vs in &mesh.virtual_services {
        let sum: u32 = vs.routes.iter().map(|r| r.weight).sum();
        if sum != 100 {
            out.push(MeshViolation::WeightSum {
                host: vs.host.clone(),
                sum,
            });
        }
        let rules: Vec<&DestinationRule> = mesh.destination_rules.iter().filter(|d| d.host == vs.host).collect();
        if rules.is_empty() {
            out.push(MeshViolation::UnmatchedHost { host: vs.host.clone() });
            continue;
        }
        for r in &vs.routes {
            if !rules.iter().any(|d| d.subsets.iter().any(|s| s.name == r.subset)) {
                out.push(MeshViolation::UnknownSubset {
                    host: vs.host.clone(),
                    subset: r.subset.clone(),
                });
            }
        }
    }
    for dr in &mesh.destination_rules {
        if !mesh.services.iter().any(|s| s.name == dr.host) {
            out.push(MeshViolation::DanglingService { host: dr.host.clone() });
        }
        for s in &dr.subsets {
            let matched = deployments.iter().any(|d| d.service == dr.host && d.version == s.version);
            if !matched {
                out.push(MeshViolation::UnmatchedVersion {
                    host: dr.host.clone(),
                    subset: s.name.clone(),
                    version: s.version.clone(),
                });
            }
        }
    }
    out.sort();
    out.dedup();
    out
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ClusterError {
    #[error("no route for host `{0}`")]
    NoRouteForHost(String),
    #[error("deployment `{0}` has zero replicas")]
    ZeroReplicas(String),
    #[error("scaling policy: {0}")]
    InvalidPolicy(String),
}

/// Picks a subset by weighted draw on the request's own substream and returns
/// the subset's version label.
pub fn route_version(mesh: &MeshConfig, host: &str, request_id: u64, stream: &RngStream) -> Result<String, ClusterError> {
    let vs = mesh
        .virtual_services
        .iter()
        .find(|v| v.host == host)
        .ok_or_else(|| ClusterError::NoRouteForHost(host.to_string()))?;
    let total: u32 = vs.routes.iter().map(|r| r.weight).sum();
    if total == 0 {
        return Err(ClusterError::NoRouteForHost(host.to_string()));
    }
    let draw = stream.substream(request_id).next_unit() * total as f64;
    let mut acc = 0.0;
    let mut chosen = &vs.routes[vs.routes.len() - 1];
    for r in &vs.routes {
        acc += r.weight as f64;
        if draw < acc {
            chosen = r;
            break;
        }
    }
    Ok(subset_version(mesh, host, &chosen.subset).unwrap_or(&chosen.subset).to_string())
}

fn subset_version<'a>(mesh: &'a MeshConfig, host: &str, subset: &str) -> Option<&'a str> {
    mesh.destination_rules
        .iter()
        .filter(|d| d.host == host)
        .flat_map(|d| d.subsets.iter())
        .find(|s| s.name == subset)
        .map(|s| s.version.as_str())
}

/// Pooled utilization `min(1, offered / (capacity * replicas))`.
pub fn cpu_utilization(offered_rps: f64, deployment: &Deployment) -> Result<f64, ClusterError> {
    if deployment.replicas == 0 {
        return Err(ClusterError::ZeroReplicas(deployment.name.clone()));
    }
    let cap = deployment.capacity * deployment.replicas as f64;
    Ok((offered_rps.max(0.0) / cap).min(1.0))
}

/// Processor-sharing slowdown: `service_time / max(eps, 1 - cpu)`.
pub fn service_latency(service_time: u64, cpu: f64) -> u64 {
    let headroom = (1.0 - cpu.clamp(0.0, 1.0)).max(SATURATION_EPSILON);
    (service_time as f64 / headroom).round() as u64
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Weekday {
    Monday,
    Tuesday,
    Wednesday,
    Thursday,
    Friday,
    Saturday,
    Sunday,
}

impl Weekday {
    const ALL: [Weekday; 7] = [
        Weekday::Monday,
        Weekday::Tuesday,
        Weekday::Wednesday,
        Weekday::Thursday,
        Weekday::Friday,
        Weekday::Saturday,
        Weekday::Sunday,
    ];

    pub fn plus_days(self, days: u64) -> Weekday {
        let idx = Self::ALL.iter().position(|d| *d == self).expect("weekday") as u64;
        Self::ALL[((idx + days) % 7) as usize]
    }

    pub fn is_weekend(self) -> bool {
        matches!(self, Weekday::Saturday | Weekday::Sunday)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Calendar {
    #[serde(default = "default_weekday_target")]
    pub weekday_target: u32,
    #[serde(default = "default_weekend_target")]
    pub weekend_target: u32,
    /// Day of the week at simulated t = 0 (a midnight).
    #[serde(default = "default_epoch")]
    pub epoch_weekday: Weekday,
}

fn default_weekday_target() -> u32 {
    10
}
fn default_weekend_target() -> u32 {
    4
}
fn default_epoch() -> Weekday {
    Weekday::Monday
}

impl Default for Calendar {
    fn default() -> Self {
        Calendar {
            weekday_target: default_weekday_target(),
            weekend_target: default_weekend_target(),
            epoch_weekday: default_epoch(),
        }
    }
}

impl Calendar {
    pub fn target_for_day(&self, day: u64) -> u32 {
        if self.epoch_weekday.plus_days(day).is_weekend() {
            self.weekend_target
        } else {
            self.weekday_target
        }
    }
}

/// `policies.autoscaler`
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScalingPolicy {
    #[serde(default = "default_out")]
    pub scale_out_threshold: f64,
    #[serde(default = "default_in")]
    pub scale_in_threshold: f64,
    #[serde(default = "default_step")]
    pub step: u32,
    #[serde(default = "default_sample")]
    pub metrics_sample_period_s: u64,
    #[serde(default = "default_check")]
    pub hpa_check_period_s: u64,
    #[serde(default = "default_update")]
    pub hpa_update_period_s: u64,
    #[serde(default = "default_min")]
    pub min_replicas: u32,
    #[serde(default = "default_max")]
    pub max_replicas: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub calendar: Option<Calendar>,
}

fn default_out() -> f64 {
    0.70
}
fn default_in() -> f64 {
    0.50
}
fn default_step() -> u32 {
    1
}
fn default_sample() -> u64 {
    60
}
fn default_check() -> u64 {
    15
}
fn default_update() -> u64 {
    60
}
fn default_min() -> u32 {
    1
}
fn default_max() -> u32 {
    20
}

impl Default for ScalingPolicy {
    fn default() -> Self {
        ScalingPolicy {
            scale_out_threshold: default_out(),
            scale_in_threshold: default_in(),
            step: default_step(),
            metrics_sample_period_s: default_sample(),
            hpa_check_period_s: default_check(),
            hpa_update_period_s: default_update(),
            min_replicas: default_min(),
            max_replicas: default_max(),
            calendar: None,
        }
    }
}

impl ScalingPolicy {
    pub fn validate(&self) -> Result<(), ClusterError> {
        let bad = |m: String| Err(ClusterError::InvalidPolicy(m));
        if !(self.scale_in_threshold < self.scale_out_threshold) {
            return bad(format!(
                "scale-in threshold {} must be below scale-out threshold {}",
                self.scale_in_threshold, self.scale_out_threshold
            ));
        }
        if self.min_replicas > self.max_replicas {
            return bad(format!("min {} > max {}", self.min_replicas, self.max_replicas));
        }
        if self.step == 0 || self.metrics_sample_period_s == 0 || self.hpa_check_period_s == 0 {
            return bad("step and periods must be positive".into());
        }
        if let Some(c) = &self.calendar {
            for t in [c.weekday_target, c.weekend_target] {
                if t < self.min_replicas || t > self.max_replicas {
                    return bad(format!("calendar target {t} outside [{}, {}]", self.min_replicas, self.max_replicas));
                }
            }
        }
        Ok(())
    }

    pub fn update_period(&self) -> SimTime {
        SimTime::from_secs(self.hpa_update_period_s)
    }

    /// The replica count the threshold rule asks for, ignoring the update period.
    pub fn desired(&self, replicas: u32, cpu: f64) -> u32 {
        let target = if cpu > self.scale_out_threshold {
            replicas.saturating_add(self.step)
        } else if cpu < self.scale_in_threshold {
            replicas.saturating_sub(self.step)
        } else {
            replicas
        };
        target.clamp(self.min_replicas, self.max_replicas)
    }
}

/// Autoscaler view of one deployment.
#[derive(Clone, Debug, PartialEq)]
pub struct HpaState {
    pub replicas: u32,
    /// Most recent metrics sample; `None` until the first sample lands.
    pub sampled_cpu: Option<f64>,
    pub last_update: Option<SimTime>,
}

impl HpaState {
    pub fn new(replicas: u32) -> Self {
        HpaState {
            replicas,
            sampled_cpu: None,
            last_update: None,
        }
    }
}

/// One HPA check: acts only once the update period has elapsed since the last
/// change, scaling by one step on strict threshold crossings.
pub fn hpa_step(state: &mut HpaState, policy: &ScalingPolicy, t: SimTime) -> u32 {
    let Some(cpu) = state.sampled_cpu else {
        return state.replicas;
    };
    if let Some(last) = state.last_update {
        if t.saturating_sub(last) < policy.update_period() {
            return state.replicas;
        }
    }
    let next = policy.desired(state.replicas, cpu);
    if next != state.replicas {
        state.replicas = next;
        state.last_update = Some(t);
    }
    state.replicas
}

/// Calendar target at a midnight boundary; `None` off-boundary or when disabled.
pub fn scheduled_scale(policy: &ScalingPolicy, t: SimTime) -> Option<u32> {
    let cal = policy.calendar.as_ref()?;
    if !t.micros().is_multiple_of(MICROS_PER_DAY) {
        return None;
    }
    Some(cal.target_for_day(t.micros() / MICROS_PER_DAY))
}

pub fn is_midnight(t: SimTime) -> bool {
    t.micros().is_multiple_of(MICROS_PER_DAY)
}

/// First deployment name that appears more than once.
pub fn duplicate_names(deployments: &[Deployment]) -> Option<String> {
    let mut seen = BTreeSet::new();
    deployments.iter().find(|d| !seen.insert(d.name.as_str())).map(|d| d.name.clone())
}
