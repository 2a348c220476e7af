//! The scenario document: topology, workload, policies, prices, compliance
//! settings and the service mesh, parsed strictly and cross-validated.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path as FsPath;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::balancing::LoadBalancerPolicy;
use crate::cluster::{duplicate_names, validate_mesh, ClusterError, MeshConfig, MeshViolation, ScalingPolicy};
use crate::compliance::TrId;
use crate::economics::{EconomicsError, PriceBook, ProviderPrices, SavingsPlan, PAPER_2022};
use crate::gateway::{FirewallPolicy, RateLimitPolicy, SecurityOverheads};
use crate::kernel::SimTime;
use crate::resilience::{BackupPolicy, FaultModel, ResilienceError};
use crate::telemetry::{AlertRule, TelemetryError};
use crate::topology::{Ingress, LinkSpec, NodeKind, ServiceNode, TopologyDoc, TopologyError, TopologyGraph, VNet};
use crate::workload::{WorkloadError, WorkloadProfile, WorkloadSpec};

pub const DEFAULT_MANAGED_HUB_USD_PER_HOUR: f64 = 0.25;

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Policies {
    #[serde(default)]
    pub firewall: FirewallPolicy,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rate_limit: Option<RateLimitPolicy>,
    #[serde(default)]
    pub security_overheads: SecurityOverheads,
    #[serde(default)]
    pub load_balancer: LoadBalancerPolicy,
    #[serde(default)]
    pub autoscaler: ScalingPolicy,
    #[serde(default)]
    pub faults: FaultModel,
    /// Absent means no backups are taken.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub backup: Option<BackupPolicy>,
    #[serde(default)]
    pub alerts: Vec<AlertRule>,
}

/// `prices`
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PriceConfig {
    #[serde(default = "default_book")]
    pub book: String,
    /// Provider the deployment is billed against.
    #[serde(default = "default_provider")]
    pub provider: String,
    /// Per-provider replacements merged over the named book.
    #[serde(default)]
    pub overrides: BTreeMap<String, ProviderPrices>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub savings_plan: Option<SavingsPlan>,
    /// Fraction of the compute rate waived by bring-your-own licensing.
    #[serde(default)]
    pub hybrid_benefit: f64,
    /// Stored volume per storage node in GB.
    #[serde(default)]
    pub storage_gb: BTreeMap<String, f64>,
    #[serde(default = "default_hub_fee")]
    pub managed_hub_usd_per_hour: f64,
}

fn default_book() -> String {
    PAPER_2022.into()
}
fn default_provider() -> String {
    "azure".into()
}
fn default_hub_fee() -> f64 {
    DEFAULT_MANAGED_HUB_USD_PER_HOUR
}

impl Default for PriceConfig {
    fn default() -> Self {
        PriceConfig {
            book: default_book(),
            provider: default_provider(),
            overrides: BTreeMap::new(),
            savings_plan: None,
            hybrid_benefit: 0.0,
            storage_gb: BTreeMap::new(),
            managed_hub_usd_per_hour: default_hub_fee(),
        }
    }
}

/// `compliance`
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ComplianceConfig {
    #[serde(default)]
    pub enabled: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub budget_usd: Option<f64>,
    #[serde(default = "default_budget_group")]
    pub budget_action_group: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub maintenance_usd_per_year: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub labor_hours_per_year: Option<f64>,
}

fn default_budget_group() -> String {
    "cost-owners".into()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioDoc {
    pub vnets: Vec<VNet>,
    pub nodes: Vec<ServiceNode>,
    pub links: Vec<LinkSpec>,
    #[serde(default)]
    pub ingress: Vec<Ingress>,
    pub workload: WorkloadSpec,
    #[serde(default)]
    pub policies: Policies,
    #[serde(default)]
    pub prices: PriceConfig,
    #[serde(default)]
    pub compliance: ComplianceConfig,
    #[serde(default)]
    pub mesh: MeshConfig,
}

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("cannot read scenario: {0}")]
    Io(#[from] std::io::Error),
    #[error("scenario syntax error at line {line}: {message}")]
    Syntax { line: usize, message: String },
    #[error(transparent)]
    Topology(#[from] TopologyError),
    #[error(transparent)]
    Workload(#[from] WorkloadError),
    #[error(transparent)]
    Cluster(#[from] ClusterError),
    #[error(transparent)]
    Resilience(#[from] ResilienceError),
    #[error(transparent)]
    Economics(#[from] EconomicsError),
    #[error(transparent)]
    Telemetry(#[from] TelemetryError),
    #[error("mesh configuration invalid: {}", .0.iter().map(|v| v.to_string()).collect::<Vec<_>>().join("; "))]
    Mesh(Vec<MeshViolation>),
    #[error("invalid scenario: {0}")]
    Invalid(String),
}

/// A parsed and cross-validated scenario.
#[derive(Clone, Debug)]
pub struct Scenario {
    pub doc: ScenarioDoc,
    pub graph: TopologyGraph,
    pub profile: WorkloadProfile,
    pub book: PriceBook,
    pub enabled: BTreeSet<TrId>,
    /// SHA-256 of the source text, hex encoded.
    pub config_hash: String,
}

impl Scenario {
    pub fn load(path: impl AsRef<FsPath>) -> Result<Scenario, ScenarioError> {
        let text = std::fs::read_to_string(path)?;
        Scenario::parse(&text)
    }

    pub fn parse(text: &str) -> Result<Scenario, ScenarioError> {
        let doc: ScenarioDoc = serde_json::from_str(text).map_err(|e| ScenarioError::Syntax {
            line: e.line(),
            message: e.to_string(),
        })?;
        let mut s = Scenario::from_doc(doc)?;
        s.config_hash = hex::encode(Sha256::digest(text.as_bytes()));
        Ok(s)
    }

    pub fn from_doc(doc: ScenarioDoc) -> Result<Scenario, ScenarioError> {
        let graph = TopologyGraph::from_doc(TopologyDoc {
            vnets: doc.vnets.clone(),
            nodes: doc.nodes.clone(),
            links: doc.links.clone(),
            ingress: doc.ingress.clone(),
        })?;
        let profile = WorkloadProfile::from_spec(&doc.workload)?;
        validate_routes(&doc, &graph, &profile)?;
        validate_mesh_config(&doc, &graph)?;
        validate_policies(&doc, &graph)?;
        let book = resolve_book(&doc.prices, &graph)?;
        let enabled = parse_enabled(&doc.compliance)?;
        let canonical = serde_json::to_string(&doc).expect("scenario serializes");
        Ok(Scenario {
            config_hash: hex::encode(Sha256::digest(canonical.as_bytes())),
            doc,
            graph,
            profile,
            book,
            enabled,
        })
    }

    /// Seed plus configuration hash.
    pub fn fingerprint(&self, seed: u64) -> String {
        format!("seed={seed} sha256={}", self.config_hash)
    }

    /// Default run length: the end of the workload profile, at least one second.
    pub fn default_horizon(&self) -> SimTime {
        SimTime::from_secs_f64(self.profile.end().max(1.0))
    }

    /// Pod identifiers the autoscaler can create for each deployment.
    pub fn replica_ids(&self) -> BTreeSet<String> {
        let max = self.doc.policies.autoscaler.max_replicas;
        self.doc
            .mesh
            .deployments
            .iter()
            .flat_map(|d| (0..max.max(d.replicas)).map(move |i| replica_id(&d.name, i)))
            .collect()
    }
}

pub fn replica_id(deployment: &str, index: u32) -> String {
    format!("{deployment}-{index}")
}

fn validate_routes(doc: &ScenarioDoc, graph: &TopologyGraph, profile: &WorkloadProfile) -> Result<(), ScenarioError> {
    let routes = &doc.workload.routes;
    if routes.is_empty() && profile.peak_users() > 0 && profile.rps_per_user > 0.0 {
        return Err(ScenarioError::Invalid("workload generates traffic but declares no routes".into()));
    }
    if doc.workload.clients == 0 {
        return Err(ScenarioError::Invalid("workload.clients must be >= 1".into()));
    }
    for r in routes {
        if !(r.share > 0.0 && r.share.is_finite()) {
            return Err(ScenarioError::Invalid(format!("route share {} must be > 0", r.share)));
        }
        let ingress = graph
            .ingress_for_origin(&r.origin)
            .ok_or_else(|| ScenarioError::Invalid(format!("route origin `{}` has no ingress", r.origin)))?;
        if graph.node(&r.target).is_none() {
            return Err(TopologyError::UnknownReference(r.target.clone()).into());
        }
        graph.path_between(&ingress.node, &r.target)?;
        if let Some(host) = &r.host {
            if !doc.mesh.services.iter().any(|s| &s.name == host) {
                return Err(ScenarioError::Invalid(format!("route host `{host}` is not a mesh service")));
            }
        }
    }
    Ok(())
}

fn validate_mesh_config(doc: &ScenarioDoc, graph: &TopologyGraph) -> Result<(), ScenarioError> {
    let mesh = &doc.mesh;
    if let Some(dup) = duplicate_names(&mesh.deployments) {
        return Err(ScenarioError::Invalid(format!("duplicate deployment `{dup}`")));
    }
    for s in &mesh.services {
        match graph.node(&s.cluster) {
            Some(n) if n.kind == NodeKind::ContainerCluster => {}
            Some(_) => {
                return Err(ScenarioError::Invalid(format!(
                    "service `{}` runs on `{}`, which is not a container cluster",
                    s.name, s.cluster
                )))
            }
            None => return Err(TopologyError::UnknownReference(s.cluster.clone()).into()),
        }
    }
    for d in &mesh.deployments {
        if d.replicas == 0 {
            return Err(ClusterError::ZeroReplicas(d.name.clone()).into());
        }
        if !(d.capacity > 0.0 && d.capacity.is_finite()) {
            return Err(ScenarioError::Invalid(format!("deployment `{}` capacity must be > 0", d.name)));
        }
    }
    let violations = validate_mesh(mesh, &mesh.deployments);
    if !violations.is_empty() {
        return Err(ScenarioError::Mesh(violations));
    }
    Ok(())
}

fn validate_policies(doc: &ScenarioDoc, graph: &TopologyGraph) -> Result<(), ScenarioError> {
    let p = &doc.policies;
    p.autoscaler.validate()?;
    p.faults.validate()?;
    let max = p.autoscaler.max_replicas;
    let known = |id: &str| {
        graph.node(id).is_some()
            || doc
                .mesh
                .deployments
                .iter()
                .any(|d| (0..max.max(d.replicas)).any(|i| replica_id(&d.name, i) == id))
    };
    let fault_nodes = p.faults.nodes.iter().map(|f| &f.node).chain(p.faults.outages.iter().map(|o| &o.node));
    for n in fault_nodes {
        if !known(n) {
            return Err(ResilienceError::UnknownNode(n.clone()).into());
        }
    }
    if let Some(b) = &p.backup {
        b.validate()?;
    }
    if let Some(rl) = &p.rate_limit {
        if rl.cap == 0 || !(rl.window_s > 0.0) {
            return Err(ScenarioError::Invalid("rate limit needs cap >= 1 and window_s > 0".into()));
        }
    }
    if !(p.load_balancer.probe_interval_s > 0.0 && p.load_balancer.probe_interval_s.is_finite()) {
        return Err(ScenarioError::Invalid("probe_interval_s must be > 0".into()));
    }
    for a in &p.alerts {
        a.validate()?;
    }
    if let Some(budget) = doc.compliance.budget_usd {
        if !(budget > 0.0 && budget.is_finite()) {
            return Err(EconomicsError::InvalidThreshold(budget).into());
        }
    }
    Ok(())
}

fn resolve_book(prices: &PriceConfig, graph: &TopologyGraph) -> Result<PriceBook, ScenarioError> {
    let mut book = PriceBook::named(&prices.book)?;
    for (id, p) in &prices.overrides {
        book.providers.insert(id.clone(), p.clone());
    }
    book.validate()?;
    if !book.providers.contains_key(&prices.provider) {
        return Err(ScenarioError::Invalid(format!("provider `{}` not in price book", prices.provider)));
    }
    if !(0.0..=1.0).contains(&prices.hybrid_benefit) {
        return Err(ScenarioError::Invalid(format!("hybrid_benefit {} outside [0, 1]", prices.hybrid_benefit)));
    }
    if !(prices.managed_hub_usd_per_hour >= 0.0 && prices.managed_hub_usd_per_hour.is_finite()) {
        return Err(ScenarioError::Invalid("managed_hub_usd_per_hour must be >= 0".into()));
    }
    if let Some(plan) = &prices.savings_plan {
        plan.validate()?;
    }
    for (node, gb) in &prices.storage_gb {
        match graph.node(node) {
            Some(n) if n.kind.is_storage() => {}
            _ => return Err(ScenarioError::Invalid(format!("storage_gb names `{node}`, not a storage node"))),
        }
        if !(*gb >= 0.0 && gb.is_finite()) {
            return Err(ScenarioError::Invalid(format!("storage_gb for `{node}` must be >= 0")));
        }
    }
    Ok(book)
}

fn parse_enabled(c: &ComplianceConfig) -> Result<BTreeSet<TrId>, ScenarioError> {
    c.enabled
        .iter()
        .map(|s| TrId::parse(s).ok_or_else(|| ScenarioError::Invalid(format!("unknown compliance check `{s}`"))))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"{
      "vnets": [{"id": "hub", "role": "hub", "trust": "internal"}],
      "nodes": [{"id": "lb", "kind": "load-balancer", "vnet": "hub"},
                {"id": "aks", "kind": "container-cluster", "vnet": "hub", "capacity": 100}],
      "links": [{"from": "lb", "to": "aks", "medium": "private"}],
      "ingress": [{"origin": "corp", "node": "lb"}],
      "workload": {"stages": [{"t_start": 0, "t_end": 10, "target_users": 5, "rate": 1}],
                   "routes": [{"origin": "corp", "target": "aks"}]},
      "mesh": {"services": [{"name": "svc", "cluster": "aks"}],
               "deployments": [{"name": "svc-v1", "service": "svc", "version": "v1",
                                "replicas": 1, "capacity": 10, "service_time": 1000}]}
    }"#;

    #[test]
    fn minimal_parses() {
        let s = Scenario::parse(MINIMAL).unwrap();
        assert_eq!(s.book.providers.len(), 4);
        assert_eq!(s.default_horizon(), SimTime::from_secs(10));
        assert!(s.fingerprint(7).starts_with("seed=7 sha256="));
    }

    #[test]
    fn unknown_top_level_key_rejected() {
        let text = MINIMAL.replacen('{', r#"{"extra": 1,"#, 1);
        assert!(matches!(Scenario::parse(&text), Err(ScenarioError::Syntax { .. })));
    }

    #[test]
    fn zero_budget_rejected() {
        let text = MINIMAL.replacen('{', r#"{"compliance": {"budget_usd": 0},"#, 1);
        assert!(matches!(
            Scenario::parse(&text),
            Err(ScenarioError::Economics(EconomicsError::InvalidThreshold(_)))
        ));
    }

    #[test]
    fn unknown_check_rejected() {
        let text = MINIMAL.replacen('{', r#"{"compliance": {"enabled": ["TR99"]},"#, 1);
        assert!(matches!(Scenario::parse(&text), Err(ScenarioError::Invalid(_))));
    }

    #[test]
    fn fault_on_unknown_node_rejected() {
        let text = MINIMAL.replacen(
            '{',
            r#"{"policies": {"faults": {"outages": [{"node": "ghost", "start_s": 1, "end_s": 2}]}},"#,
            1,
        );
        assert!(matches!(
            Scenario::parse(&text),
            Err(ScenarioError::Resilience(ResilienceError::UnknownNode(_)))
        ));
        let ok = MINIMAL.replacen(
            '{',
            r#"{"policies": {"faults": {"outages": [{"node": "svc-v1-0", "start_s": 1, "end_s": 2}]}},"#,
            1,
        );
        assert!(Scenario::parse(&ok).is_ok());
    }

    #[test]
    fn route_without_ingress_rejected() {
        let text = MINIMAL.replace(r#""origin": "corp", "target""#, r#""origin": "mars", "target""#);
        assert!(matches!(Scenario::parse(&text), Err(ScenarioError::Invalid(_))));
    }

    #[test]
    fn hash_tracks_text() {
        let a = Scenario::parse(MINIMAL).unwrap();
        let b = Scenario::parse(&format!("{MINIMAL}\n")).unwrap();
        assert_ne!(a.config_hash, b.config_hash);
        assert_eq!(a.config_hash, Scenario::parse(MINIMAL).unwrap().config_hash);
    }
}
