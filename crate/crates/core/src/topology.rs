//! Declarative topology: virtual networks, typed service nodes, latency-weighted
//! links and ingress bindings, plus structural validation and path resolution.

use std::collections::{BTreeSet, HashMap, HashSet, VecDeque};
use std::fmt;

use petgraph::graph::{DiGraph, NodeIndex};
use petgraph::visit::EdgeRef;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const DEFAULT_INTERNET_LATENCY_US: u64 = 20_000;
pub const DEFAULT_PRIVATE_LATENCY_US: u64 = 1_000;
pub const DEFAULT_SERVICE_TIME_US: u64 = 500;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum NodeKind {
    FrontDoor,
    Firewall,
    ApiGateway,
    LoadBalancer,
    Dns,
    PrivateEndpoint,
    ContainerCluster,
    DataLake,
    Warehouse,
    Monitor,
    Automation,
    ExpressRoute,
    IotEdge,
}

impl NodeKind {
    pub fn is_cluster(self) -> bool {
        self == NodeKind::ContainerCluster
    }

    pub fn is_storage(self) -> bool {
        matches!(self, NodeKind::DataLake | NodeKind::Warehouse)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TrustZone {
    Trusted,
    Untrusted,
    Internal,
}

impl fmt::Display for TrustZone {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            TrustZone::Trusted => "trusted",
            TrustZone::Untrusted => "untrusted",
            TrustZone::Internal => "internal",
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum VNetRole {
    Hub,
    Spoke,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Medium {
    Internet,
    Private,
}

impl Medium {
    pub fn default_latency(self) -> u64 {
        match self {
            Medium::Internet => DEFAULT_INTERNET_LATENCY_US,
            Medium::Private => DEFAULT_PRIVATE_LATENCY_US,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VNet {
    pub id: String,
    pub role: VNetRole,
    pub trust: TrustZone,
    /// Hub this spoke peers with. Must be absent on hubs.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub hub: Option<String>,
    /// Managed virtual-WAN hub instead of a self-operated hub vnet.
    #[serde(default, skip_serializing_if = "is_false")]
    pub vwan: bool,
}

fn is_false(b: &bool) -> bool {
    !*b
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ServiceNode {
    pub id: String,
    pub kind: NodeKind,
    /// Absent vnet is a TR61 violation, not a parse error.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub vnet: Option<String>,
    /// Mean service time in microseconds.
    #[serde(default = "default_service_time")]
    pub service_time: u64,
    /// Requests per second per replica; required for container clusters.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub capacity: Option<f64>,
}

fn default_service_time() -> u64 {
    DEFAULT_SERVICE_TIME_US
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LinkSpec {
    pub from: String,
    pub to: String,
    pub medium: Medium,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub latency: Option<u64>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Link {
    pub from: String,
    pub to: String,
    pub latency: u64,
    pub medium: Medium,
}

/// Binds a named traffic origin (e.g. "internet", "iot-edge") to its entry node.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Ingress {
    pub origin: String,
    pub node: String,
}

/// The topology part of a scenario document.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TopologyDoc {
    pub vnets: Vec<VNet>,
    pub nodes: Vec<ServiceNode>,
    pub links: Vec<LinkSpec>,
    #[serde(default)]
    pub ingress: Vec<Ingress>,
}

#[derive(Debug, Error, PartialEq)]
pub enum TopologyError {
    #[error("syntax error at line {line}: {message}")]
    Syntax { line: usize, message: String },
    #[error("unknown reference `{0}`")]
    UnknownReference(String),
    #[error("duplicate id `{0}`")]
    DuplicateId(String),
    #[error("invalid field on `{id}`: {reason}")]
    InvalidField { id: String, reason: String },
    #[error("`{0}` is unreachable")]
    Unreachable(String),
    #[error("no ingress for trust zone {0}")]
    NoIngress(TrustZone),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Rule {
    /// Trusted and untrusted environments both present.
    Tr45,
    /// Untrusted ingress cannot bypass a firewall.
    Tr48,
    /// Every node sits inside a vnet.
    Tr61,
    HubSpoke,
    Connectivity,
    Ingress,
}

impl Rule {
    pub fn label(self) -> &'static str {
        match self {
            Rule::Tr45 => "TR45",
            Rule::Tr48 => "TR48",
            Rule::Tr61 => "TR61",
            Rule::HubSpoke => "hub-spoke",
            Rule::Connectivity => "connectivity",
            Rule::Ingress => "ingress",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Violation {
    pub rule: Rule,
    pub subject: String,
    pub detail: String,
    /// Offending path, when the rule is about reachability.
    pub path: Vec<String>,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} {}: {}", self.rule.label(), self.subject, self.detail)?;
        if !self.path.is_empty() {
            write!(f, " [{}]", self.path.join(" > "))?;
        }
        Ok(())
    }
}

/// A resolved route with its static latency: link latencies plus node service times.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Path {
    pub nodes: Vec<String>,
    /// Latency of the link leaving `nodes[i]` towards `nodes[i + 1]`.
    pub link_latencies: Vec<u64>,
    pub link_media: Vec<Medium>,
    pub service_times: Vec<u64>,
    pub latency: u64,
}

impl Path {
    pub fn contains_kind(&self, graph: &TopologyGraph, kind: NodeKind) -> bool {
        self.nodes.iter().any(|n| graph.node(n).map(|s| s.kind) == Some(kind))
    }

    pub fn crosses_internet(&self) -> bool {
        self.link_media.contains(&Medium::Internet)
    }
}

#[derive(Clone, Debug)]
pub struct TopologyGraph {
    vnets: Vec<VNet>,
    nodes: Vec<ServiceNode>,
    links: Vec<Link>,
    ingress: Vec<Ingress>,
    node_index: HashMap<String, usize>,
    vnet_index: HashMap<String, usize>,
    graph: DiGraph<usize, usize>,
}

pub fn parse_topology(text: &str) -> Result<TopologyGraph, TopologyError> {
    let doc: TopologyDoc = serde_json::from_str(text).map_err(|e| TopologyError::Syntax {
        line: e.line(),
        message: e.to_string(),
    })?;
    TopologyGraph::from_doc(doc)
}

impl TopologyGraph {
    pub fn from_doc(doc: TopologyDoc) -> Result<Self, TopologyError> {
        let mut vnet_index = HashMap::new();
        for (i, v) in doc.vnets.iter().enumerate() {
            if vnet_index.insert(v.id.clone(), i).is_some() {
                return Err(TopologyError::DuplicateId(v.id.clone()));
            }
        }
        for v in &doc.vnets {
            if let Some(hub) = &v.hub {
                if !vnet_index.contains_key(hub) {
                    return Err(TopologyError::UnknownReference(hub.clone()));
                }
            }
        }
        let mut node_index = HashMap::new();
        let mut graph = DiGraph::new();
        for (i, n) in doc.nodes.iter().enumerate() {
            if node_index.contains_key(&n.id) || vnet_index.contains_key(&n.id) {
                return Err(TopologyError::DuplicateId(n.id.clone()));
            }
            if let Some(v) = &n.vnet {
                if !vnet_index.contains_key(v) {
                    return Err(TopologyError::UnknownReference(v.clone()));
                }
            }
            if n.kind.is_cluster() {
                match n.capacity {
                    Some(c) if c > 0.0 && c.is_finite() => {}
                    _ => {
                        return Err(TopologyError::InvalidField {
                            id: n.id.clone(),
                            reason: "container clusters need capacity > 0".into(),
                        })
                    }
                }
            }
            node_index.insert(n.id.clone(), i);
            graph.add_node(i);
        }
        let mut links = Vec::with_capacity(doc.links.len());
        for (i, l) in doc.links.iter().enumerate() {
            let from = *node_index
                .get(&l.from)
                .ok_or_else(|| TopologyError::UnknownReference(l.from.clone()))?;
            let to = *node_index
                .get(&l.to)
                .ok_or_else(|| TopologyError::UnknownReference(l.to.clone()))?;
            graph.add_edge(NodeIndex::new(from), NodeIndex::new(to), i);
            links.push(Link {
                from: l.from.clone(),
                to: l.to.clone(),
                latency: l.latency.unwrap_or_else(|| l.medium.default_latency()),
                medium: l.medium,
            });
        }
        let mut origins = HashSet::new();
        for ing in &doc.ingress {
            if !node_index.contains_key(&ing.node) {
                return Err(TopologyError::UnknownReference(ing.node.clone()));
            }
            if !origins.insert(ing.origin.clone()) {
                return Err(TopologyError::DuplicateId(ing.origin.clone()));
            }
        }
        Ok(TopologyGraph {
            vnets: doc.vnets,
            nodes: doc.nodes,
            links,
            ingress: doc.ingress,
            node_index,
            vnet_index,
            graph,
        })
    }

    /// Canonical descriptor; latencies are written out explicitly.
    pub fn to_doc(&self) -> TopologyDoc {
        TopologyDoc {
            vnets: self.vnets.clone(),
            nodes: self.nodes.clone(),
            links: self
                .links
                .iter()
                .map(|l| LinkSpec {
                    from: l.from.clone(),
                    to: l.to.clone(),
                    medium: l.medium,
                    latency: Some(l.latency),
                })
                .collect(),
            ingress: self.ingress.clone(),
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&self.to_doc()).expect("topology serializes")
    }

    pub fn vnets(&self) -> &[VNet] {
        &self.vnets
    }

    pub fn nodes(&self) -> &[ServiceNode] {
        &self.nodes
    }

    pub fn links(&self) -> &[Link] {
        &self.links
    }

    pub fn ingress(&self) -> &[Ingress] {
        &self.ingress
    }

    pub fn node(&self, id: &str) -> Option<&ServiceNode> {
        self.node_index.get(id).map(|&i| &self.nodes[i])
    }

    pub fn vnet(&self, id: &str) -> Option<&VNet> {
        self.vnet_index.get(id).map(|&i| &self.vnets[i])
    }

    /// Stable per-node address used as the destination in flow tuples.
    pub fn node_address(&self, id: &str) -> Option<u32> {
        self.node_index
            .get(id)
            .map(|&i| u32::from_be_bytes([10, 1, (i >> 8) as u8, (i & 0xff) as u8]).wrapping_add(1))
    }

    /// Trust zone of traffic entering at `node`: front doors are untrusted,
    /// express-route and edge devices are trusted, anything else inherits its vnet's zone.
    pub fn ingress_trust(&self, node: &str) -> Option<TrustZone> {
        let n = self.node(node)?;
        match n.kind {
            NodeKind::FrontDoor => Some(TrustZone::Untrusted),
            NodeKind::ExpressRoute | NodeKind::IotEdge => Some(TrustZone::Trusted),
            _ => n
                .vnet
                .as_deref()
                .and_then(|v| self.vnet(v))
                .map(|v| v.trust)
                .filter(|t| *t != TrustZone::Internal),
        }
    }

    pub fn ingress_for_origin(&self, origin: &str) -> Option<&Ingress> {
        self.ingress.iter().find(|i| i.origin == origin)
    }

    /// Cheapest path from `from` to `to` by link latency plus node service time.
    pub fn path_between(&self, from: &str, to: &str) -> Result<Path, TopologyError> {
        let src = *self
            .node_index
            .get(from)
            .ok_or_else(|| TopologyError::Unreachable(from.to_string()))?;
        let dst = *self
            .node_index
            .get(to)
            .ok_or_else(|| TopologyError::Unreachable(to.to_string()))?;
        let nodes = &self.nodes;
        let links = &self.links;
        let (_, route) = petgraph::algo::astar(
            &self.graph,
            NodeIndex::new(src),
            |n| n.index() == dst,
            |e| links[*e.weight()].latency + nodes[e.target().index()].service_time,
            |_| 0,
        )
        .ok_or_else(|| TopologyError::Unreachable(to.to_string()))?;
        Ok(self.path_from_indices(&route))
    }

    fn path_from_indices(&self, route: &[NodeIndex]) -> Path {
        let mut link_latencies = Vec::new();
        let mut link_media = Vec::new();
        for w in route.windows(2) {
            let link = self
                .graph
                .edges_connecting(w[0], w[1])
                .map(|e| &self.links[*e.weight()])
                .min_by_key(|l| l.latency)
                .expect("consecutive route nodes are linked");
            link_latencies.push(link.latency);
            link_media.push(link.medium);
        }
        let service_times: Vec<u64> = route.iter().map(|n| self.nodes[n.index()].service_time).collect();
        let latency = link_latencies.iter().sum::<u64>() + service_times.iter().sum::<u64>();
        Path {
            nodes: route.iter().map(|n| self.nodes[n.index()].id.clone()).collect(),
            link_latencies,
            link_media,
            service_times,
            latency,
        }
    }

    /// Best path to `target` from any ingress of the given zone.
    pub fn resolve_path(&self, trust: TrustZone, target: &str) -> Result<Path, TopologyError> {
        if self.node(target).is_none() {
            return Err(TopologyError::Unreachable(target.to_string()));
        }
        let entries: Vec<&Ingress> = self
            .ingress
            .iter()
            .filter(|i| self.ingress_trust(&i.node) == Some(trust))
            .collect();
        if entries.is_empty() {
            return Err(TopologyError::NoIngress(trust));
        }
        entries
            .into_iter()
            .filter_map(|i| self.path_between(&i.node, target).ok())
            .min_by(|a, b| a.latency.cmp(&b.latency).then_with(|| a.nodes.cmp(&b.nodes)))
            .ok_or_else(|| TopologyError::Unreachable(target.to_string()))
    }

    /// BFS that refuses to enter nodes of the excluded kinds; returns a witness path per reached node.
    fn reachable_avoiding(&self, start: usize, avoid: &[NodeKind]) -> Vec<(usize, Vec<usize>)> {
        let mut parent: HashMap<usize, usize> = HashMap::new();
        let mut seen = BTreeSet::from([start]);
        let mut queue = VecDeque::from([start]);
        let mut out = Vec::new();
        while let Some(n) = queue.pop_front() {
            let mut next: Vec<usize> = self
                .graph
                .neighbors(NodeIndex::new(n))
                .map(|i| i.index())
                .filter(|i| !avoid.contains(&self.nodes[*i].kind))
                .collect();
            next.sort_unstable();
            next.dedup();
            for m in next {
                if seen.insert(m) {
                    parent.insert(m, n);
                    queue.push_back(m);
                    let mut path = vec![m];
                    let mut cur = m;
                    while let Some(&p) = parent.get(&cur) {
                        path.push(p);
                        cur = p;
                    }
                    path.reverse();
                    out.push((m, path));
                }
            }
        }
        out
    }

    pub fn validate_structure(&self) -> Vec<Violation> {
        let mut out = Vec::new();

        let has = |z: TrustZone| self.vnets.iter().any(|v| v.trust == z);
        for zone in [TrustZone::Trusted, TrustZone::Untrusted] {
            if !has(zone) {
                out.push(Violation {
                    rule: Rule::Tr45,
                    subject: zone.to_string(),
                    detail: format!("no {zone} virtual network environment"),
                    path: vec![],
                });
            }
        }

        for n in &self.nodes {
            if n.vnet.is_none() {
                out.push(Violation {
                    rule: Rule::Tr61,
                    subject: n.id.clone(),
                    detail: "node is not placed in any virtual network".into(),
                    path: vec![],
                });
            }
        }

        for v in &self.vnets {
            match (v.role, &v.hub) {
                (VNetRole::Spoke, None) => out.push(Violation {
                    rule: Rule::HubSpoke,
                    subject: v.id.clone(),
                    detail: "spoke is not peered with a hub".into(),
                    path: vec![],
                }),
                (VNetRole::Spoke, Some(h)) => {
                    if self.vnet(h).map(|x| x.role) != Some(VNetRole::Hub) {
                        out.push(Violation {
                            rule: Rule::HubSpoke,
                            subject: v.id.clone(),
                            detail: format!("peer `{h}` is not a hub"),
                            path: vec![],
                        });
                    }
                }
                (VNetRole::Hub, Some(h)) => out.push(Violation {
                    rule: Rule::HubSpoke,
                    subject: v.id.clone(),
                    detail: format!("hub must not name a hub (`{h}`)"),
                    path: vec![],
                }),
                (VNetRole::Hub, None) => {}
            }
            if v.vwan && v.role == VNetRole::Spoke {
                out.push(Violation {
                    rule: Rule::HubSpoke,
                    subject: v.id.clone(),
                    detail: "only hubs can be virtual-WAN managed".into(),
                    path: vec![],
                });
            }
            if v.vwan && v.role == VNetRole::Hub {
                let fw_in_hub = self
                    .nodes
                    .iter()
                    .any(|n| n.kind == NodeKind::Firewall && n.vnet.as_deref() == Some(v.id.as_str()));
                if !fw_in_hub {
                    out.push(Violation {
                        rule: Rule::HubSpoke,
                        subject: v.id.clone(),
                        detail: "virtual-WAN hub needs a firewall inside the hub".into(),
                        path: vec![],
                    });
                }
            }
        }

        for ing in &self.ingress {
            let Some(zone) = self.ingress_trust(&ing.node) else {
                out.push(Violation {
                    rule: Rule::Ingress,
                    subject: ing.origin.clone(),
                    detail: format!("ingress node `{}` has no trust classification", ing.node),
                    path: vec![],
                });
                continue;
            };
            let start = self.node_index[&ing.node];
            if zone == TrustZone::Untrusted {
                let bypass = self.reachable_avoiding(start, &[NodeKind::Firewall]);
                for (reached, path) in bypass {
                    let kind = self.nodes[reached].kind;
                    if matches!(kind, NodeKind::FrontDoor | NodeKind::Dns) {
                        continue;
                    }
                    out.push(Violation {
                        rule: Rule::Tr48,
                        subject: self.nodes[reached].id.clone(),
                        detail: format!("reachable from untrusted ingress `{}` without a firewall", ing.origin),
                        path: path.iter().map(|&i| self.nodes[i].id.clone()).collect(),
                    });
                }
            }
            let reach: HashSet<usize> = self.reachable_avoiding(start, &[]).into_iter().map(|(n, _)| n).collect();
            for (i, n) in self.nodes.iter().enumerate() {
                if n.kind.is_cluster() && i != start && !reach.contains(&i) {
                    out.push(Violation {
                        rule: Rule::Connectivity,
                        subject: n.id.clone(),
                        detail: format!("cluster not reachable from ingress `{}`", ing.origin),
                        path: vec![],
                    });
                }
            }
        }

        out.sort_by(|a, b| (a.rule, &a.subject).cmp(&(b.rule, &b.subject)));
        out
    }
}
