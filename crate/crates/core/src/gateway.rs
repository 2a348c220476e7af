//! Admission pipeline on the internet-facing path: trust classification,
//! stateful firewall, per-source rate limiting and security latency overheads.

use std::collections::{BTreeSet, HashMap, HashSet, VecDeque};
use std::fmt;
use std::net::Ipv4Addr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::kernel::SimTime;
use crate::topology::{TopologyGraph, TrustZone};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Protocol {
    Tcp,
    Udp,
}

impl Protocol {
    pub fn number(self) -> u8 {
        match self {
            Protocol::Tcp => 6,
            Protocol::Udp => 17,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Request {
    pub id: u64,
    pub arrival: SimTime,
    pub origin: String,
    pub src_ip: u32,
    pub dst_node: String,
    pub dst_ip: u32,
    pub protocol: Protocol,
    pub trust: TrustZone,
    pub fqdn: Option<String>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum DenyReason {
    ThreatIntel,
    NoRule,
    RateLimited,
}

impl fmt::Display for DenyReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            DenyReason::ThreatIntel => "threat-intel",
            DenyReason::NoRule => "no-rule",
            DenyReason::RateLimited => "rate-limited",
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Decision {
    Allow,
    Deny(DenyReason),
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum GatewayError {
    #[error("origin `{0}` is not bound to any ingress")]
    UnknownIngress(String),
}

/// Requests entering through an express-route or edge ingress are trusted,
/// front-door entries are not.
pub fn classify_trust(req: &Request, graph: &TopologyGraph) -> Result<TrustZone, GatewayError> {
    graph
        .ingress_for_origin(&req.origin)
        .and_then(|i| graph.ingress_trust(&i.node))
        .ok_or_else(|| GatewayError::UnknownIngress(req.origin.clone()))
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetworkRule {
    pub zone: TrustZone,
    pub dst: String,
}

/// `policies.firewall`
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FirewallPolicy {
    /// Dotted IPv4 addresses or domain names.
    #[serde(default)]
    pub threat_blocklist: Vec<String>,
    #[serde(default)]
    pub network_rules: Vec<NetworkRule>,
    #[serde(default)]
    pub dns_proxy: bool,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
struct Flow {
    src_ip: u32,
    dst_ip: u32,
    protocol: Protocol,
}

#[derive(Clone, Debug, Default)]
pub struct FirewallState {
    blocked_ips: HashSet<u32>,
    blocked_fqdns: HashSet<String>,
    rules: BTreeSet<(TrustZone, String)>,
    pub dns_proxy: bool,
    flows: HashSet<Flow>,
}

impl FirewallState {
    pub fn from_policy(policy: &FirewallPolicy) -> Self {
        let mut fw = FirewallState {
            dns_proxy: policy.dns_proxy,
            ..Default::default()
        };
        for entry in &policy.threat_blocklist {
            match entry.parse::<Ipv4Addr>() {
                Ok(ip) => {
                    fw.blocked_ips.insert(u32::from(ip));
                }
                Err(_) => {
                    fw.blocked_fqdns.insert(entry.to_ascii_lowercase());
                }
            }
        }
        for r in &policy.network_rules {
            fw.allow(r.zone, &r.dst);
        }
        fw
    }

    pub fn allow(&mut self, zone: TrustZone, dst: &str) {
        self.rules.insert((zone, dst.to_string()));
    }

    pub fn remove_rule(&mut self, zone: TrustZone, dst: &str) {
        self.rules.remove(&(zone, dst.to_string()));
    }

    pub fn block_ip(&mut self, ip: u32) {
        self.blocked_ips.insert(ip);
    }

    pub fn established_flows(&self) -> usize {
        self.flows.len()
    }

    pub fn admit(&mut self, req: &Request) -> Decision {
        let fqdn_blocked = req
            .fqdn
            .as_ref()
            .is_some_and(|f| self.blocked_fqdns.contains(&f.to_ascii_lowercase()));
        if self.blocked_ips.contains(&req.src_ip) || fqdn_blocked {
            return Decision::Deny(DenyReason::ThreatIntel);
        }
        let flow = Flow {
            src_ip: req.src_ip,
            dst_ip: req.dst_ip,
            protocol: req.protocol,
        };
        if self.flows.contains(&flow) {
            return Decision::Allow;
        }
        let has_rule = self.rules.contains(&(req.trust, req.dst_node.clone()));
        if !has_rule && req.trust == TrustZone::Untrusted {
            return Decision::Deny(DenyReason::NoRule);
        }
        self.flows.insert(flow);
        Decision::Allow
    }
}

/// `policies.rate_limit`
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RateLimitPolicy {
    pub cap: u32,
    pub window_s: f64,
}

/// Sliding-window limiter keyed by source address.
#[derive(Clone, Debug)]
pub struct RateLimiter {
    cap: u32,
    window: u64,
    admitted: HashMap<u32, VecDeque<SimTime>>,
}

impl RateLimiter {
    pub fn new(cap: u32, window: SimTime) -> Self {
        RateLimiter {
            cap,
            window: window.micros(),
            admitted: HashMap::new(),
        }
    }

    pub fn from_policy(p: &RateLimitPolicy) -> Self {
        Self::new(p.cap, SimTime::from_secs_f64(p.window_s))
    }

    /// Admitted requests from `src` inside the window ending at `now`.
    pub fn count(&self, src: u32, now: SimTime) -> usize {
        self.admitted
            .get(&src)
            .map_or(0, |q| q.iter().filter(|t| t.micros() + self.window > now.micros()).count())
    }

    pub fn rate_limit(&mut self, req: &Request) -> Decision {
        let now = req.arrival;
        let window = self.window;
        let q = self.admitted.entry(req.src_ip).or_default();
        while q.front().is_some_and(|t| t.micros() + window <= now.micros()) {
            q.pop_front();
        }
        if q.len() >= self.cap as usize {
            return Decision::Deny(DenyReason::RateLimited);
        }
        q.push_back(now);
        Decision::Allow
    }
}

/// `policies.security_overheads`: latency cost of 2FA and encryption in transit.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SecurityOverheads {
    #[serde(default = "yes")]
    pub two_factor: bool,
    #[serde(default = "default_two_factor_us")]
    pub two_factor_us: u64,
    #[serde(default = "yes")]
    pub tls: bool,
    #[serde(default = "default_tls_us")]
    pub tls_per_hop_us: u64,
}

fn yes() -> bool {
    true
}
fn default_two_factor_us() -> u64 {
    50_000
}
fn default_tls_us() -> u64 {
    300
}

impl Default for SecurityOverheads {
    fn default() -> Self {
        SecurityOverheads {
            two_factor: true,
            two_factor_us: default_two_factor_us(),
            tls: true,
            tls_per_hop_us: default_tls_us(),
        }
    }
}

impl SecurityOverheads {
    pub fn per_hop(&self) -> u64 {
        if self.tls {
            self.tls_per_hop_us
        } else {
            0
        }
    }
}

/// Charges the 2FA round trip once per untrusted source.
#[derive(Clone, Debug, Default)]
pub struct TwoFactorGate {
    seen: HashSet<u32>,
}

impl TwoFactorGate {
    pub fn penalty(&mut self, req: &Request, overheads: &SecurityOverheads) -> u64 {
        if !overheads.two_factor || req.trust != TrustZone::Untrusted {
            return 0;
        }
        if self.seen.insert(req.src_ip) {
            overheads.two_factor_us
        } else {
            0
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::topology::parse_topology;

    fn req(src: u32, dst: &str, trust: TrustZone, at: SimTime) -> Request {
        Request {
            id: 1,
            arrival: at,
            origin: "internet".into(),
            src_ip: src,
            dst_node: dst.into(),
            dst_ip: 0x0a01_0001,
            protocol: Protocol::Tcp,
            trust,
            fqdn: None,
        }
    }

    #[test]
    fn blocklisted_source_is_denied() {
        let mut fw = FirewallState::from_policy(&FirewallPolicy {
            threat_blocklist: vec!["203.0.113.9".into(), "evil.example".into()],
            network_rules: vec![NetworkRule {
                zone: TrustZone::Untrusted,
                dst: "aks".into(),
            }],
            dns_proxy: true,
        });
        let bad = u32::from(Ipv4Addr::new(203, 0, 113, 9));
        assert_eq!(
            fw.admit(&req(bad, "aks", TrustZone::Untrusted, SimTime::ZERO)),
            Decision::Deny(DenyReason::ThreatIntel)
        );
        let mut r = req(7, "aks", TrustZone::Untrusted, SimTime::ZERO);
        r.fqdn = Some("EVIL.example".into());
        assert_eq!(fw.admit(&r), Decision::Deny(DenyReason::ThreatIntel));
    }

    #[test]
    fn untrusted_without_rule_is_denied_by_default() {
        let mut fw = FirewallState::default();
        assert_eq!(
            fw.admit(&req(7, "datalake", TrustZone::Untrusted, SimTime::ZERO)),
            Decision::Deny(DenyReason::NoRule)
        );
        assert_eq!(fw.admit(&req(7, "datalake", TrustZone::Trusted, SimTime::ZERO)), Decision::Allow);
    }

    #[test]
    fn established_flow_survives_rule_removal() {
        let mut fw = FirewallState::default();
        fw.allow(TrustZone::Untrusted, "aks");
        let first = req(42, "aks", TrustZone::Untrusted, SimTime::ZERO);
        assert_eq!(fw.admit(&first), Decision::Allow);
        fw.remove_rule(TrustZone::Untrusted, "aks");
        assert_eq!(fw.admit(&first), Decision::Allow);
        // a new flow from another source still needs the rule
        assert_eq!(
            fw.admit(&req(43, "aks", TrustZone::Untrusted, SimTime::ZERO)),
            Decision::Deny(DenyReason::NoRule)
        );
        assert_eq!(fw.established_flows(), 1);
    }

    #[test]
    fn rate_limit_boundary_and_expiry() {
        let mut rl = RateLimiter::new(100, SimTime::from_secs(60));
        for i in 0..100 {
            let d = rl.rate_limit(&req(1, "aks", TrustZone::Untrusted, SimTime::from_secs(i / 4)));
            assert_eq!(d, Decision::Allow, "request {}", i + 1);
        }
        assert_eq!(
            rl.rate_limit(&req(1, "aks", TrustZone::Untrusted, SimTime::from_secs(30))),
            Decision::Deny(DenyReason::RateLimited)
        );
        // a different source has its own counter
        assert_eq!(rl.rate_limit(&req(2, "aks", TrustZone::Untrusted, SimTime::from_secs(30))), Decision::Allow);
        // first 4 requests were at t=0; they leave the window at t=60
        let at = SimTime::from_secs(60);
        assert_eq!(rl.count(1, at), 96);
        assert_eq!(rl.rate_limit(&req(1, "aks", TrustZone::Untrusted, at)), Decision::Allow);
        // long after: window fully expired
        let later = SimTime::from_secs(1000);
        assert_eq!(rl.rate_limit(&req(1, "aks", TrustZone::Untrusted, later)), Decision::Allow);
        assert_eq!(rl.count(1, later), 1);
    }

    #[test]
    fn two_factor_charged_once_per_untrusted_source() {
        let o = SecurityOverheads::default();
        let mut gate = TwoFactorGate::default();
        assert_eq!(gate.penalty(&req(5, "aks", TrustZone::Untrusted, SimTime::ZERO), &o), 50_000);
        assert_eq!(gate.penalty(&req(5, "aks", TrustZone::Untrusted, SimTime::ZERO), &o), 0);
        assert_eq!(gate.penalty(&req(6, "aks", TrustZone::Trusted, SimTime::ZERO), &o), 0);
    }

    #[test]
    fn trust_classification_follows_ingress_kind() {
        let g = parse_topology(
            r#"{
            "vnets": [{"id": "h", "role": "hub", "trust": "internal"}],
            "nodes": [
                {"id": "afd", "kind": "front-door", "vnet": "h"},
                {"id": "er", "kind": "express-route", "vnet": "h"}
            ],
            "links": [],
            "ingress": [
                {"origin": "internet", "node": "afd"},
                {"origin": "iot-edge", "node": "er"}
            ]
        }"#,
        )
        .unwrap();
        let mut r = req(1, "afd", TrustZone::Internal, SimTime::ZERO);
        assert_eq!(classify_trust(&r, &g), Ok(TrustZone::Untrusted));
        r.origin = "iot-edge".into();
        assert_eq!(classify_trust(&r, &g), Ok(TrustZone::Trusted));
        r.origin = "nowhere".into();
        assert_eq!(classify_trust(&r, &g), Err(GatewayError::UnknownIngress("nowhere".into())));
    }
}
