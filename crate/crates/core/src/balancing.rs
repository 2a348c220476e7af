//! Backend selection: round-robin or tuple-hash session persistence over the
//! healthy members of a pool, with probe-driven health.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::gateway::Request;
use crate::kernel::SimTime;
use crate::resilience::OutageInterval;

pub const DEFAULT_PROBE_INTERVAL_S: f64 = 10.0;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LbPolicy {
    RoundRobin,
    #[serde(rename = "tuple-hash-2")]
    TupleHash2,
    #[default]
    #[serde(rename = "tuple-hash-3")]
    TupleHash3,
}

/// `policies.load_balancer`
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LoadBalancerPolicy {
    #[serde(default)]
    pub policy: LbPolicy,
    #[serde(default = "default_probe")]
    pub probe_interval_s: f64,
}

fn default_probe() -> f64 {
    DEFAULT_PROBE_INTERVAL_S
}

impl Default for LoadBalancerPolicy {
    fn default() -> Self {
        LoadBalancerPolicy {
            policy: LbPolicy::default(),
            probe_interval_s: DEFAULT_PROBE_INTERVAL_S,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Health {
    Healthy,
    Unhealthy,
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum BalancingError {
    #[error("no healthy backend in pool")]
    NoHealthyBackend,
}

/// SplitMix64 finalizer.
pub fn mix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Hash of the packed (source, destination[, protocol]) tuple.
pub fn tuple_hash(src_ip: u32, dst_ip: u32, protocol: Option<u8>) -> u64 {
    let packed = ((src_ip as u64) << 32) | dst_ip as u64;
    let h = mix64(packed);
    match protocol {
        Some(p) => mix64(h ^ p as u64),
        None => h,
    }
}

#[derive(Clone, Debug)]
pub struct BackendPool {
    members: Vec<String>,
    health: BTreeMap<String, Health>,
    policy: LbPolicy,
    rr_cursor: usize,
}

impl BackendPool {
    pub fn new(policy: LbPolicy, members: impl IntoIterator<Item = String>) -> Self {
        let mut pool = BackendPool {
            members: Vec::new(),
            health: BTreeMap::new(),
            policy,
            rr_cursor: 0,
        };
        for m in members {
            pool.add_member(m);
        }
        pool
    }

    pub fn policy(&self) -> LbPolicy {
        self.policy
    }

    pub fn members(&self) -> &[String] {
        &self.members
    }

    pub fn add_member(&mut self, id: String) {
        if !self.health.contains_key(&id) {
            self.health.insert(id.clone(), Health::Healthy);
            self.members.push(id);
        }
    }

    pub fn remove_member(&mut self, id: &str) -> bool {
        let Some(pos) = self.members.iter().position(|m| m == id) else {
            return false;
        };
        self.members.remove(pos);
        self.health.remove(id);
        if self.rr_cursor >= self.members.len() {
            self.rr_cursor = 0;
        }
        true
    }

    pub fn set_health(&mut self, id: &str, h: Health) {
        if let Some(slot) = self.health.get_mut(id) {
            *slot = h;
        }
    }

    pub fn health(&self, id: &str) -> Option<Health> {
        self.health.get(id).copied()
    }

    pub fn is_healthy(&self, id: &str) -> bool {
        self.health(id) == Some(Health::Healthy)
    }

    /// Healthy members in sorted order.
    pub fn healthy(&self) -> Vec<&str> {
        self.health
            .iter()
            .filter(|(_, h)| **h == Health::Healthy)
            .map(|(id, _)| id.as_str())
            .collect()
    }

    pub fn pick_backend(&mut self, req: &Request) -> Result<String, BalancingError> {
        match self.policy {
            LbPolicy::RoundRobin => {
                let n = self.members.len();
                for step in 0..n {
                    let idx = (self.rr_cursor + step) % n;
                    if self.is_healthy(&self.members[idx]) {
                        self.rr_cursor = (idx + 1) % n;
                        return Ok(self.members[idx].clone());
                    }
                }
                Err(BalancingError::NoHealthyBackend)
            }
            LbPolicy::TupleHash2 | LbPolicy::TupleHash3 => {
                let healthy = self.healthy();
                if healthy.is_empty() {
                    return Err(BalancingError::NoHealthyBackend);
                }
                let proto = (self.policy == LbPolicy::TupleHash3).then(|| req.protocol.number());
                let h = tuple_hash(req.src_ip, req.dst_ip, proto);
                Ok(healthy[(h % healthy.len() as u64) as usize].to_string())
            }
        }
    }

    /// Marks members inside an active outage at `t` unhealthy and the rest healthy.
    pub fn probe(&mut self, t: SimTime, outages: &[OutageInterval]) {
        for (id, h) in self.health.iter_mut() {
            let down = outages.iter().any(|o| &o.node == id && o.contains(t));
            *h = if down { Health::Unhealthy } else { Health::Healthy };
        }
    }
}
