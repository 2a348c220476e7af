//! Event-driven run of a scenario: requests walk their path hop by hop while
//! periodic events sample metrics, drive the autoscaler, probe backends,
//! take backups and bill usage.

use std::collections::{BTreeMap, VecDeque};

use rand::RngCore;
use thiserror::Error;

use crate::balancing::BackendPool;
use crate::cluster::{
    cpu_utilization, hpa_step, is_midnight, route_version, scheduled_scale, service_latency, Deployment, HpaState,
};
use crate::economics::{apply_savings_plan, BudgetMonitor, Category, CostLedger, EconomicsError};
use crate::gateway::{classify_trust, Decision, FirewallState, Protocol, RateLimiter, Request, TwoFactorGate};
use crate::kernel::{derive_stream, KernelError, RngStream, Scheduler, SimTime, MICROS_PER_DAY, MICROS_PER_HOUR};
use crate::resilience::{inject_failures, schedule_backups, BackupEvent, OutageInterval};
use crate::scenario::{replica_id, Scenario};
use crate::telemetry::{percentile, AlertEvaluator, AlertEvent, Layer, MetricPoint};
use crate::topology::{NodeKind, Path};
use crate::trace::{HopRecord, Manifest, ReplicaRecord, RequestRecord, SimTrace};

/// Trailing window over which a deployment's instantaneous load is measured.
pub const CPU_WINDOW_US: u64 = 10_000_000;

/// First address of the simulated client pools (100.64.0.0/10).
const CLIENT_BASE: u32 = 0x6440_0000;

#[derive(Debug, Error, PartialEq)]
pub enum SimError {
    #[error("no scenario loaded")]
    NoScenario,
    #[error(transparent)]
    Kernel(#[from] KernelError),
    #[error(transparent)]
    Economics(#[from] EconomicsError),
}

/// A seeded simulator; load a scenario, then run it to a horizon.
#[derive(Clone, Debug)]
pub struct Simulation {
    seed: u64,
    scenario: Option<Scenario>,
}

impl Simulation {
    pub fn new(seed: u64) -> Self {
        Simulation { seed, scenario: None }
    }

    pub fn load(&mut self, scenario: Scenario) {
        self.scenario = Some(scenario);
    }

    pub fn run_until(&self, horizon: SimTime) -> Result<SimTrace, SimError> {
        let s = self.scenario.as_ref().ok_or(SimError::NoScenario)?;
        run(s, self.seed, horizon)
    }
}

pub fn run(scenario: &Scenario, seed: u64, horizon: SimTime) -> Result<SimTrace, SimError> {
    let manifest = Manifest {
        seed,
        horizon_us: horizon.micros(),
        fingerprint: scenario.fingerprint(seed),
        topology_nodes: scenario.graph.nodes().iter().map(|n| n.id.clone()).collect(),
        replica_ids: scenario.replica_ids().into_iter().collect(),
    };
    if horizon == SimTime::ZERO {
        return Ok(SimTrace::empty(manifest));
    }
    let mut engine = Engine::new(scenario, seed, horizon)?;
    let mut sched: Scheduler<Ev> = Scheduler::new();
    engine.prime(&mut sched)?;
    sched.run_until(horizon, |sc, ev| engine.handle(sc, ev.time, ev.payload));
    Ok(engine.finish(manifest))
}

#[derive(Clone, Copy, Debug)]
enum Ev {
    Arrival(usize),
    Hop { req: usize, hop: usize },
    Sample,
    HpaCheck,
    Midnight,
    Probe,
    Backup(usize),
    Billing,
}

struct ReqState {
    req: Request,
    route: usize,
    visited: Vec<String>,
    version: Option<String>,
    outcome: Option<(SimTime, String)>,
}

struct DepState {
    spec: Deployment,
    pool: BackendPool,
    hpa: HpaState,
    window: VecDeque<SimTime>,
    sampled: u64,
    replica_us: u128,
    last_change: SimTime,
}

struct Engine<'a> {
    s: &'a Scenario,
    horizon: SimTime,
    arrivals: Vec<SimTime>,
    route_stream: RngStream,
    client_stream: RngStream,
    canary_stream: RngStream,
    paths: Vec<Path>,
    route_cdf: Vec<f64>,
    origin_index: BTreeMap<String, u32>,
    reqs: Vec<ReqState>,
    firewall: FirewallState,
    limiter: Option<RateLimiter>,
    two_factor: TwoFactorGate,
    deps: BTreeMap<String, DepState>,
    down: BTreeMap<String, Vec<(SimTime, SimTime)>>,
    replica_outages: Vec<OutageInterval>,
    outages: Vec<OutageInterval>,
    backup_plan: Vec<BackupEvent>,
    compute_rate: f64,
    storage_rate: Option<f64>,
    hops: Vec<HopRecord>,
    replicas: Vec<ReplicaRecord>,
    alerts: Vec<AlertEvent>,
    backups: Vec<BackupEvent>,
    metrics: Vec<MetricPoint>,
    ledger: CostLedger,
    budget: Option<BudgetMonitor>,
    evaluator: AlertEvaluator,
    last_bill: SimTime,
    period_latencies: Vec<u64>,
    denied: u64,
}

impl<'a> Engine<'a> {
    fn new(s: &'a Scenario, seed: u64, horizon: SimTime) -> Result<Self, SimError> {
        let doc = &s.doc;
        let policies = &doc.policies;
        let mut arrival_stream = derive_stream(seed, "arrivals")?;
        let arrivals = crate::workload::generate_arrivals(&s.profile, &mut arrival_stream, horizon);

        let routes = &doc.workload.routes;
        let mut paths = Vec::with_capacity(routes.len());
        let mut route_cdf = Vec::with_capacity(routes.len());
        let mut acc = 0.0;
        for r in routes {
            let ingress = s.graph.ingress_for_origin(&r.origin).expect("validated origin");
            paths.push(s.graph.path_between(&ingress.node, &r.target).expect("validated path"));
            acc += r.share;
            route_cdf.push(acc);
        }
        let origin_index = s
            .graph
            .ingress()
            .iter()
            .map(|i| i.origin.clone())
            .collect::<std::collections::BTreeSet<_>>()
            .into_iter()
            .enumerate()
            .map(|(i, o)| (o, i as u32))
            .collect();

        let outages = inject_failures(&policies.faults, &derive_stream(seed, "failures")?, horizon);
        let mut down: BTreeMap<String, Vec<(SimTime, SimTime)>> = BTreeMap::new();
        let mut replica_outages = Vec::new();
        for o in &outages {
            if s.graph.node(&o.node).is_some() {
                down.entry(o.node.clone()).or_default().push((o.start, o.end));
            } else {
                replica_outages.push(o.clone());
            }
        }

        let lb = policies.load_balancer.policy;
        let deps = doc
            .mesh
            .deployments
            .iter()
            .map(|d| {
                let pool = BackendPool::new(lb, (0..d.replicas).map(|i| replica_id(&d.name, i)));
                let state = DepState {
                    spec: d.clone(),
                    pool,
                    hpa: HpaState::new(d.replicas),
                    window: VecDeque::new(),
                    sampled: 0,
                    replica_us: 0,
                    last_change: SimTime::ZERO,
                };
                (d.name.clone(), state)
            })
            .collect();

        let prices = &doc.prices;
        let compute_rate = if doc.mesh.deployments.is_empty() {
            0.0
        } else {
            s.book.rate(&prices.provider, Category::GeneralCompute)? * (1.0 - prices.hybrid_benefit)
        };
        let storage_rate = if prices.storage_gb.is_empty() {
            None
        } else {
            Some(s.book.rate(&prices.provider, Category::Storage)?)
        };
        let budget = doc.compliance.budget_usd.map(BudgetMonitor::new).transpose()?;

        Ok(Engine {
            s,
            horizon,
            arrivals,
            route_stream: derive_stream(seed, "routes")?,
            client_stream: derive_stream(seed, "clients")?,
            canary_stream: derive_stream(seed, "canary")?,
            paths,
            route_cdf,
            origin_index,
            reqs: Vec::new(),
            firewall: FirewallState::from_policy(&policies.firewall),
            limiter: policies.rate_limit.as_ref().map(RateLimiter::from_policy),
            two_factor: TwoFactorGate::default(),
            deps,
            down,
            replica_outages,
            outages,
            backup_plan: policies
                .backup
                .as_ref()
                .map(|b| schedule_backups(b, horizon))
                .unwrap_or_default(),
            compute_rate,
            storage_rate,
            hops: Vec::new(),
            replicas: Vec::new(),
            alerts: Vec::new(),
            backups: Vec::new(),
            metrics: Vec::new(),
            ledger: CostLedger::new(),
            budget,
            evaluator: AlertEvaluator::new(policies.alerts.clone()),
            last_bill: SimTime::ZERO,
            period_latencies: Vec::new(),
            denied: 0,
        })
    }

    fn prime(&self, sc: &mut Scheduler<Ev>) -> Result<(), SimError> {
        let p = &self.s.doc.policies;
        if p.autoscaler.calendar.is_some() {
            sc.schedule(SimTime::ZERO, Ev::Midnight)?;
        }
        sc.schedule(SimTime::ZERO, Ev::Probe)?;
        if let Some(&first) = self.arrivals.first() {
            sc.schedule(first, Ev::Arrival(0))?;
        }
        self.schedule_within(sc, SimTime::from_secs(p.autoscaler.metrics_sample_period_s), Ev::Sample)?;
        self.schedule_within(sc, SimTime::from_secs(p.autoscaler.hpa_check_period_s), Ev::HpaCheck)?;
        for (i, b) in self.backup_plan.iter().enumerate() {
            sc.schedule(b.time, Ev::Backup(i))?;
        }
        sc.schedule(SimTime(MICROS_PER_HOUR.min(self.horizon.micros())), Ev::Billing)?;
        Ok(())
    }

    fn schedule_within(&self, sc: &mut Scheduler<Ev>, t: SimTime, ev: Ev) -> Result<(), KernelError> {
        if t <= self.horizon {
            sc.schedule(t, ev)?;
        }
        Ok(())
    }

    fn handle(&mut self, sc: &mut Scheduler<Ev>, t: SimTime, ev: Ev) {
        let policy = &self.s.doc.policies;
        let next = |period_us: u64| t.plus(period_us);
        let result = match ev {
            Ev::Arrival(i) => {
                self.arrive(i, t);
                let r = sc.schedule(t, Ev::Hop { req: i, hop: 0 });
                match self.arrivals.get(i + 1) {
                    Some(&n) => r.and_then(|_| sc.schedule(n, Ev::Arrival(i + 1))).map(|_| ()),
                    None => r.map(|_| ()),
                }
            }
            Ev::Hop { req, hop } => match self.hop(req, hop, t) {
                Some(at) => sc.schedule(at, Ev::Hop { req, hop: hop + 1 }).map(|_| ()),
                None => Ok(()),
            },
            Ev::Sample => {
                self.sample(t);
                let period = policy.autoscaler.metrics_sample_period_s * 1_000_000;
                self.schedule_within(sc, next(period), Ev::Sample)
            }
            Ev::HpaCheck => {
                self.hpa_check(t);
                let period = policy.autoscaler.hpa_check_period_s * 1_000_000;
                self.schedule_within(sc, next(period), Ev::HpaCheck)
            }
            Ev::Midnight => {
                self.midnight(t);
                self.schedule_within(sc, next(MICROS_PER_DAY), Ev::Midnight)
            }
            Ev::Probe => {
                for d in self.deps.values_mut() {
                    d.pool.probe(t, &self.replica_outages);
                }
                let period = SimTime::from_secs_f64(policy.load_balancer.probe_interval_s).micros().max(1);
                self.schedule_within(sc, next(period), Ev::Probe)
            }
            Ev::Backup(i) => {
                let mut b = self.backup_plan[i].clone();
                if b.encrypted_in_flight {
                    b.transfer_overhead_us = b.copies as u64 * policy.security_overheads.per_hop();
                }
                self.backups.push(b);
                Ok(())
            }
            Ev::Billing => {
                self.bill(t);
                if t < self.horizon {
                    let at = SimTime(next(MICROS_PER_HOUR).micros().min(self.horizon.micros()));
                    sc.schedule(at, Ev::Billing).map(|_| ())
                } else {
                    Ok(())
                }
            }
        };
        result.expect("events are never scheduled in the past");
    }

    fn arrive(&mut self, i: usize, t: SimTime) {
        let total = *self.route_cdf.last().expect("arrivals imply routes");
        let u = self.route_stream.substream(i as u64).next_unit() * total;
        let route = self.route_cdf.iter().position(|&c| u < c).unwrap_or(self.route_cdf.len() - 1);
        let spec = &self.s.doc.workload.routes[route];
        let client = (self.client_stream.substream(i as u64).next_u64() % self.s.doc.workload.clients as u64) as u32;
        let origin = self.origin_index[&spec.origin];
        let mut req = Request {
            id: i as u64,
            arrival: t,
            origin: spec.origin.clone(),
            src_ip: CLIENT_BASE.wrapping_add(origin << 16).wrapping_add(client),
            dst_node: spec.target.clone(),
            dst_ip: self.s.graph.node_address(&spec.target).expect("validated target"),
            protocol: Protocol::Tcp,
            trust: crate::topology::TrustZone::Untrusted,
            fqdn: None,
        };
        req.trust = classify_trust(&req, &self.s.graph).expect("validated origin");
        self.reqs.push(ReqState {
            req,
            route,
            visited: Vec::new(),
            version: None,
            outcome: None,
        });
    }

    fn is_down(&self, node: &str, t: SimTime) -> bool {
        self.down
            .get(node)
            .is_some_and(|spans| spans.iter().any(|&(s, e)| s <= t && t < e))
    }

    fn conclude(&mut self, r: usize, t: SimTime, outcome: String) {
        let st = &mut self.reqs[r];
        if outcome == "ok" {
            self.period_latencies.push(t.micros() - st.req.arrival.micros());
        } else if outcome.starts_with("denied:") {
            self.denied += 1;
        }
        st.outcome = Some((t, outcome));
    }

    /// Processes the request's arrival at hop `h`; returns when it reaches the next hop.
    fn hop(&mut self, r: usize, h: usize, t: SimTime) -> Option<SimTime> {
        let route = self.reqs[r].route;
        let len = self.paths[route].nodes.len();
        if h == len {
            self.conclude(r, t, "ok".into());
            return None;
        }
        let node_id = self.paths[route].nodes[h].clone();
        self.reqs[r].visited.push(node_id.clone());
        if self.is_down(&node_id, t) {
            self.conclude(r, t, format!("failed:{node_id}"));
            return None;
        }
        let node = self.s.graph.node(&node_id).expect("path nodes exist");
        let overheads = &self.s.doc.policies.security_overheads;
        let mut service = node.service_time;
        let mut extra = 0;
        match node.kind {
            NodeKind::FrontDoor => extra += self.two_factor.penalty(&self.reqs[r].req, overheads),
            NodeKind::Firewall => {
                if let Decision::Deny(reason) = self.firewall.admit(&self.reqs[r].req) {
                    self.conclude(r, t, format!("denied:{reason}"));
                    return None;
                }
            }
            NodeKind::ApiGateway => {
                if let Some(limiter) = self.limiter.as_mut() {
                    let mut at_gateway = self.reqs[r].req.clone();
                    at_gateway.arrival = t;
                    if let Decision::Deny(reason) = limiter.rate_limit(&at_gateway) {
                        self.conclude(r, t, format!("denied:{reason}"));
                        return None;
                    }
                }
            }
            NodeKind::ContainerCluster => match self.serve_cluster(r, &node_id, t) {
                Ok(Some(us)) => service = us,
                Ok(None) => {}
                Err(outcome) => {
                    self.conclude(r, t, outcome);
                    return None;
                }
            },
            _ => {}
        }
        let depart = t.plus(service + extra + overheads.per_hop());
        self.hops.push(HopRecord {
            request_id: r as u64,
            node: node_id,
            arrive: t,
            depart,
        });
        let link = self.paths[route].link_latencies.get(h).copied().unwrap_or(0);
        Some(depart.plus(link))
    }

    /// Canary routing, backend selection and load-dependent service time.
    /// `Ok(None)` when no mesh workload runs on the cluster.
    fn serve_cluster(&mut self, r: usize, cluster: &str, t: SimTime) -> Result<Option<u64>, String> {
        let mesh = &self.s.doc.mesh;
        let spec = &self.s.doc.workload.routes[self.reqs[r].route];
        let host = match &spec.host {
            Some(h) => h.clone(),
            None => match mesh.services.iter().filter(|s| s.cluster == cluster).map(|s| &s.name).min() {
                Some(h) => h.clone(),
                None => return Ok(None),
            },
        };
        let version = if mesh.virtual_services.iter().any(|v| v.host == host) {
            route_version(mesh, &host, r as u64, &self.canary_stream).map_err(|_| "no-route".to_string())?
        } else {
            match mesh.deployments.iter().filter(|d| d.service == host).min_by(|a, b| a.name.cmp(&b.name)) {
                Some(d) => d.version.clone(),
                None => return Err("no-deployment".into()),
            }
        };
        self.reqs[r].version = Some(version.clone());
        let name = mesh
            .deployments
            .iter()
            .filter(|d| d.service == host && d.version == version)
            .map(|d| d.name.clone())
            .min()
            .ok_or_else(|| "no-deployment".to_string())?;
        let dep = self.deps.get_mut(&name).expect("deployment state exists");
        let replica = dep
            .pool
            .pick_backend(&self.reqs[r].req)
            .map_err(|_| "no-healthy-backend".to_string())?;
        if self
            .replica_outages
            .iter()
            .any(|o| o.node == replica && o.contains(t))
        {
            return Err(format!("failed:{replica}"));
        }
        dep.sampled += 1;
        dep.window.push_back(t);
        while dep.window.front().is_some_and(|w| w.micros() + CPU_WINDOW_US <= t.micros()) {
            dep.window.pop_front();
        }
        let rate = dep.window.len() as f64 / (CPU_WINDOW_US as f64 / 1e6);
        let mut current = dep.spec.clone();
        current.replicas = dep.hpa.replicas;
        let cpu = cpu_utilization(rate, &current).expect("replicas >= 1");
        Ok(Some(service_latency(dep.spec.service_time, cpu)))
    }

    fn point(&mut self, t: SimTime, layer: Layer, name: String, value: f64) {
        let p = MetricPoint {
            time: t,
            layer,
            name,
            value,
        };
        self.alerts.extend(self.evaluator.observe(&p));
        self.metrics.push(p);
    }

    fn sample(&mut self, t: SimTime) {
        let period_s = self.s.doc.policies.autoscaler.metrics_sample_period_s as f64;
        let mut cpus = Vec::new();
        for (name, d) in self.deps.iter_mut() {
            let offered = d.sampled as f64 / period_s;
            let cpu = (offered / (d.spec.capacity * d.hpa.replicas as f64)).min(1.0);
            d.hpa.sampled_cpu = Some(cpu);
            d.sampled = 0;
            self.replicas.push(ReplicaRecord {
                time: t,
                deployment: name.clone(),
                replicas: d.hpa.replicas,
                cpu,
            });
            cpus.push((name.clone(), cpu, d.hpa.replicas));
        }
        let completed = self.period_latencies.len() as f64;
        self.point(t, Layer::Application, "requests_per_s".into(), completed / period_s);
        if !self.period_latencies.is_empty() {
            let p99 = percentile(&self.period_latencies, 99.0).expect("non-empty");
            self.point(t, Layer::Application, "latency_p99_ms".into(), p99 as f64 / 1000.0);
        }
        self.period_latencies.clear();
        let max_cpu = cpus.iter().map(|c| c.1).fold(0.0, f64::max);
        for (name, cpu, replicas) in cpus {
            self.point(t, Layer::Container, format!("cpu.{name}"), cpu);
            self.point(t, Layer::Container, format!("replicas.{name}"), replicas as f64);
        }
        self.point(t, Layer::Container, "cpu".into(), max_cpu);
        self.point(t, Layer::GuestOs, "load_factor".into(), 1.0 / (1.0 - max_cpu).max(0.01));
        let nodes_down = self.down.keys().filter(|n| self.is_down(n, t)).count();
        self.point(t, Layer::Resource, "nodes_down".into(), nodes_down as f64);
        let spend = self.ledger.total();
        self.point(t, Layer::Subscription, "accrued_usd".into(), spend);
        let denied = self.denied as f64;
        self.point(t, Layer::Tenant, "denied_requests".into(), denied);
    }

    fn set_replicas(&mut self, name: &str, to: u32, t: SimTime) {
        let d = self.deps.get_mut(name).expect("deployment state exists");
        let from = d.pool.members().len() as u32;
        d.replica_us += from as u128 * t.saturating_sub(d.last_change).micros() as u128;
        d.last_change = t;
        if to > from {
            for i in from..to {
                d.pool.add_member(replica_id(name, i));
            }
        } else {
            for i in (to..from).rev() {
                d.pool.remove_member(&replica_id(name, i));
            }
        }
        d.pool.probe(t, &self.replica_outages);
    }

    fn hpa_check(&mut self, t: SimTime) {
        let policy = &self.s.doc.policies.autoscaler;
        if policy.calendar.is_some() && is_midnight(t) {
            return;
        }
        let names: Vec<String> = self.deps.keys().cloned().collect();
        for name in names {
            let d = self.deps.get_mut(&name).expect("known");
            let before = d.hpa.replicas;
            let after = hpa_step(&mut d.hpa, policy, t);
            if after != before {
                let cpu = d.hpa.sampled_cpu.expect("scaling follows a sample");
                self.set_replicas(&name, after, t);
                self.replicas.push(ReplicaRecord {
                    time: t,
                    deployment: name,
                    replicas: after,
                    cpu,
                });
            }
        }
    }

    fn midnight(&mut self, t: SimTime) {
        let Some(target) = scheduled_scale(&self.s.doc.policies.autoscaler, t) else {
            return;
        };
        let names: Vec<String> = self.deps.keys().cloned().collect();
        for name in names {
            let d = self.deps.get_mut(&name).expect("known");
            d.hpa.replicas = target;
            d.hpa.last_update = Some(t);
            let cpu = d.hpa.sampled_cpu.unwrap_or(0.0);
            self.set_replicas(&name, target, t);
            self.replicas.push(ReplicaRecord {
                time: t,
                deployment: name,
                replicas: target,
                cpu,
            });
        }
    }

    fn bill(&mut self, t: SimTime) {
        if t <= self.last_bill {
            return;
        }
        let prices = &self.s.doc.prices;
        let hours = t.saturating_sub(self.last_bill).micros() as f64 / MICROS_PER_HOUR as f64;
        let mut period = CostLedger::new();
        period.set_period(self.last_bill.micros() / MICROS_PER_HOUR, hours);
        for (name, d) in self.deps.iter_mut() {
            let live = d.pool.members().len() as u128 * t.saturating_sub(d.last_change).micros() as u128;
            let replica_hours = (d.replica_us + live) as f64 / MICROS_PER_HOUR as f64;
            d.replica_us = 0;
            d.last_change = t;
            period.accrue_at_rate(name, &prices.provider, Category::GeneralCompute, replica_hours, self.compute_rate);
        }
        if let Some(rate) = self.storage_rate {
            for (node, gb) in &prices.storage_gb {
                period.accrue_at_rate(node, &prices.provider, Category::Storage, gb * hours / 720.0, rate);
            }
        }
        for v in self.s.graph.vnets().iter().filter(|v| v.vwan) {
            period.accrue_at_rate(
                &v.id,
                &prices.provider,
                Category::ManagedHub,
                hours,
                prices.managed_hub_usd_per_hour,
            );
        }
        if let Some(plan) = &prices.savings_plan {
            period = apply_savings_plan(&period, plan).expect("validated plan");
        }
        for e in period.entries() {
            let entry = self.ledger.push(e.clone());
            if let Some(alert) = self.budget.as_mut().and_then(|b| b.observe(entry)) {
                self.alerts.push(AlertEvent {
                    time: t,
                    rule: format!("budget>{}", alert.threshold),
                    action_group: self.s.doc.compliance.budget_action_group.clone(),
                });
            }
        }
        self.last_bill = t;
    }

    fn finish(self, manifest: Manifest) -> SimTrace {
        let requests = self
            .reqs
            .into_iter()
            .map(|st| {
                let (complete, outcome) = match st.outcome {
                    Some((t, o)) => (Some(t), o),
                    None => (None, "in-flight".to_string()),
                };
                RequestRecord {
                    id: st.req.id,
                    arrival: st.req.arrival,
                    complete,
                    path: st.visited,
                    version: st.version,
                    outcome,
                    latency_us: complete.map(|c| c.micros() - st.req.arrival.micros()),
                }
            })
            .collect();
        SimTrace {
            manifest,
            requests,
            hops: self.hops,
            replicas: self.replicas,
            outages: self.outages,
            alerts: self.alerts,
            backups: self.backups,
            metrics: self.metrics,
            ledger: self.ledger,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::trace::TraceKind;

    const REFERENCE: &str = include_str!("../../../scenarios/paper.json");

    fn reference() -> Scenario {
        Scenario::parse(REFERENCE).unwrap()
    }

    #[test]
    fn unloaded_simulation_errors() {
        assert_eq!(Simulation::new(1).run_until(SimTime::from_secs(1)).unwrap_err(), SimError::NoScenario);
    }

    #[test]
    fn zero_horizon_is_empty() {
        let t = run(&reference(), 7, SimTime::ZERO).unwrap();
        assert!(t.requests.is_empty() && t.replicas.is_empty() && t.ledger.entries().is_empty());
    }

    #[test]
    fn reference_run_completes_requests() {
        let t = run(&reference(), 7, SimTime::from_secs(160)).unwrap();
        let mut outcomes: BTreeMap<&str, usize> = BTreeMap::new();
        for r in &t.requests {
            *outcomes.entry(r.outcome.split(':').next().unwrap()).or_default() += 1;
        }
        assert!(outcomes["ok"] > t.requests.len() * 9 / 10);
        for r in t.requests.iter().filter(|r| r.is_ok()) {
            assert_eq!(r.path.last().map(String::as_str), Some("aks"));
            assert!(r.version.is_some());
            assert!(r.latency_us.unwrap() > 0);
        }
        assert!(t.requests.windows(2).all(|w| w[0].arrival <= w[1].arrival));
    }

    #[test]
    fn same_seed_same_trace() {
        let s = reference();
        let a = run(&s, 7, SimTime::from_secs(160)).unwrap();
        let b = run(&s, 7, SimTime::from_secs(160)).unwrap();
        for kind in TraceKind::ALL {
            assert_eq!(a.to_csv(kind), b.to_csv(kind), "{}", kind.as_str());
        }
        let c = run(&s, 8, SimTime::from_secs(160)).unwrap();
        assert_ne!(a.to_csv(TraceKind::Requests), c.to_csv(TraceKind::Requests));
    }

    #[test]
    fn blocklisted_client_is_denied() {
        let t = run(&reference(), 7, SimTime::from_secs(160)).unwrap();
        let denied: Vec<_> = t.requests.iter().filter(|r| r.outcome == "denied:threat-intel").collect();
        assert!(!denied.is_empty());
        assert!(denied.iter().all(|r| r.path.last().map(String::as_str) == Some("azfw")));
    }

    #[test]
    fn node_outage_fails_requests_on_it() {
        let text = REFERENCE.replacen(
            r#""faults": {"#,
            r#""faults": {"outages": [{"node": "apim", "start_s": 50, "end_s": 60}],"#,
            1,
        );
        let t = run(&Scenario::parse(&text).unwrap(), 7, SimTime::from_secs(160)).unwrap();
        let failed: Vec<_> = t.requests.iter().filter(|r| r.outcome == "failed:apim").collect();
        assert!(!failed.is_empty());
        for r in &failed {
            assert!(r.arrival >= SimTime::from_secs(49) && r.arrival < SimTime::from_secs(60));
        }
    }

    #[test]
    fn billing_covers_the_horizon() {
        let t = run(&reference(), 7, SimTime::from_secs(7200)).unwrap();
        let periods: std::collections::BTreeSet<_> = t.ledger.entries().iter().map(|e| e.period).collect();
        assert_eq!(periods.into_iter().collect::<Vec<_>>(), vec![0, 1]);
        assert!(t.ledger.total() > 0.0);
    }
}
