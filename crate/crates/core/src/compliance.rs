//! Machine-checkable technical requirements evaluated over the topology, a
//! finished trace and its cost ledger.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use thiserror::Error;

use crate::cluster::{is_midnight, ScalingPolicy};
use crate::economics::{budget_check, CostLedger};
use crate::kernel::{SimTime, MICROS_PER_DAY, MICROS_PER_HOUR, MICROS_PER_SEC};
use crate::resilience::{BackupPolicy, DEFAULT_MTTR_HOURS};
use crate::scenario::Scenario;
use crate::topology::{NodeKind, Rule, TopologyGraph};
use crate::trace::SimTrace;

/// Stated interpretation of the throughput-and-latency requirement.
pub const TR19_INTERPRETATION: &str =
    "TR19 is read as: at least 99.999% of completed requests finish end-to-end in under 3 s";

const TR15_MONTHLY_MINUTES: u64 = 3;
const TR19_LATENCY_US: u64 = 3 * MICROS_PER_SEC;
const TR20_LATENCY_US: u64 = 10_000;
const TR21_LATENCY_US: u64 = 100_000;
const TR23_MIN_OUTAGES: usize = 30;
const TR27_MAX_GAP_US: u64 = 12 * MICROS_PER_HOUR;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum TrId {
    Tr13,
    Tr14,
    Tr15,
    Tr19,
    Tr20,
    Tr21,
    Tr23,
    Tr25,
    Tr27,
    Tr34,
    Tr35,
    Tr45,
    Tr48,
    Tr53,
    Tr61,
}

impl TrId {
    pub const ALL: [TrId; 15] = [
        TrId::Tr13,
        TrId::Tr14,
        TrId::Tr15,
        TrId::Tr19,
        TrId::Tr20,
        TrId::Tr21,
        TrId::Tr23,
        TrId::Tr25,
        TrId::Tr27,
        TrId::Tr34,
        TrId::Tr35,
        TrId::Tr45,
        TrId::Tr48,
        TrId::Tr53,
        TrId::Tr61,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            TrId::Tr13 => "TR13",
            TrId::Tr14 => "TR14",
            TrId::Tr15 => "TR15",
            TrId::Tr19 => "TR19",
            TrId::Tr20 => "TR20",
            TrId::Tr21 => "TR21",
            TrId::Tr23 => "TR23",
            TrId::Tr25 => "TR25",
            TrId::Tr27 => "TR27",
            TrId::Tr34 => "TR34",
            TrId::Tr35 => "TR35",
            TrId::Tr45 => "TR45",
            TrId::Tr48 => "TR48",
            TrId::Tr53 => "TR53",
            TrId::Tr61 => "TR61",
        }
    }

    pub fn parse(s: &str) -> Option<TrId> {
        TrId::ALL.into_iter().find(|t| t.as_str().eq_ignore_ascii_case(s))
    }

    pub fn description(self) -> &'static str {
        match self {
            TrId::Tr13 => "annual maintenance cost per resource below $100 (static assertion)",
            TrId::Tr14 => "annual maintenance labor at most 100 h per resource (static assertion)",
            TrId::Tr15 => "monthly-normalized downtime at most 3 min",
            TrId::Tr19 => "completed requests under 3 s end-to-end, fraction >= 0.99999",
            TrId::Tr20 => "worst core-cluster service latency under 10 ms",
            TrId::Tr21 => "worst storage query latency under 100 ms",
            TrId::Tr23 => "mean repair time within 10% of 9 h",
            TrId::Tr25 => "backups keep 3 copies in 2 locations, 1 offsite",
            TrId::Tr27 => "no gap between backups longer than 12 h",
            TrId::Tr34 => "autoscaler changes are single steps matching the CPU thresholds",
            TrId::Tr35 => "replicas match the weekday/weekend calendar at each midnight",
            TrId::Tr45 => "separate trusted and untrusted virtual networks",
            TrId::Tr48 => "untrusted ingress passes a firewall",
            TrId::Tr53 => "cost budget monitored",
            TrId::Tr61 => "every resource inside a virtual network",
        }
    }

    pub fn input(self) -> InputKind {
        match self {
            TrId::Tr13 | TrId::Tr14 => InputKind::Policy,
            TrId::Tr45 | TrId::Tr48 | TrId::Tr61 => InputKind::Topology,
            TrId::Tr53 => InputKind::Ledger,
            _ => InputKind::Trace,
        }
    }
}

impl fmt::Display for TrId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum InputKind {
    Topology,
    Trace,
    Ledger,
    Policy,
}

impl fmt::Display for InputKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            InputKind::Topology => "topology",
            InputKind::Trace => "trace",
            InputKind::Ledger => "ledger",
            InputKind::Policy => "policy",
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Verdict {
    Pass,
    Fail,
    NotApplicable,
}

impl Verdict {
    pub fn as_str(self) -> &'static str {
        match self {
            Verdict::Pass => "pass",
            Verdict::Fail => "fail",
            Verdict::NotApplicable => "not-applicable",
        }
    }

    fn of(ok: bool) -> Verdict {
        if ok {
            Verdict::Pass
        } else {
            Verdict::Fail
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Check {
    pub id: TrId,
    pub verdict: Verdict,
    pub measured: Option<f64>,
    pub threshold: String,
    pub evidence: String,
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ComplianceError {
    #[error("{check} needs a {input}")]
    MissingInput { check: TrId, input: InputKind },
}

/// Scenario settings the checks compare against.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct CheckPolicy {
    pub backup: Option<BackupPolicy>,
    pub autoscaler: ScalingPolicy,
    pub budget_usd: Option<f64>,
    pub maintenance_usd_per_year: Option<f64>,
    pub labor_hours_per_year: Option<f64>,
}

impl CheckPolicy {
    pub fn from_scenario(s: &Scenario) -> Self {
        CheckPolicy {
            backup: s.doc.policies.backup.clone(),
            autoscaler: s.doc.policies.autoscaler.clone(),
            budget_usd: s.doc.compliance.budget_usd,
            maintenance_usd_per_year: s.doc.compliance.maintenance_usd_per_year,
            labor_hours_per_year: s.doc.compliance.labor_hours_per_year,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ComplianceReport {
    pub fingerprint: String,
    /// Ordered by requirement id.
    pub checks: Vec<Check>,
}

impl ComplianceReport {
    pub fn count(&self, v: Verdict) -> usize {
        self.checks.iter().filter(|c| c.verdict == v).count()
    }

    pub fn has_failures(&self) -> bool {
        self.count(Verdict::Fail) > 0
    }

    pub fn check(&self, id: TrId) -> Option<&Check> {
        self.checks.iter().find(|c| c.id == id)
    }
}

/// Inputs a set of checks runs over; absent inputs make the checks that need
/// them fail with [`ComplianceError::MissingInput`].
#[derive(Clone, Copy, Debug, Default)]
pub struct CheckInputs<'a> {
    pub graph: Option<&'a TopologyGraph>,
    pub trace: Option<&'a SimTrace>,
    pub ledger: Option<&'a CostLedger>,
}

pub fn run_checks(
    inputs: CheckInputs<'_>,
    policy: &CheckPolicy,
    enabled: &BTreeSet<TrId>,
) -> Result<ComplianceReport, ComplianceError> {
    let fingerprint = inputs.trace.map(|t| t.manifest.fingerprint.clone()).unwrap_or_default();
    let checks = enabled
        .iter()
        .map(|&id| evaluate(id, inputs, policy))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(ComplianceReport { fingerprint, checks })
}

/// Runs the scenario's enabled checks over a trace and its ledger.
pub fn check_run(scenario: &Scenario, trace: &SimTrace) -> Result<ComplianceReport, ComplianceError> {
    let inputs = CheckInputs {
        graph: Some(&scenario.graph),
        trace: Some(trace),
        ledger: Some(&trace.ledger),
    };
    run_checks(inputs, &CheckPolicy::from_scenario(scenario), &scenario.enabled)
}

fn need<T>(v: Option<T>, check: TrId, input: InputKind) -> Result<T, ComplianceError> {
    v.ok_or(ComplianceError::MissingInput { check, input })
}

fn check(id: TrId, verdict: Verdict, measured: Option<f64>, threshold: &str, evidence: String) -> Check {
    Check {
        id,
        verdict,
        measured,
        threshold: threshold.to_string(),
        evidence,
    }
}

fn na(id: TrId, threshold: &str, why: &str) -> Check {
    check(id, Verdict::NotApplicable, None, threshold, why.to_string())
}

fn evaluate(id: TrId, inputs: CheckInputs<'_>, policy: &CheckPolicy) -> Result<Check, ComplianceError> {
    let trace = || need(inputs.trace, id, InputKind::Trace);
    let graph = || need(inputs.graph, id, InputKind::Topology);
    Ok(match id {
        TrId::Tr13 => static_limit(id, policy.maintenance_usd_per_year, "< 100 USD/yr", |v| v < 100.0),
        TrId::Tr14 => static_limit(id, policy.labor_hours_per_year, "<= 100 h/yr", |v| v <= 100.0),
        TrId::Tr15 => tr15(trace()?),
        TrId::Tr19 => tr19(trace()?),
        TrId::Tr20 => worst_hop(id, graph()?, trace()?, NodeKind::is_cluster, TR20_LATENCY_US, "< 10 ms"),
        TrId::Tr21 => worst_hop(id, graph()?, trace()?, NodeKind::is_storage, TR21_LATENCY_US, "< 100 ms"),
        TrId::Tr23 => tr23(trace()?),
        TrId::Tr25 => tr25(trace()?),
        TrId::Tr27 => tr27(trace()?, policy),
        TrId::Tr34 => tr34(trace()?, &policy.autoscaler),
        TrId::Tr35 => tr35(trace()?, &policy.autoscaler),
        TrId::Tr45 => structural(id, graph()?, Rule::Tr45),
        TrId::Tr48 => structural(id, graph()?, Rule::Tr48),
        TrId::Tr61 => structural(id, graph()?, Rule::Tr61),
        TrId::Tr53 => tr53(need(inputs.ledger, id, InputKind::Ledger)?, policy),
    })
}

fn static_limit(id: TrId, value: Option<f64>, threshold: &str, ok: impl Fn(f64) -> bool) -> Check {
    match value {
        None => na(id, threshold, "no configured value; static assertion only"),
        Some(v) => check(id, Verdict::of(ok(v)), Some(v), threshold, "static configuration assertion".into()),
    }
}

fn tr15(trace: &SimTrace) -> Check {
    let id = TrId::Tr15;
    let threshold = "<= 3 min/month";
    let horizon = trace.horizon();
    if horizon == SimTime::ZERO {
        return na(id, threshold, "zero-length run");
    }
    let a = trace.availability(None).expect("service-wide availability");
    let ok = a.monthly_downtime_at_most(horizon, TR15_MONTHLY_MINUTES);
    check(
        id,
        Verdict::of(ok),
        Some(a.downtime_minutes),
        threshold,
        format!(
            "{} us down over {} us; availability {}",
            a.downtime_us,
            horizon.micros(),
            fmt_sig(a.fraction)
        ),
    )
}

fn tr19(trace: &SimTrace) -> Check {
    let id = TrId::Tr19;
    let threshold = ">= 0.99999 under 3 s";
    let done: Vec<u64> = trace.requests.iter().filter(|r| r.is_ok()).filter_map(|r| r.latency_us).collect();
    if done.is_empty() {
        return check(id, Verdict::Pass, None, threshold, "no completed requests; vacuously satisfied".into());
    }
    let fast = done.iter().filter(|&&l| l < TR19_LATENCY_US).count() as u64;
    let n = done.len() as u64;
    let ok = fast * 100_000 >= 99_999 * n;
    check(
        id,
        Verdict::of(ok),
        Some(fast as f64 / n as f64),
        threshold,
        format!("{fast} of {n} completed requests under 3 s"),
    )
}

fn worst_hop(
    id: TrId,
    graph: &TopologyGraph,
    trace: &SimTrace,
    kind: fn(NodeKind) -> bool,
    limit_us: u64,
    threshold: &str,
) -> Check {
    let worst = trace
        .hops
        .iter()
        .filter(|h| graph.node(&h.node).is_some_and(|n| kind(n.kind)))
        .max_by_key(|h| (h.duration(), std::cmp::Reverse(h.request_id)));
    match worst {
        None => na(id, threshold, "no requests reached a matching node"),
        Some(h) => check(
            id,
            Verdict::of(h.duration() < limit_us),
            Some(h.duration() as f64 / 1000.0),
            threshold,
            format!("worst hop: request {} at {} took {} us", h.request_id, h.node, h.duration()),
        ),
    }
}

fn tr23(trace: &SimTrace) -> Check {
    let id = TrId::Tr23;
    let threshold = "9 h +/- 10%";
    let horizon = trace.horizon();
    let repairs: Vec<u64> = trace
        .outages
        .iter()
        .filter(|o| o.end <= horizon)
        .map(|o| o.duration())
        .collect();
    if repairs.len() < TR23_MIN_OUTAGES {
        return na(
            id,
            threshold,
            &format!("{} completed outages, need at least {TR23_MIN_OUTAGES}", repairs.len()),
        );
    }
    let mean_h = repairs.iter().map(|&d| d as f64).sum::<f64>() / repairs.len() as f64 / MICROS_PER_HOUR as f64;
    let ok = (mean_h - DEFAULT_MTTR_HOURS).abs() <= 0.1 * DEFAULT_MTTR_HOURS;
    check(
        id,
        Verdict::of(ok),
        Some(mean_h),
        threshold,
        format!("mean over {} repairs", repairs.len()),
    )
}

fn tr25(trace: &SimTrace) -> Check {
    let id = TrId::Tr25;
    let threshold = "copies=3 locations=2 offsite>=1";
    if trace.backups.is_empty() {
        return na(id, threshold, "no backups taken during the run");
    }
    let bad = trace
        .backups
        .iter()
        .filter(|b| !(b.copies == 3 && b.locations == 2 && b.offsite >= 1))
        .count();
    let n = trace.backups.len();
    check(
        id,
        Verdict::of(bad == 0),
        Some((n - bad) as f64 / n as f64),
        threshold,
        format!("{bad} of {n} backups deviate"),
    )
}

fn tr27(trace: &SimTrace, policy: &CheckPolicy) -> Check {
    let id = TrId::Tr27;
    let threshold = "max gap <= 12 h";
    if policy.backup.is_none() {
        return check(id, Verdict::Fail, None, threshold, "no backup policy configured".into());
    }
    let horizon = trace.horizon();
    if horizon == SimTime::ZERO {
        return na(id, threshold, "zero-length run");
    }
    let mut times: Vec<u64> = trace
        .backups
        .iter()
        .map(|b| b.time.micros())
        .filter(|&t| t <= horizon.micros())
        .collect();
    times.sort_unstable();
    let mut prev = 0;
    let mut worst = (0u64, 0u64);
    for t in times.into_iter().chain(std::iter::once(horizon.micros())) {
        if t - prev > worst.1 - worst.0 {
            worst = (prev, t);
        }
        prev = t;
    }
    let gap = worst.1 - worst.0;
    check(
        id,
        Verdict::of(gap <= TR27_MAX_GAP_US),
        Some(gap as f64 / MICROS_PER_HOUR as f64),
        threshold,
        format!("largest gap from {} us to {} us", worst.0, worst.1),
    )
}

fn by_deployment(trace: &SimTrace) -> BTreeMap<&str, Vec<&crate::trace::ReplicaRecord>> {
    let mut m: BTreeMap<&str, Vec<_>> = BTreeMap::new();
    for r in &trace.replicas {
        m.entry(r.deployment.as_str()).or_default().push(r);
    }
    m
}

fn tr34(trace: &SimTrace, policy: &ScalingPolicy) -> Check {
    let id = TrId::Tr34;
    let threshold = "step 1; +1 iff cpu>0.70, -1 iff cpu<0.50; >= 60 s apart";
    let calendar = policy.calendar.is_some();
    let mut changes = 0usize;
    let mut violations = Vec::new();
    for (dep, rows) in by_deployment(trace) {
        let mut prev: Option<u32> = None;
        let mut last_change: Option<SimTime> = None;
        for r in rows {
            let Some(p) = prev.replace(r.replicas) else {
                continue;
            };
            if p == r.replicas {
                continue;
            }
            let since = last_change.replace(r.time);
            if calendar && is_midnight(r.time) {
                continue;
            }
            changes += 1;
            let up = r.replicas > p;
            let step = r.replicas.abs_diff(p);
            let rule_ok = if up {
                r.cpu > policy.scale_out_threshold
            } else {
                r.cpu < policy.scale_in_threshold
            };
            let spaced = since.is_none_or(|l| r.time.saturating_sub(l) >= policy.update_period());
            let bounded = (policy.min_replicas..=policy.max_replicas).contains(&r.replicas);
            if step != policy.step || !rule_ok || !spaced || !bounded {
                violations.push(format!("{dep} {p}->{} at {} us (cpu {})", r.replicas, r.time.micros(), r.cpu));
            }
        }
    }
    if changes == 0 {
        return na(id, threshold, "no autoscaler changes in the run");
    }
    let evidence = if violations.is_empty() {
        format!("{changes} changes consistent")
    } else {
        format!("{} of {changes} inconsistent; first: {}", violations.len(), violations[0])
    };
    check(id, Verdict::of(violations.is_empty()), Some(violations.len() as f64), threshold, evidence)
}

fn tr35(trace: &SimTrace, policy: &ScalingPolicy) -> Check {
    let id = TrId::Tr35;
    let threshold = "weekday target / weekend target at each midnight";
    let Some(cal) = &policy.calendar else {
        return na(id, threshold, "calendar scaling disabled");
    };
    let deps = by_deployment(trace);
    if deps.is_empty() {
        return na(id, threshold, "no deployments");
    }
    let days = trace.horizon().micros() / MICROS_PER_DAY;
    let mut checked = 0usize;
    let mut misses = Vec::new();
    for (dep, rows) in &deps {
        for day in 0..=days {
            let t = SimTime(day * MICROS_PER_DAY);
            let target = cal.target_for_day(day);
            checked += 1;
            match rows.iter().rev().find(|r| r.time == t) {
                Some(r) if r.replicas == target => {}
                Some(r) => misses.push(format!("{dep} day {day}: {} != {target}", r.replicas)),
                None => misses.push(format!("{dep} day {day}: no record")),
            }
        }
    }
    let evidence = if misses.is_empty() {
        format!("{checked} boundaries match")
    } else {
        format!("{} of {checked} boundaries off; first: {}", misses.len(), misses[0])
    };
    check(id, Verdict::of(misses.is_empty()), Some(misses.len() as f64), threshold, evidence)
}

fn structural(id: TrId, graph: &TopologyGraph, rule: Rule) -> Check {
    let v: Vec<String> = graph
        .validate_structure()
        .into_iter()
        .filter(|v| v.rule == rule)
        .map(|v| v.to_string())
        .collect();
    let evidence = if v.is_empty() {
        "no violations".to_string()
    } else {
        v.join("; ")
    };
    check(id, Verdict::of(v.is_empty()), Some(v.len() as f64), "0 violations", evidence)
}

fn tr53(ledger: &CostLedger, policy: &CheckPolicy) -> Check {
    let id = TrId::Tr53;
    let threshold = "budget configured";
    let Some(budget) = policy.budget_usd else {
        return check(id, Verdict::Fail, Some(ledger.total()), threshold, "no budget configured".into());
    };
    let evidence = match budget_check(ledger, budget) {
        Ok(Some(a)) => format!("budget {budget} crossed at ledger entry {}", a.entry_id),
        Ok(None) => format!("spend within budget {budget}"),
        Err(e) => return check(id, Verdict::Fail, None, threshold, e.to_string()),
    };
    check(id, Verdict::Pass, Some(ledger.total()), threshold, evidence)
}

/// Six significant digits.
pub fn fmt_sig(x: f64) -> String {
    if x == 0.0 {
        return "0".into();
    }
    if !x.is_finite() {
        return x.to_string();
    }
    let mag = x.abs().log10().floor() as i32;
    if (-4..6).contains(&mag) {
        format!("{:.*}", (5 - mag).max(0) as usize, x)
    } else {
        format!("{x:.5e}")
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ReportFormat {
    Text,
    Csv,
}

pub fn render_report(report: &ComplianceReport, format: ReportFormat) -> String {
    match format {
        ReportFormat::Csv => {
            let mut w = csv::WriterBuilder::new()
                .terminator(csv::Terminator::Any(b'\n'))
                .from_writer(Vec::new());
            w.write_record(["tr", "verdict", "measured", "threshold"]).expect("in-memory");
            for c in &report.checks {
                let measured = c.measured.map(fmt_sig).unwrap_or_default();
                w.write_record([c.id.as_str(), c.verdict.as_str(), &measured, &c.threshold])
                    .expect("in-memory");
            }
            String::from_utf8(w.into_inner().expect("in-memory")).expect("utf-8")
        }
        ReportFormat::Text => {
            let mut out = String::new();
            out.push_str("compliance report\n");
            out.push_str(&format!("fingerprint: {}\n", report.fingerprint));
            out.push_str(&format!("note: {TR19_INTERPRETATION}\n"));
            out.push_str("note: TR13 and TR14 are static configuration assertions\n");
            out.push_str(&format!(
                "summary: pass={} fail={} not-applicable={}\n\n",
                report.count(Verdict::Pass),
                report.count(Verdict::Fail),
                report.count(Verdict::NotApplicable)
            ));
            for c in &report.checks {
                out.push_str(&format!(
                    "{:<5} {:<14} measured={} threshold={}\n      {}\n      {}\n",
                    c.id.as_str(),
                    c.verdict.as_str(),
                    c.measured.map(fmt_sig).unwrap_or_else(|| "-".into()),
                    c.threshold,
                    c.id.description(),
                    c.evidence
                ));
            }
            out
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::resilience::{BackupEvent, OutageInterval};
    use crate::trace::{Manifest, ReplicaRecord};

    fn trace(horizon: SimTime) -> SimTrace {
        SimTrace::empty(Manifest {
            seed: 1,
            horizon_us: horizon.micros(),
            fingerprint: "fp".into(),
            topology_nodes: vec!["aks".into()],
            replica_ids: vec![],
        })
    }

    fn only(id: TrId) -> BTreeSet<TrId> {
        [id].into_iter().collect()
    }

    fn verdict(id: TrId, t: &SimTrace, p: &CheckPolicy) -> Check {
        let inputs = CheckInputs {
            trace: Some(t),
            ..Default::default()
        };
        run_checks(inputs, p, &only(id)).unwrap().checks.remove(0)
    }

    #[test]
    fn idle_run_passes_vacuously() {
        let p = CheckPolicy {
            backup: Some(BackupPolicy::default()),
            ..Default::default()
        };
        let t = trace(SimTime::from_hours(1));
        for id in [TrId::Tr15, TrId::Tr19, TrId::Tr27] {
            assert_eq!(verdict(id, &t, &p).verdict, Verdict::Pass, "{}", id.as_str());
        }
    }

    #[test]
    fn ten_minute_outage_fails_downtime_budget() {
        let mut t = trace(SimTime(30 * MICROS_PER_DAY));
        t.outages.push(OutageInterval {
            node: "aks".into(),
            start: SimTime::from_secs(1000),
            end: SimTime::from_secs(1600),
        });
        let c = verdict(TrId::Tr15, &t, &CheckPolicy::default());
        assert_eq!(c.verdict, Verdict::Fail);
        assert!((c.measured.unwrap() - 10.0).abs() < 1e-9);
    }

    #[test]
    fn backup_gap_check() {
        let p = CheckPolicy {
            backup: Some(BackupPolicy::default()),
            ..Default::default()
        };
        let mut t = trace(SimTime::from_hours(48));
        t.backups = crate::resilience::schedule_backups(&BackupPolicy::default(), t.horizon());
        assert_eq!(verdict(TrId::Tr27, &t, &p).verdict, Verdict::Pass);
        t.backups[1].time = SimTime(24 * MICROS_PER_HOUR + MICROS_PER_HOUR / 2);
        let c = verdict(TrId::Tr27, &t, &p);
        assert_eq!(c.verdict, Verdict::Fail);
        assert_eq!(c.measured, Some(12.5));
        assert_eq!(verdict(TrId::Tr27, &t, &CheckPolicy::default()).verdict, Verdict::Fail);
    }

    #[test]
    fn backup_metadata() {
        let mut t = trace(SimTime::from_hours(24));
        assert_eq!(verdict(TrId::Tr25, &t, &CheckPolicy::default()).verdict, Verdict::NotApplicable);
        t.backups.push(BackupEvent {
            time: SimTime::from_hours(12),
            copies: 3,
            locations: 2,
            offsite: 1,
            encrypted_at_rest: true,
            encrypted_in_flight: true,
            transfer_overhead_us: 0,
        });
        assert_eq!(verdict(TrId::Tr25, &t, &CheckPolicy::default()).verdict, Verdict::Pass);
        t.backups[0].offsite = 0;
        assert_eq!(verdict(TrId::Tr25, &t, &CheckPolicy::default()).verdict, Verdict::Fail);
    }

    fn row(t: u64, replicas: u32, cpu: f64) -> ReplicaRecord {
        ReplicaRecord {
            time: SimTime::from_secs(t),
            deployment: "d".into(),
            replicas,
            cpu,
        }
    }

    #[test]
    fn autoscaler_consistency() {
        let p = CheckPolicy::default();
        let mut t = trace(SimTime::from_secs(600));
        assert_eq!(verdict(TrId::Tr34, &t, &p).verdict, Verdict::NotApplicable);
        t.replicas = vec![row(60, 2, 0.8), row(60, 3, 0.8), row(120, 3, 0.6), row(180, 2, 0.4)];
        assert_eq!(verdict(TrId::Tr34, &t, &p).verdict, Verdict::Pass);
        t.replicas.push(row(200, 1, 0.4));
        assert_eq!(verdict(TrId::Tr34, &t, &p).verdict, Verdict::Fail);
        t.replicas.pop();
        t.replicas.push(row(300, 4, 0.7));
        assert_eq!(verdict(TrId::Tr34, &t, &p).verdict, Verdict::Fail);
    }

    #[test]
    fn calendar_boundaries() {
        let p = CheckPolicy {
            autoscaler: ScalingPolicy {
                calendar: Some(Default::default()),
                ..Default::default()
            },
            ..Default::default()
        };
        let mut t = trace(SimTime(2 * MICROS_PER_DAY));
        t.replicas = (0..=2).map(|d| row(d * 86_400, 10, 0.0)).collect();
        assert_eq!(verdict(TrId::Tr35, &t, &p).verdict, Verdict::Pass);
        t.replicas[2].replicas = 4;
        assert_eq!(verdict(TrId::Tr35, &t, &p).verdict, Verdict::Fail);
        assert_eq!(
            verdict(TrId::Tr35, &t, &CheckPolicy::default()).verdict,
            Verdict::NotApplicable
        );
    }

    #[test]
    fn missing_inputs_reported() {
        let err = run_checks(CheckInputs::default(), &CheckPolicy::default(), &only(TrId::Tr48)).unwrap_err();
        assert_eq!(
            err,
            ComplianceError::MissingInput {
                check: TrId::Tr48,
                input: InputKind::Topology
            }
        );
    }

    #[test]
    fn empty_enabled_renders_header_only() {
        let r = run_checks(CheckInputs::default(), &CheckPolicy::default(), &BTreeSet::new()).unwrap();
        assert_eq!(render_report(&r, ReportFormat::Csv), "tr,verdict,measured,threshold\n");
    }

    #[test]
    fn significant_digits() {
        assert_eq!(fmt_sig(0.99993055555), "0.999931");
        assert_eq!(fmt_sig(3.0), "3.00000");
        assert_eq!(fmt_sig(12.5), "12.5000");
        assert_eq!(fmt_sig(1234567.0), "1.23457e6");
    }
}
