use netsim_core::compliance::{check_run, render_report, ReportFormat};
use netsim_core::kernel::SimTime;
use netsim_core::scenario::Scenario;
use netsim_core::sim::run;
use netsim_core::trace::{SimTrace, TraceKind};

const REFERENCE: &str = include_str!("../../../scenarios/paper.json");

#[test]
fn report_from_disk_matches_report_from_memory() {
    let s = Scenario::parse(REFERENCE).unwrap();
    let trace = run(&s, 11, SimTime::from_secs(160)).unwrap();
    let dir = tempfile::tempdir().unwrap();
    trace.write_dir(dir.path()).unwrap();
    let back = SimTrace::read_dir(dir.path()).unwrap();
    for kind in TraceKind::ALL {
        assert_eq!(back.to_csv(kind), trace.to_csv(kind), "{}", kind.as_str());
    }
    let a = check_run(&s, &trace).unwrap();
    let b = check_run(&s, &back).unwrap();
    assert_eq!(render_report(&a, ReportFormat::Text), render_report(&b, ReportFormat::Text));
    assert!(!a.has_failures(), "{}", render_report(&a, ReportFormat::Text));
}

#[test]
fn day_long_run_takes_backups_and_bills_every_hour() {
    let s = Scenario::parse(REFERENCE).unwrap();
    let trace = run(&s, 3, SimTime::from_hours(24)).unwrap();
    let hours: Vec<u64> = trace.backups.iter().map(|b| b.time.micros() / 3_600_000_000).collect();
    assert_eq!(hours, vec![12, 24]);
    assert!(trace.backups.iter().all(|b| b.transfer_overhead_us > 0));
    let periods: std::collections::BTreeSet<u64> = trace.ledger.entries().iter().map(|e| e.period).collect();
    assert_eq!(periods.len(), 24);
    let report = check_run(&s, &trace).unwrap();
    assert!(!report.has_failures(), "{}", render_report(&report, ReportFormat::Text));
}
