//! `netsim`: run scenarios, verify traces, rank providers and inspect workload profiles.
//!
//! Exit codes: 0 success, 1 failed compliance checks (`verify`), 2 usage or input error.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};
use netsim_core::compliance::{check_run, render_report, ReportFormat, Verdict};
use netsim_core::economics::{gpu_rank, mcda_rank, paper_2022, builtin_matrix, Weights, Winner};
use netsim_core::kernel::SimTime;
use netsim_core::scenario::Scenario;
use netsim_core::sim::run;
use netsim_core::telemetry::percentile;
use netsim_core::trace::SimTrace;
use netsim_core::workload::{named_profile, WorkloadProfile};

#[derive(Parser)]
#[command(name = "netsim", version, about = "Deterministic cloud network and workload simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate a scenario and write the trace CSVs and compliance report.
    Run {
        #[arg(long)]
        scenario: PathBuf,
        #[arg(long)]
        seed: u64,
        /// Seconds; defaults to the end of the workload profile.
        #[arg(long)]
        horizon: Option<f64>,
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
    /// Re-evaluate compliance checks over an existing trace directory.
    Verify {
        #[arg(long)]
        scenario: PathBuf,
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
    /// Rank providers by weighted criteria scores.
    RankProviders {
        /// `criterion=weight` pairs; unlisted criteria share the remainder.
        #[arg(long)]
        weights: Option<String>,
    },
    /// Print user counts over time for a named profile or a scenario's workload.
    Profile {
        #[arg(long, conflicts_with = "scenario")]
        profile: Option<String>,
        #[arg(long)]
        scenario: Option<PathBuf>,
    },
    /// Summarize an existing trace directory.
    Report {
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run {
            scenario,
            seed,
            horizon,
            out,
        } => cmd_run(&scenario, seed, horizon, &out),
        Command::Verify { scenario, out } => cmd_verify(&scenario, &out),
        Command::RankProviders { weights } => cmd_rank(weights.as_deref()),
        Command::Profile { profile, scenario } => cmd_profile(profile.as_deref(), scenario.as_deref()),
        Command::Report { out } => cmd_report(&out),
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}

fn load(path: &Path) -> Result<Scenario> {
    Scenario::load(path).with_context(|| format!("loading scenario {}", path.display()))
}

fn cmd_run(path: &Path, seed: u64, horizon: Option<f64>, out: &Path) -> Result<ExitCode> {
    let scenario = load(path)?;
    let horizon = match horizon {
        Some(h) if !(h > 0.0 && h.is_finite()) => bail!("--horizon must be a positive number of seconds"),
        Some(h) => SimTime::from_secs_f64(h),
        None => scenario.default_horizon(),
    };
    if horizon == SimTime::ZERO {
        bail!("horizon must be positive");
    }
    let trace = run(&scenario, seed, horizon)?;
    let report = check_run(&scenario, &trace)?;
    let mut written = trace.write_dir(out)?;
    for (name, format) in [("compliance.txt", ReportFormat::Text), ("compliance.csv", ReportFormat::Csv)] {
        let file = out.join(name);
        fs::write(&file, render_report(&report, format)).with_context(|| format!("writing {}", file.display()))?;
        written.push(file);
    }
    println!("{}", trace.manifest.fingerprint);
    let ok = trace.requests.iter().filter(|r| r.is_ok()).count();
    println!("requests: {} ok: {}", trace.requests.len(), ok);
    println!("checks: {} failing: {}", report.checks.len(), report.count(Verdict::Fail));
    for f in written {
        println!("wrote {}", f.display());
    }
    Ok(ExitCode::SUCCESS)
}

fn cmd_verify(path: &Path, out: &Path) -> Result<ExitCode> {
    let scenario = load(path)?;
    let trace = SimTrace::read_dir(out).with_context(|| format!("reading trace {}", out.display()))?;
    let expected = scenario.fingerprint(trace.manifest.seed);
    if trace.manifest.fingerprint != expected {
        bail!(
            "trace was produced from a different scenario ({} vs {})",
            trace.manifest.fingerprint,
            expected
        );
    }
    let report = check_run(&scenario, &trace)?;
    print!("{}", render_report(&report, ReportFormat::Text));
    Ok(if report.has_failures() {
        ExitCode::FAILURE
    } else {
        ExitCode::SUCCESS
    })
}

fn cmd_rank(weights: Option<&str>) -> Result<ExitCode> {
    let weights = match weights {
        Some(w) => Weights::parse(w)?,
        None => Weights::uniform(),
    };
    let matrix = builtin_matrix();
    let ranking = mcda_rank(&matrix, &weights);
    println!("{:<5} {:<10} {:>8} {:>6} {:>9}", "rank", "provider", "total", "cost", "identity");
    for (i, p) in ranking.ordered.iter().enumerate() {
        println!(
            "{:<5} {:<10} {:>8.4} {:>6.2} {:>9.2}",
            i + 1,
            p.provider,
            p.total,
            p.cost,
            p.identity
        );
    }
    match &ranking.winner {
        Winner::Single(p) => println!("winner: {p}"),
        Winner::Tie(ps) => println!("tie: {}", ps.join(", ")),
    }
    println!();
    println!("weights:");
    for (c, w) in weights.iter() {
        let Some(scores) = matrix.criterion(c) else {
            println!("  {:<22} {:.4}  -", c.as_str(), w);
            continue;
        };
        let flag = if scores.ambiguous { "  (>= scored as >)" } else { "" };
        println!("  {:<22} {:.4}  {}{flag}", c.as_str(), w, scores.line);
        if let Some(note) = &scores.note {
            println!("  {:<22}         note: {note}", "");
        }
    }
    println!();
    println!("gpu (A100, usd/hour):");
    for r in gpu_rank(&paper_2022())? {
        println!("  {} {:<10} {:.2}", r.rank, r.display, r.price);
    }
    Ok(ExitCode::SUCCESS)
}

fn cmd_profile(name: Option<&str>, scenario: Option<&Path>) -> Result<ExitCode> {
    let profile: WorkloadProfile = match (name, scenario) {
        (Some(n), None) => named_profile(n)?,
        (None, Some(p)) => load(p)?.profile,
        _ => bail!("pass either --profile NAME or --scenario PATH"),
    };
    let mut times: Vec<f64> = Vec::new();
    let (start, end) = (profile.start(), profile.end());
    let mut t = start;
    while t < end {
        times.push(t);
        t += 10.0;
    }
    times.push(end);
    times.extend(profile.stages.iter().flat_map(|s| [s.t_start, s.t_end]));
    times.sort_by(f64::total_cmp);
    times.dedup();
    println!("t_s,users");
    for t in times {
        println!("{t},{}", profile.users_at(t)?);
    }
    Ok(ExitCode::SUCCESS)
}

fn cmd_report(out: &Path) -> Result<ExitCode> {
    let trace = SimTrace::read_dir(out).with_context(|| format!("reading trace {}", out.display()))?;
    println!("{}", trace.manifest.fingerprint);
    println!("horizon_s: {}", trace.horizon().as_secs_f64());
    let mut outcomes: BTreeMap<&str, usize> = BTreeMap::new();
    for r in &trace.requests {
        *outcomes.entry(r.outcome.as_str()).or_default() += 1;
    }
    println!("requests: {}", trace.requests.len());
    for (o, n) in &outcomes {
        println!("  {o}: {n}");
    }
    let mut latencies: Vec<u64> = trace.requests.iter().filter_map(|r| r.latency_us.filter(|_| r.is_ok())).collect();
    latencies.sort_unstable();
    for p in [50.0, 95.0, 99.0] {
        if let Ok(v) = percentile(&latencies, p) {
            println!("latency_p{p}_ms: {:.3}", v as f64 / 1000.0);
        }
    }
    let a = trace.availability(None)?;
    println!("availability: {:.7} (downtime {:.3} min)", a.fraction, a.downtime_minutes);
    println!("outages: {} backups: {} alerts: {}", trace.outages.len(), trace.backups.len(), trace.alerts.len());
    println!("cost_usd: {:.4} (list {:.4})", trace.ledger.total(), trace.ledger.list_total());
    Ok(ExitCode::SUCCESS)
}
