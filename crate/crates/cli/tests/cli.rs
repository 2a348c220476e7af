use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn netsim(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_netsim")).args(args).output().expect("binary runs")
}

fn reference() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../scenarios/paper.json")
}

fn run_into(dir: &Path) -> Output {
    netsim(&[
        "run",
        "--scenario",
        reference().to_str().unwrap(),
        "--seed",
        "7",
        "--horizon",
        "160",
        "--out",
        dir.to_str().unwrap(),
    ])
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

#[test]
fn run_writes_trace_and_report() {
    let dir = tempfile::tempdir().unwrap();
    let o = run_into(dir.path());
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    for f in ["requests.csv", "replicas.csv", "outages.csv", "alerts.csv", "compliance.txt", "compliance.csv", "run.json"] {
        assert!(dir.path().join(f).is_file(), "{f} missing");
    }
    assert!(stdout(&o).starts_with("seed=7 sha256="));
}

#[test]
fn identical_invocations_give_identical_directories() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    assert!(run_into(a.path()).status.success());
    assert!(run_into(b.path()).status.success());
    let mut names: Vec<_> = fs::read_dir(a.path()).unwrap().map(|e| e.unwrap().file_name()).collect();
    names.sort();
    for name in names {
        let x = fs::read(a.path().join(&name)).unwrap();
        let y = fs::read(b.path().join(&name)).unwrap();
        assert!(x == y, "{name:?} differs");
    }
}

#[test]
fn verify_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    assert!(run_into(dir.path()).status.success());
    let scenario = reference();
    let args = ["verify", "--scenario", scenario.to_str().unwrap(), "--out", dir.path().to_str().unwrap()];
    let ok = netsim(&args);
    assert_eq!(ok.status.code(), Some(0), "{}", stdout(&ok));
    assert!(stdout(&ok).contains("TR15  pass"));

    // a 10 s outage of the cluster is far over the monthly downtime budget
    let outages = dir.path().join("outages.csv");
    let mut text = fs::read_to_string(&outages).unwrap();
    text.push_str("aks,1000000,11000000\n");
    fs::write(&outages, text).unwrap();
    let failing = netsim(&args);
    assert_eq!(failing.status.code(), Some(1));
    assert!(stdout(&failing).contains("TR15  fail"));
}

#[test]
fn verify_rejects_trace_from_other_scenario() {
    let dir = tempfile::tempdir().unwrap();
    assert!(run_into(dir.path()).status.success());
    let other = dir.path().join("other.json");
    fs::write(&other, format!("{}\n", fs::read_to_string(reference()).unwrap())).unwrap();
    let o = netsim(&["verify", "--scenario", other.to_str().unwrap(), "--out", dir.path().to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn usage_errors_exit_2() {
    assert_eq!(netsim(&["run", "--bogus"]).status.code(), Some(2));
    assert_eq!(netsim(&["run", "--scenario", reference().to_str().unwrap()]).status.code(), Some(2));
    assert_eq!(netsim(&["frobnicate"]).status.code(), Some(2));
    let dir = tempfile::tempdir().unwrap();
    let zero = netsim(&[
        "run",
        "--scenario",
        reference().to_str().unwrap(),
        "--seed",
        "1",
        "--horizon",
        "0",
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert_eq!(zero.status.code(), Some(2));
    let missing = netsim(&["run", "--scenario", "/nonexistent.json", "--seed", "1"]);
    assert_eq!(missing.status.code(), Some(2));
}

#[test]
fn rank_providers_follows_weights() {
    let o = netsim(&["rank-providers", "--weights", "cost=0.25,identity-management=0.25"]);
    assert!(o.status.success());
    assert!(stdout(&o).contains("winner: azure"));
    let o = netsim(&["rank-providers", "--weights", "availability-zones=1"]);
    assert!(stdout(&o).contains("winner: aws"));
    assert!(stdout(&o).contains("1 Coreweave"));
    assert_eq!(netsim(&["rank-providers", "--weights", "speed=1"]).status.code(), Some(2));
}

#[test]
fn profile_prints_stage_boundaries() {
    let o = netsim(&["profile", "--profile", "paper-locust"]);
    assert!(o.status.success());
    let text = stdout(&o);
    for line in ["20,20", "80,6000", "140,20", "160,10"] {
        assert!(text.lines().any(|l| l == line), "missing {line}");
    }
    assert_eq!(netsim(&["profile", "--profile", "nope"]).status.code(), Some(2));
}

#[test]
fn report_summarizes_trace() {
    let dir = tempfile::tempdir().unwrap();
    assert!(run_into(dir.path()).status.success());
    let o = netsim(&["report", "--out", dir.path().to_str().unwrap()]);
    assert!(o.status.success());
    let text = stdout(&o);
    assert!(text.contains("availability: 1.0000000"));
    assert!(text.contains("denied:threat-intel"));
}
