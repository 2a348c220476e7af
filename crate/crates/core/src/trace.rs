//! The immutable record of one run and its CSV serialization.

use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use serde::{de::DeserializeOwned, Deserialize, Serialize};
use thiserror::Error;

use crate::economics::{CostLedger, LedgerEntry};
use crate::kernel::SimTime;
use crate::resilience::{downtime, Availability, BackupEvent, OutageInterval};
use crate::telemetry::{AlertEvent, Layer, MetricPoint};

pub const MANIFEST_FILE: &str = "run.json";

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RequestRecord {
    pub id: u64,
    pub arrival: SimTime,
    /// `None` while the request is still in flight at the horizon.
    pub complete: Option<SimTime>,
    /// Nodes visited, in order.
    pub path: Vec<String>,
    pub version: Option<String>,
    /// `ok`, `denied:<reason>`, `failed:<node>`, `no-healthy-backend`, `no-route` or `in-flight`.
    pub outcome: String,
    pub latency_us: Option<u64>,
}

impl RequestRecord {
    pub fn is_ok(&self) -> bool {
        self.outcome == "ok"
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct HopRecord {
    pub request_id: u64,
    pub node: String,
    #[serde(rename = "arrive_us")]
    pub arrive: SimTime,
    #[serde(rename = "depart_us")]
    pub depart: SimTime,
}

impl HopRecord {
    pub fn duration(&self) -> u64 {
        self.depart.micros() - self.arrive.micros()
    }
}

/// Replica count of a deployment: written at every metrics sample and at
/// every change, where `cpu` is the sample that drove the decision.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReplicaRecord {
    #[serde(rename = "time_us")]
    pub time: SimTime,
    pub deployment: String,
    pub replicas: u32,
    pub cpu: f64,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Manifest {
    pub seed: u64,
    pub horizon_us: u64,
    pub fingerprint: String,
    pub topology_nodes: Vec<String>,
    pub replica_ids: Vec<String>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SimTrace {
    pub manifest: Manifest,
    pub requests: Vec<RequestRecord>,
    pub hops: Vec<HopRecord>,
    pub replicas: Vec<ReplicaRecord>,
    pub outages: Vec<OutageInterval>,
    pub alerts: Vec<AlertEvent>,
    pub backups: Vec<BackupEvent>,
    pub metrics: Vec<MetricPoint>,
    pub ledger: CostLedger,
}

#[derive(Debug, Error)]
pub enum TraceError {
    #[error("i/o error on {path}: {source}")]
    Io { path: PathBuf, source: io::Error },
    #[error("malformed {path}: {message}")]
    Format { path: PathBuf, message: String },
    #[error("unknown node `{0}`")]
    UnknownNode(String),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub enum TraceKind {
    Requests,
    Replicas,
    Outages,
    Alerts,
    Metrics,
    Hops,
    Backups,
    Ledger,
}

impl TraceKind {
    pub const ALL: [TraceKind; 8] = [
        TraceKind::Requests,
        TraceKind::Replicas,
        TraceKind::Outages,
        TraceKind::Alerts,
        TraceKind::Metrics,
        TraceKind::Hops,
        TraceKind::Backups,
        TraceKind::Ledger,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            TraceKind::Requests => "requests",
            TraceKind::Replicas => "replicas",
            TraceKind::Outages => "outages",
            TraceKind::Alerts => "alerts",
            TraceKind::Metrics => "metrics",
            TraceKind::Hops => "hops",
            TraceKind::Backups => "backups",
            TraceKind::Ledger => "ledger",
        }
    }

    pub fn parse(s: &str) -> Option<TraceKind> {
        TraceKind::ALL.into_iter().find(|k| k.as_str() == s)
    }

    pub fn file_name(self) -> String {
        format!("{}.csv", self.as_str())
    }
}

#[derive(Serialize, Deserialize)]
struct RequestRow {
    id: u64,
    arrival_us: u64,
    complete_us: Option<u64>,
    path: String,
    version: String,
    outcome: String,
    latency_us: Option<u64>,
}

#[derive(Serialize, Deserialize)]
struct OutageRow {
    node: String,
    start_us: u64,
    end_us: u64,
}

#[derive(Serialize, Deserialize)]
struct AlertRow {
    time_us: u64,
    rule: String,
    action_group: String,
}

#[derive(Serialize, Deserialize)]
struct MetricRow {
    time_us: u64,
    layer: String,
    name: String,
    value: f64,
}

#[derive(Serialize, Deserialize)]
struct BackupRow {
    time_us: u64,
    copies: u32,
    locations: u32,
    offsite: u32,
    encrypted_at_rest: bool,
    encrypted_in_flight: bool,
    transfer_overhead_us: u64,
}

const HEADERS: [(TraceKind, &str); 8] = [
    (TraceKind::Requests, "id,arrival_us,complete_us,path,version,outcome,latency_us"),
    (TraceKind::Replicas, "time_us,deployment,replicas,cpu"),
    (TraceKind::Outages, "node,start_us,end_us"),
    (TraceKind::Alerts, "time_us,rule,action_group"),
    (TraceKind::Metrics, "time_us,layer,name,value"),
    (TraceKind::Hops, "request_id,node,arrive_us,depart_us"),
    (
        TraceKind::Backups,
        "time_us,copies,locations,offsite,encrypted_at_rest,encrypted_in_flight,transfer_overhead_us",
    ),
    (
        TraceKind::Ledger,
        "id,period,period_hours,resource,provider,category,quantity,rate,list_amount,amount",
    ),
];

fn header(kind: TraceKind) -> &'static str {
    HEADERS.iter().find(|(k, _)| *k == kind).expect("every kind has a header").1
}

fn io_err(path: &Path) -> impl FnOnce(io::Error) -> TraceError + '_ {
    move |source| TraceError::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn to_csv<T: Serialize>(kind: TraceKind, rows: impl IntoIterator<Item = T>) -> Result<Vec<u8>, csv::Error> {
    let mut w = csv::WriterBuilder::new()
        .has_headers(false)
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(Vec::new());
    w.write_record(header(kind).split(','))?;
    for r in rows {
        w.serialize(r)?;
    }
    Ok(w.into_inner().expect("in-memory writer"))
}

fn from_csv<T: DeserializeOwned>(path: &Path, kind: TraceKind) -> Result<Vec<T>, TraceError> {
    let text = fs::read(path).map_err(io_err(path))?;
    let fmt = |message: String| TraceError::Format {
        path: path.to_path_buf(),
        message,
    };
    let mut r = csv::ReaderBuilder::new().has_headers(true).from_reader(text.as_slice());
    let found = r.headers().map_err(|e| fmt(e.to_string()))?.iter().collect::<Vec<_>>().join(",");
    if found != header(kind) {
        return Err(fmt(format!("expected header `{}`, found `{found}`", header(kind))));
    }
    r.deserialize().map(|row| row.map_err(|e| fmt(e.to_string()))).collect()
}

impl SimTrace {
    pub fn empty(manifest: Manifest) -> Self {
        SimTrace {
            manifest,
            requests: Vec::new(),
            hops: Vec::new(),
            replicas: Vec::new(),
            outages: Vec::new(),
            alerts: Vec::new(),
            backups: Vec::new(),
            metrics: Vec::new(),
            ledger: CostLedger::new(),
        }
    }

    pub fn horizon(&self) -> SimTime {
        SimTime(self.manifest.horizon_us)
    }

    /// Availability of one node, or of the service as a whole (any topology
    /// node down) when `node` is `None`.
    pub fn availability(&self, node: Option<&str>) -> Result<Availability, TraceError> {
        let down = match node {
            Some(n) => {
                let known = self.manifest.topology_nodes.iter().chain(&self.manifest.replica_ids).any(|k| k == n);
                if !known {
                    return Err(TraceError::UnknownNode(n.to_string()));
                }
                downtime(&self.outages, Some(n), self.horizon())
            }
            None => {
                let service: Vec<OutageInterval> = self
                    .outages
                    .iter()
                    .filter(|o| self.manifest.topology_nodes.contains(&o.node))
                    .cloned()
                    .collect();
                downtime(&service, None, self.horizon())
            }
        };
        Ok(Availability::from_downtime(down, self.horizon()))
    }

    /// Serializes one kind of record as CSV.
    pub fn to_csv(&self, kind: TraceKind) -> Vec<u8> {
        let out = match kind {
            TraceKind::Requests => to_csv(
                kind,
                self.requests.iter().map(|r| RequestRow {
                    id: r.id,
                    arrival_us: r.arrival.micros(),
                    complete_us: r.complete.map(SimTime::micros),
                    path: r.path.join(">"),
                    version: r.version.clone().unwrap_or_default(),
                    outcome: r.outcome.clone(),
                    latency_us: r.latency_us,
                }),
            ),
            TraceKind::Replicas => to_csv(kind, &self.replicas),
            TraceKind::Outages => to_csv(
                kind,
                self.outages.iter().map(|o| OutageRow {
                    node: o.node.clone(),
                    start_us: o.start.micros(),
                    end_us: o.end.micros(),
                }),
            ),
            TraceKind::Alerts => to_csv(
                kind,
                self.alerts.iter().map(|a| AlertRow {
                    time_us: a.time.micros(),
                    rule: a.rule.clone(),
                    action_group: a.action_group.clone(),
                }),
            ),
            TraceKind::Metrics => to_csv(
                kind,
                self.metrics.iter().map(|m| MetricRow {
                    time_us: m.time.micros(),
                    layer: m.layer.as_str().to_string(),
                    name: m.name.clone(),
                    value: m.value,
                }),
            ),
            TraceKind::Hops => to_csv(kind, &self.hops),
            TraceKind::Backups => to_csv(
                kind,
                self.backups.iter().map(|b| BackupRow {
                    time_us: b.time.micros(),
                    copies: b.copies,
                    locations: b.locations,
                    offsite: b.offsite,
                    encrypted_at_rest: b.encrypted_at_rest,
                    encrypted_in_flight: b.encrypted_in_flight,
                    transfer_overhead_us: b.transfer_overhead_us,
                }),
            ),
            TraceKind::Ledger => to_csv(kind, self.ledger.entries()),
        };
        out.expect("trace records serialize")
    }

    pub fn export_trace(&self, kind: TraceKind, dir: &Path) -> Result<PathBuf, TraceError> {
        fs::create_dir_all(dir).map_err(io_err(dir))?;
        let path = dir.join(kind.file_name());
        fs::write(&path, self.to_csv(kind)).map_err(io_err(&path))?;
        Ok(path)
    }

    /// Writes every CSV kind plus the run manifest.
    pub fn write_dir(&self, dir: &Path) -> Result<Vec<PathBuf>, TraceError> {
        let mut out = Vec::new();
        for kind in TraceKind::ALL {
            out.push(self.export_trace(kind, dir)?);
        }
        let path = dir.join(MANIFEST_FILE);
        let json = serde_json::to_string_pretty(&self.manifest).expect("manifest serializes") + "\n";
        fs::write(&path, json).map_err(io_err(&path))?;
        out.push(path);
        Ok(out)
    }

    /// Reads a directory written by [`SimTrace::write_dir`].
    pub fn read_dir(dir: &Path) -> Result<SimTrace, TraceError> {
        let mpath = dir.join(MANIFEST_FILE);
        let text = fs::read_to_string(&mpath).map_err(io_err(&mpath))?;
        let manifest: Manifest = serde_json::from_str(&text).map_err(|e| TraceError::Format {
            path: mpath.clone(),
            message: e.to_string(),
        })?;
        let file = |k: TraceKind| dir.join(k.file_name());
        let requests = from_csv::<RequestRow>(&file(TraceKind::Requests), TraceKind::Requests)?
            .into_iter()
            .map(|r| RequestRecord {
                id: r.id,
                arrival: SimTime(r.arrival_us),
                complete: r.complete_us.map(SimTime),
                path: if r.path.is_empty() {
                    Vec::new()
                } else {
                    r.path.split('>').map(str::to_string).collect()
                },
                version: (!r.version.is_empty()).then_some(r.version),
                outcome: r.outcome,
                latency_us: r.latency_us,
            })
            .collect();
        let metrics_path = file(TraceKind::Metrics);
        let metrics = from_csv::<MetricRow>(&metrics_path, TraceKind::Metrics)?
            .into_iter()
            .map(|m| {
                let layer = Layer::parse(&m.layer).ok_or_else(|| TraceError::Format {
                    path: metrics_path.clone(),
                    message: format!("unknown layer `{}`", m.layer),
                })?;
                Ok(MetricPoint {
                    time: SimTime(m.time_us),
                    layer,
                    name: m.name,
                    value: m.value,
                })
            })
            .collect::<Result<Vec<_>, TraceError>>()?;
        let ledger: Vec<LedgerEntry> = from_csv(&file(TraceKind::Ledger), TraceKind::Ledger)?;
        Ok(SimTrace {
            manifest,
            requests,
            hops: from_csv(&file(TraceKind::Hops), TraceKind::Hops)?,
            replicas: from_csv(&file(TraceKind::Replicas), TraceKind::Replicas)?,
            outages: from_csv::<OutageRow>(&file(TraceKind::Outages), TraceKind::Outages)?
                .into_iter()
                .map(|o| OutageInterval {
                    node: o.node,
                    start: SimTime(o.start_us),
                    end: SimTime(o.end_us),
                })
                .collect(),
            alerts: from_csv::<AlertRow>(&file(TraceKind::Alerts), TraceKind::Alerts)?
                .into_iter()
                .map(|a| AlertEvent {
                    time: SimTime(a.time_us),
                    rule: a.rule,
                    action_group: a.action_group,
                })
                .collect(),
            backups: from_csv::<BackupRow>(&file(TraceKind::Backups), TraceKind::Backups)?
                .into_iter()
                .map(|b| BackupEvent {
                    time: SimTime(b.time_us),
                    copies: b.copies,
                    locations: b.locations,
                    offsite: b.offsite,
                    encrypted_at_rest: b.encrypted_at_rest,
                    encrypted_in_flight: b.encrypted_in_flight,
                    transfer_overhead_us: b.transfer_overhead_us,
                })
                .collect(),
            metrics,
            ledger: CostLedger::from_entries(ledger),
        })
    }
}
