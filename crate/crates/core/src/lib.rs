//! Discrete-event simulator for a hub-and-spoke MLOps cloud deployment:
//! topology validation, gateway security, load balancing, canary routing,
//! autoscaling, failures and backups, telemetry, cost accounting and
//! machine-checkable compliance policies.

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod balancing;
pub mod cluster;
pub mod economics;
pub mod gateway;
pub mod kernel;
pub mod resilience;
pub mod telemetry;
pub mod topology;
pub mod workload;
pub mod compliance;
pub mod scenario;
pub mod trace;
pub mod sim;
