//! Workload benchmark harness for the snapgraph concurrent graph: operation
//! mixes, SNAP edge-list ingestion, timed multi-threaded runs, CSV metrics.

pub mod config;
pub mod dataset;
pub mod metrics;
pub mod runner;
pub mod workload;

pub use config::{BenchArgs, BenchConfig, Cli, Command, Engine, ProfileName};
pub use dataset::load_snap_edge_list;
pub use metrics::{ClassMetrics, MetricsRecord};
pub use runner::run_benchmark;
pub use workload::{AnalyticsOp, OpClass, WorkloadProfile};
