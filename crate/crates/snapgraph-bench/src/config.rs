//! CLI definition and its translation into a validated run configuration.

use std::path::PathBuf;
use std::time::Duration;

use anyhow::{bail, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use snapgraph::DEFAULT_MAX_THREADS;

use crate::workload::{AnalyticsOp, WorkloadProfile};

#[derive(Debug, Parser)]
#[command(name = "snapgraph-bench", version, about = "Workload benchmark for the snapgraph concurrent graph")]
pub struct Cli {
    #[command(subcommand)]
    pub cmd: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run a timed workload against one shared graph and report per-class
    /// latency averages as CSV.
    Bench(BenchArgs),
}

/// Which snapshot machinery the analytics class exercises.
#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Engine {
    /// Shared snap-collector; concurrent snapshot callers help each other.
    Waitfree,
    /// Every caller builds a private collector nobody else helps.
    Baseline,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ProfileName {
    ReadHeavy,
    UpdateHeavy,
}

#[derive(Debug, Args)]
pub struct BenchArgs {
    /// Worker threads hammering the graph.
    #[arg(long, default_value_t = 4)]
    pub threads: usize,

    /// Run length in seconds.
    #[arg(long, default_value_t = 2.0)]
    pub duration: f64,

    /// Operation mix.
    #[arg(long, value_enum, default_value_t = ProfileName::ReadHeavy)]
    pub profile: ProfileName,

    /// What the analytics operation class runs.
    #[arg(long, value_enum, default_value_t = AnalyticsOp::Snapshot)]
    pub analytics: AnalyticsOp,

    /// Weight points given to the analytics class; the difference from the
    /// profile default is taken equally from containsVertex and containsEdge.
    #[arg(long, default_value_t = 2)]
    pub analytics_pct: u32,

    #[arg(long, value_enum, default_value_t = Engine::Waitfree)]
    pub engine: Engine,

    /// SNAP-format edge list to preload instead of synthetic data.
    #[arg(long)]
    pub dataset: Option<PathBuf>,

    /// Base seed; each worker derives its own stream from it.
    #[arg(long, default_value_t = 42)]
    pub seed: u64,

    /// Write the CSV here instead of stdout.
    #[arg(long)]
    pub out: Option<PathBuf>,

    /// Synthetic preload size (ignored with --dataset).
    #[arg(long, default_value_t = 10_000)]
    pub initial_vertices: usize,

    /// Synthetic preload size (ignored with --dataset).
    #[arg(long, default_value_t = 20_000)]
    pub initial_edges: usize,

    /// Point operations draw keys uniformly from [0, key-space).
    #[arg(long, default_value_t = 30_000)]
    pub key_space: i64,
}

/// Validated benchmark settings, independent of the CLI layer.
#[derive(Debug, Clone)]
pub struct BenchConfig {
    pub threads: usize,
    pub duration: Duration,
    pub profile: WorkloadProfile,
    pub engine: Engine,
    pub seed: u64,
    pub dataset: Option<PathBuf>,
    pub initial_vertices: usize,
    pub initial_edges: usize,
    pub key_space: i64,
}

impl BenchArgs {
    pub fn into_config(self) -> Result<BenchConfig> {
        let profile = match self.profile {
            ProfileName::ReadHeavy => WorkloadProfile::read_heavy(self.analytics),
            ProfileName::UpdateHeavy => WorkloadProfile::update_heavy(self.analytics),
        }
        .with_analytics_pct(self.analytics_pct)?;

        let cfg = BenchConfig {
            threads: self.threads,
            duration: Duration::from_secs_f64(self.duration),
            profile,
            engine: self.engine,
            seed: self.seed,
            dataset: self.dataset,
            initial_vertices: self.initial_vertices,
            initial_edges: self.initial_edges,
            key_space: self.key_space,
        };
        cfg.validate()?;
        Ok(cfg)
    }
}

impl BenchConfig {
    pub fn validate(&self) -> Result<()> {
        if self.threads == 0 {
            bail!("--threads must be at least 1");
        }
        // One registry slot goes to the setup thread.
        if self.threads + 1 > DEFAULT_MAX_THREADS {
            bail!(
                "--threads {} exceeds the {} registered-thread limit",
                self.threads,
                DEFAULT_MAX_THREADS - 1
            );
        }
        if self.duration <= Duration::ZERO {
            bail!("--duration must be positive");
        }
        if self.key_space < 2 {
            bail!("--key-space must be at least 2");
        }
        if self.dataset.is_none() {
            if self.initial_vertices as i64 > self.key_space {
                bail!(
                    "--initial-vertices {} cannot fit in --key-space {}",
                    self.initial_vertices,
                    self.key_space
                );
            }
            let v = self.initial_vertices;
            if v > 0 && self.initial_edges > v * (v - 1) {
                bail!(
                    "--initial-edges {} exceeds the {} possible directed edges",
                    self.initial_edges,
                    v * (v - 1)
                );
            }
            if v == 0 && self.initial_edges > 0 {
                bail!("--initial-edges needs --initial-vertices > 0");
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(args: &[&str]) -> Result<BenchConfig> {
        let cli = Cli::try_parse_from(args).map_err(anyhow::Error::from)?;
        let Command::Bench(bench) = cli.cmd;
        bench.into_config()
    }

    #[test]
    fn defaults_parse() {
        let cfg = parse(&["snapgraph-bench", "bench"]).unwrap();
        assert_eq!(cfg.threads, 4);
        assert_eq!(cfg.duration, Duration::from_secs(2));
        assert_eq!(cfg.profile.weights, [3, 2, 45, 3, 2, 45, 2]);
        assert_eq!(cfg.engine, Engine::Waitfree);
        assert_eq!(cfg.seed, 42);
    }

    #[test]
    fn full_flag_surface_parses() {
        let cfg = parse(&[
            "snapgraph-bench",
            "bench",
            "--threads",
            "8",
            "--duration",
            "0.5",
            "--profile",
            "update-heavy",
            "--analytics",
            "bc",
            "--analytics-pct",
            "6",
            "--engine",
            "baseline",
            "--seed",
            "7",
            "--key-space",
            "100",
            "--initial-vertices",
            "50",
            "--initial-edges",
            "80",
        ])
        .unwrap();
        assert_eq!(cfg.threads, 8);
        assert_eq!(cfg.engine, Engine::Baseline);
        assert_eq!(cfg.profile.analytics, AnalyticsOp::Bc);
        assert_eq!(cfg.profile.weights, [12, 13, 23, 13, 12, 23, 6]);
    }

    #[test]
    fn bad_configs_are_rejected() {
        assert!(parse(&["snapgraph-bench", "bench", "--threads", "0"]).is_err());
        assert!(parse(&["snapgraph-bench", "bench", "--duration", "0"]).is_err());
        assert!(parse(&["snapgraph-bench", "bench", "--analytics-pct", "99"]).is_err());
        assert!(parse(&[
            "snapgraph-bench",
            "bench",
            "--key-space",
            "10",
            "--initial-vertices",
            "20"
        ])
        .is_err());
        assert!(parse(&[
            "snapgraph-bench",
            "bench",
            "--key-space",
            "10",
            "--initial-vertices",
            "3",
            "--initial-edges",
            "7"
        ])
        .is_err());
    }
}
