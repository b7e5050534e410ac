//! Populates a graph and drives the timed worker loop.

use std::collections::BTreeSet;
use std::sync::atomic::{AtomicBool, Ordering};
use std::thread;
use std::time::Instant;

use anyhow::{bail, Context, Result};
use snapgraph::analytics;
use snapgraph::harness::SplitMix64;
use snapgraph::{Graph, Tid};

use crate::config::{BenchConfig, Engine};
use crate::dataset::load_snap_edge_list;
use crate::metrics::MetricsRecord;
use crate::workload::{AnalyticsOp, OpClass};

#[derive(Debug, Default, Clone)]
struct WorkerTally {
    counts: [u64; 7],
    total_ns: [u64; 7],
}

impl WorkerTally {
    fn add(&mut self, class: OpClass, ns: u64) {
        let idx = OpClass::ALL.iter().position(|c| *c == class).unwrap();
        self.counts[idx] += 1;
        self.total_ns[idx] += ns;
    }

    fn merge(&mut self, other: &WorkerTally) {
        for i in 0..7 {
            self.counts[i] += other.counts[i];
            self.total_ns[i] += other.total_ns[i];
        }
    }
}

fn worker_rng(seed: u64, worker: usize) -> SplitMix64 {
    SplitMix64::new(seed ^ (worker as u64 + 1).wrapping_mul(0xd1342543de82ef95))
}

fn draw_key(rng: &mut SplitMix64, key_space: i64) -> i64 {
    rng.below(key_space as u64) as i64
}

fn draw_pair(rng: &mut SplitMix64, key_space: i64) -> (i64, i64) {
    let k = draw_key(rng, key_space);
    let mut l = draw_key(rng, key_space);
    while l == k {
        l = draw_key(rng, key_space);
    }
    (k, l)
}

/// Seeds the graph with `initial_vertices` distinct uniform keys and
/// `initial_edges` distinct directed edges between them.
fn populate_synthetic(g: &Graph, tid: Tid, cfg: &BenchConfig) -> Result<(usize, usize)> {
    let mut rng = SplitMix64::new(cfg.seed.wrapping_mul(0x2545f4914f6cdd1d).wrapping_add(1));
    let mut keys = BTreeSet::new();
    while keys.len() < cfg.initial_vertices {
        keys.insert(draw_key(&mut rng, cfg.key_space));
    }
    let keys: Vec<i64> = keys.into_iter().collect();
    for &k in &keys {
        g.add_vertex(k, tid);
    }

    let mut edges = BTreeSet::new();
    let mut attempts = 0usize;
    let cap = 100 * cfg.initial_edges + 1000;
    while edges.len() < cfg.initial_edges {
        let k = keys[rng.below(keys.len() as u64) as usize];
        let l = keys[rng.below(keys.len() as u64) as usize];
        if k != l {
            edges.insert((k, l));
        }
        attempts += 1;
        if attempts > cap {
            bail!(
                "could not place {} distinct edges over {} vertices after {} draws",
                cfg.initial_edges,
                keys.len(),
                attempts
            );
        }
    }
    for &(k, l) in &edges {
        g.add_edge(k, l, tid);
    }
    Ok((keys.len(), edges.len()))
}

/// Preloads from an edge-list file. Self-loop lines are counted but not
/// inserted: the graph stores simple directed graphs only.
fn populate_dataset(g: &Graph, tid: Tid, cfg: &BenchConfig) -> Result<(usize, usize)> {
    let path = cfg.dataset.as_ref().expect("caller checked");
    let (vertices, edges) = load_snap_edge_list(path)
        .with_context(|| format!("load dataset {}", path.display()))?;
    for &k in &vertices {
        g.add_vertex(k, tid);
    }
    let mut placed = 0;
    for &(k, l) in &edges {
        if k != l {
            g.add_edge(k, l, tid);
            placed += 1;
        }
    }
    Ok((vertices.len(), placed))
}

fn run_worker(
    g: &Graph,
    cfg: &BenchConfig,
    worker: usize,
    stop: &AtomicBool,
) -> Result<WorkerTally> {
    let tid = g.register_thread()?;
    let mut rng = worker_rng(cfg.seed, worker);
    let mut tally = WorkerTally::default();
    while !stop.load(Ordering::Relaxed) {
        let class = cfg.profile.draw(&mut rng);
        let start = Instant::now();
        match class {
            OpClass::AddVertex => {
                g.add_vertex(draw_key(&mut rng, cfg.key_space), tid);
            }
            OpClass::RemoveVertex => {
                g.remove_vertex(draw_key(&mut rng, cfg.key_space), tid);
            }
            OpClass::ContainsVertex => {
                g.contains_vertex(draw_key(&mut rng, cfg.key_space), tid);
            }
            OpClass::AddEdge => {
                let (k, l) = draw_pair(&mut rng, cfg.key_space);
                g.add_edge(k, l, tid);
            }
            OpClass::RemoveEdge => {
                let (k, l) = draw_pair(&mut rng, cfg.key_space);
                g.remove_edge(k, l, tid);
            }
            OpClass::ContainsEdge => {
                let (k, l) = draw_pair(&mut rng, cfg.key_space);
                g.contains_edge(k, l, tid);
            }
            OpClass::Analytics => {
                let snap = match cfg.engine {
                    Engine::Waitfree => g.take_snapshot(tid),
                    Engine::Baseline => g.take_snapshot_independent(tid),
                };
                match cfg.profile.analytics {
                    AnalyticsOp::Snapshot => {}
                    AnalyticsOp::Diameter => {
                        let _ = analytics::diameter(&snap);
                    }
                    AnalyticsOp::Bc => {
                        let _ = analytics::betweenness_centrality(&snap);
                    }
                }
            }
        }
        tally.add(class, start.elapsed().as_nanos() as u64);
    }
    Ok(tally)
}

/// Runs one benchmark: populate, hammer for the configured duration, merge
/// per-worker tallies.
pub fn run_benchmark(cfg: &BenchConfig) -> Result<MetricsRecord> {
    cfg.validate()?;
    let g = Graph::new();
    let setup = g.register_thread()?;
    if cfg.dataset.is_some() {
        populate_dataset(&g, setup, cfg)?;
    } else {
        populate_synthetic(&g, setup, cfg)?;
    }

    let stop = AtomicBool::new(false);
    let mut merged = WorkerTally::default();
    let results: Vec<Result<WorkerTally>> = thread::scope(|s| {
        let handles: Vec<_> = (0..cfg.threads)
            .map(|w| {
                let g = &g;
                let stop = &stop;
                s.spawn(move || run_worker(g, cfg, w, stop))
            })
            .collect();
        thread::sleep(cfg.duration);
        stop.store(true, Ordering::Relaxed);
        handles
            .into_iter()
            .map(|h| h.join().expect("worker panicked"))
            .collect()
    });
    for r in results {
        merged.merge(&r?);
    }
    Ok(MetricsRecord::from_totals(merged.counts, merged.total_ns))
}
