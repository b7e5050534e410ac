//! Correctness harness: a sequential reference model, history recording,
//! an exhaustive linearizability checker, and stalled-thread progress
//! scenarios. Everything here treats [`crate::Graph`] as a black box.

pub mod checker;
pub mod history;
pub mod model;

pub use checker::{CheckOutcome, Checker};
pub use history::{
    format_op, format_ret, Event, EventKind, History, HistoryClock, HistoryError, OpRecord,
    ThreadLog,
};
pub use model::{ModelOp, ModelRet, SeqGraphModel};
pub use stall_test::{run_stall_test, StallReport, StallScenario, HELPER_KEY_BASE};

use std::thread;

use crate::analytics;
use crate::{Graph, Tid};

/// Run one abstract op against the live graph.
pub fn execute_op(g: &Graph, tid: Tid, op: &ModelOp) -> ModelRet {
    match *op {
        ModelOp::AddVertex(k) => ModelRet::Op(g.add_vertex(k, tid)),
        ModelOp::RemoveVertex(k) => ModelRet::Op(g.remove_vertex(k, tid)),
        ModelOp::ContainsVertex(k) => ModelRet::Op(g.contains_vertex(k, tid)),
        ModelOp::AddEdge(k, l) => ModelRet::Op(g.add_edge(k, l, tid)),
        ModelOp::RemoveEdge(k, l) => ModelRet::Op(g.remove_edge(k, l, tid)),
        ModelOp::ContainsEdge(k, l) => ModelRet::Op(g.contains_edge(k, l, tid).canonical()),
        ModelOp::Snap => ModelRet::Snap((*g.take_snapshot(tid)).clone()),
        ModelOp::Diameter => ModelRet::Num(analytics::diameter(&g.take_snapshot(tid))),
        ModelOp::BcArgmax => {
            ModelRet::Key(analytics::betweenness_centrality(&g.take_snapshot(tid)).argmax_key)
        }
    }
}

/// splitmix64. Tiny, seedable, identical across runs and platforms, which is
/// all the harness and the benchmarks need from an RNG.
#[derive(Debug, Clone)]
pub struct SplitMix64 {
    state: u64,
}

impl SplitMix64 {
    pub fn new(seed: u64) -> Self {
        SplitMix64 { state: seed }
    }

    pub fn next_u64(&mut self) -> u64 {
        self.state = self.state.wrapping_add(0x9e3779b97f4a7c15);
        let mut z = self.state;
        z = (z ^ (z >> 30)).wrapping_mul(0xbf58476d1ce4e5b9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94d049bb133111eb);
        z ^ (z >> 31)
    }

    /// Uniform-enough draw in `[0, n)`; modulo bias is irrelevant at the
    /// ranges used here.
    pub fn below(&mut self, n: u64) -> u64 {
        debug_assert!(n > 0);
        self.next_u64() % n
    }
}

/// Draw one point operation; keys are uniform over `1..=key_space`, and
/// edge operations always get two distinct endpoints (self-loops are
/// rejected by the graph as argument errors).
pub fn random_point_op(rng: &mut SplitMix64, key_space: i64) -> ModelOp {
    let k = 1 + rng.below(key_space as u64) as i64;
    let mut l = 1 + rng.below(key_space as u64) as i64;
    while l == k {
        l = 1 + rng.below(key_space as u64) as i64;
    }
    match rng.below(100) {
        0..=24 => ModelOp::AddVertex(k),
        25..=44 => ModelOp::RemoveVertex(k),
        45..=64 => ModelOp::ContainsVertex(k),
        65..=79 => ModelOp::AddEdge(k, l),
        80..=89 => ModelOp::RemoveEdge(k, l),
        _ => ModelOp::ContainsEdge(k, l),
    }
}

fn worker_rng(seed: u64, t: usize) -> SplitMix64 {
    SplitMix64::new(seed ^ (t as u64 + 1).wrapping_mul(0xd1342543de82ef95))
}

fn run_recorded<F>(g: &Graph, clock: &HistoryClock, t: usize, mut next: F, n: usize) -> ThreadLog
where
    F: FnMut() -> ModelOp,
{
    let tid = g.register_thread().unwrap();
    let mut jitter = worker_rng(0x6b, t);
    let mut log = ThreadLog::new(t);
    for _ in 0..n {
        let op = next();
        log.invoke(clock, op);
        if jitter.below(3) == 0 {
            thread::yield_now();
        }
        let ret = execute_op(g, tid, &op);
        log.respond(clock, ret);
        if jitter.below(4) == 0 {
            thread::yield_now();
        }
    }
    log
}

/// Run a randomized concurrent point-op workload against a fresh graph and
/// record the full invoke/response history for the checker. Threads yield
/// often so that interleavings show up even on one core.
pub fn generate_history(
    seed: u64,
    threads: usize,
    ops_per_thread: usize,
    key_space: i64,
) -> History {
    assert!(key_space >= 2);
    let g = Graph::new();
    let clock = HistoryClock::new();
    let logs: Vec<ThreadLog> = thread::scope(|s| {
        let mut handles = Vec::new();
        for t in 0..threads {
            let g = &g;
            let clock = &clock;
            handles.push(s.spawn(move || {
                let mut rng = worker_rng(seed, t);
                run_recorded(
                    g,
                    clock,
                    t,
                    move || random_point_op(&mut rng, key_space),
                    ops_per_thread,
                )
            }));
        }
        handles.into_iter().map(|h| h.join().unwrap()).collect()
    });
    History::from_logs(logs)
}

/// Like [`generate_history`], plus one extra thread that issues
/// `snap_calls` full-state snapshot operations concurrently with the
/// updaters. The snapshot responses carry the whole observed graph, so the
/// checker verifies snapshot consistency as ordinary linearizability.
pub fn generate_snapshot_history(
    seed: u64,
    updaters: usize,
    ops_per_updater: usize,
    snap_calls: usize,
    key_space: i64,
) -> History {
    assert!(key_space >= 2);
    let g = Graph::new();
    let clock = HistoryClock::new();
    let logs: Vec<ThreadLog> = thread::scope(|s| {
        let mut handles = Vec::new();
        for t in 0..updaters {
            let g = &g;
            let clock = &clock;
            handles.push(s.spawn(move || {
                let mut rng = worker_rng(seed, t);
                run_recorded(
                    g,
                    clock,
                    t,
                    move || random_point_op(&mut rng, key_space),
                    ops_per_updater,
                )
            }));
        }
        {
            let g = &g;
            let clock = &clock;
            handles.push(s.spawn(move || {
                run_recorded(g, clock, updaters, || ModelOp::Snap, snap_calls)
            }));
        }
        handles.into_iter().map(|h| h.join().unwrap()).collect()
    });
    History::from_logs(logs)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn splitmix_matches_the_reference_sequence() {
        let mut r = SplitMix64::new(0);
        assert_eq!(r.next_u64(), 0xe220a8397b1dcdaf);
        assert_eq!(r.next_u64(), 0x6e789e6aa1b965f4);
        assert_eq!(r.next_u64(), 0x06c45d188009454f);
    }

    #[test]
    fn live_graph_and_model_agree_on_a_sequential_run() {
        let g = Graph::new();
        let tid = g.register_thread().unwrap();
        let mut m = SeqGraphModel::new();
        let mut rng = SplitMix64::new(7);
        for i in 0..400 {
            let op = match i % 50 {
                17 => ModelOp::Snap,
                33 => ModelOp::Diameter,
                49 => ModelOp::BcArgmax,
                _ => random_point_op(&mut rng, 5),
            };
            assert_eq!(execute_op(&g, tid, &op), m.apply(&op), "op {op:?}");
        }
    }

    #[test]
    fn generated_histories_pair_up_and_round_trip() {
        let h = generate_history(11, 3, 20, 4);
        let per = h.per_thread().unwrap();
        assert_eq!(per.len(), 3);
        assert!(per.iter().all(|ops| ops.len() == 20));
        assert!(per.iter().flatten().all(|r| r.ret.is_some()));
        assert_eq!(History::parse(&h.to_text()).unwrap(), h);
    }

    #[test]
    fn small_generated_histories_check_out_linearizable() {
        for seed in [1u64, 2, 3] {
            let h = generate_history(seed, 2, 15, 4);
            let out = Checker::with_budget(500_000).check(&h).unwrap();
            assert_eq!(out, CheckOutcome::Linearizable, "seed {seed}");
        }
    }

    #[test]
    fn snapshot_histories_check_out_linearizable() {
        let h = generate_snapshot_history(5, 2, 12, 3, 4);
        let per = h.per_thread().unwrap();
        assert_eq!(per.len(), 3);
        assert_eq!(per[2].len(), 3);
        assert!(per[2].iter().all(|r| r.op == ModelOp::Snap));
        let out = Checker::with_budget(500_000).check(&h).unwrap();
        assert_eq!(out, CheckOutcome::Linearizable);
    }
}
