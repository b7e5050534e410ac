//! Multi-threaded churn against the public API, verified at quiescence and
//! mid-flight.

use std::thread;

use snapgraph::harness::{random_point_op, ModelOp, SplitMix64};
use snapgraph::{Graph, OpResult};

fn apply(g: &Graph, tid: snapgraph::Tid, op: &ModelOp) -> OpResult {
    match *op {
        ModelOp::AddVertex(k) => g.add_vertex(k, tid),
        ModelOp::RemoveVertex(k) => g.remove_vertex(k, tid),
        ModelOp::ContainsVertex(k) => g.contains_vertex(k, tid),
        ModelOp::AddEdge(k, l) => g.add_edge(k, l, tid),
        ModelOp::RemoveEdge(k, l) => g.remove_edge(k, l, tid),
        ModelOp::ContainsEdge(k, l) => g.contains_edge(k, l, tid),
        _ => unreachable!("point ops only"),
    }
}

#[test]
fn mixed_churn_settles_into_a_consistent_graph() {
    const KEY_SPACE: i64 = 32;
    let g = Graph::new();
    thread::scope(|s| {
        for t in 0..4u64 {
            let g = &g;
            s.spawn(move || {
                let tid = g.register_thread().unwrap();
                let mut rng = SplitMix64::new(0xc0ffee ^ (t + 1));
                for _ in 0..3000 {
                    let op = random_point_op(&mut rng, KEY_SPACE);
                    apply(g, tid, &op);
                    if rng.below(16) == 0 {
                        thread::yield_now();
                    }
                }
            });
        }
    });

    let tid = g.register_thread().unwrap();
    let snap = g.take_snapshot(tid);

    // Sorted, duplicate-free, and closed over edge endpoints.
    assert!(snap.vertices.windows(2).all(|w| w[0] < w[1]));
    for (i, dests) in snap.edges.iter().enumerate() {
        assert!(dests.windows(2).all(|w| w[0] < w[1]));
        for d in dests {
            assert!(snap.vertices.binary_search(d).is_ok());
            assert_ne!(*d, snap.vertices[i], "self loop cannot exist");
        }
    }

    // Quiescent now, so point lookups must agree with the snapshot exactly.
    for k in 1..=KEY_SPACE {
        let expect = if snap.vertices.binary_search(&k).is_ok() {
            OpResult::VertexPresent
        } else {
            OpResult::VertexNotPresent
        };
        assert_eq!(g.contains_vertex(k, tid), expect, "vertex {k}");
    }
    for k in 1..=KEY_SPACE {
        for l in 1..=KEY_SPACE {
            if k == l {
                continue;
            }
            let expect = match (
                snap.vertices.binary_search(&k),
                snap.vertices.binary_search(&l),
            ) {
                (Ok(i), Ok(_)) => {
                    if snap.edges[i].binary_search(&l).is_ok() {
                        OpResult::EdgePresent
                    } else {
                        OpResult::EdgeNotPresent
                    }
                }
                _ => OpResult::VertexNotPresent,
            };
            assert_eq!(g.contains_edge(k, l, tid), expect, "edge ({k},{l})");
        }
    }

    // Both engines read the same quiescent state.
    assert_eq!(*g.take_snapshot_independent(tid), *g.take_snapshot(tid));
}

#[test]
fn snapshots_taken_mid_churn_are_internally_consistent() {
    let g = Graph::new();
    let setup = g.register_thread().unwrap();
    for k in 0..24 {
        g.add_vertex(k, setup);
    }
    for k in 0..24 {
        g.add_edge(k, (k + 7) % 24, setup);
    }

    thread::scope(|s| {
        for t in 0..2u64 {
            let g = &g;
            s.spawn(move || {
                let tid = g.register_thread().unwrap();
                let mut rng = SplitMix64::new(31 ^ (t + 1));
                for _ in 0..5000 {
                    let op = random_point_op(&mut rng, 24);
                    apply(g, tid, &op);
                    thread::yield_now();
                }
            });
        }
        for _ in 0..2 {
            let g = &g;
            s.spawn(move || {
                let tid = g.register_thread().unwrap();
                for _ in 0..40 {
                    let snap = g.take_snapshot(tid);
                    assert!(snap.vertices.windows(2).all(|w| w[0] < w[1]));
                    for dests in snap.edges.iter() {
                        assert!(dests.windows(2).all(|w| w[0] < w[1]));
                        for d in dests {
                            assert!(
                                snap.vertices.binary_search(d).is_ok(),
                                "edge to a vertex outside the snapshot"
                            );
                        }
                    }
                    thread::yield_now();
                }
            });
        }
    });
}
