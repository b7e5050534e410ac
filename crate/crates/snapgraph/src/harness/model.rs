//! Sequential reference semantics for the concurrent graph.
//!
//! The model is the ground truth the linearizability checker replays
//! histories against: a plain sorted vertex set plus adjacency, with the
//! same result vocabulary as [`crate::Graph`].

use std::collections::hash_map::DefaultHasher;
use std::collections::{BTreeMap, BTreeSet};
use std::hash::{Hash, Hasher};

use crate::analytics;
use crate::graph::OpResult;
use crate::snapshot::Snapshot;

/// One abstract operation, as recorded in histories.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ModelOp {
    AddVertex(i64),
    RemoveVertex(i64),
    ContainsVertex(i64),
    AddEdge(i64, i64),
    RemoveEdge(i64, i64),
    ContainsEdge(i64, i64),
    Snap,
    Diameter,
    BcArgmax,
}

/// An operation's observed return value.
#[derive(Debug, Clone, PartialEq)]
pub enum ModelRet {
    Op(OpResult),
    Snap(Snapshot),
    Num(u32),
    Key(Option<i64>),
}

/// What a model step changed, so the checker can roll it back.
#[derive(Debug)]
pub enum Undo {
    None,
    VertexAdded(i64),
    VertexRemoved {
        key: i64,
        outgoing: Vec<i64>,
        incoming: Vec<i64>,
    },
    EdgeAdded(i64, i64),
    EdgeRemoved(i64, i64),
}

#[derive(Debug, Clone, Default)]
pub struct SeqGraphModel {
    vertices: BTreeSet<i64>,
    edges: BTreeMap<i64, BTreeSet<i64>>,
}

impl SeqGraphModel {
    pub fn new() -> Self {
        SeqGraphModel::default()
    }

    pub fn vertex_count(&self) -> usize {
        self.vertices.len()
    }

    pub fn edge_count(&self) -> usize {
        self.edges.values().map(BTreeSet::len).sum()
    }

    pub fn apply(&mut self, op: &ModelOp) -> ModelRet {
        self.apply_with_undo(op).0
    }

    pub fn apply_with_undo(&mut self, op: &ModelOp) -> (ModelRet, Undo) {
        match *op {
            ModelOp::AddVertex(k) => {
                if self.vertices.insert(k) {
                    (ModelRet::Op(OpResult::VertexAdded), Undo::VertexAdded(k))
                } else {
                    (ModelRet::Op(OpResult::VertexAlreadyPresent), Undo::None)
                }
            }
            ModelOp::RemoveVertex(k) => {
                if !self.vertices.remove(&k) {
                    return (ModelRet::Op(OpResult::VertexNotPresent), Undo::None);
                }
                let outgoing: Vec<i64> = self
                    .edges
                    .remove(&k)
                    .map(|s| s.into_iter().collect())
                    .unwrap_or_default();
                let mut incoming = Vec::new();
                for (&src, dests) in self.edges.iter_mut() {
                    if dests.remove(&k) {
                        incoming.push(src);
                    }
                }
                (
                    ModelRet::Op(OpResult::VertexRemoved),
                    Undo::VertexRemoved {
                        key: k,
                        outgoing,
                        incoming,
                    },
                )
            }
            ModelOp::ContainsVertex(k) => {
                let r = if self.vertices.contains(&k) {
                    OpResult::VertexPresent
                } else {
                    OpResult::VertexNotPresent
                };
                (ModelRet::Op(r), Undo::None)
            }
            ModelOp::AddEdge(k, l) => {
                if !self.vertices.contains(&k) || !self.vertices.contains(&l) {
                    return (ModelRet::Op(OpResult::VertexNotPresent), Undo::None);
                }
                if self.edges.entry(k).or_default().insert(l) {
                    (ModelRet::Op(OpResult::EdgeAdded), Undo::EdgeAdded(k, l))
                } else {
                    (ModelRet::Op(OpResult::EdgePresent), Undo::None)
                }
            }
            ModelOp::RemoveEdge(k, l) => {
                if !self.vertices.contains(&k) || !self.vertices.contains(&l) {
                    return (ModelRet::Op(OpResult::VertexNotPresent), Undo::None);
                }
                if self.edges.get_mut(&k).map_or(false, |s| s.remove(&l)) {
                    (ModelRet::Op(OpResult::EdgeRemoved), Undo::EdgeRemoved(k, l))
                } else {
                    (ModelRet::Op(OpResult::EdgeNotPresent), Undo::None)
                }
            }
            ModelOp::ContainsEdge(k, l) => {
                if !self.vertices.contains(&k) || !self.vertices.contains(&l) {
                    return (ModelRet::Op(OpResult::VertexNotPresent), Undo::None);
                }
                let r = if self.edges.get(&k).map_or(false, |s| s.contains(&l)) {
                    OpResult::EdgePresent
                } else {
                    OpResult::EdgeNotPresent
                };
                (ModelRet::Op(r), Undo::None)
            }
            ModelOp::Snap => (ModelRet::Snap(self.snapshot()), Undo::None),
            ModelOp::Diameter => (
                ModelRet::Num(analytics::diameter(&self.snapshot())),
                Undo::None,
            ),
            ModelOp::BcArgmax => (
                ModelRet::Key(analytics::betweenness_centrality(&self.snapshot()).argmax_key),
                Undo::None,
            ),
        }
    }

    pub fn undo(&mut self, u: Undo) {
        match u {
            Undo::None => {}
            Undo::VertexAdded(k) => {
                self.vertices.remove(&k);
            }
            Undo::VertexRemoved {
                key,
                outgoing,
                incoming,
            } => {
                self.vertices.insert(key);
                if !outgoing.is_empty() {
                    self.edges.insert(key, outgoing.into_iter().collect());
                }
                for src in incoming {
                    self.edges.entry(src).or_default().insert(key);
                }
            }
            Undo::EdgeAdded(k, l) => {
                self.edges.get_mut(&k).map(|s| s.remove(&l));
            }
            Undo::EdgeRemoved(k, l) => {
                self.edges.entry(k).or_default().insert(l);
            }
        }
    }

    pub fn snapshot(&self) -> Snapshot {
        let vertices: Vec<i64> = self.vertices.iter().copied().collect();
        let edges = vertices
            .iter()
            .map(|v| {
                self.edges
                    .get(v)
                    .map(|s| s.iter().copied().collect())
                    .unwrap_or_default()
            })
            .collect();
        Snapshot { vertices, edges }
    }

    /// Order-independent fingerprint of the current state, wide enough that
    /// memoization collisions are not a practical concern.
    pub fn fingerprint(&self) -> u128 {
        let mut a = DefaultHasher::new();
        let mut b = DefaultHasher::new();
        0xa5a5u16.hash(&mut b);
        for v in &self.vertices {
            v.hash(&mut a);
            v.hash(&mut b);
        }
        i64::MIN.hash(&mut a);
        i64::MIN.hash(&mut b);
        for (src, dests) in &self.edges {
            if dests.is_empty() {
                continue;
            }
            src.hash(&mut a);
            src.hash(&mut b);
            for d in dests {
                d.hash(&mut a);
                d.hash(&mut b);
            }
        }
        ((a.finish() as u128) << 64) | b.finish() as u128
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn vertex_lifecycle_matches_result_vocabulary() {
        let mut m = SeqGraphModel::new();
        assert_eq!(
            m.apply(&ModelOp::ContainsVertex(5)),
            ModelRet::Op(OpResult::VertexNotPresent)
        );
        assert_eq!(
            m.apply(&ModelOp::AddVertex(5)),
            ModelRet::Op(OpResult::VertexAdded)
        );
        assert_eq!(
            m.apply(&ModelOp::AddVertex(5)),
            ModelRet::Op(OpResult::VertexAlreadyPresent)
        );
        assert_eq!(
            m.apply(&ModelOp::RemoveVertex(5)),
            ModelRet::Op(OpResult::VertexRemoved)
        );
        assert_eq!(
            m.apply(&ModelOp::RemoveVertex(5)),
            ModelRet::Op(OpResult::VertexNotPresent)
        );
    }

    #[test]
    fn removing_a_vertex_purges_both_edge_directions() {
        let mut m = SeqGraphModel::new();
        for k in [1, 2, 3] {
            m.apply(&ModelOp::AddVertex(k));
        }
        m.apply(&ModelOp::AddEdge(1, 2));
        m.apply(&ModelOp::AddEdge(2, 3));
        m.apply(&ModelOp::AddEdge(3, 1));
        m.apply(&ModelOp::RemoveVertex(2));
        m.apply(&ModelOp::AddVertex(2));
        assert_eq!(
            m.apply(&ModelOp::ContainsEdge(1, 2)),
            ModelRet::Op(OpResult::EdgeNotPresent)
        );
        assert_eq!(
            m.apply(&ModelOp::ContainsEdge(2, 3)),
            ModelRet::Op(OpResult::EdgeNotPresent)
        );
        assert_eq!(
            m.apply(&ModelOp::ContainsEdge(3, 1)),
            ModelRet::Op(OpResult::EdgePresent)
        );
    }

    #[test]
    fn edge_ops_report_missing_endpoints_first() {
        let mut m = SeqGraphModel::new();
        m.apply(&ModelOp::AddVertex(1));
        assert_eq!(
            m.apply(&ModelOp::AddEdge(1, 9)),
            ModelRet::Op(OpResult::VertexNotPresent)
        );
        assert_eq!(
            m.apply(&ModelOp::RemoveEdge(1, 9)),
            ModelRet::Op(OpResult::VertexNotPresent)
        );
        assert_eq!(
            m.apply(&ModelOp::ContainsEdge(1, 9)),
            ModelRet::Op(OpResult::VertexNotPresent)
        );
    }

    #[test]
    fn undo_restores_the_exact_state() {
        let mut m = SeqGraphModel::new();
        for k in [1, 2, 3] {
            m.apply(&ModelOp::AddVertex(k));
        }
        m.apply(&ModelOp::AddEdge(1, 2));
        m.apply(&ModelOp::AddEdge(3, 2));
        m.apply(&ModelOp::AddEdge(2, 1));
        let before = m.fingerprint();
        let snap_before = m.snapshot();
        for op in [
            ModelOp::AddVertex(7),
            ModelOp::RemoveVertex(2),
            ModelOp::AddEdge(1, 3),
            ModelOp::RemoveEdge(1, 2),
            ModelOp::ContainsEdge(3, 2),
            ModelOp::Snap,
        ] {
            let (_, undo) = m.apply_with_undo(&op);
            m.undo(undo);
            assert_eq!(m.fingerprint(), before, "undo failed for {op:?}");
            assert_eq!(m.snapshot(), snap_before);
        }
    }

    #[test]
    fn snapshot_and_analytics_come_from_the_same_state() {
        let mut m = SeqGraphModel::new();
        for k in [1, 2, 3, 4] {
            m.apply(&ModelOp::AddVertex(k));
        }
        for (a, b) in [(1, 2), (2, 3), (3, 4)] {
            m.apply(&ModelOp::AddEdge(a, b));
        }
        assert_eq!(m.apply(&ModelOp::Diameter), ModelRet::Num(3));
        assert_eq!(m.apply(&ModelOp::BcArgmax), ModelRet::Key(Some(2)));
        let ModelRet::Snap(s) = m.apply(&ModelOp::Snap) else {
            panic!("snap returned a non-snapshot");
        };
        assert_eq!(s.edge_pairs(), vec![(1, 2), (2, 3), (3, 4)]);
    }
}
