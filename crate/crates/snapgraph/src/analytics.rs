//! Graph analytics over immutable snapshots.
//!
//! Everything here is purely functional on a [`Snapshot`]: take one with
//! [`crate::Graph::take_snapshot`], then measure it while the live graph
//! keeps mutating. Distances are unweighted hop counts along directed edges.

use std::collections::HashMap;
use std::collections::VecDeque;

use crate::snapshot::Snapshot;

/// Distance marker for vertices a BFS never reached.
pub const UNREACHED: u32 = u32::MAX;

/// A snapshot re-indexed for traversal: vertex keys become dense indices.
pub struct GraphView {
    /// Vertex keys, ascending; `ids[i]` is the key of index `i`.
    pub ids: Vec<i64>,
    index: HashMap<i64, usize>,
    /// Outgoing adjacency by index.
    pub adj: Vec<Vec<usize>>,
}

impl GraphView {
    pub fn from_snapshot(snap: &Snapshot) -> GraphView {
        let ids = snap.vertices.clone();
        let index: HashMap<i64, usize> =
            ids.iter().enumerate().map(|(i, &k)| (k, i)).collect();
        let adj = snap
            .edges
            .iter()
            .map(|dests| {
                dests
                    .iter()
                    .filter_map(|d| index.get(d).copied())
                    .collect()
            })
            .collect();
        GraphView { ids, index, adj }
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn index_of(&self, key: i64) -> Option<usize> {
        self.index.get(&key).copied()
    }
}

/// Hop counts from `src` to every vertex; [`UNREACHED`] where no path exists.
pub fn bfs_distances(view: &GraphView, src: usize) -> Vec<u32> {
    let mut dist = vec![UNREACHED; view.len()];
    dist[src] = 0;
    let mut q = VecDeque::with_capacity(view.len());
    q.push_back(src);
    while let Some(u) = q.pop_front() {
        let du = dist[u];
        for &v in &view.adj[u] {
            if dist[v] == UNREACHED {
                dist[v] = du + 1;
                q.push_back(v);
            }
        }
    }
    dist
}

/// Longest shortest path over all ordered pairs that can reach each other.
/// Unreachable pairs are ignored; graphs with no such pair (empty, single
/// vertex, no edges) have diameter 0.
pub fn diameter(snap: &Snapshot) -> u32 {
    let view = GraphView::from_snapshot(snap);
    let mut best = 0u32;
    for s in 0..view.len() {
        for (t, &d) in bfs_distances(&view, s).iter().enumerate() {
            if t != s && d != UNREACHED && d > best {
                best = d;
            }
        }
    }
    best
}

/// Betweenness centrality scores, aligned with `Snapshot::vertices`.
#[derive(Debug, Clone, PartialEq)]
pub struct BcResult {
    pub scores: Vec<f64>,
    /// Key of the highest-scoring vertex, smallest key on ties; `None` only
    /// for an empty snapshot.
    pub argmax_key: Option<i64>,
    pub max_score: f64,
}

/// Unnormalized betweenness centrality on the directed snapshot, endpoints
/// excluded: for each ordered pair (s, t) with s != t, every other vertex w
/// receives the fraction of shortest s-t paths that pass through it.
///
/// Uses forward accumulation over the shortest-path DAG of each source, so
/// the whole thing costs one BFS worth of work per vertex instead of one
/// path enumeration per pair.
pub fn betweenness_centrality(snap: &Snapshot) -> BcResult {
    let view = GraphView::from_snapshot(snap);
    let n = view.len();
    let mut scores = vec![0.0f64; n];

    let mut sigma = vec![0.0f64; n];
    let mut dist = vec![UNREACHED; n];
    let mut preds: Vec<Vec<usize>> = vec![Vec::new(); n];
    let mut order = Vec::with_capacity(n);
    let mut delta = vec![0.0f64; n];

    for s in 0..n {
        for v in 0..n {
            sigma[v] = 0.0;
            dist[v] = UNREACHED;
            preds[v].clear();
            delta[v] = 0.0;
        }
        order.clear();
        sigma[s] = 1.0;
        dist[s] = 0;
        let mut q = VecDeque::new();
        q.push_back(s);
        while let Some(u) = q.pop_front() {
            order.push(u);
            for &v in &view.adj[u] {
                if dist[v] == UNREACHED {
                    dist[v] = dist[u] + 1;
                    q.push_back(v);
                }
                if dist[v] == dist[u] + 1 {
                    sigma[v] += sigma[u];
                    preds[v].push(u);
                }
            }
        }
        // Walk the BFS order backwards, pushing dependency shares up the
        // shortest-path DAG.
        for &w in order.iter().rev() {
            for &v in &preds[w] {
                delta[v] += sigma[v] / sigma[w] * (1.0 + delta[w]);
            }
            if w != s {
                scores[w] += delta[w];
            }
        }
    }

    let mut argmax_key = None;
    let mut max_score = 0.0f64;
    for (i, &sc) in scores.iter().enumerate() {
        match argmax_key {
            None => {
                argmax_key = Some(view.ids[i]);
                max_score = sc;
            }
            Some(_) if sc > max_score => {
                argmax_key = Some(view.ids[i]);
                max_score = sc;
            }
            _ => {}
        }
    }
    BcResult {
        scores,
        argmax_key,
        max_score,
    }
}
