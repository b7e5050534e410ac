//! Concurrent unbounded directed graph.
//!
//! The structure is two levels of sorted linked lists: a vertex list hanging
//! off a head sentinel, and one edge list per vertex. Every mutation is a
//! single CAS on a [`TaggedPtr`] link; removal happens in two steps, a CAS
//! that sets the mark on the victim's own next-link (the logical delete and
//! the operation's effect) followed by a best-effort CAS that unlinks it.
//! Traversals finish removals they stumble over, so a suspended remover
//! never blocks anyone.
//!
//! Invariants the tests lean on:
//! - unmarked keys are strictly ascending in every list; sentinels carry the
//!   reserved keys `i64::MIN`/`i64::MAX` and are never marked or unlinked;
//! - a node is marked at most once and never resurrected; re-adding a key
//!   builds a fresh node, inserted in front of any marked same-key leftover;
//! - an edge's `dest` pointer names the destination vertex node that was
//!   current when the edge was created; if that vertex dies the edge is dead
//!   too and gets purged lazily by the next locating traversal;
//! - every operation that observes a mark at its decision point forwards a
//!   delete report to the active snapshot collector (see `snapshot`), which
//!   is what keeps overlapping snapshots consistent.

use std::fmt;
use std::ptr;
use std::sync::atomic::{AtomicPtr, Ordering};

use crate::pool::NodePool;
use crate::registry::{RegistryFull, ThreadRegistry, Tid, DEFAULT_MAX_THREADS};
use crate::snapshot::{ReportAction, SnapCollector, Snapshot};
use crate::stall::{ReleaseMode, StallHandle, StallHub, StallSite};
use crate::tagged::{AtomicTaggedPtr, TaggedPtr};

/// Outcome labels for the point operations.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum OpResult {
    VertexAdded,
    VertexAlreadyPresent,
    VertexRemoved,
    VertexNotPresent,
    VertexPresent,
    EdgeAdded,
    EdgePresent,
    EdgeRemoved,
    EdgeNotPresent,
    /// Synonym some call sites historically used for a positive
    /// `containsEdge`; equivalent to [`OpResult::EdgePresent`].
    EdgeFound,
}

impl OpResult {
    /// Collapse synonyms so results can be compared structurally.
    pub fn canonical(self) -> OpResult {
        match self {
            OpResult::EdgeFound => OpResult::EdgePresent,
            other => other,
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            OpResult::VertexAdded => "VERTEX_ADDED",
            OpResult::VertexAlreadyPresent => "VERTEX_ALREADY_PRESENT",
            OpResult::VertexRemoved => "VERTEX_REMOVED",
            OpResult::VertexNotPresent => "VERTEX_NOT_PRESENT",
            OpResult::VertexPresent => "VERTEX_PRESENT",
            OpResult::EdgeAdded => "EDGE_ADDED",
            OpResult::EdgePresent => "EDGE_PRESENT",
            OpResult::EdgeRemoved => "EDGE_REMOVED",
            OpResult::EdgeNotPresent => "EDGE_NOT_PRESENT",
            OpResult::EdgeFound => "EDGE_FOUND",
        }
    }

    pub fn from_label(s: &str) -> Option<OpResult> {
        Some(match s {
            "VERTEX_ADDED" => OpResult::VertexAdded,
            "VERTEX_ALREADY_PRESENT" => OpResult::VertexAlreadyPresent,
            "VERTEX_REMOVED" => OpResult::VertexRemoved,
            "VERTEX_NOT_PRESENT" => OpResult::VertexNotPresent,
            "VERTEX_PRESENT" => OpResult::VertexPresent,
            "EDGE_ADDED" => OpResult::EdgeAdded,
            "EDGE_PRESENT" => OpResult::EdgePresent,
            "EDGE_REMOVED" => OpResult::EdgeRemoved,
            "EDGE_NOT_PRESENT" => OpResult::EdgeNotPresent,
            "EDGE_FOUND" => OpResult::EdgeFound,
            _ => return None,
        })
    }
}

impl fmt::Display for OpResult {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

pub(crate) struct VNode {
    pub(crate) key: i64,
    /// Next vertex; the tag bit on this link marks *this* vertex deleted.
    pub(crate) vnext: AtomicTaggedPtr<VNode>,
    /// Head sentinel of this vertex's edge list. Immutable after creation.
    pub(crate) ehead: *mut ENode,
}

pub(crate) struct ENode {
    /// Destination key.
    pub(crate) key: i64,
    /// Destination vertex node at creation time; null on sentinels.
    pub(crate) dest: *mut VNode,
    /// Next edge; the tag bit marks this edge deleted.
    pub(crate) enext: AtomicTaggedPtr<ENode>,
}

pub(crate) fn vnode_is_marked(v: *mut VNode) -> bool {
    unsafe { (*v).vnext.load(Ordering::Acquire) }.is_tagged()
}

pub(crate) fn enode_is_marked(e: *mut ENode) -> bool {
    unsafe { (*e).enext.load(Ordering::Acquire) }.is_tagged()
}

fn check_key(key: i64) {
    assert!(
        key > i64::MIN && key < i64::MAX,
        "keys {} and {} are reserved for sentinels",
        i64::MIN,
        i64::MAX
    );
}

pub struct Graph {
    pub(crate) vh: *mut VNode,
    registry: ThreadRegistry,
    /// Current snapshot collector, shared with the snapshot module.
    pub(crate) psc: AtomicPtr<SnapCollector>,
    pub(crate) pool: NodePool,
    pub(crate) stalls: StallHub,
}

// The raw pointers inside are shared on purpose: every mutation goes through
// atomics and nothing is freed before the pool (owned here) is dropped.
unsafe impl Send for Graph {}
unsafe impl Sync for Graph {}

impl Default for Graph {
    fn default() -> Self {
        Graph::new()
    }
}

impl Graph {
    /// A graph sized for [`DEFAULT_MAX_THREADS`] registered threads.
    pub fn new() -> Self {
        Graph::with_max_threads(DEFAULT_MAX_THREADS)
    }

    pub fn with_max_threads(max_threads: usize) -> Self {
        let pool = NodePool::new(max_threads);
        let setup = pool.setup_slot();
        let vt = alloc_vnode_raw(&pool, setup, i64::MAX);
        let vh = alloc_vnode_raw(&pool, setup, i64::MIN);
        unsafe {
            (*vh).vnext
                .store(TaggedPtr::new(vt, false), Ordering::Release);
        }
        Graph {
            vh,
            registry: ThreadRegistry::new(max_threads),
            psc: AtomicPtr::new(ptr::null_mut()),
            pool,
            stalls: StallHub::new(),
        }
    }

    /// Claim a thread id for use with every other operation. Each returned id
    /// belongs to one thread at a time.
    pub fn register_thread(&self) -> Result<Tid, RegistryFull> {
        self.registry.register()
    }

    pub fn thread_capacity(&self) -> usize {
        self.registry.capacity()
    }

    /// Freeze a thread at an instrumented point. Test instrumentation; with
    /// nothing armed the sites cost one relaxed load.
    pub fn arm_stall(&self, site: StallSite, victim: Tid, mode: ReleaseMode) -> StallHandle {
        self.stalls.arm(site, victim, mode)
    }

    // ---- locating traversals ----------------------------------------------

    /// Locate `key` in the vertex list starting at `start` (the head sentinel
    /// or an unmarked vertex with a smaller key). Returns `(pv, cv)` with
    /// `pv.key < key <= cv.key`; marked vertices with keys below `key` are
    /// delete-reported and unlinked on the way. `cv` itself may be marked.
    pub(crate) fn loc_v(&self, start: *mut VNode, key: i64, tid: Tid) -> (*mut VNode, *mut VNode) {
        'retry: loop {
            // A start that got marked can no longer anchor unlink CASes
            // (its own link is tagged), so fall back to the head.
            let mut pv = if start != self.vh && vnode_is_marked(start) {
                self.vh
            } else {
                start
            };
            let mut cv = unsafe { (*pv).vnext.load(Ordering::Acquire) }.target();
            loop {
                let mut cn = unsafe { (*cv).vnext.load(Ordering::Acquire) };
                while cn.is_tagged() && unsafe { (*cv).key } < key {
                    self.report_vertex(cv, ReportAction::Delete, tid);
                    let unlink = unsafe {
                        (*pv).vnext
                            .compare_exchange(TaggedPtr::new(cv, false), cn.without_tag())
                    };
                    if unlink.is_err() {
                        continue 'retry;
                    }
                    cv = cn.target();
                    cn = unsafe { (*cv).vnext.load(Ordering::Acquire) };
                }
                if unsafe { (*cv).key } >= key {
                    return (pv, cv);
                }
                pv = cv;
                cv = cn.target();
            }
        }
    }

    /// Read-only variant: never CASes, never reports, walks straight through
    /// marked nodes. Returns the first node with `cv.key >= key` and its
    /// predecessor in the current chain.
    pub(crate) fn loc_c(&self, start: *mut VNode, key: i64) -> (*mut VNode, *mut VNode) {
        let mut pv = start;
        let mut cv = unsafe { (*pv).vnext.load(Ordering::Acquire) }.target();
        while unsafe { (*cv).key } < key {
            pv = cv;
            cv = unsafe { (*cv).vnext.load(Ordering::Acquire) }.target();
        }
        (pv, cv)
    }

    /// Locate `l` in `src`'s edge list. On the way, any edge that is marked,
    /// or whose destination vertex is marked, is delete-reported and
    /// physically unlinked (marking it first in the latter case), so the
    /// returned `ce` is never a deleted or dangling edge. Restarts from the
    /// list head whenever a CAS loses.
    pub(crate) fn loc_e(&self, src: *mut VNode, l: i64, tid: Tid) -> (*mut ENode, *mut ENode) {
        let ehead = unsafe { (*src).ehead };
        'retry: loop {
            let mut pe = ehead;
            let mut ce = unsafe { (*pe).enext.load(Ordering::Acquire) }.target();
            loop {
                let cnt = unsafe { (*ce).enext.load(Ordering::Acquire) };
                if cnt.is_tagged() {
                    self.report_edge(ce, src, ReportAction::Delete, tid);
                    let unlink = unsafe {
                        (*pe).enext
                            .compare_exchange(TaggedPtr::new(ce, false), cnt.without_tag())
                    };
                    if unlink.is_err() {
                        continue 'retry;
                    }
                    ce = cnt.target();
                    continue;
                }
                let dest = unsafe { (*ce).dest };
                if !dest.is_null() && vnode_is_marked(dest) {
                    // The destination died; retire the edge. Delete-report
                    // before each CAS so an overlapping snapshot hears about
                    // it no matter where we lose the race.
                    self.report_edge(ce, src, ReportAction::Delete, tid);
                    if unsafe { (*ce).enext.compare_exchange(cnt, cnt.with_tag()) }.is_err() {
                        continue 'retry;
                    }
                    self.report_edge(ce, src, ReportAction::Delete, tid);
                    let unlink = unsafe {
                        (*pe).enext
                            .compare_exchange(TaggedPtr::new(ce, false), cnt.without_tag())
                    };
                    if unlink.is_err() {
                        continue 'retry;
                    }
                    ce = cnt.target();
                    continue;
                }
                if unsafe { (*ce).key } >= l {
                    return (pe, ce);
                }
                pe = ce;
                ce = cnt.target();
            }
        }
    }

    /// Locate both endpoint vertices for an edge operation, smaller key
    /// first so the second search can start from the first hit. Returns
    /// `(node_k, node_l)`, or `None` (after forwarding a delete report if a
    /// marked match was seen) when either endpoint is logically absent.
    pub(crate) fn con_v_plus(
        &self,
        k: i64,
        l: i64,
        tid: Tid,
    ) -> Option<(*mut VNode, *mut VNode)> {
        let (first, second) = if k < l { (k, l) } else { (l, k) };
        let (_, cv1) = self.loc_v(self.vh, first, tid);
        if unsafe { (*cv1).key } != first {
            return None;
        }
        if vnode_is_marked(cv1) {
            self.report_vertex(cv1, ReportAction::Delete, tid);
            return None;
        }
        let (_, cv2) = self.loc_v(cv1, second, tid);
        if unsafe { (*cv2).key } != second {
            return None;
        }
        if vnode_is_marked(cv2) {
            self.report_vertex(cv2, ReportAction::Delete, tid);
            return None;
        }
        Some(if k < l { (cv1, cv2) } else { (cv2, cv1) })
    }

    /// Read-only endpoint location for `containsEdge`. Key match only; the
    /// caller is responsible for checking marks at its decision point.
    pub(crate) fn con_c_plus(&self, k: i64, l: i64) -> Option<(*mut VNode, *mut VNode)> {
        let (first, second) = if k < l { (k, l) } else { (l, k) };
        let (_, cv1) = self.loc_c(self.vh, first);
        if unsafe { (*cv1).key } != first {
            return None;
        }
        let (_, cv2) = self.loc_c(cv1, second);
        if unsafe { (*cv2).key } != second {
            return None;
        }
        Some(if k < l { (cv1, cv2) } else { (cv2, cv1) })
    }

    // ---- point operations --------------------------------------------------

    pub fn add_vertex(&self, key: i64, tid: Tid) -> OpResult {
        check_key(key);
        self.lend_hand(tid);
        let mut new_node: *mut VNode = ptr::null_mut();
        loop {
            let (pv, cv) = self.loc_v(self.vh, key, tid);
            if unsafe { (*cv).key } == key {
                if !vnode_is_marked(cv) {
                    self.report_vertex(cv, ReportAction::Insert, tid);
                    return OpResult::VertexAlreadyPresent;
                }
                // A dead generation of this key is still linked. We are a
                // witness of its removal, so forward the delete report, then
                // install the fresh generation in front of it.
                self.report_vertex(cv, ReportAction::Delete, tid);
            }
            if new_node.is_null() {
                new_node = self.alloc_vnode(key, tid);
            }
            unsafe {
                (*new_node)
                    .vnext
                    .store(TaggedPtr::new(cv, false), Ordering::Relaxed);
            }
            let ins = unsafe {
                (*pv).vnext
                    .compare_exchange(TaggedPtr::new(cv, false), TaggedPtr::new(new_node, false))
            };
            if ins.is_ok() {
                self.report_vertex(new_node, ReportAction::Insert, tid);
                return OpResult::VertexAdded;
            }
        }
    }

    pub fn remove_vertex(&self, key: i64, tid: Tid) -> OpResult {
        check_key(key);
        self.lend_hand(tid);
        loop {
            let (pv, cv) = self.loc_v(self.vh, key, tid);
            if unsafe { (*cv).key } != key {
                return OpResult::VertexNotPresent;
            }
            let cn = unsafe { (*cv).vnext.load(Ordering::Acquire) };
            if cn.is_tagged() {
                // Someone else's removal has already taken effect.
                self.report_vertex(cv, ReportAction::Delete, tid);
                return OpResult::VertexNotPresent;
            }
            if unsafe { (*cv).vnext.compare_exchange(cn, cn.with_tag()) }.is_ok() {
                // The mark is the removal. Outgoing edges die with the node;
                // incoming ones get purged lazily by later traversals.
                self.report_vertex(cv, ReportAction::Delete, tid);
                self.stalls.reach(StallSite::RemoveVertexPreUnlink, tid);
                let _ = unsafe {
                    (*pv).vnext
                        .compare_exchange(TaggedPtr::new(cv, false), cn.without_tag())
                };
                return OpResult::VertexRemoved;
            }
            // Lost the mark race (rival removal or an insert behind cv).
        }
    }

    /// Wait-free membership test: one pass, no CAS except the report push.
    pub fn contains_vertex(&self, key: i64, tid: Tid) -> OpResult {
        check_key(key);
        self.lend_hand(tid);
        let (_, cv) = self.loc_c(self.vh, key);
        if unsafe { (*cv).key } != key {
            return OpResult::VertexNotPresent;
        }
        if vnode_is_marked(cv) {
            self.report_vertex(cv, ReportAction::Delete, tid);
            OpResult::VertexNotPresent
        } else {
            self.report_vertex(cv, ReportAction::Insert, tid);
            OpResult::VertexPresent
        }
    }

    /// # Panics
    ///
    /// Panics on `k == l`; self-loops are outside the edge domain.
    pub fn add_edge(&self, k: i64, l: i64, tid: Tid) -> OpResult {
        check_key(k);
        check_key(l);
        assert!(k != l, "self-loop ({k},{k}) rejected");
        self.lend_hand(tid);
        let Some((u, v)) = self.con_v_plus(k, l, tid) else {
            return OpResult::VertexNotPresent;
        };
        let mut new_edge: *mut ENode = ptr::null_mut();
        loop {
            // Re-verify the endpoints each attempt; they can die under us.
            if vnode_is_marked(u) {
                self.report_vertex(u, ReportAction::Delete, tid);
                return OpResult::VertexNotPresent;
            }
            if vnode_is_marked(v) {
                self.report_vertex(v, ReportAction::Delete, tid);
                return OpResult::VertexNotPresent;
            }
            let (pe, ce) = self.loc_e(u, l, tid);
            if unsafe { (*ce).key } == l {
                self.report_edge(ce, u, ReportAction::Insert, tid);
                return OpResult::EdgePresent;
            }
            if new_edge.is_null() {
                new_edge = self.alloc_enode(l, v, tid);
            }
            unsafe {
                (*new_edge)
                    .enext
                    .store(TaggedPtr::new(ce, false), Ordering::Relaxed);
            }
            let ins = unsafe {
                (*pe).enext
                    .compare_exchange(TaggedPtr::new(ce, false), TaggedPtr::new(new_edge, false))
            };
            if ins.is_ok() {
                self.report_edge(new_edge, u, ReportAction::Insert, tid);
                return OpResult::EdgeAdded;
            }
        }
    }

    /// # Panics
    ///
    /// Panics on `k == l`.
    pub fn remove_edge(&self, k: i64, l: i64, tid: Tid) -> OpResult {
        check_key(k);
        check_key(l);
        assert!(k != l, "self-loop ({k},{k}) rejected");
        self.lend_hand(tid);
        let Some((u, v)) = self.con_v_plus(k, l, tid) else {
            return OpResult::VertexNotPresent;
        };
        loop {
            if vnode_is_marked(u) {
                self.report_vertex(u, ReportAction::Delete, tid);
                return OpResult::VertexNotPresent;
            }
            if vnode_is_marked(v) {
                self.report_vertex(v, ReportAction::Delete, tid);
                return OpResult::VertexNotPresent;
            }
            let (pe, ce) = self.loc_e(u, l, tid);
            if unsafe { (*ce).key } != l {
                // locE may have just purged the edge because an endpoint
                // died; that case is a vertex-level absence, not an
                // edge-level one, so look at the endpoints again.
                if vnode_is_marked(u) {
                    self.report_vertex(u, ReportAction::Delete, tid);
                    return OpResult::VertexNotPresent;
                }
                if vnode_is_marked(v) {
                    self.report_vertex(v, ReportAction::Delete, tid);
                    return OpResult::VertexNotPresent;
                }
                return OpResult::EdgeNotPresent;
            }
            let cnt = unsafe { (*ce).enext.load(Ordering::Acquire) };
            if cnt.is_tagged() {
                // A rival marked it first; the retry's locE will purge it and
                // report the edge absent.
                continue;
            }
            if unsafe { (*ce).enext.compare_exchange(cnt, cnt.with_tag()) }.is_ok() {
                self.report_edge(ce, u, ReportAction::Delete, tid);
                let _ = unsafe {
                    (*pe).enext
                        .compare_exchange(TaggedPtr::new(ce, false), cnt.without_tag())
                };
                return OpResult::EdgeRemoved;
            }
        }
    }

    /// Wait-free edge membership test.
    ///
    /// # Panics
    ///
    /// Panics on `k == l`.
    pub fn contains_edge(&self, k: i64, l: i64, tid: Tid) -> OpResult {
        check_key(k);
        check_key(l);
        assert!(k != l, "self-loop ({k},{k}) rejected");
        self.lend_hand(tid);
        let Some((u, v)) = self.con_c_plus(k, l) else {
            return OpResult::VertexNotPresent;
        };
        let mut ce = unsafe { (*(*u).ehead).enext.load(Ordering::Acquire) }.target();
        while unsafe { (*ce).key } < l {
            ce = unsafe { (*ce).enext.load(Ordering::Acquire) }.target();
        }
        // Decision point: anything marked here decides the answer and gets
        // its removal forwarded to the collector.
        if vnode_is_marked(u) {
            self.report_vertex(u, ReportAction::Delete, tid);
            return OpResult::VertexNotPresent;
        }
        if vnode_is_marked(v) {
            self.report_vertex(v, ReportAction::Delete, tid);
            return OpResult::VertexNotPresent;
        }
        if unsafe { (*ce).key } != l {
            return OpResult::EdgeNotPresent;
        }
        if enode_is_marked(ce) {
            self.report_edge(ce, u, ReportAction::Delete, tid);
            return OpResult::EdgeNotPresent;
        }
        let dest = unsafe { (*ce).dest };
        if !dest.is_null() && vnode_is_marked(dest) {
            // The edge still points at a generation of `l` that has been
            // removed; the edge died with it even though a fresh `l` exists.
            self.report_edge(ce, u, ReportAction::Delete, tid);
            return OpResult::EdgeNotPresent;
        }
        self.report_edge(ce, u, ReportAction::Insert, tid);
        OpResult::EdgePresent
    }

    // ---- quiescent inspection ----------------------------------------------

    /// Read the live state directly. `&mut self` guarantees quiescence, so
    /// this is exact and needs no snapshot machinery; tests compare
    /// `take_snapshot` output against it.
    pub fn quiescent_state(&mut self) -> Snapshot {
        let mut vertices = Vec::new();
        let mut edges = Vec::new();
        unsafe {
            let mut v = (*self.vh).vnext.load(Ordering::Acquire).target();
            while (*v).key != i64::MAX {
                if !vnode_is_marked(v) {
                    let mut dests = Vec::new();
                    let mut e = (*(*v).ehead).enext.load(Ordering::Acquire).target();
                    while (*e).key != i64::MAX {
                        if !(*e).enext.load(Ordering::Acquire).is_tagged() {
                            let d = (*e).dest;
                            if !d.is_null() && !vnode_is_marked(d) {
                                dests.push((*e).key);
                            }
                        }
                        e = (*e).enext.load(Ordering::Acquire).target();
                    }
                    dests.dedup();
                    vertices.push((*v).key);
                    edges.push(dests);
                }
                v = (*v).vnext.load(Ordering::Acquire).target();
            }
        }
        Snapshot { vertices, edges }
    }

    // ---- allocation ---------------------------------------------------------

    fn alloc_vnode(&self, key: i64, tid: Tid) -> *mut VNode {
        alloc_vnode_raw(&self.pool, tid.as_usize(), key)
    }

    fn alloc_enode(&self, key: i64, dest: *mut VNode, tid: Tid) -> *mut ENode {
        self.pool.alloc(
            tid.as_usize(),
            ENode {
                key,
                dest,
                enext: AtomicTaggedPtr::null(),
            },
        )
    }
}

/// Build a vertex node with fresh edge-list sentinels.
fn alloc_vnode_raw(pool: &NodePool, slot: usize, key: i64) -> *mut VNode {
    let etail = pool.alloc(
        slot,
        ENode {
            key: i64::MAX,
            dest: ptr::null_mut(),
            enext: AtomicTaggedPtr::null(),
        },
    );
    let ehead = pool.alloc(
        slot,
        ENode {
            key: i64::MIN,
            dest: ptr::null_mut(),
            enext: AtomicTaggedPtr::new(TaggedPtr::new(etail, false)),
        },
    );
    pool.alloc(
        slot,
        VNode {
            key,
            vnext: AtomicTaggedPtr::null(),
            ehead,
        },
    )
}
