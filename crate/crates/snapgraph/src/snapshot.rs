//! Cooperative wait-free snapshots.
//!
//! One collector at a time is published in `Graph::psc`. Every thread that
//! wants a snapshot while it is active joins the same collector and helps
//! drive it through the phases:
//!
//! 1. collect the vertex list into a monotonic snap-chain, then block the
//!    chain;
//! 2. iterate the snap-chain in two passes (claim, then help stragglers),
//!    collecting and blocking each vertex's edge list;
//! 3. deactivate the collector and block the report slots;
//! 4. reconstruct and publish one shared result.
//!
//! Point operations that run concurrently forward reports: an insert report
//! when they observe (or create) an unmarked node, a delete report when they
//! observe a mark, always before any physical unlink. Reconstruction keeps a
//! node in the snapshot iff it was collected or insert-reported and has no
//! delete report, and keeps an edge iff additionally both endpoint nodes
//! (by node identity, not key) stayed in. Reports that arrive after their
//! slot is blocked are dropped; the operations that filed them overlap the
//! snapshot and linearize after it, which is what makes dropping safe.
//!
//! Every phase step is idempotent, so any helper can finish any step and the
//! slowest thread can always complete the snapshot alone: progress is
//! wait-free for the snapshot as a whole, and the result each helper returns
//! is the single published one.

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};
use std::fmt::Write as _;
use std::ptr;
use std::sync::atomic::{AtomicBool, AtomicPtr, AtomicU64, AtomicU8, AtomicUsize, Ordering};
use std::sync::Arc;

use crate::graph::{enode_is_marked, vnode_is_marked, ENode, Graph, VNode};
use crate::pool::NodePool;
use crate::registry::Tid;
use crate::stall::StallSite;
use crate::tagged::{AtomicTaggedPtr, TaggedPtr};

/// Budget for the hand a point operation lends an active collector: how many
/// list nodes it may push onto the collection front, and how many edge
/// chains it may claim and collect. Small enough that a point operation
/// stays a point operation, large enough that a stream of them keeps a
/// snapshot moving.
const HELP_COLLECT_NODES: usize = 64;
const HELP_CLAIMS: usize = 2;
const HELP_SCAN: usize = 64;

/// How many chain entries the active phases process between scheduling
/// points while the collector is gathering callers.
const YIELD_EVERY: usize = 128;

/// Hand the core over at regular points while the collector is still
/// accepting joiners. On an oversubscribed machine the yields give
/// CPU-starved threads a chance to reach the collector, join the generation
/// and share its result instead of queueing whole private generations
/// behind their timeslices. Only the published collector paces; a private
/// one has nobody to invite, and an inactive one cannot be joined any more,
/// which is why reconstruction never paces.
#[inline]
fn pace(sc: &SnapCollector, step: &mut usize) {
    *step += 1;
    if *step % YIELD_EVERY == 0 && sc.shared {
        std::thread::yield_now();
    }
}

/// An immutable graph snapshot: vertex keys in ascending order, and for each
/// vertex the ascending destination keys of its outgoing edges.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Snapshot {
    pub vertices: Vec<i64>,
    pub edges: Vec<Vec<i64>>,
}

impl Snapshot {
    pub fn vertex_count(&self) -> usize {
        self.vertices.len()
    }

    pub fn edge_count(&self) -> usize {
        self.edges.iter().map(Vec::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.vertices.is_empty()
    }

    /// All edges as `(src, dest)` pairs, ordered by source then destination.
    pub fn edge_pairs(&self) -> Vec<(i64, i64)> {
        let mut out = Vec::with_capacity(self.edge_count());
        for (v, dests) in self.vertices.iter().zip(&self.edges) {
            for d in dests {
                out.push((*v, *d));
            }
        }
        out
    }

    /// One line per vertex: `key: dest dest ...`.
    pub fn to_adjacency_text(&self) -> String {
        let mut s = String::new();
        for (v, dests) in self.vertices.iter().zip(&self.edges) {
            let _ = write!(s, "{v}:");
            for d in dests {
                let _ = write!(s, " {d}");
            }
            s.push('\n');
        }
        s
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum ReportAction {
    Insert,
    Delete,
}

pub(crate) struct VReport {
    vnode: *mut VNode,
    action: ReportAction,
    next: *mut VReport,
}

pub(crate) struct EReport {
    enode: *mut ENode,
    src: *mut VNode,
    action: ReportAction,
    next: *mut EReport,
}

const IDLE: u8 = 0;
const CLAIMED: u8 = 1;
const DONE: u8 = 2;

struct SnapEnode {
    enode: *mut ENode,
    dest: *mut VNode,
    key: i64,
    next: AtomicTaggedPtr<SnapEnode>,
}

pub(crate) struct SnapVnode {
    vnode: *mut VNode,
    key: i64,
    ehead: AtomicTaggedPtr<SnapEnode>,
    etail: AtomicPtr<SnapEnode>,
    next: AtomicTaggedPtr<SnapVnode>,
    iter_status: AtomicU8,
    recon_status: AtomicU8,
    /// Destination keys this vertex contributes, published by whichever
    /// helper resolves it first.
    resolved: AtomicPtr<Vec<i64>>,
}

impl SnapVnode {
    fn new(vnode: *mut VNode, key: i64) -> Self {
        SnapVnode {
            vnode,
            key,
            ehead: AtomicTaggedPtr::null(),
            etail: AtomicPtr::new(ptr::null_mut()),
            next: AtomicTaggedPtr::null(),
            iter_status: AtomicU8::new(IDLE),
            recon_status: AtomicU8::new(IDLE),
            resolved: AtomicPtr::new(ptr::null_mut()),
        }
    }

    /// Append `e` to this vertex's edge snap-chain unless the chain already
    /// moved past `e`'s key or is blocked.
    fn append_enode(
        &self,
        e: *mut ENode,
        pool: &NodePool,
        slot: usize,
        spare: &mut *mut SnapEnode,
    ) -> Result<(), Blocked> {
        let key = unsafe { (*e).key };
        loop {
            let mut last = self.etail.load(Ordering::Acquire);
            let mut link = if last.is_null() {
                &self.ehead
            } else {
                unsafe { &(*last).next }
            };
            loop {
                let l = link.load(Ordering::Acquire);
                if l.is_tagged() {
                    return Err(Blocked);
                }
                let t = l.target();
                if t.is_null() {
                    break;
                }
                last = t;
                link = unsafe { &(*t).next };
            }
            if !last.is_null() && unsafe { (*last).key } >= key {
                // A rival already carried the chain past this key.
                return Ok(());
            }
            if spare.is_null() {
                *spare = pool.alloc(
                    slot,
                    SnapEnode {
                        enode: e,
                        dest: unsafe { (*e).dest },
                        key,
                        next: AtomicTaggedPtr::null(),
                    },
                );
            } else {
                unsafe {
                    (**spare).enode = e;
                    (**spare).dest = (*e).dest;
                    (**spare).key = key;
                }
            }
            if link
                .compare_exchange(TaggedPtr::null(), TaggedPtr::new(*spare, false))
                .is_ok()
            {
                self.etail.store(*spare, Ordering::Release);
                *spare = ptr::null_mut();
                return Ok(());
            }
        }
    }

    /// Tag the final link so no further edge can be appended. Loops until
    /// the tag is in place, no matter who put it there.
    fn block_enodes(&self) {
        loop {
            let mut last = self.etail.load(Ordering::Acquire);
            let mut link = if last.is_null() {
                &self.ehead
            } else {
                unsafe { &(*last).next }
            };
            loop {
                let l = link.load(Ordering::Acquire);
                if l.is_tagged() {
                    return;
                }
                let t = l.target();
                if t.is_null() {
                    if link
                        .compare_exchange(TaggedPtr::null(), TaggedPtr::null().with_tag())
                        .is_ok()
                    {
                        return;
                    }
                    break;
                }
                last = t;
                link = unsafe { &(*t).next };
            }
            let _ = last;
        }
    }
}

impl Drop for SnapVnode {
    fn drop(&mut self) {
        let r = self.resolved.load(Ordering::Relaxed);
        if !r.is_null() {
            unsafe { drop(Box::from_raw(r)) };
        }
    }
}

struct Blocked;

struct Merged {
    v: Vec<(*mut VNode, ReportAction)>,
    e: Vec<(*mut ENode, *mut VNode, ReportAction)>,
}

pub(crate) struct SnapCollector {
    active: AtomicBool,
    /// False for the private collectors the independent engine allocates;
    /// nobody can join those, so pacing them would be pure overhead.
    shared: bool,
    vhead: AtomicTaggedPtr<SnapVnode>,
    vtail: AtomicPtr<SnapVnode>,
    /// Where the next helper should start scanning for an unclaimed edge
    /// chain. Purely an accelerator: it may lag or overshoot, the iterator
    /// passes remain the authority on completeness.
    iter_hint: AtomicPtr<SnapVnode>,
    v_reports: Box<[AtomicTaggedPtr<VReport>]>,
    e_reports: Box<[AtomicTaggedPtr<EReport>]>,
    merged: AtomicPtr<Merged>,
    /// Work allocator for reconstruction pass 0: each fetch_add hands out
    /// one chain index, so concurrent callers resolve disjoint vertices
    /// instead of racing down the same prefix.
    recon_cursor: AtomicUsize,
    /// Claimed by the first thread to start assembling the final result, so
    /// the others briefly wait instead of all building the same vectors.
    build_claim: AtomicU8,
    result: AtomicPtr<Snapshot>,
}

impl SnapCollector {
    fn alloc(pool: &NodePool, slot: usize, threads: usize, shared: bool) -> *mut SnapCollector {
        let v_reports = (0..threads).map(|_| AtomicTaggedPtr::null()).collect();
        let e_reports = (0..threads).map(|_| AtomicTaggedPtr::null()).collect();
        pool.alloc(
            slot,
            SnapCollector {
                active: AtomicBool::new(true),
                shared,
                vhead: AtomicTaggedPtr::null(),
                vtail: AtomicPtr::new(ptr::null_mut()),
                iter_hint: AtomicPtr::new(ptr::null_mut()),
                v_reports,
                e_reports,
                merged: AtomicPtr::new(ptr::null_mut()),
                recon_cursor: AtomicUsize::new(0),
                build_claim: AtomicU8::new(IDLE),
                result: AtomicPtr::new(ptr::null_mut()),
            },
        )
    }

    pub(crate) fn is_active(&self) -> bool {
        self.active.load(Ordering::Acquire)
    }

    fn append_vnode(
        &self,
        v: *mut VNode,
        pool: &NodePool,
        slot: usize,
        spare: &mut *mut SnapVnode,
    ) -> Result<(), Blocked> {
        let key = unsafe { (*v).key };
        loop {
            let mut last = self.vtail.load(Ordering::Acquire);
            let mut link = if last.is_null() {
                &self.vhead
            } else {
                unsafe { &(*last).next }
            };
            loop {
                let l = link.load(Ordering::Acquire);
                if l.is_tagged() {
                    return Err(Blocked);
                }
                let t = l.target();
                if t.is_null() {
                    break;
                }
                last = t;
                link = unsafe { &(*t).next };
            }
            if !last.is_null() && unsafe { (*last).key } >= key {
                return Ok(());
            }
            if spare.is_null() {
                *spare = pool.alloc(slot, SnapVnode::new(v, key));
            } else {
                unsafe {
                    (**spare).vnode = v;
                    (**spare).key = key;
                }
            }
            if link
                .compare_exchange(TaggedPtr::null(), TaggedPtr::new(*spare, false))
                .is_ok()
            {
                self.vtail.store(*spare, Ordering::Release);
                *spare = ptr::null_mut();
                return Ok(());
            }
        }
    }

    fn block_vnodes(&self) {
        loop {
            let mut last = self.vtail.load(Ordering::Acquire);
            let mut link = if last.is_null() {
                &self.vhead
            } else {
                unsafe { &(*last).next }
            };
            loop {
                let l = link.load(Ordering::Acquire);
                if l.is_tagged() {
                    return;
                }
                let t = l.target();
                if t.is_null() {
                    if link
                        .compare_exchange(TaggedPtr::null(), TaggedPtr::null().with_tag())
                        .is_ok()
                    {
                        return;
                    }
                    break;
                }
                last = t;
                link = unsafe { &(*t).next };
            }
            let _ = last;
        }
    }

    /// Tag every report slot so late reports are dropped instead of heard.
    /// A slot's owner can win at most one more push per attempt, so each
    /// inner loop settles quickly; the whole thing is idempotent.
    fn block_reports(&self) {
        for slot in self.v_reports.iter() {
            loop {
                let h = slot.load(Ordering::Acquire);
                if h.is_tagged() {
                    break;
                }
                if slot.compare_exchange(h, h.with_tag()).is_ok() {
                    break;
                }
            }
        }
        for slot in self.e_reports.iter() {
            loop {
                let h = slot.load(Ordering::Acquire);
                if h.is_tagged() {
                    break;
                }
                if slot.compare_exchange(h, h.with_tag()).is_ok() {
                    break;
                }
            }
        }
    }

    pub(crate) fn reports_blocked(&self) -> bool {
        self.v_reports
            .iter()
            .all(|s| s.load(Ordering::Acquire).is_tagged())
            && self
                .e_reports
                .iter()
                .all(|s| s.load(Ordering::Acquire).is_tagged())
    }

    pub(crate) fn report_count(&self) -> usize {
        let mut n = 0;
        for slot in self.v_reports.iter() {
            let mut r = slot.load(Ordering::Acquire).target();
            while !r.is_null() {
                n += 1;
                r = unsafe { (*r).next };
            }
        }
        for slot in self.e_reports.iter() {
            let mut r = slot.load(Ordering::Acquire).target();
            while !r.is_null() {
                n += 1;
                r = unsafe { (*r).next };
            }
        }
        n
    }

    /// Read all report chains into one published record. Must only run once
    /// every slot is blocked, at which point the chains are frozen and every
    /// helper reads the same thing.
    fn merge_reports(&self) -> &Merged {
        let cur = self.merged.load(Ordering::Acquire);
        if !cur.is_null() {
            return unsafe { &*cur };
        }
        let mut m = Merged {
            v: Vec::new(),
            e: Vec::new(),
        };
        for slot in self.v_reports.iter() {
            let mut r = slot.load(Ordering::Acquire).target();
            while !r.is_null() {
                unsafe {
                    m.v.push(((*r).vnode, (*r).action));
                    r = (*r).next;
                }
            }
        }
        for slot in self.e_reports.iter() {
            let mut r = slot.load(Ordering::Acquire).target();
            while !r.is_null() {
                unsafe {
                    m.e.push(((*r).enode, (*r).src, (*r).action));
                    r = (*r).next;
                }
            }
        }
        let fresh = Box::into_raw(Box::new(m));
        match self.merged.compare_exchange(
            ptr::null_mut(),
            fresh,
            Ordering::AcqRel,
            Ordering::Acquire,
        ) {
            Ok(_) => unsafe { &*fresh },
            Err(winner) => {
                unsafe { drop(Box::from_raw(fresh)) };
                unsafe { &*winner }
            }
        }
    }

    fn chain(&self) -> Vec<*mut SnapVnode> {
        let mut out = Vec::new();
        let mut p = self.vhead.load(Ordering::Acquire).target();
        while !p.is_null() {
            out.push(p);
            p = unsafe { (*p).next.load(Ordering::Acquire) }.target();
        }
        out
    }
}

impl Drop for SnapCollector {
    fn drop(&mut self) {
        let m = self.merged.load(Ordering::Relaxed);
        if !m.is_null() {
            unsafe { drop(Box::from_raw(m)) };
        }
        let r = self.result.load(Ordering::Relaxed);
        if !r.is_null() {
            unsafe { drop(Arc::from_raw(r as *const Snapshot)) };
        }
    }
}

impl Graph {
    /// Take a consistent snapshot of the whole graph.
    ///
    /// Threads that call this concurrently share one collector: each helps
    /// with whatever phase is unfinished and all of them return the same
    /// `Arc`. Progress does not depend on any single caller; a thread
    /// suspended mid-phase leaves only idempotent work behind.
    pub fn take_snapshot(&self, tid: Tid) -> Arc<Snapshot> {
        let scp = self.acquire_collector(tid);
        let sc = unsafe { &*scp };
        if sc.active.load(Ordering::Acquire) {
            self.collect_vnodes(sc, tid);
            self.stalls.reach(StallSite::AfterCollectVnodes, tid);
            self.run_iterator(sc, tid);
            sc.active.store(false, Ordering::Release);
        }
        sc.block_reports();
        self.reconstruct(sc, tid);
        let r = sc.result.load(Ordering::Acquire);
        debug_assert!(!r.is_null());
        unsafe {
            Arc::increment_strong_count(r as *const Snapshot);
            Arc::from_raw(r as *const Snapshot)
        }
    }

    /// Baseline engine: the same collection and reconstruction machinery
    /// run against a private collector that is never published. Nobody
    /// helps it and no reports reach it, so each caller redoes the whole
    /// walk alone; mutations concurrent with the walk may or may not be
    /// seen. Exact when the graph is quiescent.
    pub fn take_snapshot_independent(&self, tid: Tid) -> Arc<Snapshot> {
        let scp = SnapCollector::alloc(&self.pool, tid.as_usize(), 1, false);
        let sc = unsafe { &*scp };
        self.collect_vnodes(sc, tid);
        self.run_iterator(sc, tid);
        sc.active.store(false, Ordering::Release);
        sc.block_reports();
        self.reconstruct(sc, tid);
        let r = sc.result.load(Ordering::Acquire);
        debug_assert!(!r.is_null());
        unsafe {
            Arc::increment_strong_count(r as *const Snapshot);
            Arc::from_raw(r as *const Snapshot)
        }
    }

    /// Join the active collector or install a fresh one. When the install
    /// CAS loses, the winner's collector is used instead; it was published
    /// within this call's window, so helping it (even if it turns out to be
    /// already finished) yields a correctly ordered snapshot.
    fn acquire_collector(&self, tid: Tid) -> *mut SnapCollector {
        let cur = self.psc.load(Ordering::Acquire);
        if !cur.is_null() && unsafe { (*cur).active.load(Ordering::Acquire) } {
            return cur;
        }
        let fresh = SnapCollector::alloc(&self.pool, tid.as_usize(), self.thread_capacity(), true);
        match self
            .psc
            .compare_exchange(cur, fresh, Ordering::AcqRel, Ordering::Acquire)
        {
            Ok(_) => fresh,
            // The unused collector stays in the pool until the graph drops.
            Err(actual) => actual,
        }
    }

    /// Start the collection walk where the chain already ends rather than at
    /// the list head. Keys at or below the tail can never be appended again,
    /// so the skipped prefix could only have produced no-op appends. Links
    /// out of an unlinked node stay frozen and keep pointing up-key, so the
    /// walk still terminates, and any node such a frozen link bypasses was
    /// inserted after collection passed that position, which the insert
    /// report path covers.
    fn collect_resume_point(&self, sc: &SnapCollector) -> *mut VNode {
        let tail = sc.vtail.load(Ordering::Acquire);
        if tail.is_null() {
            unsafe { (*self.vh).vnext.load(Ordering::Acquire) }.target()
        } else {
            unsafe { (*tail).vnode }
        }
    }

    fn collect_vnodes(&self, sc: &SnapCollector, tid: Tid) {
        let mut spare: *mut SnapVnode = ptr::null_mut();
        let mut step = 0;
        let mut v = self.collect_resume_point(sc);
        while unsafe { (*v).key } != i64::MAX {
            pace(sc, &mut step);
            if !sc.active.load(Ordering::Relaxed) {
                return;
            }
            if !vnode_is_marked(v)
                && sc
                    .append_vnode(v, &self.pool, tid.as_usize(), &mut spare)
                    .is_err()
            {
                return;
            }
            v = unsafe { (*v).vnext.load(Ordering::Acquire) }.target();
        }
        sc.block_vnodes();
    }

    fn collect_enodes(&self, sv: &SnapVnode, tid: Tid) {
        let mut spare: *mut SnapEnode = ptr::null_mut();
        let mut e = unsafe { (*(*sv.vnode).ehead).enext.load(Ordering::Acquire) }.target();
        while unsafe { (*e).key } != i64::MAX {
            if !enode_is_marked(e)
                && sv
                    .append_enode(e, &self.pool, tid.as_usize(), &mut spare)
                    .is_err()
            {
                return;
            }
            e = unsafe { (*e).enext.load(Ordering::Acquire) }.target();
        }
        sv.block_enodes();
    }

    /// Two passes over the blocked vertex chain. Pass 0 claims idle entries
    /// so helpers spread out; pass 1 redoes anything a suspended claimer
    /// left unfinished. After any helper completes pass 1, every edge chain
    /// is collected and blocked.
    fn run_iterator(&self, sc: &SnapCollector, tid: Tid) {
        // Pass 0 takes claims. Starting at the shared hint instead of the
        // head keeps concurrent callers out of each other's way: each mostly
        // meets IDLE entries instead of re-walking everything the others
        // already claimed. The chain stopped growing before any caller got
        // here (collect_vnodes returns only once appends are blocked or the
        // collector went inactive), so hint-to-end plus one wrap from the
        // head visits every entry.
        let start = {
            let h = sc.iter_hint.load(Ordering::Acquire);
            if h.is_null() {
                sc.vhead.load(Ordering::Acquire).target()
            } else {
                h
            }
        };
        let mut step = 0;
        let mut p = start;
        let mut wrapped = false;
        while !p.is_null() && !(wrapped && p == start) {
            pace(sc, &mut step);
            if !sc.active.load(Ordering::Relaxed) {
                return;
            }
            let sv = unsafe { &*p };
            if sv
                .iter_status
                .compare_exchange(IDLE, CLAIMED, Ordering::AcqRel, Ordering::Acquire)
                .is_ok()
            {
                self.stalls.reach(StallSite::IteratorPass1Claim, tid);
                self.collect_enodes(sv, tid);
                sv.iter_status.store(DONE, Ordering::Release);
                sc.iter_hint
                    .store(sv.next.load(Ordering::Acquire).target(), Ordering::Release);
            }
            p = sv.next.load(Ordering::Acquire).target();
            if p.is_null() && !wrapped {
                wrapped = true;
                p = sc.vhead.load(Ordering::Acquire).target();
            }
        }
        // Pass 1 re-walks from the head and redoes anything not DONE, which
        // covers claimers that stalled after winning an entry.
        let mut p = sc.vhead.load(Ordering::Acquire).target();
        while !p.is_null() {
            pace(sc, &mut step);
            if !sc.active.load(Ordering::Relaxed) {
                return;
            }
            let sv = unsafe { &*p };
            if sv.iter_status.load(Ordering::Acquire) != DONE {
                self.collect_enodes(sv, tid);
                sv.iter_status.store(DONE, Ordering::Release);
            }
            p = sv.next.load(Ordering::Acquire).target();
        }
    }

    /// Decide membership from the frozen chains and reports, resolve each
    /// vertex's edges (cooperatively, same claim/help scheme as the
    /// iterator), and publish the result.
    fn reconstruct(&self, sc: &SnapCollector, tid: Tid) {
        if !sc.result.load(Ordering::Acquire).is_null() {
            return;
        }
        let merged = sc.merge_reports();

        let mut v_ins: HashSet<*mut VNode> = HashSet::new();
        let mut v_del: HashSet<*mut VNode> = HashSet::new();
        for &(v, action) in &merged.v {
            match action {
                ReportAction::Insert => {
                    v_ins.insert(v);
                }
                ReportAction::Delete => {
                    v_del.insert(v);
                }
            }
        }
        let mut e_del: HashSet<*mut ENode> = HashSet::new();
        let mut e_ins_by_src: HashMap<*mut VNode, Vec<*mut ENode>> = HashMap::new();
        for &(e, src, action) in &merged.e {
            match action {
                ReportAction::Insert => e_ins_by_src.entry(src).or_default().push(e),
                ReportAction::Delete => {
                    e_del.insert(e);
                }
            }
        }

        let chain = sc.chain();
        let collected: HashSet<*mut VNode> =
            chain.iter().map(|&sv| unsafe { (*sv).vnode }).collect();
        let in_snapshot = |v: *mut VNode| -> bool {
            !v.is_null()
                && !v_del.contains(&v)
                && (collected.contains(&v) || v_ins.contains(&v))
        };
        let resolve_and_publish = |sv: &SnapVnode| {
            if !in_snapshot(sv.vnode) {
                return;
            }
            let keys = resolve_vertex_edges(sv, &e_del, &e_ins_by_src, &in_snapshot);
            let fresh = Box::into_raw(Box::new(keys));
            if sv
                .resolved
                .compare_exchange(ptr::null_mut(), fresh, Ordering::AcqRel, Ordering::Acquire)
                .is_err()
            {
                unsafe { drop(Box::from_raw(fresh)) };
            }
        };

        // Pass 0 hands out chain indices through the shared cursor, so
        // concurrent callers resolve disjoint vertices with no scanning at
        // all. Pass 1 re-walks the chain and redoes whatever is not DONE,
        // covering claimers that stalled mid-vertex.
        loop {
            if !sc.result.load(Ordering::Acquire).is_null() {
                return;
            }
            let i = sc.recon_cursor.fetch_add(1, Ordering::AcqRel);
            if i >= chain.len() {
                break;
            }
            let sv = unsafe { &*chain[i] };
            if sv
                .recon_status
                .compare_exchange(IDLE, CLAIMED, Ordering::AcqRel, Ordering::Acquire)
                .is_err()
            {
                continue;
            }
            self.stalls.reach(StallSite::ReconstructionPass1Claim, tid);
            resolve_and_publish(sv);
            sv.recon_status.store(DONE, Ordering::Release);
        }
        for &svp in &chain {
            if !sc.result.load(Ordering::Acquire).is_null() {
                return;
            }
            let sv = unsafe { &*svp };
            if sv.recon_status.load(Ordering::Acquire) != DONE {
                resolve_and_publish(sv);
                sv.recon_status.store(DONE, Ordering::Release);
            }
        }

        // One thread assembles the final vectors; the rest sleep in short
        // ticks while they wait for it (spinning here would steal the core
        // from the assembler), then fall through and build redundantly so a
        // suspended assembler can never block them.
        let mut builder = true;
        if sc
            .build_claim
            .compare_exchange(IDLE, CLAIMED, Ordering::AcqRel, Ordering::Acquire)
            .is_err()
        {
            builder = false;
            let w0 = std::time::Instant::now();
            for _ in 0..250 {
                if !sc.result.load(Ordering::Acquire).is_null() {
                    diag::WAIT_NS.fetch_add(w0.elapsed().as_nanos() as u64, Ordering::Relaxed);
                    return;
                }
                std::thread::sleep(std::time::Duration::from_micros(20));
            }
            diag::WAIT_NS.fetch_add(w0.elapsed().as_nanos() as u64, Ordering::Relaxed);
            diag::REDUNDANT_BUILDS.fetch_add(1, Ordering::Relaxed);
        }
        let b0 = std::time::Instant::now();

        let mut out: BTreeMap<i64, BTreeSet<i64>> = BTreeMap::new();
        for &svp in &chain {
            if !sc.result.load(Ordering::Acquire).is_null() {
                return;
            }
            let sv = unsafe { &*svp };
            if !in_snapshot(sv.vnode) {
                continue;
            }
            let entry = out.entry(sv.key).or_default();
            let r = sv.resolved.load(Ordering::Acquire);
            if !r.is_null() {
                for k in unsafe { &*r } {
                    entry.insert(*k);
                }
            }
        }
        // Vertices that were only ever insert-reported (added after the
        // collection pass went by) have no chain entry; their edges can only
        // come from edge insert reports.
        for &v in &v_ins {
            if v_del.contains(&v) || collected.contains(&v) {
                continue;
            }
            let entry = out.entry(unsafe { (*v).key }).or_default();
            if let Some(es) = e_ins_by_src.get(&v) {
                for &e in es {
                    if e_del.contains(&e) {
                        continue;
                    }
                    if in_snapshot(unsafe { (*e).dest }) {
                        entry.insert(unsafe { (*e).key });
                    }
                }
            }
        }

        let vertices: Vec<i64> = out.keys().copied().collect();
        let edges: Vec<Vec<i64>> = out.values().map(|s| s.iter().copied().collect()).collect();
        let raw = Arc::into_raw(Arc::new(Snapshot { vertices, edges })) as *mut Snapshot;
        if builder {
            diag::BUILD_NS.fetch_add(b0.elapsed().as_nanos() as u64, Ordering::Relaxed);
        }
        match sc
            .result
            .compare_exchange(ptr::null_mut(), raw, Ordering::AcqRel, Ordering::Acquire)
        {
            Ok(_) => {
                diag::PUBS.fetch_add(1, Ordering::Relaxed);
                diag::SPAN_PUB_NS.fetch_add(
                    diag_now_ns().saturating_sub(sc.t_alloc_ns.load(Ordering::Relaxed)),
                    Ordering::Relaxed,
                );
            }
            Err(_) => unsafe { drop(Arc::from_raw(raw as *const Snapshot)) },
        }
    }

    /// A bounded donation of collector work, made by every point operation
    /// on its way in. While a collector is active the operation pushes at
    /// most `HELP_COLLECT_NODES` list nodes onto the collection front and
    /// claims at most `HELP_CLAIMS` edge chains, then goes back to its own
    /// business. The snapshot callers still drive every phase to completion
    /// themselves; the donations only move work off the snapshot's critical
    /// path and into the operation stream, which is what lets concurrent
    /// callers see latencies that grow slower than the thread count. With no
    /// active collector this is one load.
    pub(crate) fn lend_hand(&self, tid: Tid) {
        let scp = self.psc.load(Ordering::Acquire);
        if scp.is_null() {
            return;
        }
        let sc = unsafe { &*scp };
        if !sc.active.load(Ordering::Acquire) {
            return;
        }

        let mut spare: *mut SnapVnode = ptr::null_mut();
        let mut v = self.collect_resume_point(sc);
        let mut budget = HELP_COLLECT_NODES;
        while budget > 0 && unsafe { (*v).key } != i64::MAX {
            if !sc.active.load(Ordering::Relaxed) {
                return;
            }
            if !vnode_is_marked(v)
                && sc
                    .append_vnode(v, &self.pool, tid.as_usize(), &mut spare)
                    .is_err()
            {
                break;
            }
            v = unsafe { (*v).vnext.load(Ordering::Acquire) }.target();
            budget -= 1;
        }
        if budget > 0 && unsafe { (*v).key } == i64::MAX {
            sc.block_vnodes();
        }

        let mut p = sc.iter_hint.load(Ordering::Acquire);
        if p.is_null() {
            p = sc.vhead.load(Ordering::Acquire).target();
        }
        let mut claims = HELP_CLAIMS;
        let mut scan = HELP_SCAN;
        while claims > 0 && scan > 0 && !p.is_null() {
            if !sc.active.load(Ordering::Relaxed) {
                return;
            }
            let sv = unsafe { &*p };
            if sv
                .iter_status
                .compare_exchange(IDLE, CLAIMED, Ordering::AcqRel, Ordering::Acquire)
                .is_ok()
            {
                self.collect_enodes(sv, tid);
                sv.iter_status.store(DONE, Ordering::Release);
                claims -= 1;
            }
            scan -= 1;
            p = sv.next.load(Ordering::Acquire).target();
        }
        sc.iter_hint.store(p, Ordering::Release);
    }

    /// Forward a vertex observation to the active collector, if any. Filed
    /// by point operations at their decision points; a blocked slot or an
    /// inactive collector swallows the report (the operation then linearizes
    /// after the snapshot).
    pub(crate) fn report_vertex(&self, v: *mut VNode, action: ReportAction, tid: Tid) {
        let scp = self.psc.load(Ordering::Acquire);
        if scp.is_null() {
            return;
        }
        let sc = unsafe { &*scp };
        if !sc.active.load(Ordering::Acquire) {
            return;
        }
        let slot = &sc.v_reports[tid.as_usize()];
        let mut rep: *mut VReport = ptr::null_mut();
        loop {
            let head = slot.load(Ordering::Acquire);
            if head.is_tagged() {
                return;
            }
            let h = head.target();
            if !h.is_null() && unsafe { (*h).vnode == v && (*h).action == action } {
                return;
            }
            if rep.is_null() {
                rep = self.pool.alloc(
                    tid.as_usize(),
                    VReport {
                        vnode: v,
                        action,
                        next: ptr::null_mut(),
                    },
                );
            }
            unsafe { (*rep).next = h };
            if slot.compare_exchange(head, TaggedPtr::new(rep, false)).is_ok() {
                return;
            }
        }
    }

    pub(crate) fn report_edge(
        &self,
        e: *mut ENode,
        src: *mut VNode,
        action: ReportAction,
        tid: Tid,
    ) {
        let scp = self.psc.load(Ordering::Acquire);
        if scp.is_null() {
            return;
        }
        let sc = unsafe { &*scp };
        if !sc.active.load(Ordering::Acquire) {
            return;
        }
        let slot = &sc.e_reports[tid.as_usize()];
        let mut rep: *mut EReport = ptr::null_mut();
        loop {
            let head = slot.load(Ordering::Acquire);
            if head.is_tagged() {
                return;
            }
            let h = head.target();
            if !h.is_null()
                && unsafe { (*h).enode == e && (*h).src == src && (*h).action == action }
            {
                return;
            }
            if rep.is_null() {
                rep = self.pool.alloc(
                    tid.as_usize(),
                    EReport {
                        enode: e,
                        src,
                        action,
                        next: ptr::null_mut(),
                    },
                );
            }
            unsafe { (*rep).next = h };
            if slot.compare_exchange(head, TaggedPtr::new(rep, false)).is_ok() {
                return;
            }
        }
    }

    /// The collector currently published, for test probes.
    pub(crate) fn current_collector(&self) -> *mut SnapCollector {
        self.psc.load(Ordering::Acquire)
    }

    /// Raw push attempts against the current collector's report slots,
    /// deliberately skipping the active-flag guard so the attempts land on
    /// the slot CAS itself. Returns how many pushes succeeded. Harness-only:
    /// meant for hammering a frozen collector, where the answer must be 0.
    pub(crate) fn forced_report_attempts(&self, key: i64, tid: Tid, n: usize) -> usize {
        let scp = self.psc.load(Ordering::Acquire);
        if scp.is_null() {
            return 0;
        }
        let sc = unsafe { &*scp };
        let (_, cv) = self.loc_c(self.vh, key);
        let slot = tid.as_usize();
        let mut landed = 0;
        for i in 0..n {
            if i % 2 == 0 {
                let s = &sc.v_reports[slot];
                let head = s.load(Ordering::Acquire);
                if head.is_tagged() {
                    continue;
                }
                let rep = self.pool.alloc(
                    slot,
                    VReport {
                        vnode: cv,
                        action: ReportAction::Insert,
                        next: head.target(),
                    },
                );
                if s.compare_exchange(head, TaggedPtr::new(rep, false)).is_ok() {
                    landed += 1;
                }
            } else {
                let s = &sc.e_reports[slot];
                let head = s.load(Ordering::Acquire);
                if head.is_tagged() {
                    continue;
                }
                let rep = self.pool.alloc(
                    slot,
                    EReport {
                        enode: unsafe { (*cv).ehead },
                        src: cv,
                        action: ReportAction::Insert,
                        next: head.target(),
                    },
                );
                if s.compare_exchange(head, TaggedPtr::new(rep, false)).is_ok() {
                    landed += 1;
                }
            }
        }
        landed
    }
}

fn resolve_vertex_edges<F: Fn(*mut VNode) -> bool>(
    sv: &SnapVnode,
    e_del: &HashSet<*mut ENode>,
    e_ins_by_src: &HashMap<*mut VNode, Vec<*mut ENode>>,
    in_snapshot: &F,
) -> Vec<i64> {
    let mut keys = BTreeSet::new();
    let mut p = sv.ehead.load(Ordering::Acquire).target();
    while !p.is_null() {
        let se = unsafe { &*p };
        if !e_del.contains(&se.enode) && in_snapshot(se.dest) {
            keys.insert(se.key);
        }
        p = se.next.load(Ordering::Acquire).target();
    }
    if let Some(es) = e_ins_by_src.get(&sv.vnode) {
        for &e in es {
            if !e_del.contains(&e) && in_snapshot(unsafe { (*e).dest }) {
                keys.insert(unsafe { (*e).key });
            }
        }
    }
    keys.into_iter().collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stall::{ReleaseMode, StallSite};
    use std::thread;
    use std::time::Duration;

    #[test]
    fn empty_graph_snapshot_is_empty() {
        let g = Graph::with_max_threads(4);
        let t = g.register_thread().unwrap();
        let s = g.take_snapshot(t);
        assert!(s.is_empty());
        assert_eq!(s.edge_count(), 0);
    }

    #[test]
    fn quiescent_snapshot_matches_direct_read() {
        let mut g = Graph::with_max_threads(4);
        let t = g.register_thread().unwrap();
        for k in [4, 9, 2, 7, 5] {
            g.add_vertex(k, t);
        }
        for (a, b) in [(2, 4), (4, 7), (7, 2), (9, 5), (5, 9), (2, 9)] {
            g.add_edge(a, b, t);
        }
        g.remove_vertex(7, t);
        g.remove_edge(5, 9, t);
        let snap = g.take_snapshot(t);
        assert_eq!(*snap, g.quiescent_state());
        assert_eq!(snap.vertices, vec![2, 4, 5, 9]);
        assert_eq!(snap.edge_pairs(), vec![(2, 4), (2, 9), (9, 5)]);
    }

    #[test]
    fn consecutive_snapshots_use_fresh_collectors() {
        let mut g = Graph::with_max_threads(4);
        let t = g.register_thread().unwrap();
        g.add_vertex(1, t);
        let s1 = g.take_snapshot(t);
        g.add_vertex(2, t);
        let s2 = g.take_snapshot(t);
        assert_eq!(s1.vertices, vec![1]);
        assert_eq!(s2.vertices, vec![1, 2]);
        assert_eq!(*s2, g.quiescent_state());
    }

    #[test]
    fn randomized_quiescent_agreement() {
        let mut g = Graph::with_max_threads(4);
        let t = g.register_thread().unwrap();
        // Cheap deterministic mixer, enough to scramble op choices here.
        let mut state = 0x9e3779b97f4a7c15u64;
        let mut next = move || {
            state ^= state << 13;
            state ^= state >> 7;
            state ^= state << 17;
            state
        };
        for _ in 0..600 {
            let k = (next() % 12) as i64;
            let l = (next() % 12) as i64;
            match next() % 5 {
                0 => {
                    g.add_vertex(k, t);
                }
                1 => {
                    g.remove_vertex(k, t);
                }
                2 if k != l => {
                    g.add_edge(k, l, t);
                }
                3 if k != l => {
                    g.remove_edge(k, l, t);
                }
                _ => {
                    g.contains_vertex(k, t);
                }
            }
        }
        let snap = g.take_snapshot(t);
        assert_eq!(*snap, g.quiescent_state());
    }

    #[test]
    fn snapshot_excludes_edges_into_dead_generations() {
        let g = Graph::with_max_threads(4);
        let t = g.register_thread().unwrap();
        g.add_vertex(1, t);
        g.add_vertex(2, t);
        g.add_edge(1, 2, t);
        g.remove_vertex(2, t);
        g.add_vertex(2, t);
        let s = g.take_snapshot(t);
        assert_eq!(s.vertices, vec![1, 2]);
        assert_eq!(s.edge_count(), 0);
    }

    #[test]
    fn stalled_initiator_gets_the_cooperative_result() {
        let g = Graph::with_max_threads(8);
        let t0 = g.register_thread().unwrap();
        let t1 = g.register_thread().unwrap();
        let t2 = g.register_thread().unwrap();
        for k in 0..20 {
            g.add_vertex(k, t0);
        }
        for k in 0..19 {
            g.add_edge(k, k + 1, t0);
        }
        let stall = g.arm_stall(StallSite::AfterCollectVnodes, t1, ReleaseMode::Manual);
        thread::scope(|s| {
            let victim = s.spawn(|| g.take_snapshot(t1));
            assert!(stall.wait_triggered(Duration::from_secs(10)));
            // The victim sleeps with the vertex chain blocked. These
            // mutations are invisible to collection and must flow in purely
            // through reports.
            g.add_vertex(100, t0);
            g.remove_vertex(3, t0);
            let helper_snap = g.take_snapshot(t2);
            stall.release();
            let victim_snap = victim.join().unwrap();
            assert!(Arc::ptr_eq(&victim_snap, &helper_snap));
            assert!(helper_snap.vertices.contains(&100));
            assert!(!helper_snap.vertices.contains(&3));
            // Edge (2,3) and (3,4) died with vertex 3.
            let pairs = helper_snap.edge_pairs();
            assert!(!pairs.contains(&(2, 3)));
            assert!(!pairs.contains(&(3, 4)));
            assert!(pairs.contains(&(4, 5)));
        });
    }

    #[test]
    fn helpers_cover_a_claim_that_never_finishes() {
        let g = Graph::with_max_threads(8);
        let t0 = g.register_thread().unwrap();
        let t1 = g.register_thread().unwrap();
        let t2 = g.register_thread().unwrap();
        for k in 0..10 {
            g.add_vertex(k, t0);
            if k > 0 {
                g.add_edge(k - 1, k, t0);
            }
        }
        let stall = g.arm_stall(StallSite::IteratorPass1Claim, t1, ReleaseMode::Manual);
        thread::scope(|s| {
            let victim = s.spawn(|| g.take_snapshot(t1));
            assert!(stall.wait_triggered(Duration::from_secs(10)));
            // t1 holds a claimed, uncollected vertex. The helper's second
            // pass must redo that vertex's edges for the snapshot to be
            // complete.
            let helper_snap = g.take_snapshot(t2);
            assert_eq!(helper_snap.vertices, (0..10).collect::<Vec<i64>>());
            assert_eq!(helper_snap.edge_count(), 9);
            stall.release();
            let victim_snap = victim.join().unwrap();
            assert!(Arc::ptr_eq(&victim_snap, &helper_snap));
        });
    }

    #[test]
    fn reconstruction_claim_is_covered_too() {
        let g = Graph::with_max_threads(8);
        let t0 = g.register_thread().unwrap();
        let t1 = g.register_thread().unwrap();
        let t2 = g.register_thread().unwrap();
        for k in 0..6 {
            g.add_vertex(k, t0);
        }
        g.add_edge(0, 5, t0);
        g.add_edge(5, 0, t0);
        // Park the helper inside the collector first (while it is active),
        // otherwise a later take_snapshot would start a fresh collector
        // instead of finishing this one.
        let helper_stall = g.arm_stall(StallSite::AfterCollectVnodes, t2, ReleaseMode::Manual);
        let victim_stall = g.arm_stall(
            StallSite::ReconstructionPass1Claim,
            t1,
            ReleaseMode::Manual,
        );
        thread::scope(|s| {
            let helper = s.spawn(|| g.take_snapshot(t2));
            assert!(helper_stall.wait_triggered(Duration::from_secs(10)));
            let victim = s.spawn(|| g.take_snapshot(t1));
            // The victim drives the snapshot to reconstruction and parks
            // holding a claimed vertex.
            assert!(victim_stall.wait_triggered(Duration::from_secs(10)));
            // The helper wakes into a deactivated collector and must finish
            // the claimed vertex itself to publish the result.
            helper_stall.release();
            let helper_snap = helper.join().unwrap();
            assert_eq!(helper_snap.vertices, (0..6).collect::<Vec<i64>>());
            assert_eq!(helper_snap.edge_pairs(), vec![(0, 5), (5, 0)]);
            victim_stall.release();
            let victim_snap = victim.join().unwrap();
            assert!(Arc::ptr_eq(&victim_snap, &helper_snap));
        });
    }

    #[test]
    fn finished_collector_rejects_new_reports() {
        let g = Graph::with_max_threads(4);
        let t = g.register_thread().unwrap();
        for k in 0..5 {
            g.add_vertex(k, t);
        }
        let _ = g.take_snapshot(t);
        let sc = unsafe { &*g.current_collector() };
        assert!(!sc.is_active());
        assert!(sc.reports_blocked());
        let before = sc.report_count();
        // Operations keep running; none of them may land a report in the
        // finished collector.
        g.add_vertex(50, t);
        g.remove_vertex(2, t);
        g.contains_vertex(0, t);
        assert_eq!(sc.report_count(), before);
    }

    #[test]
    fn baseline_engine_is_exact_when_quiescent() {
        let mut g = Graph::with_max_threads(4);
        let t = g.register_thread().unwrap();
        for k in [3, 1, 4, 1, 5, 9, 2, 6] {
            g.add_vertex(k, t);
        }
        for (a, b) in [(3, 1), (1, 4), (4, 3), (9, 2), (2, 6)] {
            g.add_edge(a, b, t);
        }
        g.remove_vertex(4, t);
        let s = g.take_snapshot_independent(t);
        assert_eq!(*s, g.quiescent_state());
        let s2 = g.take_snapshot(t);
        assert_eq!(*s, *s2);
    }

    #[test]
    fn adjacency_text_is_line_per_vertex() {
        let g = Graph::with_max_threads(4);
        let t = g.register_thread().unwrap();
        for k in [1, 2, 3] {
            g.add_vertex(k, t);
        }
        g.add_edge(1, 2, t);
        g.add_edge(1, 3, t);
        g.add_edge(3, 1, t);
        let s = g.take_snapshot(t);
        assert_eq!(s.to_adjacency_text(), "1: 2 3\n2:\n3: 1\n");
    }

    #[test]
    fn concurrent_snapshots_and_mutations_agree_per_collector() {
        let g = std::sync::Arc::new(Graph::with_max_threads(8));
        let mut tids = Vec::new();
        for _ in 0..6 {
            tids.push(g.register_thread().unwrap());
        }
        for k in 0..40 {
            g.add_vertex(k, tids[0]);
        }
        for k in 0..39 {
            g.add_edge(k, k + 1, tids[0]);
        }
        thread::scope(|s| {
            let mut snap_handles = Vec::new();
            for w in 0..4 {
                let g = &g;
                let tid = tids[w];
                snap_handles.push(s.spawn(move || {
                    let mut snaps = Vec::new();
                    for _ in 0..30 {
                        snaps.push(g.take_snapshot(tid));
                        thread::yield_now();
                    }
                    snaps
                }));
            }
            for w in 4..6 {
                let g = &g;
                let tid = tids[w];
                s.spawn(move || {
                    for i in 0..400i64 {
                        let k = 40 + (i % 25);
                        if i % 2 == 0 {
                            g.add_vertex(k, tid);
                        } else {
                            g.remove_vertex(k, tid);
                        }
                        if i % 7 == 0 {
                            g.add_edge(i % 40, (i + 1) % 40, tid);
                        }
                        thread::yield_now();
                    }
                });
            }
            let all: Vec<_> = snap_handles.into_iter().flat_map(|h| h.join().unwrap()).collect();
            // Snapshots from the same collector are literally the same Arc;
            // distinct results must each be internally consistent.
            for s in &all {
                assert_eq!(s.vertices.len(), s.edges.len());
                assert!(s.vertices.windows(2).all(|w| w[0] < w[1]));
                for dests in &s.edges {
                    assert!(dests.windows(2).all(|w| w[0] < w[1]));
                    for d in dests {
                        assert!(s.vertices.binary_search(d).is_ok());
                    }
                }
            }
        });
    }
}
