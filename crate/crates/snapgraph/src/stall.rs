//! Instrumented stall sites.
//!
//! Progress-under-failure tests need to freeze a specific thread at a
//! specific algorithmic step and watch the survivors finish the job. The
//! graph and snapshot code call [`StallHub::reach`] at a handful of named
//! sites; a test arms a rule for (site, victim tid) and the victim parks
//! there until released. With nothing armed the hook is a single relaxed
//! atomic load, cheap enough to leave compiled in for every build.

use std::sync::atomic::{AtomicBool, AtomicUsize, Ordering};
use std::sync::{Arc, Condvar, Mutex};
use std::time::Duration;

use crate::registry::Tid;

/// The steps a test may freeze a thread at.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum StallSite {
    /// Vertex collection finished, edge iteration not yet started.
    AfterCollectVnodes,
    /// An iterator pass-1 claim succeeded (status moved IDLE -> ACTIVE) and
    /// the claimer has collected nothing yet.
    IteratorPass1Claim,
    /// A reconstruction pass-1 claim succeeded, edge rule not yet evaluated.
    ReconstructionPass1Claim,
    /// A vertex was logically deleted (marked) but not yet unlinked.
    RemoveVertexPreUnlink,
}

impl StallSite {
    pub const ALL: [StallSite; 4] = [
        StallSite::AfterCollectVnodes,
        StallSite::IteratorPass1Claim,
        StallSite::ReconstructionPass1Claim,
        StallSite::RemoveVertexPreUnlink,
    ];

    /// Sites a snapshot caller passes through; the helping protocol must make
    /// progress with a victim frozen at any of these.
    pub const SNAPSHOT_SITES: [StallSite; 3] = [
        StallSite::AfterCollectVnodes,
        StallSite::IteratorPass1Claim,
        StallSite::ReconstructionPass1Claim,
    ];

    pub fn name(self) -> &'static str {
        match self {
            StallSite::AfterCollectVnodes => "after-collect-vnodes",
            StallSite::IteratorPass1Claim => "iterator-pass1-claim",
            StallSite::ReconstructionPass1Claim => "reconstruction-pass1-claim",
            StallSite::RemoveVertexPreUnlink => "remove-vertex-pre-unlink",
        }
    }
}

/// How an armed stall eventually lets its victim go.
#[derive(Debug, Clone, Copy)]
pub enum ReleaseMode {
    /// Only an explicit [`StallHandle::release`] wakes the victim.
    Manual,
    /// The victim frees itself after this long; "stalled forever" as far as
    /// any shorter-budget assertion is concerned, but tests still join.
    After(Duration),
}

struct StallState {
    released: Mutex<bool>,
    cond: Condvar,
    triggered: AtomicBool,
    hit_once: AtomicBool,
}

struct Rule {
    site: StallSite,
    victim: Tid,
    mode: ReleaseMode,
    state: Arc<StallState>,
}

/// Test-side handle to one armed stall.
pub struct StallHandle {
    state: Arc<StallState>,
}

impl StallHandle {
    /// Wake the victim (idempotent).
    pub fn release(&self) {
        let mut done = self.state.released.lock().unwrap();
        *done = true;
        self.state.cond.notify_all();
    }

    /// True once the victim has parked at the site.
    pub fn triggered(&self) -> bool {
        self.state.triggered.load(Ordering::Acquire)
    }

    /// Block until the victim parks, up to `timeout`. Returns whether it did.
    pub fn wait_triggered(&self, timeout: Duration) -> bool {
        let deadline = std::time::Instant::now() + timeout;
        while !self.triggered() {
            if std::time::Instant::now() >= deadline {
                return false;
            }
            std::thread::yield_now();
        }
        true
    }
}

pub(crate) struct StallHub {
    armed: AtomicUsize,
    rules: Mutex<Vec<Rule>>,
}

impl StallHub {
    pub(crate) fn new() -> Self {
        StallHub {
            armed: AtomicUsize::new(0),
            rules: Mutex::new(Vec::new()),
        }
    }

    pub(crate) fn arm(&self, site: StallSite, victim: Tid, mode: ReleaseMode) -> StallHandle {
        let state = Arc::new(StallState {
            released: Mutex::new(false),
            cond: Condvar::new(),
            triggered: AtomicBool::new(false),
            hit_once: AtomicBool::new(false),
        });
        self.rules.lock().unwrap().push(Rule {
            site,
            victim,
            mode,
            state: Arc::clone(&state),
        });
        self.armed.fetch_add(1, Ordering::Release);
        StallHandle { state }
    }

    /// Called by graph/snapshot code. Parks iff a matching un-hit rule is
    /// armed for (site, tid); each rule fires at most once.
    pub(crate) fn reach(&self, site: StallSite, tid: Tid) {
        if self.armed.load(Ordering::Relaxed) == 0 {
            return;
        }
        let hit = {
            let rules = self.rules.lock().unwrap();
            rules
                .iter()
                .find(|r| {
                    r.site == site
                        && r.victim == tid
                        && !r.state.hit_once.swap(true, Ordering::AcqRel)
                })
                .map(|r| (Arc::clone(&r.state), r.mode))
        };
        let Some((state, mode)) = hit else { return };
        state.triggered.store(true, Ordering::Release);
        let mut done = state.released.lock().unwrap();
        match mode {
            ReleaseMode::Manual => {
                while !*done {
                    done = state.cond.wait(done).unwrap();
                }
            }
            ReleaseMode::After(limit) => {
                let deadline = std::time::Instant::now() + limit;
                while !*done {
                    let now = std::time::Instant::now();
                    if now >= deadline {
                        break;
                    }
                    let (guard, _) = state.cond.wait_timeout(done, deadline - now).unwrap();
                    done = guard;
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::sync::atomic::AtomicBool;
    use std::thread;

    #[test]
    fn unarmed_hook_is_a_noop() {
        let hub = StallHub::new();
        hub.reach(StallSite::AfterCollectVnodes, Tid(0));
    }

    #[test]
    fn victim_parks_until_released_and_others_pass() {
        let hub = Arc::new(StallHub::new());
        let handle = hub.arm(StallSite::IteratorPass1Claim, Tid(1), ReleaseMode::Manual);

        let passed = Arc::new(AtomicBool::new(false));
        let victim = {
            let hub = Arc::clone(&hub);
            let passed = Arc::clone(&passed);
            thread::spawn(move || {
                hub.reach(StallSite::IteratorPass1Claim, Tid(1));
                passed.store(true, Ordering::SeqCst);
            })
        };
        assert!(handle.wait_triggered(Duration::from_secs(5)));
        // Wrong tid and wrong site sail through while the victim is parked.
        hub.reach(StallSite::IteratorPass1Claim, Tid(0));
        hub.reach(StallSite::AfterCollectVnodes, Tid(1));
        assert!(!passed.load(Ordering::SeqCst));

        handle.release();
        victim.join().unwrap();
        assert!(passed.load(Ordering::SeqCst));

        // The rule fired once; the same thread passes freely now.
        hub.reach(StallSite::IteratorPass1Claim, Tid(1));
    }

    #[test]
    fn timeout_release_frees_the_victim() {
        let hub = StallHub::new();
        let _handle = hub.arm(
            StallSite::RemoveVertexPreUnlink,
            Tid(0),
            ReleaseMode::After(Duration::from_millis(20)),
        );
        let start = std::time::Instant::now();
        hub.reach(StallSite::RemoveVertexPreUnlink, Tid(0));
        assert!(start.elapsed() >= Duration::from_millis(20));
    }
}
