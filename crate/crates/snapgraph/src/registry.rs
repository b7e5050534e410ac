//! Thread registration.
//!
//! Snapshot report slots and allocation ledgers are arrays indexed by a small
//! dense thread id, so every thread that touches a graph first claims one.
//! Ids are handed out once and never recycled; a graph built for `n` threads
//! refuses the `n+1`-th registration rather than wrapping.

use std::fmt;
use std::sync::atomic::{AtomicUsize, Ordering};

/// Default registration capacity for `Graph::new`.
pub const DEFAULT_MAX_THREADS: usize = 128;

/// Dense per-graph thread id in `[0, max_threads)`.
///
/// Obtainable only from [`ThreadRegistry::register`], which keeps slot
/// indexing in bounds by construction.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Tid(pub(crate) usize);

impl Tid {
    pub fn as_usize(self) -> usize {
        self.0
    }
}

impl fmt::Display for Tid {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "t{}", self.0)
    }
}

/// All thread slots are taken.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RegistryFull {
    pub capacity: usize,
}

impl fmt::Display for RegistryFull {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "thread registry exhausted (capacity {})", self.capacity)
    }
}

impl std::error::Error for RegistryFull {}

pub struct ThreadRegistry {
    next: AtomicUsize,
    capacity: usize,
}

impl ThreadRegistry {
    pub fn new(capacity: usize) -> Self {
        assert!(capacity > 0, "registry needs at least one slot");
        ThreadRegistry {
            next: AtomicUsize::new(0),
            capacity,
        }
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    /// Claim the next free id. A CAS loop rather than `fetch_add` so the
    /// counter can never run past `capacity`, no matter how many threads race
    /// an exhausted registry.
    pub fn register(&self) -> Result<Tid, RegistryFull> {
        let mut cur = self.next.load(Ordering::Acquire);
        loop {
            if cur >= self.capacity {
                return Err(RegistryFull {
                    capacity: self.capacity,
                });
            }
            match self.next.compare_exchange_weak(
                cur,
                cur + 1,
                Ordering::AcqRel,
                Ordering::Acquire,
            ) {
                Ok(_) => return Ok(Tid(cur)),
                Err(seen) => cur = seen,
            }
        }
    }
}
