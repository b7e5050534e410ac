//! Deferred memory reclamation.
//!
//! Traversals hold raw pointers to nodes that rivals may unlink at any
//! moment, so unlinked memory must outlive every reader. The policy here is
//! the simplest sound one: every allocation made on behalf of a graph is
//! recorded in a per-thread ledger and freed only when the graph itself is
//! dropped, which is a quiescent point by `&mut`/ownership. Nothing is freed
//! while concurrent operations can run, so no reader is ever invalidated and
//! unlink CASes are immune to address reuse.
//!
//! The cost is that memory grows monotonically for the graph's lifetime.
//! That is an explicit trade: long benchmark runs size their duration with
//! this in mind.

use std::sync::Mutex;

struct Retired {
    ptr: *mut u8,
    drop_fn: unsafe fn(*mut u8),
}

unsafe impl Send for Retired {}

unsafe fn drop_box<T>(p: *mut u8) {
    drop(Box::from_raw(p as *mut T));
}

/// One ledger per registered thread plus one for single-threaded setup paths
/// (constructor, quiescent maintenance). The per-slot mutex is uncontended in
/// correct use — only the owning thread pushes to its slot — but keeps the
/// API safe even if a thread id is misused.
pub(crate) struct NodePool {
    slots: Box<[Mutex<Vec<Retired>>]>,
}

impl NodePool {
    pub(crate) fn new(threads: usize) -> Self {
        let slots = (0..threads + 1)
            .map(|_| Mutex::new(Vec::new()))
            .collect::<Vec<_>>()
            .into_boxed_slice();
        NodePool { slots }
    }

    /// Slot index reserved for code paths that own the graph exclusively.
    pub(crate) fn setup_slot(&self) -> usize {
        self.slots.len() - 1
    }

    /// Heap-allocate `value` and record it for reclamation at graph teardown.
    /// The returned pointer stays valid until the pool is dropped, even after
    /// the node is unlinked from every structure.
    pub(crate) fn alloc<T>(&self, slot: usize, value: T) -> *mut T {
        let ptr = Box::into_raw(Box::new(value));
        self.slots[slot].lock().unwrap().push(Retired {
            ptr: ptr as *mut u8,
            drop_fn: drop_box::<T>,
        });
        ptr
    }

    #[cfg(test)]
    pub(crate) fn tracked(&self) -> usize {
        self.slots.iter().map(|s| s.lock().unwrap().len()).sum()
    }
}

impl Drop for NodePool {
    fn drop(&mut self) {
        for slot in self.slots.iter_mut() {
            for item in slot.get_mut().unwrap().drain(..) {
                // Safety: each pointer was produced by Box::into_raw with the
                // type drop_fn was instantiated at, is freed exactly once
                // (ledgers are drained), and no reader outlives the pool.
                unsafe { (item.drop_fn)(item.ptr) };
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::sync::atomic::{AtomicUsize, Ordering};
    use std::sync::Arc;

    struct CountsDrops(Arc<AtomicUsize>);
    impl Drop for CountsDrops {
        fn drop(&mut self) {
            self.0.fetch_add(1, Ordering::SeqCst);
        }
    }

    #[test]
    fn nothing_freed_before_pool_drop_then_everything_once() {
        let drops = Arc::new(AtomicUsize::new(0));
        let pool = NodePool::new(2);
        let mut ptrs = Vec::new();
        for i in 0..100 {
            ptrs.push(pool.alloc(i % 2, CountsDrops(Arc::clone(&drops))));
        }
        assert_eq!(pool.tracked(), 100);
        assert_eq!(drops.load(Ordering::SeqCst), 0);
        // Pointers remain dereferenceable while the pool lives.
        for &p in &ptrs {
            unsafe {
                assert!(Arc::ptr_eq(&(*p).0, &drops));
            }
        }
        drop(pool);
        assert_eq!(drops.load(Ordering::SeqCst), 100);
    }

    #[test]
    fn mixed_types_share_a_pool() {
        let pool = NodePool::new(1);
        let a = pool.alloc(0, 42u64);
        let b = pool.alloc(pool.setup_slot(), String::from("edge"));
        unsafe {
            assert_eq!(*a, 42);
            assert_eq!(&*b, "edge");
        }
    }
}
