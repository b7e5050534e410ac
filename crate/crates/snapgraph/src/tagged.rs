//! Single-word (pointer, mark) pairs.
//!
//! Every link in the graph and in the snapshot machinery is an
//! [`AtomicTaggedPtr`]: a pointer whose lowest bit carries a mark. Reading a
//! link observes pointer and mark together, and a compare-exchange replaces
//! them together, so a mark can never be torn apart from the pointer it
//! annotates. The mark means "logically deleted" on node links and "blocked
//! against further pushes" on report and collector chains.

use std::marker::PhantomData;
use std::sync::atomic::{AtomicUsize, Ordering};

const MARK: usize = 0b1;

/// A pointer-plus-mark value read from or destined for an [`AtomicTaggedPtr`].
///
/// Plain data; the atomicity lives in the cell, not the value.
pub struct TaggedPtr<T> {
    raw: usize,
    _ty: PhantomData<*mut T>,
}

impl<T> Clone for TaggedPtr<T> {
    fn clone(&self) -> Self {
        *self
    }
}
impl<T> Copy for TaggedPtr<T> {}

impl<T> PartialEq for TaggedPtr<T> {
    fn eq(&self, other: &Self) -> bool {
        self.raw == other.raw
    }
}
impl<T> Eq for TaggedPtr<T> {}

impl<T> std::fmt::Debug for TaggedPtr<T> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "TaggedPtr({:p}, {})", self.target(), self.is_tagged())
    }
}

impl<T> TaggedPtr<T> {
    pub fn new(ptr: *mut T, tagged: bool) -> Self {
        let addr = ptr as usize;
        debug_assert_eq!(addr & MARK, 0, "pointer not aligned enough to steal a bit");
        TaggedPtr {
            raw: addr | (tagged as usize),
            _ty: PhantomData,
        }
    }

    pub fn null() -> Self {
        TaggedPtr::new(std::ptr::null_mut(), false)
    }

    /// The pointer with the mark stripped.
    pub fn target(self) -> *mut T {
        (self.raw & !MARK) as *mut T
    }

    pub fn is_tagged(self) -> bool {
        self.raw & MARK != 0
    }

    /// Same target, mark set.
    pub fn with_tag(self) -> Self {
        TaggedPtr {
            raw: self.raw | MARK,
            _ty: PhantomData,
        }
    }

    /// Same target, mark cleared.
    pub fn without_tag(self) -> Self {
        TaggedPtr {
            raw: self.raw & !MARK,
            _ty: PhantomData,
        }
    }
}

/// An atomic cell holding a [`TaggedPtr`].
pub struct AtomicTaggedPtr<T> {
    cell: AtomicUsize,
    _ty: PhantomData<*mut T>,
}

// The cell itself is just an AtomicUsize; what the stored pointer may touch
// is the caller's contract, same as for std::sync::atomic::AtomicPtr.
unsafe impl<T> Send for AtomicTaggedPtr<T> {}
unsafe impl<T> Sync for AtomicTaggedPtr<T> {}

impl<T> AtomicTaggedPtr<T> {
    pub fn new(value: TaggedPtr<T>) -> Self {
        AtomicTaggedPtr {
            cell: AtomicUsize::new(value.raw),
            _ty: PhantomData,
        }
    }

    pub fn null() -> Self {
        AtomicTaggedPtr::new(TaggedPtr::null())
    }

    pub fn load(&self, order: Ordering) -> TaggedPtr<T> {
        TaggedPtr {
            raw: self.cell.load(order),
            _ty: PhantomData,
        }
    }

    pub fn store(&self, value: TaggedPtr<T>, order: Ordering) {
        self.cell.store(value.raw, order);
    }

    /// Replace `current` with `new` iff the cell still holds `current`,
    /// pointer and mark both. Returns the witnessed value on failure.
    pub fn compare_exchange(
        &self,
        current: TaggedPtr<T>,
        new: TaggedPtr<T>,
    ) -> Result<(), TaggedPtr<T>> {
        self.cell
            .compare_exchange(current.raw, new.raw, Ordering::AcqRel, Ordering::Acquire)
            .map(|_| ())
            .map_err(|seen| TaggedPtr {
                raw: seen,
                _ty: PhantomData,
            })
    }
}
