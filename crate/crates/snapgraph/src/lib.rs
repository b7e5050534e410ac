//! Concurrent unbounded directed graph with lock-free point operations and
//! cooperative wait-free snapshots.
//!
//! Point operations (vertex and edge add/remove/contains) synchronize with
//! single-word CAS only. [`Graph::take_snapshot`] produces a consistent view
//! of the whole graph while those operations keep running: concurrent
//! snapshot callers share one collector and help each other finish, and
//! mutators forward just enough information (insert/delete reports) for the
//! collector to linearize the result.
//!
//! ```
//! use snapgraph::Graph;
//!
//! let g = Graph::new();
//! let t = g.register_thread().unwrap();
//! g.add_vertex(1, t);
//! g.add_vertex(2, t);
//! g.add_edge(1, 2, t);
//! let snap = g.take_snapshot(t);
//! assert_eq!(snap.edge_pairs(), vec![(1, 2)]);
//! ```

pub mod analytics;
pub mod harness;
#[doc(hidden)]
pub mod testkit;

mod graph;
mod pool;
mod registry;
pub mod snapshot;
mod stall;
mod tagged;

pub use graph::{Graph, OpResult};
pub use registry::{RegistryFull, Tid, DEFAULT_MAX_THREADS};
pub use snapshot::Snapshot;
pub use stall::{ReleaseMode, StallHandle, StallSite};
