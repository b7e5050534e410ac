//! White-box probes for integration and acceptance tests. Not part of the
//! supported API; everything here reaches into collector internals that the
//! public surface deliberately hides.

use crate::{Graph, Tid};

/// Point-in-time view of the collector currently published by a graph.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CollectorProbe {
    pub present: bool,
    pub active: bool,
    pub reports_blocked: bool,
    /// Total reports across every thread's vertex and edge slots.
    pub reports: usize,
}

pub fn collector_probe(g: &Graph) -> CollectorProbe {
    let scp = g.current_collector();
    if scp.is_null() {
        return CollectorProbe {
            present: false,
            active: false,
            reports_blocked: false,
            reports: 0,
        };
    }
    let sc = unsafe { &*scp };
    CollectorProbe {
        present: true,
        active: sc.is_active(),
        reports_blocked: sc.reports_blocked(),
        reports: sc.report_count(),
    }
}

/// Hammer the current collector's report slots with raw push attempts that
/// skip the active-flag guard, so each attempt lands on the slot CAS itself.
/// Returns how many pushes succeeded; against a frozen (blocked) collector
/// the only correct answer is 0.
pub fn forced_report_attempts(g: &Graph, key: i64, tid: Tid, n: usize) -> usize {
    g.forced_report_attempts(key, tid, n)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::OpResult;

    #[test]
    fn probe_reflects_collector_lifecycle() {
        let g = Graph::new();
        let t = g.register_thread().unwrap();
        assert!(!collector_probe(&g).present);
        g.add_vertex(1, t);
        let _ = g.take_snapshot(t);
        let p = collector_probe(&g);
        assert!(p.present && !p.active && p.reports_blocked);
    }

    #[test]
    fn frozen_slots_reject_forced_pushes() {
        let g = Graph::new();
        let t = g.register_thread().unwrap();
        assert_eq!(g.add_vertex(1, t), OpResult::VertexAdded);
        let _ = g.take_snapshot(t);
        let before = collector_probe(&g);
        assert_eq!(forced_report_attempts(&g, 1, t, 1000), 0);
        assert_eq!(collector_probe(&g), before);
    }
}
