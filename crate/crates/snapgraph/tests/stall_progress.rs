//! A thread parked inside the snapshot protocol must never stop other
//! threads from finishing their own snapshots.

use std::time::Duration;

use snapgraph::harness::{run_stall_test, StallScenario};
use snapgraph::StallSite;

fn run(site: StallSite) {
    let mut sc = StallScenario::new(site);
    sc.helpers = 2;
    sc.budget = Duration::from_secs(15);
    let report = run_stall_test(&sc);
    assert!(
        report.passed(),
        "{site:?}: completed={} agreement={} elapsed={:?}",
        report.completed,
        report.agreement,
        report.elapsed
    );
}

#[test]
fn parked_after_vertex_collection() {
    run(StallSite::AfterCollectVnodes);
}

#[test]
fn parked_inside_iterator_claim() {
    run(StallSite::IteratorPass1Claim);
}

#[test]
fn parked_inside_reconstruction_claim() {
    run(StallSite::ReconstructionPass1Claim);
}

#[test]
fn parked_remover_before_unlink() {
    run(StallSite::RemoveVertexPreUnlink);
}
