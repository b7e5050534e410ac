//! Runs the interleaving checker over recorded multi-threaded executions.
//!
//! Every history produced by the real graph must admit a linearization; a
//! deliberately corrupted history must not.

use snapgraph::harness::{
    execute_op, format_op, format_ret, generate_history, generate_snapshot_history, CheckOutcome,
    Checker, History, HistoryClock, ModelOp, ThreadLog,
};
use snapgraph::Graph;

#[test]
fn recorded_point_op_histories_linearize() {
    let checker = Checker::new();
    for seed in [1u64, 2, 3, 7, 11] {
        let history = generate_history(seed, 3, 60, 5);
        match checker.check(&history).unwrap() {
            CheckOutcome::Linearizable => {}
            CheckOutcome::NonLinearizable(witness) => {
                panic!("seed {seed} produced a non-linearizable history:\n{witness}")
            }
            CheckOutcome::BudgetExhausted(n) => {
                panic!("seed {seed} blew the search budget after {n} nodes")
            }
        }
    }
}

#[test]
fn recorded_snapshot_histories_linearize() {
    let checker = Checker::new();
    for seed in [5u64, 13, 21] {
        let history = generate_snapshot_history(seed, 3, 40, 4, 4);
        match checker.check(&history).unwrap() {
            CheckOutcome::Linearizable => {}
            CheckOutcome::NonLinearizable(witness) => {
                panic!("seed {seed} produced a non-linearizable history:\n{witness}")
            }
            CheckOutcome::BudgetExhausted(n) => {
                panic!("seed {seed} blew the search budget after {n} nodes")
            }
        }
    }
}

#[test]
fn corrupted_response_is_rejected() {
    // Record a real sequential run, then flip the final contains response to
    // its negation. No linearization can explain the flipped value.
    let g = Graph::new();
    let tid = g.register_thread().unwrap();
    let clock = HistoryClock::new();
    let mut log = ThreadLog::new(0);

    let script = [
        ModelOp::AddVertex(1),
        ModelOp::AddVertex(2),
        ModelOp::AddEdge(1, 2),
        ModelOp::RemoveEdge(1, 2),
        ModelOp::ContainsEdge(1, 2),
    ];
    for op in script {
        log.invoke(&clock, op);
        let ret = execute_op(&g, tid, &op);
        log.respond(&clock, ret);
    }

    let honest = History::from_logs(vec![log]);
    let checker = Checker::new();
    assert_eq!(checker.check(&honest).unwrap(), CheckOutcome::Linearizable);

    // EDGE_NOT_PRESENT -> EDGE_PRESENT on the last response.
    let mut lines: Vec<String> = honest.to_text().lines().map(str::to_owned).collect();
    let last = lines.last_mut().unwrap();
    assert!(last.contains("EDGE_NOT_PRESENT"), "unexpected tail: {last}");
    *last = last.replace("EDGE_NOT_PRESENT", "EDGE_PRESENT");
    let corrupted = History::parse(&lines.join("\n")).unwrap();

    match checker.check(&corrupted).unwrap() {
        CheckOutcome::NonLinearizable(witness) => {
            // The witness must itself be a replayable history.
            let trimmed = witness.lines().skip(1).collect::<Vec<_>>().join("\n");
            History::parse(&trimmed).expect("witness should parse back");
        }
        other => panic!("corrupted history accepted: {other:?}"),
    }
}

#[test]
fn witness_round_trips_through_text() {
    let history = generate_history(99, 2, 25, 4);
    let text = history.to_text();
    let reparsed = History::parse(&text).unwrap();
    assert_eq!(reparsed.to_text(), text);

    // Formatting helpers agree with what the history writer emits.
    for rec in history.per_thread().unwrap().iter().flat_map(|t| t.iter()) {
        assert!(text.contains(&format_op(&rec.op)));
        if let Some(ret) = &rec.ret {
            assert!(text.contains(&format_ret(ret)));
        }
    }
}
