//! Linearizability checking by exhaustive linearization search.
//!
//! The checker walks every real-time-respecting interleaving of a recorded
//! history against [`SeqGraphModel`], with undo-based backtracking and
//! memoization on (per-thread progress, model fingerprint). An operation may
//! be tried first only if its invocation precedes the response of every other
//! thread's frontier operation; pending operations (no recorded response) are
//! branched both ways, taken or dropped.

use std::collections::HashSet;

use super::history::{History, HistoryError, OpRecord};
use super::model::SeqGraphModel;

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum CheckOutcome {
    Linearizable,
    /// No valid linearization exists. Carries a replayable sub-history that
    /// already fails, plus the mismatch the search kept running into.
    NonLinearizable(String),
    /// The search hit its node budget before finishing either way.
    BudgetExhausted(usize),
}

#[derive(Debug, Clone)]
pub struct Checker {
    pub node_budget: usize,
}

impl Default for Checker {
    fn default() -> Self {
        Checker {
            node_budget: 2_000_000,
        }
    }
}

enum Flow {
    Found,
    DeadEnd,
    Exhausted,
}

struct Search<'a> {
    threads: &'a [Vec<OpRecord>],
    idx: Vec<usize>,
    model: SeqGraphModel,
    memo: HashSet<(Vec<usize>, u128)>,
    explored: usize,
    budget: usize,
}

impl<'a> Search<'a> {
    fn new(threads: &'a [Vec<OpRecord>], budget: usize) -> Self {
        Search {
            threads,
            idx: vec![0; threads.len()],
            model: SeqGraphModel::new(),
            memo: HashSet::new(),
            explored: 0,
            budget,
        }
    }

    fn run(&mut self) -> Flow {
        self.dfs()
    }

    fn dfs(&mut self) -> Flow {
        if self.explored >= self.budget {
            return Flow::Exhausted;
        }
        self.explored += 1;

        if self
            .idx
            .iter()
            .zip(self.threads)
            .all(|(&i, ops)| i == ops.len())
        {
            return Flow::Found;
        }
        if !self.memo.insert((self.idx.clone(), self.model.fingerprint())) {
            return Flow::DeadEnd;
        }

        for t in 0..self.threads.len() {
            if self.idx[t] == self.threads[t].len() {
                continue;
            }
            let rec = &self.threads[t][self.idx[t]];
            if !self.eligible(t, rec) {
                continue;
            }
            match &rec.ret {
                Some(expected) => {
                    let (got, undo) = self.model.apply_with_undo(&rec.op);
                    if got == *expected {
                        self.idx[t] += 1;
                        match self.dfs() {
                            Flow::Found => return Flow::Found,
                            Flow::Exhausted => return Flow::Exhausted,
                            Flow::DeadEnd => {}
                        }
                        self.idx[t] -= 1;
                    }
                    self.model.undo(undo);
                }
                None => {
                    // Pending op: either it took effect before the history
                    // ended, or it never linearized at all.
                    let (_, undo) = self.model.apply_with_undo(&rec.op);
                    self.idx[t] += 1;
                    match self.dfs() {
                        Flow::Found => return Flow::Found,
                        Flow::Exhausted => return Flow::Exhausted,
                        Flow::DeadEnd => {}
                    }
                    self.model.undo(undo);
                    match self.dfs() {
                        Flow::Found => return Flow::Found,
                        Flow::Exhausted => return Flow::Exhausted,
                        Flow::DeadEnd => {}
                    }
                    self.idx[t] -= 1;
                }
            }
        }
        Flow::DeadEnd
    }

    /// An op may be linearized next only if no other thread's frontier op
    /// already responded before this one was invoked.
    fn eligible(&self, t: usize, rec: &OpRecord) -> bool {
        let min_other = (0..self.threads.len())
            .filter(|&u| u != t && self.idx[u] < self.threads[u].len())
            .map(|u| self.threads[u][self.idx[u]].response.unwrap_or(u64::MAX))
            .min()
            .unwrap_or(u64::MAX);
        rec.invoke < min_other
    }
}

impl Checker {
    pub fn new() -> Self {
        Checker::default()
    }

    pub fn with_budget(node_budget: usize) -> Self {
        Checker { node_budget }
    }

    pub fn check(&self, history: &History) -> Result<CheckOutcome, HistoryError> {
        let threads = history.per_thread()?;
        Ok(self.check_threads(&threads))
    }

    fn check_threads(&self, threads: &[Vec<OpRecord>]) -> CheckOutcome {
        let mut s = Search::new(threads, self.node_budget);
        match s.run() {
            Flow::Found => CheckOutcome::Linearizable,
            Flow::Exhausted => CheckOutcome::BudgetExhausted(s.explored),
            Flow::DeadEnd => CheckOutcome::NonLinearizable(self.minimize(threads)),
        }
    }

    /// Shrink a failing history to a short replayable witness: retry growing
    /// response-ordered prefixes. Ops that straddle a prefix's cutoff are
    /// kept as pending rather than dropped, so a failing prefix is a genuine
    /// witness (pending ops only give the search more freedom).
    fn minimize(&self, threads: &[Vec<OpRecord>]) -> String {
        let mut responses: Vec<u64> = threads
            .iter()
            .flatten()
            .filter_map(|r| r.response)
            .collect();
        responses.sort_unstable();

        for &cutoff in &responses {
            let prefix: Vec<Vec<OpRecord>> = threads
                .iter()
                .map(|ops| {
                    ops.iter()
                        .take_while(|r| r.invoke < cutoff)
                        .map(|r| {
                            if r.response.map_or(true, |resp| resp <= cutoff) {
                                r.clone()
                            } else {
                                OpRecord {
                                    op: r.op,
                                    ret: None,
                                    invoke: r.invoke,
                                    response: None,
                                }
                            }
                        })
                        .collect()
                })
                .collect();
            let mut s = Search::new(&prefix, self.node_budget);
            if let Flow::DeadEnd = s.run() {
                return render_witness(&prefix);
            }
        }
        render_witness(threads)
    }
}

/// Reassemble records into the standard history text so a witness can be
/// parsed back and replayed through the checker.
fn render_witness(threads: &[Vec<OpRecord>]) -> String {
    use super::history::{format_op, format_ret};
    let mut lines: Vec<(u64, String)> = Vec::new();
    for (t, ops) in threads.iter().enumerate() {
        for r in ops {
            lines.push((r.invoke, format!("{} {} invoke {}", r.invoke, t, format_op(&r.op))));
            if let (Some(resp), Some(ret)) = (r.response, &r.ret) {
                lines.push((resp, format!("{} {} resp {}", resp, t, format_ret(ret))));
            }
        }
    }
    lines.sort_by_key(|(ts, _)| *ts);
    let body: Vec<String> = lines.into_iter().map(|(_, l)| l).collect();
    format!("no valid linearization for:\n{}", body.join("\n"))
}
