//! Concurrent operation histories: recording, serialization, parsing.
//!
//! A history is a flat list of invoke/response events, each stamped from one
//! shared monotonic counter. The text form is one event per line,
//!
//! ```text
//! <ts> <tid> invoke <OP> [args...]
//! <ts> <tid> resp <VALUE>
//! ```
//!
//! and round-trips losslessly, so failing histories can be saved, shipped
//! around and replayed through the checker.

use std::fmt::Write as _;
use std::sync::atomic::{AtomicU64, Ordering};

use crate::graph::OpResult;
use crate::snapshot::Snapshot;

use super::model::{ModelOp, ModelRet};

/// Shared event counter. One RMW per event; the per-variable modification
/// order guarantees stamps never contradict real time.
#[derive(Debug, Default)]
pub struct HistoryClock {
    c: AtomicU64,
}

impl HistoryClock {
    pub fn new() -> Self {
        HistoryClock::default()
    }

    pub fn tick(&self) -> u64 {
        self.c.fetch_add(1, Ordering::Relaxed)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum EventKind {
    Invoke(ModelOp),
    Response(ModelRet),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Event {
    pub ts: u64,
    pub tid: usize,
    pub kind: EventKind,
}

/// Per-worker event buffer; workers own theirs, merging happens afterwards.
#[derive(Debug)]
pub struct ThreadLog {
    pub tid: usize,
    events: Vec<Event>,
}

impl ThreadLog {
    pub fn new(tid: usize) -> Self {
        ThreadLog {
            tid,
            events: Vec::new(),
        }
    }

    pub fn invoke(&mut self, clock: &HistoryClock, op: ModelOp) {
        self.events.push(Event {
            ts: clock.tick(),
            tid: self.tid,
            kind: EventKind::Invoke(op),
        });
    }

    pub fn respond(&mut self, clock: &HistoryClock, ret: ModelRet) {
        self.events.push(Event {
            ts: clock.tick(),
            tid: self.tid,
            kind: EventKind::Response(ret),
        });
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct History {
    /// All events, ascending by timestamp.
    pub events: Vec<Event>,
}

/// A paired invoke/response from one thread. `response`/`ret` are `None`
/// for an operation that never returned (only legal as a thread's last op).
#[derive(Debug, Clone)]
pub struct OpRecord {
    pub op: ModelOp,
    pub ret: Option<ModelRet>,
    pub invoke: u64,
    pub response: Option<u64>,
}

#[derive(Debug, PartialEq, Eq)]
pub struct HistoryError {
    pub line: usize,
    pub message: String,
}

impl std::fmt::Display for HistoryError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "history line {}: {}", self.line, self.message)
    }
}

impl std::error::Error for HistoryError {}

fn err(line: usize, message: impl Into<String>) -> HistoryError {
    HistoryError {
        line,
        message: message.into(),
    }
}

impl History {
    pub fn from_logs(logs: Vec<ThreadLog>) -> History {
        let mut events: Vec<Event> = logs.into_iter().flat_map(|l| l.events).collect();
        events.sort_by_key(|e| e.ts);
        History { events }
    }

    /// Group events by thread and pair them up. Errors on a response with
    /// no invoke, two invokes in a row, or a dangling invoke that is not the
    /// thread's final event.
    pub fn per_thread(&self) -> Result<Vec<Vec<OpRecord>>, HistoryError> {
        let mut tids: Vec<usize> = self.events.iter().map(|e| e.tid).collect();
        tids.sort_unstable();
        tids.dedup();
        let mut out: Vec<Vec<OpRecord>> = vec![Vec::new(); tids.len()];
        for (slot, &tid) in tids.iter().enumerate() {
            let mut open: Option<(ModelOp, u64)> = None;
            for (i, e) in self.events.iter().enumerate().filter(|(_, e)| e.tid == tid) {
                match (&e.kind, open.take()) {
                    (EventKind::Invoke(op), None) => open = Some((*op, e.ts)),
                    (EventKind::Invoke(_), Some(_)) => {
                        return Err(err(i + 1, format!("thread {tid}: invoke while an op is open")))
                    }
                    (EventKind::Response(ret), Some((op, inv))) => out[slot].push(OpRecord {
                        op,
                        ret: Some(ret.clone()),
                        invoke: inv,
                        response: Some(e.ts),
                    }),
                    (EventKind::Response(_), None) => {
                        return Err(err(i + 1, format!("thread {tid}: response with no open op")))
                    }
                }
            }
            if let Some((op, inv)) = open {
                out[slot].push(OpRecord {
                    op,
                    ret: None,
                    invoke: inv,
                    response: None,
                });
            }
        }
        Ok(out)
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        for e in &self.events {
            match &e.kind {
                EventKind::Invoke(op) => {
                    let _ = writeln!(s, "{} {} invoke {}", e.ts, e.tid, format_op(op));
                }
                EventKind::Response(ret) => {
                    let _ = writeln!(s, "{} {} resp {}", e.ts, e.tid, format_ret(ret));
                }
            }
        }
        s
    }

    pub fn parse(text: &str) -> Result<History, HistoryError> {
        let mut events = Vec::new();
        for (i, line) in text.lines().enumerate() {
            let lineno = i + 1;
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let mut parts = line.split_whitespace();
            let ts: u64 = parts
                .next()
                .ok_or_else(|| err(lineno, "missing timestamp"))?
                .parse()
                .map_err(|_| err(lineno, "bad timestamp"))?;
            let tid: usize = parts
                .next()
                .ok_or_else(|| err(lineno, "missing thread id"))?
                .parse()
                .map_err(|_| err(lineno, "bad thread id"))?;
            let kind = parts.next().ok_or_else(|| err(lineno, "missing event kind"))?;
            let rest: Vec<&str> = parts.collect();
            let kind = match kind {
                "invoke" => EventKind::Invoke(parse_op(&rest, lineno)?),
                "resp" => EventKind::Response(parse_ret(&rest, lineno)?),
                other => return Err(err(lineno, format!("unknown event kind `{other}`"))),
            };
            events.push(Event { ts, tid, kind });
        }
        events.sort_by_key(|e| e.ts);
        Ok(History { events })
    }
}

pub fn format_op(op: &ModelOp) -> String {
    match *op {
        ModelOp::AddVertex(k) => format!("ADD_VERTEX {k}"),
        ModelOp::RemoveVertex(k) => format!("REMOVE_VERTEX {k}"),
        ModelOp::ContainsVertex(k) => format!("CONTAINS_VERTEX {k}"),
        ModelOp::AddEdge(k, l) => format!("ADD_EDGE {k} {l}"),
        ModelOp::RemoveEdge(k, l) => format!("REMOVE_EDGE {k} {l}"),
        ModelOp::ContainsEdge(k, l) => format!("CONTAINS_EDGE {k} {l}"),
        ModelOp::Snap => "SNAPSHOT".into(),
        ModelOp::Diameter => "DIAMETER".into(),
        ModelOp::BcArgmax => "BC_ARGMAX".into(),
    }
}

fn parse_key(s: Option<&&str>, lineno: usize) -> Result<i64, HistoryError> {
    s.ok_or_else(|| err(lineno, "missing key argument"))?
        .parse()
        .map_err(|_| err(lineno, "bad key argument"))
}

fn parse_op(parts: &[&str], lineno: usize) -> Result<ModelOp, HistoryError> {
    let name = *parts.first().ok_or_else(|| err(lineno, "missing op name"))?;
    Ok(match name {
        "ADD_VERTEX" => ModelOp::AddVertex(parse_key(parts.get(1), lineno)?),
        "REMOVE_VERTEX" => ModelOp::RemoveVertex(parse_key(parts.get(1), lineno)?),
        "CONTAINS_VERTEX" => ModelOp::ContainsVertex(parse_key(parts.get(1), lineno)?),
        "ADD_EDGE" => ModelOp::AddEdge(
            parse_key(parts.get(1), lineno)?,
            parse_key(parts.get(2), lineno)?,
        ),
        "REMOVE_EDGE" => ModelOp::RemoveEdge(
            parse_key(parts.get(1), lineno)?,
            parse_key(parts.get(2), lineno)?,
        ),
        "CONTAINS_EDGE" => ModelOp::ContainsEdge(
            parse_key(parts.get(1), lineno)?,
            parse_key(parts.get(2), lineno)?,
        ),
        "SNAPSHOT" => ModelOp::Snap,
        "DIAMETER" => ModelOp::Diameter,
        "BC_ARGMAX" => ModelOp::BcArgmax,
        other => return Err(err(lineno, format!("unknown op `{other}`"))),
    })
}

pub fn format_ret(ret: &ModelRet) -> String {
    match ret {
        ModelRet::Op(r) => r.label().to_string(),
        ModelRet::Num(n) => format!("NUM {n}"),
        ModelRet::Key(Some(k)) => format!("KEY {k}"),
        ModelRet::Key(None) => "KEY -".into(),
        ModelRet::Snap(s) => {
            let mut out = String::from("SNAP ");
            let verts: Vec<String> = s.vertices.iter().map(|v| v.to_string()).collect();
            out.push_str(&verts.join(","));
            out.push('|');
            let pairs: Vec<String> = s
                .edge_pairs()
                .iter()
                .map(|(a, b)| format!("{a}>{b}"))
                .collect();
            out.push_str(&pairs.join(","));
            out
        }
    }
}

fn parse_ret(parts: &[&str], lineno: usize) -> Result<ModelRet, HistoryError> {
    let name = *parts.first().ok_or_else(|| err(lineno, "missing value"))?;
    if let Some(r) = OpResult::from_label(name) {
        return Ok(ModelRet::Op(r));
    }
    Ok(match name {
        "NUM" => ModelRet::Num(
            parse_key(parts.get(1), lineno)? as u32,
        ),
        "KEY" => {
            let arg = *parts.get(1).ok_or_else(|| err(lineno, "missing key value"))?;
            if arg == "-" {
                ModelRet::Key(None)
            } else {
                ModelRet::Key(Some(arg.parse().map_err(|_| err(lineno, "bad key value"))?))
            }
        }
        "SNAP" => {
            let body = *parts.get(1).unwrap_or(&"|");
            let (vs, es) = body
                .split_once('|')
                .ok_or_else(|| err(lineno, "snapshot value missing `|`"))?;
            let mut vertices = Vec::new();
            for v in vs.split(',').filter(|v| !v.is_empty()) {
                vertices.push(v.parse().map_err(|_| err(lineno, "bad snapshot vertex"))?);
            }
            let mut edges: Vec<Vec<i64>> = vec![Vec::new(); vertices.len()];
            for pair in es.split(',').filter(|p| !p.is_empty()) {
                let (a, b) = pair
                    .split_once('>')
                    .ok_or_else(|| err(lineno, "bad snapshot edge"))?;
                let a: i64 = a.parse().map_err(|_| err(lineno, "bad snapshot edge"))?;
                let b: i64 = b.parse().map_err(|_| err(lineno, "bad snapshot edge"))?;
                let i = vertices
                    .binary_search(&a)
                    .map_err(|_| err(lineno, "snapshot edge from unknown vertex"))?;
                edges[i].push(b);
            }
            ModelRet::Snap(Snapshot { vertices, edges })
        }
        other => return Err(err(lineno, format!("unknown value `{other}`"))),
    })
}
