//! Per-class latency metrics and their CSV form.

use std::fmt::Write as _;
use std::path::Path;

use anyhow::{bail, Context, Result};

use crate::workload::OpClass;

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct ClassMetrics {
    pub count: u64,
    pub avg_us: f64,
}

/// Aggregated result of one benchmark run. Averages are derived once from
/// the accumulated totals, so equality is plain field equality and the CSV
/// form round-trips exactly.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct MetricsRecord {
    pub total_ops: u64,
    pub avg_us_overall: f64,
    pub classes: [ClassMetrics; 7],
}

impl MetricsRecord {
    /// Builds a record from per-class operation counts and total elapsed
    /// nanoseconds.
    pub fn from_totals(counts: [u64; 7], total_ns: [u64; 7]) -> MetricsRecord {
        let mut classes = [ClassMetrics::default(); 7];
        for i in 0..7 {
            classes[i].count = counts[i];
            if counts[i] > 0 {
                classes[i].avg_us = total_ns[i] as f64 / 1000.0 / counts[i] as f64;
            }
        }
        let total_ops: u64 = counts.iter().sum();
        let avg_us_overall = if total_ops > 0 {
            total_ns.iter().sum::<u64>() as f64 / 1000.0 / total_ops as f64
        } else {
            0.0
        };
        MetricsRecord {
            total_ops,
            avg_us_overall,
            classes,
        }
    }

    pub fn class(&self, class: OpClass) -> ClassMetrics {
        let idx = OpClass::ALL.iter().position(|c| *c == class).unwrap();
        self.classes[idx]
    }

    /// CSV layout: a `metric,value` section for the overall figures, then a
    /// `class,count,avg_us` section with one row per non-empty class, in
    /// declaration order. An all-zero record emits the two headers only.
    /// Floats are written with their shortest round-trip representation.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("metric,value\n");
        if self.total_ops > 0 {
            writeln!(out, "total_ops,{}", self.total_ops).unwrap();
            writeln!(out, "avg_us_overall,{:?}", self.avg_us_overall).unwrap();
        }
        out.push_str("class,count,avg_us\n");
        for (i, class) in OpClass::ALL.iter().enumerate() {
            let m = self.classes[i];
            if m.count > 0 {
                writeln!(out, "{},{},{:?}", class.label(), m.count, m.avg_us).unwrap();
            }
        }
        out
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_csv())
            .with_context(|| format!("write {}", path.display()))
    }

    pub fn parse_csv(text: &str) -> Result<MetricsRecord> {
        let mut lines = text.lines().enumerate();
        match lines.next() {
            Some((_, "metric,value")) => {}
            other => bail!("expected `metric,value` header, got {:?}", other.map(|(_, l)| l)),
        }

        let mut rec = MetricsRecord::default();
        let mut in_classes = false;
        for (idx, line) in lines {
            let lineno = idx + 1;
            if line.is_empty() {
                continue;
            }
            if line == "class,count,avg_us" {
                in_classes = true;
                continue;
            }
            let fields: Vec<&str> = line.split(',').collect();
            if in_classes {
                let [label, count, avg] = fields[..] else {
                    bail!("line {lineno}: expected `class,count,avg_us` row, got {line:?}");
                };
                let Some(class) = OpClass::from_label(label) else {
                    bail!("line {lineno}: unknown class {label:?}");
                };
                let idx = OpClass::ALL.iter().position(|c| *c == class).unwrap();
                rec.classes[idx] = ClassMetrics {
                    count: count.parse().with_context(|| format!("line {lineno}: bad count"))?,
                    avg_us: avg.parse().with_context(|| format!("line {lineno}: bad avg_us"))?,
                };
            } else {
                let [metric, value] = fields[..] else {
                    bail!("line {lineno}: expected `metric,value` row, got {line:?}");
                };
                match metric {
                    "total_ops" => {
                        rec.total_ops = value
                            .parse()
                            .with_context(|| format!("line {lineno}: bad total_ops"))?
                    }
                    "avg_us_overall" => {
                        rec.avg_us_overall = value
                            .parse()
                            .with_context(|| format!("line {lineno}: bad avg_us_overall"))?
                    }
                    other => bail!("line {lineno}: unknown metric {other:?}"),
                }
            }
        }
        if !in_classes {
            bail!("missing `class,count,avg_us` header");
        }
        Ok(rec)
    }
}
