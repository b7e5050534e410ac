//! Operation-mix profiles the workers draw from.

use anyhow::{bail, Result};
use clap::ValueEnum;
use snapgraph::harness::SplitMix64;

/// One operation class a worker can draw. Order matters: it is the CSV row
/// order and the index into [`WorkloadProfile::weights`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OpClass {
    AddVertex,
    RemoveVertex,
    ContainsVertex,
    AddEdge,
    RemoveEdge,
    ContainsEdge,
    Analytics,
}

impl OpClass {
    pub const ALL: [OpClass; 7] = [
        OpClass::AddVertex,
        OpClass::RemoveVertex,
        OpClass::ContainsVertex,
        OpClass::AddEdge,
        OpClass::RemoveEdge,
        OpClass::ContainsEdge,
        OpClass::Analytics,
    ];

    pub fn label(self) -> &'static str {
        match self {
            OpClass::AddVertex => "addVertex",
            OpClass::RemoveVertex => "removeVertex",
            OpClass::ContainsVertex => "containsVertex",
            OpClass::AddEdge => "addEdge",
            OpClass::RemoveEdge => "removeEdge",
            OpClass::ContainsEdge => "containsEdge",
            OpClass::Analytics => "analytics",
        }
    }

    pub fn from_label(label: &str) -> Option<OpClass> {
        OpClass::ALL.iter().copied().find(|c| c.label() == label)
    }
}

/// What the analytics slot of a profile actually runs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum AnalyticsOp {
    /// Take a consistent snapshot and discard it.
    Snapshot,
    /// Snapshot, then BFS diameter over the result.
    Diameter,
    /// Snapshot, then betweenness centrality over the result.
    Bc,
}

/// Integer weights per operation class. Draw probabilities are weight over
/// the sum of all weights; the built-in mixes sum to 102 because the two
/// 45-point contains classes sit on top of a 12-point update block.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct WorkloadProfile {
    pub weights: [u32; 7],
    pub analytics: AnalyticsOp,
}

impl WorkloadProfile {
    pub fn read_heavy(analytics: AnalyticsOp) -> WorkloadProfile {
        WorkloadProfile {
            weights: [3, 2, 45, 3, 2, 45, 2],
            analytics,
        }
    }

    pub fn update_heavy(analytics: AnalyticsOp) -> WorkloadProfile {
        WorkloadProfile {
            weights: [12, 13, 25, 13, 12, 25, 2],
            analytics,
        }
    }

    pub fn custom(weights: [u32; 7], analytics: AnalyticsOp) -> Result<WorkloadProfile> {
        if weights.iter().all(|w| *w == 0) {
            bail!("workload profile needs at least one positive weight");
        }
        Ok(WorkloadProfile { weights, analytics })
    }

    /// Move the analytics weight to `pct` points, paying for an increase by
    /// taking equally from containsVertex and containsEdge (and refunding
    /// them equally on a decrease). containsVertex absorbs the odd point.
    pub fn with_analytics_pct(mut self, pct: u32) -> Result<WorkloadProfile> {
        let delta = pct as i64 - self.weights[6] as i64;
        let half = delta / 2;
        let cv = self.weights[2] as i64 - (delta - half);
        let ce = self.weights[5] as i64 - half;
        if cv < 0 || ce < 0 {
            bail!(
                "analytics-pct {} leaves a negative contains weight (containsVertex {}, containsEdge {})",
                pct, cv, ce
            );
        }
        self.weights[2] = cv as u32;
        self.weights[5] = ce as u32;
        self.weights[6] = pct;
        Ok(self)
    }

    pub fn total(&self) -> u32 {
        self.weights.iter().sum()
    }

    /// Expected fraction of draws landing in `class`.
    pub fn fraction(&self, class: OpClass) -> f64 {
        let idx = OpClass::ALL.iter().position(|c| *c == class).unwrap();
        self.weights[idx] as f64 / self.total() as f64
    }

    pub fn draw(&self, rng: &mut SplitMix64) -> OpClass {
        let mut r = rng.below(self.total() as u64) as u32;
        for (i, w) in self.weights.iter().enumerate() {
            if r < *w {
                return OpClass::ALL[i];
            }
            r -= w;
        }
        unreachable!("below(total) is always covered by the cumulative walk")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn builtin_profiles_keep_their_published_weights() {
        let r = WorkloadProfile::read_heavy(AnalyticsOp::Snapshot);
        assert_eq!(r.weights, [3, 2, 45, 3, 2, 45, 2]);
        let u = WorkloadProfile::update_heavy(AnalyticsOp::Snapshot);
        assert_eq!(u.weights, [12, 13, 25, 13, 12, 25, 2]);
        assert_eq!(r.total(), 102);
        assert_eq!(u.total(), 102);
    }

    #[test]
    fn analytics_pct_trades_points_with_the_contains_classes() {
        let p = WorkloadProfile::read_heavy(AnalyticsOp::Snapshot)
            .with_analytics_pct(10)
            .unwrap();
        assert_eq!(p.weights, [3, 2, 41, 3, 2, 41, 10]);
        assert_eq!(p.total(), 102);

        let odd = WorkloadProfile::read_heavy(AnalyticsOp::Snapshot)
            .with_analytics_pct(5)
            .unwrap();
        assert_eq!(odd.weights, [3, 2, 43, 3, 2, 44, 5]);

        let down = WorkloadProfile::read_heavy(AnalyticsOp::Snapshot)
            .with_analytics_pct(0)
            .unwrap();
        assert_eq!(down.weights, [3, 2, 46, 3, 2, 46, 0]);
    }

    #[test]
    fn analytics_pct_rejects_draining_below_zero() {
        let err = WorkloadProfile::read_heavy(AnalyticsOp::Snapshot).with_analytics_pct(93);
        assert!(err.is_err());
        // 92 drains both contains classes to exactly zero.
        let edge = WorkloadProfile::read_heavy(AnalyticsOp::Snapshot)
            .with_analytics_pct(92)
            .unwrap();
        assert_eq!(edge.weights, [3, 2, 0, 3, 2, 0, 92]);
    }

    #[test]
    fn draw_respects_the_weights() {
        let p = WorkloadProfile::read_heavy(AnalyticsOp::Snapshot);
        let mut rng = SplitMix64::new(7);
        let mut counts = [0u64; 7];
        let n = 200_000;
        for _ in 0..n {
            let c = p.draw(&mut rng);
            counts[OpClass::ALL.iter().position(|x| *x == c).unwrap()] += 1;
        }
        for (i, class) in OpClass::ALL.iter().enumerate() {
            let got = counts[i] as f64 / n as f64;
            let want = p.fraction(*class);
            assert!(
                (got - want).abs() < 0.01,
                "{}: got {got:.4}, want {want:.4}",
                class.label()
            );
        }
    }

    #[test]
    fn zero_weight_classes_never_draw() {
        let p = WorkloadProfile::custom([0, 0, 100, 0, 0, 0, 0], AnalyticsOp::Snapshot).unwrap();
        let mut rng = SplitMix64::new(3);
        for _ in 0..10_000 {
            assert_eq!(p.draw(&mut rng), OpClass::ContainsVertex);
        }
        assert!(WorkloadProfile::custom([0; 7], AnalyticsOp::Snapshot).is_err());
    }
}
