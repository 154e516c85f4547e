use serde::{Deserialize, Serialize};

use super::breakdown::{aggregate, category_pct, PhaseFilter, TimingBreakdown};
use super::recorder::Category;
use crate::error::{Error, Result};
use crate::runtime::{compose_iteration_latency, PhaseLatencies, PolicyMode};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct IpsFragment {
    pub t_iteration: f64,
    pub ips: f64,
}

/// Iterations per second from phase latencies: `1 / (t_sg + t_mu)` on-policy,
/// `1 / max(t_sg, t_mu)` when the phases overlap.
pub fn compute_ips(t_sg: f64, t_mu: f64, mode: PolicyMode) -> Result<IpsFragment> {
    if !(t_sg > 0.0 && t_mu > 0.0) || !t_sg.is_finite() || !t_mu.is_finite() {
        return Err(Error::Degenerate(format!("phase latencies must be positive (t_sg={t_sg}, t_mu={t_mu})")));
    }
    let t_iteration = compose_iteration_latency(PhaseLatencies { t_sg, t_mu }, mode);
    Ok(IpsFragment {
        t_iteration,
        ips: 1.0 / t_iteration,
    })
}

/// Summary over non-warmup iterations.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IpsReport {
    pub t_sg: f64,
    pub t_mu: f64,
    pub t_iteration: f64,
    pub ips: f64,
    pub comm_pct_execution: f64,
    pub comm_pct_training: f64,
    /// Mean measured wall-clock per iteration, kept apart from the composed latency.
    pub t_wallclock: f64,
    pub iterations: usize,
}

impl IpsReport {
    pub fn from_breakdowns(rows: &[TimingBreakdown], mode: PolicyMode) -> Result<Self> {
        let counted = rows.iter().filter(|r| !r.warmup).count();
        if counted == 0 {
            return Err(Error::Degenerate("no non-warmup iterations".into()));
        }
        let agg = aggregate(rows);
        let steps = agg.learner_steps;
        if !(steps > 0.0) {
            return Err(Error::Degenerate("no learner steps in measured iterations".into()));
        }
        let t_sg = agg.t_sg / steps;
        let t_mu = agg.t_mu / steps;
        let frag = compute_ips(t_sg, t_mu, mode)?;
        Ok(Self {
            t_sg,
            t_mu,
            t_iteration: frag.t_iteration,
            ips: frag.ips,
            comm_pct_execution: category_pct(&agg, PhaseFilter::Execution, Category::Communication).unwrap_or(0.0),
            comm_pct_training: category_pct(&agg, PhaseFilter::Training, Category::Communication).unwrap_or(0.0),
            t_wallclock: agg.wallclock / steps,
            iterations: counted,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn on_policy_sums_phases() {
        let f = compute_ips(0.5, 1.5, PolicyMode::OnPolicy).unwrap();
        assert_eq!(f.ips, 0.5);
    }

    #[test]
    fn off_policy_takes_the_max() {
        let f = compute_ips(0.5, 1.5, PolicyMode::OffPolicy).unwrap();
        assert!((f.ips - 1.0 / 1.5).abs() < 1e-12);
    }

    #[test]
    fn zero_duration_is_degenerate() {
        assert!(matches!(compute_ips(0.0, 1.0, PolicyMode::OnPolicy), Err(Error::Degenerate(_))));
    }

    #[test]
    fn report_normalizes_by_learner_steps() {
        let mut rows = Vec::new();
        for i in 0..3 {
            rows.push(TimingBreakdown {
                t_sg: 0.4,
                t_mu: 0.8,
                wallclock: 0.8,
                learner_steps: 4.0,
                warmup: i == 0,
                ..TimingBreakdown::new(i)
            });
        }
        let r = IpsReport::from_breakdowns(&rows, PolicyMode::OffPolicy).unwrap();
        assert!((r.t_mu - 0.2).abs() < 1e-12);
        assert!((r.ips - 5.0).abs() < 1e-9);
        assert!((r.ips * r.t_iteration - 1.0).abs() < 1e-9);
        assert_eq!(r.iterations, 2);
    }
}
