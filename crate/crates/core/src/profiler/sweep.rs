use serde::{Deserialize, Serialize};

use super::breakdown::TimingBreakdown;
use super::ips::IpsReport;
use crate::error::{Error, Result};
use crate::runtime::RunPlan;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepParameter {
    RolloutThreads,
    NAgents,
}

impl SweepParameter {
    pub fn name(self) -> &'static str {
        match self {
            SweepParameter::RolloutThreads => "rollout_threads",
            SweepParameter::NAgents => "n_agents",
        }
    }

    pub fn apply(self, template: &RunPlan, value: usize) -> RunPlan {
        let mut plan = template.clone();
        match self {
            SweepParameter::RolloutThreads => plan.rollout_threads = value,
            SweepParameter::NAgents => plan.n_agents = value,
        }
        plan
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepReport {
    pub parameter: SweepParameter,
    pub values: Vec<usize>,
    pub reports: Vec<IpsReport>,
    pub breakdowns: Vec<Vec<TimingBreakdown>>,
    /// Least-squares slope of log(t_iteration) against log(value).
    pub latency_slope: Option<f64>,
}

/// Least-squares slope of `ln y` against `ln x`; `None` with fewer than two points.
pub fn loglog_slope(xs: &[f64], ys: &[f64]) -> Option<f64> {
    if xs.len() != ys.len() || xs.len() < 2 || xs.iter().chain(ys).any(|&v| !(v > 0.0)) {
        return None;
    }
    let lx: Vec<f64> = xs.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = ys.iter().map(|v| v.ln()).collect();
    let n = lx.len() as f64;
    let mx = lx.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let sxx: f64 = lx.iter().map(|x| (x - mx).powi(2)).sum();
    if sxx == 0.0 {
        return None;
    }
    let sxy: f64 = lx.iter().zip(&ly).map(|(x, y)| (x - mx) * (y - my)).sum();
    Some(sxy / sxx)
}

/// Runs `runner` once per value with otherwise identical plans.
///
/// All plans are validated before the first run.
pub fn sweep<F>(template: &RunPlan, parameter: SweepParameter, values: &[usize], mut runner: F) -> Result<SweepReport>
where
    F: FnMut(&RunPlan) -> Result<Vec<TimingBreakdown>>,
{
    if values.is_empty() {
        return Err(Error::Config("sweep needs at least one value".into()));
    }
    if values.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::Config(format!("sweep values for {} must be strictly increasing", parameter.name())));
    }
    let plans: Vec<RunPlan> = values.iter().map(|&v| parameter.apply(template, v)).collect();
    for (plan, v) in plans.iter().zip(values) {
        plan.validate()
            .map_err(|e| Error::Config(format!("{} = {v}: {e}", parameter.name())))?;
    }
    let mut reports = Vec::with_capacity(plans.len());
    let mut breakdowns = Vec::with_capacity(plans.len());
    for plan in &plans {
        let rows = runner(plan)?;
        reports.push(IpsReport::from_breakdowns(&rows, plan.pipeline.composition())?);
        breakdowns.push(rows);
    }
    let xs: Vec<f64> = values.iter().map(|&v| v as f64).collect();
    let ys: Vec<f64> = reports.iter().map(|r| r.t_iteration).collect();
    Ok(SweepReport {
        parameter,
        values: values.to_vec(),
        latency_slope: loglog_slope(&xs, &ys),
        reports,
        breakdowns,
    })
}
