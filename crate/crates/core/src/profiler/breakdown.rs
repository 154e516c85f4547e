use serde::{Deserialize, Serialize};

use super::recorder::{Category, CategoryTimes, Phase, Recorder};
use crate::error::{Error, Result};

/// Per-iteration timing record.
///
/// Category times are CPU-time sums over all threads that contributed to the
/// iteration, split by phase. `wallclock`, `t_sg` and `t_mu` are orchestrator
/// wall-clock measurements. `learner_steps` is the number of IPS iterations
/// this record represents (gradient steps for replay-based pipelines, 1
/// otherwise).
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TimingBreakdown {
    pub iteration: usize,
    pub warmup: bool,
    pub execution: CategoryTimes,
    pub training: CategoryTimes,
    pub comm_bytes: u64,
    pub wallclock: f64,
    pub t_sg: f64,
    pub t_mu: f64,
    pub learner_steps: f64,
    pub samples: u64,
}

impl TimingBreakdown {
    pub fn new(iteration: usize) -> Self {
        Self {
            iteration,
            learner_steps: 1.0,
            ..Default::default()
        }
    }

    pub fn absorb(&mut self, rec: &Recorder) {
        self.execution.merge(&rec.phase_times(Phase::SampleGeneration));
        self.training.merge(&rec.phase_times(Phase::ModelUpdate));
        self.comm_bytes += rec.comm_bytes();
    }

    /// Both phases summed.
    pub fn category(&self, c: Category) -> f64 {
        self.execution.get(c) + self.training.get(c)
    }

    pub fn total(&self) -> f64 {
        self.execution.total() + self.training.total()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum PhaseFilter {
    Execution,
    Training,
    All,
}

impl PhaseFilter {
    pub fn categories(self) -> &'static [Category] {
        match self {
            PhaseFilter::Execution => &[Category::PolicyInference, Category::Communication, Category::EnvStep],
            PhaseFilter::Training => &[Category::Communication, Category::GradientUpdate, Category::BufferOps],
            PhaseFilter::All => &Category::ALL,
        }
    }

    fn value(self, b: &TimingBreakdown, c: Category) -> f64 {
        match self {
            PhaseFilter::Execution => b.execution.get(c),
            PhaseFilter::Training => b.training.get(c),
            PhaseFilter::All => b.category(c),
        }
    }
}

/// Percentage of the filtered total spent in each filtered category.
///
/// `Execution` reads the sample-generation phase, `Training` the model-update
/// phase (so communication is split by the phase it happened in), `All` sums
/// both.
pub fn breakdown_pct(b: &TimingBreakdown, filter: PhaseFilter) -> Result<Vec<(Category, f64)>> {
    let cats = filter.categories();
    let total: f64 = cats.iter().map(|&c| filter.value(b, c)).sum();
    if !(total > 0.0) {
        return Err(Error::UndefinedBreakdown);
    }
    Ok(cats.iter().map(|&c| (c, 100.0 * filter.value(b, c) / total)).collect())
}

/// Share of `category` under `filter`, or `None` when the filtered total is zero.
pub fn category_pct(b: &TimingBreakdown, filter: PhaseFilter, category: Category) -> Option<f64> {
    breakdown_pct(b, filter)
        .ok()?
        .into_iter()
        .find(|(c, _)| *c == category)
        .map(|(_, p)| p)
}

/// Sum of all non-warmup breakdowns.
pub fn aggregate(rows: &[TimingBreakdown]) -> TimingBreakdown {
    let mut acc = TimingBreakdown {
        learner_steps: 0.0,
        ..Default::default()
    };
    for r in rows.iter().filter(|r| !r.warmup) {
        acc.execution.merge(&r.execution);
        acc.training.merge(&r.training);
        acc.comm_bytes += r.comm_bytes;
        acc.wallclock += r.wallclock;
        acc.t_sg += r.t_sg;
        acc.t_mu += r.t_mu;
        acc.learner_steps += r.learner_steps;
        acc.samples += r.samples;
    }
    acc
}
