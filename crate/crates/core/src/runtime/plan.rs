use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PipelineKind {
    Maddpg,
    Tom2c,
    Neurcomm,
}

impl PipelineKind {
    pub fn name(self) -> &'static str {
        match self {
            PipelineKind::Maddpg => "maddpg",
            PipelineKind::Tom2c => "tom2c",
            PipelineKind::Neurcomm => "neurcomm",
        }
    }

    pub fn policy_mode(self) -> PolicyMode {
        match self {
            PipelineKind::Maddpg => PolicyMode::OffPolicy,
            PipelineKind::Tom2c | PipelineKind::Neurcomm => PolicyMode::OnPolicy,
        }
    }

    /// Whether sample generation and model update overlap in this pipeline.
    pub fn overlapped(self) -> bool {
        matches!(self, PipelineKind::Maddpg | PipelineKind::Tom2c)
    }

    /// Latency-composition mode: overlapped execution composes with `max`.
    pub fn composition(self) -> PolicyMode {
        if self.overlapped() {
            PolicyMode::OffPolicy
        } else {
            PolicyMode::OnPolicy
        }
    }

    pub fn parallel_rollout(self) -> bool {
        !matches!(self, PipelineKind::Neurcomm)
    }

    pub fn parallel_training(self) -> bool {
        matches!(self, PipelineKind::Maddpg)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PolicyMode {
    OnPolicy,
    OffPolicy,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct PhaseLatencies {
    pub t_sg: f64,
    pub t_mu: f64,
}

/// Sum for sequential phases, max for overlapped ones.
pub fn compose_iteration_latency(lat: PhaseLatencies, mode: PolicyMode) -> f64 {
    match mode {
        PolicyMode::OnPolicy => lat.t_sg + lat.t_mu,
        PolicyMode::OffPolicy => lat.t_sg.max(lat.t_mu),
    }
}

/// Validated mapping of a pipeline onto threads.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RunPlan {
    pub pipeline: PipelineKind,
    pub n_agents: usize,
    pub rollout_threads: usize,
    pub training_threads: usize,
    pub policy_mode: PolicyMode,
    pub iterations: usize,
    pub warmup_iterations: usize,
    pub seed: u64,
}

impl RunPlan {
    /// Plan with the pipeline's thread defaults.
    pub fn for_pipeline(pipeline: PipelineKind, n_agents: usize) -> Self {
        Self {
            pipeline,
            n_agents,
            rollout_threads: 1,
            training_threads: 1,
            policy_mode: pipeline.policy_mode(),
            iterations: 20,
            warmup_iterations: 5,
            seed: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_agents == 0 {
            return Err(Error::Config("n_agents must be at least 1".into()));
        }
        if self.rollout_threads == 0 || self.training_threads == 0 {
            return Err(Error::Config("thread counts must be at least 1".into()));
        }
        if self.policy_mode != self.pipeline.policy_mode() {
            return Err(Error::Config(format!(
                "policy_mode for {} must be {:?}",
                self.pipeline.name(),
                self.pipeline.policy_mode()
            )));
        }
        if !self.pipeline.parallel_rollout() && self.rollout_threads != 1 {
            return Err(Error::Config(format!(
                "{} supports exactly 1 rollout thread, got {}",
                self.pipeline.name(),
                self.rollout_threads
            )));
        }
        if !self.pipeline.parallel_training() && self.training_threads != 1 {
            return Err(Error::Config(format!(
                "{} supports exactly 1 training thread, got {}",
                self.pipeline.name(),
                self.training_threads
            )));
        }
        if self.iterations == 0 {
            return Err(Error::Config("iterations must be at least 1".into()));
        }
        if self.warmup_iterations >= self.iterations {
            return Err(Error::Config(format!(
                "warmup_iterations ({}) must be below iterations ({})",
                self.warmup_iterations, self.iterations
            )));
        }
        Ok(())
    }
}
