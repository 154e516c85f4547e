//! Mapping of pipelines onto rollout and learner threads, the orchestrator
//! loop and synthetic fixed-cost pipelines.

mod driver;
mod plan;
mod synthetic;
mod workers;

pub use driver::{build_driver, run, run_driver, AnyEnv, EnvSpec, IterationDriver, RunConfig, RunOutput};
pub use plan::{compose_iteration_latency, PhaseLatencies, PipelineKind, PolicyMode, RunPlan};
pub use synthetic::{ScaledPipeline, SleepPipeline};
pub use workers::{spawn_rollout_workers, WorkerPool};
