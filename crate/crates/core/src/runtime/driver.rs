use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use super::plan::{PipelineKind, RunPlan};
use crate::envs::{CoopNav, CoopNavConfig, JointAction, MarkovGame, Networked, NetworkedConfig, Observation, QueueDynamics, StepResult, Topology};
use crate::error::{Error, Result};
use crate::graph::CommGraph;
use crate::pipelines::maddpg::MaddpgRun;
use crate::pipelines::neurcomm::NeurcommRun;
use crate::pipelines::tom2c::Tom2cRun;
use crate::pipelines::Hyperparams;
use crate::profiler::TimingBreakdown;

/// Stand-in environment selection.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum EnvSpec {
    Coopnav { max_steps: usize },
    Networked { topology: Topology, max_steps: usize },
}

impl EnvSpec {
    pub fn name(&self) -> &'static str {
        match self {
            EnvSpec::Coopnav { .. } => "coopnav",
            EnvSpec::Networked { .. } => "networked",
        }
    }

    pub fn build(&self, n_agents: usize, seed: u64) -> Result<AnyEnv> {
        Ok(match *self {
            EnvSpec::Coopnav { max_steps } => AnyEnv::CoopNav(CoopNav::new(CoopNavConfig { n_agents, max_steps }, seed)?),
            EnvSpec::Networked { topology, max_steps } => AnyEnv::Networked(Networked::new(
                NetworkedConfig {
                    n_agents,
                    topology,
                    max_steps,
                    dynamics: QueueDynamics::default(),
                },
                seed,
            )?),
        })
    }

    /// The stand-in each pipeline is evaluated on.
    pub fn default_for(pipeline: PipelineKind) -> Self {
        match pipeline {
            PipelineKind::Maddpg | PipelineKind::Tom2c => EnvSpec::Coopnav { max_steps: 50 },
            PipelineKind::Neurcomm => EnvSpec::Networked {
                topology: Topology::Ring,
                max_steps: 50,
            },
        }
    }
}

/// Either stand-in behind one concrete type.
#[derive(Clone, Debug)]
pub enum AnyEnv {
    CoopNav(CoopNav),
    Networked(Networked),
}

macro_rules! delegate {
    ($self:ident, $e:ident => $body:expr) => {
        match $self {
            AnyEnv::CoopNav($e) => $body,
            AnyEnv::Networked($e) => $body,
        }
    };
}

impl MarkovGame for AnyEnv {
    fn n_agents(&self) -> usize {
        delegate!(self, e => e.n_agents())
    }
    fn n_actions(&self) -> usize {
        delegate!(self, e => e.n_actions())
    }
    fn obs_width(&self) -> usize {
        delegate!(self, e => e.obs_width())
    }
    fn observe(&self, agent: usize) -> Result<Observation> {
        delegate!(self, e => e.observe(agent))
    }
    fn observe_all(&self) -> Vec<Observation> {
        delegate!(self, e => e.observe_all())
    }
    fn step(&mut self, actions: &JointAction) -> Result<StepResult> {
        delegate!(self, e => e.step(actions))
    }
    fn reset_episode(&mut self) {
        delegate!(self, e => e.reset_episode())
    }
    fn time_step(&self) -> usize {
        delegate!(self, e => e.time_step())
    }
    fn is_done(&self) -> bool {
        delegate!(self, e => e.is_done())
    }
    fn comm_graph(&self) -> Option<CommGraph> {
        delegate!(self, e => e.comm_graph())
    }
    fn action_spaces(&self) -> Vec<usize> {
        delegate!(self, e => e.action_spaces())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub hyper: Hyperparams,
    pub env: EnvSpec,
    pub profile: bool,
    /// Sleep injected into every learner update (overlapped pipelines only).
    pub learner_delay: Duration,
}

impl RunConfig {
    pub fn for_pipeline(pipeline: PipelineKind) -> Self {
        Self {
            hyper: Hyperparams::default(),
            env: EnvSpec::default_for(pipeline),
            profile: true,
            learner_delay: Duration::ZERO,
        }
    }
}

/// Anything the orchestrator can step one iteration at a time.
pub trait IterationDriver {
    fn iterate(&mut self, iteration: usize) -> Result<TimingBreakdown>;

    fn episode_rewards(&self) -> Vec<f64> {
        Vec::new()
    }

    fn experience_fingerprint(&self) -> u64 {
        0
    }

    fn param_fingerprint(&self) -> u64 {
        0
    }

    fn env_steps(&self) -> u64 {
        0
    }
}

macro_rules! driver {
    ($t:ty) => {
        impl IterationDriver for $t {
            fn iterate(&mut self, iteration: usize) -> Result<TimingBreakdown> {
                <$t>::iterate(self, iteration)
            }
            fn episode_rewards(&self) -> Vec<f64> {
                <$t>::episode_rewards(self)
            }
            fn experience_fingerprint(&self) -> u64 {
                <$t>::experience_fingerprint(self)
            }
            fn param_fingerprint(&self) -> u64 {
                <$t>::param_fingerprint(self)
            }
            fn env_steps(&self) -> u64 {
                <$t>::env_steps(self)
            }
        }
    };
}

driver!(MaddpgRun<AnyEnv>);
driver!(Tom2cRun);
driver!(NeurcommRun<AnyEnv>);

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunOutput {
    pub breakdowns: Vec<TimingBreakdown>,
    /// Completed-episode returns in completion order.
    pub episode_rewards: Vec<f64>,
    pub experience_fingerprint: u64,
    pub param_fingerprint: u64,
    pub env_steps: u64,
}

/// Steps `driver` through the plan's iterations. Wall-clock is measured here;
/// the first `warmup_iterations` rows are flagged.
pub fn run_driver(driver: &mut dyn IterationDriver, plan: &RunPlan) -> Result<RunOutput> {
    let mut breakdowns = Vec::with_capacity(plan.iterations);
    for i in 0..plan.iterations {
        let start = Instant::now();
        let mut b = driver.iterate(i)?;
        b.wallclock = start.elapsed().as_secs_f64();
        b.warmup = i < plan.warmup_iterations;
        breakdowns.push(b);
    }
    Ok(RunOutput {
        breakdowns,
        episode_rewards: driver.episode_rewards(),
        experience_fingerprint: driver.experience_fingerprint(),
        param_fingerprint: driver.param_fingerprint(),
        env_steps: driver.env_steps(),
    })
}

/// Builds the plan's pipeline on the configured environment.
pub fn build_driver(plan: &RunPlan, config: &RunConfig) -> Result<Box<dyn IterationDriver>> {
    plan.validate()?;
    config.hyper.validate()?;
    let (n, seed, env) = (plan.n_agents, plan.seed, config.env);
    Ok(match plan.pipeline {
        PipelineKind::Maddpg => Box::new(MaddpgRun::new(
            |s| env.build(n, s),
            plan.rollout_threads,
            plan.training_threads,
            config.hyper.clone(),
            seed,
            config.profile,
        )?),
        PipelineKind::Tom2c => {
            let mut r = Tom2cRun::new(|s| env.build(n, s), plan.rollout_threads, config.hyper.clone(), seed, config.profile)?;
            r.set_learner_delay(config.learner_delay);
            Box::new(r)
        }
        PipelineKind::Neurcomm => {
            if !config.learner_delay.is_zero() {
                return Err(Error::Config("learner_delay applies to overlapped pipelines only".into()));
            }
            Box::new(NeurcommRun::new(env.build(n, seed)?, config.hyper.clone(), seed, config.profile)?)
        }
    })
}

/// Validates, builds and executes one run.
pub fn run(plan: &RunPlan, config: &RunConfig) -> Result<RunOutput> {
    let mut driver = build_driver(plan, config)?;
    run_driver(driver.as_mut(), plan)
}
