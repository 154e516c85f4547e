//! Experiment configuration: TOML in, validated run plans out.

use std::fmt;
use std::path::{Path, PathBuf};

use serde::de::{self, IntoDeserializer, MapAccess, Visitor};
use serde::{Deserialize, Deserializer, Serialize};

use marlperf_core::envs::{MarkovGame, Topology};
use marlperf_core::pipelines::Hyperparams;
use marlperf_core::profiler::SweepParameter;
use marlperf_core::runtime::{EnvSpec, PipelineKind, RunConfig, RunPlan};

use crate::CliError;

pub const DEFAULT_ITERATIONS: usize = 20;
pub const DEFAULT_WARMUP: usize = 5;
pub const DEFAULT_EPISODE_STEPS: usize = 50;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EnvKind {
    Coopnav,
    Networked,
}

impl EnvKind {
    pub fn name(self) -> &'static str {
        match self {
            EnvKind::Coopnav => "coopnav",
            EnvKind::Networked => "networked",
        }
    }
}

/// Either a bare name (`environment = "networked"`) or a table with `kind`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EnvironmentConfig {
    pub kind: EnvKind,
    pub max_episode_steps: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub topology: Option<Topology>,
}

impl EnvironmentConfig {
    pub fn named(kind: EnvKind) -> Self {
        Self {
            kind,
            max_episode_steps: DEFAULT_EPISODE_STEPS,
            topology: (kind == EnvKind::Networked).then_some(Topology::Ring),
        }
    }

    pub fn spec(&self) -> EnvSpec {
        match self.kind {
            EnvKind::Coopnav => EnvSpec::Coopnav {
                max_steps: self.max_episode_steps,
            },
            EnvKind::Networked => EnvSpec::Networked {
                topology: self.topology.unwrap_or(Topology::Ring),
                max_steps: self.max_episode_steps,
            },
        }
    }
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct EnvTable {
    kind: EnvKind,
    #[serde(default = "default_episode_steps")]
    max_episode_steps: usize,
    #[serde(default)]
    topology: Option<Topology>,
}

fn default_episode_steps() -> usize {
    DEFAULT_EPISODE_STEPS
}

impl<'de> Deserialize<'de> for EnvironmentConfig {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        struct V;
        impl<'de> Visitor<'de> for V {
            type Value = EnvironmentConfig;

            fn expecting(&self, f: &mut fmt::Formatter) -> fmt::Result {
                f.write_str("an environment name or a table with `kind`")
            }

            fn visit_str<E: de::Error>(self, v: &str) -> Result<Self::Value, E> {
                Ok(EnvironmentConfig::named(EnvKind::deserialize(v.into_deserializer())?))
            }

            fn visit_map<A: MapAccess<'de>>(self, map: A) -> Result<Self::Value, A::Error> {
                let t = EnvTable::deserialize(de::value::MapAccessDeserializer::new(map))?;
                if t.kind == EnvKind::Coopnav && t.topology.is_some() {
                    return Err(de::Error::custom("environment.topology applies to the networked environment only"));
                }
                Ok(EnvironmentConfig {
                    kind: t.kind,
                    max_episode_steps: t.max_episode_steps,
                    topology: match t.kind {
                        EnvKind::Networked => Some(t.topology.unwrap_or(Topology::Ring)),
                        EnvKind::Coopnav => None,
                    },
                })
            }
        }
        d.deserialize_any(V)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    pub parameter: SweepParameter,
    pub values: Vec<usize>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Csv,
    Json,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputConfig {
    pub directory: PathBuf,
    pub formats: Vec<Format>,
}

impl Default for OutputConfig {
    fn default() -> Self {
        Self {
            directory: PathBuf::from("results"),
            formats: vec![Format::Csv, Format::Json],
        }
    }
}

impl OutputConfig {
    pub fn wants(&self, f: Format) -> bool {
        self.formats.contains(&f)
    }
}

fn one() -> usize {
    1
}

fn default_iterations() -> usize {
    DEFAULT_ITERATIONS
}

fn default_warmup() -> usize {
    DEFAULT_WARMUP
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub pipeline: PipelineKind,
    pub n_agents: usize,
    #[serde(default = "one")]
    pub rollout_threads: usize,
    #[serde(default = "one")]
    pub training_threads: usize,
    #[serde(default = "default_iterations")]
    pub iterations: usize,
    #[serde(default = "default_warmup")]
    pub warmup_iterations: usize,
    #[serde(default)]
    pub seed: u64,
    pub environment: EnvironmentConfig,
    #[serde(default)]
    pub hyperparameters: Hyperparams,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sweep: Option<SweepConfig>,
    #[serde(default)]
    pub output: OutputConfig,
}

/// Which environments each pipeline runs on. NeurComm needs the networked
/// environment's fixed graph; ToM2C's entity encoder needs an even observation
/// width, which only cooperative navigation provides.
pub fn env_supported(pipeline: PipelineKind, env: EnvKind) -> bool {
    match pipeline {
        PipelineKind::Maddpg => true,
        PipelineKind::Tom2c => env == EnvKind::Coopnav,
        PipelineKind::Neurcomm => env == EnvKind::Networked,
    }
}

impl ExperimentConfig {
    /// Parses and validates TOML text.
    pub fn from_toml(text: &str) -> Result<Self, CliError> {
        let cfg: ExperimentConfig = toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml(&text).map_err(|e| match e {
            CliError::Config(m) => CliError::Config(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    /// Normalized echo with every default written out.
    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes to TOML")
    }

    pub fn base_plan(&self) -> RunPlan {
        let mut p = RunPlan::for_pipeline(self.pipeline, self.n_agents);
        p.rollout_threads = self.rollout_threads;
        p.training_threads = self.training_threads;
        p.iterations = self.iterations;
        p.warmup_iterations = self.warmup_iterations;
        p.seed = self.seed;
        p
    }

    pub fn run_config(&self, profile: bool) -> RunConfig {
        RunConfig {
            hyper: self.hyperparameters.clone(),
            env: self.environment.spec(),
            profile,
            learner_delay: std::time::Duration::ZERO,
        }
    }

    /// Every plan the config describes: one per sweep value, or the base plan.
    pub fn plans(&self) -> Vec<RunPlan> {
        match &self.sweep {
            None => vec![self.base_plan()],
            Some(s) => s.values.iter().map(|&v| s.parameter.apply(&self.base_plan(), v)).collect(),
        }
    }

    pub fn validate(&self) -> Result<(), CliError> {
        let key = |k: &str, rule: String| Err(CliError::Config(format!("{k}: {rule}")));
        if !env_supported(self.pipeline, self.environment.kind) {
            return key(
                "environment",
                format!("{} does not run on the {} environment", self.pipeline.name(), self.environment.kind.name()),
            );
        }
        if self.environment.max_episode_steps == 0 {
            return key("environment.max_episode_steps", "must be at least 1".into());
        }
        if self.output.formats.is_empty() {
            return key("output.formats", "must name at least one format".into());
        }
        self.hyperparameters.validate().map_err(core_config)?;
        if let Some(s) = &self.sweep {
            if s.values.is_empty() {
                return key("sweep.values", "must not be empty".into());
            }
            if s.values.windows(2).any(|w| w[0] >= w[1]) {
                return key("sweep.values", "must be strictly increasing".into());
            }
        }
        for plan in self.plans() {
            plan.validate().map_err(|e| match &self.sweep {
                Some(s) => CliError::Config(format!("sweep {} = {}: {}", s.parameter.name(), value_of(s.parameter, &plan), strip(&e))),
                None => core_config(e),
            })?;
            let env = self.environment.spec().build(plan.n_agents, plan.seed).map_err(core_config)?;
            if env.obs_width() == 0 {
                return key("environment", "observation width is zero".into());
            }
        }
        Ok(())
    }
}

fn value_of(p: SweepParameter, plan: &RunPlan) -> usize {
    match p {
        SweepParameter::RolloutThreads => plan.rollout_threads,
        SweepParameter::NAgents => plan.n_agents,
    }
}

fn strip(e: &marlperf_core::Error) -> String {
    match e {
        marlperf_core::Error::Config(m) => m.clone(),
        other => other.to_string(),
    }
}

fn core_config(e: marlperf_core::Error) -> CliError {
    CliError::Config(strip(&e))
}
