//! Report files. Column order and names are fixed; the plotting tools read them by header.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use marlperf_core::profiler::{Category, IpsReport, SweepReport, TimingBreakdown};
use marlperf_core::runtime::{PolicyMode, RunOutput, RunPlan};

use crate::config::ExperimentConfig;
use crate::CliError;

pub const BREAKDOWN_HEADER: [&str; 9] = [
    "iteration",
    "warmup",
    "policy_inference_s",
    "communication_s",
    "env_step_s",
    "gradient_update_s",
    "buffer_ops_s",
    "wallclock_s",
    "comm_bytes",
];

pub const SWEEP_HEADER: [&str; 8] = [
    "parameter",
    "value",
    "t_sg_s",
    "t_mu_s",
    "t_iteration_s",
    "ips",
    "comm_pct_execution",
    "comm_pct_training",
];

pub const BREAKDOWN_FILE: &str = "breakdown.csv";
pub const SUMMARY_FILE: &str = "summary.json";
pub const SWEEP_FILE: &str = "sweep.csv";
pub const EFFECTIVE_CONFIG_FILE: &str = "config.effective.toml";

/// How iterations are delimited for each pipeline; echoed into every summary.
pub fn iteration_boundary(plan: &RunPlan) -> &'static str {
    match plan.pipeline {
        marlperf_core::runtime::PipelineKind::Maddpg => {
            "one iteration = per-thread step quota collected while the learner takes (collected / batch) gradient steps; latencies are per learner step"
        }
        marlperf_core::runtime::PipelineKind::Tom2c => {
            "one iteration = one learner update over one fragment per rollout thread, overlapped with the next round of rollouts"
        }
        marlperf_core::runtime::PipelineKind::Neurcomm => "one iteration = one rollout horizon followed by one update of every agent",
    }
}

pub fn sha256_hex(text: &str) -> String {
    Sha256::digest(text.as_bytes()).iter().map(|b| format!("{b:02x}")).collect()
}

/// Contents of `summary.json` for one run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub pipeline: String,
    pub environment: String,
    pub n_agents: usize,
    pub rollout_threads: usize,
    pub training_threads: usize,
    pub iterations: usize,
    pub warmup_iterations: usize,
    pub seed: u64,
    pub t_sg: f64,
    pub t_mu: f64,
    pub t_iteration: f64,
    pub ips: f64,
    pub comm_pct_execution: f64,
    pub comm_pct_training: f64,
    pub t_wallclock: f64,
    pub measured_iterations: usize,
    /// `sum` for sequential phases, `max` for overlapped ones.
    pub composition: String,
    /// Category durations are summed across threads (CPU time); wallclock_s is the orchestrator's clock.
    pub category_convention: String,
    pub iteration_boundary: String,
    pub env_steps: u64,
    pub episodes: usize,
    pub mean_episode_reward: Option<f64>,
    pub experience_fingerprint: String,
    pub param_fingerprint: String,
    pub config_sha256: String,
}

impl Summary {
    pub fn new(cfg: &ExperimentConfig, plan: &RunPlan, out: &RunOutput, report: &IpsReport, config_sha256: &str) -> Self {
        let eps = &out.episode_rewards;
        Self {
            pipeline: plan.pipeline.name().into(),
            environment: cfg.environment.kind.name().into(),
            n_agents: plan.n_agents,
            rollout_threads: plan.rollout_threads,
            training_threads: plan.training_threads,
            iterations: plan.iterations,
            warmup_iterations: plan.warmup_iterations,
            seed: plan.seed,
            t_sg: report.t_sg,
            t_mu: report.t_mu,
            t_iteration: report.t_iteration,
            ips: report.ips,
            comm_pct_execution: report.comm_pct_execution,
            comm_pct_training: report.comm_pct_training,
            t_wallclock: report.t_wallclock,
            measured_iterations: report.iterations,
            composition: match plan.pipeline.composition() {
                PolicyMode::OnPolicy => "sum",
                PolicyMode::OffPolicy => "max",
            }
            .into(),
            category_convention: "cpu_time_sum".into(),
            iteration_boundary: iteration_boundary(plan).into(),
            env_steps: out.env_steps,
            episodes: eps.len(),
            mean_episode_reward: (!eps.is_empty()).then(|| eps.iter().sum::<f64>() / eps.len() as f64),
            experience_fingerprint: format!("{:016x}", out.experience_fingerprint),
            param_fingerprint: format!("{:016x}", out.param_fingerprint),
            config_sha256: config_sha256.into(),
        }
    }

    /// The summary with every measured-time field zeroed, for determinism checks.
    pub fn without_timing(&self) -> Self {
        Self {
            t_sg: 0.0,
            t_mu: 0.0,
            t_iteration: 0.0,
            ips: 0.0,
            comm_pct_execution: 0.0,
            comm_pct_training: 0.0,
            t_wallclock: 0.0,
            ..self.clone()
        }
    }
}

/// Contents of `summary.json` for a sweep.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepSummary {
    pub parameter: String,
    pub values: Vec<usize>,
    pub latency_slope: Option<f64>,
    pub runs: Vec<Summary>,
    pub config_sha256: String,
}

fn check_pct(name: &str, v: f64) -> Result<(), CliError> {
    if (0.0..=100.0).contains(&v) {
        Ok(())
    } else {
        Err(CliError::Runtime(format!("{name} = {v} lies outside [0, 100]")))
    }
}

pub fn check_report(r: &IpsReport) -> Result<(), CliError> {
    check_pct("comm_pct_execution", r.comm_pct_execution)?;
    check_pct("comm_pct_training", r.comm_pct_training)
}

fn io(path: &Path) -> impl Fn(std::io::Error) -> CliError + '_ {
    move |e| CliError::Runtime(format!("{}: {e}", path.display()))
}

fn csv_err(path: &Path) -> impl Fn(csv::Error) -> CliError + '_ {
    move |e| CliError::Runtime(format!("{}: {e}", path.display()))
}

pub fn write_breakdown_csv(path: &Path, rows: &[TimingBreakdown]) -> Result<(), CliError> {
    let mut w = csv::Writer::from_path(path).map_err(csv_err(path))?;
    w.write_record(BREAKDOWN_HEADER).map_err(csv_err(path))?;
    for b in rows {
        let mut rec = vec![b.iteration.to_string(), b.warmup.to_string()];
        rec.extend(Category::ALL.iter().map(|&c| b.category(c).to_string()));
        rec.push(b.wallclock.to_string());
        rec.push(b.comm_bytes.to_string());
        w.write_record(&rec).map_err(csv_err(path))?;
    }
    w.flush().map_err(io(path))
}

pub fn write_sweep_csv(path: &Path, sweep: &SweepReport) -> Result<(), CliError> {
    let mut w = csv::Writer::from_path(path).map_err(csv_err(path))?;
    w.write_record(SWEEP_HEADER).map_err(csv_err(path))?;
    for (v, r) in sweep.values.iter().zip(&sweep.reports) {
        check_report(r)?;
        w.write_record([
            sweep.parameter.name().to_string(),
            v.to_string(),
            r.t_sg.to_string(),
            r.t_mu.to_string(),
            r.t_iteration.to_string(),
            r.ips.to_string(),
            r.comm_pct_execution.to_string(),
            r.comm_pct_training.to_string(),
        ])
        .map_err(csv_err(path))?;
    }
    w.flush().map_err(io(path))
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    let text = serde_json::to_string_pretty(value).map_err(|e| CliError::Runtime(e.to_string()))?;
    std::fs::write(path, text + "\n").map_err(io(path))
}

pub fn read_summary(path: &Path) -> Result<Summary, CliError> {
    let text = std::fs::read_to_string(path).map_err(io(path))?;
    serde_json::from_str(&text).map_err(|e| CliError::Runtime(format!("{}: {e}", path.display())))
}

/// Creates `dir` and refuses to clobber any of `files` unless `force`.
pub fn prepare_output(dir: &Path, files: &[PathBuf], force: bool) -> Result<(), CliError> {
    std::fs::create_dir_all(dir).map_err(io(dir))?;
    if !force {
        if let Some(p) = files.iter().find(|p| p.exists()) {
            return Err(CliError::Runtime(format!("{} exists; pass --force to overwrite", p.display())));
        }
    }
    Ok(())
}
