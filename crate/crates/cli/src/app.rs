//! The `run`, `sweep` and `validate` verbs.

use std::path::{Path, PathBuf};

use marlperf_core::profiler::{sweep, IpsReport};
use marlperf_core::runtime::{run, RunOutput, RunPlan};

use crate::config::{ExperimentConfig, Format};
use crate::report::{
    check_report, prepare_output, sha256_hex, write_breakdown_csv, write_json, write_sweep_csv, Summary, SweepSummary, BREAKDOWN_FILE,
    EFFECTIVE_CONFIG_FILE, SUMMARY_FILE, SWEEP_FILE,
};
use crate::CliError;

/// Command-line flags that adjust a loaded config.
#[derive(Clone, Debug, Default)]
pub struct Overrides {
    pub output_dir: Option<PathBuf>,
    pub seed: Option<u64>,
    pub force: bool,
    pub no_profile: bool,
}

/// Loads, applies overrides and re-validates.
pub fn load(path: &Path, o: &Overrides) -> Result<ExperimentConfig, CliError> {
    let mut cfg = ExperimentConfig::load(path)?;
    if let Some(d) = &o.output_dir {
        cfg.output.directory = d.clone();
    }
    if let Some(s) = o.seed {
        cfg.seed = s;
    }
    cfg.validate()?;
    Ok(cfg)
}

/// Files written by a run or sweep.
#[derive(Clone, Debug)]
pub struct Artifacts {
    pub directory: PathBuf,
    pub files: Vec<PathBuf>,
}

fn breakdown_name(cfg: &ExperimentConfig, plan: &RunPlan) -> String {
    match &cfg.sweep {
        None => BREAKDOWN_FILE.into(),
        Some(s) => {
            let v = match s.parameter {
                marlperf_core::profiler::SweepParameter::RolloutThreads => plan.rollout_threads,
                marlperf_core::profiler::SweepParameter::NAgents => plan.n_agents,
            };
            format!("breakdown_{}_{v}.csv", s.parameter.name())
        }
    }
}

fn planned_files(cfg: &ExperimentConfig) -> Vec<PathBuf> {
    let dir = &cfg.output.directory;
    let mut files = vec![dir.join(EFFECTIVE_CONFIG_FILE)];
    if cfg.output.wants(Format::Json) {
        files.push(dir.join(SUMMARY_FILE));
    }
    if cfg.output.wants(Format::Csv) {
        for plan in cfg.plans() {
            files.push(dir.join(breakdown_name(cfg, &plan)));
        }
        if cfg.sweep.is_some() {
            files.push(dir.join(SWEEP_FILE));
        }
    }
    files
}

fn execute(cfg: &ExperimentConfig, plan: &RunPlan, profile: bool) -> Result<(RunOutput, IpsReport), CliError> {
    let out = run(plan, &cfg.run_config(profile))?;
    let report = IpsReport::from_breakdowns(&out.breakdowns, plan.pipeline.composition())?;
    check_report(&report)?;
    Ok((out, report))
}

fn begin(cfg: &ExperimentConfig, force: bool) -> Result<(String, Vec<PathBuf>), CliError> {
    let files = planned_files(cfg);
    prepare_output(&cfg.output.directory, &files, force)?;
    let echo = cfg.to_toml();
    let path = cfg.output.directory.join(EFFECTIVE_CONFIG_FILE);
    std::fs::write(&path, &echo).map_err(|e| CliError::Runtime(format!("{}: {e}", path.display())))?;
    Ok((sha256_hex(&echo), files))
}

pub fn run_experiment(cfg: &ExperimentConfig, o: &Overrides) -> Result<Artifacts, CliError> {
    if cfg.sweep.is_some() {
        return Err(CliError::Config("config defines a sweep; use the `sweep` command".into()));
    }
    let (hash, files) = begin(cfg, o.force)?;
    let plan = cfg.base_plan();
    let (out, report) = execute(cfg, &plan, !o.no_profile)?;
    let dir = &cfg.output.directory;
    if cfg.output.wants(Format::Csv) {
        write_breakdown_csv(&dir.join(BREAKDOWN_FILE), &out.breakdowns)?;
    }
    if cfg.output.wants(Format::Json) {
        write_json(&dir.join(SUMMARY_FILE), &Summary::new(cfg, &plan, &out, &report, &hash))?;
    }
    Ok(Artifacts {
        directory: dir.clone(),
        files,
    })
}

pub fn run_sweep(cfg: &ExperimentConfig, o: &Overrides) -> Result<Artifacts, CliError> {
    let s = cfg
        .sweep
        .as_ref()
        .ok_or_else(|| CliError::Config("config has no [sweep] section".into()))?;
    let (hash, files) = begin(cfg, o.force)?;
    let dir = &cfg.output.directory;
    let mut runs = Vec::new();
    let report = sweep(&cfg.base_plan(), s.parameter, &s.values, |plan| {
        let (out, report) = execute(cfg, plan, !o.no_profile).map_err(|e| marlperf_core::Error::Runtime(e.to_string()))?;
        if cfg.output.wants(Format::Csv) {
            write_breakdown_csv(&dir.join(breakdown_name(cfg, plan)), &out.breakdowns).map_err(|e| marlperf_core::Error::Runtime(e.to_string()))?;
        }
        runs.push(Summary::new(cfg, plan, &out, &report, &hash));
        Ok(out.breakdowns)
    })?;
    if cfg.output.wants(Format::Csv) {
        write_sweep_csv(&dir.join(SWEEP_FILE), &report)?;
    }
    if cfg.output.wants(Format::Json) {
        write_json(
            &dir.join(SUMMARY_FILE),
            &SweepSummary {
                parameter: s.parameter.name().into(),
                values: s.values.clone(),
                latency_slope: report.latency_slope,
                runs,
                config_sha256: hash,
            },
        )?;
    }
    Ok(Artifacts {
        directory: dir.clone(),
        files,
    })
}

/// Describes the validated plans without running anything.
pub fn describe(cfg: &ExperimentConfig) -> String {
    let mut s = String::new();
    for p in cfg.plans() {
        s.push_str(&format!(
            "{} on {}: n_agents={} rollout_threads={} training_threads={} iterations={} (warmup {}) seed={}\n",
            p.pipeline.name(),
            cfg.environment.kind.name(),
            p.n_agents,
            p.rollout_threads,
            p.training_threads,
            p.iterations,
            p.warmup_iterations,
            p.seed
        ));
    }
    s
}
