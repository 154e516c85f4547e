use std::path::Path;
use std::process::Command;

use marlperf::report::{read_summary, Summary, BREAKDOWN_HEADER, SWEEP_HEADER};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_marlperf"))
}

fn write(dir: &Path, name: &str, text: &str) -> std::path::PathBuf {
    let p = dir.join(name);
    std::fs::write(&p, text).unwrap();
    p
}

const NEURCOMM_ONE: &str = "pipeline = \"neurcomm\"\nenvironment = \"networked\"\nn_agents = 3\niterations = 1\nwarmup_iterations = 0\n\
                            [hyperparameters]\nhidden = 8\nbelief_dim = 4\nhorizon = 4\n";

#[test]
fn one_iteration_run_writes_one_row() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "c.toml", NEURCOMM_ONE);
    let out = dir.path().join("out");
    let st = bin().args(["run", cfg.to_str().unwrap(), "--output-dir", out.to_str().unwrap()]).status().unwrap();
    assert_eq!(st.code(), Some(0));
    let mut r = csv::Reader::from_path(out.join("breakdown.csv")).unwrap();
    assert_eq!(r.headers().unwrap().iter().collect::<Vec<_>>(), BREAKDOWN_HEADER.to_vec());
    assert_eq!(r.records().count(), 1);
    let s = read_summary(&out.join("summary.json")).unwrap();
    assert_eq!(s.pipeline, "neurcomm");
    assert!((0.0..=100.0).contains(&s.comm_pct_execution));
    let echo = std::fs::read_to_string(out.join("config.effective.toml")).unwrap();
    assert_eq!(s.config_sha256, marlperf::report::sha256_hex(&echo));
    assert!(echo.contains("rollout_threads = 1"));
}

#[test]
fn summary_round_trips_through_json() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "c.toml", NEURCOMM_ONE);
    let out = dir.path().join("out");
    bin().args(["run", cfg.to_str().unwrap(), "--output-dir", out.to_str().unwrap()]).status().unwrap();
    let s = read_summary(&out.join("summary.json")).unwrap();
    let text = serde_json::to_string(&s).unwrap();
    assert_eq!(serde_json::from_str::<Summary>(&text).unwrap(), s);
}

#[test]
fn existing_outputs_are_kept_without_force() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "c.toml", NEURCOMM_ONE);
    let out = dir.path().join("out");
    let args = ["run", cfg.to_str().unwrap(), "--output-dir", out.to_str().unwrap()];
    assert_eq!(bin().args(args).status().unwrap().code(), Some(0));
    let before = std::fs::read(out.join("summary.json")).unwrap();
    let o = bin().args(args).output().unwrap();
    assert_eq!(o.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&o.stderr).contains("--force"));
    assert_eq!(std::fs::read(out.join("summary.json")).unwrap(), before);
    assert_eq!(bin().args(args).arg("--force").status().unwrap().code(), Some(0));
}

#[test]
fn config_errors_exit_with_two() {
    let dir = tempfile::tempdir().unwrap();
    let typo = write(dir.path(), "typo.toml", "pipeline = \"maddpg\"\nenvironment = \"coopnav\"\nn_agents = 2\nrollout_treads = 2\n");
    let o = bin().args(["validate", typo.to_str().unwrap()]).output().unwrap();
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("rollout_treads"));
    let missing = dir.path().join("absent.toml");
    assert_eq!(bin().args(["run", missing.to_str().unwrap()]).status().unwrap().code(), Some(2));
    let bad_plan = write(dir.path(), "bad.toml", "pipeline = \"neurcomm\"\nenvironment = \"networked\"\nn_agents = 4\nrollout_threads = 3\n");
    assert_eq!(bin().args(["validate", bad_plan.to_str().unwrap()]).status().unwrap().code(), Some(2));
}

#[test]
fn validate_lists_sweep_plans() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(
        dir.path(),
        "s.toml",
        "pipeline = \"tom2c\"\nenvironment = \"coopnav\"\nn_agents = 2\n[sweep]\nparameter = \"n_agents\"\nvalues = [2, 4, 8]\n",
    );
    let o = bin().args(["validate", cfg.to_str().unwrap()]).output().unwrap();
    assert_eq!(o.status.code(), Some(0));
    assert_eq!(String::from_utf8_lossy(&o.stdout).lines().count(), 3);
}

#[test]
fn sweep_writes_the_sweep_table() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(
        dir.path(),
        "s.toml",
        "pipeline = \"neurcomm\"\nenvironment = \"networked\"\nn_agents = 2\niterations = 3\nwarmup_iterations = 1\n\
         [hyperparameters]\nhidden = 8\nbelief_dim = 4\nhorizon = 4\n[sweep]\nparameter = \"n_agents\"\nvalues = [2, 3]\n",
    );
    let out = dir.path().join("out");
    let st = bin().args(["sweep", cfg.to_str().unwrap(), "--output-dir", out.to_str().unwrap()]).status().unwrap();
    assert_eq!(st.code(), Some(0));
    let mut r = csv::Reader::from_path(out.join("sweep.csv")).unwrap();
    assert_eq!(r.headers().unwrap().iter().collect::<Vec<_>>(), SWEEP_HEADER.to_vec());
    let rows: Vec<csv::StringRecord> = r.records().map(Result::unwrap).collect();
    assert_eq!(rows.len(), 2);
    assert_eq!(&rows[1][1], "3");
    assert!(out.join("breakdown_n_agents_2.csv").exists());
    assert!(out.join("breakdown_n_agents_3.csv").exists());
    let run_cmd = bin().args(["run", cfg.to_str().unwrap(), "--output-dir", dir.path().join("o2").to_str().unwrap()]).status().unwrap();
    assert_eq!(run_cmd.code(), Some(2));
}

#[test]
fn same_seed_gives_the_same_summary() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(
        dir.path(),
        "m.toml",
        "pipeline = \"maddpg\"\nenvironment = \"coopnav\"\nn_agents = 2\nrollout_threads = 2\niterations = 4\nwarmup_iterations = 1\n\
         [hyperparameters]\nhidden = 8\nbatch = 16\nsteps_per_thread = 16\n",
    );
    let go = |name: &str, seed: &str| {
        let out = dir.path().join(name);
        let st = bin()
            .args(["run", cfg.to_str().unwrap(), "--output-dir", out.to_str().unwrap(), "--seed", seed])
            .status()
            .unwrap();
        assert_eq!(st.code(), Some(0));
        let rows = csv::Reader::from_path(out.join("breakdown.csv")).unwrap().records().count();
        // The echoed config carries the output directory, so its digest differs per run.
        let s = Summary {
            config_sha256: String::new(),
            ..read_summary(&out.join("summary.json")).unwrap().without_timing()
        };
        (s, rows)
    };
    let (a, ra) = go("a", "5");
    let (b, rb) = go("b", "5");
    let (c, _) = go("c", "6");
    assert_eq!(a, b);
    assert_eq!(ra, rb);
    assert_ne!(a.experience_fingerprint, c.experience_fingerprint);
}

#[test]
fn no_profile_still_reports_ips() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "c.toml", NEURCOMM_ONE);
    let out = dir.path().join("out");
    let st = bin()
        .args(["run", cfg.to_str().unwrap(), "--output-dir", out.to_str().unwrap(), "--no-profile"])
        .status()
        .unwrap();
    assert_eq!(st.code(), Some(0));
    let s = read_summary(&out.join("summary.json")).unwrap();
    assert!(s.ips > 0.0);
}
