use std::path::Path;
use std::process::Command;

fn irsloc() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_irsloc"));
    c.env_remove("IRSLOC_SEED");
    c
}

fn read(dir: &Path, name: &str) -> String {
    std::fs::read_to_string(dir.join(name)).unwrap()
}

#[test]
fn simulate_writes_records_summary_and_config() {
    let dir = tempfile::tempdir().unwrap();
    let out = irsloc()
        .args(["simulate", "--config", "default", "--seed", "7", "--trials", "10", "--out"])
        .arg(dir.path())
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    assert_eq!(read(dir.path(), "records.jsonl").lines().count(), 10);
    let csv = read(dir.path(), "summary.csv");
    assert!(csv.starts_with("K,power_dBm,mode,n_trials,error_prob,mean_err_m,p95_err_m,mean_solve_s\n"));
    assert!(csv.contains("3,39,pruned,10,"));
    let cfg = read(dir.path(), "config.toml");
    assert!(cfg.contains("run.seed = 7"));
    assert!(cfg.contains("sweep.n_trials = 10"));
}

#[test]
fn echoed_config_reproduces_the_run() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let status = irsloc()
        .args(["simulate", "--seed", "3", "--trials", "4", "--K", "2", "--out"])
        .arg(a.path())
        .status()
        .unwrap();
    assert!(status.success());
    let status = irsloc()
        .arg("simulate")
        .arg("--config")
        .arg(a.path().join("config.toml"))
        .arg("--out")
        .arg(b.path())
        .status()
        .unwrap();
    assert!(status.success());
    assert_eq!(read(a.path(), "records.jsonl"), read(b.path(), "records.jsonl"));
    assert_eq!(read(a.path(), "summary.csv"), read(b.path(), "summary.csv"));
}

#[test]
fn seed_environment_variable_overrides_config() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let run = |dir: &Path, env: Option<&str>, flag: Option<&str>| {
        let mut c = irsloc();
        c.args(["simulate", "--oracle-ranges", "--trials", "3", "--out"]).arg(dir);
        if let Some(v) = env {
            c.env("IRSLOC_SEED", v);
        }
        if let Some(v) = flag {
            c.args(["--seed", v]);
        }
        assert!(c.status().unwrap().success());
        read(dir, "records.jsonl")
    };
    assert_eq!(run(a.path(), Some("99"), None), run(b.path(), None, Some("99")));
    assert!(read(a.path(), "config.toml").contains("run.seed = 99"));
}

#[test]
fn malformed_config_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.toml");
    std::fs::write(
        &path,
        "trial.system.n_subcarriers = 8\ntrial.system.n_taps = 4\ntrial.system.allocation.kind = \"explicit\"\n\
         trial.system.allocation.bs1 = [1, 2, 3, 4]\ntrial.system.allocation.bs2 = [4, 5, 6, 7, 8]\n",
    )
    .unwrap();
    let out = irsloc().args(["simulate", "--config"]).arg(&path).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("must be empty"), "{err}");

    std::fs::write(&path, "trial.bogus = 1\n").unwrap();
    let out = irsloc().args(["simulate", "--config"]).arg(&path).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("trial.bogus"));
}

#[test]
fn unknown_flag_is_a_usage_error() {
    let out = irsloc().args(["simulate", "--nonsense"]).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn missing_records_is_a_runtime_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = irsloc().arg("plot-data").arg(dir.path()).output().unwrap();
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn oracle_check_reports_full_agreement() {
    let out = irsloc().args(["oracle-check", "--K", "3", "--trials", "50"]).output().unwrap();
    assert_eq!(out.status.code(), Some(0));
    let text = String::from_utf8_lossy(&out.stdout);
    assert!(text.contains("agreement_rate=100.0%"), "{text}");
}

#[test]
fn plot_data_rebuilds_the_summary_table() {
    let dir = tempfile::tempdir().unwrap();
    let status = irsloc()
        .args(["sweep", "--oracle-ranges", "--trials", "5", "--out"])
        .arg(dir.path())
        .status()
        .unwrap();
    assert!(status.success());
    let original = read(dir.path(), "summary.csv");
    let again = tempfile::tempdir().unwrap();
    let out = irsloc()
        .arg("plot-data")
        .arg(dir.path().join("records.jsonl"))
        .arg("--out")
        .arg(again.path())
        .output()
        .unwrap();
    assert!(out.status.success());
    assert_eq!(read(again.path(), "summary.csv"), original);
    assert_eq!(String::from_utf8_lossy(&out.stdout), original);
}
