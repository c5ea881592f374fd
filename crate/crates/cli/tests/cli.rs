use std::fs;
use std::process::Command;

fn nsmc() -> Command {
    Command::new(env!("CARGO_BIN_EXE_nsmc"))
}

#[test]
fn gen_data_writes_the_decimated_record() {
    let tmp = tempfile::tempdir().unwrap();
    let out = nsmc().args(["gen-data", "--time-units", "5", "--seed", "4", "--out"]).arg(tmp.path()).output().unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let obs = fs::read_to_string(tmp.path().join("observations.csv")).unwrap();
    let rows: Vec<&str> = obs.lines().filter(|l| !l.starts_with('#')).collect();
    assert_eq!(rows[0], "n,y1,y3");
    assert_eq!(rows.len(), 126);
}

#[test]
fn flags_override_the_config_file() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("exp.toml");
    fs::write(&cfg, "model = \"grid-hmm\"\nn = 500\nsteps = 8\n[jitter]\nfrozen = true\n").unwrap();
    let out_dir = tmp.path().join("out");
    let out = nsmc().args(["run", "--n", "12", "--m", "6", "--config"]).arg(&cfg).arg("--out").arg(&out_dir).output().unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let summary = fs::read_to_string(out_dir.join("summary.json")).unwrap();
    assert!(summary.contains("\"n\": 12"));
    assert!(summary.contains("\"m\": 6"));
    assert!(summary.contains("\"completed_steps\": 8"));
}

#[test]
fn failures_exit_nonzero() {
    let tmp = tempfile::tempdir().unwrap();
    let out = nsmc().args(["rate-study", "--model", "grid-hmm", "--n-list", "50", "--out"]).arg(tmp.path()).output().unwrap();
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("at least 3"));

    let cfg = tmp.path().join("coarse.toml");
    fs::write(&cfg, "n = 10\ntime_units = 20.0\n[lorenz63]\ndelta = 0.05\n").unwrap();
    let out = nsmc().args(["run", "--config"]).arg(&cfg).arg("--out").arg(tmp.path().join("run")).output().unwrap();
    assert!(!out.status.success());
    let summary = fs::read_to_string(tmp.path().join("run/summary.json")).unwrap();
    assert!(summary.contains("\"failed_step\": 1"));
}

#[test]
fn worker_env_var_is_accepted() {
    let tmp = tempfile::tempdir().unwrap();
    let out = nsmc()
        .env("NSMC_WORKERS", "2")
        .args(["identify", "--model", "grid-hmm", "--n-list", "8,16,32", "--replicates", "2", "--steps", "10", "--out"])
        .arg(tmp.path())
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(tmp.path().join("summary.json").exists());
}
