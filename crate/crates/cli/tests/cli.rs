use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn configs() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../configs")
}

fn ccgnav(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ccgnav")).args(args).output().unwrap()
}

/// example1 cut to ten control steps.
fn ten_step_config(dir: &Path) -> PathBuf {
    let text = fs::read_to_string(configs().join("example1.toml")).unwrap();
    let text = text.replacen("horizon = 120.0", "horizon = 0.1", 1);
    assert!(text.contains("horizon = 0.1"));
    let path = dir.join("short.toml");
    fs::write(&path, text).unwrap();
    path
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn run_writes_golden_csv_header_and_metrics() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = ten_step_config(dir.path());
    let out = dir.path().join("out");
    let o = ccgnav(&["run", "--config", s(&cfg), "--out", s(&out)]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let csv = fs::read_to_string(out.join("trajectory.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(
        lines.next().unwrap(),
        "step,t,x,y,psi,nu_u,nu_v,nu_r,u0,u1,u2,obs_x,obs_y,meas_x,meas_y,rhat_x,rhat_y,pi_xx,pi_xy,pi_yy,\
         h_est,h_true,h1,h_prev,slack,active,fallback,warmup,covered,separation,tracking_error,newton_iters"
    );
    assert_eq!(lines.count(), 10);
    assert!(out.join("trajectory.json").exists());
    let m: serde_json::Value = serde_json::from_str(&fs::read_to_string(out.join("metrics.json")).unwrap()).unwrap();
    assert_eq!(m["steps"], 10);
    assert_eq!(m["seed"], 1);
    assert_eq!(m["config_hash"].as_str().unwrap().len(), 64);
}

#[test]
fn format_flag_selects_one_trajectory_file() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = ten_step_config(dir.path());
    let out = dir.path().join("out");
    let o = ccgnav(&["run", "--config", s(&cfg), "--out", s(&out), "--format", "json"]);
    assert_eq!(o.status.code(), Some(0));
    assert!(out.join("trajectory.json").exists());
    assert!(!out.join("trajectory.csv").exists());
}

#[test]
fn seed_override_keeps_config_hash() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = ten_step_config(dir.path());
    let metrics = |seed: &str| {
        let out = dir.path().join(format!("out{seed}"));
        let o = ccgnav(&["run", "--config", s(&cfg), "--out", s(&out), "--seed", seed]);
        assert_eq!(o.status.code(), Some(0));
        let m: serde_json::Value =
            serde_json::from_str(&fs::read_to_string(out.join("metrics.json")).unwrap()).unwrap();
        m
    };
    let (a, b) = (metrics("1"), metrics("99"));
    assert_eq!(a["config_hash"], b["config_hash"]);
    assert_eq!(b["seed"], 99);
}

#[test]
fn out_of_range_alpha_exits_2_with_line() {
    let dir = tempfile::tempdir().unwrap();
    let text = fs::read_to_string(configs().join("example1.toml")).unwrap();
    let bad = dir.path().join("bad.toml");
    fs::write(&bad, text.replacen("alpha = 0.05", "alpha = 1.5", 1)).unwrap();
    let before = fs::read(&bad).unwrap();
    for sub in ["validate", "run"] {
        let mut args = vec![sub, "--config", s(&bad)];
        let out = dir.path().join("out");
        if sub == "run" {
            args.extend(["--out", s(&out)]);
        }
        let o = ccgnav(&args);
        assert_eq!(o.status.code(), Some(2));
        let err = String::from_utf8_lossy(&o.stderr);
        assert!(err.contains("line 14") && err.contains("alpha"), "{err}");
    }
    assert_eq!(fs::read(&bad).unwrap(), before);
    assert!(!dir.path().join("out").exists());
}

#[test]
fn shipped_configs_validate() {
    for name in ["example1.toml", "example2.toml", "pursue.toml", "coverage.toml"] {
        let path = configs().join(name);
        let before = fs::read(&path).unwrap();
        let o = ccgnav(&["validate", "--config", s(&path)]);
        assert_eq!(o.status.code(), Some(0), "{name}: {}", String::from_utf8_lossy(&o.stderr));
        assert_eq!(fs::read(&path).unwrap(), before);
    }
}

#[test]
fn missing_config_exits_2() {
    let o = ccgnav(&["validate", "--config", "/nonexistent/scenario.toml"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn coverage_test_exit_code_follows_band() {
    let cfg = configs().join("coverage.toml");
    let o = ccgnav(&["coverage-test", "--config", s(&cfg), "--runs", "2000"]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stdout));
    let report: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(report["runs"], 2000);
    // seeded, so a band far tighter than the sampling error misses
    let dir = tempfile::tempdir().unwrap();
    let text = fs::read_to_string(&cfg).unwrap();
    let tight = dir.path().join("tight.toml");
    fs::write(&tight, text.replacen("alpha = 0.05", "alpha = 0.5", 1).replacen("band = 0.02", "band = 0.001", 1)).unwrap();
    let o = ccgnav(&["coverage-test", "--config", s(&tight), "--runs", "2000"]);
    assert_eq!(o.status.code(), Some(1), "{}", String::from_utf8_lossy(&o.stdout));
}

#[test]
fn sweep_writes_a_directory_per_run() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = ten_step_config(dir.path());
    let out = dir.path().join("sweep");
    let o = ccgnav(&[
        "sweep", "--config", s(&cfg), "--param", "barrier.alpha_cbf=2:6", "--runs", "3", "--out", s(&out),
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let rows: serde_json::Value = serde_json::from_str(&fs::read_to_string(out.join("sweep.json")).unwrap()).unwrap();
    let rows = rows.as_array().unwrap();
    assert_eq!(rows.len(), 3);
    for (i, v) in [2.0, 4.0, 6.0].iter().enumerate() {
        assert_eq!(rows[i]["value"], *v);
        assert!(out.join(format!("run_{i:04}")).join("trajectory.csv").exists());
    }
    let o = ccgnav(&[
        "sweep", "--config", s(&cfg), "--param", "estimator.alpha=0.5,1.5", "--runs", "2", "--out", s(&out),
    ]);
    assert_eq!(o.status.code(), Some(2));
    let o = ccgnav(&["sweep", "--config", s(&cfg), "--param", "no.such=1", "--runs", "1", "--out", s(&out)]);
    assert_eq!(o.status.code(), Some(2));
}
