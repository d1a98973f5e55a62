use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;
use tempfile::TempDir;

const HEAT_SINE: &str = r#"{
    "domain": {"dimension": 1},
    "resolution": 127,
    "T": 1.0,
    "N_t": 512,
    "theta": 0.5,
    "gamma": {"eigenfunction": [1]},
    "outputs": {"slice_stride": 64}
}"#;

fn write_config(dir: &Path, text: &str) -> PathBuf {
    let path = dir.join("config.json");
    fs::write(&path, text).unwrap();
    path
}

fn run(args: &[&str], config: &Path, out: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_profile-shift"))
        .args(args)
        .arg("--config")
        .arg(config)
        .arg("--out")
        .arg(out)
        .env("PROFILE_SHIFT_THREADS", "2")
        .output()
        .unwrap()
}

fn read_json(path: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

#[test]
fn solve_heat_sine_gives_closed_form_alpha() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(tmp.path(), HEAT_SINE);
    let out = tmp.path().join("run");
    let o = run(&["solve", "--quiet"], &cfg, &out);
    assert_eq!(
        o.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&o.stderr)
    );
    assert!(o.stdout.is_empty());

    let report = read_json(&out.join("report.json"));
    let alpha = report["fredholm"]["alpha"].as_f64().unwrap();
    assert!((alpha - 0.316060).abs() < 1e-3, "alpha {alpha}");
    assert_eq!(report["passed"], Value::Bool(true));
    assert!(report["mass_error"].as_f64().unwrap() <= 1e-12);

    let csv = fs::read_to_string(out.join("trajectory.csv")).unwrap();
    let header: Vec<&str> = csv.lines().next().unwrap().split(',').collect();
    // x, then slices 0, 64, ..., 512
    assert_eq!(header.len(), 1 + 9);
    assert_eq!(header[0], "x");
    assert_eq!(header[1].parse::<f64>().unwrap(), 0.0);
    assert_eq!(header[9].parse::<f64>().unwrap(), 1.0);
    assert_eq!(csv.lines().count(), 1 + 127);
    assert!(out.join("p_trajectory.csv").exists());
}

#[test]
fn manifest_lists_every_file_with_checksum() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(tmp.path(), HEAT_SINE);
    let out = tmp.path().join("run");
    assert_eq!(
        run(&["solve", "--quiet"], &cfg, &out).status.code(),
        Some(0)
    );
    let meta = read_json(&out.join("metadata.json"));
    let files = meta["files"].as_array().unwrap();
    let mut names: Vec<&str> = files.iter().map(|f| f["name"].as_str().unwrap()).collect();
    names.sort();
    assert_eq!(names, ["p_trajectory.csv", "report.json", "trajectory.csv"]);
    for f in files {
        let bytes = fs::read(out.join(f["name"].as_str().unwrap())).unwrap();
        assert_eq!(f["bytes"].as_u64().unwrap() as usize, bytes.len());
        assert_eq!(f["sha256"].as_str().unwrap().len(), 64);
    }
    assert_eq!(meta["command"], "solve");
    assert_eq!(meta["threads"], 2);
    assert!(meta["timings_ms"]["solve"].as_f64().is_some());
}

#[test]
fn config_echo_reparses() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(tmp.path(), HEAT_SINE);
    let out = tmp.path().join("run");
    assert_eq!(
        run(&["solve", "--quiet"], &cfg, &out).status.code(),
        Some(0)
    );
    let meta = read_json(&out.join("metadata.json"));
    let echo = tmp.path().join("echo.json");
    fs::write(&echo, serde_json::to_string(&meta["config"]).unwrap()).unwrap();
    let again = tmp.path().join("again");
    assert_eq!(
        run(&["solve", "--quiet"], &echo, &again).status.code(),
        Some(0)
    );
    let meta2 = read_json(&again.join("metadata.json"));
    assert_eq!(meta["config"], meta2["config"]);
    assert_eq!(meta["config"]["theta"], 0.5);
    assert_eq!(meta["config"]["advection_mode"], "upwind");
    assert_eq!(meta["config"]["solver"]["tol"], 1e-10);
}

#[test]
fn identical_runs_are_bit_identical() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(
        tmp.path(),
        r#"{
            "domain": {"dimension": 2},
            "resolution": [9, 7], "T": 0.5, "N_t": 40,
            "coefficients": {"preset": "drift", "drift": [1, -0.5], "absorption": 0.2},
            "gamma": {"indicator": {"box": [[0.5, 2.0], [0.5, 1.5]], "value": 2}}
        }"#,
    );
    let a = tmp.path().join("a");
    let b = tmp.path().join("b");
    assert_eq!(
        run(&["validate", "--quiet"], &cfg, &a).status.code(),
        Some(0)
    );
    assert_eq!(
        run(&["validate", "--quiet"], &cfg, &b).status.code(),
        Some(0)
    );
    let ma = read_json(&a.join("metadata.json"));
    let mb = read_json(&b.join("metadata.json"));
    assert_eq!(ma["files"], mb["files"]);
    assert_eq!(
        fs::read(a.join("validation.json")).unwrap(),
        fs::read(b.join("validation.json")).unwrap()
    );
}

#[test]
fn zero_table_gives_zero_trajectory() {
    let tmp = TempDir::new().unwrap();
    let zeros = vec!["0"; 15].join(",");
    let cfg = write_config(
        tmp.path(),
        &format!(
            r#"{{"domain": {{"dimension": 1}}, "resolution": 15, "T": 1, "N_t": 20,
                "gamma": {{"table": [{zeros}]}}}}"#
        ),
    );
    let out = tmp.path().join("run");
    let o = run(&["solve", "--quiet"], &cfg, &out);
    assert_eq!(
        o.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&o.stderr)
    );
    let csv = fs::read_to_string(out.join("trajectory.csv")).unwrap();
    for line in csv.lines().skip(1) {
        assert!(line
            .split(',')
            .skip(1)
            .all(|v| v.parse::<f64>().unwrap() == 0.0));
    }
    assert!(!out.join("p_trajectory.csv").exists());
}

#[test]
fn posedness_ladder() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(
        tmp.path(),
        r#"{"domain": {"dimension": 1}, "resolution": 15, "T": 1, "N_t": 512,
            "gamma": {"eigenfunction": [1]}}"#,
    );
    let out = tmp.path().join("run");
    let o = run(&["posedness", "--resolutions", "15,31,63"], &cfg, &out);
    assert_eq!(
        o.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&o.stderr)
    );
    assert!(String::from_utf8_lossy(&o.stdout).contains("posedness: M=63"));
    let report = read_json(&out.join("posedness.json"));
    let records = report["records"].as_array().unwrap();
    assert_eq!(records.len(), 3);
    for r in records {
        assert!(r["cond_i_minus_q"].as_f64().unwrap() <= 2.0);
    }
    let logs: Vec<f64> = records
        .iter()
        .map(|r| r["log10_cond_q"].as_f64().unwrap())
        .collect();
    assert!(logs[0] >= 40.0);
    assert!(logs[0] < logs[1] && logs[1] < logs[2]);
}

#[test]
fn spectrum_oracle_and_convergence() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(
        tmp.path(),
        r#"{"domain": {"dimension": 1}, "resolution": 31, "T": 1, "N_t": 256, "theta": 0.5,
            "gamma": {"eigenfunction": [1]}}"#,
    );
    let out = tmp.path().join("run");
    assert_eq!(
        run(&["spectrum", "--quiet"], &cfg, &out).status.code(),
        Some(0)
    );
    let s = read_json(&out.join("spectrum.json"));
    assert!(s["spectral_radius"].as_f64().unwrap() < 1.0);
    assert_eq!(s["eigenvalues"].as_array().unwrap().len(), 31);

    assert_eq!(
        run(&["oracle", "--quiet"], &cfg, &out).status.code(),
        Some(0)
    );
    let o = read_json(&out.join("oracle.json"));
    assert!(o["krylov_vs_dense"].as_f64().unwrap() <= 1e-8);

    let c = run(
        &["convergence", "--quiet", "--resolutions", "31,63,127"],
        &cfg,
        &out,
    );
    assert_eq!(c.status.code(), Some(0));
    let study = read_json(&out.join("convergence.json"));
    assert!(study["fitted_order"].as_f64().unwrap() > 1.9);
}

#[test]
fn config_errors_exit_2() {
    let tmp = TempDir::new().unwrap();
    let out = tmp.path().join("run");
    let bad_theta = write_config(
        tmp.path(),
        r#"{"domain": {"dimension": 1}, "resolution": 15, "T": 1, "N_t": 20, "theta": 0.3,
            "gamma": {"eigenfunction": [1]}}"#,
    );
    let o = run(&["solve"], &bad_theta, &out);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("theta"));

    let twice = write_config(
        tmp.path(),
        r#"{"domain": {"dimension": 1}, "resolution": 3, "T": 1, "N_t": 20,
            "gamma": {"eigenfunction": [1], "table": [1, 2, 3]}}"#,
    );
    assert_eq!(run(&["solve"], &twice, &out).status.code(), Some(2));

    let malformed = write_config(tmp.path(), "{\n  \"domain\": [\n");
    let o = run(&["solve"], &malformed, &out);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("line"));

    let drift_case = write_config(
        tmp.path(),
        r#"{"domain": {"dimension": 1}, "resolution": 15, "T": 1, "N_t": 20,
            "coefficients": {"preset": "drift", "drift": [1]},
            "gamma": {"eigenfunction": [1]}}"#,
    );
    assert_eq!(
        run(&["convergence"], &drift_case, &out).status.code(),
        Some(2)
    );
}

#[test]
fn solver_and_cap_failures() {
    let tmp = TempDir::new().unwrap();
    let out = tmp.path().join("run");
    let starved = write_config(
        tmp.path(),
        r#"{"domain": {"dimension": 1}, "resolution": 31, "T": 0.01, "N_t": 10,
            "gamma": {"table": [1, -1, 1, -1, 1, -1, 1, -1, 1, -1, 1, -1, 1, -1, 1, -1,
                                 1, -1, 1, -1, 1, -1, 1, -1, 1, -1, 1, -1, 1, -1, 1]},
            "solver": {"tol": 1e-14, "max_iter": 1, "restart": 1}}"#,
    );
    assert_eq!(run(&["solve"], &starved, &out).status.code(), Some(3));

    let big = write_config(
        tmp.path(),
        r#"{"domain": {"dimension": 2}, "resolution": 65, "T": 0.1, "N_t": 2,
            "gamma": {"eigenfunction": [1, 1]}}"#,
    );
    assert_eq!(run(&["oracle"], &big, &out).status.code(), Some(5));
}

#[test]
fn bad_thread_count_is_a_config_error() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(tmp.path(), HEAT_SINE);
    let o = Command::new(env!("CARGO_BIN_EXE_profile-shift"))
        .args(["solve", "--config"])
        .arg(&cfg)
        .env("PROFILE_SHIFT_THREADS", "zero")
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(2));
}
