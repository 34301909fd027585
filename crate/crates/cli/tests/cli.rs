use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use formation_core::scenario::ScenarioConfig;
use tempfile::TempDir;

fn formation(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_formation")).args(args).output().expect("binary runs")
}

fn example_path() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("examples/paper_sec4.toml")
}

fn write_config(dir: &TempDir, name: &str, text: &str) -> String {
    let path = dir.path().join(name);
    fs::write(&path, text).unwrap();
    path.to_str().unwrap().to_owned()
}

fn json(out: &Output) -> serde_json::Value {
    serde_json::from_slice(&out.stdout).expect("stdout is JSON")
}

#[test]
fn shipped_example_matches_builtin() {
    let text = fs::read_to_string(example_path()).unwrap();
    assert_eq!(ScenarioConfig::from_toml_str(&text).unwrap(), ScenarioConfig::paper_sec4());
}

#[test]
fn example_command_round_trips() {
    let dir = TempDir::new().unwrap();
    let path = dir.path().join("ex.toml");
    let out = formation(&["example", "--out", path.to_str().unwrap()]);
    assert!(out.status.success());
    assert_eq!(ScenarioConfig::load(&path).unwrap(), ScenarioConfig::paper_sec4());
}

#[test]
fn simulate_writes_outputs() {
    let dir = TempDir::new().unwrap();
    let out_dir = dir.path().join("run");
    let out = formation(&["simulate", example_path().to_str().unwrap(), "--out", out_dir.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let summary = json(&out);
    assert_eq!(summary["converged"], true);
    assert_eq!(summary["bound_violations"], 0);
    assert!(summary["final_shape_error"].as_f64().unwrap() < 1e-3);
    assert!(out_dir.join("summary.json").exists());
    let csv = fs::read_to_string(out_dir.join("trajectory.csv")).unwrap();
    assert!(csv.starts_with("k,t,h,mode,p_1x"));
    assert_eq!(csv.lines().count(), summary["steps"].as_u64().unwrap() as usize + 2);
}

#[test]
fn trajectories_are_bit_identical() {
    let dir = TempDir::new().unwrap();
    let mut cfg = ScenarioConfig::paper_sec4();
    cfg.step = formation_core::scenario::StepSpec::Uniform;
    let path = write_config(&dir, "u.toml", &cfg.to_toml_string().unwrap());
    let run = |name: &str| {
        let d = dir.path().join(name);
        let out = formation(&["simulate", &path, "--out", d.to_str().unwrap(), "--horizon", "300"]);
        assert!(matches!(out.status.code(), Some(0) | Some(4)));
        fs::read(d.join("trajectory.csv")).unwrap()
    };
    assert_eq!(run("a"), run("b"));
}

#[test]
fn not_converged_exits_4() {
    let out = formation(&["simulate", example_path().to_str().unwrap(), "--horizon", "10"]);
    assert_eq!(out.status.code(), Some(4));
    assert_eq!(json(&out)["converged"], false);
}

#[test]
fn certificates_fail_on_the_example() {
    let out = formation(&["simulate", example_path().to_str().unwrap(), "--certificates"]);
    assert_eq!(out.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&out.stderr).contains("step 6"));
}

#[test]
fn verify_reports_the_sweep() {
    let dir = TempDir::new().unwrap();
    let out = formation(&[
        "verify",
        example_path().to_str().unwrap(),
        "--samples",
        "500",
        "--horizon",
        "40",
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(3));
    let doc = json(&out);
    assert_eq!(doc["outcome"], "certificate_failure");
    assert!(doc["reports"].as_array().unwrap().iter().all(|r| r["pass"] == true));
    assert_eq!(doc["certificates"]["steps_passed"], 6);
    assert!(dir.path().join("verify.json").exists());

    let short = formation(&["verify", example_path().to_str().unwrap(), "--samples", "200", "--horizon", "6"]);
    assert_eq!(short.status.code(), Some(0));
}

#[test]
fn missing_and_malformed_files_exit_1() {
    let out = formation(&["simulate", "/nonexistent/scenario.toml"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("/nonexistent/scenario.toml"));
    let dir = TempDir::new().unwrap();
    let bad = write_config(&dir, "bad.toml", "n = [\n");
    assert_eq!(formation(&["simulate", &bad]).status.code(), Some(1));
}

#[test]
fn invalid_configs_exit_2() {
    let dir = TempDir::new().unwrap();
    let base = fs::read_to_string(example_path()).unwrap();

    let heavy = write_config(&dir, "beta.toml", &base.replace("beta = 0.08", "beta = 0.15"));
    let out = formation(&["simulate", &heavy]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("beta"));

    let big_h = write_config(&dir, "h.toml", &base.replace("h = 0.125", "h = 0.2"));
    assert_eq!(formation(&["simulate", &big_h]).status.code(), Some(2));

    // a row of I - L whose entries sum to 1.1
    let mut cfg = ScenarioConfig::paper_sec4();
    let g = cfg.modes[0].graph().unwrap();
    let mut rows: Vec<Vec<f64>> =
        g.stochastic_unchecked().matrix().row_iter().map(|r| r.iter().copied().collect()).collect();
    rows[2][2] += 0.1;
    cfg.modes[0].edges.clear();
    cfg.modes[0].stochastic = Some(rows);
    let corrupt = write_config(&dir, "rows.toml", &cfg.to_toml_string().unwrap());
    let out = formation(&["simulate", &corrupt]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("sums to"));
}

#[test]
fn params_reproduces_the_square_window() {
    let out = formation(&["params", "4", "0.2", "0.08"]);
    assert_eq!(out.status.code(), Some(0));
    let doc = json(&out);
    assert!((doc["eta"].as_f64().unwrap() - 0.96).abs() <= 1e-12);
    assert_eq!(doc["h_max"].as_f64().unwrap(), 0.125);
    assert!((doc["max_delta"].as_f64().unwrap() - 0.005).abs() <= 1e-12);
    assert_eq!(doc["range_check"]["feasible"], false);
    assert!(String::from_utf8_lossy(&out.stderr).contains("infeasible"));

    let out = formation(&["params", "4", "0.2", "0.08", "0.01"]);
    assert_eq!(out.status.code(), Some(2));
    assert_eq!(json(&out)["feasible"], false);

    assert_eq!(formation(&["params", "4", "0.2", "0.1"]).status.code(), Some(2));
    assert_eq!(formation(&["params", "1", "0.2", "0.08"]).status.code(), Some(2));
}
