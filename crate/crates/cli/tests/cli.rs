use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use tempfile::TempDir;

const BENCH: &str = "experts=5,oracle=2,noise=0,seed=3,horizon=26";
const NOISY: &str = "experts=6,horizon=28,noise=0.3,seed=7,breaks=20";

fn heca(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_heca")).args(args).output().unwrap()
}

fn heca_env(args: &[&str], key: &str, value: &str) -> Output {
    Command::new(env!("CARGO_BIN_EXE_heca")).args(args).env(key, value).output().unwrap()
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap()
}

fn emit(dir: &Path, spec: &str) -> String {
    let path = dir.join("panel.csv");
    let o = heca(&["--emit-synthetic", spec, "--out", path.to_str().unwrap()]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    path.to_str().unwrap().to_string()
}

fn summary(o: &Output) -> serde_json::Value {
    assert_eq!(code(o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    serde_json::from_slice(&o.stdout).unwrap()
}

// a short grid keeps the debug-build runs quick
const GRID: &str = "0.1:0.1:1";

#[test]
fn synthetic_output_is_deterministic() {
    let a = heca(&["--emit-synthetic", NOISY]);
    let b = heca(&["--emit-synthetic", NOISY]);
    assert_eq!(code(&a), 0);
    assert_eq!(a.stdout, b.stdout);
    let text = String::from_utf8(a.stdout).unwrap();
    assert!(text.starts_with("period,target,expert_01,"));
    assert_eq!(text.lines().count(), 29);
    let other = heca(&["--emit-synthetic", &NOISY.replace("seed=7", "seed=8")]);
    assert_ne!(other.stdout.as_slice(), text.as_bytes());
}

#[test]
fn bad_synthetic_spec_is_a_validation_error() {
    assert_eq!(code(&heca(&["--emit-synthetic", "experts=two"])), 2);
    assert_eq!(code(&heca(&["--emit-synthetic", "experts=3,oracle=1"])), 2);
}

#[test]
fn heca_run_prints_summary_and_writes_artifacts() {
    let dir = TempDir::new().unwrap();
    let data = emit(dir.path(), BENCH);
    let out = dir.path().join("run");
    fs::create_dir(&out).unwrap();
    let o = heca(&["--data", &data, "--lambda-grid", GRID, "--window", "8", "--out", out.to_str().unwrap()]);
    let s = summary(&o);
    assert_eq!(s["algorithm"], "heca");
    assert_eq!(s["forecasters"], 5);
    assert_eq!(s["jensen_violations"], 0);
    assert!(s["avg_loss"].as_f64().unwrap() <= 1e-10);
    for f in ["rounds.csv", "summary.json", "comparison.csv", "committees.jsonl"] {
        assert!(out.join(f).is_file(), "missing {f}");
    }
    let written: serde_json::Value = serde_json::from_str(&fs::read_to_string(out.join("summary.json")).unwrap()).unwrap();
    assert_eq!(written, s);
    let rounds = fs::read_to_string(out.join("rounds.csv")).unwrap();
    assert!(rounds.starts_with("t,forecast,target,loss,pi_1,"));
}

#[test]
fn lag_must_match_the_feedback_delay() {
    let dir = TempDir::new().unwrap();
    let data = emit(dir.path(), BENCH);
    let base = ["--data", data.as_str(), "--lambda-grid", GRID, "--window", "8"];
    let mismatch = [&base[..], &["--algo", "heca-delayed", "--lag", "2"]].concat();
    let o = heca(&mismatch);
    assert_eq!(code(&o), 2);
    assert!(String::from_utf8_lossy(&o.stderr).starts_with("heca: "));
    let forced = [&mismatch[..], &["--force-lag"]].concat();
    assert_eq!(summary(&heca(&forced))["algorithm"], "heca-delayed");
    let matched = [&base[..], &["--algo", "heca-delayed", "--lag", "1"]].concat();
    assert_eq!(code(&heca(&matched)), 0);
}

#[test]
fn too_short_panel_is_a_burn_in_error() {
    let dir = TempDir::new().unwrap();
    let data = emit(dir.path(), "experts=5,horizon=10,seed=1");
    assert_eq!(code(&heca(&["--data", &data])), 3);
}

#[test]
fn invalid_inputs_exit_with_validation_code() {
    let dir = TempDir::new().unwrap();
    let data = emit(dir.path(), BENCH);
    for args in [
        vec!["--data", &data, "--algo", "boosting"],
        vec!["--data", &data, "--window", "0"],
        vec!["--data", &data, "--lambda-grid", "1:0.1:0.5"],
        vec!["--data", &data, "--b1", "-1"],
        vec!["--data", &data, "--span", "1990Q1:1991Q1"],
    ] {
        let o = heca(&args);
        assert_eq!(code(&o), 2, "{args:?}: {}", String::from_utf8_lossy(&o.stderr));
    }
    let bad = dir.path().join("bad.csv");
    fs::write(&bad, "period,target,a\n2001Q1,1,oops\n").unwrap();
    assert_eq!(code(&heca(&["--data", bad.to_str().unwrap()])), 2);
    assert_eq!(code(&heca(&["--data", dir.path().join("none.csv").to_str().unwrap()])), 1);
}

#[test]
fn flags_override_the_config_file() {
    let dir = TempDir::new().unwrap();
    let data = emit(dir.path(), BENCH);
    let cfg = dir.path().join("run.conf");
    fs::write(
        &cfg,
        format!("# experiment\ndata = {data}\nalgo = equal-weight\nwindow = 8\nlambda-grid = {GRID}\n"),
    )
    .unwrap();
    let cfg = cfg.to_str().unwrap();
    assert_eq!(summary(&heca(&["--config", cfg]))["algorithm"], "equal-weight");
    assert_eq!(summary(&heca(&["--config", cfg, "--algo", "hedge"]))["algorithm"], "hedge");
    let broken = dir.path().join("broken.conf");
    fs::write(&broken, "window 8\n").unwrap();
    assert_eq!(code(&heca(&["--config", broken.to_str().unwrap()])), 2);
}

#[test]
fn pretty_output_is_a_table() {
    let dir = TempDir::new().unwrap();
    let data = emit(dir.path(), BENCH);
    let o = heca(&["--data", &data, "--lambda-grid", GRID, "--window", "8", "--pretty"]);
    assert_eq!(code(&o), 0);
    let text = String::from_utf8(o.stdout).unwrap();
    assert!(serde_json::from_str::<serde_json::Value>(&text).is_err());
    assert!(text.contains("heca"));
}

#[test]
fn thread_count_does_not_change_results() {
    let dir = TempDir::new().unwrap();
    let data = emit(dir.path(), NOISY);
    let args = ["--data", data.as_str(), "--lambda-grid", GRID, "--window", "8"];
    let one = heca_env(&args, "HECA_THREADS", "1");
    let eight = heca_env(&args, "HECA_THREADS", "8");
    assert_eq!(code(&one), 0);
    assert_eq!(one.stdout, eight.stdout);
    assert_eq!(code(&heca_env(&args, "HECA_THREADS", "zero")), 2);
}
