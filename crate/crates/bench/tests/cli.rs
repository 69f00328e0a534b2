use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_hades")).args(args).output().unwrap()
}

fn write_config(dir: &Path, body: &str) -> String {
    let path = dir.join("config.json");
    fs::write(&path, body).unwrap();
    path.to_str().unwrap().to_string()
}

#[test]
fn fit_writes_result_and_trace() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        r#"{ "model": "lv", "signal": { "kind": "markov", "horizon": 20 }, "n_obs": 20, "optimizer": "lm" }"#,
    );
    let out = run(&["fit", "-c", &cfg]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(String::from_utf8_lossy(&out.stdout).starts_with("fit: lm "));
    let result: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("out/fit_result.json")).unwrap()).unwrap();
    assert_eq!(result["p_hat"].as_array().unwrap().len(), 4);
    let trace = fs::read_to_string(dir.path().join("out/trace.csv")).unwrap();
    assert!(trace.starts_with("iter,loss"));
}

#[test]
fn short_hades_fit_saves_its_network() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        r#"{
            "model": "lv",
            "signal": { "kind": "markov", "horizon": 5 },
            "n_obs": 20,
            "hades": { "max_outer_iterations": 2, "stage1_refine": 1, "stage1": { "epochs": 5 } }
        }"#,
    );
    let out = run(&["fit", "-c", &cfg]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let trace = fs::read_to_string(dir.path().join("out/trace.csv")).unwrap();
    assert_eq!(trace.lines().count(), 3);
    assert!(trace.starts_with("iter,stage1_mse,loss"));
    assert!(dir.path().join("out/network.json").exists());
}

#[test]
fn gen_obs_writes_one_row_per_time() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        r#"{ "model": "lv", "signal": { "kind": "smooth", "horizon": 20 }, "n_obs": 10, "output_dir": "data" }"#,
    );
    let out = run(&["gen-obs", "-c", &cfg]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let obs = fs::read_to_string(dir.path().join("data/observations.csv")).unwrap();
    assert_eq!(obs.lines().count(), 11);
    assert!(dir.path().join("data/signal.csv").exists());
}

#[test]
fn missing_model_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), r#"{ "signal": { "kind": "markov", "horizon": 20 } }"#);
    let out = run(&["fit", "-c", &cfg]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("model"));
}

#[test]
fn unknown_model_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), r#"{ "model": "sir", "signal": { "kind": "markov", "horizon": 20 } }"#);
    let out = run(&["gen-obs", "-c", &cfg]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("sir"));
}

#[test]
fn landscape_needs_its_block() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), r#"{ "model": "lv", "signal": { "kind": "smooth", "horizon": 20 } }"#);
    let out = run(&["landscape", "-c", &cfg]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("`landscape`"));
}

#[test]
fn small_landscape_csv() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        r#"{
            "model": "lv",
            "signal": { "kind": "smooth", "horizon": 20 },
            "landscape": {
                "x": { "param": "p1", "lo": 1.0, "hi": 3.0, "points": 3 },
                "y": { "param": "p2", "lo": 0.25, "hi": 0.75, "points": 3 }
            }
        }"#,
    );
    let out = run(&["landscape", "-c", &cfg]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let text = fs::read_to_string(dir.path().join("out/landscape.csv")).unwrap();
    assert_eq!(text.lines().count(), 4);
}

#[test]
fn missing_config_file_fails() {
    let out = run(&["study", "-c", "/nonexistent/config.json"]);
    assert_ne!(out.status.code(), Some(0));
}

#[test]
fn no_subcommand_is_a_usage_error() {
    assert_eq!(run(&[]).status.code(), Some(1));
    assert_eq!(run(&["--help"]).status.code(), Some(0));
}
