use std::path::Path;
use std::process::{Command, Output};

fn fiberlat(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_fiberlat"))
        .args(args)
        .current_dir(cwd)
        .output()
        .expect("binary runs")
}

fn write_config(dir: &Path, name: &str, json: &str) -> String {
    let path = dir.join(name);
    std::fs::write(&path, json).unwrap();
    path.to_str().unwrap().to_string()
}

const D3_EXAMPLE: &str = r#"{
  "params": {"d": 3, "s": 0.5, "p": 2.0, "ell": 0.0, "alpha": 0.0, "c": 1.0, "c_tilde": 0.5, "eps": 0.25},
  "eps_sequence": [0.25, 0.125],
  "seeds": [1, 2]
}"#;

#[test]
fn validate_accepts_the_three_dimensional_example() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "d3.json", D3_EXAMPLE);
    let out = fiberlat(&["validate", "--config", &cfg], dir.path());
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let report: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(report["probability"], -4.0);
    assert_eq!(report["connection_strength"], -4.0);
}

#[test]
fn validate_names_the_violated_probability_bound() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "bad.json",
        r#"{"params": {"d": 2, "s": 0.5, "p": 2.0, "ell": 3.0, "alpha": 0.0, "c": 1.0, "c_tilde": 0.5, "eps": 0.125}}"#,
    );
    let out = fiberlat(&["validate", "--config", &cfg], dir.path());
    assert_eq!(out.status.code(), Some(1));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("probability-bound"), "{err}");
}

#[test]
fn malformed_config_is_a_validation_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "typo.json", r#"{"epsilons": [0.1]}"#);
    let out = fiberlat(&["validate", "--config", &cfg], dir.path());
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn runtime_failures_exit_with_two() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("missing.json");
    let out = fiberlat(&["validate", "--config", missing.to_str().unwrap()], dir.path());
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn sigma_study_output_is_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "small.json",
        r#"{"eps_sequence": [0.125, 0.0625], "seeds": [3, 4, 5, 6]}"#,
    );
    let mut csvs = Vec::new();
    for run in ["a", "b"] {
        let out = fiberlat(&["converge-sigma", "--config", &cfg, "--out", run, "--seed", "7"], dir.path());
        assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
        csvs.push(std::fs::read_to_string(dir.path().join(run).join("sigma.csv")).unwrap());
        assert!(dir.path().join(run).join("sigma_summary.json").exists());
    }
    assert_eq!(csvs[0], csvs[1]);
    assert!(csvs[0].starts_with("# fiberlat-v1\n"));
    assert_eq!(csvs[0].lines().count(), 2 + 2 * 4);
}

#[test]
fn single_instance_commands_write_their_files() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "small.json", r#"{"eps_sequence": [0.125], "seeds": [9]}"#);
    for (cmd, file) in [
        ("sample-fibers", "fibers.csv"),
        ("energy", "energy.json"),
        ("minimize", "minimizer.csv"),
        ("limit-energy", "limit_energy.json"),
    ] {
        let out = fiberlat(&[cmd, "--config", &cfg, "--out", "o"], dir.path());
        assert_eq!(out.status.code(), Some(0), "{cmd}: {}", String::from_utf8_lossy(&out.stderr));
        assert!(dir.path().join("o").join(file).exists(), "{cmd}");
    }
    let energy: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("o/energy.json")).unwrap()).unwrap();
    assert!(energy["energy"]["total"].as_f64().unwrap().is_finite());
}
