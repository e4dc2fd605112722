use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

const SMALL: &str = r#"
seed = 3

[[subsystems]]
mass = 1.0
spring_constant = 1.2
damping = 1.7

[[subsystems]]
mass = 1.0
spring_constant = 1.5
damping = 1.7
train_forcing = { kind = "sinusoid", amplitude = 0.5, angular_frequency = 1.0 }
test_forcing = { kind = "sinusoid", amplitude = 0.5, angular_frequency = 1.3, phase = 0.5 }

[data]
train_trajectories = 4
test_trajectories = 2
steps = 50

[model]
hamiltonian_hidden = [8]
dissipation_hidden = [8]

[train]
steps = 100

[evaluate]
trajectories = 2
rollout_steps = 100

[bound]
samples = 200

[passivity]
trajectories = 2
steps = 100
"#;

fn phnn(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_phnn"))
        .args(args)
        .output()
        .unwrap()
}

fn config(dir: &Path, text: &str) -> PathBuf {
    let path = dir.join("run.toml");
    fs::write(&path, text).unwrap();
    path
}

fn run_ok(cmd: &str, cfg: &Path, out: &Path, extra: &[&str]) -> String {
    let mut args = vec![
        cmd,
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
    ];
    args.extend_from_slice(extra);
    let o = phnn(&args);
    assert!(
        o.status.success(),
        "{cmd} failed: {}",
        String::from_utf8_lossy(&o.stderr)
    );
    String::from_utf8(o.stdout).unwrap()
}

fn json(path: &Path) -> serde_json::Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

#[test]
fn full_pipeline() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config(dir.path(), SMALL);
    let out = dir.path().join("out");
    for cmd in [
        "simulate",
        "gen-data",
        "train",
        "compose",
        "learn-coupling",
        "evaluate",
        "bound-report",
        "passivity-check",
    ] {
        run_ok(cmd, &cfg, &out, &[]);
    }

    let coupling = json(&out.join("models/coupling_learned.json"));
    assert_eq!(coupling["variant"], "constant");
    assert_eq!(coupling["free_entries"].as_array().unwrap().len(), 4);

    let bound = json(&out.join("reports/bound.json"));
    let lhs = bound["lhs_max"].as_f64().unwrap();
    let rhs = bound["rhs"].as_f64().unwrap();
    assert!(lhs <= rhs, "lhs {lhs} > rhs {rhs}");
    assert_eq!(bound["samples"], 200);

    let passivity = json(&out.join("reports/passivity.json"));
    for m in passivity["models"].as_array().unwrap() {
        assert_eq!(m["violations"], 0, "{m}");
    }

    let evaluation = json(&out.join("reports/evaluate.json"));
    let models = evaluation.as_array().unwrap();
    assert_eq!(models.len(), 3);
    assert_eq!(models[2]["rollout_rmse"].as_array().unwrap().len(), 2);
    assert!(models
        .iter()
        .all(|m| m["one_step_test_loss"].as_f64().unwrap() >= 0.0));

    let rollout = fs::read_to_string(out.join("reports/composite_rollout_0.csv")).unwrap();
    assert_eq!(rollout.lines().count(), 102);
    let energy = fs::read_to_string(out.join("reports/passivity_energy.csv")).unwrap();
    assert!(energy.starts_with("t,hamiltonian,dh_dt\n"));
}

#[test]
fn simulate_writes_full_trajectories() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config(dir.path(), SMALL);
    let out = dir.path().join("out");
    run_ok("simulate", &cfg, &out, &[]);
    for name in ["subsystem_0", "subsystem_1", "composite"] {
        let csv = fs::read_to_string(out.join(format!("simulate/{name}_traj_0.csv"))).unwrap();
        assert_eq!(csv.lines().count(), 502, "{name}");
        let ds = json(&out.join(format!("simulate/{name}.json")));
        assert_eq!(ds["trajectories"][0]["t"].as_array().unwrap().len(), 501);
    }
}

#[test]
fn repeated_seed_gives_identical_files() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config(dir.path(), SMALL);
    let (a, b, c) = (
        dir.path().join("a"),
        dir.path().join("b"),
        dir.path().join("c"),
    );
    run_ok("gen-data", &cfg, &a, &["--seed", "11"]);
    run_ok("gen-data", &cfg, &b, &["--seed", "11"]);
    run_ok("gen-data", &cfg, &c, &["--seed", "12"]);
    let read = |d: &Path| fs::read(d.join("data/subsystem_0_train.json")).unwrap();
    assert_eq!(read(&a), read(&b));
    assert_ne!(read(&a), read(&c));
    run_ok("train", &cfg, &a, &["--seed", "11"]);
    run_ok("train", &cfg, &b, &["--seed", "11"]);
    let model = |d: &Path| fs::read(d.join("models/subsystem_1.json")).unwrap();
    assert_eq!(model(&a), model(&b));
}

#[test]
fn missing_config_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("nope.toml");
    let o = phnn(&["simulate", "--config", missing.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("nope.toml"));
}

#[test]
fn invalid_config_values_are_config_errors() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config(dir.path(), &SMALL.replace("mass = 1.0", "mass = -1.0"));
    let o = phnn(&["gen-data", "--config", cfg.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(!o.stderr.is_empty());
}

#[test]
fn missing_artifacts_are_validation_errors() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config(dir.path(), SMALL);
    let out = dir.path().join("empty");
    let o = phnn(&[
        "train",
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&o.stderr).contains("gen-data"));
}

#[test]
fn divergence_has_its_own_exit_code() {
    let dir = tempfile::tempdir().unwrap();
    let text = SMALL.replace(
        "amplitude = 0.5, angular_frequency = 1.0 }",
        "amplitude = 1e12, angular_frequency = 1.0, phase = 1.5 }",
    );
    let cfg = config(dir.path(), &text);
    let out = dir.path().join("out");
    let o = phnn(&[
        "simulate",
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(
        o.status.code(),
        Some(4),
        "{}",
        String::from_utf8_lossy(&o.stderr)
    );
}

#[test]
fn json_configs_are_accepted() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("run.json");
    let text = r#"{
        "subsystems": [{"mass": 1.0, "spring_constant": 1.2, "damping": 1.7}],
        "simulate": {"trajectories": 2, "steps": 10}
    }"#;
    fs::write(&path, text).unwrap();
    let out = dir.path().join("out");
    run_ok("simulate", &path, &out, &[]);
    assert!(out.join("simulate/subsystem_0_traj_1.csv").exists());
}
