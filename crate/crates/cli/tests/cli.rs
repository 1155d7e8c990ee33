use serde_json::Value;
use std::path::Path;
use std::process::{Command, Output};

const SCALAR: &str = r#"{
    "objective": {"type": "quadratic", "A": [[1.0]], "b": [0.0]},
    "noise": {"type": "gaussian", "sigma": [[1.0]]},
    "a": 2.0, "b": 1.0, "x1": [1.0]
}"#;

fn ldp(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ldp-sgd"))
        .current_dir(dir)
        .env_remove("LDP_SGD_SEED")
        .args(args)
        .output()
        .expect("binary runs")
}

fn with_config(text: &str) -> tempfile::TempDir {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("cfg.json"), text).unwrap();
    dir
}

fn json(out: &Output) -> Value {
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    serde_json::from_slice(&out.stdout).unwrap()
}

#[test]
fn rate_examples() {
    let dir = with_config(SCALAR);
    let v = json(&ldp(dir.path(), &["rate", "--config", "cfg.json", "--z", "1"]));
    assert!((v["I_star"].as_f64().unwrap() - 0.375).abs() < 1e-9, "{v}");
    assert!((v["I_star_closed"].as_f64().unwrap() - 0.375).abs() < 1e-15);
    let v = json(&ldp(dir.path(), &["rate", "--config", "cfg.json", "--z", "0"]));
    assert_eq!(v["rate"].as_f64(), Some(0.0));
    let v = json(&ldp(dir.path(), &["ball-rate", "--config", "cfg.json", "--delta", "0.5"]));
    assert!((v["rate"].as_f64().unwrap() - 0.09375).abs() < 1e-9, "{v}");
    let v = json(&ldp(dir.path(), &["psi", "--config", "cfg.json", "--lambda", "1", "--lambda", "2"]));
    assert!((v[0]["psi_star"].as_f64().unwrap() - 2.0 / 3.0).abs() < 1e-10);
    assert_eq!(v[1]["remainder"].as_f64(), Some(0.0));
}

#[test]
fn hpb_constants() {
    let dir = with_config(SCALAR);
    let v = json(&ldp(dir.path(), &["hpb", "--config", "cfg.json", "--delta", "1", "--ks", "10"]));
    assert!((v["B"].as_f64().unwrap() - 3.0 / 64.0).abs() < 1e-15, "{v}");
    assert!((v["k0"].as_f64().unwrap() - 16.0 / 3.0).abs() < 1e-12);
    let v = json(&ldp(dir.path(), &["hpb", "--config", "cfg.json", "--x1", "20"]));
    assert!((v["B"].as_f64().unwrap() - 3.0 / 320.0).abs() < 1e-15);
    let v = json(&ldp(dir.path(), &["hpb", "--config", "cfg.json", "--x1", "20", "--drop-initial-branch"]));
    assert!((v["B"].as_f64().unwrap() - 3.0 / 64.0).abs() < 1e-15);
}

#[test]
fn simulate_outputs() {
    let dir = with_config(SCALAR);
    let out = ldp(dir.path(), &["simulate", "--config", "cfg.json", "--horizon", "1"]);
    let text = String::from_utf8(out.stdout).unwrap();
    assert_eq!(text, "k,dist\n1,1.0\n");

    let run = |name: &str| {
        let o = ldp(
            dir.path(),
            &["simulate", "--config", "cfg.json", "--horizon", "200", "--seed", "7", "--record-at", "100", "-o", name],
        );
        assert!(o.status.success());
        std::fs::read(dir.path().join(name)).unwrap()
    };
    let (a, b) = (run("a.csv"), run("b.csv"));
    assert_eq!(a, b);
    assert_eq!(String::from_utf8(a).unwrap().lines().count(), 201);
}

#[test]
fn zero_noise_distance_decreases_once_steps_are_small() {
    let dir = with_config(
        r#"{"objective": {"type": "quadratic", "A": [[1.0]], "b": [0.0]},
            "noise": {"type": "zero"}, "a": 2.0, "x1": [3.0], "horizon": 40}"#,
    );
    let out = ldp(dir.path(), &["simulate", "--config", "cfg.json"]);
    let text = String::from_utf8(out.stdout).unwrap();
    let d: Vec<f64> = text.lines().skip(1).map(|l| l.split(',').nth(1).unwrap().parse().unwrap()).collect();
    // α_k ≤ μ/L² = 1 from k = 1 on with a = 2, b = 1
    assert!(d.windows(2).all(|w| w[1] < w[0] || w[0] == 0.0), "{d:?}");
}

#[test]
fn config_errors_exit_2_without_output() {
    let dir = with_config(SCALAR);
    let o = ldp(dir.path(), &["rate", "--config", "cfg.json", "--a", "0.5", "--z", "1", "-o", "r.json"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("a·mu must exceed 1"));
    assert!(!dir.path().join("r.json").exists());

    let o = ldp(dir.path(), &["tail", "--config", "missing.json"]);
    assert_eq!(o.status.code(), Some(2));
    let bad = with_config(r#"{"objective": 3}"#);
    assert_eq!(ldp(bad.path(), &["rate", "--config", "cfg.json"]).status.code(), Some(2));
}

#[test]
fn divergence_exits_3_and_names_k() {
    let dir = with_config(SCALAR);
    let o = ldp(dir.path(), &["simulate", "--config", "cfg.json", "--a", "1000000", "--horizon", "500"]);
    assert_eq!(o.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&o.stderr).contains("diverged at k ="));
}

#[test]
fn env_seed_is_a_fallback() {
    let dir = with_config(SCALAR);
    let base = ["tail", "--config", "cfg.json", "--delta", "0.5", "--ks", "5,10", "-n", "3000"];
    let env_run = Command::new(env!("CARGO_BIN_EXE_ldp-sgd"))
        .current_dir(dir.path())
        .env("LDP_SGD_SEED", "42")
        .args(base)
        .output()
        .unwrap();
    let mut flag_args = base.to_vec();
    flag_args.extend(["--seed", "42"]);
    let flag_run = ldp(dir.path(), &flag_args);
    let default_run = ldp(dir.path(), &base);
    assert_eq!(env_run.stdout, flag_run.stdout);
    assert_ne!(env_run.stdout, default_run.stdout);
    assert!(String::from_utf8_lossy(&flag_run.stdout).starts_with("k,p_hat,ci_lo,ci_hi,n,hits\n"));
}

#[test]
fn compare_writes_curves_and_summary() {
    let dir = with_config(
        r#"{"objective": {"type": "quadratic", "A": [[1.0, 0.0], [0.0, 1.5]], "b": [0.0, 0.0]},
            "noises": [{"type": "gaussian", "sigma": [[0.04, 0.0], [0.0, 0.04]]}, {"type": "rademacher", "m": 0.2}],
            "a": 2.0, "x1": [0.0, 0.0], "deltas": [0.1], "ks": [5, 10, 15, 20, 25, 30, 35, 40],
            "replications": 20000, "fit": {"p_min": 1e-3}}"#,
    );
    let o = ldp(dir.path(), &["compare", "--config", "cfg.json", "--seed", "3", "-o", "out"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let out = dir.path().join("out");
    for f in ["tail_0_gaussian_delta0.csv", "tail_1_rademacher_delta0.csv", "comparison.csv", "summary.json"] {
        assert!(out.join(f).exists(), "{f}");
    }
    let table = std::fs::read_to_string(out.join("comparison.csv")).unwrap();
    assert!(table.starts_with("noise,delta,k-window,empirical_rate,rate_se,theory_rate,hpb_rate\n"));
    let summary: Value = serde_json::from_str(&std::fs::read_to_string(out.join("summary.json")).unwrap()).unwrap();
    assert_eq!(summary["noises"].as_array().unwrap().len(), 2);
}

#[test]
fn quick_check_suite_passes() {
    let dir = tempfile::tempdir().unwrap();
    let o = ldp(dir.path(), &["check"]);
    let text = String::from_utf8_lossy(&o.stdout);
    assert!(o.status.success(), "{text}");
    assert_eq!(text.lines().filter(|l| l.contains(": PASS")).count(), 7);
}
