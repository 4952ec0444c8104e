use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_infattack"))
}

fn toy() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures/toy")
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().unwrap()
}

fn json_out(o: &Output) -> Value {
    assert!(o.status.success(), "stderr: {}", String::from_utf8_lossy(&o.stderr));
    serde_json::from_slice(&o.stdout).unwrap()
}

fn close(a: &Value, b: &Value) -> bool {
    match (a, b) {
        (Value::Number(x), Value::Number(y)) => {
            let (x, y) = (x.as_f64().unwrap(), y.as_f64().unwrap());
            (x - y).abs() <= 1e-9 * (1.0 + x.abs())
        }
        (Value::Array(x), Value::Array(y)) => x.len() == y.len() && x.iter().zip(y).all(|(p, q)| close(p, q)),
        (Value::Object(x), Value::Object(y)) => {
            x.len() == y.len() && x.iter().all(|(k, v)| y.get(k).is_some_and(|w| close(v, w)))
        }
        _ => a == b,
    }
}

#[test]
fn attack_matches_golden_plan() {
    let toy = toy();
    let o = run(&[
        "attack", "--bundle", toy.to_str().unwrap(), "--target", "v", "--budget", "1", "--k", "2",
        "--mode", "exact",
    ]);
    let mut plan = json_out(&o);
    assert!(plan["wall_time_ms"].as_f64().unwrap() >= 0.0);
    plan.as_object_mut().unwrap().remove("wall_time_ms");
    let golden: Value = serde_json::from_str(include_str!("golden/attack_toy_exact.json")).unwrap();
    assert!(close(&plan, &golden), "got {plan:#}");
}

#[test]
fn influence_prints_agreeing_values() {
    let toy = toy();
    let o = run(&["influence", "--bundle", toy.to_str().unwrap(), "--v", "v", "--u", "u6", "--k", "2"]);
    let out = json_out(&o);
    let exact = out["exact"].as_f64().unwrap();
    assert!((exact - out["dfs"].as_f64().unwrap()).abs() < 1e-12);
    assert!((exact - out["matrix"].as_f64().unwrap()).abs() < 1e-12);
    // v-u5-u6 is the only 2-step walk: 4^-1/2 * 5^-1 * 2^-1/2.
    assert!((exact - 1.0 / (5.0 * 8f64.sqrt())).abs() < 1e-12);
    let obj = &out["objective"];
    assert!((obj["exact"].as_f64().unwrap() - obj["dfs"].as_f64().unwrap()).abs() < 1e-12);
    assert!((obj["approx_constant_add"].as_f64().unwrap() - -0.3032).abs() < 5e-4);
    assert_eq!(out["candidate"]["direction"], "add");
}

#[test]
fn missing_config_is_a_data_error() {
    let o = run(&["sweep", "--config", "definitely-missing.json"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn usage_errors_exit_one() {
    assert_eq!(run(&["attack", "--frobnicate"]).status.code(), Some(1));
    assert_eq!(run(&[]).status.code(), Some(1));
    let toy = toy();
    let o = run(&["attack", "--bundle", toy.to_str().unwrap(), "--target", "nobody"]);
    assert_eq!(o.status.code(), Some(1));
    let o = run(&["attack", "--bundle", toy.to_str().unwrap(), "--target", "v", "--budget", "0"]);
    assert_eq!(o.status.code(), Some(1));
    assert_eq!(run(&["--help"]).status.code(), Some(0));
}

#[test]
fn sweep_config_validation_is_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("cfg.json");
    std::fs::write(&cfg, r#"{"sbm": {"classes": 2, "per_class": 30, "p_in": 0.2, "p_out": 0.01,
        "feature_dim": 4, "noise": 1.0, "seed": 0}, "budgets": [3, 2]}"#)
        .unwrap();
    let o = run(&["sweep", "--config", cfg.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn gen_train_inspect_sweep_pipeline() {
    let dir = tempfile::tempdir().unwrap();
    let bundle = dir.path().join("sbm");
    let o = run(&[
        "gen-sbm", "--classes", "2", "--per-class", "60", "--p-in", "0.1", "--p-out", "0.01",
        "--noise", "1.0", "--seed", "3", "--out", bundle.to_str().unwrap(),
    ]);
    let gen = json_out(&o);
    assert_eq!(gen["num_nodes"], 120);

    let info = json_out(&run(&["inspect", "--bundle", bundle.to_str().unwrap()]));
    assert_eq!(info["num_nodes"], 120);
    assert_eq!(info["num_edges"], gen["num_edges"]);
    assert_eq!(info["class_counts"], serde_json::json!([60, 60]));

    let model = dir.path().join("model.json");
    let trained = json_out(&run(&[
        "train-victim", "--bundle", bundle.to_str().unwrap(), "--per-class", "10",
        "--out", model.to_str().unwrap(),
    ]));
    assert!(trained["unseen_accuracy"].as_f64().unwrap() > 0.8);

    let plan = json_out(&run(&[
        "attack", "--bundle", bundle.to_str().unwrap(), "--target", "5", "--budget", "4",
        "--labels", "estimated", "--model", model.to_str().unwrap(),
    ]));
    assert!(plan["edges_used"].as_u64().unwrap() <= 4);

    let cfg = dir.path().join("cfg.json");
    std::fs::write(
        &cfg,
        serde_json::json!({
            "bundle": bundle,
            "budgets": [1, 2, 4],
            "n_per_class": 10,
            "n_targets": 8,
        })
        .to_string(),
    )
    .unwrap();
    let out = dir.path().join("out");
    let summary = json_out(&run(&[
        "sweep", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap(), "--workers", "2",
    ]));
    assert_eq!(summary["schema_version"], 1);
    let csv = std::fs::read_to_string(out.join("results.csv")).unwrap();
    let header = csv.lines().next().unwrap();
    assert_eq!(
        header,
        "target,target_label,budget,success,edges_added,edges_removed,final_margin,wall_time_ms,mode,label_source"
    );
    assert_eq!(csv.lines().count(), 1 + 8 * 3);
}
