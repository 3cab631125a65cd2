use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;
use tempfile::TempDir;

fn scenefuse(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_scenefuse"))
        .args(args)
        .current_dir(dir)
        .env("SCENEFUSE_LOG", "error")
        .output()
        .expect("binary runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exited normally")
}

fn json(path: PathBuf) -> Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

/// A small scene that keeps each invocation fast.
fn small_spec(dir: &Path) -> &'static str {
    let spec = serde_json::json!({
        "seed": 4,
        "n_objects": 8,
        "room": [5.0, 5.0, 3.0],
        "trajectory": {"orbit_poses": 48, "sweep_rows": 2, "sweep_poses_per_row": 16}
    });
    fs::write(dir.join("spec.json"), spec.to_string()).unwrap();
    "spec.json"
}

fn synth_small(dir: &Path) {
    let spec = small_spec(dir);
    let out = scenefuse(
        &["synth", "--spec", spec, "--out-frames", "frames.jsonl", "--out-gt", "gt.json", "--out-vocab", "vocab.json"],
        dir,
    );
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
}

fn recalls(report: &Value) -> [f64; 3] {
    ["relationship_recall", "object_recall", "predicate_recall"].map(|k| report[k].as_f64().unwrap())
}

#[test]
fn empty_stream_gives_empty_graph() {
    let dir = TempDir::new().unwrap();
    fs::write(dir.path().join("empty.jsonl"), "").unwrap();
    let out = scenefuse(&["run", "--input", "empty.jsonl", "--output", "g.json"], dir.path());
    assert_eq!(code(&out), 0);
    let g = json(dir.path().join("g.json"));
    assert_eq!(g["nodes"].as_array().unwrap().len(), 0);
    assert_eq!(g["edges"].as_array().unwrap().len(), 0);
}

#[test]
fn missing_config_is_a_config_error() {
    let dir = TempDir::new().unwrap();
    fs::write(dir.path().join("empty.jsonl"), "").unwrap();
    let out = scenefuse(&["run", "--config", "absent.json", "--input", "empty.jsonl", "--output", "g.json"], dir.path());
    assert_eq!(code(&out), 3);
}

#[test]
fn invalid_config_is_a_config_error() {
    let dir = TempDir::new().unwrap();
    fs::write(dir.path().join("empty.jsonl"), "").unwrap();
    fs::write(dir.path().join("cfg.json"), r#"{"hellinger_threshold": 1.5}"#).unwrap();
    let out = scenefuse(&["run", "--config", "cfg.json", "--input", "empty.jsonl", "--output", "g.json"], dir.path());
    assert_eq!(code(&out), 3);
    fs::write(dir.path().join("cfg.json"), r#"{"no_such_key": 1}"#).unwrap();
    let out = scenefuse(&["run", "--config", "cfg.json", "--input", "empty.jsonl", "--output", "g.json"], dir.path());
    assert_eq!(code(&out), 3);
}

#[test]
fn unreadable_input_exits_2() {
    let dir = TempDir::new().unwrap();
    let out = scenefuse(&["run", "--input", "absent.jsonl", "--output", "g.json"], dir.path());
    assert_eq!(code(&out), 2);
    assert!(!dir.path().join("g.json").exists());
}

#[test]
fn malformed_lines_are_skipped() {
    let dir = TempDir::new().unwrap();
    synth_small(dir.path());
    let frames = fs::read_to_string(dir.path().join("frames.jsonl")).unwrap();
    let mut lines: Vec<&str> = frames.lines().collect();
    lines.insert(3, "{not json");
    fs::write(dir.path().join("broken.jsonl"), lines.join("\n")).unwrap();
    let out = scenefuse(&["run", "--input", "broken.jsonl", "--output", "g.json"], dir.path());
    assert_eq!(code(&out), 0);
    let summary: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(summary["skipped_lines"], 1);
    assert_eq!(summary["frames"].as_u64().unwrap() as usize, lines.len() - 1);
}

#[test]
fn perfect_and_empty_predictions() {
    let dir = TempDir::new().unwrap();
    synth_small(dir.path());
    let gt = json(dir.path().join("gt.json"));
    assert!(!gt["triplets"].as_array().unwrap().is_empty());

    // One node per instance, placed on the instance's points, with the true triplets as edges.
    let vocab = json(dir.path().join("vocab.json"));
    let nodes: Vec<Value> = gt["instances"]
        .as_array()
        .unwrap()
        .iter()
        .map(|inst| {
            serde_json::json!({
                "id": inst["id"], "class_id": inst["class_id"], "weight": 1, "score_sum": 1.0,
                "mean": inst["points"][0], "cov": [0.01, 0.0, 0.0, 0.0, 0.01, 0.0, 0.0, 0.0, 0.01],
                "eval_points": inst["points"], "eval_points_seen": inst["points"].as_array().unwrap().len()
            })
        })
        .collect();
    let edges: Vec<Value> = gt["triplets"]
        .as_array()
        .unwrap()
        .iter()
        .map(|t| serde_json::json!({"subject": t[0], "object": t[1], "predicate": t[2], "votes": {t[2].to_string(): [1, 1.0]}}))
        .collect();
    let perfect = serde_json::json!({"nodes": nodes, "edges": edges, "vocab": vocab});
    fs::write(dir.path().join("perfect.json"), perfect.to_string()).unwrap();
    let out = scenefuse(&["eval", "--pred", "perfect.json", "--gt", "gt.json", "--report", "r.json"], dir.path());
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    assert_eq!(recalls(&json(dir.path().join("r.json"))), [1.0; 3]);

    let empty = serde_json::json!({"nodes": [], "edges": [], "vocab": vocab});
    fs::write(dir.path().join("empty.json"), empty.to_string()).unwrap();
    let out = scenefuse(&["eval", "--pred", "empty.json", "--gt", "gt.json", "--report", "r0.json"], dir.path());
    assert_eq!(code(&out), 0);
    assert_eq!(recalls(&json(dir.path().join("r0.json"))), [0.0; 3]);
}

#[test]
fn vocabulary_mismatch_exits_4() {
    let dir = TempDir::new().unwrap();
    synth_small(dir.path());
    let mut vocab = json(dir.path().join("vocab.json"));
    vocab["objects"][0] = "not-a-class".into();
    let empty = serde_json::json!({"nodes": [], "edges": [], "vocab": vocab});
    fs::write(dir.path().join("pred.json"), empty.to_string()).unwrap();
    let out = scenefuse(&["eval", "--pred", "pred.json", "--gt", "gt.json", "--report", "r.json"], dir.path());
    assert_eq!(code(&out), 4);
}

#[test]
fn synth_run_eval_round_trip() {
    let dir = TempDir::new().unwrap();
    synth_small(dir.path());
    let out = scenefuse(
        &["run", "--input", "frames.jsonl", "--output", "g.json", "--record-eval-points", "--export-dot", "g.dot", "--bench"],
        dir.path(),
    );
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    assert!(fs::read_to_string(dir.path().join("g.dot")).unwrap().starts_with("digraph"));
    let bench = json(dir.path().join("g.bench.json"));
    assert!(bench["merge"]["count"].as_u64().unwrap() > 0);

    // The graph carries placeholder names; eval takes the ground truth's.
    let out = scenefuse(&["eval", "--pred", "g.json", "--gt", "gt.json", "--report", "r.json"], dir.path());
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let [rel, obj, _] = recalls(&json(dir.path().join("r.json")));
    assert!(obj >= 0.9, "object recall {obj}");
    assert!(rel >= 0.8, "relationship recall {rel}");
}

#[test]
fn pipeline_matches_direct() {
    let dir = TempDir::new().unwrap();
    synth_small(dir.path());
    let base = ["run", "--input", "frames.jsonl", "--record-eval-points", "--vocab", "vocab.json", "--output"];
    assert_eq!(code(&scenefuse(&[&base[..], &["direct.json"]].concat(), dir.path())), 0);
    assert_eq!(code(&scenefuse(&[&base[..], &["piped.json", "--pipeline"]].concat(), dir.path())), 0);
    assert_eq!(fs::read(dir.path().join("direct.json")).unwrap(), fs::read(dir.path().join("piped.json")).unwrap());
}

#[test]
fn single_threshold_sweep_is_deterministic() {
    let dir = TempDir::new().unwrap();
    let spec = small_spec(dir.path());
    let args = ["sweep", "--spec", spec, "--seeds", "1,2", "--thresholds", "0.85", "--report"];
    let a = scenefuse(&[&args[..], &["a.json"]].concat(), dir.path());
    let b = scenefuse(&[&args[..], &["b.json"]].concat(), dir.path());
    assert_eq!(code(&a), 0, "{}", String::from_utf8_lossy(&a.stderr));
    assert_eq!(code(&b), 0);
    let table = String::from_utf8(a.stdout).unwrap();
    assert_eq!(table.lines().count(), 3);
    assert_eq!(json(dir.path().join("a.json"))["rows"].as_array().unwrap().len(), 1);
    assert_eq!(json(dir.path().join("a.json")), json(dir.path().join("b.json")));
}

#[test]
fn invalid_scene_spec_is_a_config_error() {
    let dir = TempDir::new().unwrap();
    fs::write(dir.path().join("spec.json"), r#"{"miss_rate_typo": 0.1}"#).unwrap();
    let out = scenefuse(&["synth", "--spec", "spec.json", "--out-frames", "f.jsonl", "--out-gt", "gt.json"], dir.path());
    assert_eq!(code(&out), 3);
    fs::write(dir.path().join("spec.json"), r#"{"object_extent": [2.0, 1.0]}"#).unwrap();
    let out = scenefuse(&["synth", "--spec", "spec.json", "--out-frames", "f.jsonl", "--out-gt", "gt.json"], dir.path());
    assert_eq!(code(&out), 3);
}

#[test]
fn infeasible_scene_is_a_generation_error() {
    let dir = TempDir::new().unwrap();
    fs::write(dir.path().join("spec.json"), r#"{"n_objects": 400, "room": [2.0, 2.0, 3.0], "stack_probability": 0.0}"#).unwrap();
    let out = scenefuse(&["synth", "--spec", "spec.json", "--out-frames", "f.jsonl", "--out-gt", "gt.json"], dir.path());
    assert_eq!(code(&out), 5);
}
