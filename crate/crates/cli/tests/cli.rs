use std::path::Path;
use std::process::{Command, Output};

fn kpplan(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_kpplan"))
        .current_dir(dir)
        .env_remove("KPPLAN_OUT_DIR")
        .args(args)
        .output()
        .expect("binary runs")
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

#[test]
fn sweep_res_three_writes_27_frames() {
    let dir = tempfile::tempdir().unwrap();
    let o = kpplan(dir.path(), &["--out-dir", "o", "sweep", "--res", "3"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let text = std::fs::read_to_string(dir.path().join("o/frames.jsonl")).unwrap();
    assert_eq!(text.lines().count(), 27);
}

#[test]
fn out_dir_env_var_is_honoured() {
    let dir = tempfile::tempdir().unwrap();
    let o = Command::new(env!("CARGO_BIN_EXE_kpplan"))
        .current_dir(dir.path())
        .env("KPPLAN_OUT_DIR", "from-env")
        .args(["sweep", "--res", "2"])
        .output()
        .unwrap();
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(dir.path().join("from-env/frames.jsonl").is_file());
}

#[test]
fn plan_with_missing_roadmap_is_usage_error_naming_path() {
    let dir = tempfile::tempdir().unwrap();
    let o = kpplan(
        dir.path(),
        &["plan", "--roadmap", "missing-roadmap.json", "--start-frame", "0", "--goal-frame", "1"],
    );
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("missing-roadmap.json"), "{}", stderr(&o));
}

#[test]
fn unknown_subcommand_is_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(kpplan(dir.path(), &["fly"]).status.code(), Some(2));
}

#[test]
fn invalid_config_is_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("cfg.json"), r#"{"nodes": 1}"#).unwrap();
    let o = kpplan(dir.path(), &["--config", "cfg.json", "sweep"]);
    assert_eq!(o.status.code(), Some(2));
    std::fs::write(dir.path().join("cfg.json"), r#"{"no_such_field": 1}"#).unwrap();
    let o = kpplan(dir.path(), &["--config", "cfg.json", "sweep"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("no_such_field"), "{}", stderr(&o));
}

#[test]
fn render_rejects_unknown_artifact() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("x.json"), r#"{"hello": 1}"#).unwrap();
    let o = kpplan(dir.path(), &["render", "x.json"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("unknown artifact type"));
}

#[test]
fn render_is_byte_identical_across_runs() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(
        dir.path().join("scene.json"),
        r#"{"image_size":[640,480],"safety_margin":8.0,"obstacles":[[[100,100],[200,100],[200,200]]]}"#,
    )
    .unwrap();
    for out in ["a.svg", "b.svg"] {
        let o = kpplan(dir.path(), &["render", "scene.json", "--output", out]);
        assert!(o.status.success(), "{}", stderr(&o));
    }
    let a = std::fs::read(dir.path().join("a.svg")).unwrap();
    assert_eq!(a, std::fs::read(dir.path().join("b.svg")).unwrap());
}

#[test]
fn pipeline_from_sweep_to_servo() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    std::fs::write(
        d.join("cfg.json"),
        r#"{"sweep":{"res":6},"hidden":[16],"train":{"epochs":3},"nodes":150,"k":10}"#,
    )
    .unwrap();
    let run = |args: &[&str]| {
        let mut all = vec!["--config", "cfg.json", "--out-dir", "o"];
        all.extend_from_slice(args);
        let o = kpplan(d, &all);
        assert!(o.status.success(), "{:?}: {}", args, stderr(&o));
    };
    run(&["sweep"]);
    run(&["make-pairs", "--frames", "o/frames.jsonl"]);
    run(&["train-metric", "--pairs", "o/train_pairs.jsonl", "--validation", "o/validation_pairs.jsonl"]);
    run(&["build-roadmap", "--frames", "o/frames.jsonl", "--metric", "learned", "--model", "o/model.json"]);
    run(&[
        "plan",
        "--roadmap",
        "o/roadmap-learned.json",
        "--model",
        "o/model.json",
        "--frames",
        "o/frames.jsonl",
        "--start-frame",
        "10",
        "--goal-frame",
        "150",
    ]);
    run(&["servo", "--path", "o/path.json"]);
    run(&["render", "o/path.json"]);
    let path: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(d.join("o/path.json")).unwrap()).unwrap();
    let waypoints = path["states"].as_array().unwrap().len();
    let svg = std::fs::read_to_string(d.join("o/path.svg")).unwrap();
    assert_eq!(svg.matches(r#"class="chain""#).count(), waypoints);
    let summary: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(d.join("o/servo.json")).unwrap()).unwrap();
    assert_eq!(summary["verdict"]["verdict"], "converged");
}

#[test]
fn learned_roadmap_without_model_is_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let o = kpplan(dir.path(), &["--out-dir", "o", "sweep", "--res", "3"]);
    assert!(o.status.success());
    let o = kpplan(
        dir.path(),
        &["--out-dir", "o", "build-roadmap", "--frames", "o/frames.jsonl", "--metric", "learned"],
    );
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("--model"));
}
