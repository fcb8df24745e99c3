use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use tsgf::tensor::{io, Tensor};

const TINY: &str = r#"{
  "dataset": {"train_per_class": 3, "val_per_class": 1, "test_per_class": 1},
  "teacher": {"epochs": 1},
  "distill": {"iterations": 2, "ipc": 1},
  "eval": {"epochs": 1, "seeds": [0]}
}"#;

fn tsgf(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_tsgf")).args(args).env("RUST_LOG", "warn").output().unwrap()
}

fn tiny(dir: &Path) -> (String, String) {
    let cfg = dir.join("tiny.json");
    fs::write(&cfg, TINY).unwrap();
    (cfg.display().to_string(), dir.join("run").display().to_string())
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

#[test]
fn missing_config_file_is_a_user_error() {
    let o = tsgf(&["--config", "/nonexistent/cfg.json", "show-config"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("/nonexistent/cfg.json"), "{}", stderr(&o));
}

#[test]
fn usage_errors_exit_one_and_help_exits_zero() {
    assert_eq!(tsgf(&["frobnicate"]).status.code(), Some(1));
    assert_eq!(tsgf(&["--preset", "huge", "show-config"]).status.code(), Some(1));
    assert_eq!(tsgf(&["--init", "zeros", "show-config"]).status.code(), Some(1));
    assert_eq!(tsgf(&["--help"]).status.code(), Some(0));
}

#[test]
fn stages_name_the_missing_upstream_stage() {
    let dir = tempfile::tempdir().unwrap();
    let (cfg, out) = tiny(dir.path());
    let o = tsgf(&["--preset", "compact", "--config", &cfg, "--out", &out, "distill"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("gen-data"), "{}", stderr(&o));
    assert!(tsgf(&["--preset", "compact", "--config", &cfg, "--out", &out, "gen-data"]).status.success());
    let o = tsgf(&["--preset", "compact", "--config", &cfg, "--out", &out, "distill"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("train-teacher"), "{}", stderr(&o));
}

#[test]
fn flags_override_config_file_over_preset() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("c.json");
    fs::write(&cfg, r#"{"distill": {"ipc": 3, "iterations": 7}}"#).unwrap();
    let cfg = cfg.display().to_string();
    let show = |args: &[&str]| -> serde_json::Value {
        let o = tsgf(args);
        assert!(o.status.success(), "{}", stderr(&o));
        serde_json::from_slice(&o.stdout).unwrap()
    };
    let preset = show(&["--preset", "compact", "show-config"]);
    assert_eq!(preset["distill"]["ipc"], 5);
    assert_eq!(preset["distill"]["iterations"], 200);
    let file = show(&["--preset", "compact", "--config", &cfg, "show-config"]);
    assert_eq!(file["distill"]["ipc"], 3);
    assert_eq!(file["distill"]["iterations"], 7);
    // untouched keys keep the preset's values
    assert_eq!(file["distill"]["lr"], preset["distill"]["lr"]);
    assert_eq!(file["dataset"], preset["dataset"]);
    let flag = show(&["--preset", "compact", "--config", &cfg, "--ipc", "4", "--no-tsgf-a", "show-config"]);
    assert_eq!(flag["distill"]["ipc"], 4);
    assert_eq!(flag["distill"]["iterations"], 7);
    assert_eq!(flag["distill"]["tsgf_a"], false);
    assert_eq!(flag["eval"]["augment"], "none");
}

#[test]
fn static_video_gets_a_full_mask() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("static.tsgf");
    io::save(&path, &Tensor::full(vec![6, 1, 4, 4], 0.4)).unwrap();
    let o = tsgf(&["--out", &dir.path().join("run").display().to_string(), "inspect-saliency", "--video", &path.display().to_string()]);
    assert!(o.status.success(), "{}", stderr(&o));
    let text = String::from_utf8(o.stdout).unwrap();
    let rows: Vec<&str> = text.lines().filter(|l| l.chars().next().is_some_and(|c| c.is_ascii_digit())).collect();
    assert_eq!(rows.len(), 6);
    for row in rows {
        let cols: Vec<&str> = row.split(',').collect();
        assert_eq!(cols[1..], ["0", "0", "1"], "{row}");
    }
    assert!(text.contains("frame_index,d,s,M"));
}

#[test]
fn gen_data_is_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let (cfg, out) = tiny(dir.path());
    let read = || -> Vec<Vec<u8>> {
        assert!(tsgf(&["--preset", "compact", "--config", &cfg, "--out", &out, "gen-data"]).status.success());
        ["manifest.json", "train.tsgf", "val.tsgf", "test.tsgf"].iter().map(|f| fs::read(Path::new(&out).join("data").join(f)).unwrap()).collect()
    };
    assert_eq!(read(), read());
}

#[test]
fn run_all_is_reproducible_and_writes_every_artifact() {
    let dir = tempfile::tempdir().unwrap();
    let (cfg, _) = tiny(dir.path());
    let outs = ["a", "b"].map(|n| dir.path().join(n));
    for out in &outs {
        let o = tsgf(&["--preset", "compact", "--config", &cfg, "--out", &out.display().to_string(), "run-all"]);
        assert!(o.status.success(), "{}", stderr(&o));
    }
    for f in ["teacher/teacher.ckpt", "distilled/manifest.json", "distilled/run_log.csv", "eval/report.csv", "eval/summary.txt"] {
        let (a, b) = (fs::read(outs[0].join(f)).unwrap(), fs::read(outs[1].join(f)).unwrap());
        assert!(a == b, "{f} differs between identical runs");
    }
    let csv = fs::read_to_string(outs[0].join("eval/report.csv")).unwrap();
    assert_eq!(csv.lines().count(), 3, "{csv}");
}
