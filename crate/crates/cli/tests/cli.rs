use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use dact_core::data_io::{read_predictions, write_stream, FeatureStream};
use tempfile::TempDir;

fn dact(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_dact")).args(args).output().expect("run dact")
}

fn code(out: &Output) -> i32 {
    out.status.code().unwrap_or(-1)
}

fn ok(args: &[&str]) -> Output {
    let out = dact(args);
    assert_eq!(code(&out), 0, "{args:?}\n{}", String::from_utf8_lossy(&out.stderr));
    out
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

const SCENARIO: &str = r#"{"video_id": "drive", "num_frames": 2400, "segment_len": 16, "embed_dim": 16, "seed": 5,
  "activities": [{"class_id": 2, "start_frame": 300, "end_frame": 800},
                 {"class_id": 6, "start_frame": 1100, "end_frame": 1600},
                 {"class_id": 11, "start_frame": 1800, "end_frame": 2300}]}"#;

const MODEL: &str = r#"{"pose_dim": 67, "n_f": 16, "n_heads": 2, "n_layers": 1, "mlp_hidden": 64, "head_hidden": 32,
  "window_tokens": 4, "token_gap": 8, "segment_len": 16, "seed": 1}"#;

struct Scene {
    dir: TempDir,
}

impl Scene {
    fn new() -> Self {
        let dir = TempDir::new().unwrap();
        fs::write(dir.path().join("scn.json"), SCENARIO).unwrap();
        fs::write(dir.path().join("model.json"), MODEL).unwrap();
        fs::write(dir.path().join("loss.json"), r#"{"lr": 0.001, "batch_size": 32}"#).unwrap();
        Self { dir }
    }

    fn path(&self, name: &str) -> PathBuf {
        self.dir.path().join(name)
    }

    fn synth(&self) {
        ok(&["synth", "--scenario", p(&self.path("scn.json")), "--out-dir", p(&self.path("data"))]);
    }

    fn features(&self) {
        for c in 0..3 {
            let kp = self.path(&format!("data/drive_cam{c}.keypoints.jsonl"));
            let out = self.path(&format!("drive_cam{c}.pose.stem"));
            ok(&["features", "--keypoints", p(&kp), "--layout", "compact", "--intrinsics", "1280x720", "--out", p(&out)]);
        }
    }

    fn train_args(&self, cams: usize, loss: &str, out: &str) -> Vec<String> {
        let mut args = vec!["train".to_string(), "--pose".into()];
        args.extend((0..cams).map(|c| self.path(&format!("drive_cam{c}.pose.stem")).display().to_string()));
        args.push("--embed".into());
        args.extend((0..cams).map(|c| self.path(&format!("data/drive_cam{c}.embed.stem")).display().to_string()));
        for (flag, v) in [
            ("--labels", self.path("data/drive.labels.csv")),
            ("--model-config", self.path("model.json")),
            ("--loss-config", self.path(loss)),
            ("--out", self.path(out)),
        ] {
            args.push(flag.into());
            args.push(v.display().to_string());
        }
        args
    }
}

fn run_strings(args: &[String]) -> Output {
    let refs: Vec<&str> = args.iter().map(String::as_str).collect();
    dact(&refs)
}

#[test]
fn full_pipeline_composes() {
    let s = Scene::new();
    s.synth();
    s.features();
    let mut args = s.train_args(3, "loss.json", "model.ckpt");
    args.extend(["--epochs", "6", "--max-samples", "1500"].map(String::from));
    let out = run_strings(&args);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    assert!(fs::read_to_string(s.path("model.loss.csv")).unwrap().lines().count() == 7);

    for c in 0..3 {
        ok(&[
            "infer",
            "--ckpt",
            p(&s.path("model.ckpt")),
            "--pose",
            p(&s.path(&format!("drive_cam{c}.pose.stem"))),
            "--embed",
            p(&s.path(&format!("data/drive_cam{c}.embed.stem"))),
            "--out",
            p(&s.path(&format!("drive_cam{c}.probs.stem"))),
        ]);
    }
    let probs: Vec<PathBuf> = (0..3).map(|c| s.path(&format!("drive_cam{c}.probs.stem"))).collect();
    ok(&["localize", "--probs", p(&probs[0]), p(&probs[1]), p(&probs[2]), "--out", p(&s.path("pred.csv"))]);
    let preds = read_predictions(fs::File::open(s.path("pred.csv")).unwrap()).unwrap();
    assert_eq!(preds.len(), 3, "{preds:?}");
    assert!(preds.iter().all(|r| r.video_id == "drive"));

    let out = ok(&["eval", "--pred", p(&s.path("pred.csv")), "--gt", p(&s.path("data/drive.labels.csv")), "--out", p(&s.path("report.json"))]);
    let report: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert!(report["os"].as_f64().unwrap() >= 0.8, "{report}");
    assert_eq!(report["recall"].as_f64().unwrap(), 1.0);
    let written: serde_json::Value = serde_json::from_str(&fs::read_to_string(s.path("report.json")).unwrap()).unwrap();
    assert_eq!(written, report);

    // inference is deterministic
    ok(&[
        "--force",
        "infer",
        "--ckpt",
        p(&s.path("model.ckpt")),
        "--pose",
        p(&s.path("drive_cam0.pose.stem")),
        "--embed",
        p(&s.path("data/drive_cam0.embed.stem")),
        "--out",
        p(&s.path("again.probs.stem")),
    ]);
    assert_eq!(fs::read(s.path("again.probs.stem")).unwrap(), fs::read(&probs[0]).unwrap());

    // two cameras where three are expected
    let out = dact(&["localize", "--probs", p(&probs[0]), p(&probs[1]), "--out", p(&s.path("two.csv"))]);
    assert_eq!(code(&out), 2);
    assert!(!s.path("two.csv").exists());
}

#[test]
fn training_errors_and_zero_lr() {
    let s = Scene::new();
    s.synth();
    s.features();
    fs::write(s.path("flat.json"), r#"{"lr": 0.0, "batch_size": 64}"#).unwrap();
    let mut args = s.train_args(1, "flat.json", "flat.ckpt");
    args.extend(["--epochs", "3", "--max-samples", "300"].map(String::from));
    assert_eq!(code(&run_strings(&args)), 0);
    let losses: Vec<f64> = fs::read_to_string(s.path("flat.loss.csv"))
        .unwrap()
        .lines()
        .skip(1)
        .map(|l| l.split(',').nth(1).unwrap().parse().unwrap())
        .collect();
    assert_eq!(losses.len(), 3);
    assert!(losses.windows(2).all(|w| w[0] == w[1]), "{losses:?}");

    // rerunning without --force refuses to overwrite
    assert_eq!(code(&run_strings(&args)), 2);

    fs::write(s.path("model.json"), MODEL.replace("\"n_f\": 16", "\"n_f\": 32")).unwrap();
    let mut args = s.train_args(1, "loss.json", "wide.ckpt");
    args.extend(["--epochs", "1"].map(String::from));
    let out = run_strings(&args);
    assert_eq!(code(&out), 2);
    assert!(String::from_utf8_lossy(&out.stderr).contains("n_f"));
}

#[test]
fn infer_rejects_short_streams() {
    let s = Scene::new();
    s.synth();
    s.features();
    let mut args = s.train_args(1, "loss.json", "m.ckpt");
    args.extend(["--epochs", "1", "--max-samples", "64"].map(String::from));
    assert_eq!(code(&run_strings(&args)), 0);
    write_stream(&s.path("short.pose.stem"), &FeatureStream::new(67, 1, 1, vec![0.0; 67 * 10]).unwrap()).unwrap();
    write_stream(&s.path("short.embed.stem"), &FeatureStream::new(16, 16, 1, Vec::new()).unwrap()).unwrap();
    let out = dact(&[
        "infer",
        "--ckpt",
        p(&s.path("m.ckpt")),
        "--pose",
        p(&s.path("short.pose.stem")),
        "--embed",
        p(&s.path("short.embed.stem")),
        "--out",
        p(&s.path("short.probs.stem")),
    ]);
    assert_eq!(code(&out), 2, "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn synth_is_reproducible() {
    let s = Scene::new();
    s.synth();
    let first: Vec<(String, Vec<u8>)> = tree(&s.path("data"));
    assert_eq!(first.len(), 7);
    let labels = fs::read_to_string(s.path("data/drive.labels.csv")).unwrap();
    assert_eq!(labels.lines().count(), 4);

    let out = dact(&["synth", "--scenario", p(&s.path("scn.json")), "--out-dir", p(&s.path("data"))]);
    assert_eq!(code(&out), 2);
    ok(&["--force", "synth", "--scenario", p(&s.path("scn.json")), "--out-dir", p(&s.path("data"))]);
    assert_eq!(tree(&s.path("data")), first);

    fs::write(s.path("bad.json"), SCENARIO.replace("\"start_frame\": 1100", "\"start_frame\": 700")).unwrap();
    let out = dact(&["synth", "--scenario", p(&s.path("bad.json")), "--out-dir", p(&s.path("bad"))]);
    assert_eq!(code(&out), 2);
}

fn tree(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut files: Vec<_> = fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let e = e.unwrap();
            (e.file_name().to_string_lossy().into_owned(), fs::read(e.path()).unwrap())
        })
        .collect();
    files.sort();
    files
}

#[test]
fn features_edge_cases() {
    let s = Scene::new();
    fs::write(s.path("empty.jsonl"), "").unwrap();
    let out = ok(&["features", "--keypoints", p(&s.path("empty.jsonl")), "--layout", "compact", "--out", p(&s.path("empty.stem"))]);
    assert!(String::from_utf8_lossy(&out.stderr).contains("warning"));
    let stream = dact_core::data_io::read_stream(&s.path("empty.stem")).unwrap();
    assert!(stream.is_empty());

    let out = dact(&["features", "--keypoints", p(&s.path("empty.jsonl")), "--layout", "nope", "--out", p(&s.path("x.stem"))]);
    assert_eq!(code(&out), 2);
    let out = dact(&["features", "--keypoints", p(&s.path("missing.jsonl")), "--out", p(&s.path("y.stem"))]);
    assert_eq!(code(&out), 2);
    fs::write(s.path("garbage.jsonl"), "{not json\n").unwrap();
    let out = dact(&["features", "--keypoints", p(&s.path("garbage.jsonl")), "--out", p(&s.path("z.stem"))]);
    assert_eq!(code(&out), 2);
    assert!(dact(&["features"]).status.code() == Some(2));
}

#[test]
fn uniform_streams_localize_to_nothing() {
    let s = Scene::new();
    let uniform = FeatureStream::new(16, 1, 1, vec![1.0 / 16.0; 16 * 1000]).unwrap();
    let paths: Vec<PathBuf> = (0..3).map(|c| s.path(&format!("u_cam{c}.probs.stem"))).collect();
    for path in &paths {
        write_stream(path, &uniform).unwrap();
    }
    ok(&["localize", "--probs", p(&paths[0]), p(&paths[1]), p(&paths[2]), "--out", p(&s.path("u.csv"))]);
    let preds = read_predictions(fs::File::open(s.path("u.csv")).unwrap()).unwrap();
    assert!(preds.is_empty());
}

#[test]
fn eval_fixtures() {
    let s = Scene::new();
    let gt = "video_id,class_id,start_frame,end_frame\nv,1,100,200\nv,2,400,600\n";
    fs::write(s.path("gt.csv"), gt).unwrap();
    fs::write(
        s.path("same.csv"),
        "video_id,class_id,start_frame,end_frame,peak_height\nv,1,100,200,0.9\nv,2,400,600,0.8\n",
    )
    .unwrap();
    let out = ok(&["eval", "--pred", p(&s.path("same.csv")), "--gt", p(&s.path("gt.csv"))]);
    let r: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(r["os"].as_f64().unwrap(), 1.0);
    assert_eq!(r["f1"].as_f64().unwrap(), 1.0);

    // at 1 fps the 10 s gate is 10 frames
    fs::write(s.path("late.csv"), "video_id,class_id,start_frame,end_frame,peak_height\nv,1,115,200,0.9\n").unwrap();
    let out = ok(&["eval", "--pred", p(&s.path("late.csv")), "--gt", p(&s.path("gt.csv")), "--fps", "1"]);
    let r: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(r["os"].as_f64().unwrap(), 0.0);
    let out = ok(&["eval", "--pred", p(&s.path("late.csv")), "--gt", p(&s.path("gt.csv"))]);
    let r: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert!((r["os"].as_f64().unwrap() - 0.85 / 2.0).abs() < 1e-9, "{r}");

    fs::write(s.path("none.csv"), "video_id,class_id,start_frame,end_frame,peak_height\n").unwrap();
    let out = ok(&["eval", "--pred", p(&s.path("none.csv")), "--gt", p(&s.path("gt.csv"))]);
    let r: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(r["os"].as_f64().unwrap(), 0.0);
    assert_eq!(r["fn"].as_u64().unwrap(), 2);
    assert_eq!(r["recall"].as_f64().unwrap(), 0.0);

    fs::write(s.path("broken.csv"), "video_id,class_id\nv,notanumber\n").unwrap();
    assert_eq!(code(&dact(&["eval", "--pred", p(&s.path("broken.csv")), "--gt", p(&s.path("gt.csv"))])), 2);
}
