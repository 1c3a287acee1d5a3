use std::fs;
use std::path::Path;
use std::process::{Command, Output};

const TINY: &str = "\
# small enough to train in well under a second
n_train = 400
n_val = 8
n_test = 8
qa_per_video = 4
n_clips = 3
frames_per_clip = 2
app_dim = 5
motion_dim = 4
max_objects = 4
d = 8
d1 = 2
heads = 4
steps = 2
word_dim = 6
mfb_factor = 2
batch_size = 4
epochs = 2
learning_rate = 1e-3
";

fn dualvgr(args: &[&str]) -> Output {
    let out = Command::new(env!("CARGO_BIN_EXE_dualvgr")).args(args).env("RUST_LOG", "warn").output().unwrap();
    out
}

fn ok(args: &[&str]) -> String {
    let out = dualvgr(args);
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout).unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn pipeline_runs_end_to_end() {
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path();
    let config = root.join("tiny.cfg");
    fs::write(&config, TINY).unwrap();
    let data = root.join("data");
    ok(&["generate-data", "--config", s(&config), "--seed", "3", "--out", s(&data)]);
    for split in ["train", "val", "test"] {
        assert!(data.join(split).join("manifest.json").exists());
    }

    let run_a = root.join("a");
    let run_b = root.join("b");
    for run in [&run_a, &run_b] {
        ok(&["train", "--config", s(&config), "--data", s(&data), "--out", s(run), "--deterministic"]);
    }
    let metrics = fs::read_to_string(run_a.join("metrics.jsonl")).unwrap();
    assert_eq!(metrics, fs::read_to_string(run_b.join("metrics.jsonl")).unwrap());
    let lines: Vec<serde_json::Value> = metrics.lines().map(|l| serde_json::from_str(l).unwrap()).collect();
    assert_eq!(lines.len(), 2);
    for key in ["epoch", "train_loss", "train_Lt", "train_Lc", "train_Ld", "val_acc", "per_qtype", "config"] {
        assert!(lines[0].get(key).is_some(), "missing {key}");
    }
    assert_eq!(lines[0]["config"]["deterministic"], "true");
    assert!(run_a.join("checkpoint.bin").exists() && run_a.join("last.bin").exists());

    // Held-out answers may be missing from the tiny training vocabulary, so
    // evaluation runs on the training split.
    let report: serde_json::Value =
        serde_json::from_str(&ok(&["eval", "--checkpoint", s(&run_a.join("last.bin")), "--data", s(&data.join("train"))])).unwrap();
    assert_eq!(report["total"], 400);
    assert!(report["per_qtype"].is_object());

    let trace: serde_json::Value = serde_json::from_str(&ok(&[
        "trace",
        "--checkpoint",
        s(&run_a.join("checkpoint.bin")),
        "--data",
        s(&data.join("train")),
        "--qid",
        "train-000002",
    ]))
    .unwrap();
    assert_eq!(trace["qid"], "train-000002");
    assert_eq!(trace["steps"].as_array().unwrap().len(), 2);

    let ablate = root.join("ablate");
    ok(&["ablate", "--config", s(&config), "--data", s(&data), "--out", s(&ablate), "--variant", "AG", "--set", "epochs=1"]);
    let results: serde_json::Value = serde_json::from_str(&fs::read_to_string(ablate.join("ablation.json")).unwrap()).unwrap();
    assert_eq!(results[0]["variant"], "AG");
    assert_eq!(results[0]["final_train_Lc"], 0.0);
}

#[test]
fn gradcheck_passes_on_micro_config() {
    let out = ok(&["gradcheck"]);
    assert!(out.contains("passed"), "{out}");
}

#[test]
fn unknown_variant_fails_with_registry() {
    let out = dualvgr(&["gradcheck", "--variant", "Nope"]);
    assert!(!out.status.success());
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("DualVGR") && err.contains("simpleDualVGR"), "{err}");
}

#[test]
fn bad_config_is_reported() {
    let dir = tempfile::tempdir().unwrap();
    let out = dualvgr(&["generate-data", "--set", "d1=3", "--out", s(dir.path())]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("invalid config"));
    let out = dualvgr(&["eval", "--checkpoint", s(&dir.path().join("missing.bin")), "--data", s(dir.path())]);
    assert!(!out.status.success());
}

#[test]
fn shipped_configs_load() {
    let root = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs");
    let desk = dualvgr::RunConfig::load(&root.join("desk.cfg")).unwrap();
    desk.validate().unwrap();
    assert_eq!(desk, dualvgr::RunConfig::default());
    let full = dualvgr::RunConfig::load(&root.join("full.cfg")).unwrap();
    full.validate().unwrap();
    let expected = dualvgr::ModelConfig { workers: 4, deterministic: false, ..dualvgr::ModelConfig::full_scale() };
    assert_eq!(full.model, expected);
}
