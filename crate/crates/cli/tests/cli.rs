use std::fs;
use std::path::Path;
use std::process::Command;

fn corelink(args: &[&str]) -> String {
    let out = Command::new(env!("CARGO_BIN_EXE_corelink")).args(args).output().unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout).unwrap()
}

fn short_config(dir: &Path) -> String {
    let path = dir.join("config.json");
    fs::write(
        &path,
        r#"{"encoder": {"dim": 16, "heads": 2, "max_segment_tokens": 16, "max_positions": 16},
            "mlsa": {"layers": 1, "heads": 2},
            "heads": {"hidden_width": 16},
            "inventory": {"min_mentions": 1},
            "training": {"max_epochs": 2},
            "seeds": [0, 1]}"#,
    )
    .unwrap();
    path.to_str().unwrap().to_string()
}

#[test]
fn train_then_eval_reproduces_metrics() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = short_config(dir.path());
    let t = dir.path().join("t");
    let e = dir.path().join("e");
    corelink(&["train", "--config", &cfg, "--out", t.to_str().unwrap()]);
    let ck = t.join("checkpoint.json");
    corelink(&["eval", "--checkpoint", ck.to_str().unwrap(), "--out", e.to_str().unwrap()]);
    let a = fs::read_to_string(t.join("metrics.json")).unwrap();
    let b = fs::read_to_string(e.join("metrics.json")).unwrap();
    assert_eq!(a, b);
    assert!(t.join("coref.md").exists() && t.join("linking.md").exists());
    assert!(fs::read_dir(t.join("predictions")).unwrap().count() > 0);
}

#[test]
fn sweep_writes_one_row_per_layer_count() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = short_config(dir.path());
    let out = dir.path().join("s");
    corelink(&["sweep", "--config", &cfg, "--layers", "0,2", "--seed", "3", "--out", out.to_str().unwrap()]);
    let csv = fs::read_to_string(out.join("sweep.csv")).unwrap();
    assert_eq!(csv.lines().count(), 3);
    assert!(out.join("sweep.svg").exists());
}

#[test]
fn stats_and_synth() {
    let dir = tempfile::tempdir().unwrap();
    let stats = corelink(&["stats"]);
    assert!(stats.contains("| Total |"));
    let out = dir.path().join("corpus");
    corelink(&["synth", "--out", out.to_str().unwrap()]);
    for split in ["train", "dev", "test"] {
        assert!(out.join(format!("{split}.json")).exists());
    }
}

#[test]
fn bad_split_is_rejected() {
    let out = Command::new(env!("CARGO_BIN_EXE_corelink")).args(["stats", "--split", "val"]).output().unwrap();
    assert!(!out.status.success());
}
