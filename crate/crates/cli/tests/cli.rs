use std::path::Path;
use std::process::{Command, Output};

fn bin(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_echomeasure"))
        .args(args)
        .current_dir(cwd)
        .output()
        .expect("binary runs")
}

fn synth(dir: &Path, view: &str, count: &str) {
    let out = bin(&["synth", "--out", "s", "--count", count, "--view", view, "--width", "320", "--height", "240"], dir);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn measure_lv_pair_reports_six_indicators_and_eight_anchors() {
    let dir = tempfile::tempdir().unwrap();
    synth(dir.path(), "lv", "1");
    let out = bin(&["measure", "--masks", "s/manifest.json", "--out", "m"], dir.path());
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let text = std::fs::read_to_string(dir.path().join("m/indicators.json")).unwrap();
    let records: serde_json::Value = serde_json::from_str(&text).unwrap();
    let rec = &records[0];
    assert_eq!(rec["indicators"].as_object().unwrap().len(), 6);
    assert_eq!(rec["anchors"].as_object().unwrap().len(), 8);
    assert!(rec["error"].is_null());
    assert!(dir.path().join("m/overlays/lv_0000.png").exists());
    assert!(dir.path().join("m/indicators.csv").exists());
}

#[test]
fn repeat_runs_are_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    synth(dir.path(), "both", "2");
    for (out, threads) in [("a", "1"), ("b", "3")] {
        let o = bin(&["measure", "--masks", "s/manifest.json", "--out", out, "--threads", threads], dir.path());
        assert!(o.status.success());
    }
    for f in ["indicators.json", "indicators.csv", "overlays/av_0000.png", "overlays/lv_0001.png"] {
        let a = std::fs::read(dir.path().join("a").join(f)).unwrap();
        let b = std::fs::read(dir.path().join("b").join(f)).unwrap();
        assert_eq!(a, b, "{f}");
    }
}

#[test]
fn eval_check_passes_on_synthetic_truth() {
    let dir = tempfile::tempdir().unwrap();
    synth(dir.path(), "both", "3");
    assert!(bin(&["measure", "--masks", "s/manifest.json", "--out", "m", "--no-overlays"], dir.path()).status.success());
    let out = bin(
        &["eval", "--pred", "m/indicators.json", "--truth", "s/truth.json", "--check", "--mae-max", "0.2", "--out", "e"],
        dir.path(),
    );
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(dir.path().join("e/report.json").exists());

    let fail = bin(
        &["eval", "--pred", "m/indicators.json", "--truth", "s/truth.json", "--check", "--mse-max=-1"],
        dir.path(),
    );
    assert_eq!(fail.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&fail.stderr).contains("error[eval-harness]"));
}

#[test]
fn attn_check_passes() {
    let dir = tempfile::tempdir().unwrap();
    let out = bin(&["attn-check", "--seeds", "3"], dir.path());
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stdout));
}

#[test]
fn misuse_exits_two() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(bin(&["measure", "--out", "x"], dir.path()).status.code(), Some(2));
    assert_eq!(bin(&["eval", "--mae-max", "1"], dir.path()).status.code(), Some(2));
    assert_eq!(bin(&["frobnicate"], dir.path()).status.code(), Some(2));
}

#[test]
fn unreadable_input_exits_one_with_module() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("bad.json"), "{\"images\": [{\"id\": \"x\"}]}").unwrap();
    for args in [&["measure", "--coco", "bad.json", "--out", "o"][..], &["ingest", "--coco", "missing.json"][..]] {
        let out = bin(args, dir.path());
        assert_eq!(out.status.code(), Some(1));
        assert!(String::from_utf8_lossy(&out.stderr).contains("error[dataset-io]"));
    }
}
