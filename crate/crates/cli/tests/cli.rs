use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn tcnaa(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_tcnaa")).current_dir(dir).args(args).output().expect("spawn tcnaa")
}

fn ok(dir: &Path, args: &[&str]) -> String {
    let out = tcnaa(dir, args);
    assert!(out.status.success(), "{args:?} failed: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout).unwrap()
}

const SMALL: &[&str] = &[
    "--set", "synth.samples_per_class=4",
    "--set", "synth.n_p=256",
    "--set", "pipeline.target_packets=256",
    "--set", "model.filters=[6, 6]",
    "--set", "model.dilations=[1, 2]",
    "--set", "model.kernel=3",
    "--set", "train.epochs=2",
    "--set", "cv.folds=2",
    "--set", "cv.fold=0",
];

fn with(small: &[&str], rest: &[&'static str]) -> Vec<String> {
    small.iter().chain(rest).map(|s| s.to_string()).collect()
}

fn run(dir: &Path, args: Vec<String>) -> String {
    let refs: Vec<&str> = args.iter().map(String::as_str).collect();
    ok(dir, &refs)
}

#[test]
fn synth_preprocess_train_eval() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    run(d, with(SMALL, &["--out", "raw", "synth"]));
    let raw_manifest = fs::read(d.join("raw/manifest.csv")).unwrap();
    let pre = run(d, with(SMALL, &["--input", "raw", "--out", "pre", "preprocess"]));
    assert!(pre.contains("48 samples of shape [6, 64, 30]"), "{pre}");
    assert_eq!(fs::read(d.join("raw/manifest.csv")).unwrap(), raw_manifest);
    run(d, with(SMALL, &["--input", "pre", "--out", "run", "train"]));
    for f in ["cv.json", "run.toml", "fold00/metrics.csv", "fold00/summary.json", "fold00/model.ckpt"] {
        assert!(d.join("run").join(f).is_file(), "missing {f}");
    }
    let ev = run(d, with(SMALL, &["--input", "pre", "--checkpoint", "run/fold00/model.ckpt", "--out", "ev", "eval"]));
    assert!(ev.contains("48 samples"), "{ev}");
    let json: serde_json::Value = serde_json::from_str(&fs::read_to_string(d.join("ev/evaluation.json")).unwrap()).unwrap();
    let counts = json["confusion"]["counts"].as_array().unwrap();
    assert_eq!(counts.len(), 12);
    assert!(counts.iter().all(|r| r.as_array().unwrap().len() == 12));
    let total: u64 = counts.iter().flat_map(|r| r.as_array().unwrap()).map(|c| c.as_u64().unwrap()).sum();
    assert_eq!(total, 48);
}

#[test]
fn outputs_are_reproducible() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    run(d, with(SMALL, &["--seed", "5", "--out", "raw", "synth"]));
    run(d, with(SMALL, &["--input", "raw", "--out", "pre", "preprocess"]));
    for (out, extra) in [("a", "train.threads=1"), ("b", "train.threads=2")] {
        let mut args = with(SMALL, &["--seed", "5", "--input", "pre", "--set", "cv.augment=true", "--set", "augment.methods=[\"dropout\", \"mix_other\"]"]);
        args.extend(["--set".into(), extra.into(), "--out".into(), out.into(), "train".into()]);
        run(d, args);
    }
    for f in ["fold00/metrics.csv", "fold00/summary.json", "fold00/model.ckpt", "cv.json"] {
        assert_eq!(fs::read(d.join("a").join(f)).unwrap(), fs::read(d.join("b").join(f)).unwrap(), "{f}");
    }
    run(d, with(SMALL, &["--seed", "5", "--out", "raw2", "synth"]));
    assert_eq!(fs::read(d.join("raw/class03/sample0002.csi")).unwrap(), fs::read(d.join("raw2/class03/sample0002.csi")).unwrap());
}

#[test]
fn augment_both_stages() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    run(d, with(SMALL, &["--out", "raw", "synth"]));
    run(d, with(SMALL, &["--input", "raw", "--out", "pre", "preprocess"]));
    let post = run(d, with(SMALL, &["--input", "pre", "--out", "aug", "--set", "augment.methods=[\"dropout\"]", "augment"]));
    assert!(post.contains("48 → 96"), "{post}");
    let raw = run(d, with(SMALL, &["--input", "raw", "--out", "augraw", "--set", "pipeline.augment_stage=raw", "augment"]));
    assert!(raw.contains("48 → 192"), "{raw}");
    let manifest = fs::read_to_string(d.join("augraw/manifest.csv")).unwrap();
    assert_eq!(manifest.lines().filter(|l| !l.trim().is_empty()).count(), 192);
    let out = tcnaa(d, &["--input", "pre", "--out", "pre", "augment"]);
    assert!(!out.status.success());
}

#[test]
fn gradcheck_passes_and_writes_report() {
    let tmp = tempfile::tempdir().unwrap();
    let out = ok(tmp.path(), &["--out", "gc", "gradcheck"]);
    assert!(out.contains("model/every_layer"), "{out}");
    assert!(!out.contains("FAIL"));
    let rows: serde_json::Value = serde_json::from_str(&fs::read_to_string(tmp.path().join("gc/gradcheck.json")).unwrap()).unwrap();
    assert_eq!(rows.as_array().unwrap().len(), 21);
}

#[test]
fn ablate_writes_one_row_per_point() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    run(d, with(SMALL, &["--out", "raw", "synth"]));
    run(d, with(SMALL, &["--input", "raw", "--out", "pre", "preprocess"]));
    let mut args = with(SMALL, &["--input", "pre", "--out", "abl", "--set"]);
    args.push("ablate.sweep={kind = \"attention\", values = [\"pre_tcn_only\", \"none\"]}".into());
    args.push("ablate".into());
    let out = run(d, args);
    assert!(out.contains("pre_tcn_only") && out.contains("none"), "{out}");
    let csv = fs::read_to_string(d.join("abl/ablation.csv")).unwrap();
    assert_eq!(csv.lines().count(), 3);
}

#[test]
fn configuration_errors_exit_nonzero() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    let out = tcnaa(d, &["--set", "train.learning_rate=0.1", "gradcheck"]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("learning_rate"));

    fs::write(d.join("run.toml"), "seed = 3\n[model]\nkernal = 7\n").unwrap();
    let out = tcnaa(d, &["--config", "run.toml", "gradcheck"]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("kernal"));

    let out = tcnaa(d, &["--set", "cv.folds=1", "gradcheck"]);
    assert!(!out.status.success());
    let out = tcnaa(d, &["--input", "missing", "train"]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("missing"));
    let out = tcnaa(d, &["train"]);
    assert!(!out.status.success());
}

#[test]
fn config_file_and_precedence() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    fs::write(d.join("run.toml"), "seed = 9\n[synth]\nsamples_per_class = 2\nn_p = 64\nclasses = 3\n").unwrap();
    let out = ok(d, &["--config", "run.toml", "--set", "synth.classes=4", "--out", "raw", "synth"]);
    assert!(out.contains("8 recordings (4 classes × 2)"), "{out}");
}
