mod common;

use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn trapwsod(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_trapwsod"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn text(bytes: &[u8]) -> String {
    String::from_utf8_lossy(bytes).into_owned()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn testbed_rejects_unknown_spec_as_usage_error() {
    let tmp = tempfile::tempdir().unwrap();
    let out = trapwsod(&[
        "testbed",
        "--spec",
        "0",
        "--mnist-dir",
        s(tmp.path()),
        "--out",
        s(&tmp.path().join("o")),
    ]);
    assert_eq!(out.status.code(), Some(2));
    assert!(text(&out.stderr).contains("valid specs are 1, 2, 3, 4"));
}

#[test]
fn testbed_spec_four_and_custom_spec() {
    let tmp = tempfile::tempdir().unwrap();
    let mnist = tmp.path().join("mnist");
    common::write_mnist_dir(&mnist, 10);

    let out_dir = tmp.path().join("spec4");
    let out = trapwsod(&[
        "testbed",
        "--spec",
        "4",
        "--mnist-dir",
        s(&mnist),
        "--out",
        s(&out_dir),
        "--limit",
        "4",
    ]);
    assert!(out.status.success(), "{}", text(&out.stderr));
    let img = trapwsod::dataset_io::decode_image(&out_dir.join("train/train_00000.png")).unwrap();
    assert_eq!((img.width(), img.height()), (512, 512));
    let manifest: serde_json::Value =
        serde_json::from_slice(&fs::read(out_dir.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["spec"]["digit_count"], 101);

    let out_dir = tmp.path().join("custom");
    let out = trapwsod(&[
        "testbed",
        "--digits",
        "6",
        "--side",
        "128",
        "--mnist-dir",
        s(&mnist),
        "--out",
        s(&out_dir),
        "--limit",
        "4",
    ]);
    assert!(out.status.success(), "{}", text(&out.stderr));
    let manifest: serde_json::Value =
        serde_json::from_slice(&fs::read(out_dir.join("manifest.json")).unwrap()).unwrap();
    let pct = manifest["o2i_pct"].as_f64().unwrap();
    assert_eq!(format!("{pct:.2}"), "4.79");
    assert!(text(&out.stdout).contains("o2i 4.79%"));
}

#[test]
fn testbed_with_bad_idx_fails() {
    let tmp = tempfile::tempdir().unwrap();
    let mnist = tmp.path().join("mnist");
    common::write_mnist_dir(&mnist, 2);
    fs::write(
        mnist.join(trapwsod::pipeline::MNIST_FILES[0]),
        [0u8, 0, 8, 1],
    )
    .unwrap();
    let out = trapwsod(&[
        "testbed",
        "--spec",
        "1",
        "--mnist-dir",
        s(&mnist),
        "--out",
        s(&tmp.path().join("o")),
    ]);
    assert_eq!(out.status.code(), Some(1));
    assert!(text(&out.stderr).contains("bad IDX magic"));
}

#[test]
fn annotate_with_empty_mapping_fails() {
    let tmp = tempfile::tempdir().unwrap();
    let root = tmp.path().join("images");
    let mapping = tmp.path().join("mapping.csv");
    common::write_burst_fixture(&root, &mapping, &["camA"], 1, 3);
    fs::write(&mapping, "").unwrap();
    let out = trapwsod(&[
        "annotate",
        "--images",
        s(&root),
        "--mapping",
        s(&mapping),
        "--out",
        s(&tmp.path().join("out")),
    ]);
    assert!(!out.status.success());
    assert!(text(&out.stderr).contains("no labels"));
}

#[test]
fn annotate_writes_splits_log_and_debug_dump() {
    let tmp = tempfile::tempdir().unwrap();
    let root = tmp.path().join("images");
    let mapping = tmp.path().join("mapping.csv");
    common::write_burst_fixture(&root, &mapping, &["camA", "camB"], 2, 3);
    let config = tmp.path().join("config.json");
    fs::write(
        &config,
        r#"{"seed": 3, "test_cameras": ["camA"], "workers": 2}"#,
    )
    .unwrap();
    let out_dir = tmp.path().join("out");
    let dump = tmp.path().join("dump");
    let out = trapwsod(&[
        "annotate",
        "--config",
        s(&config),
        "--images",
        s(&root),
        "--mapping",
        s(&mapping),
        "--out",
        s(&out_dir),
        "--test-camera",
        "camB",
        "--debug-dump",
        s(&dump),
    ]);
    assert!(out.status.success(), "{}", text(&out.stderr));
    assert!(text(&out.stdout).contains("12 images"));
    for f in [
        "train.json",
        "val.json",
        "test.json",
        "split_report.json",
        "boxes.csv",
    ] {
        assert!(out_dir.join(f).is_file(), "{f}");
    }
    let log = fs::read_to_string(out_dir.join("run.log")).unwrap();
    assert!(log.contains("throughput_images_per_sec"));

    // the flag overrides the config file's test camera
    let test = trapwsod::dataset_io::read_coco(&out_dir.join("test.json")).unwrap();
    assert_eq!(test.images.len(), 6);
    assert!(test.images.iter().all(|i| i.file_name.starts_with("camB/")));

    let dumped = common::read_tree(&dump);
    assert!(dumped.keys().any(|k| k.ends_with("background.png")));
    assert!(dumped.keys().any(|k| k.ends_with("_boxes.png")));
}

fn write_predictions(dir: &Path, rows: &[(&str, u32, f64)]) -> std::path::PathBuf {
    let p = dir.join("preds.csv");
    let mut csv = String::from("image_id,predicted_class,posterior\n");
    for (id, c, post) in rows {
        csv.push_str(&format!("{id},{c},{post}\n"));
    }
    fs::write(&p, csv).unwrap();
    p
}

#[test]
fn evaluate_perfect_and_four_outcome_fixture() {
    let tmp = tempfile::tempdir().unwrap();
    let truth = tmp.path().join("truth.csv");
    fs::write(&truth, "image_id,class_id\na,1\nb,0\nc,2\nd,3\n").unwrap();

    let preds = write_predictions(
        tmp.path(),
        &[("a", 1, 0.9), ("b", 0, 0.8), ("c", 2, 0.7), ("d", 3, 0.6)],
    );
    let out = trapwsod(&["evaluate", "--predictions", s(&preds), "--truth", s(&truth)]);
    assert!(out.status.success(), "{}", text(&out.stderr));
    let stdout = text(&out.stdout);
    let line = stdout.lines().find(|l| l.starts_with("accuracy")).unwrap();
    assert!(line.trim_end().ends_with("100.0"), "{line}");
    let json: serde_json::Value = serde_json::from_slice(
        &fs::read(tmp.path().join("preds_classification_report.json")).unwrap(),
    )
    .unwrap();
    assert_eq!(json["accuracy_pct"], 100.0);

    // correct, animal called empty, empty called animal, wrong taxon
    let preds = write_predictions(
        tmp.path(),
        &[("a", 1, 0.9), ("b", 4, 0.8), ("c", 0, 0.7), ("d", 1, 0.6)],
    );
    let report = tmp.path().join("r.json");
    let out = trapwsod(&[
        "evaluate",
        "--predictions",
        s(&preds),
        "--truth",
        s(&truth),
        "--json",
        s(&report),
    ]);
    assert!(out.status.success(), "{}", text(&out.stderr));
    let json: serde_json::Value = serde_json::from_slice(&fs::read(&report).unwrap()).unwrap();
    for key in [
        "accuracy_pct",
        "presence_fn_pct",
        "presence_fp_pct",
        "taxa_error_pct",
    ] {
        assert_eq!(json[key], 25.0, "{key}");
    }
}

#[test]
fn evaluate_missing_truth_row_names_the_image() {
    let tmp = tempfile::tempdir().unwrap();
    let truth = tmp.path().join("truth.csv");
    fs::write(&truth, "image_id,class_id\na,1\n").unwrap();
    let preds = write_predictions(tmp.path(), &[("a", 1, 0.9), ("ghost_17", 0, 0.5)]);
    let out = trapwsod(&["evaluate", "--predictions", s(&preds), "--truth", s(&truth)]);
    assert_eq!(out.status.code(), Some(1));
    assert!(text(&out.stderr).contains("ghost_17"));
}

#[test]
fn evaluate_malformed_row_reports_line() {
    let tmp = tempfile::tempdir().unwrap();
    let truth = tmp.path().join("truth.csv");
    fs::write(&truth, "image_id,class_id\na,1\n").unwrap();
    let preds = tmp.path().join("preds.csv");
    fs::write(&preds, "image_id,predicted_class,posterior\na,1,high\n").unwrap();
    let out = trapwsod(&["evaluate", "--predictions", s(&preds), "--truth", s(&truth)]);
    assert!(!out.status.success());
    assert!(text(&out.stderr).contains(":2:"), "{}", text(&out.stderr));
}

#[test]
fn evaluate_localization_mode() {
    let tmp = tempfile::tempdir().unwrap();
    let truth = tmp.path().join("truth_boxes.csv");
    fs::write(
        &truth,
        "image_id,x,y,w,h\na,10,10,20,20\nb,,,,\nc,0,0,5,5\n",
    )
    .unwrap();
    let preds = tmp.path().join("boxes.csv");
    fs::write(
        &preds,
        "image_id,x,y,w,h\na,10,10,20,20\nb,1,1,3,3\nc,,,,\n",
    )
    .unwrap();
    let out = trapwsod(&[
        "evaluate",
        "--mode",
        "localization",
        "--predictions",
        s(&preds),
        "--truth",
        s(&truth),
    ]);
    assert!(out.status.success(), "{}", text(&out.stderr));
    let json: serde_json::Value = serde_json::from_slice(
        &fs::read(tmp.path().join("boxes_localization_report.json")).unwrap(),
    )
    .unwrap();
    assert_eq!(json["correct"], 1);
    assert_eq!(json["false_positive"], 1);
    assert_eq!(json["false_negative"], 1);
}

#[test]
fn review_orders_by_posterior_with_id_ties() {
    let tmp = tempfile::tempdir().unwrap();
    let preds = write_predictions(
        tmp.path(),
        &[
            ("c", 1, 0.9),
            ("b", 1, 0.2),
            ("a", 2, 0.5),
            ("z", 0, 0.2),
            ("m", 0, 0.2),
        ],
    );
    let out = trapwsod(&["review", "--predictions", s(&preds)]);
    assert!(out.status.success());
    assert_eq!(text(&out.stdout), "b\nm\nz\na\nc\n");

    let out = trapwsod(&["review", "--predictions", s(&preds), "--top", "2"]);
    assert_eq!(text(&out.stdout), "b\nm\n");
}

#[test]
fn review_of_unparsable_file_fails() {
    let tmp = tempfile::tempdir().unwrap();
    let preds = tmp.path().join("p.csv");
    fs::write(&preds, "id,score\n").unwrap();
    let out = trapwsod(&["review", "--predictions", s(&preds)]);
    assert_eq!(out.status.code(), Some(1));
}
