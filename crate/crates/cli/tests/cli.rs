use std::path::Path;
use std::process::{Command, Output};

use panfuse_core::io::{read_panoptic, read_taxonomy, write_boxes, write_panoptic, write_taxonomy, BoxRecord};
use panfuse_core::metrics::BBox;
use panfuse_core::{ClassEntry, ClassId, ClassKind, ClassTaxonomy, PanopticMap, SegmentKey};
use serde_json::{json, Value};

fn panfuse(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_panfuse")).args(args).current_dir(dir).output().unwrap()
}

fn ok(dir: &Path, args: &[&str]) -> String {
    let out = panfuse(dir, args);
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout).unwrap()
}

fn read(p: impl AsRef<Path>) -> Vec<u8> {
    std::fs::read(p).unwrap()
}

fn json_file(p: impl AsRef<Path>) -> Value {
    serde_json::from_slice(&read(p)).unwrap()
}

fn write_manifest(dir: &Path, v: &Value) {
    std::fs::write(dir.join("manifest.json"), serde_json::to_vec_pretty(v).unwrap()).unwrap();
}

#[test]
fn synth_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    for out in ["a", "b"] {
        ok(d, &["synth", "--seed", "7", "--out", out, "--mask-jitter", "2", "--score-noise", "0.1"]);
    }
    let mut names: Vec<_> = std::fs::read_dir(d.join("a")).unwrap().map(|e| e.unwrap().file_name()).collect();
    names.sort();
    assert!(names.len() >= 9);
    for n in names {
        assert_eq!(read(d.join("a").join(&n)), read(d.join("b").join(&n)), "{n:?}");
    }
}

#[test]
fn synth_prints_manifest_path_and_zero_instances_is_stuff_only() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let printed = ok(d, &["synth", "--out", "s", "--instances", "0"]);
    assert_eq!(printed.trim(), Path::new("s").join("manifest.json").to_str().unwrap());
    let t = read_taxonomy(&d.join("s/taxonomy.json")).unwrap();
    let gt = read_panoptic(&d.join("s/scene_0.gt.png"), &t).unwrap();
    assert!(gt.pixels().iter().all(|k| k.instance_id == 0 && t.is_stuff(k.class_id)));
}

#[test]
fn fusing_an_unperturbed_scene_reproduces_ground_truth_bytes() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    ok(d, &["synth", "--out", "s"]);
    ok(d, &["fuse", "--manifest", "s/manifest.json", "--out", "f"]);
    assert_eq!(read(d.join("f/scene_0.png")), read(d.join("s/scene_0.gt.png")));
    assert_eq!(read(d.join("f/scene_0.json")), read(d.join("s/scene_0.gt.json")));
    assert!(!d.join("f/timings.json").exists());

    let table = ok(d, &["eval", "pq", "--manifest", "s/manifest.json", "--pred", "f"]);
    let row: Vec<&str> = table.lines().nth(1).unwrap().split_whitespace().collect();
    assert_eq!(row, vec!["100.0"; 9]);
    let report: Value =
        serde_json::from_str(&ok(d, &["eval", "pq", "--manifest", "s/manifest.json", "--pred", "f", "--json"]))
            .unwrap();
    assert_eq!(report["all"]["pq"], json!(1.0));
}

#[test]
fn empty_manifest_gives_empty_summary() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    write_manifest(d, &json!({ "images": [] }));
    ok(d, &["fuse", "--manifest", "manifest.json", "--out", "f"]);
    assert_eq!(json_file(d.join("f/summary.json"))["images"], json!([]));
}

#[test]
fn missing_input_file_is_reported() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    ok(d, &["synth", "--out", "s", "--count", "2"]);
    std::fs::remove_file(d.join("s/scene_1.instances.pftb")).unwrap();
    let out = panfuse(d, &["fuse", "--manifest", "s/manifest.json", "--out", "f"]);
    assert!(!out.status.success());
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("scene_1.instances.pftb") && err.contains("image scene_1"), "{err}");
}

#[test]
fn eval_names_the_missing_field() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    ok(d, &["synth", "--out", "s"]);
    let out = panfuse(d, &["eval", "pq", "--manifest", "s/manifest.json"]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("missing input: pred_panoptic"));
}

#[test]
fn duplicate_image_ids_are_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    write_manifest(d, &json!({ "images": [{ "image_id": "x" }, { "image_id": "x" }] }));
    let out = panfuse(d, &["fuse", "--manifest", "manifest.json", "--out", "f"]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("duplicate image_id"));
}

#[test]
fn shifted_thing_scene_scores_35_7() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let (s, th) = (ClassId(1), ClassId(2));
    let t = ClassTaxonomy::new(vec![
        ClassEntry { id: s, name: "road".into(), kind: ClassKind::Stuff },
        ClassEntry { id: th, name: "car".into(), kind: ClassKind::Things },
    ])
    .unwrap();
    let map = |c0: usize| {
        let px = (0..16)
            .map(|i| {
                if i / 4 < 2 && (i % 4 == c0 || i % 4 == c0 + 1) {
                    SegmentKey::new(th, 1)
                } else {
                    SegmentKey::stuff(s)
                }
            })
            .collect();
        PanopticMap::new(4, 4, px, &t).unwrap()
    };
    write_taxonomy(&d.join("tax.json"), &t).unwrap();
    write_panoptic(&d.join("gt.png"), &map(0)).unwrap();
    write_panoptic(&d.join("pred.png"), &map(1)).unwrap();
    write_manifest(
        d,
        &json!({
            "taxonomy": "tax.json",
            "images": [{ "image_id": "shifted", "gt_panoptic": "gt.png", "pred_panoptic": "pred.png" }]
        }),
    );
    let table = ok(d, &["eval", "pq", "--manifest", "manifest.json", "--out", "pq.json"]);
    let row: Vec<&str> = table.lines().nth(1).unwrap().split_whitespace().collect();
    assert_eq!(row[0], "35.7");
    assert_eq!(&row[3..6], ["0.0", "0.0", "0.0"]);
    assert_eq!(row[6], "71.4");
    let pq = json_file(d.join("pq.json"))["all"]["pq"].as_f64().unwrap();
    assert!((pq - 5.0 / 14.0).abs() < 1e-12);
}

#[test]
fn recall_averages_over_images() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let b = BBox::new(0.0, 0.0, 10.0, 10.0).unwrap();
    write_boxes(
        &d.join("boxes.jsonl"),
        &[
            BoxRecord { image_id: "hit".into(), gt: vec![b], proposals: vec![b] },
            BoxRecord { image_id: "miss".into(), gt: vec![b], proposals: vec![] },
        ],
    )
    .unwrap();
    write_manifest(
        d,
        &json!({ "images": [
            { "image_id": "hit", "boxes": "boxes.jsonl" },
            { "image_id": "miss", "boxes": "boxes.jsonl" }
        ]}),
    );
    let table = ok(d, &["eval", "recall", "--manifest", "manifest.json", "--out", "r.json"]);
    assert_eq!(table.lines().nth(1).unwrap().trim(), "0.500");
    let r = json_file(d.join("r.json"));
    assert_eq!(r["mean_recall"], json!(0.5));
    assert_eq!(r["per_image"][1]["image_id"], json!("miss"));
}

#[test]
fn miou_and_map_on_unperturbed_scenes_are_perfect() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    ok(d, &["synth", "--out", "s", "--count", "3"]);
    for metric in ["miou", "map50"] {
        let table = ok(d, &["eval", metric, "--manifest", "s/manifest.json"]);
        assert_eq!(table.lines().nth(1).unwrap().trim(), "100.0", "{metric}");
    }
}

#[test]
fn flags_override_manifest_which_overrides_defaults() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    write_manifest(d, &json!({ "config": { "min_stuff_area": 100 }, "images": [] }));
    ok(d, &["fuse", "--manifest", "manifest.json", "--out", "a"]);
    ok(d, &["fuse", "--manifest", "manifest.json", "--out", "b", "--min-stuff-area", "7", "--mask-threshold", "0.25"]);
    let a = json_file(d.join("a/summary.json"))["config"].clone();
    let b = json_file(d.join("b/summary.json"))["config"].clone();
    assert_eq!(a, json!({ "min_stuff_area": 100, "mask_threshold": 0.5 }));
    assert_eq!(b, json!({ "min_stuff_area": 7, "mask_threshold": 0.25 }));
}

#[test]
fn worker_count_does_not_change_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    ok(d, &["synth", "--out", "s", "--count", "5", "--mask-jitter", "3", "--score-noise", "0.2"]);
    ok(d, &["fuse", "--manifest", "s/manifest.json", "--out", "one", "--workers", "1"]);
    ok(d, &["fuse", "--manifest", "s/manifest.json", "--out", "four", "--workers", "4"]);
    for f in ["summary.json", "scene_2.png", "scene_4.json"] {
        assert_eq!(read(d.join("one").join(f)), read(d.join("four").join(f)), "{f}");
    }
}

#[test]
fn invalid_synth_flags_show_usage() {
    let dir = tempfile::tempdir().unwrap();
    let out = panfuse(dir.path(), &["synth", "--out", "s", "--drop-probability", "1.5"]);
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("drop probability") && err.contains("Usage"), "{err}");
}

#[test]
fn info_lists_defaults_and_classes() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let defaults = ok(d, &["info"]);
    assert!(defaults.contains("min_stuff_area  4096"));
    ok(d, &["synth", "--out", "s"]);
    let summary = ok(d, &["info", "--manifest", "s/manifest.json"]);
    assert!(summary.contains("images          1") && summary.contains("thing_5"));
}
