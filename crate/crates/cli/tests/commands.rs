//! End-to-end runs of the `depthmetric` binary.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

const BIN: &str = env!("CARGO_BIN_EXE_depthmetric");

fn run(dir: &Path, args: &[&str]) -> Output {
    Command::new(BIN).current_dir(dir).args(args).output().expect("binary runs")
}

fn ok(dir: &Path, args: &[&str]) -> String {
    let out = run(dir, args);
    assert!(out.status.success(), "{args:?} failed:\n{}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout).unwrap()
}

fn fail(dir: &Path, args: &[&str]) -> String {
    let out = run(dir, args);
    assert!(!out.status.success(), "{args:?} unexpectedly succeeded");
    String::from_utf8(out.stderr).unwrap()
}

/// Two small cameras; `extra` is spliced into the top-level object.
fn sim_config(tissue: &str, noise: &str, extra: &str) -> String {
    format!(
        r#"{{
  "tissue": "{tissue}",
  "scene": {{"surface": {{"kind": "planar"}} {extra}}},
  "cameras": [
    {{"name": "endo", "intrinsics": {{"width": 96, "height": 60, "fx": 210, "fy": 210}}, "noise": {noise}}},
    {{"name": "lidar", "intrinsics": {{"width": 96, "height": 60, "fx": 200, "fy": 200}}, "noise": {noise}}}
  ],
  "frames": 4
}}"#
    )
}

fn write(dir: &Path, name: &str, text: &str) -> PathBuf {
    let p = dir.join(name);
    fs::write(&p, text).unwrap();
    p
}

fn run_configs(dir: &Path) -> Vec<String> {
    let mut v: Vec<String> = fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().file_name().into_string().unwrap())
        .filter(|n| n.starts_with("run_") && n.ends_with(".json"))
        .collect();
    v.sort();
    v
}

fn tile_values(path: &Path, metric: &str) -> Vec<f64> {
    fs::read_to_string(path)
        .unwrap()
        .lines()
        .skip(1)
        .filter_map(|l| {
            let f: Vec<&str> = l.split(',').collect();
            (f[1] == metric && !f[2].is_empty()).then(|| f[2].parse().unwrap())
        })
        .collect()
}

fn matrix(json: &str) -> Vec<f64> {
    let v: Value = serde_json::from_str(json).unwrap();
    v["matrix"]
        .as_array()
        .unwrap()
        .iter()
        .flat_map(|r| r.as_array().unwrap().iter().map(|x| x.as_f64().unwrap()))
        .collect()
}

#[test]
fn noiseless_planar_scene_evaluates_to_zero() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    write(d, "sim.json", &sim_config("plain", "{}", ""));
    ok(d, &["simulate", "--config", "sim.json", "--seed", "3", "--out", "run"]);
    let configs = run_configs(&d.join("run"));
    assert_eq!(configs.len(), 4);
    for c in &configs {
        ok(d, &["evaluate", "--config", &format!("run/{c}")]);
    }
    for c in &configs {
        let stem = c.trim_start_matches("run_").trim_end_matches(".json");
        let tiles = d.join("run/eval").join(stem).join("tiles.csv");
        let da = tile_values(&tiles, "depth_accuracy");
        assert_eq!(da.len(), 30, "{stem}");
        assert!(da.iter().all(|v| v.abs() < 5e-5), "{stem}: {da:?}");
        for f in ["metrics.csv", "depth_accuracy.ppm", "time_variability.ppm", "shape_precision.ppm", "footprint.csv"] {
            assert!(d.join("run/eval").join(stem).join(f).is_file(), "{stem}/{f}");
        }
    }
    let table = fs::read_to_string(d.join("run/long_table.csv")).unwrap();
    assert_eq!(table.lines().count(), 1 + 4 * 90);
}

#[test]
fn material_offset_is_detected_by_stats() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let noise = r#"{"sigma": 0.0003, "material_offsets": {"1": -0.005}}"#;
    let coated = r#", "regions": [{"shape": {"rect": {"min": [-1, -1], "max": [1, 1]}}, "material": 1}]"#;
    write(d, "plain.json", &sim_config("plain", noise, ""));
    write(d, "coated.json", &sim_config("coated", noise, coated));
    ok(d, &["simulate", "--config", "plain.json", "--seed", "1", "--out", "run"]);
    ok(d, &["simulate", "--config", "coated.json", "--seed", "1", "--out", "run"]);
    for c in run_configs(&d.join("run")) {
        ok(d, &["evaluate", "--config", &format!("run/{c}")]);
    }
    let coated_da = tile_values(&d.join("run/eval/coated_lidar_far/tiles.csv"), "depth_accuracy");
    let mean = coated_da.iter().sum::<f64>() / coated_da.len() as f64;
    assert!((mean + 0.005).abs() < 2e-4, "coated mean {mean}");

    let printed = ok(d, &["stats", "run/long_table.csv", "--metric", "depth_accuracy"]);
    assert!(printed.contains("depth_accuracy"));
    let anova = fs::read_to_string(d.join("run/anova_depth_accuracy.csv")).unwrap();
    let mut lines = anova.lines();
    assert_eq!(lines.next(), Some("effect,F,df1,df2,p"));
    let tissue: Vec<&str> = lines.find(|l| l.starts_with("B,")).unwrap().split(',').collect();
    let p: f64 = tissue[4].parse().unwrap();
    assert!(p < 0.001, "tissue effect p = {p}");

    let report = ok(d, &["report", "run"]);
    assert!(report.contains("coated") && report.contains("significant effects"));
    let csv = fs::read_to_string(d.join("run/report.csv")).unwrap();
    assert_eq!(csv.lines().count(), 1 + 3 * 8);
}

#[test]
fn pins_and_kinematic_registration_agree_at_anchor() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    write(d, "sim.json", &sim_config("plain", r#"{"pin_sigma": 0.0003}"#, ""));
    ok(d, &["simulate", "--config", "sim.json", "--out", "run"]);
    let pins_cfg = fs::read_to_string(d.join("run/run_plain_endo_far.json")).unwrap();
    assert!(pins_cfg.contains("\"pins\""));
    fs::write(d.join("run/kine.json"), pins_cfg.replace("\"pins\"", "\"kine\"")).unwrap();
    let pins = ok(d, &["register", "--config", "run/run_plain_endo_far.json"]);
    let kine = ok(d, &["register", "--config", "run/kine.json", "--out", "run/kine_out"]);
    let (a, b) = (matrix(&pins), matrix(&kine));
    assert!(a.iter().zip(&b).all(|(x, y)| (x - y).abs() <= 1e-10), "{a:?}\n{b:?}");
    assert!(kine.contains("\"kine\""));
    assert!(d.join("run/eval/plain_endo_far/registration.json").is_file());
}

#[test]
fn close_view_without_pins_uses_the_kinematic_chain() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let narrow = r#"{
  "tissue": "plain",
  "scene": {"surface": {"kind": "planar"}},
  "cameras": [{"name": "endo", "intrinsics": {"width": 64, "height": 40, "fx": 220, "fy": 220}}],
  "frames": 3
}"#;
    write(d, "sim.json", narrow);
    let manifest = ok(d, &["simulate", "--config", "sim.json", "--out", "run"]);
    assert!(manifest.contains("kinematic registration"), "{manifest}");
    let cfg: Value =
        serde_json::from_str(&fs::read_to_string(d.join("run/run_plain_endo_close.json")).unwrap()).unwrap();
    assert_eq!(cfg["registration"]["mode"], "kine");
    assert!(cfg.get("viewfield_partner").is_none());

    // The chain, evaluated during the recording, lands on the true pose.
    let reg = ok(d, &["register", "--config", "run/run_plain_endo_close.json", "--at", "1.0"]);
    let truth = fs::read_to_string(d.join("run/truth_plain_endo_close.json")).unwrap();
    let (a, b) = (matrix(&reg), matrix(&truth));
    assert!(a.iter().zip(&b).all(|(x, y)| (x - y).abs() < 1e-9), "{a:?}\n{b:?}");

    ok(d, &["evaluate", "--config", "run/run_plain_endo_close.json"]);
    let da = tile_values(&d.join("run/eval/plain_endo_close/tiles.csv"), "depth_accuracy");
    assert!(da.iter().all(|v| v.abs() < 5e-5), "{da:?}");
}

#[test]
fn reruns_are_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    write(d, "sim.json", &sim_config("plain", r#"{"sigma": 0.0005, "pin_sigma": 0.0002}"#, ""));
    ok(d, &["simulate", "--config", "sim.json", "--seed", "9", "--out", "a"]);
    ok(d, &["simulate", "--config", "sim.json", "--seed", "9", "--out", "b"]);
    for name in
        ["frames_plain_endo_far.ocf", "pins_plain_lidar_close.csv", "mesh_plain.ply", "pose_plain_endo_close.csv"]
    {
        assert_eq!(fs::read(d.join("a").join(name)).unwrap(), fs::read(d.join("b").join(name)).unwrap(), "{name}");
    }
    ok(d, &["evaluate", "--config", "a/run_plain_endo_far.json", "--out", "first"]);
    ok(d, &["evaluate", "--config", "a/run_plain_endo_far.json", "--out", "second", "--threads", "1"]);
    for name in ["metrics.csv", "tiles.csv", "footprint.csv", "depth_accuracy.ppm"] {
        assert_eq!(
            fs::read(d.join("first").join(name)).unwrap(),
            fs::read(d.join("second").join(name)).unwrap(),
            "{name}"
        );
    }
    // Re-evaluating the same condition replaces its rows instead of appending.
    let table = fs::read_to_string(d.join("a/long_table.csv")).unwrap();
    assert_eq!(table.lines().count(), 1 + 90);
}

#[test]
fn mask_flags_change_the_kept_pixels() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let outlier = r#", "regions": [{"shape": {"disc": {"center": [0, 0], "radius": 0.01}}, "outlier": true}]"#;
    write(d, "sim.json", &sim_config("plain", "{}", outlier));
    ok(d, &["simulate", "--config", "sim.json", "--out", "run"]);
    let masked = ok(d, &["evaluate", "--config", "run/run_plain_endo_far.json", "--out", "m"]);
    let unmasked = ok(
        d,
        &[
            "evaluate",
            "--config",
            "run/run_plain_endo_far.json",
            "--out",
            "u",
            "--no-content-mask",
            "--no-viewfield-mask",
        ],
    );
    let kept = |s: &str| -> usize {
        let line = s.lines().find(|l| l.contains("kept after masking")).unwrap();
        line.split(", ").nth(1).unwrap().split(' ').next().unwrap().parse().unwrap()
    };
    assert!(kept(&masked) < kept(&unmasked), "{masked}\n{unmasked}");
    assert!(unmasked.contains("view-field mask disabled"));
    ok(d, &["evaluate", "--config", "run/run_plain_endo_far.json", "--out", "x", "--exact-face"]);
}

#[test]
fn failures_name_the_file_and_leave_nothing_behind() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    write(d, "sim.json", &sim_config("plain", "{}", ""));
    ok(d, &["simulate", "--config", "sim.json", "--out", "run"]);

    // Missing input.
    fs::rename(d.join("run/pins_plain_endo_far.csv"), d.join("pins.bak")).unwrap();
    let err = fail(d, &["evaluate", "--config", "run/run_plain_endo_far.json"]);
    assert!(err.contains("pins_plain_endo_far.csv"), "{err}");
    fs::rename(d.join("pins.bak"), d.join("run/pins_plain_endo_far.csv")).unwrap();

    // Truncated frames: the error carries the path and a byte offset.
    let frames = d.join("run/frames_plain_endo_far.ocf");
    let bytes = fs::read(&frames).unwrap();
    fs::write(&frames, &bytes[..bytes.len() - 100]).unwrap();
    let err = fail(d, &["evaluate", "--config", "run/run_plain_endo_far.json"]);
    assert!(err.contains("frames_plain_endo_far.ocf") && err.contains("byte offset"), "{err}");
    assert!(!d.join("run/eval").exists());
    assert!(!d.join("run/long_table.csv").exists());

    // Malformed config.
    write(d, "bad.json", "{\"mesh\": ");
    let err = fail(d, &["register", "--config", "bad.json", "--out", "o"]);
    assert!(err.contains("bad.json"), "{err}");

    // A simulation that cannot place enough pins writes nothing.
    let blind = sim_config("plain", "{}", "").replace("\"fx\": 210", "\"fx\": 5000");
    write(
        d,
        "blind.json",
        &blind
            .replace("\"frames\": 4", "\"frames\": 4, \"registration_view\": {\"name\": \"near\", \"distance\": 0.03}"),
    );
    let err = fail(d, &["simulate", "--config", "blind.json", "--out", "blind"]);
    assert!(err.contains("pins"), "{err}");
    assert!(!d.join("blind").exists());

    let err = fail(d, &["stats", "missing.csv"]);
    assert!(err.contains("missing.csv"), "{err}");
}
