use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use eincm::data::{read_flow, write_flow, DisplacementField};
use eincm::edges::{write_gray_pgm, GrayImage};

fn eincm(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_eincm")).args(args).output().expect("run eincm")
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn synth(dir: &Path) {
    let out = eincm(&["synth", "--out", p(dir)]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
}

fn report_mean(csv: &str) -> Vec<String> {
    let last = csv.lines().last().unwrap();
    last.split(',').map(str::to_owned).collect()
}

#[test]
fn synth_writes_the_scene_layout() {
    let dir = tempfile::tempdir().unwrap();
    synth(dir.path());
    for f in ["events.txt", "gt.flo", "scene.json", "frames/images.txt"] {
        assert!(dir.path().join(f).is_file(), "missing {f}");
    }
    let pgms = fs::read_dir(dir.path().join("frames"))
        .unwrap()
        .filter(|e| e.as_ref().unwrap().path().extension().is_some_and(|x| x == "pgm"))
        .count();
    assert_eq!(pgms, 3);
}

#[test]
fn synth_is_byte_deterministic() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    synth(a.path());
    synth(b.path());
    for f in ["events.txt", "gt.flo", "scene.json", "frames/frame_001.pgm", "frames/images.txt"] {
        assert_eq!(fs::read(a.path().join(f)).unwrap(), fs::read(b.path().join(f)).unwrap(), "{f}");
    }
}

#[test]
fn invalid_scene_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = eincm(&["synth", "--out", p(dir.path()), "--vx", "5000"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(!out.stderr.is_empty());
}

#[test]
fn estimate_recovers_synthetic_flow() {
    let dir = tempfile::tempdir().unwrap();
    let scene = dir.path().join("scene");
    let run = dir.path().join("run");
    synth(&scene);
    let out = eincm(&[
        "estimate",
        "--preset",
        "mvsec-indoor",
        "--events",
        p(&scene.join("events.txt")),
        "--frames",
        p(&scene.join("frames")),
        "--out",
        p(&run),
        "--viz",
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(run.join("flow/000000.flo").is_file());
    assert!(run.join("flow/000000.png").is_file());
    assert!(fs::read_to_string(run.join("diagnostics.jsonl")).unwrap().lines().count() == 5);

    let pred = read_flow(&run.join("flow/000000.flo")).unwrap();
    assert_eq!((pred.width, pred.height), (64, 64));
    let report = run.join("report.csv");
    let out = eincm(&[
        "evaluate",
        "--pred",
        p(&run.join("flow")),
        "--gt",
        p(&scene.join("gt.flo")),
        "--events",
        p(&scene.join("events.txt")),
        "--out",
        p(&report),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let mean = report_mean(&fs::read_to_string(report).unwrap());
    let aee: f64 = mean[1].parse().unwrap();
    let outliers: f64 = mean[2].parse().unwrap();
    let fwl: f64 = mean[3].parse().unwrap();
    assert!(aee <= 0.5, "AEE {aee}");
    assert_eq!(outliers, 0.0);
    assert!(fwl > 1.0);
}

#[test]
fn events_only_estimate_runs_without_frames() {
    let dir = tempfile::tempdir().unwrap();
    let scene = dir.path().join("scene");
    let run = dir.path().join("run");
    synth(&scene);
    let out = eincm(&["estimate", "--events", p(&scene.join("events.txt")), "--out", p(&run), "--n-events", "12000"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(run.join("flow/000000.flo").is_file());
    assert!(run.join("flow/000001.flo").is_file());
    let diag = fs::read_to_string(run.join("diagnostics.jsonl")).unwrap();
    // the second window receives the first one's solution
    assert!(diag.lines().filter(|l| l.contains("\"sample_id\":\"000001\"")).any(|l| !l.contains("\"w_ho\":null")));
}

#[test]
fn estimate_input_errors() {
    let dir = tempfile::tempdir().unwrap();
    let out = eincm(&["estimate", "--events", p(&dir.path().join("missing.txt")), "--out", p(dir.path())]);
    assert_eq!(out.status.code(), Some(2));
    let out = eincm(&["estimate", "--out", p(dir.path())]);
    assert_eq!(out.status.code(), Some(1));
    let out = eincm(&["estimate", "--preset", "nope", "--events", "x", "--out", p(dir.path())]);
    assert_eq!(out.status.code(), Some(1));
    let cfg = dir.path().join("bad.toml");
    fs::write(&cfg, "unknown_key = 3\n").unwrap();
    let out = eincm(&["estimate", "--config", p(&cfg), "--events", "x", "--out", p(dir.path())]);
    assert_eq!(out.status.code(), Some(1));
    let events = dir.path().join("bad.txt");
    fs::write(&events, "0.1 1 1 1\n0.05 2 2 0\n").unwrap();
    let out = eincm(&["estimate", "--events", p(&events), "--out", p(dir.path())]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains(":2:"));
}

#[test]
fn evaluate_reports_known_offsets() {
    let dir = tempfile::tempdir().unwrap();
    let (pred, gt) = (dir.path().join("pred"), dir.path().join("gt"));
    fs::create_dir_all(&pred).unwrap();
    fs::create_dir_all(&gt).unwrap();
    for id in ["000000", "000001"] {
        write_flow(&gt.join(format!("{id}.flo")), &DisplacementField::constant(8, 6, 1.0, -1.0)).unwrap();
        write_flow(&pred.join(format!("{id}.flo")), &DisplacementField::constant(8, 6, 4.0, 3.0)).unwrap();
    }
    let out = eincm(&["evaluate", "--pred", p(&pred), "--gt", p(&gt)]);
    assert!(out.status.success());
    let csv = String::from_utf8(out.stdout).unwrap();
    assert_eq!(csv.lines().next().unwrap(), "sample_id,aee,outlier_pct,fwl,n_valid");
    assert_eq!(csv.lines().count(), 4);
    assert_eq!(csv.lines().last().unwrap(), "mean,5.000000,100.000000,,96");

    let out = eincm(&["evaluate", "--pred", p(&gt), "--gt", p(&gt)]);
    assert!(String::from_utf8(out.stdout).unwrap().ends_with("mean,0.000000,0.000000,,96\n"));
}

#[test]
fn evaluate_rejects_mismatched_ids() {
    let dir = tempfile::tempdir().unwrap();
    let (pred, gt) = (dir.path().join("pred"), dir.path().join("gt"));
    fs::create_dir_all(&pred).unwrap();
    fs::create_dir_all(&gt).unwrap();
    let f = DisplacementField::constant(4, 4, 0.0, 0.0);
    write_flow(&pred.join("000000.flo"), &f).unwrap();
    write_flow(&gt.join("000001.flo"), &f).unwrap();
    write_flow(&gt.join("000002.flo"), &f).unwrap();
    let out = eincm(&["evaluate", "--pred", p(&pred), "--gt", p(&gt)]);
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("000000") && err.contains("000002"), "{err}");
}

#[test]
fn edges_of_a_constant_image_are_zero() {
    let dir = tempfile::tempdir().unwrap();
    let frames = dir.path().join("frames");
    fs::create_dir_all(&frames).unwrap();
    write_gray_pgm(&frames.join("flat.pgm"), &GrayImage::filled(32, 24, 90.0, 0.0)).unwrap();
    fs::write(frames.join("broken.pgm"), b"P5\n").unwrap();
    let out_dir = dir.path().join("edges");
    let out = eincm(&["edges", "--frames", p(&frames), "--out", p(&out_dir)]);
    // the unreadable file is reported but the flat image is still written
    assert_eq!(out.status.code(), Some(2));
    let bytes = fs::read(out_dir.join("flat.pgm")).unwrap();
    let header = b"P5\n32 24\n255\n";
    assert_eq!(&bytes[..header.len()], header);
    assert!(bytes[header.len()..].iter().all(|&b| b == 0));
}

#[test]
fn help_exits_cleanly() {
    let out = eincm(&["--help"]);
    assert!(out.status.success());
    for cmd in ["synth", "estimate", "evaluate", "edges"] {
        assert!(String::from_utf8_lossy(&out.stdout).contains(cmd));
    }
}
