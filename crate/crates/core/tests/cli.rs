//! End-to-end runs of the `aberro` binary.

use std::fs;
use std::io::{BufReader, Read};
use std::path::{Path, PathBuf};
use std::process::{Command, Output, Stdio};

use aberro::dataset::{DatasetManifest, PipeReader};
use aberro::fit::{fit_retrieve_with, FitOptions};
use aberro::npy::quantize;
use aberro::optics::{Preset, Propagator};
use aberro::zernike::AmplitudeVector;
use serde_json::Value;

fn aberro(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_aberro"))
        .args(args)
        .env_remove("ABERRO_THREADS")
        .output()
        .unwrap()
}

fn ok(args: &[&str]) -> String {
    let out = aberro(args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn read_json(path: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

/// A 16x16x8 widefield-like preset that keeps the slow commands quick.
fn small_preset(dir: &Path) -> PathBuf {
    let path = dir.join("small.json");
    fs::write(
        &path,
        r#"{"name": "small", "na": 1.1, "lambda_um": 0.488, "n0": 1.33,
            "dx_um": 0.086, "dy_um": 0.086, "dz_um": 0.1,
            "nx": 16, "ny": 16, "nz": 8, "oversample": 2, "bead_diameter_um": 0.0}"#,
    )
    .unwrap();
    path
}

#[test]
fn synth_then_retrieve_matches_the_library() {
    let dir = tempfile::tempdir().unwrap();
    let npy = dir.path().join("psf.npy");
    let amps = r#"{"5": 0.05, "7": -0.03}"#;
    ok(&["synth", "--preset", "point_scanning", "--amps", amps, "--out", s(&npy)]);
    let meta = read_json(&dir.path().join("psf.meta.json"));
    assert_eq!(meta["z_offsets_um"].as_array().unwrap().len(), 32);

    let fit_json = dir.path().join("fit.json");
    ok(&["retrieve", "fit", "--input", s(&npy), "--config", "point_scanning", "--out", s(&fit_json)]);
    let r = read_json(&fit_json);
    assert_eq!(r["method"], "fit");
    let got: AmplitudeVector = serde_json::from_value(r["amplitudes"].clone()).unwrap();

    // same result in-process from the same float32 volume
    let truth: AmplitudeVector = serde_json::from_str(amps).unwrap();
    let prop = Propagator::new(&Preset::point_scanning().microscope).unwrap();
    let stack = quantize(&prop.synth(&truth).unwrap());
    let want = fit_retrieve_with(&prop, &stack, &FitOptions::default()).unwrap().amplitudes;
    assert_eq!(got, want);
    assert!((got.get(5) - 0.05).abs() < 1e-3 && (got.get(7) + 0.03).abs() < 1e-3);

    let trace = r["objective_trace"].as_array().unwrap();
    let trace: Vec<f64> = trace.iter().map(|v| v.as_f64().unwrap()).collect();
    assert!(trace.windows(2).all(|w| w[1] <= w[0]));

    let gs_json = dir.path().join("gs.json");
    ok(&["retrieve", "gs", "--input", s(&npy), "--preset", "point_scanning", "--out", s(&gs_json)]);
    let g = read_json(&gs_json);
    assert_eq!(g["per_iteration_residual"].as_array().unwrap().len(), 30);
    assert!((g["amplitudes"]["5"].as_f64().unwrap() - 0.05).abs() < 0.01);
}

#[test]
fn thread_count_does_not_change_results() {
    let dir = tempfile::tempdir().unwrap();
    let preset = small_preset(dir.path());
    let mut trees = Vec::new();
    for (flag, env) in [(Some("1"), None), (Some("4"), None), (None, Some("3"))] {
        let out = dir.path().join(format!("ds{}", trees.len()));
        let mut cmd = Command::new(env!("CARGO_BIN_EXE_aberro"));
        cmd.args(["dataset", "gen", "--preset", s(&preset), "--count", "5", "--seed", "7", "--out", s(&out)]);
        if let Some(t) = flag {
            cmd.args(["--threads", t]);
        }
        match env {
            Some(t) => cmd.env("ABERRO_THREADS", t),
            None => cmd.env_remove("ABERRO_THREADS"),
        };
        assert!(cmd.status().unwrap().success());
        let mut files: Vec<(String, Vec<u8>)> = fs::read_dir(&out)
            .unwrap()
            .map(|e| {
                let e = e.unwrap();
                (e.file_name().to_string_lossy().into_owned(), fs::read(e.path()).unwrap())
            })
            .collect();
        files.sort();
        trees.push(files);
    }
    assert_eq!(trees[0].len(), 7);
    assert_eq!(trees[0], trees[1]);
    assert_eq!(trees[0], trees[2]);
}

#[test]
fn failures_exit_nonzero_with_a_json_report() {
    let dir = tempfile::tempdir().unwrap();

    let report = dir.path().join("r.json");
    let out = aberro(&[
        "retrieve", "fit", "--input", s(&dir.path().join("missing.npy")),
        "--config", "point_scanning", "--out", s(&report),
    ]);
    assert_eq!(out.status.code(), Some(1));
    let err = read_json(&report);
    assert_eq!(err["error"]["code"], "io");
    assert!(!err["error"]["message"].as_str().unwrap().is_empty());

    let npy = dir.path().join("bad.npy");
    let out = aberro(&["synth", "--preset", "point_scanning", "--amps", r#"{"99": 1}"#, "--out", s(&npy)]);
    assert_eq!(out.status.code(), Some(1));
    assert!(!npy.exists());
    let err = read_json(&dir.path().join("bad.npy.error.json"));
    assert_eq!(err["error"]["code"], "invalid_argument");

    let out = aberro(&["preset", "show", "no_such_preset"]);
    assert_eq!(out.status.code(), Some(1));

    let out = aberro(&["retrieve", "fit", "--input", "x.npy", "--config", "point_scanning",
                       "--objective", "l1", "--out", s(&report)]);
    assert_eq!(out.status.code(), Some(1));

    // usage errors come from argument parsing
    assert_eq!(aberro(&["frobnicate"]).status.code(), Some(2));
    assert_eq!(aberro(&["synth", "--preset"]).status.code(), Some(2));

    let out = Command::new(env!("CARGO_BIN_EXE_aberro"))
        .args(["preset", "show", "widefield"])
        .env("ABERRO_THREADS", "many")
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn preset_show_prints_json() {
    let v: Value = serde_json::from_str(&ok(&["preset", "show", "widefield"])).unwrap();
    assert_eq!(v["name"], "widefield");
    assert_eq!(v["nx"], 50);
    assert_eq!(v["na"], 1.1);
}

#[test]
fn dataset_stream_writes_pns1() {
    let dir = tempfile::tempdir().unwrap();
    let preset = small_preset(dir.path());
    let pipe = dir.path().join("stream.bin");
    ok(&["dataset", "stream", "--preset", s(&preset), "--batch", "2", "--batches", "2", "--out", s(&pipe)]);
    let mut reader = PipeReader::new(BufReader::new(fs::File::open(&pipe).unwrap())).unwrap();
    assert_eq!(reader.header.volume_shape, [8, 16, 16]);
    let mut n = 0;
    while let Some(rec) = reader.next_record().unwrap() {
        assert_eq!(rec.amplitudes.len(), 11);
        assert!(rec.amplitudes.iter().all(|a| a.abs() <= 0.075));
        n += 1;
    }
    assert_eq!(n, 4);
}

#[test]
fn dataset_stream_stops_cleanly_when_the_reader_leaves() {
    let dir = tempfile::tempdir().unwrap();
    let preset = small_preset(dir.path());
    let mut child = Command::new(env!("CARGO_BIN_EXE_aberro"))
        .args(["dataset", "stream", "--preset", s(&preset), "--batch", "4"])
        .stdout(Stdio::piped())
        .stderr(Stdio::null())
        .spawn()
        .unwrap();
    let mut stdout = child.stdout.take().unwrap();
    let mut head = [0u8; 4];
    stdout.read_exact(&mut head).unwrap();
    assert_eq!(&head, b"PNS1");
    drop(stdout);
    assert!(child.wait().unwrap().success());
}

#[test]
fn eval_run_scores_external_predictions_and_plots() {
    let dir = tempfile::tempdir().unwrap();
    let preset = small_preset(dir.path());
    let ds = dir.path().join("ds");
    ok(&["dataset", "gen", "--preset", s(&preset), "--count", "4", "--out", s(&ds)]);
    let manifest = DatasetManifest::load(&ds).unwrap();

    // perfect predictions, as a trainer would write them
    let preds: Vec<Value> = manifest
        .sample_files
        .iter()
        .map(|r| serde_json::json!({"sample_id": r.sample_id, "amplitudes": r.amplitudes}))
        .collect();
    let pred_path = dir.path().join("pred.json");
    fs::write(&pred_path, serde_json::json!({"method": "oracle", "predictions": preds}).to_string()).unwrap();

    let report = dir.path().join("report.json");
    ok(&["eval", "run", "--dataset", s(&ds), "--predictions", s(&pred_path), "--out", s(&report)]);
    let r = read_json(&report);
    assert!(r["summary"]["oracle"]["median"].as_f64().unwrap() < 1e-9);
    assert_eq!(r["per_sample"].as_array().unwrap().len(), 4);
    let csv = fs::read_to_string(report.with_extension("csv")).unwrap();
    assert_eq!(csv.lines().count(), 5);

    let svg = dir.path().join("report.svg");
    ok(&["eval", "plot", "--input", s(&report), "--out", s(&svg)]);
    assert!(fs::read_to_string(&svg).unwrap().starts_with("<svg"));

    // scoring with the built-in methods on the same dataset
    let gs_report = dir.path().join("gs.json");
    ok(&["eval", "run", "--dataset", s(&ds), "--methods", "gs", "--out", s(&gs_report)]);
    assert!(read_json(&gs_report)["summary"]["gs"]["median"].as_f64().unwrap() > 0.0);
}

#[test]
fn sweep_ablation_and_bench_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let preset = small_preset(dir.path());

    let sweep = dir.path().join("sweep.json");
    ok(&["eval", "sweep", "--preset", s(&preset), "--method", "gs", "--mode", "5",
         "--amps", "-0.04,0,0.04", "--out", s(&sweep)]);
    let v = read_json(&sweep);
    assert_eq!(v["mode"], 5);
    assert_eq!(v["rows"].as_array().unwrap().len(), 3);
    ok(&["eval", "plot", "--input", s(&sweep), "--out", s(&dir.path().join("sweep.svg"))]);

    let abl = dir.path().join("abl.json");
    ok(&["eval", "ablation", "--preset", s(&preset), "--method", "gs", "--nz", "1,8",
         "--photons", "0", "--read-sigma", "0", "--out", s(&abl)]);
    let v = read_json(&abl);
    assert_eq!(v["entries"].as_array().unwrap().len(), 4);
    ok(&["eval", "plot", "--input", s(&abl), "--out", s(&dir.path().join("abl.svg"))]);

    let bench = dir.path().join("bench.json");
    ok(&["bench", "--preset", s(&preset), "--n", "2", "--repeats", "1", "--methods", "gs",
         "--threads", "2", "--out", s(&bench)]);
    let v = read_json(&bench);
    assert_eq!(v["threads"], 2);
    let modes: Vec<&str> = v["rows"].as_array().unwrap().iter().map(|r| r["mode"].as_str().unwrap()).collect();
    assert_eq!(modes, ["single", "serial", "batched"]);
    assert!(bench.with_extension("csv").exists());
}
