//! On-disk and on-wire formats shared with the trainer: NPY volumes, the
//! dataset directory, the PNS1 pipe and prediction JSON.

use std::collections::BTreeSet;
use std::fs;
use std::io::Cursor;
use std::path::Path;

use aberro::dataset::{
    generate_dataset, read_sample, stream_batches, write_pipe, DatasetManifest, DatasetSpec, PipeReader,
    SampleSource, INCOMPLETE_MARKER,
};
use aberro::eval::{eval_grid, evaluate, PredictionSet};
use aberro::npy::{self, quantize};
use aberro::optics::{MicroscopeConfig, Preset};
use aberro::zernike::AmplitudeVector;
use aberro::Error;

fn small_spec(count: usize, seed: u64) -> DatasetSpec {
    let mut spec = DatasetSpec::from_preset(&Preset::widefield(), count, seed);
    spec.config = MicroscopeConfig {
        nx: 16,
        ny: 16,
        nz: 8,
        ..spec.config
    };
    spec
}

fn file_names(dir: &Path) -> BTreeSet<String> {
    fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().file_name().to_string_lossy().into_owned())
        .collect()
}

#[test]
fn npy_volume_layout() {
    let spec = small_spec(1, 5);
    let (_, stack) = SampleSource::new(&spec).unwrap().sample(0).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("v.npy");
    npy::write_stack(&path, &stack, None).unwrap();

    let bytes = fs::read(&path).unwrap();
    assert_eq!(&bytes[..8], b"\x93NUMPY\x01\x00");
    let hlen = u16::from_le_bytes([bytes[8], bytes[9]]) as usize;
    assert_eq!((10 + hlen) % 64, 0);
    let header = std::str::from_utf8(&bytes[10..10 + hlen]).unwrap();
    assert!(header.contains("'descr': '<f4'"), "{header}");
    assert!(header.contains("'fortran_order': False"));
    assert!(header.contains("'shape': (8, 16, 16)"));
    assert!(header.ends_with('\n'));
    assert_eq!(bytes.len(), 10 + hlen + 4 * 8 * 16 * 16);

    // first value, little-endian float32
    let first = f32::from_le_bytes(bytes[10 + hlen..14 + hlen].try_into().unwrap());
    assert_eq!(first, stack.data[[0, 0, 0]] as f32);

    let back = npy::read_stack(&path, Some(&spec.config)).unwrap();
    assert_eq!(back.data, quantize(&stack).data);
    assert_eq!(back.z_offsets_um, spec.config.z_offsets());
}

#[test]
fn dataset_directory_layout() {
    let mut spec = small_spec(3, 9);
    spec.write_meta = true;
    let dir = tempfile::tempdir().unwrap();
    let manifest = generate_dataset(&spec, dir.path()).unwrap();

    let expected: BTreeSet<String> = ["manifest.json", "amplitudes.csv"]
        .into_iter()
        .map(String::from)
        .chain((0..3).flat_map(|k| [format!("psf_{k:06}.npy"), format!("psf_{k:06}.meta.json")]))
        .collect();
    assert_eq!(file_names(dir.path()), expected);

    let json: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("manifest.json")).unwrap()).unwrap();
    assert_eq!(json["format_version"], "1");
    assert_eq!(json["sampler"]["count"], 3);
    assert_eq!(json["sample_files"][2]["psf"], "psf_000002.npy");
    assert!(json["sample_files"][0]["amplitudes"]["5"].is_number());
    assert_eq!(DatasetManifest::load(dir.path()).unwrap(), manifest);
    manifest.validate(dir.path()).unwrap();

    let csv = fs::read_to_string(dir.path().join("amplitudes.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(
        lines.next().unwrap(),
        "sample_id,a5,a6,a7,a8,a9,a10,a11,a12,a13,a14,a15"
    );
    for (line, rec) in lines.zip(&manifest.sample_files) {
        let cells: Vec<&str> = line.split(',').collect();
        assert_eq!(cells[0].parse::<u64>().unwrap(), rec.sample_id);
        for (cell, m) in cells[1..].iter().zip(5..=15) {
            assert_eq!(cell.parse::<f64>().unwrap(), rec.amplitudes.get(m));
        }
    }

    let src = SampleSource::new(&spec).unwrap();
    for k in 0..3 {
        let (amps, stack) = read_sample(dir.path(), &manifest, k).unwrap();
        let (want_amps, want) = src.sample(k).unwrap();
        assert_eq!(amps, want_amps);
        assert_eq!(stack.data, quantize(&want).data);
    }
}

#[test]
fn unfinished_or_damaged_dataset_fails_validation() {
    let spec = small_spec(2, 1);
    let dir = tempfile::tempdir().unwrap();
    let manifest = generate_dataset(&spec, dir.path()).unwrap();

    fs::write(dir.path().join(INCOMPLETE_MARKER), "").unwrap();
    assert!(matches!(manifest.validate(dir.path()), Err(Error::Format(_))));
    fs::remove_file(dir.path().join(INCOMPLETE_MARKER)).unwrap();

    fs::remove_file(dir.path().join("psf_000001.npy")).unwrap();
    let err = manifest.validate(dir.path()).unwrap_err();
    assert!(err.to_string().contains("psf_000001.npy"), "{err}");
}

#[test]
fn empty_dataset_is_valid() {
    let spec = small_spec(0, 0);
    let dir = tempfile::tempdir().unwrap();
    let manifest = generate_dataset(&spec, dir.path()).unwrap();
    assert!(manifest.sample_files.is_empty());
    manifest.validate(dir.path()).unwrap();
    assert_eq!(
        file_names(dir.path()),
        ["amplitudes.csv", "manifest.json"].map(String::from).into()
    );
    assert_eq!(fs::read_to_string(dir.path().join("amplitudes.csv")).unwrap().lines().count(), 1);
}

#[test]
fn pipe_records_match_dataset_files() {
    let spec = small_spec(6, 17);
    let dir = tempfile::tempdir().unwrap();
    let manifest = generate_dataset(&spec, dir.path()).unwrap();

    let mut wire = Vec::new();
    let written = write_pipe(&mut wire, &spec, 3, Some(2)).unwrap();
    assert_eq!(written, 6);
    assert_eq!(&wire[..4], b"PNS1");

    let mut reader = PipeReader::new(Cursor::new(wire)).unwrap();
    let h = reader.header.clone();
    assert_eq!(h.batch_size, 3);
    assert_eq!(h.volume_shape, [8, 16, 16]);
    assert_eq!(h.sampler.mode_set, (5..=15).collect::<Vec<_>>());
    assert_eq!(h.record_len(), 4 * (11 + 8 * 16 * 16));

    let mut k = 0;
    while let Some(rec) = reader.next_record().unwrap() {
        let (amps, stack) = read_sample(dir.path(), &manifest, k).unwrap();
        let want: Vec<f32> = (5..=15).map(|m| amps.get(m) as f32).collect();
        assert_eq!(rec.amplitudes, want);
        let vol: Vec<f64> = rec.volume.iter().map(|&v| v as f64).collect();
        assert_eq!(vol, stack.data.iter().copied().collect::<Vec<_>>());
        k += 1;
    }
    assert_eq!(k, 6);
}

#[test]
fn pipe_header_for_the_widefield_preset() {
    let spec = DatasetSpec::from_preset(&Preset::widefield(), 0, 0);
    let mut wire = Vec::new();
    assert_eq!(write_pipe(&mut wire, &spec, 8, Some(0)).unwrap(), 0);
    let newline = wire.iter().position(|&b| b == b'\n').unwrap();
    assert_eq!(newline, wire.len() - 1);
    let header: serde_json::Value = serde_json::from_slice(&wire[4..newline]).unwrap();
    assert_eq!(header["volume_shape"], serde_json::json!([50, 50, 50]));
    assert_eq!(header["batch_size"], 8);
    assert_eq!(header["config"]["na"], 1.1);
    let reader = PipeReader::new(Cursor::new(wire)).unwrap();
    assert_eq!(reader.header.record_len(), 500_044);
}

#[test]
fn pipe_reader_rejects_malformed_streams() {
    assert!(matches!(
        PipeReader::new(Cursor::new(b"NOPE{}\n".to_vec())),
        Err(Error::Format(_))
    ));

    let spec = small_spec(1, 0);
    let mut wire = Vec::new();
    write_pipe(&mut wire, &spec, 1, Some(1)).unwrap();
    let newline = wire.iter().position(|&b| b == b'\n').unwrap();
    wire[newline + 1] ^= 1; // corrupt the record length
    let mut reader = PipeReader::new(Cursor::new(wire)).unwrap();
    assert!(matches!(reader.next_record(), Err(Error::Format(_))));
}

#[test]
fn stream_batches_are_ordered_and_match_samples() {
    let spec = small_spec(0, 23);
    let src = SampleSource::new(&spec).unwrap();
    let batches: Vec<_> = stream_batches(&spec, 2).unwrap().take(3).map(Result::unwrap).collect();
    let indices: Vec<u64> = batches.iter().flat_map(|b| b.indices.clone()).collect();
    assert_eq!(indices, (0..6).collect::<Vec<_>>());
    let b = &batches[1];
    let (amps, stack) = src.sample(3).unwrap();
    assert_eq!(b.amplitudes[1], amps);
    assert_eq!(b.volumes[1].data, stack.data);
}

#[test]
fn prediction_json_from_an_external_tool() {
    // what a trainer writes: wall time is optional
    let text = r#"{
        "method": "phasenet",
        "predictions": [
            {"sample_id": 0, "amplitudes": {"5": 0.01, "7": -0.02}},
            {"sample_id": 1, "amplitudes": {"5": 0.0}, "wall_time_ms": 4.0}
        ]
    }"#;
    let set: PredictionSet = serde_json::from_str(text).unwrap();
    assert_eq!(set.predictions[0].wall_time_ms, 0.0);
    let truths = vec![
        (0, AmplitudeVector::from_pairs([(5, 0.01), (7, -0.02)]).unwrap()),
        (1, AmplitudeVector::from_pairs([(5, 0.03), (6, 0.04)]).unwrap()),
    ];
    let report = evaluate(&set.method, &set.predictions, &truths, &eval_grid()).unwrap();
    let rmse = report.rmse("phasenet");
    assert!(rmse[0] < 1e-9);
    // |(0.03, 0.04)| = 0.05
    assert!((rmse[1] - 0.05).abs() < 1e-3, "{}", rmse[1]);

    let back: PredictionSet = serde_json::from_str(&serde_json::to_string(&set).unwrap()).unwrap();
    assert_eq!(back, set);

    let mismatched = vec![(5, AmplitudeVector::new()), (1, AmplitudeVector::new())];
    assert!(evaluate(&set.method, &set.predictions, &mismatched, &eval_grid()).is_err());
}
