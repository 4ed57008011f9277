//! Synthetic training data: amplitude sampling, on-disk datasets, live
//! batch streams and the `PNS1` pipe format.
//!
//! Sample `k` of a spec is a pure function of `(spec, k)`: its amplitudes
//! come from the keyed stream `(seed, k, TAG_AMPLITUDE + noll)` and its noise
//! from `(noise.seed, k, TAG_NOISE)`. Files on disk, streamed batches and pipe
//! records for the same index are therefore bit-identical regardless of
//! worker count or generation order.

use std::collections::BTreeMap;
use std::fs;
use std::io::{self, BufRead, Write};
use std::path::{Path, PathBuf};
use std::sync::mpsc::{sync_channel, Receiver};
use std::thread::JoinHandle;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::npy::{self, StackMeta};
use crate::optics::{apply_noise_at, bead_convolve, MicroscopeConfig, NoiseSpec, Preset, Propagator, PsfStack};
use crate::rng::{keyed_rng, TAG_AMPLITUDE};
use crate::zernike::{AmplitudeVector, ZernikeIndex, DEFAULT_MODES};

pub const FORMAT_VERSION: &str = "1";
pub const PIPE_MAGIC: &[u8; 4] = b"PNS1";
/// Marker left in a dataset directory until generation finishes.
pub const INCOMPLETE_MARKER: &str = "INCOMPLETE";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SamplerSpec {
    pub mode_set: Vec<u32>,
    /// Closed interval for every mode without an override, µm.
    pub amp_range_um: (f64, f64),
    /// Per-mode interval overrides.
    #[serde(skip_serializing_if = "BTreeMap::is_empty")]
    pub mode_ranges: BTreeMap<u32, (f64, f64)>,
    pub seed: u64,
    pub count: usize,
}

impl Default for SamplerSpec {
    fn default() -> Self {
        Self {
            mode_set: DEFAULT_MODES.collect(),
            amp_range_um: (-0.075, 0.075),
            mode_ranges: BTreeMap::new(),
            seed: 0,
            count: 0,
        }
    }
}

impl SamplerSpec {
    pub fn range(&self, noll: u32) -> (f64, f64) {
        self.mode_ranges.get(&noll).copied().unwrap_or(self.amp_range_um)
    }

    pub fn validate(&self) -> Result<()> {
        if self.mode_set.is_empty() {
            return Err(invalid("mode_set is empty"));
        }
        for (i, &m) in self.mode_set.iter().enumerate() {
            ZernikeIndex::new(m)?;
            if self.mode_set[..i].contains(&m) {
                return Err(invalid(format!("mode {m} listed twice")));
            }
            let (lo, hi) = self.range(m);
            // lo == hi is allowed and pins the mode
            if !(lo.is_finite() && hi.is_finite() && lo <= hi) {
                return Err(invalid(format!("bad amplitude range ({lo}, {hi}) for mode {m}")));
            }
        }
        Ok(())
    }
}

/// Amplitudes of sample `index`; independent of count and drawing order.
pub fn sample_amplitudes(spec: &SamplerSpec, index: u64) -> Result<AmplitudeVector> {
    spec.validate()?;
    let mut out = AmplitudeVector::new();
    for &m in &spec.mode_set {
        let (lo, hi) = spec.range(m);
        let a = if lo == hi {
            lo
        } else {
            keyed_rng(spec.seed, index, TAG_AMPLITUDE + m as u64).random_range(lo..=hi)
        };
        out.set(m, a)?;
    }
    Ok(out)
}

/// Everything needed to reproduce a dataset or stream.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DatasetSpec {
    pub config: MicroscopeConfig,
    pub sampler: SamplerSpec,
    pub noise: NoiseSpec,
    pub bead_diameter_um: f64,
    /// Also write `psf_{:06}.meta.json` next to every volume.
    #[serde(default)]
    pub write_meta: bool,
}

impl DatasetSpec {
    /// Spec with the preset's optics and bead, default sampler and noise,
    /// all randomness keyed by `seed`.
    pub fn from_preset(preset: &Preset, count: usize, seed: u64) -> Self {
        Self {
            config: preset.microscope.clone(),
            sampler: SamplerSpec {
                seed,
                count,
                ..Default::default()
            },
            noise: NoiseSpec {
                seed,
                ..NoiseSpec::default()
            },
            bead_diameter_um: preset.bead_diameter_um,
            write_meta: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.config.validate()?;
        self.sampler.validate()
    }
}

/// Stateless sample factory shared by the generator and the stream.
#[derive(Clone, Debug)]
pub struct SampleSource {
    spec: DatasetSpec,
    prop: Propagator,
}

impl SampleSource {
    pub fn new(spec: &DatasetSpec) -> Result<Self> {
        spec.validate()?;
        Ok(Self {
            spec: spec.clone(),
            prop: Propagator::new(&spec.config)?,
        })
    }

    pub fn spec(&self) -> &DatasetSpec {
        &self.spec
    }

    /// Noiseless, bead-convolved stack of sample `index` and its amplitudes.
    pub fn clean(&self, index: u64) -> Result<(AmplitudeVector, PsfStack)> {
        let amps = sample_amplitudes(&self.spec.sampler, index)?;
        let psf = self.prop.synth(&amps)?;
        let psf = bead_convolve(&psf, self.spec.bead_diameter_um, &self.spec.config)?;
        Ok((amps, psf))
    }

    /// Final sample `index`: amplitudes and noisy stack.
    pub fn sample(&self, index: u64) -> Result<(AmplitudeVector, PsfStack)> {
        let (amps, psf) = self.clean(index)?;
        let noisy = apply_noise_at(&psf, &self.spec.noise, index)?;
        Ok((amps, noisy))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SampleRecord {
    pub sample_id: u64,
    /// Path relative to the dataset directory.
    pub psf: String,
    pub amplitudes: AmplitudeVector,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub format_version: String,
    pub config: MicroscopeConfig,
    pub sampler: SamplerSpec,
    pub noise: NoiseSpec,
    pub bead_diameter_um: f64,
    pub sample_files: Vec<SampleRecord>,
}

impl DatasetManifest {
    pub fn load(dir: &Path) -> Result<Self> {
        let text = fs::read_to_string(dir.join("manifest.json"))?;
        Ok(serde_json::from_str(&text)?)
    }

    /// Check counts and that every referenced file exists under `dir`.
    pub fn validate(&self, dir: &Path) -> Result<()> {
        if self.sample_files.len() != self.sampler.count {
            return Err(Error::Format(format!(
                "manifest lists {} files for count {}",
                self.sample_files.len(),
                self.sampler.count
            )));
        }
        if dir.join(INCOMPLETE_MARKER).exists() {
            return Err(Error::Format("dataset generation did not finish".into()));
        }
        for r in &self.sample_files {
            if !dir.join(&r.psf).is_file() {
                return Err(Error::Format(format!("missing {}", r.psf)));
            }
        }
        Ok(())
    }

    pub fn spec(&self) -> DatasetSpec {
        DatasetSpec {
            config: self.config.clone(),
            sampler: self.sampler.clone(),
            noise: self.noise,
            bead_diameter_um: self.bead_diameter_um,
            write_meta: false,
        }
    }
}

pub fn psf_file_name(index: u64) -> String {
    format!("psf_{index:06}.npy")
}

/// `sample_id,a5,...,a15` with one row per record, in mode-set order.
pub fn amplitudes_csv(mode_set: &[u32], records: &[SampleRecord]) -> String {
    let mut out = String::from("sample_id");
    for m in mode_set {
        out.push_str(&format!(",a{m}"));
    }
    out.push('\n');
    for r in records {
        out.push_str(&r.sample_id.to_string());
        for &m in mode_set {
            out.push_str(&format!(",{:e}", r.amplitudes.get(m)));
        }
        out.push('\n');
    }
    out
}

/// Generate `spec.sampler.count` samples into `dir`.
///
/// Samples are produced in parallel; file contents do not depend on the
/// number of workers. A marker file stays behind if generation fails.
pub fn generate_dataset(spec: &DatasetSpec, dir: &Path) -> Result<DatasetManifest> {
    let source = SampleSource::new(spec)?;
    fs::create_dir_all(dir)?;
    let marker = dir.join(INCOMPLETE_MARKER);
    fs::write(&marker, "generation in progress\n")?;

    let digest = spec.config.digest();
    let result: Result<Vec<SampleRecord>> = (0..spec.sampler.count as u64)
        .into_par_iter()
        .map(|k| {
            let (amps, stack) = source.sample(k)?;
            let name = psf_file_name(k);
            let path = dir.join(&name);
            let meta = spec.write_meta.then(|| StackMeta {
                z_offsets_um: stack.z_offsets_um.clone(),
                config_digest: digest.clone(),
                config: Some(spec.config.clone()),
                amplitudes: Some(amps.clone()),
            });
            npy::write_stack(&path, &stack, meta.as_ref())?;
            Ok(SampleRecord {
                sample_id: k,
                psf: name,
                amplitudes: amps,
            })
        })
        .collect();
    let records = match result {
        Ok(r) => r,
        Err(e) => {
            let _ = fs::write(&marker, format!("generation failed: {e}\n"));
            return Err(e);
        }
    };

    let manifest = DatasetManifest {
        format_version: FORMAT_VERSION.into(),
        config: spec.config.clone(),
        sampler: spec.sampler.clone(),
        noise: spec.noise,
        bead_diameter_um: spec.bead_diameter_um,
        sample_files: records,
    };
    fs::write(
        dir.join("amplitudes.csv"),
        amplitudes_csv(&spec.sampler.mode_set, &manifest.sample_files),
    )?;
    fs::write(dir.join("manifest.json"), serde_json::to_string_pretty(&manifest)?)?;
    fs::remove_file(&marker)?;
    Ok(manifest)
}

/// A block of consecutive samples.
#[derive(Clone, Debug, PartialEq)]
pub struct Batch {
    pub indices: Vec<u64>,
    pub amplitudes: Vec<AmplitudeVector>,
    pub volumes: Vec<PsfStack>,
}

/// Infinite, ordered batch iterator fed by a background producer through a
/// bounded queue. Dropping it stops the producer.
pub struct BatchStream {
    rx: Option<Receiver<Result<Batch>>>,
    worker: Option<JoinHandle<()>>,
}

impl Iterator for BatchStream {
    type Item = Result<Batch>;

    fn next(&mut self) -> Option<Self::Item> {
        self.rx.as_ref()?.recv().ok()
    }
}

impl Drop for BatchStream {
    fn drop(&mut self) {
        // closing the channel makes the producer's next send fail
        self.rx.take();
        if let Some(w) = self.worker.take() {
            let _ = w.join();
        }
    }
}

/// Queue depth of [`stream_batches`], in batches.
pub const STREAM_QUEUE: usize = 4;

/// Stream batches of samples `0, 1, 2, ...` without touching the disk.
pub fn stream_batches(spec: &DatasetSpec, batch_size: usize) -> Result<BatchStream> {
    if batch_size == 0 {
        return Err(invalid("batch_size must be >= 1"));
    }
    let source = SampleSource::new(spec)?;
    let (tx, rx) = sync_channel(STREAM_QUEUE);
    let worker = std::thread::spawn(move || {
        for b in 0u64.. {
            let start = b * batch_size as u64;
            let made: Result<Vec<(AmplitudeVector, PsfStack)>> = (start..start + batch_size as u64)
                .into_par_iter()
                .map(|k| source.sample(k))
                .collect();
            let failed = made.is_err();
            let batch = made.map(|items| {
                let (amplitudes, volumes) = items.into_iter().unzip();
                Batch {
                    indices: (start..start + batch_size as u64).collect(),
                    amplitudes,
                    volumes,
                }
            });
            if tx.send(batch).is_err() || failed {
                return;
            }
        }
    });
    Ok(BatchStream {
        rx: Some(rx),
        worker: Some(worker),
    })
}

/// First line of a `PNS1` stream.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PipeHeader {
    pub config: MicroscopeConfig,
    pub sampler: SamplerSpec,
    pub batch_size: usize,
    pub noise: NoiseSpec,
    pub bead_diameter_um: f64,
    /// `[nz, ny, nx]` of every volume.
    pub volume_shape: [usize; 3],
}

impl PipeHeader {
    pub fn record_len(&self) -> usize {
        4 * (self.sampler.mode_set.len() + self.volume_shape.iter().product::<usize>())
    }
}

pub fn encode_record(mode_set: &[u32], amps: &AmplitudeVector, volume: &PsfStack) -> Vec<u8> {
    let payload = 4 * (mode_set.len() + volume.data.len());
    let mut out = Vec::with_capacity(4 + payload);
    out.extend_from_slice(&(payload as u32).to_le_bytes());
    for &m in mode_set {
        out.extend_from_slice(&(amps.get(m) as f32).to_le_bytes());
    }
    for &v in volume.data.iter() {
        out.extend_from_slice(&(v as f32).to_le_bytes());
    }
    out
}

fn is_broken_pipe(e: &Error) -> bool {
    matches!(e, Error::Io(io) if io.kind() == io::ErrorKind::BrokenPipe)
}

/// Write a `PNS1` stream; `max_batches = None` runs until the reader goes
/// away. A closed reader ends the stream without error. Returns the number
/// of records written.
pub fn write_pipe<W: Write>(
    out: &mut W,
    spec: &DatasetSpec,
    batch_size: usize,
    max_batches: Option<u64>,
) -> Result<u64> {
    let c = &spec.config;
    let header = PipeHeader {
        config: c.clone(),
        sampler: spec.sampler.clone(),
        batch_size,
        noise: spec.noise,
        bead_diameter_um: spec.bead_diameter_um,
        volume_shape: [c.nz, c.ny, c.nx],
    };
    let mut written = 0;
    let run = |out: &mut W, written: &mut u64| -> Result<()> {
        let stream = stream_batches(spec, batch_size)?;
        out.write_all(PIPE_MAGIC)?;
        out.write_all(serde_json::to_string(&header)?.as_bytes())?;
        out.write_all(b"\n")?;
        let limit = max_batches.unwrap_or(u64::MAX);
        for batch in stream.take(limit.min(usize::MAX as u64) as usize) {
            let batch = batch?;
            for (a, v) in batch.amplitudes.iter().zip(&batch.volumes) {
                out.write_all(&encode_record(&spec.sampler.mode_set, a, v))?;
                *written += 1;
            }
            out.flush()?;
        }
        Ok(())
    };
    match run(out, &mut written) {
        Err(e) if is_broken_pipe(&e) => Ok(written),
        Err(e) => Err(e),
        Ok(()) => Ok(written),
    }
}

/// Reader for `PNS1` streams, mirroring what the trainer does.
pub struct PipeReader<R: BufRead> {
    inner: R,
    pub header: PipeHeader,
}

/// One decoded pipe record.
#[derive(Clone, Debug, PartialEq)]
pub struct PipeRecord {
    pub amplitudes: Vec<f32>,
    pub volume: Vec<f32>,
}

impl<R: BufRead> PipeReader<R> {
    pub fn new(mut inner: R) -> Result<Self> {
        let mut magic = [0u8; 4];
        inner.read_exact(&mut magic)?;
        if &magic != PIPE_MAGIC {
            return Err(Error::Format("missing PNS1 magic".into()));
        }
        let mut line = String::new();
        inner.read_line(&mut line)?;
        let header: PipeHeader = serde_json::from_str(line.trim_end())?;
        Ok(Self { inner, header })
    }

    /// Next record, or `None` at a clean end of stream.
    pub fn next_record(&mut self) -> Result<Option<PipeRecord>> {
        let mut len = [0u8; 4];
        match self.inner.read_exact(&mut len) {
            Err(e) if e.kind() == io::ErrorKind::UnexpectedEof => return Ok(None),
            r => r?,
        }
        let len = u32::from_le_bytes(len) as usize;
        if len != self.header.record_len() {
            return Err(Error::Format(format!(
                "record length {len}, header implies {}",
                self.header.record_len()
            )));
        }
        let mut buf = vec![0u8; len];
        self.inner.read_exact(&mut buf)?;
        let mut vals = buf
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()));
        let n = self.header.sampler.mode_set.len();
        let amplitudes = vals.by_ref().take(n).collect();
        Ok(Some(PipeRecord {
            amplitudes,
            volume: vals.collect(),
        }))
    }
}

/// Indices of the planes kept by [`plane_subset`].
pub fn plane_subset_indices(z_offsets_um: &[f64], n_z: usize) -> Result<Vec<usize>> {
    let nz = z_offsets_um.len();
    if n_z == 0 || n_z > nz {
        return Err(invalid(format!("n_z = {n_z} outside 1..={nz}")));
    }
    if n_z == 1 {
        // nearest to focus; ties go to the positive offset
        let best = (0..nz)
            .min_by(|&a, &b| {
                let (za, zb) = (z_offsets_um[a], z_offsets_um[b]);
                za.abs()
                    .total_cmp(&zb.abs())
                    .then(zb.total_cmp(&za))
            })
            .expect("nz >= 1");
        return Ok(vec![best]);
    }
    let stride = ((nz - 1) / (n_z - 1)) as f64;
    let center = (nz - 1) as f64 / 2.0;
    let span = (n_z - 1) as f64 / 2.0 * stride;
    let mut out: Vec<usize> = Vec::with_capacity(n_z);
    for i in 0..n_z {
        let t = center - span + 2.0 * span * i as f64 / (n_z - 1) as f64;
        let idx = (t.round() as usize).min(nz - 1);
        if !out.contains(&idx) {
            out.push(idx);
        }
    }
    Ok(out)
}

/// Keep `n_z` planes placed symmetrically about focus, values untouched.
pub fn plane_subset(stack: &PsfStack, n_z: usize) -> Result<PsfStack> {
    let idx = plane_subset_indices(&stack.z_offsets_um, n_z)?;
    let data = stack.data.select(ndarray::Axis(0), &idx);
    let zs = idx.iter().map(|&i| stack.z_offsets_um[i]).collect();
    PsfStack::new(data, zs, stack.config_digest.clone())
}

/// Path of sample `index` inside a dataset directory.
pub fn sample_path(dir: &Path, index: u64) -> PathBuf {
    dir.join(psf_file_name(index))
}

/// Read sample `index` of a generated dataset.
pub fn read_sample(dir: &Path, manifest: &DatasetManifest, index: u64) -> Result<(AmplitudeVector, PsfStack)> {
    let rec = manifest
        .sample_files
        .get(index as usize)
        .ok_or_else(|| invalid(format!("sample {index} not in manifest")))?;
    let stack = npy::read_stack(&dir.join(&rec.psf), Some(&manifest.config))?;
    Ok((rec.amplitudes.clone(), stack))
}
