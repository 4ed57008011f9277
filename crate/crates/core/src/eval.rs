//! Evaluation harness: wavefront RMSE reports, single-mode sweeps, plane
//! ablations split by mode symmetry, and timing benchmarks.

use std::collections::BTreeMap;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::{plane_subset, DatasetSpec, SampleSource};
use crate::error::{invalid, Error, Result};
use crate::fit::{fit_retrieve_with, FitOptions};
use crate::gs::{gs_retrieve_with, GsOptions};
use crate::optics::{apply_noise_at, NoiseSpec, Propagator, PsfStack};
use crate::stats::BoxStats;
use crate::zernike::{compose_wavefront, wavefront_rmse, AmplitudeVector, PupilGrid, ZernikeIndex, DEFAULT_MODES};

/// Side of the unit-disk grid used for all reported wavefront errors.
pub const EVAL_GRID: usize = 128;

pub fn eval_grid() -> PupilGrid {
    PupilGrid::unit_disk(EVAL_GRID)
}

/// Symmetry class of a mode's PSF under axial mirroring.
///
/// Modes with even azimuthal order `m` are point-symmetric on the pupil, so
/// `a` and `-a` produce z-mirrored stacks and a single plane cannot tell
/// their sign apart.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModeClass {
    Even,
    Odd,
}

impl ModeClass {
    pub fn of(noll: u32) -> Result<Self> {
        Ok(if ZernikeIndex::new(noll)?.is_centrosymmetric() {
            ModeClass::Even
        } else {
            ModeClass::Odd
        })
    }

    /// Members of this class among `modes`, in order.
    pub fn select(self, modes: &[u32]) -> Result<Vec<u32>> {
        let mut out = Vec::new();
        for &m in modes {
            if Self::of(m)? == self {
                out.push(m);
            }
        }
        Ok(out)
    }

    pub fn name(self) -> &'static str {
        match self {
            ModeClass::Even => "even",
            ModeClass::Odd => "odd",
        }
    }
}

/// A retrieval method with its options.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "method", rename_all = "snake_case")]
pub enum Method {
    Gs(GsOptions),
    Fit(FitOptions),
}

impl Method {
    pub fn gs() -> Self {
        Method::Gs(GsOptions::default())
    }

    pub fn fit() -> Self {
        Method::Fit(FitOptions::default())
    }

    pub fn parse(name: &str) -> Result<Self> {
        match name {
            "gs" => Ok(Self::gs()),
            "fit" => Ok(Self::fit()),
            other => Err(invalid(format!("unknown method {other:?} (expected gs or fit)"))),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Method::Gs(_) => "gs",
            Method::Fit(_) => "fit",
        }
    }

    /// Noll 5..=15 amplitudes retrieved from `stack`.
    pub fn run(&self, prop: &Propagator, stack: &PsfStack) -> Result<AmplitudeVector> {
        let modes: Vec<u32> = DEFAULT_MODES.collect();
        let a = match self {
            Method::Gs(o) => gs_retrieve_with(prop, stack, o)?.amplitudes,
            Method::Fit(o) => fit_retrieve_with(prop, stack, o)?.amplitudes,
        };
        Ok(a.restrict(&modes))
    }
}

/// A retrieved amplitude vector for one sample.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub sample_id: u64,
    pub amplitudes: AmplitudeVector,
    #[serde(default)]
    pub wall_time_ms: f64,
}

/// Predictions of one method, as exchanged between tools.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PredictionSet {
    pub method: String,
    pub predictions: Vec<Prediction>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SampleEval {
    pub sample_id: u64,
    pub method: String,
    pub rmse_um: f64,
    pub wall_time_ms: f64,
    pub predicted: AmplitudeVector,
    pub truth: AmplitudeVector,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub per_sample: Vec<SampleEval>,
    pub summary: BTreeMap<String, BoxStats>,
}

impl EvalReport {
    fn from_samples(per_sample: Vec<SampleEval>) -> Self {
        let mut r = Self {
            per_sample,
            summary: BTreeMap::new(),
        };
        r.resummarize();
        r
    }

    fn resummarize(&mut self) {
        let mut by: BTreeMap<String, Vec<f64>> = BTreeMap::new();
        for s in &self.per_sample {
            by.entry(s.method.clone()).or_default().push(s.rmse_um);
        }
        self.summary = by
            .into_iter()
            .filter_map(|(k, v)| BoxStats::from_values(&v).map(|b| (k, b)))
            .collect();
    }

    /// Append another report's samples.
    pub fn merge(&mut self, other: EvalReport) {
        self.per_sample.extend(other.per_sample);
        self.resummarize();
    }

    pub fn rmse(&self, method: &str) -> Vec<f64> {
        self.per_sample
            .iter()
            .filter(|s| s.method == method)
            .map(|s| s.rmse_um)
            .collect()
    }

    pub fn median(&self, method: &str) -> Option<f64> {
        self.summary.get(method).map(|b| b.median)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("sample_id,method,rmse_um,wall_time_ms\n");
        for s in &self.per_sample {
            out.push_str(&format!(
                "{},{},{:e},{:.3}\n",
                s.sample_id, s.method, s.rmse_um, s.wall_time_ms
            ));
        }
        out
    }

    /// Per-method summary lines for terminal output.
    pub fn summary_text(&self) -> String {
        let mut out = String::new();
        for (m, b) in &self.summary {
            out.push_str(&format!(
                "{m:>6}: n={:<4} median {:.4} µm  IQR [{:.4}, {:.4}]  whiskers [{:.4}, {:.4}]\n",
                b.n, b.median, b.q1, b.q3, b.whisker_lo, b.whisker_hi
            ));
        }
        out
    }
}

/// Wavefront RMSE between two amplitude vectors on `grid`.
pub fn amplitude_rmse(pred: &AmplitudeVector, truth: &AmplitudeVector, grid: &PupilGrid) -> Result<f64> {
    wavefront_rmse(&compose_wavefront(pred, grid)?, &compose_wavefront(truth, grid)?, grid)
}

/// Wavefront RMSE of the error restricted to one mode class.
pub fn class_rmse(
    pred: &AmplitudeVector,
    truth: &AmplitudeVector,
    class: ModeClass,
    grid: &PupilGrid,
) -> Result<f64> {
    let mut modes = pred.modes();
    modes.extend(truth.modes());
    modes.sort_unstable();
    modes.dedup();
    let keep = class.select(&modes)?;
    amplitude_rmse(&pred.restrict(&keep), &truth.restrict(&keep), grid)
}

/// Score predictions against truths by sample id.
pub fn evaluate(
    method: &str,
    predictions: &[Prediction],
    truths: &[(u64, AmplitudeVector)],
    grid: &PupilGrid,
) -> Result<EvalReport> {
    let truth: BTreeMap<u64, &AmplitudeVector> = truths.iter().map(|(k, a)| (*k, a)).collect();
    if truth.len() != truths.len() {
        return Err(invalid("duplicate sample ids among truths"));
    }
    let mut seen = std::collections::BTreeSet::new();
    for p in predictions {
        if !truth.contains_key(&p.sample_id) {
            return Err(invalid(format!("prediction for unknown sample {}", p.sample_id)));
        }
        if !seen.insert(p.sample_id) {
            return Err(invalid(format!("duplicate prediction for sample {}", p.sample_id)));
        }
    }
    if seen.len() != truth.len() {
        let missing: Vec<u64> = truth.keys().filter(|k| !seen.contains(k)).copied().collect();
        return Err(invalid(format!("no prediction for samples {missing:?}")));
    }
    let per_sample = predictions
        .par_iter()
        .map(|p| {
            let t = truth[&p.sample_id];
            Ok(SampleEval {
                sample_id: p.sample_id,
                method: method.to_string(),
                rmse_um: amplitude_rmse(&p.amplitudes, t, grid)?,
                wall_time_ms: p.wall_time_ms,
                predicted: p.amplitudes.clone(),
                truth: t.clone(),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(EvalReport::from_samples(per_sample))
}

/// A stack with known amplitudes.
#[derive(Clone, Debug)]
pub struct Sample {
    pub id: u64,
    pub truth: AmplitudeVector,
    pub stack: PsfStack,
}

/// Samples `0..spec.sampler.count` of a dataset spec, built in memory.
pub fn synthetic_samples(spec: &DatasetSpec) -> Result<Vec<Sample>> {
    let src = SampleSource::new(spec)?;
    (0..spec.sampler.count as u64)
        .into_par_iter()
        .map(|k| {
            let (truth, stack) = src.sample(k)?;
            Ok(Sample { id: k, truth, stack })
        })
        .collect()
}

/// Amplitudes used for single-mode test suites, µm.
pub const SINGLE_MODE_AMPLITUDES: [f64; 6] = [-0.075, -0.05, -0.025, 0.025, 0.05, 0.075];

/// One stack per (mode, amplitude) pair, mode-major. Sample `k` draws noise
/// stream `k` under `noise.seed`.
pub fn single_mode_samples(
    prop: &Propagator,
    modes: &[u32],
    amplitudes: &[f64],
    noise: &NoiseSpec,
) -> Result<Vec<Sample>> {
    let pairs: Vec<(u32, f64)> = modes
        .iter()
        .flat_map(|&m| amplitudes.iter().map(move |&a| (m, a)))
        .collect();
    pairs
        .par_iter()
        .enumerate()
        .map(|(k, &(m, a))| {
            let truth = AmplitudeVector::from_pairs([(m, a)])?;
            let stack = apply_noise_at(&prop.synth(&truth)?, noise, k as u64)?;
            Ok(Sample {
                id: k as u64,
                truth,
                stack,
            })
        })
        .collect()
}

/// Retrieve every sample with `method`, timing each one.
pub fn predict(method: &Method, prop: &Propagator, samples: &[Sample]) -> Result<Vec<Prediction>> {
    samples
        .par_iter()
        .map(|s| {
            let t = Instant::now();
            let amplitudes = method.run(prop, &s.stack)?;
            Ok(Prediction {
                sample_id: s.id,
                amplitudes,
                wall_time_ms: t.elapsed().as_secs_f64() * 1e3,
            })
        })
        .collect()
}

/// Retrieve and score every sample with every method.
pub fn run_methods(methods: &[Method], prop: &Propagator, samples: &[Sample]) -> Result<EvalReport> {
    let grid = eval_grid();
    let truths: Vec<(u64, AmplitudeVector)> = samples.iter().map(|s| (s.id, s.truth.clone())).collect();
    let mut report = EvalReport::default();
    for m in methods {
        let preds = predict(m, prop, samples)?;
        report.merge(evaluate(m.name(), &preds, &truths, &grid)?);
    }
    Ok(report)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub amplitude: f64,
    pub predicted: AmplitudeVector,
}

/// Response of a method to a single introduced mode.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepTable {
    pub method: String,
    pub mode: u32,
    pub rows: Vec<SweepRow>,
}

impl SweepTable {
    /// `|predicted − true|` of the introduced mode per row.
    pub fn introduced_errors(&self) -> Vec<f64> {
        self.rows
            .iter()
            .map(|r| (r.predicted.get(self.mode) - r.amplitude).abs())
            .collect()
    }

    /// Predicted amplitudes of all non-introduced modes, pooled over rows.
    pub fn cross_predictions(&self) -> Vec<f64> {
        self.rows
            .iter()
            .flat_map(|r| r.predicted.iter().filter(|&(m, _)| m != self.mode).map(|(_, a)| a))
            .collect()
    }

    pub fn to_csv(&self) -> String {
        let modes: Vec<u32> = DEFAULT_MODES.collect();
        let mut out = String::from("amplitude");
        for m in &modes {
            out.push_str(&format!(",a{m}"));
        }
        out.push('\n');
        for r in &self.rows {
            out.push_str(&format!("{:e}", r.amplitude));
            for &m in &modes {
                out.push_str(&format!(",{:e}", r.predicted.get(m)));
            }
            out.push('\n');
        }
        out
    }
}

/// Introduce `mode` at each amplitude in turn and record the retrieved vector.
/// Row `i` uses noise stream `i` under `noise.seed`.
pub fn single_mode_sweep(
    method: &Method,
    prop: &Propagator,
    mode: u32,
    amp_grid: &[f64],
    noise: &NoiseSpec,
) -> Result<SweepTable> {
    if !DEFAULT_MODES.contains(&mode) {
        return Err(invalid(format!("sweep mode {mode} outside 5..=15")));
    }
    let rows = amp_grid
        .par_iter()
        .enumerate()
        .map(|(i, &a)| {
            let truth = AmplitudeVector::from_pairs([(mode, a)])?;
            let stack = apply_noise_at(&prop.synth(&truth)?, noise, i as u64)?;
            Ok(SweepRow {
                amplitude: a,
                predicted: method.run(prop, &stack)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(SweepTable {
        method: method.name().into(),
        mode,
        rows,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AblationEntry {
    pub n_z: usize,
    pub class: ModeClass,
    /// Per-sample class-restricted wavefront RMSE, in sample order.
    pub errors_um: Vec<f64>,
    pub stats: BoxStats,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AblationReport {
    pub method: String,
    pub entries: Vec<AblationEntry>,
}

impl AblationReport {
    pub fn median(&self, n_z: usize, class: ModeClass) -> Option<f64> {
        self.entries
            .iter()
            .find(|e| e.n_z == n_z && e.class == class)
            .map(|e| e.stats.median)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("n_z,class,median,q1,q3,whisker_lo,whisker_hi,n\n");
        for e in &self.entries {
            let b = &e.stats;
            out.push_str(&format!(
                "{},{},{:e},{:e},{:e},{:e},{:e},{}\n",
                e.n_z,
                e.class.name(),
                b.median,
                b.q1,
                b.q3,
                b.whisker_lo,
                b.whisker_hi,
                b.n
            ));
        }
        out
    }
}

/// Retrieve every sample from `n_z` planes (see [`plane_subset`]) and report
/// the error of each mode class separately.
pub fn plane_ablation(
    method: &Method,
    prop: &Propagator,
    n_z_list: &[usize],
    samples: &[Sample],
) -> Result<AblationReport> {
    if samples.is_empty() {
        return Err(invalid("ablation needs at least one sample"));
    }
    let grid = eval_grid();
    let mut entries = Vec::new();
    for &n_z in n_z_list {
        let preds: Vec<AmplitudeVector> = samples
            .par_iter()
            .map(|s| method.run(prop, &plane_subset(&s.stack, n_z)?))
            .collect::<Result<_>>()?;
        for class in [ModeClass::Even, ModeClass::Odd] {
            let errors_um = samples
                .iter()
                .zip(&preds)
                .map(|(s, p)| class_rmse(p, &s.truth, class, &grid))
                .collect::<Result<Vec<_>>>()?;
            let stats = BoxStats::from_values(&errors_um).expect("nonempty");
            entries.push(AblationEntry {
                n_z,
                class,
                errors_um,
                stats,
            });
        }
    }
    Ok(AblationReport {
        method: method.name().into(),
        entries,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BenchOptions {
    pub n_images: usize,
    pub repeats: usize,
}

impl Default for BenchOptions {
    fn default() -> Self {
        Self {
            n_images: 50,
            repeats: 5,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BenchRow {
    pub method: String,
    /// `single`, `serial` (n images one after another on one thread) or
    /// `batched` (n images in parallel on the whole pool).
    pub mode: String,
    pub n_images: usize,
    pub median_s: f64,
    pub per_image_s: f64,
    pub repeats: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BenchTable {
    pub threads: usize,
    pub rows: Vec<BenchRow>,
}

impl BenchTable {
    pub fn get(&self, method: &str, mode: &str) -> Option<&BenchRow> {
        self.rows.iter().find(|r| r.method == method && r.mode == mode)
    }

    /// Serial over batched wall time.
    pub fn speedup(&self, method: &str) -> Option<f64> {
        Some(self.get(method, "serial")?.median_s / self.get(method, "batched")?.median_s)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("method,mode,n_images,median_s,per_image_s,repeats\n");
        for r in &self.rows {
            out.push_str(&format!(
                "{},{},{},{:.6},{:.6},{}\n",
                r.method, r.mode, r.n_images, r.median_s, r.per_image_s, r.repeats
            ));
        }
        out
    }

    pub fn summary_text(&self) -> String {
        let mut out = format!("threads: {}\n", self.threads);
        for r in &self.rows {
            out.push_str(&format!(
                "{:>4} {:>8} n={:<3} {:>9.4} s  ({:.4} s/image)\n",
                r.method, r.mode, r.n_images, r.median_s, r.per_image_s
            ));
        }
        for m in ["gs", "fit"] {
            if let Some(s) = self.speedup(m) {
                out.push_str(&format!("{m} batched speedup: {s:.2}x\n"));
            }
        }
        out
    }
}

fn median_time(repeats: usize, mut f: impl FnMut() -> Result<()>) -> Result<f64> {
    f()?; // warmup
    let mut times = Vec::with_capacity(repeats);
    for _ in 0..repeats {
        let t = Instant::now();
        f()?;
        times.push(t.elapsed().as_secs_f64());
    }
    Ok(crate::stats::median(&times))
}

/// Wall-clock medians for a single image, `n` images serially on one
/// thread, and `n` images in parallel.
pub fn bench(methods: &[Method], prop: &Propagator, stacks: &[PsfStack], repeats: usize) -> Result<BenchTable> {
    if stacks.is_empty() || repeats == 0 {
        return Err(invalid("bench needs at least one stack and one repeat"));
    }
    let n = stacks.len();
    let serial_pool = rayon::ThreadPoolBuilder::new()
        .num_threads(1)
        .build()
        .map_err(|e| Error::InvalidArgument(e.to_string()))?;
    let mut rows = Vec::new();
    for m in methods {
        let row = |mode: &str, n_images: usize, median_s: f64| BenchRow {
            method: m.name().into(),
            mode: mode.into(),
            n_images,
            median_s,
            per_image_s: median_s / n_images as f64,
            repeats,
        };
        let single = median_time(repeats, || m.run(prop, &stacks[0]).map(drop))?;
        rows.push(row("single", 1, single));
        let serial = median_time(repeats, || {
            serial_pool.install(|| stacks.iter().try_for_each(|s| m.run(prop, s).map(drop)))
        })?;
        rows.push(row("serial", n, serial));
        let batched = median_time(repeats, || stacks.par_iter().try_for_each(|s| m.run(prop, s).map(drop)))?;
        rows.push(row("batched", n, batched));
    }
    Ok(BenchTable {
        threads: rayon::current_num_threads(),
        rows,
    })
}
