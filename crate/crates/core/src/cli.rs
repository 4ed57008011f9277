//! Command-line front end. `main` only forwards `argv` to [`main_with_args`].
//!
//! Exit codes: 0 success, 1 runtime error, 2 usage error. On runtime errors
//! a JSON report `{"error": {"code", "message"}}` is written to the `--out`
//! target (`<out>.error.json` when `--out` is not a `.json` file).

use std::ffi::OsString;
use std::fs;
use std::io;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;
use serde_json::json;

use crate::dataset::{self, generate_dataset, write_pipe, DatasetManifest, DatasetSpec};
use crate::error::{invalid, Error, Result};
use crate::eval::{
    self, bench, evaluate, plane_ablation, run_methods, single_mode_samples, single_mode_sweep, synthetic_samples,
    AblationReport, EvalReport, Method, PredictionSet, SweepTable, SINGLE_MODE_AMPLITUDES,
};
use crate::fit::{fit_retrieve_with, FitOptions, Objective};
use crate::gs::{gs_retrieve_with, GsOptions};
use crate::npy::{self, StackMeta};
use crate::optics::{apply_noise, bead_convolve, NoiseSpec, Preset, Propagator};
use crate::plot;
use crate::zernike::{AmplitudeVector, DEFAULT_MODES};

/// Environment fallback for `--threads`.
pub const THREADS_ENV: &str = "ABERRO_THREADS";

#[derive(Parser, Debug)]
#[command(name = "aberro", version, about = "Aberrated PSF synthesis and wavefront retrieval")]
pub struct Cli {
    /// Worker threads (0 = all cores). Falls back to ABERRO_THREADS.
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    /// Seed for every random draw.
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,
    /// Increase log output on stderr.
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    pub verbose: u8,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Synthesize a PSF stack from Zernike amplitudes.
    Synth(SynthArgs),
    #[command(subcommand)]
    Dataset(DatasetCmd),
    #[command(subcommand)]
    Retrieve(RetrieveCmd),
    #[command(subcommand)]
    Eval(EvalCmd),
    /// Time retrieval methods on single and batched inputs.
    Bench(BenchArgs),
    #[command(subcommand)]
    Preset(PresetCmd),
}

#[derive(Args, Debug, Clone)]
pub struct NoiseArgs {
    /// Expected photons at the unaberrated peak; 0 disables noise.
    #[arg(long, default_value_t = 0.0)]
    pub photons: f64,
    /// Read noise standard deviation in photons.
    #[arg(long, default_value_t = 0.0)]
    pub read_sigma: f64,
}

impl NoiseArgs {
    fn spec(&self, seed: u64) -> NoiseSpec {
        NoiseSpec {
            photons_peak: self.photons,
            gaussian_sigma: self.read_sigma,
            seed,
        }
    }
}

#[derive(Args, Debug)]
pub struct SynthArgs {
    #[arg(long)]
    pub preset: PathBuf,
    /// Amplitude JSON such as '{"5":0.05}', or @file.json.
    #[arg(long, default_value = "{}")]
    pub amps: String,
    /// Convolve with the preset's bead.
    #[arg(long)]
    pub bead: bool,
    #[command(flatten)]
    pub noise: NoiseArgs,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Subcommand, Debug)]
pub enum DatasetCmd {
    /// Write a reproducible dataset directory.
    Gen(DatasetGenArgs),
    /// Emit an endless PNS1 stream of samples.
    Stream(DatasetStreamArgs),
}

#[derive(Args, Debug, Clone)]
pub struct SamplingArgs {
    #[arg(long)]
    pub preset: PathBuf,
    /// Symmetric amplitude bound, µm.
    #[arg(long, default_value_t = 0.075)]
    pub max_amp: f64,
    /// Comma-separated Noll indices.
    #[arg(long, value_delimiter = ',', default_values_t = DEFAULT_MODES.collect::<Vec<u32>>())]
    pub modes: Vec<u32>,
    #[arg(long, default_value_t = 5000.0)]
    pub photons: f64,
    #[arg(long, default_value_t = 2.0)]
    pub read_sigma: f64,
    /// Skip the bead convolution.
    #[arg(long)]
    pub no_bead: bool,
}

impl SamplingArgs {
    fn spec(&self, count: usize, seed: u64) -> Result<DatasetSpec> {
        let preset = Preset::load(&self.preset)?;
        let mut spec = DatasetSpec::from_preset(&preset, count, seed);
        spec.sampler.mode_set = self.modes.clone();
        spec.sampler.amp_range_um = (-self.max_amp, self.max_amp);
        spec.noise.photons_peak = self.photons;
        spec.noise.gaussian_sigma = self.read_sigma;
        if self.no_bead {
            spec.bead_diameter_um = 0.0;
        }
        spec.validate()?;
        Ok(spec)
    }
}

#[derive(Args, Debug)]
pub struct DatasetGenArgs {
    #[command(flatten)]
    pub sampling: SamplingArgs,
    #[arg(long)]
    pub count: usize,
    /// Write a metadata sidecar per volume.
    #[arg(long)]
    pub meta: bool,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct DatasetStreamArgs {
    #[command(flatten)]
    pub sampling: SamplingArgs,
    #[arg(long, default_value_t = 2)]
    pub batch: usize,
    /// Stop after this many batches (default: run until the reader closes).
    #[arg(long)]
    pub batches: Option<u64>,
    /// Write to a file instead of standard output.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Subcommand, Debug)]
pub enum RetrieveCmd {
    /// Gerchberg-Saxton phase retrieval.
    Gs(RetrieveArgs),
    /// Parameterized PSF fit.
    Fit(RetrieveArgs),
}

#[derive(Args, Debug)]
pub struct RetrieveArgs {
    #[arg(long)]
    pub input: PathBuf,
    /// Preset or microscope config JSON.
    #[arg(long, alias = "preset")]
    pub config: PathBuf,
    #[arg(long, default_value_t = 30)]
    pub iters: usize,
    /// Fit objective: lsq or nll.
    #[arg(long, default_value = "lsq")]
    pub objective: String,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Subcommand, Debug)]
pub enum EvalCmd {
    /// Score methods (or external predictions) on a dataset or synthetic suite.
    Run(EvalRunArgs),
    /// Single-mode amplitude sweep.
    Sweep(EvalSweepArgs),
    /// Per-class error versus number of planes.
    Ablation(EvalAblationArgs),
    /// Render a report, sweep or ablation JSON to SVG.
    Plot(EvalPlotArgs),
}

#[derive(Args, Debug)]
pub struct EvalRunArgs {
    #[arg(long)]
    pub preset: Option<PathBuf>,
    /// Dataset directory written by `dataset gen`.
    #[arg(long)]
    pub dataset: Option<PathBuf>,
    /// Synthetic mixed-mode samples when no dataset is given.
    #[arg(long, default_value_t = 20)]
    pub count: usize,
    #[arg(long, default_value_t = 5000.0)]
    pub photons: f64,
    #[arg(long, default_value_t = 2.0)]
    pub read_sigma: f64,
    #[arg(long, value_delimiter = ',', default_value = "gs,fit")]
    pub methods: Vec<String>,
    /// Score a prediction JSON instead of running methods.
    #[arg(long)]
    pub predictions: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct EvalSweepArgs {
    #[arg(long)]
    pub preset: PathBuf,
    #[arg(long, default_value = "fit")]
    pub method: String,
    #[arg(long)]
    pub mode: u32,
    /// Comma-separated amplitudes, µm.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true,
          default_value = "-0.06,-0.04,-0.02,0,0.02,0.04,0.06")]
    pub amps: Vec<f64>,
    #[command(flatten)]
    pub noise: NoiseArgs,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct EvalAblationArgs {
    #[arg(long)]
    pub preset: PathBuf,
    #[arg(long, default_value = "fit")]
    pub method: String,
    /// Plane counts; the preset's full count is used when omitted.
    #[arg(long, value_delimiter = ',')]
    pub nz: Vec<usize>,
    #[arg(long, default_value_t = 5000.0)]
    pub photons: f64,
    #[arg(long, default_value_t = 2.0)]
    pub read_sigma: f64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct EvalPlotArgs {
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct BenchArgs {
    #[arg(long)]
    pub preset: PathBuf,
    /// Images in the batched run.
    #[arg(long, default_value_t = 50)]
    pub n: usize,
    #[arg(long, default_value_t = 5)]
    pub repeats: usize,
    #[arg(long, value_delimiter = ',', default_value = "gs,fit")]
    pub methods: Vec<String>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Subcommand, Debug)]
pub enum PresetCmd {
    /// Print a bundled or on-disk preset as JSON.
    Show {
        /// `point_scanning`, `widefield`, or a path.
        name: PathBuf,
    },
}

impl Command {
    /// Target of the error report, if the subcommand has one.
    fn out(&self) -> Option<&Path> {
        match self {
            Command::Synth(a) => Some(&a.out),
            Command::Dataset(DatasetCmd::Gen(a)) => Some(&a.out),
            Command::Dataset(DatasetCmd::Stream(a)) => a.out.as_deref(),
            Command::Retrieve(RetrieveCmd::Gs(a) | RetrieveCmd::Fit(a)) => Some(&a.out),
            Command::Eval(EvalCmd::Run(a)) => Some(&a.out),
            Command::Eval(EvalCmd::Sweep(a)) => Some(&a.out),
            Command::Eval(EvalCmd::Ablation(a)) => Some(&a.out),
            Command::Eval(EvalCmd::Plot(a)) => Some(&a.out),
            Command::Bench(a) => a.out.as_deref(),
            Command::Preset(_) => None,
        }
    }
}

/// Where the JSON error report for `out` goes.
pub fn error_path(out: &Path) -> PathBuf {
    if out.extension().is_some_and(|e| e == "json") {
        out.to_path_buf()
    } else {
        let mut s = out.as_os_str().to_owned();
        s.push(".error.json");
        PathBuf::from(s)
    }
}

fn resolve_threads(flag: Option<usize>) -> Result<usize> {
    if let Some(n) = flag {
        return Ok(n);
    }
    match std::env::var(THREADS_ENV) {
        Ok(v) if !v.trim().is_empty() => v
            .trim()
            .parse()
            .map_err(|_| invalid(format!("{THREADS_ENV}={v:?} is not a thread count"))),
        _ => Ok(0),
    }
}

/// Parse `argv` and run; returns the process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match run(&cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            if let Some(out) = cli.command.out() {
                let report = json!({"error": {"code": e.code(), "message": e.to_string()}});
                let _ = fs::write(error_path(out), report.to_string());
            }
            1
        }
    }
}

/// Run a parsed command inside a pool of the requested size.
pub fn run(cli: &Cli) -> Result<()> {
    let threads = resolve_threads(cli.threads)?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| invalid(e.to_string()))?;
    if cli.verbose > 0 {
        eprintln!("threads: {}", pool.current_num_threads());
    }
    pool.install(|| dispatch(cli))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir)?;
    }
    fs::write(path, serde_json::to_string_pretty(value)?)?;
    Ok(())
}

/// `path.json` → `path.csv`.
fn write_csv_beside(path: &Path, csv: &str) -> Result<()> {
    fs::write(path.with_extension("csv"), csv)?;
    Ok(())
}

fn parse_amps(text: &str) -> Result<AmplitudeVector> {
    let body = match text.strip_prefix('@') {
        Some(file) => fs::read_to_string(file)?,
        None => text.to_string(),
    };
    serde_json::from_str(&body).map_err(|e| invalid(format!("bad amplitude JSON: {e}")))
}

fn dispatch(cli: &Cli) -> Result<()> {
    let seed = cli.seed;
    match &cli.command {
        Command::Synth(a) => synth(a, seed),
        Command::Dataset(DatasetCmd::Gen(a)) => {
            let spec = DatasetSpec {
                write_meta: a.meta,
                ..a.sampling.spec(a.count, seed)?
            };
            let t = Instant::now();
            let m = generate_dataset(&spec, &a.out)?;
            println!(
                "wrote {} samples to {} in {:.1} s",
                m.sample_files.len(),
                a.out.display(),
                t.elapsed().as_secs_f64()
            );
            Ok(())
        }
        Command::Dataset(DatasetCmd::Stream(a)) => {
            let spec = a.sampling.spec(0, seed)?;
            let n = match &a.out {
                Some(p) => write_pipe(&mut io::BufWriter::new(fs::File::create(p)?), &spec, a.batch, a.batches)?,
                None => write_pipe(&mut io::stdout().lock(), &spec, a.batch, a.batches)?,
            };
            eprintln!("streamed {n} samples");
            Ok(())
        }
        Command::Retrieve(RetrieveCmd::Gs(a)) => retrieve(a, false),
        Command::Retrieve(RetrieveCmd::Fit(a)) => retrieve(a, true),
        Command::Eval(EvalCmd::Run(a)) => eval_run(a, seed),
        Command::Eval(EvalCmd::Sweep(a)) => {
            let preset = Preset::load(&a.preset)?;
            let prop = Propagator::new(&preset.microscope)?;
            let table = single_mode_sweep(&Method::parse(&a.method)?, &prop, a.mode, &a.amps, &a.noise.spec(seed))?;
            write_json(&a.out, &table)?;
            write_csv_beside(&a.out, &table.to_csv())?;
            let errs = table.introduced_errors();
            let cross = table.cross_predictions();
            println!(
                "a{} sweep ({}): max |pred - true| {:.4} µm, max |cross| {:.4} µm",
                a.mode,
                a.method,
                errs.iter().copied().fold(0.0, f64::max),
                cross.iter().map(|v| v.abs()).fold(0.0, f64::max)
            );
            Ok(())
        }
        Command::Eval(EvalCmd::Ablation(a)) => {
            let preset = Preset::load(&a.preset)?;
            let prop = Propagator::new(&preset.microscope)?;
            let noise = NoiseSpec {
                photons_peak: a.photons,
                gaussian_sigma: a.read_sigma,
                seed,
            };
            let modes: Vec<u32> = DEFAULT_MODES.collect();
            let samples = single_mode_samples(&prop, &modes, &SINGLE_MODE_AMPLITUDES, &noise)?;
            let nz = if a.nz.is_empty() {
                vec![1, 2, preset.microscope.nz]
            } else {
                a.nz.clone()
            };
            let report = plane_ablation(&Method::parse(&a.method)?, &prop, &nz, &samples)?;
            write_json(&a.out, &report)?;
            write_csv_beside(&a.out, &report.to_csv())?;
            print!("{}", report.to_csv());
            Ok(())
        }
        Command::Eval(EvalCmd::Plot(a)) => eval_plot(a),
        Command::Bench(a) => {
            let preset = Preset::load(&a.preset)?;
            let prop = Propagator::new(&preset.microscope)?;
            let methods = a.methods.iter().map(|m| Method::parse(m)).collect::<Result<Vec<_>>>()?;
            let mut spec = DatasetSpec::from_preset(&preset, a.n, seed);
            spec.bead_diameter_um = 0.0;
            let stacks: Vec<_> = synthetic_samples(&spec)?.into_iter().map(|s| s.stack).collect();
            let table = bench(&methods, &prop, &stacks, a.repeats)?;
            print!("{}", table.summary_text());
            if let Some(out) = &a.out {
                write_json(out, &table)?;
                write_csv_beside(out, &table.to_csv())?;
            }
            Ok(())
        }
        Command::Preset(PresetCmd::Show { name }) => {
            let p = Preset::load(name)?;
            println!("{}", serde_json::to_string_pretty(&p)?);
            Ok(())
        }
    }
}

fn synth(a: &SynthArgs, seed: u64) -> Result<()> {
    let preset = Preset::load(&a.preset)?;
    let c = &preset.microscope;
    let amps = parse_amps(&a.amps)?;
    let mut stack = Propagator::new(c)?.synth(&amps)?;
    if a.bead {
        stack = bead_convolve(&stack, preset.bead_diameter_um, c)?;
    }
    stack = apply_noise(&stack, &a.noise.spec(seed))?;
    let meta = StackMeta {
        z_offsets_um: stack.z_offsets_um.clone(),
        config_digest: c.digest(),
        config: Some(c.clone()),
        amplitudes: Some(amps),
    };
    npy::write_stack(&a.out, &stack, Some(&meta))?;
    println!(
        "wrote {} ({}x{}x{}), peak {:.4}",
        a.out.display(),
        stack.nz(),
        stack.ny(),
        stack.nx(),
        stack.max()
    );
    Ok(())
}

fn retrieve(a: &RetrieveArgs, fit: bool) -> Result<()> {
    let preset = Preset::load(&a.config)?;
    let prop = Propagator::new(&preset.microscope)?;
    let stack = npy::read_stack(&a.input, Some(&preset.microscope))?;
    let t = Instant::now();
    let value = if fit {
        let objective = match a.objective.as_str() {
            "lsq" | "gaussian-lsq" => Objective::GaussianLsq,
            "nll" | "poisson-nll" => Objective::PoissonNll,
            o => return Err(invalid(format!("unknown objective {o:?}"))),
        };
        let opts = FitOptions {
            iterations: a.iters,
            objective,
            ..Default::default()
        };
        let r = fit_retrieve_with(&prop, &stack, &opts)?;
        json!({
            "method": "fit",
            "amplitudes": r.amplitudes,
            "scale": r.scale,
            "background": r.background,
            "shifts": r.shifts,
            "converged": r.converged,
            "objective_trace": r.objective_trace,
            "wall_time_ms": t.elapsed().as_secs_f64() * 1e3,
        })
    } else {
        let opts = GsOptions {
            iterations: a.iters,
            ..Default::default()
        };
        let r = gs_retrieve_with(&prop, &stack, &opts)?;
        json!({
            "method": "gs",
            "amplitudes": r.amplitudes,
            "per_iteration_residual": r.per_iteration_residual,
            "wall_time_ms": t.elapsed().as_secs_f64() * 1e3,
        })
    };
    write_json(&a.out, &value)?;
    let amps: AmplitudeVector = serde_json::from_value(value["amplitudes"].clone())?;
    println!("{}", summarize_amps(&amps));
    Ok(())
}

fn summarize_amps(a: &AmplitudeVector) -> String {
    a.iter()
        .map(|(m, v)| format!("a{m}={v:+.4}"))
        .collect::<Vec<_>>()
        .join(" ")
}

fn eval_run(a: &EvalRunArgs, seed: u64) -> Result<()> {
    let report = if let Some(pred_path) = &a.predictions {
        let dir = a
            .dataset
            .as_ref()
            .ok_or_else(|| invalid("--predictions needs --dataset for the ground truth"))?;
        let manifest = DatasetManifest::load(dir)?;
        let set: PredictionSet = serde_json::from_str(&fs::read_to_string(pred_path)?)?;
        let truths: Vec<_> = manifest
            .sample_files
            .iter()
            .map(|r| (r.sample_id, r.amplitudes.clone()))
            .collect();
        evaluate(&set.method, &set.predictions, &truths, &eval::eval_grid())?
    } else {
        let methods = a.methods.iter().map(|m| Method::parse(m)).collect::<Result<Vec<_>>>()?;
        let (config, samples) = if let Some(dir) = &a.dataset {
            let manifest = DatasetManifest::load(dir)?;
            manifest.validate(dir)?;
            let samples = (0..manifest.sample_files.len() as u64)
                .map(|k| {
                    let (truth, stack) = dataset::read_sample(dir, &manifest, k)?;
                    Ok(eval::Sample {
                        id: manifest.sample_files[k as usize].sample_id,
                        truth,
                        stack,
                    })
                })
                .collect::<Result<Vec<_>>>()?;
            (manifest.config, samples)
        } else {
            let preset_path = a
                .preset
                .as_ref()
                .ok_or_else(|| invalid("eval run needs --dataset or --preset"))?;
            let preset = Preset::load(preset_path)?;
            let mut spec = DatasetSpec::from_preset(&preset, a.count, seed);
            spec.bead_diameter_um = 0.0;
            spec.noise.photons_peak = a.photons;
            spec.noise.gaussian_sigma = a.read_sigma;
            (preset.microscope, synthetic_samples(&spec)?)
        };
        let prop = Propagator::new(&config)?;
        run_methods(&methods, &prop, &samples)?
    };
    write_json(&a.out, &report)?;
    write_csv_beside(&a.out, &report.to_csv())?;
    print!("{}", report.summary_text());
    Ok(())
}

fn eval_plot(a: &EvalPlotArgs) -> Result<()> {
    let text = fs::read_to_string(&a.input)?;
    let value: serde_json::Value = serde_json::from_str(&text)?;
    if value.get("per_sample").is_some() {
        plot::report_svg(&a.out, &serde_json::from_value::<EvalReport>(value)?)?;
    } else if value.get("rows").is_some() && value.get("mode").is_some() {
        plot::sweep_svg(&a.out, &serde_json::from_value::<SweepTable>(value)?)?;
    } else if value.get("entries").is_some() {
        plot::ablation_svg(&a.out, &serde_json::from_value::<AblationReport>(value)?)?;
    } else {
        return Err(Error::Format(format!(
            "{} is not an eval report, sweep or ablation",
            a.input.display()
        )));
    }
    println!("wrote {}", a.out.display());
    Ok(())
}
