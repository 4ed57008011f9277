//! Score GS, the fit and an external predictor on the same noisy suite, then
//! sweep one mode through a range of amplitudes. Writes box plots as SVG.
//!
//! cargo run --release --example evaluate_methods [out_dir]

use std::path::PathBuf;

use aberro::dataset::DatasetSpec;
use aberro::eval::{eval_grid, evaluate, run_methods, single_mode_sweep, synthetic_samples, Method, Prediction};
use aberro::optics::{NoiseSpec, Preset, Propagator};
use aberro::plot::{report_svg, sweep_svg};

fn main() -> aberro::Result<()> {
    let out = std::env::args()
        .nth(1)
        .map(PathBuf::from)
        .unwrap_or_else(|| std::env::temp_dir().join("aberro-eval"));
    std::fs::create_dir_all(&out)?;

    let mut spec = DatasetSpec::from_preset(&Preset::point_scanning(), 12, 3);
    spec.bead_diameter_um = 0.0;
    let prop = Propagator::new(&spec.config)?;
    let samples = synthetic_samples(&spec)?;
    let mut report = run_methods(&[Method::gs(), Method::fit()], &prop, &samples)?;

    // predictions from elsewhere enter through the same scoring path;
    // here a "predictor" that always answers zero
    let zeros: Vec<Prediction> = samples
        .iter()
        .map(|s| Prediction { sample_id: s.id, amplitudes: Default::default(), wall_time_ms: 0.0 })
        .collect();
    let truths: Vec<_> = samples.iter().map(|s| (s.id, s.truth.clone())).collect();
    report.merge(evaluate("zero", &zeros, &truths, &eval_grid())?);

    print!("{}", report.summary_text());
    report_svg(&out.join("methods.svg"), &report)?;

    let amps: Vec<f64> = (-6..=6).map(|k| k as f64 * 0.0125).collect();
    let sweep = single_mode_sweep(&Method::gs(), &prop, 6, &amps, &NoiseSpec::default())?;
    println!("\na6 sweep with gs:");
    for (row, err) in sweep.rows.iter().zip(sweep.introduced_errors()) {
        println!("  {:+.4} -> {:+.4}  (error {err:.4})", row.amplitude, row.predicted.get(6));
    }
    sweep_svg(&out.join("sweep.svg"), &sweep)?;
    println!("plots in {}", out.display());
    Ok(())
}
