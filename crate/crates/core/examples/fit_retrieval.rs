//! Recover aberrations by fitting the forward model, with either objective.

use aberro::fit::{fit_retrieve_with, FitOptions, Objective};
use aberro::optics::{apply_noise, NoiseSpec, Preset, Propagator};
use aberro::zernike::AmplitudeVector;

fn main() -> aberro::Result<()> {
    let prop = Propagator::new(&Preset::point_scanning().microscope)?;
    let truth = AmplitudeVector::from_pairs([(6, -0.05), (8, 0.03), (12, 0.02)])?;
    let noise = NoiseSpec { photons_peak: 2000.0, ..NoiseSpec::default() };
    let stack = apply_noise(&prop.synth(&truth)?, &noise)?;

    for objective in [Objective::GaussianLsq, Objective::PoissonNll] {
        let opts = FitOptions { objective, ..FitOptions::default() };
        let r = fit_retrieve_with(&prop, &stack, &opts)?;
        println!(
            "{objective:?}: {} iterations, converged {}, |error| {:.4} µm",
            r.objective_trace.len() - 1,
            r.converged,
            r.amplitudes.sub(&truth).norm()
        );
        println!(
            "  scale {:.3}, background {:.4}, shift ({:+.4}, {:+.4}, {:+.4}) µm",
            r.scale, r.background, r.shifts.0, r.shifts.1, r.shifts.2
        );
        for m in [6, 8, 12] {
            println!("  a{m}: truth {:+.4}  fit {:+.4}", truth.get(m), r.amplitudes.get(m));
        }
    }
    Ok(())
}
