//! Recover aberrations from a noisy stack with Gerchberg-Saxton.

use aberro::gs::{gs_retrieve_with, GsOptions, Smoothing};
use aberro::optics::{apply_noise, NoiseSpec, Preset, Propagator};
use aberro::zernike::{compose_wavefront, wavefront_rmse, AmplitudeVector, PupilGrid};

fn main() -> aberro::Result<()> {
    let prop = Propagator::new(&Preset::point_scanning().microscope)?;
    let truth = AmplitudeVector::from_pairs([(5, 0.04), (7, -0.03), (11, 0.02)])?;
    let stack = apply_noise(&prop.synth(&truth)?, &NoiseSpec::default())?;

    let grid = PupilGrid::unit_disk(128);
    let truth_w = compose_wavefront(&truth, &grid)?;
    for (label, smoothing) in [("plain", Smoothing::None), ("projected every 5", Smoothing::ZernikeProjectEvery(5))] {
        let opts = GsOptions { smoothing, ..GsOptions::default() };
        let r = gs_retrieve_with(&prop, &stack, &opts)?;
        let err = wavefront_rmse(&compose_wavefront(&r.amplitudes, &grid)?, &truth_w, &grid)?;
        let res = &r.per_iteration_residual;
        println!(
            "{label}: residual {:.4} -> {:.4}, wavefront error {err:.4} µm",
            res[0],
            res[res.len() - 1]
        );
    }

    let r = gs_retrieve_with(&prop, &stack, &GsOptions::default())?;
    println!("\nmode   truth   retrieved");
    for m in 5..=15 {
        println!("a{m:<3} {:+.4}  {:+.4}", truth.get(m), r.amplitudes.get(m));
    }
    Ok(())
}
