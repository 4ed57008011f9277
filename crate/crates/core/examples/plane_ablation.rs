//! How many focal planes does retrieval need? Near focus the sign of an
//! even mode barely changes the image, so even modes suffer first.
//!
//! cargo run --release --example plane_ablation [out_dir]

use std::path::PathBuf;

use aberro::eval::{plane_ablation, single_mode_samples, Method, ModeClass};
use aberro::optics::{NoiseSpec, Preset, Propagator};
use aberro::plot::ablation_svg;

fn main() -> aberro::Result<()> {
    let out = std::env::args()
        .nth(1)
        .map(PathBuf::from)
        .unwrap_or_else(|| std::env::temp_dir().join("aberro-ablation"));
    std::fs::create_dir_all(&out)?;

    let prop = Propagator::new(&Preset::point_scanning().microscope)?;
    let samples = single_mode_samples(&prop, &[5, 6, 7, 8], &[-0.05, 0.05], &NoiseSpec::default())?;
    let report = plane_ablation(&Method::fit(), &prop, &[1, 3, 32], &samples)?;

    println!("n_z   even    odd   (median class RMSE, µm)");
    for n_z in [1, 3, 32] {
        let even = report.median(n_z, ModeClass::Even).unwrap();
        let odd = report.median(n_z, ModeClass::Odd).unwrap();
        println!("{n_z:>3}  {even:.4}  {odd:.4}");
    }
    ablation_svg(&out.join("ablation.svg"), &report)?;
    std::fs::write(out.join("ablation.csv"), report.to_csv())?;
    println!("results in {}", out.display());
    Ok(())
}
