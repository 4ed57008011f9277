//! Noll modes, wavefront synthesis and decomposition on the unit disk.

use aberro::zernike::{
    compose_wavefront, decompose_wavefront, indices, noll_to_nm, wavefront_rmse, AmplitudeVector, PupilGrid,
    ZernikeIndex,
};

fn main() -> aberro::Result<()> {
    println!(" j  n   m  name");
    for j in 1..=15 {
        let (n, m) = noll_to_nm(j)?;
        let name = ZernikeIndex::new(j)?.name().unwrap_or("");
        println!("{j:>2} {n:>2} {m:>3}  {name}");
    }

    let grid = PupilGrid::unit_disk(128);
    let a = AmplitudeVector::from_pairs([(5, 0.05), (8, -0.02), (11, 0.03)])?;
    let b = AmplitudeVector::from_pairs([(5, 0.04), (8, -0.02)])?;
    let wa = compose_wavefront(&a, &grid)?;
    let wb = compose_wavefront(&b, &grid)?;

    // normalized modes: wavefront RMS equals the amplitude norm
    println!("\nrms(a) = {:.5} µm, |a| = {:.5} µm", wa.rms(&grid)?, a.norm());
    println!("rmse(a, b) = {:.5} µm, |a - b| = {:.5} µm", wavefront_rmse(&wa, &wb, &grid)?, a.sub(&b).norm());

    let back = decompose_wavefront(&wa, &grid, &indices(5..=15)?)?;
    println!("\nrecovered from the sampled wavefront:");
    for (m, v) in back.iter().filter(|(_, v)| v.abs() > 1e-9) {
        println!("  a{m} = {v:+.6}");
    }
    Ok(())
}
