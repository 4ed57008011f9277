//! Time a single retrieval, a serial batch and a parallel batch.
//!
//! cargo run --release --example bench [n_images]

use aberro::dataset::DatasetSpec;
use aberro::eval::{bench, synthetic_samples, Method};
use aberro::optics::{Preset, Propagator};

fn main() -> aberro::Result<()> {
    let n = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(8);
    let spec = DatasetSpec::from_preset(&Preset::point_scanning(), n, 0);
    let prop = Propagator::new(&spec.config)?;
    let stacks: Vec<_> = synthetic_samples(&spec)?.into_iter().map(|s| s.stack).collect();
    let table = bench(&[Method::gs(), Method::fit()], &prop, &stacks, 3)?;
    print!("{}", table.summary_text());
    Ok(())
}
