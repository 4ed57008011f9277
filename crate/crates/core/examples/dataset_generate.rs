//! Write a small training dataset to disk and read a sample back.
//!
//! cargo run --release --example dataset_generate [out_dir]

use std::path::PathBuf;

use aberro::dataset::{generate_dataset, read_sample, DatasetManifest, DatasetSpec};
use aberro::optics::Preset;

fn main() -> aberro::Result<()> {
    let out = std::env::args()
        .nth(1)
        .map(PathBuf::from)
        .unwrap_or_else(|| std::env::temp_dir().join("aberro-dataset"));

    let mut spec = DatasetSpec::from_preset(&Preset::point_scanning(), 8, 42);
    spec.write_meta = true;
    let manifest = generate_dataset(&spec, &out)?;
    println!("{} samples in {}", manifest.sample_files.len(), out.display());

    // a reader only needs the directory
    let loaded = DatasetManifest::load(&out)?;
    loaded.validate(&out)?;
    let (amps, stack) = read_sample(&out, &loaded, 3)?;
    println!("sample 3: shape {:?}, max {:.3}", stack.data.shape(), stack.max());
    println!("{}", amps.to_csv());

    // regenerating from the recorded spec reproduces every byte
    let again = std::env::temp_dir().join("aberro-dataset-again");
    generate_dataset(&loaded.spec(), &again)?;
    let same = std::fs::read(out.join("psf_000003.npy"))? == std::fs::read(again.join("psf_000003.npy"))?;
    println!("regenerated sample identical: {same}");
    Ok(())
}
