//! Aberrated microscope PSF synthesis and classical phase retrieval.

pub mod cli;
pub mod dataset;
pub mod error;
pub mod eval;
pub mod fft;
pub mod fit;
pub mod gs;
pub mod npy;
pub mod optics;
pub mod plot;
pub mod rng;
pub mod stats;
pub mod zernike;

pub use error::{Error, Result};
