//! Scalar Fourier-optics forward model for widefield-style 3D PSFs.
//!
//! Each plane of a stack is the squared modulus of the 2D DFT of the pupil
//! field `P * exp(2πi φ/λ) * exp(-2πi z sqrt(n0²/λ² - |k|²))`, computed on an
//! oversampled grid, DC-centered and cropped to the detector size.

use std::path::Path;

use ndarray::{s, Array3, ArrayView3, Axis};
use num_complex::Complex64;
use rand::Rng;
use rand_distr::{Distribution, Normal, Poisson};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{invalid, Error, Result};
use crate::fft::{Direction, Fft2};
use crate::zernike::{AmplitudeVector, PupilGrid, ZernikeIndex};

const TAU: f64 = std::f64::consts::TAU;

fn default_oversample() -> usize {
    2
}

/// Optical and sampling parameters of a microscope.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MicroscopeConfig {
    pub na: f64,
    pub lambda_um: f64,
    pub n0: f64,
    pub dx_um: f64,
    pub dy_um: f64,
    pub dz_um: f64,
    pub nx: usize,
    pub ny: usize,
    pub nz: usize,
    /// FFT padding factor.
    #[serde(default = "default_oversample")]
    pub oversample: usize,
}

impl MicroscopeConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.na > 0.0 && self.na < self.n0) {
            return Err(invalid(format!("need 0 < NA < n0 (NA {}, n0 {})", self.na, self.n0)));
        }
        if !(self.lambda_um > 0.0) {
            return Err(invalid("wavelength must be positive"));
        }
        if !(self.dx_um > 0.0 && self.dy_um > 0.0 && self.dz_um > 0.0) {
            return Err(invalid("voxel pitches must be positive"));
        }
        if self.nx == 0 || self.ny == 0 || self.nx % 2 != 0 || self.ny % 2 != 0 {
            return Err(invalid("nx and ny must be positive and even"));
        }
        if self.nz == 0 {
            return Err(invalid("nz must be >= 1"));
        }
        if self.oversample == 0 {
            return Err(invalid("oversample must be >= 1"));
        }
        Ok(())
    }

    /// Plane positions, symmetric about focus: `(i - (nz-1)/2) * dz`.
    pub fn z_offsets(&self) -> Vec<f64> {
        let c = (self.nz as f64 - 1.0) / 2.0;
        (0..self.nz).map(|i| (i as f64 - c) * self.dz_um).collect()
    }

    /// The pupil grid of the oversampled FFT.
    pub fn pupil_grid(&self) -> Result<PupilGrid> {
        self.validate()?;
        let nfx = self.nx * self.oversample;
        let nfy = self.ny * self.oversample;
        PupilGrid::new(
            nfx,
            nfy,
            1.0 / (nfx as f64 * self.dx_um),
            1.0 / (nfy as f64 * self.dy_um),
            self.na / self.lambda_um,
        )
    }

    /// Short content hash used to tie stacks to the config that made them.
    pub fn digest(&self) -> String {
        let json = serde_json::to_string(self).expect("config serializes");
        Sha256::digest(json.as_bytes())
            .iter()
            .take(8)
            .map(|b| format!("{b:02x}"))
            .collect()
    }
}

/// A named microscope configuration with its calibration bead size.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Preset {
    #[serde(default)]
    pub name: String,
    #[serde(flatten)]
    pub microscope: MicroscopeConfig,
    #[serde(default)]
    pub bead_diameter_um: f64,
}

pub const POINT_SCANNING_JSON: &str = include_str!("../presets/point_scanning.json");
pub const WIDEFIELD_JSON: &str = include_str!("../presets/widefield.json");

impl Preset {
    /// 1.4 NA oil objective, 755 nm, 32³ voxels of 30 nm, 80 nm beads.
    pub fn point_scanning() -> Self {
        serde_json::from_str(POINT_SCANNING_JSON).expect("bundled preset parses")
    }

    /// 1.1 NA water objective, 488 nm, 50³ voxels of 86/86/100 nm, 200 nm beads.
    pub fn widefield() -> Self {
        serde_json::from_str(WIDEFIELD_JSON).expect("bundled preset parses")
    }

    pub fn builtin(name: &str) -> Option<Self> {
        match name.trim_end_matches(".json") {
            "point_scanning" => Some(Self::point_scanning()),
            "widefield" => Some(Self::widefield()),
            _ => None,
        }
    }

    /// Load from a JSON file; a bare [`MicroscopeConfig`] is accepted too.
    /// Falls back to a bundled preset when `path` names one and no file exists.
    pub fn load(path: &Path) -> Result<Self> {
        if !path.exists() {
            if let Some(p) = path.file_name().and_then(|n| n.to_str()).and_then(Self::builtin) {
                return Ok(p);
            }
        }
        let text = std::fs::read_to_string(path)?;
        let preset: Self = serde_json::from_str(&text)?;
        preset.microscope.validate()?;
        if !(preset.bead_diameter_um >= 0.0) {
            return Err(invalid("bead diameter must be >= 0"));
        }
        Ok(preset)
    }
}

/// A 3D intensity volume `(nz, ny, nx)` with the axial position of each plane.
#[derive(Clone, Debug, PartialEq)]
pub struct PsfStack {
    pub data: Array3<f64>,
    pub z_offsets_um: Vec<f64>,
    pub config_digest: String,
}

impl PsfStack {
    pub fn new(data: Array3<f64>, z_offsets_um: Vec<f64>, config_digest: String) -> Result<Self> {
        if data.len_of(Axis(0)) != z_offsets_um.len() {
            return Err(Error::DimensionMismatch(format!(
                "{} planes but {} z offsets",
                data.len_of(Axis(0)),
                z_offsets_um.len()
            )));
        }
        if z_offsets_um.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(invalid("z offsets must be strictly increasing"));
        }
        Ok(Self {
            data,
            z_offsets_um,
            config_digest,
        })
    }

    pub fn nz(&self) -> usize {
        self.data.len_of(Axis(0))
    }

    pub fn ny(&self) -> usize {
        self.data.len_of(Axis(1))
    }

    pub fn nx(&self) -> usize {
        self.data.len_of(Axis(2))
    }

    pub fn max(&self) -> f64 {
        self.data.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn sum(&self) -> f64 {
        self.data.sum()
    }

    /// Same stack with the plane order reversed and offsets negated.
    pub fn mirrored_z(&self) -> Self {
        Self {
            data: self.data.slice(s![..;-1, .., ..]).to_owned(),
            z_offsets_um: self.z_offsets_um.iter().rev().map(|z| -z).collect(),
            config_digest: self.config_digest.clone(),
        }
    }

    /// Largest absolute voxel difference.
    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        self.data
            .iter()
            .zip(other.data.iter())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }

    /// Check that the lateral size matches `config`.
    pub fn check_lateral(&self, config: &MicroscopeConfig) -> Result<()> {
        if self.nx() != config.nx || self.ny() != config.ny {
            return Err(Error::DimensionMismatch(format!(
                "stack is {}x{} laterally, config expects {}x{}",
                self.nx(),
                self.ny(),
                config.nx,
                config.ny
            )));
        }
        Ok(())
    }
}

/// Photon budget and read noise for [`apply_noise`].
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct NoiseSpec {
    /// Expected photons at the unaberrated peak (intensity 1.0).
    pub photons_peak: f64,
    /// Read-noise standard deviation, in photons.
    pub gaussian_sigma: f64,
    pub seed: u64,
}

impl Default for NoiseSpec {
    fn default() -> Self {
        Self {
            photons_peak: 5000.0,
            gaussian_sigma: 2.0,
            seed: 0,
        }
    }
}

impl NoiseSpec {
    pub fn none() -> Self {
        Self {
            photons_peak: 0.0,
            gaussian_sigma: 0.0,
            seed: 0,
        }
    }

    pub fn is_none(&self) -> bool {
        self.photons_peak == 0.0 && self.gaussian_sigma == 0.0
    }
}

/// Cached state for repeated forward-model evaluations on one config.
///
/// Cheap to share between threads: all methods take `&self`.
#[derive(Clone, Debug)]
pub struct Propagator {
    config: MicroscopeConfig,
    grid: PupilGrid,
    fft: Fft2,
    /// FFT-order flat index of each support pixel.
    fft_pos: Vec<usize>,
    /// FFT-order rows that hold support pixels.
    support_rows: Vec<usize>,
    kx: Vec<f64>,
    ky: Vec<f64>,
    kz: Vec<f64>,
    crop_rows: Vec<usize>,
    crop_cols: Vec<usize>,
    norm: f64,
}

fn to_fft_order(c: usize, n: usize) -> usize {
    (c + n / 2) % n
}

impl Propagator {
    pub fn new(config: &MicroscopeConfig) -> Result<Self> {
        let grid = config.pupil_grid()?;
        let (nfx, nfy) = (grid.nx(), grid.ny());
        let kmax2 = (config.n0 / config.lambda_um).powi(2);
        let mut fft_pos = Vec::with_capacity(grid.support_len());
        let (mut kx, mut ky, mut kz) = (Vec::new(), Vec::new(), Vec::new());
        let mut support_rows = Vec::new();
        for &i in grid.masked_indices() {
            let (row, col) = (i / nfx, i % nfx);
            let (fr, fc) = (to_fft_order(row, nfy), to_fft_order(col, nfx));
            fft_pos.push(fr * nfx + fc);
            if !support_rows.contains(&fr) {
                support_rows.push(fr);
            }
            let (x, y) = grid.k_at(i);
            kx.push(x);
            ky.push(y);
            kz.push((kmax2 - x * x - y * y).sqrt());
        }
        support_rows.sort_unstable();
        let x0 = (nfx - config.nx) / 2;
        let y0 = (nfy - config.ny) / 2;
        let crop_cols = (0..config.nx).map(|j| to_fft_order(x0 + j, nfx)).collect();
        let crop_rows = (0..config.ny).map(|j| to_fft_order(y0 + j, nfy)).collect();
        let mut prop = Self {
            config: config.clone(),
            fft: Fft2::new(nfx, nfy),
            grid,
            fft_pos,
            support_rows,
            kx,
            ky,
            kz,
            crop_rows,
            crop_cols,
            norm: 1.0,
        };
        // Unaberrated peak sits on axis in the plane nearest focus; the DC
        // term of a DFT is the plain sum of the pupil samples.
        let peak = config
            .z_offsets()
            .iter()
            .map(|&z| prop.defocus(z).iter().sum::<Complex64>().norm_sqr())
            .fold(0.0, f64::max);
        if !(peak > 0.0) {
            return Err(Error::DegenerateInput("pupil support is empty".into()));
        }
        prop.norm = 1.0 / peak;
        Ok(prop)
    }

    pub fn config(&self) -> &MicroscopeConfig {
        &self.config
    }

    pub fn grid(&self) -> &PupilGrid {
        &self.grid
    }

    /// Number of pupil support pixels.
    pub fn support_len(&self) -> usize {
        self.fft_pos.len()
    }

    /// Intensity scale that maps the unaberrated peak to 1.
    pub fn norm(&self) -> f64 {
        self.norm
    }

    pub fn fft(&self) -> &Fft2 {
        &self.fft
    }

    /// FFT-order flat index of each detector pixel (row-major crop order).
    pub fn crop_positions(&self) -> Vec<usize> {
        let nfx = self.fft.nx();
        self.crop_rows
            .iter()
            .flat_map(|&r| self.crop_cols.iter().map(move |&c| r * nfx + c))
            .collect()
    }

    /// Wavefront (µm) on the support pixels.
    pub fn wavefront_on_support(&self, amps: &AmplitudeVector) -> Result<Vec<f64>> {
        let rho = self.grid.rho();
        let theta = self.grid.theta();
        let mut w = vec![0.0; self.support_len()];
        for (noll, a) in amps.iter() {
            let z = ZernikeIndex::new(noll)?;
            if a == 0.0 {
                continue;
            }
            for (v, &i) in w.iter_mut().zip(self.grid.masked_indices()) {
                *v += a * z.value(rho[i], theta[i]);
            }
        }
        Ok(w)
    }

    /// Pupil field on the support: `exp(2πi φ/λ)` times a lateral-shift ramp.
    pub fn pupil_field(&self, amps: &AmplitudeVector, shift_um: (f64, f64)) -> Result<Vec<Complex64>> {
        let w = self.wavefront_on_support(amps)?;
        let k = TAU / self.config.lambda_um;
        Ok(w
            .iter()
            .zip(self.kx.iter().zip(&self.ky))
            .map(|(&wv, (&kx, &ky))| {
                Complex64::from_polar(1.0, k * wv + TAU * (kx * shift_um.0 + ky * shift_um.1))
            })
            .collect())
    }

    /// Defocus factor `exp(-2πi z kz)` on the support pixels.
    pub fn defocus(&self, z_um: f64) -> Vec<Complex64> {
        self.kz
            .iter()
            .map(|&kz| Complex64::from_polar(1.0, -TAU * z_um * kz))
            .collect()
    }

    /// Defocus factor on the full (centered) pupil grid; zero outside the support.
    pub fn defocus_grid(&self, z_um: f64) -> Vec<Complex64> {
        let mut out = vec![Complex64::default(); self.grid.len()];
        for (&i, v) in self.grid.masked_indices().iter().zip(self.defocus(z_um)) {
            out[i] = v;
        }
        out
    }

    fn scatter(&self, pupil: &[Complex64], z_um: f64) -> Vec<Complex64> {
        let mut buf = vec![Complex64::default(); self.grid.len()];
        for ((&pos, &p), d) in self.fft_pos.iter().zip(pupil).zip(self.defocus(z_um)) {
            buf[pos] = p * d;
        }
        self.fft.rows(&mut buf, &self.support_rows, Direction::Forward);
        buf
    }

    /// Full unnormalized image-plane field in FFT order.
    pub fn image_field(&self, pupil: &[Complex64], z_um: f64) -> Vec<Complex64> {
        let mut buf = self.scatter(pupil, z_um);
        self.fft.cols(&mut buf, 0..self.fft.nx(), Direction::Forward);
        buf
    }

    /// Back-propagate an FFT-order image field to the support pixels of the
    /// in-focus pupil (defocus removed, inverse DFT normalized).
    pub fn field_to_pupil(&self, mut field: Vec<Complex64>, z_um: f64) -> Vec<Complex64> {
        self.fft.cols(&mut field, 0..self.fft.nx(), Direction::Inverse);
        self.fft.rows(&mut field, &self.support_rows, Direction::Inverse);
        let s = 1.0 / self.grid.len() as f64;
        self.fft_pos
            .iter()
            .zip(self.defocus(z_um))
            .map(|(&pos, d)| field[pos] * d.conj() * s)
            .collect()
    }

    /// Normalized detector-plane intensity of one plane, row-major `(ny, nx)`.
    pub fn intensity_plane(&self, pupil: &[Complex64], z_um: f64) -> Vec<f64> {
        let mut buf = self.scatter(pupil, z_um);
        self.fft
            .cols(&mut buf, self.crop_cols.iter().copied(), Direction::Forward);
        let nfx = self.fft.nx();
        let mut out = Vec::with_capacity(self.config.nx * self.config.ny);
        for &r in &self.crop_rows {
            for &c in &self.crop_cols {
                out.push(buf[r * nfx + c].norm_sqr() * self.norm);
            }
        }
        out
    }

    /// Normalized intensity volume `(zs.len(), ny, nx)`; planes are computed in parallel.
    pub fn render(&self, pupil: &[Complex64], zs: &[f64]) -> Array3<f64> {
        let planes: Vec<Vec<f64>> = zs
            .par_iter()
            .map(|&z| self.intensity_plane(pupil, z))
            .collect();
        let (ny, nx) = (self.config.ny, self.config.nx);
        let flat: Vec<f64> = planes.into_iter().flatten().collect();
        Array3::from_shape_vec((zs.len(), ny, nx), flat).expect("plane sizes are consistent")
    }

    /// Noiseless stack for the given aberration at the config's planes.
    pub fn synth(&self, amps: &AmplitudeVector) -> Result<PsfStack> {
        let pupil = self.pupil_field(amps, (0.0, 0.0))?;
        let zs = self.config.z_offsets();
        let data = self.render(&pupil, &zs);
        PsfStack::new(data, zs, self.config.digest())
    }
}

/// `exp(-2πi z sqrt(n0²/λ² - |k|²))` on the config's pupil grid, zero outside.
pub fn defocus_phase(config: &MicroscopeConfig, z_um: f64) -> Result<Vec<Complex64>> {
    Ok(Propagator::new(config)?.defocus_grid(z_um))
}

/// Noiseless PSF stack, normalized so the unaberrated peak is 1.
pub fn synth_psf(config: &MicroscopeConfig, amps: &AmplitudeVector) -> Result<PsfStack> {
    Propagator::new(config)?.synth(amps)
}

/// Unit-sum solid-sphere kernel, rasterized with 3x3x3 subvoxel supersampling.
pub fn bead_kernel(diameter_um: f64, dx_um: f64, dy_um: f64, dz_um: f64) -> Array3<f64> {
    let r = diameter_um / 2.0;
    if r <= 0.0 {
        return Array3::ones((1, 1, 1));
    }
    let half = |d: f64| (r / d + 0.5).ceil() as usize;
    let (hz, hy, hx) = (half(dz_um), half(dy_um), half(dx_um));
    let sub = [-1.0 / 3.0, 0.0, 1.0 / 3.0];
    let mut k = Array3::<f64>::zeros((2 * hz + 1, 2 * hy + 1, 2 * hx + 1));
    for ((iz, iy, ix), v) in k.indexed_iter_mut() {
        let (oz, oy, ox) = (
            iz as f64 - hz as f64,
            iy as f64 - hy as f64,
            ix as f64 - hx as f64,
        );
        let mut count = 0;
        for sz in sub {
            for sy in sub {
                for sx in sub {
                    let z = (oz + sz) * dz_um;
                    let y = (oy + sy) * dy_um;
                    let x = (ox + sx) * dx_um;
                    if x * x + y * y + z * z < r * r {
                        count += 1;
                    }
                }
            }
        }
        *v = count as f64;
    }
    // trim empty outer shells
    let shell_empty = |k: &Array3<f64>| {
        let (nz, ny, nx) = k.dim();
        nz > 1
            && ny > 1
            && nx > 1
            && k.slice(s![0, .., ..]).sum() == 0.0
            && k.slice(s![.., 0, ..]).sum() == 0.0
            && k.slice(s![.., .., 0]).sum() == 0.0
    };
    while shell_empty(&k) {
        k = k.slice(s![1..-1, 1..-1, 1..-1]).to_owned();
    }
    let total = k.sum();
    k / total
}

fn convolve_same(data: ArrayView3<f64>, kernel: ArrayView3<f64>) -> Array3<f64> {
    let (nz, ny, nx) = data.dim();
    let (kz, ky, kx) = kernel.dim();
    let (hz, hy, hx) = ((kz / 2) as isize, (ky / 2) as isize, (kx / 2) as isize);
    let planes: Vec<Vec<f64>> = (0..nz)
        .into_par_iter()
        .map(|z| {
            let mut plane = vec![0.0; ny * nx];
            for ((a, b, c), &w) in kernel.indexed_iter() {
                if w == 0.0 {
                    continue;
                }
                let sz = z as isize - (a as isize - hz);
                if sz < 0 || sz >= nz as isize {
                    continue;
                }
                let (oy, ox) = (b as isize - hy, c as isize - hx);
                for y in 0..ny as isize {
                    let sy = y - oy;
                    if sy < 0 || sy >= ny as isize {
                        continue;
                    }
                    for x in 0..nx as isize {
                        let sx = x - ox;
                        if sx < 0 || sx >= nx as isize {
                            continue;
                        }
                        plane[(y as usize) * nx + x as usize] +=
                            w * data[[sz as usize, sy as usize, sx as usize]];
                    }
                }
            }
            plane
        })
        .collect();
    Array3::from_shape_vec((nz, ny, nx), planes.into_iter().flatten().collect())
        .expect("shape is preserved")
}

/// Convolve a stack with a solid bead of the given diameter (zero-padded borders).
pub fn bead_convolve(
    stack: &PsfStack,
    diameter_um: f64,
    config: &MicroscopeConfig,
) -> Result<PsfStack> {
    if !(diameter_um >= 0.0) {
        return Err(invalid("bead diameter must be >= 0"));
    }
    let field = (stack.nx() as f64 * config.dx_um)
        .min(stack.ny() as f64 * config.dy_um)
        .min(stack.nz() as f64 * config.dz_um);
    if diameter_um > field / 2.0 {
        return Err(invalid(format!(
            "bead diameter {diameter_um} µm exceeds half the field ({field} µm)"
        )));
    }
    if diameter_um == 0.0 {
        return Ok(stack.clone());
    }
    let kernel = bead_kernel(diameter_um, config.dx_um, config.dy_um, config.dz_um);
    Ok(PsfStack {
        data: convolve_same(stack.data.view(), kernel.view()),
        z_offsets_um: stack.z_offsets_um.clone(),
        config_digest: stack.config_digest.clone(),
    })
}

/// Poisson shot noise plus Gaussian read noise, returned in normalized units.
///
/// Negative values from read noise are kept.
pub fn apply_noise(stack: &PsfStack, noise: &NoiseSpec) -> Result<PsfStack> {
    apply_noise_at(stack, noise, 0)
}

/// [`apply_noise`] drawing from the stream of sample `index` under `noise.seed`.
pub fn apply_noise_at(stack: &PsfStack, noise: &NoiseSpec, index: u64) -> Result<PsfStack> {
    if noise.is_none() {
        return Ok(stack.clone());
    }
    if !(noise.photons_peak > 0.0) || !(noise.gaussian_sigma >= 0.0) {
        return Err(invalid("noise needs photons_peak > 0 and gaussian_sigma >= 0"));
    }
    if stack.data.iter().any(|&v| !(v >= 0.0) || !v.is_finite()) {
        return Err(invalid("noise model needs a finite nonnegative stack"));
    }
    let mut rng = crate::rng::keyed_rng(noise.seed, index, crate::rng::TAG_NOISE);
    let read = Normal::new(0.0, noise.gaussian_sigma).map_err(|e| invalid(e.to_string()))?;
    let p = noise.photons_peak;
    let data = stack.data.mapv(|v| {
        let mean = v * p;
        let shot = if mean > 0.0 {
            Poisson::new(mean).expect("positive mean").sample(&mut rng)
        } else {
            0.0
        };
        let r = if noise.gaussian_sigma > 0.0 {
            read.sample(&mut rng)
        } else {
            // keep the stream layout independent of sigma
            let _: f64 = rng.random();
            0.0
        };
        (shot + r) / p
    });
    Ok(PsfStack {
        data,
        z_offsets_um: stack.z_offsets_um.clone(),
        config_digest: stack.config_digest.clone(),
    })
}

/// Central `(nz, ny, nx)` sub-volume.
pub fn crop_center(stack: &PsfStack, nx: usize, ny: usize, nz: usize) -> Result<PsfStack> {
    if nx > stack.nx() || ny > stack.ny() || nz > stack.nz() || nx == 0 || ny == 0 || nz == 0 {
        return Err(invalid(format!(
            "cannot crop {}x{}x{} to {nz}x{ny}x{nx}",
            stack.nz(),
            stack.ny(),
            stack.nx()
        )));
    }
    let (z0, y0, x0) = (
        (stack.nz() - nz) / 2,
        (stack.ny() - ny) / 2,
        (stack.nx() - nx) / 2,
    );
    Ok(PsfStack {
        data: stack
            .data
            .slice(s![z0..z0 + nz, y0..y0 + ny, x0..x0 + nx])
            .to_owned(),
        z_offsets_um: stack.z_offsets_um[z0..z0 + nz].to_vec(),
        config_digest: stack.config_digest.clone(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> MicroscopeConfig {
        MicroscopeConfig {
            na: 1.1,
            lambda_um: 0.5,
            n0: 1.33,
            dx_um: 0.1,
            dy_um: 0.1,
            dz_um: 0.2,
            nx: 16,
            ny: 16,
            nz: 5,
            oversample: 2,
        }
    }

    fn amps(pairs: &[(u32, f64)]) -> AmplitudeVector {
        AmplitudeVector::from_pairs(pairs.iter().copied()).unwrap()
    }

    #[test]
    fn presets_match_instruments() {
        let ps = Preset::point_scanning();
        assert_eq!(ps.microscope.na, 1.4);
        assert_eq!(ps.microscope.n0, 1.518);
        assert_eq!(ps.microscope.lambda_um, 0.755);
        assert_eq!((ps.microscope.nx, ps.microscope.ny, ps.microscope.nz), (32, 32, 32));
        assert_eq!(ps.bead_diameter_um, 0.080);
        let wf = Preset::widefield();
        assert_eq!(wf.microscope.na, 1.1);
        assert_eq!(wf.microscope.n0, 1.33);
        assert_eq!(wf.microscope.dz_um, 0.100);
        assert_eq!((wf.microscope.nx, wf.microscope.nz), (50, 50));
        assert_eq!(wf.bead_diameter_um, 0.200);
    }

    #[test]
    fn config_validation() {
        let mut c = small();
        c.na = 1.4;
        assert!(c.validate().is_err());
        let mut c = small();
        c.nx = 15;
        assert!(c.validate().is_err());
        let mut c = small();
        c.nz = 0;
        assert!(c.validate().is_err());
        assert!(small().validate().is_ok());
    }

    #[test]
    fn z_offsets_are_symmetric() {
        let mut c = small();
        assert_eq!(c.z_offsets(), vec![-0.4, -0.2, 0.0, 0.2, 0.4]);
        c.nz = 4;
        let z = c.z_offsets();
        assert!((z[1] + 0.1).abs() < 1e-12 && (z[2] - 0.1).abs() < 1e-12);
    }

    #[test]
    fn defocus_factor_properties() {
        let c = small();
        let prop = Propagator::new(&c).unwrap();
        assert!(prop.defocus(0.0).iter().all(|v| (v - Complex64::new(1.0, 0.0)).norm() < 1e-15));
        for (a, b) in prop.defocus(0.37).iter().zip(prop.defocus(-0.37)) {
            assert!((a * b - Complex64::new(1.0, 0.0)).norm() < 1e-12);
        }
        assert!(prop.defocus(0.5).iter().all(|v| (v.norm() - 1.0).abs() < 1e-12));
        let grid = defocus_phase(&c, 0.5).unwrap();
        let g = prop.grid();
        for (i, v) in grid.iter().enumerate() {
            if g.mask()[i] {
                assert!((v.norm() - 1.0).abs() < 1e-12);
            } else {
                assert_eq!(*v, Complex64::default());
            }
        }
    }

    #[test]
    fn unaberrated_psf_is_centered_and_symmetric() {
        let c = small();
        let st = synth_psf(&c, &AmplitudeVector::default_modes()).unwrap();
        assert!((st.max() - 1.0).abs() < 1e-9);
        assert!((st.data[[2, 8, 8]] - 1.0).abs() < 1e-9);
        assert!(st.data.iter().all(|&v| v >= 0.0));
        for z in 0..5 {
            for y in 1..16 {
                for x in 1..16 {
                    let v = st.data[[z, y, x]];
                    assert!((v - st.data[[z, 16 - y, x]]).abs() < 1e-12);
                    assert!((v - st.data[[z, y, 16 - x]]).abs() < 1e-12);
                    assert!((v - st.data[[4 - z, y, x]]).abs() < 1e-9);
                }
            }
        }
    }

    #[test]
    fn even_mode_sign_flip_mirrors_axially() {
        let c = small();
        let prop = Propagator::new(&c).unwrap();
        let plus = prop.synth(&amps(&[(5, 0.05)])).unwrap();
        let minus = prop.synth(&amps(&[(5, -0.05)])).unwrap();
        assert!(plus.max_abs_diff(&minus.mirrored_z()) < 1e-6);
        // odd modes are not mirrored
        let plus = prop.synth(&amps(&[(7, 0.05)])).unwrap();
        let minus = prop.synth(&amps(&[(7, -0.05)])).unwrap();
        assert!(plus.max_abs_diff(&minus.mirrored_z()) > 1e-3);
    }

    #[test]
    fn aberration_lowers_peak() {
        let c = small();
        let prop = Propagator::new(&c).unwrap();
        for j in 5..=15 {
            let st = prop.synth(&amps(&[(j, 0.075)])).unwrap();
            assert!(st.max() < 1.0, "mode {j}");
        }
    }

    #[test]
    fn shift_ramp_moves_psf_toward_positive_index() {
        let c = small();
        let prop = Propagator::new(&c).unwrap();
        let pupil = prop
            .pupil_field(&AmplitudeVector::default_modes(), (c.dx_um, 0.0))
            .unwrap();
        let plane = prop.intensity_plane(&pupil, 0.0);
        let argmax = plane
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.total_cmp(b.1))
            .unwrap()
            .0;
        assert_eq!((argmax / 16, argmax % 16), (8, 9));
    }

    #[test]
    fn bead_kernel_geometry() {
        let k = bead_kernel(0.080, 0.030, 0.030, 0.030);
        assert!(k.dim().0 <= 3 && k.dim().1 <= 3 && k.dim().2 <= 3);
        assert!((k.sum() - 1.0).abs() < 1e-12);
        let (nz, ny, nx) = k.dim();
        for ((z, y, x), &v) in k.indexed_iter() {
            assert_eq!(v, k[[nz - 1 - z, y, x]]);
            assert_eq!(v, k[[z, ny - 1 - y, x]]);
            assert_eq!(v, k[[z, y, nx - 1 - x]]);
        }
        assert_eq!(bead_kernel(0.0, 0.03, 0.03, 0.03).dim(), (1, 1, 1));
    }

    #[test]
    fn bead_convolution_conserves_interior_energy() {
        let c = Preset::widefield().microscope;
        // interior-supported blob
        let mut data = Array3::<f64>::zeros((c.nz, c.ny, c.nx));
        for ((z, y, x), v) in data.indexed_iter_mut() {
            let r2 = (z as f64 - 25.0).powi(2) + (y as f64 - 25.0).powi(2) + (x as f64 - 25.0).powi(2);
            if r2 < 100.0 {
                *v = (-r2 / 20.0).exp();
            }
        }
        let st = PsfStack::new(data, c.z_offsets(), c.digest()).unwrap();
        let out = bead_convolve(&st, 0.2, &c).unwrap();
        assert!(((out.sum() - st.sum()) / st.sum()).abs() < 1e-3);
        assert_eq!(bead_convolve(&st, 0.0, &c).unwrap(), st);
        assert!(bead_convolve(&st, 3.0, &c).is_err());
        assert!(bead_convolve(&st, -0.1, &c).is_err());
    }

    #[test]
    fn noise_identity_determinism_and_mean() {
        let c = small();
        let st = synth_psf(&c, &amps(&[(6, 0.03)])).unwrap();
        assert_eq!(apply_noise(&st, &NoiseSpec::none()).unwrap(), st);
        let spec = NoiseSpec {
            photons_peak: 500.0,
            gaussian_sigma: 2.0,
            seed: 11,
        };
        let a = apply_noise(&st, &spec).unwrap();
        let b = apply_noise(&st, &spec).unwrap();
        assert_eq!(a, b);
        assert!(a.data.iter().any(|&v| v < 0.0), "read noise may go negative");
        let other = apply_noise(&st, &NoiseSpec { seed: 12, ..spec }).unwrap();
        assert_ne!(a, other);

        // Poisson mean oracle: mean of 10 000 draws at value 0.25
        let flat = Array3::from_elem((1, 100, 100), 0.25);
        let st = PsfStack::new(flat, vec![0.0], String::new()).unwrap();
        let noisy = apply_noise(
            &st,
            &NoiseSpec {
                photons_peak: 1000.0,
                gaussian_sigma: 0.0,
                seed: 3,
            },
        )
        .unwrap();
        let mean = noisy.data.mean().unwrap();
        let tol = 3.0 * (0.25f64 / 1000.0).sqrt() / 100.0;
        assert!((mean - 0.25).abs() < tol, "{mean}");
    }

    #[test]
    fn crop_keeps_center_and_offsets() {
        let mut c = small();
        c.nx = 32;
        c.ny = 32;
        c.nz = 7;
        let st = synth_psf(&c, &AmplitudeVector::default_modes()).unwrap();
        assert_eq!(crop_center(&st, 32, 32, 7).unwrap(), st);
        let cr = crop_center(&st, 16, 16, 3).unwrap();
        assert_eq!(cr.z_offsets_um, st.z_offsets_um[2..5].to_vec());
        let argmax = cr
            .data
            .indexed_iter()
            .max_by(|a, b| a.1.total_cmp(b.1))
            .unwrap()
            .0;
        assert_eq!(argmax, (1, 8, 8));
        assert!(crop_center(&st, 64, 16, 3).is_err());
    }
}
