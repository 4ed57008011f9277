//! Multi-plane Gerchberg-Saxton phase retrieval.
//!
//! Each iteration propagates the current pupil to every measured plane,
//! imposes the measured modulus inside the detector crop, back-propagates,
//! averages the per-plane pupil estimates and keeps only their phase.

use std::collections::VecDeque;
use std::f64::consts::{PI, TAU};

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::optics::{MicroscopeConfig, Propagator, PsfStack};
use crate::stats;
use crate::zernike::{indices, AmplitudeVector, PupilGrid, Wavefront, ZernikeBasis, DEFAULT_MODES};

/// Optional periodic regularization of the pupil phase.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Smoothing {
    #[default]
    None,
    /// Replace the phase by its projection on Noll 1..=15 every `k` iterations.
    ZernikeProjectEvery(usize),
}

/// How measured intensities are related to the modeled field.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum IntensityScale {
    /// Data follow the forward-model convention: unaberrated peak = 1.
    #[default]
    Normalized,
    /// Unknown scale, re-fitted by least squares every iteration.
    Fitted,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GsOptions {
    pub iterations: usize,
    /// Constant subtracted from the stack; `None` uses the 1st percentile.
    pub background_subtract: Option<f64>,
    pub smoothing: Smoothing,
    pub scale: IntensityScale,
}

impl Default for GsOptions {
    fn default() -> Self {
        Self {
            iterations: 30,
            background_subtract: None,
            smoothing: Smoothing::None,
            scale: IntensityScale::Normalized,
        }
    }
}

#[derive(Clone, Debug)]
pub struct GsResult {
    /// Recovered pupil phase in µm on the config's pupil grid.
    pub wavefront: Wavefront,
    /// Noll 5..=15 amplitudes; piston, tip, tilt and defocus are fitted jointly and dropped.
    pub amplitudes: AmplitudeVector,
    /// Per iteration: sum over planes of the L2 distance between modeled and
    /// measured amplitudes (square root of normalized intensity).
    pub per_iteration_residual: Vec<f64>,
}

fn align_piston(pupil: &mut [Complex64]) {
    let s: Complex64 = pupil.iter().sum();
    if s.norm() > 0.0 {
        let rot = s.conj() / s.norm();
        pupil.iter_mut().for_each(|p| *p *= rot);
    }
}

fn wrap(x: f64) -> f64 {
    x - TAU * ((x + PI) / TAU).floor()
}

/// Unwrap phases given on the support pixels of `grid` by flood fill from the
/// pixel nearest the center, adding wrapped differences between 4-neighbors.
/// Exact whenever neighboring pixels differ by less than pi.
pub fn unwrap_on_support(grid: &PupilGrid, wrapped: &[f64]) -> Vec<f64> {
    let idx = grid.masked_indices();
    let nx = grid.nx();
    let mut slot = vec![usize::MAX; grid.len()];
    for (k, &i) in idx.iter().enumerate() {
        slot[i] = k;
    }
    let mut out = wrapped.to_vec();
    let mut seen = vec![false; idx.len()];
    let Some(start) = (0..idx.len()).min_by(|&a, &b| grid.rho()[idx[a]].total_cmp(&grid.rho()[idx[b]])) else {
        return out;
    };
    // disjoint islands (none for a disk) are started in turn
    for seed in std::iter::once(start).chain(0..idx.len()) {
        if seen[seed] {
            continue;
        }
        seen[seed] = true;
        let mut queue = VecDeque::from([seed]);
        while let Some(k) = queue.pop_front() {
            let i = idx[k];
            let (row, col) = (i / nx, i % nx);
            let mut neighbors = [None; 4];
            if col > 0 {
                neighbors[0] = Some(i - 1);
            }
            if col + 1 < nx {
                neighbors[1] = Some(i + 1);
            }
            if row > 0 {
                neighbors[2] = Some(i - nx);
            }
            if i + nx < grid.len() {
                neighbors[3] = Some(i + nx);
            }
            for j in neighbors.into_iter().flatten() {
                let n = slot[j];
                if n != usize::MAX && !seen[n] {
                    seen[n] = true;
                    out[n] = out[k] + wrap(wrapped[n] - wrapped[k]);
                    queue.push_back(n);
                }
            }
        }
    }
    out
}

/// Retrieve the pupil phase of a stack by alternating projections.
pub fn gs_retrieve(stack: &PsfStack, config: &MicroscopeConfig, opts: &GsOptions) -> Result<GsResult> {
    let prop = Propagator::new(config)?;
    gs_retrieve_with(&prop, stack, opts)
}

/// [`gs_retrieve`] with a prebuilt propagator.
pub fn gs_retrieve_with(prop: &Propagator, stack: &PsfStack, opts: &GsOptions) -> Result<GsResult> {
    if opts.iterations == 0 {
        return Err(invalid("GS needs at least one iteration"));
    }
    stack.check_lateral(prop.config())?;
    if stack.data.iter().any(|v| !v.is_finite()) {
        return Err(invalid("stack contains non-finite values"));
    }
    let background = match opts.background_subtract {
        Some(b) if b >= 0.0 => b,
        Some(_) => return Err(invalid("background_subtract must be >= 0")),
        None => {
            let flat: Vec<f64> = stack.data.iter().copied().collect();
            stats::quantile_sorted(&stats::sorted(&flat), 0.01).max(0.0)
        }
    };
    let plane_len = stack.nx() * stack.ny();
    let measured: Vec<Vec<f64>> = stack
        .data
        .outer_iter()
        .map(|plane| plane.iter().map(|&v| (v - background).max(0.0).sqrt()).collect())
        .collect();
    let meas_energy: f64 = measured.iter().flatten().map(|a| a * a).sum();
    if !(meas_energy > 0.0) {
        return Err(Error::DegenerateInput(
            "stack has no signal above background".into(),
        ));
    }

    let crop = prop.crop_positions();
    debug_assert_eq!(crop.len(), plane_len);
    let zs = &stack.z_offsets_um;
    let basis = ZernikeBasis::new(prop.grid(), &indices(1..=15)?)?;
    let mut pupil = vec![Complex64::new(1.0, 0.0); prop.support_len()];
    let mut residuals = Vec::with_capacity(opts.iterations);
    // raw |DFT|^2 = intensity / norm
    let normalized_scale = (1.0 / prop.norm()).sqrt();

    for iter in 0..opts.iterations {
        let fields: Vec<Vec<Complex64>> = zs.par_iter().map(|&z| prop.image_field(&pupil, z)).collect();

        let scale = match opts.scale {
            IntensityScale::Normalized => normalized_scale,
            IntensityScale::Fitted => {
                // least-squares scale between model moduli and measured amplitudes
                let cross: f64 = fields
                    .iter()
                    .zip(&measured)
                    .map(|(f, m)| crop.iter().zip(m).map(|(&p, a)| f[p].norm() * a).sum::<f64>())
                    .sum();
                cross / meas_energy
            }
        };
        if !(scale > 0.0) || !scale.is_finite() {
            return Err(Error::DegenerateInput("model and data do not overlap".into()));
        }

        let per_plane: Vec<(f64, Vec<Complex64>)> = fields
            .into_par_iter()
            .zip(measured.par_iter())
            .zip(zs.par_iter())
            .map(|((mut field, meas), &z)| {
                let mut mismatch = 0.0;
                for (&p, &a) in crop.iter().zip(meas) {
                    let e = field[p];
                    let modulus = e.norm();
                    let d = modulus / scale - a;
                    mismatch += d * d;
                    field[p] = if modulus > 0.0 {
                        e * (a * scale / modulus)
                    } else {
                        Complex64::new(a * scale, 0.0)
                    };
                }
                (mismatch.sqrt(), prop.field_to_pupil(field, z))
            })
            .collect();

        residuals.push(per_plane.iter().map(|(r, _)| r).sum());
        let mut avg = vec![Complex64::default(); pupil.len()];
        for (_, est) in &per_plane {
            for (a, e) in avg.iter_mut().zip(est) {
                *a += e;
            }
        }
        for (p, a) in pupil.iter_mut().zip(&avg) {
            *p = if a.norm() > 0.0 { a / a.norm() } else { Complex64::new(1.0, 0.0) };
        }
        align_piston(&mut pupil);

        if let Smoothing::ZernikeProjectEvery(k) = opts.smoothing {
            if k > 0 && (iter + 1) % k == 0 {
                let wrapped: Vec<f64> = pupil.iter().map(|p| p.arg()).collect();
                let phase = unwrap_on_support(prop.grid(), &wrapped);
                let fitted = basis.synthesize(&basis.project(&phase)?);
                for (p, ph) in pupil.iter_mut().zip(fitted) {
                    *p = Complex64::from_polar(1.0, ph);
                }
            }
        }
    }

    let lambda = prop.config().lambda_um;
    let wrapped: Vec<f64> = pupil.iter().map(|p| p.arg()).collect();
    let phase_um: Vec<f64> = unwrap_on_support(prop.grid(), &wrapped)
        .into_iter()
        .map(|ph| ph * lambda / TAU)
        .collect();
    let grid = prop.grid();
    let mut values = vec![0.0; grid.len()];
    for (&i, &v) in grid.masked_indices().iter().zip(&phase_um) {
        values[i] = v;
    }
    let wavefront = Wavefront::from_values(grid, values)?;
    let coeffs = basis.project(&phase_um)?;
    let amplitudes = AmplitudeVector::from_pairs(
        basis
            .nolls()
            .into_iter()
            .zip(coeffs)
            .filter(|(j, _)| DEFAULT_MODES.contains(j)),
    )?;
    Ok(GsResult {
        wavefront,
        amplitudes,
        per_iteration_residual: residuals,
    })
}
