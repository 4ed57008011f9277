//! Parameterized PSF fitting.
//!
//! The measured stack is modeled as `scale · I(a, shift) + background`, where
//! `I` is the normalized forward model with a lateral pupil ramp and an axial
//! offset applied to every plane. Parameters are estimated with a damped
//! Gauss-Newton (Levenberg-Marquardt) iteration; the Jacobian of the model
//! with respect to amplitudes and shifts uses forward differences evaluated in
//! parallel, scale and background derivatives are exact.

use nalgebra::{DMatrix, DVector};
use ndarray::Array3;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::optics::{MicroscopeConfig, Propagator, PsfStack};
use crate::zernike::{AmplitudeVector, ZernikeIndex, DEFAULT_MODES};

/// Finite-difference step for amplitudes and shifts, µm.
pub const FD_STEP_UM: f64 = 1e-3;

/// Lower bound on the modeled mean in the Poisson objective.
const POISSON_FLOOR: f64 = 1e-9;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Objective {
    /// Sum of squared residuals.
    #[default]
    #[serde(alias = "lsq")]
    GaussianLsq,
    /// Poisson deviance, `2 Σ (μ − d + d ln(d/μ))`; equals the negative
    /// log-likelihood up to a data-only constant and a factor 2.
    #[serde(alias = "nll")]
    PoissonNll,
}

/// Which nuisance parameters are free.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct Nuisance {
    pub scale: bool,
    pub background: bool,
    pub x_shift: bool,
    pub y_shift: bool,
    pub z_shift: bool,
}

impl Default for Nuisance {
    fn default() -> Self {
        Self::all()
    }
}

impl Nuisance {
    pub fn all() -> Self {
        Self {
            scale: true,
            background: true,
            x_shift: true,
            y_shift: true,
            z_shift: true,
        }
    }

    pub fn none() -> Self {
        Self {
            scale: false,
            background: false,
            x_shift: false,
            y_shift: false,
            z_shift: false,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FitOptions {
    pub iterations: usize,
    pub objective: Objective,
    pub fit_nuisance: Nuisance,
    /// Fitted Noll modes.
    pub modes: Vec<u32>,
    /// Starting amplitudes; modes not listed start at zero.
    pub init: AmplitudeVector,
    /// Stop once the parameter step norm falls below this.
    pub step_tolerance: f64,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self {
            iterations: 30,
            objective: Objective::GaussianLsq,
            fit_nuisance: Nuisance::all(),
            modes: DEFAULT_MODES.collect(),
            init: AmplitudeVector::new(),
            step_tolerance: 1e-6,
        }
    }
}

impl FitOptions {
    pub fn validate(&self) -> Result<()> {
        if self.iterations == 0 {
            return Err(invalid("fit needs at least one iteration"));
        }
        if !(self.step_tolerance > 0.0) {
            return Err(invalid("step_tolerance must be > 0"));
        }
        if self.modes.is_empty() {
            return Err(invalid("no modes to fit"));
        }
        for &m in &self.modes {
            ZernikeIndex::new(m)?;
        }
        let mut seen = self.modes.clone();
        seen.sort_unstable();
        seen.dedup();
        if seen.len() != self.modes.len() {
            return Err(invalid("duplicate modes"));
        }
        Ok(())
    }
}

/// A full parameter set of the fit model.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FitParams {
    pub amplitudes: AmplitudeVector,
    pub scale: f64,
    pub background: f64,
    /// Emitter displacement `(x, y, z)` in µm.
    pub shifts: (f64, f64, f64),
}

impl FitParams {
    pub fn new(amplitudes: AmplitudeVector) -> Self {
        Self {
            amplitudes,
            scale: 1.0,
            background: 0.0,
            shifts: (0.0, 0.0, 0.0),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub amplitudes: AmplitudeVector,
    pub scale: f64,
    pub background: f64,
    pub shifts: (f64, f64, f64),
    /// Objective at the start and after every iteration (rejected steps
    /// repeat the previous value).
    pub objective_trace: Vec<f64>,
    pub converged: bool,
}

impl FitResult {
    pub fn params(&self) -> FitParams {
        FitParams {
            amplitudes: self.amplitudes.clone(),
            scale: self.scale,
            background: self.background,
            shifts: self.shifts,
        }
    }
}

/// Unit-scale, zero-background model at the stack's plane positions.
fn model(prop: &Propagator, zs: &[f64], amps: &AmplitudeVector, shifts: (f64, f64, f64)) -> Result<Array3<f64>> {
    let pupil = prop.pupil_field(amps, (shifts.0, shifts.1))?;
    let shifted: Vec<f64> = zs.iter().map(|z| z - shifts.2).collect();
    Ok(prop.render(&pupil, &shifted))
}

fn objective_value(objective: Objective, mu: &[f64], data: &[f64]) -> f64 {
    match objective {
        Objective::GaussianLsq => mu.iter().zip(data).map(|(m, d)| (m - d).powi(2)).sum(),
        Objective::PoissonNll => mu
            .iter()
            .zip(data)
            .map(|(&m, &d)| {
                let m = m.max(POISSON_FLOOR);
                if d > 0.0 {
                    2.0 * (m - d + d * (d / m).ln())
                } else {
                    2.0 * m
                }
            })
            .sum(),
    }
}

fn check_inputs(prop: &Propagator, stack: &PsfStack) -> Result<()> {
    stack.check_lateral(prop.config())?;
    if stack.data.iter().any(|v| !v.is_finite()) {
        return Err(invalid("stack contains non-finite values"));
    }
    Ok(())
}

/// Objective of `params` against `stack`.
pub fn objective_eval(
    stack: &PsfStack,
    config: &MicroscopeConfig,
    params: &FitParams,
    objective: Objective,
) -> Result<f64> {
    let prop = Propagator::new(config)?;
    objective_eval_with(&prop, stack, params, objective)
}

/// [`objective_eval`] with a prebuilt propagator.
pub fn objective_eval_with(
    prop: &Propagator,
    stack: &PsfStack,
    params: &FitParams,
    objective: Objective,
) -> Result<f64> {
    check_inputs(prop, stack)?;
    let m = model(prop, &stack.z_offsets_um, &params.amplitudes, params.shifts)?;
    let mu: Vec<f64> = m.iter().map(|v| params.scale * v + params.background).collect();
    let data: Vec<f64> = stack.data.iter().copied().collect();
    Ok(objective_value(objective, &mu, &data))
}

/// Layout of the free-parameter vector: amplitudes, enabled shifts, then
/// enabled scale and background.
struct Layout {
    modes: Vec<u32>,
    shift_axes: Vec<usize>,
    scale: Option<usize>,
    background: Option<usize>,
    len: usize,
}

impl Layout {
    fn new(modes: &[u32], n: Nuisance) -> Self {
        let mut len = modes.len();
        let shift_axes: Vec<usize> = [n.x_shift, n.y_shift, n.z_shift]
            .iter()
            .enumerate()
            .filter(|(_, &on)| on)
            .map(|(i, _)| i)
            .collect();
        len += shift_axes.len();
        let scale = n.scale.then(|| {
            len += 1;
            len - 1
        });
        let background = n.background.then(|| {
            len += 1;
            len - 1
        });
        Self {
            modes: modes.to_vec(),
            shift_axes,
            scale,
            background,
            len,
        }
    }

    /// Parameters that enter the unit model (finite-differenced).
    fn n_model(&self) -> usize {
        self.modes.len() + self.shift_axes.len()
    }

    fn pack(&self, p: &FitParams) -> DVector<f64> {
        let mut v = DVector::zeros(self.len);
        for (i, &m) in self.modes.iter().enumerate() {
            v[i] = p.amplitudes.get(m);
        }
        let s = [p.shifts.0, p.shifts.1, p.shifts.2];
        for (k, &axis) in self.shift_axes.iter().enumerate() {
            v[self.modes.len() + k] = s[axis];
        }
        if let Some(i) = self.scale {
            v[i] = p.scale;
        }
        if let Some(i) = self.background {
            v[i] = p.background;
        }
        v
    }

    /// Overwrite the free entries of `base` with `v`.
    fn unpack(&self, v: &DVector<f64>, base: &FitParams) -> FitParams {
        let mut p = base.clone();
        for (i, &m) in self.modes.iter().enumerate() {
            p.amplitudes.set(m, v[i]).expect("modes validated");
        }
        let mut s = [p.shifts.0, p.shifts.1, p.shifts.2];
        for (k, &axis) in self.shift_axes.iter().enumerate() {
            s[axis] = v[self.modes.len() + k];
        }
        p.shifts = (s[0], s[1], s[2]);
        if let Some(i) = self.scale {
            p.scale = v[i];
        }
        if let Some(i) = self.background {
            p.background = v[i];
        }
        p
    }
}

/// Linear least-squares scale and background for a fixed unit model.
fn linear_nuisance(m: &[f64], d: &[f64], n: Nuisance, scale: f64, background: f64) -> (f64, f64) {
    let len = m.len() as f64;
    match (n.scale, n.background) {
        (true, true) => {
            let (sm, sd) = (m.iter().sum::<f64>(), d.iter().sum::<f64>());
            let smm: f64 = m.iter().map(|v| v * v).sum();
            let smd: f64 = m.iter().zip(d).map(|(a, b)| a * b).sum();
            let det = len * smm - sm * sm;
            if det.abs() < 1e-300 {
                return (scale, background);
            }
            ((len * smd - sm * sd) / det, (smm * sd - sm * smd) / det)
        }
        (true, false) => {
            let smm: f64 = m.iter().map(|v| v * v).sum();
            let smd: f64 = m.iter().zip(d).map(|(a, b)| a * (b - background)).sum();
            if smm > 0.0 {
                (smd / smm, background)
            } else {
                (scale, background)
            }
        }
        (false, true) => {
            let r: f64 = m.iter().zip(d).map(|(a, b)| b - scale * a).sum();
            (scale, r / len)
        }
        (false, false) => (scale, background),
    }
}

/// Weighted Gauss-Newton system `(JᵀWJ, JᵀW r)` at `params`, with `r = μ − d`.
/// Poisson weights `1/μ` make `2 JᵀW r` the exact gradient of the deviance.
#[allow(clippy::too_many_arguments)]
fn normal_equations(
    prop: &Propagator,
    zs: &[f64],
    data: &[f64],
    layout: &Layout,
    params: &FitParams,
    unit: &Array3<f64>,
    mu: &[f64],
    objective: Objective,
    central: bool,
) -> Result<(DMatrix<f64>, DVector<f64>)> {
    let x = layout.pack(params);
    let h = FD_STEP_UM;
    let at = |j: usize, step: f64| -> Result<Array3<f64>> {
        let mut xp = x.clone();
        xp[j] += step;
        let p = layout.unpack(&xp, params);
        model(prop, zs, &p.amplitudes, p.shifts)
    };
    // finite-difference columns of the scaled unit model
    let cols: Vec<Vec<f64>> = (0..layout.n_model())
        .into_par_iter()
        .map(|j| {
            let plus = at(j, h)?;
            let col = if central {
                let minus = at(j, -h)?;
                plus.iter()
                    .zip(minus.iter())
                    .map(|(a, b)| params.scale * (a - b) / (2.0 * h))
                    .collect()
            } else {
                plus.iter()
                    .zip(unit.iter())
                    .map(|(a, b)| params.scale * (a - b) / h)
                    .collect()
            };
            Ok(col)
        })
        .collect::<Result<_>>()?;

    let n = layout.len;
    let mut jtj = DMatrix::<f64>::zeros(n, n);
    let mut g = DVector::<f64>::zeros(n);
    let mut row = vec![0.0; n];
    for (v, ((&u, &m), &d)) in unit.iter().zip(mu).zip(data).enumerate() {
        for (j, c) in cols.iter().enumerate() {
            row[j] = c[v];
        }
        if let Some(i) = layout.scale {
            row[i] = u;
        }
        if let Some(i) = layout.background {
            row[i] = 1.0;
        }
        let w = match objective {
            Objective::GaussianLsq => 1.0,
            Objective::PoissonNll => 1.0 / m.max(POISSON_FLOOR),
        };
        let r = m - d;
        for a in 0..n {
            let wa = w * row[a];
            if wa == 0.0 {
                continue;
            }
            g[a] += wa * r;
            for b in a..n {
                jtj[(a, b)] += wa * row[b];
            }
        }
    }
    for a in 0..n {
        for b in 0..a {
            jtj[(a, b)] = jtj[(b, a)];
        }
    }
    Ok((jtj, g))
}

/// Objective gradient with respect to the free parameters selected by
/// `nuisance` (order: `modes`, then enabled x/y/z shifts, scale, background).
/// Model derivatives use central differences with step [`FD_STEP_UM`].
pub fn objective_gradient(
    prop: &Propagator,
    stack: &PsfStack,
    params: &FitParams,
    modes: &[u32],
    nuisance: Nuisance,
    objective: Objective,
) -> Result<Vec<f64>> {
    check_inputs(prop, stack)?;
    let layout = Layout::new(modes, nuisance);
    let zs = &stack.z_offsets_um;
    let data: Vec<f64> = stack.data.iter().copied().collect();
    let unit = model(prop, zs, &params.amplitudes, params.shifts)?;
    let mu: Vec<f64> = unit.iter().map(|v| params.scale * v + params.background).collect();
    let (_, g) = normal_equations(prop, zs, &data, &layout, params, &unit, &mu, objective, true)?;
    Ok(g.iter().map(|v| 2.0 * v).collect())
}

/// Fit Zernike amplitudes and nuisance parameters to a stack.
pub fn fit_retrieve(stack: &PsfStack, config: &MicroscopeConfig, opts: &FitOptions) -> Result<FitResult> {
    let prop = Propagator::new(config)?;
    fit_retrieve_with(&prop, stack, opts)
}

/// [`fit_retrieve`] with a prebuilt propagator.
pub fn fit_retrieve_with(prop: &Propagator, stack: &PsfStack, opts: &FitOptions) -> Result<FitResult> {
    opts.validate()?;
    check_inputs(prop, stack)?;
    let zs = &stack.z_offsets_um;
    let data_owned: Vec<f64> = stack.data.iter().copied().collect();
    let data = data_owned.as_slice();
    let layout = Layout::new(&opts.modes, opts.fit_nuisance);

    let mut start = AmplitudeVector::zeros(opts.modes.iter().copied());
    for &m in &opts.modes {
        start.set(m, opts.init.get(m))?;
    }
    let mut params = FitParams::new(start);
    let mut unit = model(prop, zs, &params.amplitudes, params.shifts)?;
    let (s0, b0) = linear_nuisance(
        unit.as_slice().expect("standard layout"),
        data,
        opts.fit_nuisance,
        params.scale,
        params.background,
    );
    params.scale = s0;
    params.background = b0;

    let eval = |p: &FitParams, unit: &Array3<f64>| -> (Vec<f64>, f64) {
        let mu: Vec<f64> = unit.iter().map(|v| p.scale * v + p.background).collect();
        let f = objective_value(opts.objective, &mu, data);
        (mu, f)
    };
    let (mut mu, mut f) = eval(&params, &unit);
    let mut trace = vec![f];
    if !f.is_finite() {
        return Err(Error::Diverged { trace });
    }

    let mut lambda = 1e-3;
    let mut converged = false;
    for _ in 0..opts.iterations {
        let x = layout.pack(&params);
        let (jtj, g) = normal_equations(prop, zs, data, &layout, &params, &unit, &mu, opts.objective, false)?;
        let n = layout.len;
        if g.iter().all(|&v| v == 0.0) {
            converged = true;
            trace.push(f);
            break;
        }

        let diag_floor = 1e-12 * (0..n).map(|i| jtj[(i, i)]).fold(0.0, f64::max);
        let mut accepted = false;
        let mut step_norm = f64::INFINITY;
        for _ in 0..10 {
            let mut a = jtj.clone();
            for i in 0..n {
                a[(i, i)] += lambda * jtj[(i, i)].max(diag_floor);
            }
            let Some(delta) = a.cholesky().map(|c| c.solve(&(-&g))) else {
                lambda *= 10.0;
                continue;
            };
            step_norm = delta.norm();
            let trial = layout.unpack(&(&x + &delta), &params);
            let trial_unit = model(prop, zs, &trial.amplitudes, trial.shifts)?;
            let (trial_mu, trial_f) = eval(&trial, &trial_unit);
            if trial_f.is_finite() && trial_f <= f {
                params = trial;
                unit = trial_unit;
                mu = trial_mu;
                f = trial_f;
                lambda = (lambda / 3.0).max(1e-9);
                accepted = true;
                break;
            }
            if trial_f.is_nan() {
                trace.push(trial_f);
                return Err(Error::Diverged { trace });
            }
            lambda *= 4.0;
            if step_norm < opts.step_tolerance {
                break;
            }
        }
        trace.push(f);
        if step_norm < opts.step_tolerance || !accepted && lambda > 1e12 {
            converged = step_norm < opts.step_tolerance;
            break;
        }
    }

    Ok(FitResult {
        amplitudes: params.amplitudes,
        scale: params.scale,
        background: params.background,
        shifts: params.shifts,
        objective_trace: trace,
        converged,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::optics::{synth_psf, Preset};

    fn ps() -> Propagator {
        Propagator::new(&Preset::point_scanning().microscope).unwrap()
    }

    fn others_below(a: &AmplitudeVector, skip: u32, tol: f64) {
        for (m, v) in a.iter().filter(|&(m, _)| m != skip) {
            assert!(v.abs() < tol, "a{m} = {v}");
        }
    }

    #[test]
    fn recovers_coma_from_zero() {
        let prop = ps();
        let truth = AmplitudeVector::from_pairs([(7, 0.06)]).unwrap();
        let st = prop.synth(&truth).unwrap();
        let r = fit_retrieve_with(&prop, &st, &FitOptions::default()).unwrap();
        assert!((r.amplitudes.get(7) - 0.06).abs() < 0.002);
        others_below(&r.amplitudes, 7, 0.005);
        assert!(r.converged);
        // accepted steps never increase the objective
        assert!(r.objective_trace.windows(2).all(|w| w[1] <= w[0]));
    }

    #[test]
    fn identifies_scale_and_background() {
        let prop = ps();
        let mut st = prop.synth(&AmplitudeVector::default_modes()).unwrap();
        st.data.mapv_inplace(|v| 2.5 * v + 0.01);
        let r = fit_retrieve_with(&prop, &st, &FitOptions::default()).unwrap();
        assert!((r.scale - 2.5).abs() < 1e-3, "{}", r.scale);
        assert!((r.background - 0.01).abs() < 1e-4, "{}", r.background);
        others_below(&r.amplitudes, 0, 0.005);
    }

    #[test]
    fn stays_at_truth() {
        let prop = ps();
        let truth = AmplitudeVector::from_pairs([(5, 0.03), (8, -0.04), (12, 0.02)]).unwrap();
        let st = prop.synth(&truth).unwrap();
        let opts = FitOptions {
            init: truth.clone(),
            ..Default::default()
        };
        let r = fit_retrieve_with(&prop, &st, &opts).unwrap();
        for m in 5..=15 {
            assert!((r.amplitudes.get(m) - truth.get(m)).abs() < 1e-3);
        }
        let p = FitParams::new(truth.clone());
        let f = objective_eval_with(&prop, &st, &p, Objective::GaussianLsq).unwrap();
        assert!(f.abs() < 1e-10);
    }

    #[test]
    fn objective_grows_away_from_truth() {
        let c = Preset::point_scanning().microscope;
        let st = synth_psf(&c, &AmplitudeVector::default_modes()).unwrap();
        let at = |a: f64| {
            let p = FitParams::new(AmplitudeVector::from_pairs([(5, a)]).unwrap());
            objective_eval(&st, &c, &p, Objective::GaussianLsq).unwrap()
        };
        assert!(at(0.05) > at(0.0));
    }

    #[test]
    fn gradient_matches_central_differences() {
        let prop = ps();
        let st = prop.synth(&AmplitudeVector::from_pairs([(6, 0.04), (9, -0.03)]).unwrap()).unwrap();
        let mut base = FitParams::new(AmplitudeVector::from_pairs([(6, 0.01), (9, 0.02), (11, 0.01)]).unwrap());
        base.scale = 0.9;
        base.background = 0.002;
        base.shifts = (0.01, -0.02, 0.03);
        let modes: Vec<u32> = vec![6, 9, 11];
        for objective in [Objective::GaussianLsq, Objective::PoissonNll] {
            let g = objective_gradient(&prop, &st, &base, &modes, Nuisance::all(), objective).unwrap();
            let h = 1e-4;
            let f = |p: &FitParams| objective_eval_with(&prop, &st, p, objective).unwrap();
            let layout = Layout::new(&modes, Nuisance::all());
            let x = layout.pack(&base);
            for j in 0..layout.len {
                let (mut xp, mut xm) = (x.clone(), x.clone());
                xp[j] += h;
                xm[j] -= h;
                let cd = (f(&layout.unpack(&xp, &base)) - f(&layout.unpack(&xm, &base))) / (2.0 * h);
                let rel = (g[j] - cd).abs() / cd.abs().max(1e-12);
                assert!(rel < 1e-3, "{objective:?} param {j}: {} vs {cd} ({rel:e})", g[j]);
            }
        }
    }

    #[test]
    fn lateral_shift_is_equivariant() {
        let prop = ps();
        let truth = AmplitudeVector::from_pairs([(7, 0.03), (11, -0.02)]).unwrap();
        let st = prop.synth(&truth).unwrap();
        let mut moved = st.clone();
        for mut plane in moved.data.outer_iter_mut() {
            for mut row in plane.outer_iter_mut() {
                let v: Vec<f64> = row.iter().copied().collect();
                let n = v.len();
                for (i, x) in row.iter_mut().enumerate() {
                    *x = v[(i + n - 1) % n];
                }
            }
        }
        let opts = FitOptions::default();
        let a = fit_retrieve_with(&prop, &st, &opts).unwrap();
        let b = fit_retrieve_with(&prop, &moved, &opts).unwrap();
        let dx = prop.config().dx_um;
        assert!(((b.shifts.0 - a.shifts.0) - dx).abs() < 0.1 * dx, "{:?} {:?}", a.shifts, b.shifts);
        assert!((b.shifts.1 - a.shifts.1).abs() < 0.1 * dx);
        for m in 5..=15 {
            assert!((a.amplitudes.get(m) - b.amplitudes.get(m)).abs() < 0.005);
        }
    }

    #[test]
    fn deterministic() {
        let prop = ps();
        let st = prop.synth(&AmplitudeVector::from_pairs([(10, 0.05)]).unwrap()).unwrap();
        let opts = FitOptions {
            iterations: 3,
            objective: Objective::PoissonNll,
            ..Default::default()
        };
        let a = fit_retrieve_with(&prop, &st, &opts).unwrap();
        let b = fit_retrieve_with(&prop, &st, &opts).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn rejects_bad_inputs() {
        let prop = ps();
        let st = prop.synth(&AmplitudeVector::default_modes()).unwrap();
        let zero = FitOptions {
            iterations: 0,
            ..Default::default()
        };
        assert!(matches!(fit_retrieve_with(&prop, &st, &zero), Err(Error::InvalidArgument(_))));
        let tol = FitOptions {
            step_tolerance: 0.0,
            ..Default::default()
        };
        assert!(fit_retrieve_with(&prop, &st, &tol).is_err());
        let small = crate::optics::crop_center(&st, 16, 16, 32).unwrap();
        assert!(matches!(
            fit_retrieve_with(&prop, &small, &FitOptions::default()),
            Err(Error::DimensionMismatch(_))
        ));
        let mut bad = st.clone();
        bad.data[[0, 0, 0]] = f64::NAN;
        assert!(fit_retrieve_with(&prop, &bad, &FitOptions::default()).is_err());
    }

    #[test]
    fn options_round_trip_json() {
        let o = FitOptions::default();
        let s = serde_json::to_string(&o).unwrap();
        assert_eq!(serde_json::from_str::<FitOptions>(&s).unwrap(), o);
        let lsq: Objective = serde_json::from_str("\"lsq\"").unwrap();
        assert_eq!(lsq, Objective::GaussianLsq);
    }
}
