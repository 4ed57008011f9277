//! Noll-indexed Zernike polynomials on sampled pupils.
//!
//! Modes are Noll-normalized: the mean of `Z_j^2` over the unit disk is one,
//! so an amplitude in µm is directly the RMS optical path it contributes.
//!
//! | j | 1 | 2 | 3 | 4 | 5  | 6 | 7  | 8 | 9  | 10 | 11 | 12 | 13 | 14 | 15 |
//! |---|---|---|---|---|----|---|----|---|----|----|----|----|----|----|----|
//! | n | 0 | 1 | 1 | 2 | 2  | 2 | 3  | 3 | 3  | 3  | 4  | 4  | 4  | 4  | 4  |
//! | m | 0 | 1 |-1 | 0 | -2 | 2 | -1 | 1 | -3 | 3  | 0  | 2  | -2 | 4  | -4 |
//!
//! Negative `m` selects `sin(|m|θ)`, positive `m` selects `cos(mθ)`.

use std::collections::BTreeMap;
use std::fmt;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};

/// Highest Noll index the library evaluates.
pub const MAX_NOLL: u32 = 36;

/// Default retrieval mode set: Noll 5 through 15.
pub const DEFAULT_MODES: std::ops::RangeInclusive<u32> = 5..=15;

/// Map a Noll index to its `(n, m)` pair.
pub fn noll_to_nm(noll: u32) -> Result<(u32, i32)> {
    if noll == 0 {
        return Err(invalid("Noll index must be >= 1"));
    }
    let mut n = 0u32;
    while (n + 1) * (n + 2) / 2 < noll {
        n += 1;
    }
    let k = noll - n * (n + 1) / 2 - 1;
    let m_abs = if n % 2 == 0 {
        2 * ((k + 1) / 2)
    } else {
        2 * (k / 2) + 1
    };
    let m = if m_abs != 0 && noll % 2 == 1 {
        -(m_abs as i32)
    } else {
        m_abs as i32
    };
    Ok((n, m))
}

/// Inverse of [`noll_to_nm`].
pub fn nm_to_noll(n: u32, m: i32) -> Result<u32> {
    let m_abs = m.unsigned_abs();
    if m_abs > n || (n - m_abs) % 2 != 0 {
        return Err(invalid(format!("({n}, {m}) is not a valid Zernike pair")));
    }
    let first = n * (n + 1) / 2 + 1;
    (first..first + n + 1)
        .find(|&j| noll_to_nm(j).map(|nm| nm == (n, m)).unwrap_or(false))
        .ok_or_else(|| invalid(format!("no Noll index for ({n}, {m})")))
}

/// A validated Noll index together with its radial and azimuthal orders.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct ZernikeIndex {
    noll: u32,
    n: u32,
    m: i32,
}

impl ZernikeIndex {
    pub fn new(noll: u32) -> Result<Self> {
        if noll > MAX_NOLL {
            return Err(invalid(format!("Noll index {noll} exceeds {MAX_NOLL}")));
        }
        let (n, m) = noll_to_nm(noll)?;
        Ok(Self { noll, n, m })
    }

    pub fn noll(&self) -> u32 {
        self.noll
    }

    pub fn n(&self) -> u32 {
        self.n
    }

    pub fn m(&self) -> i32 {
        self.m
    }

    /// True when the mode is invariant under `k -> -k` (even azimuthal order).
    pub fn is_centrosymmetric(&self) -> bool {
        self.m % 2 == 0
    }

    /// Conventional optics name, for the low orders.
    pub fn name(&self) -> Option<&'static str> {
        const NAMES: [&str; 15] = [
            "piston",
            "tip",
            "tilt",
            "defocus",
            "oblique astigmatism",
            "vertical astigmatism",
            "vertical coma",
            "horizontal coma",
            "vertical trefoil",
            "oblique trefoil",
            "primary spherical",
            "vertical secondary astigmatism",
            "oblique secondary astigmatism",
            "vertical quadrafoil",
            "oblique quadrafoil",
        ];
        NAMES.get(self.noll as usize - 1).copied()
    }

    /// Normalized Zernike value at polar pupil coordinates.
    pub fn value(&self, rho: f64, theta: f64) -> f64 {
        let m_abs = self.m.unsigned_abs();
        let r = radial(self.n, m_abs, rho);
        if self.m == 0 {
            ((self.n + 1) as f64).sqrt() * r
        } else {
            let norm = (2.0 * (self.n + 1) as f64).sqrt();
            let ang = m_abs as f64 * theta;
            if self.m > 0 {
                norm * r * ang.cos()
            } else {
                norm * r * ang.sin()
            }
        }
    }
}

impl fmt::Display for ZernikeIndex {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Z{}", self.noll)
    }
}

/// Parse a list of Noll indices.
pub fn indices(nolls: impl IntoIterator<Item = u32>) -> Result<Vec<ZernikeIndex>> {
    nolls.into_iter().map(ZernikeIndex::new).collect()
}

/// Fraction of the pixel centered at `(x, y)` with side `d` that lies inside
/// the unit disk.
fn disk_coverage(x: f64, y: f64, d: f64) -> f64 {
    const SUB: usize = 16;
    let h = d / 2.0;
    let near = (x.abs() - h).max(0.0).hypot((y.abs() - h).max(0.0));
    let far = (x.abs() + h).hypot(y.abs() + h);
    if far < 1.0 {
        return 1.0;
    }
    if near >= 1.0 {
        return 0.0;
    }
    let step = d / SUB as f64;
    let mut inside = 0;
    for a in 0..SUB {
        let sy = y - h + (a as f64 + 0.5) * step;
        for b in 0..SUB {
            let sx = x - h + (b as f64 + 0.5) * step;
            if sx.hypot(sy) < 1.0 {
                inside += 1;
            }
        }
    }
    inside as f64 / (SUB * SUB) as f64
}

fn factorial(k: u32) -> f64 {
    (1..=k).map(f64::from).product()
}

fn radial(n: u32, m_abs: u32, rho: f64) -> f64 {
    let half_diff = (n - m_abs) / 2;
    let half_sum = (n + m_abs) / 2;
    (0..=half_diff)
        .map(|k| {
            let sign = if k % 2 == 0 { 1.0 } else { -1.0 };
            let c = sign * factorial(n - k)
                / (factorial(k) * factorial(half_sum - k) * factorial(half_diff - k));
            c * rho.powi((n - 2 * k) as i32)
        })
        .sum()
}

/// Sampled pupil: a rectangular frequency grid with a circular support.
///
/// Pupil grids from [`PupilGrid::new`] follow the FFT layout: pixel
/// `(row, col)` sits at `k = (col - nx/2) * dkx, (row - ny/2) * dky`, the
/// support is the strict disk `|k| < cutoff` and every support pixel has
/// weight one. `rho = |k| / cutoff`.
///
/// [`PupilGrid::unit_disk`] grids are for measuring wavefronts instead: pixel
/// centered, and rim pixels carry the fraction of their area inside the disk,
/// so disk means converge much faster with resolution.
#[derive(Clone, Debug)]
pub struct PupilGrid {
    nx: usize,
    ny: usize,
    dkx: f64,
    dky: f64,
    cutoff: f64,
    /// Pixel coordinate of `k = 0`.
    origin: (f64, f64),
    mask: Vec<bool>,
    rho: Vec<f64>,
    theta: Vec<f64>,
    masked: Vec<usize>,
    /// Quadrature weight of each support pixel, aligned with `masked`.
    weights: Vec<f64>,
    weight_sum: f64,
}

impl PupilGrid {
    pub fn new(nx: usize, ny: usize, dkx: f64, dky: f64, cutoff: f64) -> Result<Self> {
        if nx == 0 || ny == 0 {
            return Err(invalid("pupil grid must be non-empty"));
        }
        if !(dkx > 0.0 && dky > 0.0 && cutoff > 0.0) {
            return Err(invalid("pupil pitch and cutoff must be positive"));
        }
        let origin = ((nx / 2) as f64, (ny / 2) as f64);
        Ok(Self::build(nx, ny, dkx, dky, cutoff, origin, |_, _, r| {
            if r < 1.0 {
                1.0
            } else {
                0.0
            }
        }))
    }

    /// An `n x n` pixel-centered grid over the unit disk with area weights
    /// on the rim.
    pub fn unit_disk(n: usize) -> Self {
        let n = n.max(1);
        let dk = 2.0 / n as f64;
        let c = n as f64 / 2.0 - 0.5;
        Self::build(n, n, dk, dk, 1.0, (c, c), |kx, ky, _| disk_coverage(kx, ky, dk))
    }

    fn build(
        nx: usize,
        ny: usize,
        dkx: f64,
        dky: f64,
        cutoff: f64,
        origin: (f64, f64),
        weight: impl Fn(f64, f64, f64) -> f64,
    ) -> Self {
        let len = nx * ny;
        let mut mask = vec![false; len];
        let mut rho = vec![0.0; len];
        let mut theta = vec![0.0; len];
        let mut masked = Vec::new();
        let mut weights = Vec::new();
        for row in 0..ny {
            let ky = (row as f64 - origin.1) * dky;
            for col in 0..nx {
                let kx = (col as f64 - origin.0) * dkx;
                let i = row * nx + col;
                let r = kx.hypot(ky) / cutoff;
                rho[i] = r;
                theta[i] = ky.atan2(kx);
                let w = weight(kx / cutoff, ky / cutoff, r);
                if w > 0.0 {
                    mask[i] = true;
                    masked.push(i);
                    weights.push(w);
                }
            }
        }
        let weight_sum = weights.iter().sum();
        Self {
            nx,
            ny,
            dkx,
            dky,
            cutoff,
            origin,
            mask,
            rho,
            theta,
            masked,
            weights,
            weight_sum,
        }
    }

    pub fn nx(&self) -> usize {
        self.nx
    }

    pub fn ny(&self) -> usize {
        self.ny
    }

    pub fn len(&self) -> usize {
        self.nx * self.ny
    }

    pub fn is_empty(&self) -> bool {
        self.masked.is_empty()
    }

    pub fn dkx(&self) -> f64 {
        self.dkx
    }

    pub fn dky(&self) -> f64 {
        self.dky
    }

    pub fn cutoff(&self) -> f64 {
        self.cutoff
    }

    pub fn mask(&self) -> &[bool] {
        &self.mask
    }

    pub fn rho(&self) -> &[f64] {
        &self.rho
    }

    pub fn theta(&self) -> &[f64] {
        &self.theta
    }

    /// Flat indices of pixels inside the support, in row-major order.
    pub fn masked_indices(&self) -> &[usize] {
        &self.masked
    }

    /// Number of pixels inside the support.
    pub fn support_len(&self) -> usize {
        self.masked.len()
    }

    /// Quadrature weights of the support pixels, aligned with
    /// [`masked_indices`](Self::masked_indices).
    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// Weighted mean of `f(pixel index)` over the support.
    pub fn disk_mean(&self, f: impl Fn(usize) -> f64) -> f64 {
        self.masked
            .iter()
            .zip(&self.weights)
            .map(|(&i, &w)| w * f(i))
            .sum::<f64>()
            / self.weight_sum
    }

    /// Spatial frequency `(kx, ky)` of a flat pixel index, in cycles per unit length.
    pub fn k_at(&self, index: usize) -> (f64, f64) {
        let row = index / self.nx;
        let col = index % self.nx;
        (
            (col as f64 - self.origin.0) * self.dkx,
            (row as f64 - self.origin.1) * self.dky,
        )
    }

    fn check_shape(&self, nx: usize, ny: usize) -> Result<()> {
        if nx != self.nx || ny != self.ny {
            return Err(Error::GridMismatch(format!(
                "field is {nx}x{ny}, grid is {}x{}",
                self.nx, self.ny
            )));
        }
        Ok(())
    }
}

/// A real field on a pupil grid; wavefronts are in µm, zero outside the support.
#[derive(Clone, Debug, PartialEq)]
pub struct Wavefront {
    nx: usize,
    ny: usize,
    values: Vec<f64>,
}

impl Wavefront {
    pub fn zeros(grid: &PupilGrid) -> Self {
        Self {
            nx: grid.nx,
            ny: grid.ny,
            values: vec![0.0; grid.len()],
        }
    }

    /// Build from row-major values; entries outside the support are zeroed.
    pub fn from_values(grid: &PupilGrid, mut values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::GridMismatch(format!(
                "{} values for a grid of {} pixels",
                values.len(),
                grid.len()
            )));
        }
        for (v, &inside) in values.iter_mut().zip(&grid.mask) {
            if !inside {
                *v = 0.0;
            } else if !v.is_finite() {
                return Err(invalid("wavefront must be finite inside the support"));
            }
        }
        Ok(Self {
            nx: grid.nx,
            ny: grid.ny,
            values,
        })
    }

    pub fn nx(&self) -> usize {
        self.nx
    }

    pub fn ny(&self) -> usize {
        self.ny
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.values[row * self.nx + col]
    }

    /// Disk RMS of the field.
    pub fn rms(&self, grid: &PupilGrid) -> Result<f64> {
        wavefront_rmse(self, &Wavefront::zeros(grid), grid)
    }
}

/// Zernike amplitudes in µm keyed by Noll index.
///
/// Serializes as a JSON object with string keys, e.g. `{"5": 0.012}`.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "BTreeMap<u32, f64>", into = "BTreeMap<u32, f64>")]
pub struct AmplitudeVector {
    entries: BTreeMap<u32, f64>,
}

impl TryFrom<BTreeMap<u32, f64>> for AmplitudeVector {
    type Error = Error;

    fn try_from(entries: BTreeMap<u32, f64>) -> Result<Self> {
        for (&noll, &a) in &entries {
            ZernikeIndex::new(noll)?;
            if !a.is_finite() {
                return Err(invalid(format!("amplitude for Noll {noll} is not finite")));
            }
        }
        Ok(Self { entries })
    }
}

impl From<AmplitudeVector> for BTreeMap<u32, f64> {
    fn from(v: AmplitudeVector) -> Self {
        v.entries
    }
}

impl AmplitudeVector {
    pub fn new() -> Self {
        Self::default()
    }

    /// All-zero vector over the given modes.
    pub fn zeros(modes: impl IntoIterator<Item = u32>) -> Self {
        Self {
            entries: modes.into_iter().map(|j| (j, 0.0)).collect(),
        }
    }

    /// All-zero vector over Noll 5..=15.
    pub fn default_modes() -> Self {
        Self::zeros(DEFAULT_MODES)
    }

    pub fn from_pairs(pairs: impl IntoIterator<Item = (u32, f64)>) -> Result<Self> {
        Self::try_from(pairs.into_iter().collect::<BTreeMap<_, _>>())
    }

    /// Build from values aligned with `modes`.
    pub fn from_dense(modes: &[u32], values: &[f64]) -> Result<Self> {
        if modes.len() != values.len() {
            return Err(invalid("mode list and value list differ in length"));
        }
        Self::from_pairs(modes.iter().copied().zip(values.iter().copied()))
    }

    /// Amplitude of a mode, zero when the mode is absent.
    pub fn get(&self, noll: u32) -> f64 {
        self.entries.get(&noll).copied().unwrap_or(0.0)
    }

    pub fn set(&mut self, noll: u32, amplitude: f64) -> Result<()> {
        ZernikeIndex::new(noll)?;
        if !amplitude.is_finite() {
            return Err(invalid("amplitude must be finite"));
        }
        self.entries.insert(noll, amplitude);
        Ok(())
    }

    /// Included Noll indices, ascending.
    pub fn modes(&self) -> Vec<u32> {
        self.entries.keys().copied().collect()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (u32, f64)> + '_ {
        self.entries.iter().map(|(&k, &v)| (k, v))
    }

    /// Values for `modes`, zero where absent.
    pub fn to_dense(&self, modes: &[u32]) -> Vec<f64> {
        modes.iter().map(|&j| self.get(j)).collect()
    }

    /// Keep only the listed modes (absent ones become zero).
    pub fn restrict(&self, modes: &[u32]) -> Self {
        Self {
            entries: modes.iter().map(|&j| (j, self.get(j))).collect(),
        }
    }

    pub fn scaled(&self, factor: f64) -> Self {
        Self {
            entries: self.entries.iter().map(|(&k, &v)| (k, v * factor)).collect(),
        }
    }

    /// Mode-wise `self - other` over the union of both mode sets.
    pub fn sub(&self, other: &Self) -> Self {
        let mut entries = self.entries.clone();
        for (&k, &v) in &other.entries {
            *entries.entry(k).or_insert(0.0) -= v;
        }
        Self { entries }
    }

    /// Euclidean norm of the amplitudes.
    pub fn norm(&self) -> f64 {
        self.entries.values().map(|v| v * v).sum::<f64>().sqrt()
    }

    /// CSV with header `noll,amplitude_um`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("noll,amplitude_um\n");
        for (k, v) in self.iter() {
            out.push_str(&format!("{k},{v}\n"));
        }
        out
    }

    pub fn from_csv(text: &str) -> Result<Self> {
        let mut lines = text.lines().filter(|l| !l.trim().is_empty());
        match lines.next().map(str::trim) {
            Some("noll,amplitude_um") => {}
            other => {
                return Err(Error::Format(format!(
                    "expected header `noll,amplitude_um`, found {other:?}"
                )))
            }
        }
        let mut entries = BTreeMap::new();
        for line in lines {
            let (k, v) = line
                .split_once(',')
                .ok_or_else(|| Error::Format(format!("malformed row `{line}`")))?;
            let k: u32 = k
                .trim()
                .parse()
                .map_err(|_| Error::Format(format!("bad Noll index `{k}`")))?;
            let v: f64 = v
                .trim()
                .parse()
                .map_err(|_| Error::Format(format!("bad amplitude `{v}`")))?;
            entries.insert(k, v);
        }
        Self::try_from(entries)
    }
}

/// Sample a single mode on a grid; zero outside the support.
pub fn zernike_eval(index: ZernikeIndex, grid: &PupilGrid) -> Wavefront {
    let mut values = vec![0.0; grid.len()];
    for &i in &grid.masked {
        values[i] = index.value(grid.rho[i], grid.theta[i]);
    }
    Wavefront {
        nx: grid.nx,
        ny: grid.ny,
        values,
    }
}

/// `sum_i a_i Z_i` on the grid, in µm.
pub fn compose_wavefront(amps: &AmplitudeVector, grid: &PupilGrid) -> Result<Wavefront> {
    let mut values = vec![0.0; grid.len()];
    for (noll, a) in amps.iter() {
        let index = ZernikeIndex::new(noll)?;
        if a == 0.0 {
            continue;
        }
        for &i in &grid.masked {
            values[i] += a * index.value(grid.rho[i], grid.theta[i]);
        }
    }
    Ok(Wavefront {
        nx: grid.nx,
        ny: grid.ny,
        values,
    })
}

/// Least-squares projection of a wavefront onto the sampled modes.
pub fn decompose_wavefront(
    w: &Wavefront,
    grid: &PupilGrid,
    modes: &[ZernikeIndex],
) -> Result<AmplitudeVector> {
    grid.check_shape(w.nx, w.ny)?;
    let basis = ZernikeBasis::new(grid, modes)?;
    let samples: Vec<f64> = grid.masked.iter().map(|&i| w.values[i]).collect();
    let coeffs = basis.project(&samples)?;
    AmplitudeVector::from_dense(&basis.nolls(), &coeffs)
}

/// Root-mean-square difference over the support, using the grid weights.
pub fn wavefront_rmse(w1: &Wavefront, w2: &Wavefront, grid: &PupilGrid) -> Result<f64> {
    grid.check_shape(w1.nx, w1.ny)?;
    grid.check_shape(w2.nx, w2.ny)?;
    if grid.masked.is_empty() {
        return Err(Error::DegenerateInput("pupil support is empty".into()));
    }
    Ok(grid
        .disk_mean(|i| {
            let d = w1.values[i] - w2.values[i];
            d * d
        })
        .sqrt())
}

/// A set of modes pre-sampled on the support pixels of one grid, with the
/// least-squares normal equations factored once.
#[derive(Clone, Debug)]
pub struct ZernikeBasis {
    modes: Vec<ZernikeIndex>,
    /// `values[mode][support pixel]`
    values: Vec<Vec<f64>>,
    weights: Vec<f64>,
    gram_lu: nalgebra::linalg::FullPivLU<f64, nalgebra::Dyn, nalgebra::Dyn>,
}

/// Condition number above which a projection is declared ill-posed.
pub const MAX_CONDITION: f64 = 1e8;

impl ZernikeBasis {
    pub fn new(grid: &PupilGrid, modes: &[ZernikeIndex]) -> Result<Self> {
        if modes.is_empty() {
            return Err(invalid("mode list is empty"));
        }
        let npix = grid.masked.len();
        if npix < modes.len() {
            return Err(Error::IllPosed(format!(
                "{npix} support pixels cannot resolve {} modes",
                modes.len()
            )));
        }
        let values: Vec<Vec<f64>> = modes
            .iter()
            .map(|z| {
                grid.masked
                    .iter()
                    .map(|&i| z.value(grid.rho[i], grid.theta[i]))
                    .collect()
            })
            .collect();
        let nm = modes.len();
        let weights = grid.weights.clone();
        let gram = DMatrix::from_fn(nm, nm, |r, c| {
            values[r]
                .iter()
                .zip(&values[c])
                .zip(&weights)
                .map(|((a, b), w)| w * a * b)
                .sum::<f64>()
        });
        let eig = gram.clone().symmetric_eigenvalues();
        let (lo, hi) = eig
            .iter()
            .fold((f64::INFINITY, 0.0f64), |(lo, hi), &e| (lo.min(e), hi.max(e)));
        if !(lo > 0.0) || hi / lo > MAX_CONDITION {
            return Err(Error::IllPosed(format!(
                "mode Gram matrix condition {:.3e} exceeds {MAX_CONDITION:e}",
                hi / lo.max(0.0)
            )));
        }
        Ok(Self {
            modes: modes.to_vec(),
            values,
            weights,
            gram_lu: gram.full_piv_lu(),
        })
    }

    pub fn modes(&self) -> &[ZernikeIndex] {
        &self.modes
    }

    pub fn nolls(&self) -> Vec<u32> {
        self.modes.iter().map(|z| z.noll()).collect()
    }

    /// Sampled values of one mode on the support pixels.
    pub fn mode_values(&self, k: usize) -> &[f64] {
        &self.values[k]
    }

    /// `sum_k coeffs[k] * Z_k` on the support pixels.
    pub fn synthesize(&self, coeffs: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.values[0].len()];
        for (c, v) in coeffs.iter().zip(&self.values) {
            if *c != 0.0 {
                for (o, z) in out.iter_mut().zip(v) {
                    *o += c * z;
                }
            }
        }
        out
    }

    /// Weighted least-squares coefficients for support-pixel samples.
    pub fn project(&self, samples: &[f64]) -> Result<Vec<f64>> {
        if samples.len() != self.values[0].len() {
            return Err(Error::GridMismatch("sample count does not match basis".into()));
        }
        let rhs = DVector::from_iterator(
            self.modes.len(),
            self.values
                .iter()
                .map(|v| {
                    v.iter()
                        .zip(samples)
                        .zip(&self.weights)
                        .map(|((a, b), w)| w * a * b)
                        .sum::<f64>()
                }),
        );
        let sol = self
            .gram_lu
            .solve(&rhs)
            .ok_or_else(|| Error::IllPosed("singular mode Gram matrix".into()))?;
        Ok(sol.iter().copied().collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn noll_named_modes() {
        assert_eq!(noll_to_nm(1).unwrap(), (0, 0));
        assert_eq!(noll_to_nm(4).unwrap(), (2, 0));
        assert_eq!(noll_to_nm(5).unwrap(), (2, -2));
        assert_eq!(noll_to_nm(7).unwrap(), (3, -1));
        assert_eq!(noll_to_nm(11).unwrap(), (4, 0));
        assert_eq!(noll_to_nm(15).unwrap(), (4, -4));
        assert!(noll_to_nm(0).is_err());
        assert_eq!(ZernikeIndex::new(5).unwrap().name(), Some("oblique astigmatism"));
        assert_eq!(ZernikeIndex::new(7).unwrap().name(), Some("vertical coma"));
        assert_eq!(ZernikeIndex::new(15).unwrap().name(), Some("oblique quadrafoil"));
    }

    #[test]
    fn noll_bijective() {
        for j in 1..=MAX_NOLL {
            let (n, m) = noll_to_nm(j).unwrap();
            assert!(n >= m.unsigned_abs());
            assert_eq!((n - m.unsigned_abs()) % 2, 0);
            assert_eq!(nm_to_noll(n, m).unwrap(), j);
        }
        assert!(nm_to_noll(2, 1).is_err());
        assert!(ZernikeIndex::new(MAX_NOLL + 1).is_err());
    }

    #[test]
    fn piston_and_defocus_values() {
        let grid = PupilGrid::unit_disk(64);
        let piston = zernike_eval(ZernikeIndex::new(1).unwrap(), &grid);
        for (i, &inside) in grid.mask().iter().enumerate() {
            assert_eq!(piston.values()[i], if inside { 1.0 } else { 0.0 });
        }
        // sqrt(3) * (2 rho^2 - 1) at the origin
        let defocus = ZernikeIndex::new(4).unwrap();
        assert!((defocus.value(0.0, 0.0) + 3f64.sqrt()).abs() < 1e-12);
        // origin pixel of an FFT-layout grid is at (32, 32)
        let fft_grid = PupilGrid::new(64, 64, 1.0, 1.0, 20.0).unwrap();
        let w = zernike_eval(defocus, &fft_grid);
        assert!((w.get(32, 32) + 3f64.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn astigmatism_pair_is_orthogonal() {
        let grid = PupilGrid::unit_disk(256);
        let z5 = zernike_eval(ZernikeIndex::new(5).unwrap(), &grid);
        let z6 = zernike_eval(ZernikeIndex::new(6).unwrap(), &grid);
        let ip = grid.disk_mean(|i| z5.values()[i] * z6.values()[i]);
        assert!(ip.abs() < 1e-4, "{ip}");
        let norm = grid.disk_mean(|i| z5.values()[i].powi(2));
        assert!((norm - 1.0).abs() < 1e-3, "{norm}");
    }

    #[test]
    fn single_mode_rms_equals_amplitude() {
        let grid = PupilGrid::unit_disk(256);
        let w = compose_wavefront(&AmplitudeVector::from_pairs([(5, 0.1)]).unwrap(), &grid).unwrap();
        assert!((w.rms(&grid).unwrap() - 0.1).abs() < 1e-3);
        let zero = compose_wavefront(&AmplitudeVector::default_modes(), &grid).unwrap();
        assert!(zero.values().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn compose_is_additive() {
        let grid = PupilGrid::unit_disk(64);
        let a = AmplitudeVector::from_pairs([(5, 0.05), (7, -0.03)]).unwrap();
        let b = AmplitudeVector::from_pairs([(5, 0.05)]).unwrap();
        let c = AmplitudeVector::from_pairs([(7, -0.03)]).unwrap();
        let wa = compose_wavefront(&a, &grid).unwrap();
        let wb = compose_wavefront(&b, &grid).unwrap();
        let wc = compose_wavefront(&c, &grid).unwrap();
        for i in 0..grid.len() {
            assert_eq!(wa.values()[i], wb.values()[i] + wc.values()[i]);
        }
    }

    #[test]
    fn decompose_round_trip_and_orthogonality() {
        let grid = PupilGrid::unit_disk(64);
        let modes = indices(DEFAULT_MODES).unwrap();
        let a = AmplitudeVector::from_pairs(
            DEFAULT_MODES.map(|j| (j, 0.02 * (j as f64 - 10.0) / 5.0)),
        )
        .unwrap();
        let w = compose_wavefront(&a, &grid).unwrap();
        let back = decompose_wavefront(&w, &grid, &modes).unwrap();
        for j in DEFAULT_MODES {
            assert!((back.get(j) - a.get(j)).abs() < 1e-4);
        }

        let zero = decompose_wavefront(&Wavefront::zeros(&grid), &grid, &modes).unwrap();
        assert!(zero.iter().all(|(_, v)| v == 0.0));

        let w5 = compose_wavefront(&AmplitudeVector::from_pairs([(5, 0.075)]).unwrap(), &grid)
            .unwrap();
        let others = decompose_wavefront(&w5, &grid, &indices(6..=15).unwrap()).unwrap();
        assert!(others.iter().all(|(_, v)| v.abs() < 1e-3), "{others:?}");
    }

    #[test]
    fn decompose_rejects_tiny_support() {
        // radius of about one pixel: 5 support pixels
        let grid = PupilGrid::new(8, 8, 1.0, 1.0, 1.5).unwrap();
        let err = decompose_wavefront(
            &Wavefront::zeros(&grid),
            &grid,
            &indices(1..=11).unwrap(),
        )
        .unwrap_err();
        assert!(matches!(err, Error::IllPosed(_)));
        assert!(decompose_wavefront(&Wavefront::zeros(&grid), &grid, &[]).is_err());
    }

    #[test]
    fn rmse_rejects_mismatched_grids() {
        let a = PupilGrid::unit_disk(32);
        let b = PupilGrid::unit_disk(64);
        let err = wavefront_rmse(&Wavefront::zeros(&a), &Wavefront::zeros(&b), &a).unwrap_err();
        assert!(matches!(err, Error::GridMismatch(_)));
    }

    #[test]
    fn mask_is_strict_and_centrosymmetric() {
        let grid = PupilGrid::new(32, 32, 1.0 / 16.0, 1.0 / 16.0, 1.0).unwrap();
        assert!(grid.weights().iter().all(|&w| w == 1.0));
        for &i in grid.masked_indices() {
            assert!(grid.rho()[i] < 1.0);
            let (row, col) = (i / 32, i % 32);
            // mirror through the origin pixel (16, 16)
            let mirror = (32 - row) * 32 + (32 - col);
            assert!(grid.mask()[mirror]);
        }
        // pixel exactly on the rim (rho == 1) is excluded
        assert!(!grid.mask()[16 * 32]);
    }

    #[test]
    fn unit_disk_weights_cover_the_disk() {
        for n in [16, 64, 256] {
            let grid = PupilGrid::unit_disk(n);
            let pixel = (2.0 / n as f64).powi(2);
            let area: f64 = grid.weights().iter().sum::<f64>() * pixel;
            assert!((area / std::f64::consts::PI - 1.0).abs() < 1e-3, "{n}: {area}");
            assert!(grid.weights().iter().all(|&w| w > 0.0 && w <= 1.0));
            // pixel centered: no pixel sits on an axis
            assert!(grid.masked_indices().iter().all(|&i| grid.rho()[i] > 0.0));
        }
    }

    #[test]
    fn amplitude_serialization() {
        let a = AmplitudeVector::from_pairs([(5, 0.012), (11, -1.0 / 3.0)]).unwrap();
        let json = serde_json::to_string(&a).unwrap();
        assert_eq!(json, r#"{"5":0.012,"11":-0.3333333333333333}"#);
        let back: AmplitudeVector = serde_json::from_str(&json).unwrap();
        assert_eq!(back, a);
        assert_eq!(AmplitudeVector::from_csv(&a.to_csv()).unwrap(), a);
        assert!(serde_json::from_str::<AmplitudeVector>(r#"{"0": 1.0}"#).is_err());
        assert!(AmplitudeVector::from_csv("noll,amp\n5,1\n").is_err());
    }
}
