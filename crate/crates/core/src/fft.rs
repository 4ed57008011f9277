//! Row/column 2D FFT over row-major complex buffers.
//!
//! Only the rows or columns that matter are transformed: pupils occupy a
//! handful of rows and the detector crop a subset of columns.

use std::sync::Arc;

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

#[derive(Clone)]
pub struct Fft2 {
    nx: usize,
    ny: usize,
    fwd_x: Arc<dyn Fft<f64>>,
    fwd_y: Arc<dyn Fft<f64>>,
    inv_x: Arc<dyn Fft<f64>>,
    inv_y: Arc<dyn Fft<f64>>,
    scratch_len: usize,
}

impl std::fmt::Debug for Fft2 {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Fft2").field("nx", &self.nx).field("ny", &self.ny).finish()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Direction {
    Forward,
    Inverse,
}

impl Fft2 {
    pub fn new(nx: usize, ny: usize) -> Self {
        let mut planner = FftPlanner::new();
        let fwd_x = planner.plan_fft_forward(nx);
        let fwd_y = planner.plan_fft_forward(ny);
        let inv_x = planner.plan_fft_inverse(nx);
        let inv_y = planner.plan_fft_inverse(ny);
        let scratch_len = [&fwd_x, &fwd_y, &inv_x, &inv_y]
            .iter()
            .map(|p| p.get_inplace_scratch_len())
            .max()
            .unwrap_or(0);
        Self {
            nx,
            ny,
            fwd_x,
            fwd_y,
            inv_x,
            inv_y,
            scratch_len,
        }
    }

    pub fn nx(&self) -> usize {
        self.nx
    }

    pub fn ny(&self) -> usize {
        self.ny
    }

    /// Transform the listed rows in place (unnormalized).
    pub fn rows(&self, buf: &mut [Complex64], rows: &[usize], dir: Direction) {
        let plan = match dir {
            Direction::Forward => &self.fwd_x,
            Direction::Inverse => &self.inv_x,
        };
        let mut scratch = vec![Complex64::default(); self.scratch_len];
        for &r in rows {
            plan.process_with_scratch(&mut buf[r * self.nx..(r + 1) * self.nx], &mut scratch);
        }
    }

    /// Transform the listed columns in place (unnormalized).
    pub fn cols(
        &self,
        buf: &mut [Complex64],
        cols: impl IntoIterator<Item = usize>,
        dir: Direction,
    ) {
        let plan = match dir {
            Direction::Forward => &self.fwd_y,
            Direction::Inverse => &self.inv_y,
        };
        let mut scratch = vec![Complex64::default(); self.scratch_len];
        let mut column = vec![Complex64::default(); self.ny];
        for c in cols {
            for (r, v) in column.iter_mut().enumerate() {
                *v = buf[r * self.nx + c];
            }
            plan.process_with_scratch(&mut column, &mut scratch);
            for (r, v) in column.iter().enumerate() {
                buf[r * self.nx + c] = *v;
            }
        }
    }

    /// Full forward transform.
    pub fn forward(&self, buf: &mut [Complex64]) {
        let rows: Vec<usize> = (0..self.ny).collect();
        self.rows(buf, &rows, Direction::Forward);
        self.cols(buf, 0..self.nx, Direction::Forward);
    }

    /// Full inverse transform including the `1/(nx*ny)` factor.
    pub fn inverse(&self, buf: &mut [Complex64]) {
        self.cols(buf, 0..self.nx, Direction::Inverse);
        let rows: Vec<usize> = (0..self.ny).collect();
        self.rows(buf, &rows, Direction::Inverse);
        let s = 1.0 / (self.nx * self.ny) as f64;
        buf.iter_mut().for_each(|v| *v *= s);
    }
}
