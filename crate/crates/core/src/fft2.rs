//! Square 2D FFTs on M×M periodic grids stored row-major.

use std::sync::Arc;

use rayon::prelude::*;
use rustfft::num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

pub struct Fft2 {
    m: usize,
    fwd: Arc<dyn Fft<f64>>,
    inv: Arc<dyn Fft<f64>>,
}

impl Fft2 {
    pub fn new(m: usize) -> Self {
        let mut planner = FftPlanner::new();
        Self { m, fwd: planner.plan_fft_forward(m), inv: planner.plan_fft_inverse(m) }
    }

    pub fn size(&self) -> usize {
        self.m
    }

    fn rows(&self, data: &mut [Complex64], plan: &Arc<dyn Fft<f64>>) {
        data.par_chunks_mut(self.m).for_each(|row| plan.process(row));
    }

    fn transpose(&self, data: &mut [Complex64]) {
        let m = self.m;
        for i in 0..m {
            for j in i + 1..m {
                data.swap(i * m + j, j * m + i);
            }
        }
    }

    pub fn forward(&self, data: &mut [Complex64]) {
        self.rows(data, &self.fwd);
        self.transpose(data);
        self.rows(data, &self.fwd);
        self.transpose(data);
    }

    /// Inverse transform including the 1/M² normalization.
    pub fn inverse(&self, data: &mut [Complex64]) {
        self.rows(data, &self.inv);
        self.transpose(data);
        self.rows(data, &self.inv);
        self.transpose(data);
        let s = 1.0 / (self.m * self.m) as f64;
        data.par_iter_mut().for_each(|z| *z *= s);
    }

    pub fn forward_real(&self, f: &[f64]) -> Vec<Complex64> {
        let mut c: Vec<Complex64> = f.iter().map(|&x| Complex64::new(x, 0.0)).collect();
        self.forward(&mut c);
        c
    }

    pub fn inverse_real(&self, mut c: Vec<Complex64>) -> Vec<f64> {
        self.inverse(&mut c);
        c.into_iter().map(|z| z.re).collect()
    }
}

/// Signed wavenumber of FFT index `i` on an M-point axis.
pub fn wavenumber(i: usize, m: usize) -> f64 {
    if i <= m / 2 {
        i as f64
    } else {
        i as f64 - m as f64
    }
}
