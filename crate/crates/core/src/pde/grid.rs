//! Uniform periodic grid on the unit torus with spectral Δ and Δ⁻¹.

use std::f64::consts::PI;

use rustfft::num_complex::Complex64;

use crate::error::{Error, Result};
use crate::fft2::{wavenumber, Fft2};
use crate::green::Point;

pub const MIN_RESOLUTION: usize = 64;

pub struct TorusGrid {
    m: usize,
    fft: Fft2,
    /// Symbol of Δ: −4π²|k|².
    lap: Vec<f64>,
    /// Symbol of Δ⁻¹ on zero-mean fields (0 at k = 0).
    inv_lap: Vec<f64>,
    /// 2/3-rule mask.
    keep: Vec<bool>,
}

impl TorusGrid {
    pub fn new(m: usize) -> Result<Self> {
        if !m.is_power_of_two() || m < MIN_RESOLUTION {
            return Err(Error::Input(format!("resolution {m} must be a power of two ≥ {MIN_RESOLUTION}")));
        }
        let mut lap = vec![0.0; m * m];
        let mut inv_lap = vec![0.0; m * m];
        let mut keep = vec![true; m * m];
        let cut = m as f64 / 3.0;
        for i in 0..m {
            let k1 = wavenumber(i, m);
            for j in 0..m {
                let k2 = wavenumber(j, m);
                let s = -4.0 * PI * PI * (k1 * k1 + k2 * k2);
                lap[i * m + j] = s;
                if i != 0 || j != 0 {
                    inv_lap[i * m + j] = 1.0 / s;
                }
                keep[i * m + j] = k1.abs() < cut && k2.abs() < cut;
            }
        }
        Ok(Self { m, fft: Fft2::new(m), lap, inv_lap, keep })
    }

    pub fn resolution(&self) -> usize {
        self.m
    }

    pub fn len(&self) -> usize {
        self.m * self.m
    }

    pub fn is_empty(&self) -> bool {
        self.m == 0
    }

    pub fn spacing(&self) -> f64 {
        1.0 / self.m as f64
    }

    pub fn point(&self, idx: usize) -> Point {
        let h = self.spacing();
        [(idx / self.m) as f64 * h, (idx % self.m) as f64 * h]
    }

    pub fn sample<F: Fn(Point) -> f64>(&self, f: F) -> Vec<f64> {
        (0..self.len()).map(|k| f(self.point(k))).collect()
    }

    pub fn mean(&self, f: &[f64]) -> f64 {
        f.iter().sum::<f64>() / f.len() as f64
    }

    pub fn forward(&self, f: &[f64]) -> Vec<Complex64> {
        self.fft.forward_real(f)
    }

    pub fn inverse(&self, c: Vec<Complex64>) -> Vec<f64> {
        self.fft.inverse_real(c)
    }

    /// Δf from Fourier coefficients.
    pub fn laplacian_hat(&self, c: &[Complex64]) -> Vec<f64> {
        self.inverse(c.iter().zip(&self.lap).map(|(z, s)| z * s).collect())
    }

    pub fn laplacian(&self, f: &[f64]) -> Vec<f64> {
        self.laplacian_hat(&self.forward(f))
    }

    /// Δ⁻¹ applied to the zero-mean part, returned as Fourier coefficients.
    pub fn inverse_laplacian_hat(&self, f: &[f64]) -> Vec<Complex64> {
        let mut c = self.forward(f);
        for (z, s) in c.iter_mut().zip(&self.inv_lap) {
            *z *= s;
        }
        c
    }

    pub fn inverse_laplacian(&self, f: &[f64]) -> Vec<f64> {
        self.inverse(self.inverse_laplacian_hat(f))
    }

    /// Zeroes modes outside the central 2/3 of the spectrum.
    pub fn dealias(&self, f: &[f64]) -> Vec<f64> {
        let mut c = self.forward(f);
        for (z, &k) in c.iter_mut().zip(&self.keep) {
            if !k {
                *z = Complex64::new(0.0, 0.0);
            }
        }
        self.inverse(c)
    }

    /// Squared distance on the torus between grid index `idx` and `p`.
    pub fn dist2(&self, idx: usize, p: Point) -> f64 {
        let x = self.point(idx);
        let d = crate::green::min_image(x, p);
        d[0] * d[0] + d[1] * d[1]
    }
}

/// Spectral interpolation of Fourier coefficients from an m-grid to an
/// m_new-grid (m_new ≥ m); the Nyquist rows are split symmetrically.
pub fn upsample_hat(c: &[Complex64], m: usize, m_new: usize) -> Result<Vec<Complex64>> {
    if m_new < m || c.len() != m * m {
        return Err(Error::Input(format!("cannot interpolate {m}-grid coefficients to {m_new}")));
    }
    let scale = (m_new * m_new) as f64 / (m * m) as f64;
    let mut out = vec![Complex64::new(0.0, 0.0); m_new * m_new];
    let half = (m / 2) as i64;
    let place = |k: i64| -> usize { k.rem_euclid(m_new as i64) as usize };
    for i in 0..m {
        let k1 = wavenumber(i, m) as i64;
        for j in 0..m {
            let k2 = wavenumber(j, m) as i64;
            let v = c[i * m + j] * scale;
            // a Nyquist mode k = m/2 stands for both +m/2 and −m/2
            let k1s: &[i64] = if k1 == half { &[half, -half] } else { &[k1] };
            let k2s: &[i64] = if k2 == half { &[half, -half] } else { &[k2] };
            let share = 1.0 / (k1s.len() * k2s.len()) as f64;
            for &a in k1s {
                for &b in k2s {
                    out[place(a) * m_new + place(b)] += v * share;
                }
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn inverse_laplacian_roundtrip() {
        let g = TorusGrid::new(64).unwrap();
        let f = g.sample(|x| (2.0 * PI * x[0]).sin() * (4.0 * PI * x[1]).cos() + 0.3 * (6.0 * PI * x[0]).cos());
        let back = g.inverse_laplacian(&g.laplacian(&f));
        for (a, b) in f.iter().zip(&back) {
            assert!((a - b).abs() < 1e-12);
        }
        let lap = g.laplacian(&f);
        let exact = g.sample(|x| {
            -20.0 * PI * PI * (2.0 * PI * x[0]).sin() * (4.0 * PI * x[1]).cos()
                - 0.3 * 36.0 * PI * PI * (6.0 * PI * x[0]).cos()
        });
        for (a, b) in lap.iter().zip(&exact) {
            assert!((a - b).abs() < 1e-10);
        }
        assert!(TorusGrid::new(48).is_err());
        assert!(TorusGrid::new(32).is_err());
    }

    #[test]
    fn upsampling_is_exact_for_band_limited_fields() {
        let f = |x: Point| (2.0 * PI * (3.0 * x[0] - x[1])).cos() + (2.0 * PI * 32.0 * x[0]).cos();
        let (g, fine) = (TorusGrid::new(64).unwrap(), TorusGrid::new(128).unwrap());
        let c = upsample_hat(&g.forward(&g.sample(f)), 64, 128).unwrap();
        let up = fine.inverse(c);
        let exact = fine.sample(f);
        for (a, b) in up.iter().zip(&exact) {
            assert!((a - b).abs() < 1e-12, "{a} {b}");
        }
    }

    #[test]
    fn dealias_keeps_low_modes() {
        let g = TorusGrid::new(64).unwrap();
        let low = g.sample(|x| (2.0 * PI * 5.0 * x[0]).sin());
        let high = g.sample(|x| (2.0 * PI * 30.0 * x[1]).sin());
        let sum: Vec<f64> = low.iter().zip(&high).map(|(a, b)| a + b).collect();
        for (a, b) in g.dealias(&sum).iter().zip(&low) {
            assert!((a - b).abs() < 1e-12);
        }
    }
}
