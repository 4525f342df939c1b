//! Green's function of the flat unit torus R²/Z² with −ΔG(·,y) = δ_y − 1 and
//! zero mean, its regular part γ = G + (1/2π) log|x−y| and the merged kernel G*.

use std::f64::consts::PI;
use std::io::Write;

use rayon::prelude::*;
use rustfft::num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fft2::{wavenumber, Fft2};
use crate::special::{e1, ein, DIGAMMA_QUARTER, EULER_GAMMA, GAMMA_QUARTER};

pub type Point = [f64; 2];

const TWO_PI: f64 = 2.0 * PI;
/// Number of terms in the resummed Fourier series.
const FOURIER_TERMS: usize = 16;
/// Ewald cutoffs: |k|² and |x − n|² bounds.
const EWALD_K2: i32 = 12;
const EWALD_R2: f64 = 12.0;
/// Ewald splitting time; with T = 1/4π the real-space argument is π|x−n|².
const EWALD_T: f64 = 1.0 / (4.0 * PI);
/// Points closer than this are treated as coincident.
pub const COINCIDENT: f64 = 1e-12;

/// Representative of x − y in [−½, ½)².
pub fn min_image(x: Point, y: Point) -> Point {
    let wrap = |v: f64| v - (v + 0.5).floor();
    [wrap(x[0] - y[0]), wrap(x[1] - y[1])]
}

pub fn torus_distance(x: Point, y: Point) -> f64 {
    let d = min_image(x, y);
    d[0].hypot(d[1])
}

/// Reduces a point to [0, 1)².
pub fn wrap_point(x: Point) -> Point {
    [x[0] - x[0].floor(), x[1] - x[1].floor()]
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GreenMode {
    /// Closed-form sum over one lattice direction, exponentially convergent
    /// series over the other.
    Fourier,
    /// Heat-kernel splitting into spectral and real-space sums.
    Ewald,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GreenEvaluator {
    mode: GreenMode,
    /// (k, weight e^{−4π²|k|²T}/(4π²|k|²)) over one representative of each ±k pair.
    ewald_k: Vec<([f64; 2], f64)>,
    /// p_k = 1/(1 − e^{−2πk}), q_k = e^{−2πk} p_k.
    p: Vec<f64>,
    q: Vec<f64>,
    robin: f64,
}

fn b2(b: f64) -> f64 {
    b * b - b + 1.0 / 6.0
}

impl GreenEvaluator {
    pub fn new(mode: GreenMode) -> Self {
        let p: Vec<f64> = (1..=FOURIER_TERMS).map(|k| 1.0 / -(-(TWO_PI * k as f64)).exp_m1()).collect();
        let q: Vec<f64> = p.iter().enumerate().map(|(k, pk)| (-(TWO_PI * (k + 1) as f64)).exp() * pk).collect();
        let mut ewald_k = Vec::new();
        for k1 in 0..=4i32 {
            for k2 in -4..=4i32 {
                let n2 = k1 * k1 + k2 * k2;
                if n2 == 0 || n2 > EWALD_K2 || (k1 == 0 && k2 < 0) {
                    continue;
                }
                let kk = 4.0 * PI * PI * n2 as f64;
                // the pair ±k contributes 2 cos(2πk·x)
                ewald_k.push(([k1 as f64, k2 as f64], 2.0 * (-kk * EWALD_T).exp() / kk));
            }
        }
        let mut ev = Self { mode, ewald_k, p, q, robin: 0.0 };
        ev.robin = ev.regular_diff([0.0, 0.0]);
        ev
    }

    pub fn mode(&self) -> GreenMode {
        self.mode
    }

    /// Number of terms in the Ewald spectral and real-space sums.
    pub fn ewald_term_counts(&self) -> (usize, usize) {
        let mut real = 0;
        for n1 in -4..=4 {
            for n2 in -4..=4 {
                if ((n1 * n1 + n2 * n2) as f64) <= EWALD_R2 {
                    real += 1;
                }
            }
        }
        (self.ewald_k.len(), real)
    }

    /// γ(x,x), independent of x.
    pub fn robin_constant(&self) -> f64 {
        self.robin
    }

    pub fn green(&self, x: Point, y: Point) -> Result<f64> {
        let d = min_image(x, y);
        let r = d[0].hypot(d[1]);
        if r <= COINCIDENT {
            return Err(Error::Singularity);
        }
        Ok(self.regular_diff(d) - r.ln() / TWO_PI)
    }

    pub fn regular_part(&self, x: Point, y: Point) -> f64 {
        self.regular_diff(min_image(x, y))
    }

    /// ∇_x G(x, y).
    pub fn green_grad(&self, x: Point, y: Point) -> Result<Point> {
        let d = min_image(x, y);
        let r2 = d[0] * d[0] + d[1] * d[1];
        if r2.sqrt() <= COINCIDENT {
            return Err(Error::Singularity);
        }
        let g = self.regular_grad_diff(d);
        Ok([g[0] - d[0] / (TWO_PI * r2), g[1] - d[1] / (TWO_PI * r2)])
    }

    /// ∇_x γ(x, y); zero on the diagonal.
    pub fn regular_grad(&self, x: Point, y: Point) -> Point {
        self.regular_grad_diff(min_image(x, y))
    }

    fn regular_diff(&self, d: Point) -> f64 {
        match self.mode {
            GreenMode::Fourier => self.fourier_regular(d),
            GreenMode::Ewald => self.ewald_regular(d),
        }
    }

    fn regular_grad_diff(&self, d: Point) -> Point {
        let r = d[0].hypot(d[1]);
        if r <= COINCIDENT {
            return [0.0, 0.0];
        }
        match self.mode {
            GreenMode::Fourier => self.fourier_regular_grad(d),
            GreenMode::Ewald => self.ewald_regular_grad(d),
        }
    }

    // With b ≥ 0 (G is even, so (a,b) → (−a,−b) when needed):
    // G = B₂(b)/2 + (1/2π)[−log|1 − e^{2πi(a+ib)}| + Σ_k cos(2πka)/k (e^{−2πkb} q_k + e^{−2πk(1−b)} p_k)].
    fn fourier_series(&self, a: f64, b: f64) -> f64 {
        let mut s = 0.0;
        for k in 1..=FOURIER_TERMS {
            let kf = k as f64;
            let w = (-TWO_PI * kf * b).exp() * self.q[k - 1] + (-TWO_PI * kf * (1.0 - b)).exp() * self.p[k - 1];
            s += (TWO_PI * kf * a).cos() / kf * w;
        }
        s
    }

    /// |e^{2πi(a+ib)} − 1| without cancellation near the origin.
    fn expm1_abs(a: f64, b: f64) -> f64 {
        let em = (-TWO_PI * b).exp_m1();
        let re = em * (TWO_PI * a).cos() - 2.0 * (PI * a).sin().powi(2);
        let im = (-TWO_PI * b).exp() * (TWO_PI * a).sin();
        re.hypot(im)
    }

    fn fourier_regular(&self, d: Point) -> f64 {
        let (a, b) = if d[1] < 0.0 { (-d[0], -d[1]) } else { (d[0], d[1]) };
        let r = a.hypot(b);
        let log_ratio = if r == 0.0 {
            TWO_PI.ln()
        } else {
            (Self::expm1_abs(a, b) / r).ln()
        };
        b2(b) / 2.0 + (-log_ratio + self.fourier_series(a, b)) / TWO_PI
    }

    fn fourier_regular_grad(&self, d: Point) -> Point {
        let (sgn, a, b) = if d[1] < 0.0 { (-1.0, -d[0], -d[1]) } else { (1.0, d[0], d[1]) };
        let e = (-TWO_PI * b).exp();
        let dn = Self::expm1_abs(a, b).powi(2);
        let dn_a = 2.0 * TWO_PI * e * (TWO_PI * a).sin();
        let dn_b = 2.0 * TWO_PI * e * (-2.0 * (PI * a).sin().powi(2) - (-TWO_PI * b).exp_m1());
        let mut sa = 0.0;
        let mut sb = 0.0;
        for k in 1..=FOURIER_TERMS {
            let kf = k as f64;
            let lo = (-TWO_PI * kf * b).exp() * self.q[k - 1];
            let hi = (-TWO_PI * kf * (1.0 - b)).exp() * self.p[k - 1];
            sa -= TWO_PI * (TWO_PI * kf * a).sin() * (lo + hi);
            sb += TWO_PI * (TWO_PI * kf * a).cos() * (hi - lo);
        }
        let r2 = a * a + b * b;
        // −(1/4π) ∇Dn/Dn + (1/2π) d/r² + series
        let ga = -dn_a / (2.0 * TWO_PI * dn) + a / (TWO_PI * r2) + sa / TWO_PI;
        let gb = (2.0 * b - 1.0) / 2.0 - dn_b / (2.0 * TWO_PI * dn) + b / (TWO_PI * r2) + sb / TWO_PI;
        [sgn * ga, sgn * gb]
    }

    fn ewald_spectral(&self, d: Point) -> (f64, Point) {
        let mut v = 0.0;
        let mut g = [0.0, 0.0];
        for (k, w) in &self.ewald_k {
            let ph = TWO_PI * (k[0] * d[0] + k[1] * d[1]);
            v += w * ph.cos();
            let s = -w * TWO_PI * ph.sin();
            g[0] += s * k[0];
            g[1] += s * k[1];
        }
        (v, g)
    }

    fn images(d: Point) -> impl Iterator<Item = Point> {
        (-4..=4i32).flat_map(move |n1| {
            (-4..=4i32).filter_map(move |n2| {
                let v = [d[0] - n1 as f64, d[1] - n2 as f64];
                if n1 == 0 && n2 == 0 {
                    return None;
                }
                ((v[0] * v[0] + v[1] * v[1]) <= EWALD_R2).then_some(v)
            })
        })
    }

    fn ewald_regular(&self, d: Point) -> f64 {
        let (spec, _) = self.ewald_spectral(d);
        let mut real = 0.0;
        for v in Self::images(d) {
            real += e1(PI * (v[0] * v[0] + v[1] * v[1]));
        }
        // n = 0 image with the logarithm removed: E₁(z) + log z = −γ_E + Ein(z)
        let z0 = PI * (d[0] * d[0] + d[1] * d[1]);
        let near = -EULER_GAMMA - PI.ln() + ein(z0);
        spec + (real + near) / (4.0 * PI) - EWALD_T
    }

    fn ewald_regular_grad(&self, d: Point) -> Point {
        let (_, mut g) = self.ewald_spectral(d);
        for v in Self::images(d) {
            let r2 = v[0] * v[0] + v[1] * v[1];
            let c = -(-PI * r2).exp() / (TWO_PI * r2);
            g[0] += c * v[0];
            g[1] += c * v[1];
        }
        let r2 = d[0] * d[0] + d[1] * d[1];
        let c = -(-PI * r2).exp_m1() / (TWO_PI * r2);
        [g[0] + c * d[0], g[1] + c * d[1]]
    }
}

/// G*(p_t, p_l): Robin constant on the diagonal, G off it.
pub fn gstar(ev: &GreenEvaluator, points: &[Point], t: usize, l: usize) -> Result<f64> {
    check_index(points, t)?;
    check_index(points, l)?;
    if t == l {
        return Ok(ev.robin_constant());
    }
    ev.green(points[t], points[l])
        .map_err(|_| Error::Configuration(format!("points {t} and {l} coincide")))
}

/// Σ_l G*(p_t, p_l).
pub fn gstar_sum(ev: &GreenEvaluator, points: &[Point], t: usize) -> Result<f64> {
    (0..points.len()).map(|l| gstar(ev, points, t, l)).sum()
}

/// Σ_l ∇_1 G*(p_t, p_l); the diagonal term ∇_1 γ(p_t,p_t) vanishes.
pub fn gstar_grad(ev: &GreenEvaluator, points: &[Point], t: usize) -> Result<Point> {
    check_index(points, t)?;
    let mut g = [0.0, 0.0];
    for (l, &p) in points.iter().enumerate() {
        if l == t {
            continue;
        }
        let d = ev
            .green_grad(points[t], p)
            .map_err(|_| Error::Configuration(format!("points {t} and {l} coincide")))?;
        g[0] += d[0];
        g[1] += d[1];
    }
    Ok(g)
}

fn check_index(points: &[Point], t: usize) -> Result<()> {
    if t >= points.len() {
        return Err(Error::Input(format!("index {t} outside 0..{}", points.len())));
    }
    Ok(())
}

/// One row of a probe table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Probe {
    pub x: Point,
    pub y: Point,
    pub g: f64,
    pub gamma: f64,
    pub grad: Point,
}

pub fn probe(ev: &GreenEvaluator, x: Point, y: Point) -> Result<Probe> {
    Ok(Probe { x, y, g: ev.green(x, y)?, gamma: ev.regular_part(x, y), grad: ev.green_grad(x, y)? })
}

pub fn write_probes_csv<W: Write>(rows: &[Probe], mut w: W) -> Result<()> {
    writeln!(w, "x1,x2,y1,y2,G,gamma,dG1,dG2")?;
    for p in rows {
        writeln!(
            w,
            "{:.17e},{:.17e},{:.17e},{:.17e},{:.17e},{:.17e},{:.17e},{:.17e}",
            p.x[0], p.x[1], p.y[0], p.y[1], p.g, p.gamma, p.grad[0], p.grad[1]
        )?;
    }
    Ok(())
}

/// Cutoff used to split off the logarithmic singularity for grid checks:
/// S = −(1/2π) log r · exp(−(r/ρ)^{2p}).
#[derive(Debug, Clone, Copy)]
struct Cutoff {
    rho: f64,
    p: i32,
}

impl Cutoff {
    const DEFAULT: Cutoff = Cutoff { rho: 0.25, p: 4 };

    fn psi(&self, r: f64) -> (f64, f64, f64) {
        let (rho, p) = (self.rho, self.p as f64);
        let x = r / rho;
        let psi = (-x.powf(2.0 * p)).exp();
        let d1 = -(2.0 * p / rho) * x.powf(2.0 * p - 1.0) * psi;
        let d2 = psi * ((2.0 * p / rho).powi(2) * x.powf(4.0 * p - 2.0) - 2.0 * p * (2.0 * p - 1.0) / (rho * rho) * x.powf(2.0 * p - 2.0));
        (psi, d1, d2)
    }

    fn s(&self, r: f64) -> f64 {
        -r.ln() / TWO_PI * self.psi(r).0
    }

    /// ΔS for r > 0 (log r is harmonic, so only cross terms survive).
    fn lap_s(&self, r: f64) -> f64 {
        let (_, d1, d2) = self.psi(r);
        let l = -r.ln() / TWO_PI;
        let dl = -1.0 / (TWO_PI * r);
        2.0 * dl * d1 + l * (d2 + d1 / r)
    }

    /// ∫_{R²} S dA for p = 4.
    fn integral(&self) -> f64 {
        assert_eq!(self.p, 4);
        let rho = self.rho;
        -(rho * rho / 8.0) * (rho.ln() * GAMMA_QUARTER + GAMMA_QUARTER * DIGAMMA_QUARTER / 8.0)
    }
}

/// Samples of the smooth remainder f = G(·,y) − S on the M×M grid x = (i/M, j/M).
fn smooth_samples(ev: &GreenEvaluator, y: Point, m: usize, cut: Cutoff) -> Vec<f64> {
    let h = 1.0 / m as f64;
    (0..m * m)
        .into_par_iter()
        .map(|k| {
            let x = [(k / m) as f64 * h, (k % m) as f64 * h];
            let d = min_image(x, y);
            let r = d[0].hypot(d[1]);
            if r <= COINCIDENT {
                ev.robin_constant()
            } else {
                ev.regular_part(x, y) - r.ln() / TWO_PI - cut.s(r)
            }
        })
        .collect()
}

/// Mean of G(·,y) over the torus computed from M×M grid samples with the
/// logarithmic singularity integrated analytically.
pub fn grid_mean(ev: &GreenEvaluator, y: Point, m: usize) -> f64 {
    let cut = Cutoff::DEFAULT;
    let f = smooth_samples(ev, y, m, cut);
    f.iter().sum::<f64>() / (m * m) as f64 + cut.integral()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectralCheck {
    pub resolution: usize,
    /// Relative L² error of −Δ_h G against δ − 1 off the excluded cells.
    pub rel_l2_error: f64,
    pub max_error: f64,
    pub excluded_cells: usize,
}

/// Applies the spectral Laplacian to grid samples of G(·,y) and compares with
/// δ_y − 1 away from the 3×3 cells around y. The singular part is split off
/// and differentiated analytically.
pub fn spectral_check(ev: &GreenEvaluator, y: Point, m: usize) -> SpectralCheck {
    let cut = Cutoff::DEFAULT;
    let f = smooth_samples(ev, y, m, cut);
    let fft = Fft2::new(m);
    let mut c = fft.forward_real(&f);
    for i in 0..m {
        let ki = wavenumber(i, m);
        for j in 0..m {
            let kj = wavenumber(j, m);
            c[i * m + j] *= Complex64::new(4.0 * PI * PI * (ki * ki + kj * kj), 0.0);
        }
    }
    let neg_lap_f = fft.inverse_real(c);
    let h = 1.0 / m as f64;
    let cell = |v: f64| (v * m as f64).round() as i64;
    let (yi, yj) = (cell(y[0]), cell(y[1]));
    let mut err2 = 0.0;
    let mut ref2 = 0.0;
    let mut max_err: f64 = 0.0;
    let mut excluded = 0;
    for i in 0..m {
        for j in 0..m {
            let di = (i as i64 - yi).rem_euclid(m as i64);
            let dj = (j as i64 - yj).rem_euclid(m as i64);
            let near = |d: i64| d <= 1 || d >= m as i64 - 1;
            if near(di) && near(dj) {
                excluded += 1;
                continue;
            }
            let x = [i as f64 * h, j as f64 * h];
            let r = torus_distance(x, y);
            let val = neg_lap_f[i * m + j] - cut.lap_s(r);
            let e = val + 1.0;
            err2 += e * e;
            ref2 += 1.0;
            max_err = max_err.max(e.abs());
        }
    }
    SpectralCheck { resolution: m, rel_l2_error: (err2 / ref2).sqrt(), max_error: max_err, excluded_cells: excluded }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn both() -> (GreenEvaluator, GreenEvaluator) {
        (GreenEvaluator::new(GreenMode::Fourier), GreenEvaluator::new(GreenMode::Ewald))
    }

    #[test]
    fn modes_agree() {
        let (f, e) = both();
        assert!((f.green([0.5, 0.5], [0.0, 0.0]).unwrap() - e.green([0.5, 0.5], [0.0, 0.0]).unwrap()).abs() < 1e-10);
        assert!((f.robin_constant() - e.robin_constant()).abs() < 1e-12);
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..200 {
            let x = [rng.gen::<f64>(), rng.gen::<f64>()];
            let y = [rng.gen::<f64>(), rng.gen::<f64>()];
            if torus_distance(x, y) < 0.05 {
                continue;
            }
            let (a, b) = (f.green(x, y).unwrap(), e.green(x, y).unwrap());
            assert!((a - b).abs() < 1e-10, "{x:?} {y:?}: {a} vs {b}");
            let (ga, gb) = (f.green_grad(x, y).unwrap(), e.green_grad(x, y).unwrap());
            assert!((ga[0] - gb[0]).abs() < 1e-9 && (ga[1] - gb[1]).abs() < 1e-9);
        }
    }

    #[test]
    fn robin_value() {
        let (f, _) = both();
        let k: f64 = (1..=20).map(|k| 2.0 * (-(TWO_PI * k as f64)).exp() / (-(-(TWO_PI * k as f64)).exp_m1()) / k as f64).sum();
        let expect = 1.0 / 12.0 - TWO_PI.ln() / TWO_PI + k / TWO_PI;
        assert!((f.robin_constant() - expect).abs() < 1e-14);
        assert!((f.robin_constant() + 0.2086).abs() < 1e-3);
    }

    #[test]
    fn symmetric_and_singular() {
        let (f, e) = both();
        let (x, y) = ([0.13, 0.71], [0.88, 0.05]);
        for ev in [&f, &e] {
            assert!((ev.green(x, y).unwrap() - ev.green(y, x).unwrap()).abs() < 1e-12);
            assert!(matches!(ev.green(x, x), Err(Error::Singularity)));
            assert!((ev.regular_part(x, x) - ev.robin_constant()).abs() < 1e-12);
        }
    }

    #[test]
    fn regular_part_is_continuous() {
        let (f, e) = both();
        let x = [0.3, 0.6];
        for ev in [&f, &e] {
            for ang in [0.0, 1.0, 2.5, 4.0] {
                let d = 1e-3;
                let y = [x[0] + d * f64::cos(ang), x[1] + d * f64::sin(ang)];
                assert!((ev.regular_part(x, y) - ev.robin_constant()).abs() < 1e-4);
            }
            let g = ev.regular_grad(x, x);
            assert_eq!(g, [0.0, 0.0]);
        }
    }

    #[test]
    fn gradient_matches_differences() {
        let (f, e) = both();
        let (x, y) = ([0.21, 0.37], [0.64, 0.91]);
        let h = 1e-5;
        for ev in [&f, &e] {
            let g = ev.green_grad(x, y).unwrap();
            let fd0 = (ev.green([x[0] + h, x[1]], y).unwrap() - ev.green([x[0] - h, x[1]], y).unwrap()) / (2.0 * h);
            let fd1 = (ev.green([x[0], x[1] + h], y).unwrap() - ev.green([x[0], x[1] - h], y).unwrap()) / (2.0 * h);
            assert!((g[0] - fd0).abs() < 1e-7 && (g[1] - fd1).abs() < 1e-7);
            // regular part gradient near the diagonal
            let z = [x[0] + 0.01, x[1] - 0.02];
            let rg = ev.regular_grad(z, x);
            let fd = (ev.regular_part([z[0] + h, z[1]], x) - ev.regular_part([z[0] - h, z[1]], x)) / (2.0 * h);
            assert!((rg[0] - fd).abs() < 1e-7);
        }
    }

    #[test]
    fn half_period_is_critical() {
        let (f, _) = both();
        let pts = [[0.2, 0.3], [0.7, 0.8]];
        for t in 0..2 {
            let g = gstar_grad(&f, &pts, t).unwrap();
            assert!(g[0].abs() < 1e-12 && g[1].abs() < 1e-12, "{g:?}");
        }
        assert!((gstar(&f, &pts, 0, 1).unwrap() - gstar(&f, &pts, 1, 0).unwrap()).abs() < 1e-14);
        let s0 = gstar_sum(&f, &pts, 0).unwrap();
        let s1 = gstar_sum(&f, &pts, 1).unwrap();
        assert!((s0 - s1).abs() < 1e-14);
        assert_eq!(gstar_grad(&f, &[[0.4, 0.4]], 0).unwrap(), [0.0, 0.0]);
        assert!(matches!(gstar(&f, &[[0.1, 0.1], [0.1, 0.1]], 0, 1), Err(Error::Configuration(_))));
    }

    #[test]
    fn ewald_term_budget() {
        let (_, e) = both();
        let (k, r) = e.ewald_term_counts();
        assert!(k <= 40 && r <= 40, "{k} {r}");
    }

    #[test]
    fn zero_mean_on_grid() {
        let (f, _) = both();
        let y = [0.3, 0.55];
        assert!(grid_mean(&f, y, 256).abs() < 1e-8);
        let y_on_grid = [0.25, 0.5];
        assert!(grid_mean(&f, y_on_grid, 256).abs() < 1e-8);
    }
}
