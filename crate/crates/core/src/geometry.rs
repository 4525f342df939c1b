//! Blowup configurations on the torus: weight functions, the location
//! equations, their Newton solution, and the coefficients H_{i,t}, c_t.

use std::f64::consts::PI;
use std::io::Write;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::green::{gstar_grad, gstar_sum, torus_distance, wrap_point, GreenEvaluator, Point};

pub const MIN_SEPARATION: f64 = 1e-3;
pub const LOCATION_TOL: f64 = 1e-9;
/// Relative threshold for membership in I_1.
pub const I1_TOL: f64 = 1e-6;
const TWO_PI: f64 = 2.0 * PI;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrigTerm {
    pub k: [i32; 2],
    #[serde(default)]
    pub cos: f64,
    #[serde(default)]
    pub sin: f64,
}

/// c + Σ (a cos 2πk·x + b sin 2πk·x).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrigPoly {
    pub constant: f64,
    #[serde(default)]
    pub terms: Vec<TrigTerm>,
}

impl TrigPoly {
    pub fn constant(c: f64) -> Self {
        Self { constant: c, terms: Vec::new() }
    }

    pub fn with_cos(mut self, k: [i32; 2], a: f64) -> Self {
        self.terms.push(TrigTerm { k, cos: a, sin: 0.0 });
        self
    }

    pub fn with_sin(mut self, k: [i32; 2], b: f64) -> Self {
        self.terms.push(TrigTerm { k, cos: 0.0, sin: b });
        self
    }

    fn phase(t: &TrigTerm, x: Point) -> f64 {
        TWO_PI * (t.k[0] as f64 * x[0] + t.k[1] as f64 * x[1])
    }

    pub fn value(&self, x: Point) -> f64 {
        self.constant
            + self
                .terms
                .iter()
                .map(|t| {
                    let ph = Self::phase(t, x);
                    t.cos * ph.cos() + t.sin * ph.sin()
                })
                .sum::<f64>()
    }

    pub fn grad(&self, x: Point) -> Point {
        let mut g = [0.0, 0.0];
        for t in &self.terms {
            let ph = Self::phase(t, x);
            let d = TWO_PI * (-t.cos * ph.sin() + t.sin * ph.cos());
            g[0] += d * t.k[0] as f64;
            g[1] += d * t.k[1] as f64;
        }
        g
    }

    pub fn laplacian(&self, x: Point) -> f64 {
        self.terms
            .iter()
            .map(|t| {
                let ph = Self::phase(t, x);
                let kk = (t.k[0] * t.k[0] + t.k[1] * t.k[1]) as f64;
                -TWO_PI * TWO_PI * kk * (t.cos * ph.cos() + t.sin * ph.sin())
            })
            .sum()
    }

    pub fn is_constant(&self) -> bool {
        self.terms.iter().all(|t| (t.k == [0, 0]) || (t.cos == 0.0 && t.sin == 0.0))
    }

    fn scaled(&self, c: f64) -> Self {
        Self {
            constant: self.constant * c,
            terms: self.terms.iter().map(|t| TrigTerm { k: t.k, cos: t.cos * c, sin: t.sin * c }).collect(),
        }
    }
}

/// Positive weight h on the torus: either a trigonometric polynomial or the
/// exponential of one.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum WeightFunction {
    Trig(TrigPoly),
    ExpTrig(TrigPoly),
}

impl WeightFunction {
    pub fn one() -> Self {
        WeightFunction::Trig(TrigPoly::constant(1.0))
    }

    pub fn value(&self, x: Point) -> f64 {
        match self {
            WeightFunction::Trig(p) => p.value(x),
            WeightFunction::ExpTrig(p) => p.value(x).exp(),
        }
    }

    pub fn log_value(&self, x: Point) -> f64 {
        match self {
            WeightFunction::Trig(p) => p.value(x).ln(),
            WeightFunction::ExpTrig(p) => p.value(x),
        }
    }

    /// ∇h / h.
    pub fn grad_log(&self, x: Point) -> Point {
        match self {
            WeightFunction::Trig(p) => {
                let v = p.value(x);
                let g = p.grad(x);
                [g[0] / v, g[1] / v]
            }
            WeightFunction::ExpTrig(p) => p.grad(x),
        }
    }

    /// Δh / h.
    pub fn lap_over_h(&self, x: Point) -> f64 {
        match self {
            WeightFunction::Trig(p) => p.laplacian(x) / p.value(x),
            WeightFunction::ExpTrig(p) => {
                let g = p.grad(x);
                p.laplacian(x) + g[0] * g[0] + g[1] * g[1]
            }
        }
    }

    pub fn is_constant(&self) -> bool {
        match self {
            WeightFunction::Trig(p) | WeightFunction::ExpTrig(p) => p.is_constant(),
        }
    }

    /// c·h.
    pub fn scaled(&self, c: f64) -> Self {
        match self {
            WeightFunction::Trig(p) => WeightFunction::Trig(p.scaled(c)),
            WeightFunction::ExpTrig(p) => {
                let mut q = p.clone();
                q.constant += c.ln();
                WeightFunction::ExpTrig(q)
            }
        }
    }

    /// (min, max) over an M×M grid.
    pub fn grid_bounds(&self, m: usize) -> (f64, f64) {
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for i in 0..m {
            for j in 0..m {
                let v = self.value([i as f64 / m as f64, j as f64 / m as f64]);
                lo = lo.min(v);
                hi = hi.max(v);
            }
        }
        (lo, hi)
    }

    /// Checks 1/C ≤ h ≤ C on a 256² grid.
    pub fn check_bounds(&self, c: f64) -> Result<()> {
        let (lo, hi) = self.grid_bounds(256);
        if lo < 1.0 / c || hi > c {
            return Err(Error::Configuration(format!(
                "weight range [{lo:.4}, {hi:.4}] violates bounds [1/{c}, {c}]"
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlowupConfiguration {
    pub points: Vec<Point>,
    pub masses: Vec<f64>,
    pub weights: Vec<WeightFunction>,
}

impl BlowupConfiguration {
    pub fn new(points: Vec<Point>, masses: Vec<f64>, weights: Vec<WeightFunction>) -> Result<Self> {
        let c = Self { points: points.into_iter().map(wrap_point).collect(), masses, weights };
        c.validate()?;
        Ok(c)
    }

    pub fn n(&self) -> usize {
        self.masses.len()
    }

    pub fn num_points(&self) -> usize {
        self.points.len()
    }

    pub fn m_min(&self) -> f64 {
        self.masses.iter().copied().fold(f64::INFINITY, f64::min)
    }

    /// Curvature of the flat torus.
    pub fn curvature(&self, _x: Point) -> f64 {
        0.0
    }

    pub fn validate(&self) -> Result<()> {
        if self.points.is_empty() {
            return Err(Error::Configuration("at least one point is required".into()));
        }
        if self.masses.is_empty() || self.masses.len() != self.weights.len() {
            return Err(Error::Configuration(format!(
                "{} masses but {} weights",
                self.masses.len(),
                self.weights.len()
            )));
        }
        if let Some(m) = self.masses.iter().find(|&&m| !(m > 2.0)) {
            return Err(Error::Configuration(format!("mass exponent {m} must exceed 2")));
        }
        let d = min_pair_distance(&self.points);
        if d < MIN_SEPARATION {
            return Err(Error::Configuration(format!("points closer than {MIN_SEPARATION}: {d:.3e}")));
        }
        Ok(())
    }

    /// I_1 = {i : |m_i − m| < 1e-6·m}.
    pub fn i1(&self) -> Vec<usize> {
        let m = self.m_min();
        (0..self.n()).filter(|&i| (self.masses[i] - m).abs() < I1_TOL * m).collect()
    }
}

pub fn min_pair_distance(points: &[Point]) -> f64 {
    let mut d = f64::INFINITY;
    for a in 0..points.len() {
        for b in a + 1..points.len() {
            d = d.min(torus_distance(points[a], points[b]));
        }
    }
    d
}

/// Which form of the location equations to evaluate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum LocationForm {
    /// Σ_i (∇log h_i + 2π m_i Σ_l ∇_1 G*).
    #[default]
    Unweighted,
    /// The same terms, each multiplied by a per-(i,t) weight (e.g. local masses).
    Weighted(Vec<Vec<f64>>),
}

pub fn location_residual(ev: &GreenEvaluator, cfg: &BlowupConfiguration) -> Result<Vec<Point>> {
    location_residual_form(ev, cfg, &LocationForm::Unweighted)
}

pub fn location_residual_form(ev: &GreenEvaluator, cfg: &BlowupConfiguration, form: &LocationForm) -> Result<Vec<Point>> {
    let n_pts = cfg.num_points();
    if let LocationForm::Weighted(w) = form {
        if w.len() != cfg.n() || w.iter().any(|row| row.len() != n_pts) {
            return Err(Error::Input("location weights must be n×N".into()));
        }
    }
    (0..n_pts)
        .map(|t| {
            let gg = gstar_grad(ev, &cfg.points, t)?;
            let mut r = [0.0, 0.0];
            for (i, h) in cfg.weights.iter().enumerate() {
                let w = match form {
                    LocationForm::Unweighted => 1.0,
                    LocationForm::Weighted(w) => w[i][t],
                };
                let gl = h.grad_log(cfg.points[t]);
                r[0] += w * (gl[0] + TWO_PI * cfg.masses[i] * gg[0]);
                r[1] += w * (gl[1] + TWO_PI * cfg.masses[i] * gg[1]);
            }
            Ok(r)
        })
        .collect()
}

/// F = Σ_t Σ_i log h_i(p_t) + π Σ_i m_i Σ_t Σ_{l≠t} G(p_t, p_l); its gradient in
/// p_t is the unweighted location residual.
pub fn location_potential(ev: &GreenEvaluator, cfg: &BlowupConfiguration) -> Result<f64> {
    let mut f = 0.0;
    let msum: f64 = cfg.masses.iter().sum();
    for (t, &p) in cfg.points.iter().enumerate() {
        f += cfg.weights.iter().map(|h| h.log_value(p)).sum::<f64>();
        for (l, &q) in cfg.points.iter().enumerate() {
            if l != t {
                f += PI * msum * ev.green(p, q).map_err(|_| Error::Merge { distance: 0.0 })?;
            }
        }
    }
    Ok(f)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Gauge {
    /// Fix p_1 if all weights are constant, otherwise free.
    #[default]
    Auto,
    FixFirst,
    Free,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LocationSolution {
    pub config: BlowupConfiguration,
    pub iterations: usize,
    /// max_t ‖R_t‖ after each iteration, starting with the initial value.
    pub trace: Vec<f64>,
}

fn max_norm(r: &[Point]) -> f64 {
    r.iter().map(|v| v[0].hypot(v[1])).fold(0.0, f64::max)
}

fn flat(r: &[Point]) -> DVector<f64> {
    DVector::from_iterator(2 * r.len(), r.iter().flat_map(|v| [v[0], v[1]]))
}

/// Gauss–Newton on the point coordinates with an SVD pseudo-inverse.
pub fn solve_locations(
    ev: &GreenEvaluator,
    weights: Vec<WeightFunction>,
    masses: Vec<f64>,
    init: Vec<Point>,
    gauge: Gauge,
) -> Result<LocationSolution> {
    let d = min_pair_distance(&init);
    if d < MIN_SEPARATION {
        return Err(Error::Merge { distance: d });
    }
    let mut cfg = BlowupConfiguration::new(init, masses, weights)?;
    let fix_first = match gauge {
        Gauge::FixFirst => true,
        Gauge::Free => false,
        Gauge::Auto => cfg.weights.iter().all(|w| w.is_constant()),
    };
    let n_pts = cfg.num_points();
    let free: Vec<usize> = (if fix_first { 2 } else { 0 }..2 * n_pts).collect();
    let mut res = location_residual(ev, &cfg)?;
    let mut trace = vec![max_norm(&res)];
    let h = 1e-6;
    let mut it = 0;
    while max_norm(&res) >= LOCATION_TOL {
        if it >= 50 {
            return Err(Error::NonConvergence { iterations: it, trace });
        }
        it += 1;
        let mut jac = DMatrix::zeros(2 * n_pts, free.len());
        for (c, &k) in free.iter().enumerate() {
            let mut plus = cfg.clone();
            let mut minus = cfg.clone();
            plus.points[k / 2][k % 2] += h;
            minus.points[k / 2][k % 2] -= h;
            let rp = flat(&location_residual(ev, &plus)?);
            let rm = flat(&location_residual(ev, &minus)?);
            jac.set_column(c, &((rp - rm) / (2.0 * h)));
        }
        let svd = jac.svd(true, true);
        let smax = svd.singular_values.max();
        let smin = svd.singular_values.min();
        if smin < 1e-10 * smax {
            return Err(Error::Degenerate(format!(
                "location Jacobian singular beyond the gauge (σ_min/σ_max = {:.3e})",
                smin / smax
            )));
        }
        let step = svd.solve(&flat(&res), 1e-12 * smax).map_err(|e| Error::Degenerate(e.to_string()))?;
        let current = max_norm(&res);
        let mut t = 1.0;
        let mut accepted = false;
        for _ in 0..30 {
            let mut cand = cfg.clone();
            for (c, &k) in free.iter().enumerate() {
                cand.points[k / 2][k % 2] -= t * step[c];
            }
            let d = min_pair_distance(&cand.points);
            if d < MIN_SEPARATION {
                return Err(Error::Merge { distance: d });
            }
            let r = location_residual(ev, &cand)?;
            if max_norm(&r) < current {
                cand.points = cand.points.into_iter().map(wrap_point).collect();
                cfg = cand;
                res = r;
                accepted = true;
                break;
            }
            t *= 0.5;
        }
        trace.push(max_norm(&res));
        if !accepted {
            return Err(Error::NonConvergence { iterations: it, trace });
        }
    }
    Ok(LocationSolution { config: cfg, iterations: it, trace })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoefficientReport {
    /// H[i][t].
    pub h: Vec<Vec<f64>>,
    pub c: Vec<f64>,
    pub residuals: Vec<Point>,
    pub i1: Vec<usize>,
    pub m: f64,
    /// c_t computed from each i in I_1.
    pub c_by_i: Vec<Vec<f64>>,
    /// Largest relative spread of c_t across I_1.
    pub c_spread: f64,
    /// max_i max_{t,s} |H_{i,t} − H_{i,s}|.
    pub compatibility_defect: f64,
    pub warnings: Vec<String>,
}

pub fn coefficient_report(ev: &GreenEvaluator, cfg: &BlowupConfiguration) -> Result<CoefficientReport> {
    cfg.validate()?;
    let n_pts = cfg.num_points();
    let sums: Vec<f64> = (0..n_pts).map(|t| gstar_sum(ev, &cfg.points, t)).collect::<Result<_>>()?;
    let h: Vec<Vec<f64>> = (0..cfg.n())
        .map(|i| {
            (0..n_pts)
                .map(|t| cfg.weights[i].log_value(cfg.points[t]) + TWO_PI * cfg.masses[i] * sums[t])
                .collect()
        })
        .collect();
    let m = cfg.m_min();
    let i1 = cfg.i1();
    let c_by_i: Vec<Vec<f64>> = i1
        .iter()
        .map(|&i| {
            let log_at = |t: usize| cfg.weights[i].log_value(cfg.points[t]) + TWO_PI * m * sums[t];
            (0..n_pts).map(|t| (log_at(t) - log_at(0)).exp()).collect()
        })
        .collect();
    let c = c_by_i[0].clone();
    let mut c_spread: f64 = 0.0;
    for row in &c_by_i {
        for t in 0..n_pts {
            c_spread = c_spread.max(((row[t] - c[t]) / c[t]).abs());
        }
    }
    let mut warnings = Vec::new();
    if c_spread > 1e-6 {
        warnings.push(format!(
            "c_t depends on i within I_1 (relative spread {c_spread:.3e}); configuration is not compatible"
        ));
    }
    let mut defect: f64 = 0.0;
    for row in &h {
        for a in row {
            for b in row {
                defect = defect.max((a - b).abs());
            }
        }
    }
    Ok(CoefficientReport {
        h,
        c,
        residuals: location_residual(ev, cfg)?,
        i1,
        m,
        c_by_i,
        c_spread,
        compatibility_defect: defect,
        warnings,
    })
}

/// Writes a residual trace as CSV.
pub fn write_trace_csv<W: Write>(trace: &[f64], mut w: W) -> Result<()> {
    writeln!(w, "iteration,max_residual")?;
    for (k, r) in trace.iter().enumerate() {
        writeln!(w, "{k},{r:.17e}")?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::green::GreenMode;

    fn ev() -> GreenEvaluator {
        GreenEvaluator::new(GreenMode::Fourier)
    }

    fn cfg(points: Vec<Point>, w: WeightFunction, m: f64) -> BlowupConfiguration {
        BlowupConfiguration::new(points, vec![m], vec![w]).unwrap()
    }

    #[test]
    fn weight_derivatives_match_differences() {
        let p = TrigPoly::constant(0.3).with_cos([1, 0], 0.5).with_sin([1, 2], -0.2).with_cos([0, 3], 0.1);
        let x = [0.17, 0.62];
        let e = 1e-5;
        for w in [WeightFunction::Trig(TrigPoly { constant: 2.0, ..p.clone() }), WeightFunction::ExpTrig(p.clone())] {
            let f = |y: Point| w.value(y);
            let gx = (f([x[0] + e, x[1]]) - f([x[0] - e, x[1]])) / (2.0 * e);
            let gy = (f([x[0], x[1] + e]) - f([x[0], x[1] - e])) / (2.0 * e);
            let gl = w.grad_log(x);
            assert!((gl[0] - gx / f(x)).abs() < 1e-7 && (gl[1] - gy / f(x)).abs() < 1e-7);
            let e2 = 1e-4;
            let lap = (f([x[0] + e2, x[1]]) + f([x[0] - e2, x[1]]) + f([x[0], x[1] + e2]) + f([x[0], x[1] - e2])
                - 4.0 * f(x))
                / (e2 * e2);
            assert!((w.lap_over_h(x) - lap / f(x)).abs() < 1e-4);
        }
    }

    #[test]
    fn single_point_residuals() {
        let e = ev();
        let r = location_residual(&e, &cfg(vec![[0.3, 0.4]], WeightFunction::one(), 4.0)).unwrap();
        assert_eq!(r, vec![[0.0, 0.0]]);
        let w = WeightFunction::ExpTrig(TrigPoly::constant(0.0).with_cos([1, 0], 1.0));
        let x1 = 0.13;
        let r = location_residual(&e, &cfg(vec![[x1, 0.4]], w.clone(), 4.0)).unwrap();
        assert!((r[0][0] + TWO_PI * (TWO_PI * x1).sin()).abs() < 1e-12 && r[0][1] == 0.0);
        for x in [0.0, 0.5] {
            let r = location_residual(&e, &cfg(vec![[x, 0.4]], w.clone(), 4.0)).unwrap();
            assert!(r[0][0].abs() < 1e-12);
        }
    }

    #[test]
    fn half_period_pair() {
        let e = ev();
        let c = cfg(vec![[0.1, 0.2], [0.6, 0.7]], WeightFunction::one(), 4.0);
        assert!(max_norm(&location_residual(&e, &c).unwrap()) < 1e-8);
        let rep = coefficient_report(&e, &c).unwrap();
        assert!(rep.compatibility_defect < 1e-10);
        assert!((rep.c[1] - 1.0).abs() < 1e-12 && rep.c[0] == 1.0);
        let sol = solve_locations(&e, vec![WeightFunction::one()], vec![4.0], vec![[0.1, 0.2], [0.63, 0.66]], Gauge::Auto)
            .unwrap();
        let d = crate::green::min_image(sol.config.points[1], sol.config.points[0]);
        assert!((d[0].abs() - 0.5).abs() < 1e-9 && (d[1].abs() - 0.5).abs() < 1e-9);
        assert!(sol.iterations <= 10);
    }

    #[test]
    fn residual_is_potential_gradient() {
        let e = ev();
        let w1 = WeightFunction::Trig(TrigPoly::constant(2.0).with_cos([1, 1], 0.3));
        let w2 = WeightFunction::ExpTrig(TrigPoly::constant(0.1).with_sin([0, 1], 0.4));
        let c = BlowupConfiguration::new(vec![[0.1, 0.2], [0.45, 0.8], [0.7, 0.35]], vec![3.0, 3.5], vec![w1, w2]).unwrap();
        let r = location_residual(&e, &c).unwrap();
        let h = 1e-6;
        for t in 0..3 {
            for k in 0..2 {
                let mut p = c.clone();
                let mut m = c.clone();
                p.points[t][k] += h;
                m.points[t][k] -= h;
                let fd = (location_potential(&e, &p).unwrap() - location_potential(&e, &m).unwrap()) / (2.0 * h);
                assert!((fd - r[t][k]).abs() < 1e-6, "t={t} k={k}: {fd} vs {}", r[t][k]);
            }
        }
    }

    #[test]
    fn single_minimum_is_found() {
        let e = ev();
        // Σ log h has a nondegenerate minimum at (0.5, 0.5)
        let w = WeightFunction::ExpTrig(TrigPoly::constant(0.0).with_cos([1, 0], 1.0).with_cos([0, 1], 1.0));
        let sol = solve_locations(&e, vec![w], vec![4.0], vec![[0.43, 0.58]], Gauge::Auto).unwrap();
        let p = sol.config.points[0];
        assert!((p[0] - 0.5).abs() < 1e-9 && (p[1] - 0.5).abs() < 1e-9);
    }

    #[test]
    fn merge_and_degenerate_errors() {
        let e = ev();
        assert!(matches!(
            solve_locations(&e, vec![WeightFunction::one()], vec![4.0], vec![[0.2, 0.2], [0.2, 0.2]], Gauge::Auto),
            Err(Error::Merge { .. })
        ));
        // h depends on x1 only: the x2 direction is a flat family
        let w = WeightFunction::ExpTrig(TrigPoly::constant(0.0).with_cos([1, 0], 1.0));
        assert!(matches!(
            solve_locations(&e, vec![w], vec![4.0], vec![[0.45, 0.3]], Gauge::Free),
            Err(Error::Degenerate(_))
        ));
    }

    #[test]
    fn c_is_scale_invariant() {
        let e = ev();
        let w = WeightFunction::Trig(TrigPoly::constant(1.0).with_cos([1, 0], 0.3));
        let pts = vec![[0.1, 0.25], [0.55, 0.7]];
        let a = coefficient_report(&e, &BlowupConfiguration::new(pts.clone(), vec![3.0], vec![w.clone()]).unwrap()).unwrap();
        let b = coefficient_report(&e, &BlowupConfiguration::new(pts, vec![3.0], vec![w.scaled(2.0)]).unwrap()).unwrap();
        assert!((a.c[1] - b.c[1]).abs() < 1e-14);
    }
}
