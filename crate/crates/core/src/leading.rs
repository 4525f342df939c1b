//! Leading-term coefficients: the regularized bracket, the constant D and the
//! coefficients b_it, with the resulting predictions for Λ_I.

use std::f64::consts::PI;
use std::io::Write;
use std::num::NonZeroUsize;

use gauss_quad::GaussLegendre;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::BlowupConfiguration;
use crate::green::{gstar_grad, gstar_sum, min_image, GreenEvaluator, Point};
use crate::radial::GlobalSolutionSummary;

const TWO_PI: f64 = 2.0 * PI;
/// Masses must agree with the radial summaries to this level.
const MASS_MATCH: f64 = 1e-6;

/// Voronoi cell of one point, in coordinates relative to that point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Cell {
    pub vertices: Vec<Point>,
}

impl Cell {
    pub fn area(&self) -> f64 {
        let v = &self.vertices;
        let n = v.len();
        0.5 * (0..n)
            .map(|k| {
                let (a, b) = (v[k], v[(k + 1) % n]);
                a[0] * b[1] - a[1] * b[0]
            })
            .sum::<f64>()
    }

    /// Distance from the center to the nearest edge.
    pub fn inradius(&self) -> f64 {
        self.edges().map(|(d, _, _, _)| d).fold(f64::INFINITY, f64::min)
    }

    /// (distance d_e, normal angle φ_e, θ_start, θ_end) per edge, so that the
    /// edge is r = d_e / cos(θ − φ_e) for θ between the two vertex angles.
    fn edges(&self) -> impl Iterator<Item = (f64, f64, f64, f64)> + '_ {
        let n = self.vertices.len();
        (0..n).map(move |k| {
            let a = self.vertices[k];
            let b = self.vertices[(k + 1) % n];
            let e = [b[0] - a[0], b[1] - a[1]];
            let len = e[0].hypot(e[1]);
            // outward normal for counter-clockwise order
            let nrm = [e[1] / len, -e[0] / len];
            let d = a[0] * nrm[0] + a[1] * nrm[1];
            let phi = nrm[1].atan2(nrm[0]);
            let ta = a[1].atan2(a[0]);
            let mut tb = b[1].atan2(b[0]);
            if tb < ta {
                tb += TWO_PI;
            }
            (d, phi, ta, tb)
        })
    }

    pub fn contains(&self, x: Point) -> bool {
        self.edges().all(|(d, phi, _, _)| x[0] * phi.cos() + x[1] * phi.sin() <= d + 1e-12)
    }
}

fn clip(poly: &[Point], u: Point, c: f64) -> Vec<Point> {
    // keep x·u ≤ c
    let inside = |p: Point| p[0] * u[0] + p[1] * u[1] <= c;
    let cross = |p: Point, q: Point| {
        let fp = p[0] * u[0] + p[1] * u[1] - c;
        let fq = q[0] * u[0] + q[1] * u[1] - c;
        let t = fp / (fp - fq);
        [p[0] + t * (q[0] - p[0]), p[1] + t * (q[1] - p[1])]
    };
    let mut out = Vec::with_capacity(poly.len() + 1);
    for k in 0..poly.len() {
        let p = poly[k];
        let q = poly[(k + 1) % poly.len()];
        match (inside(p), inside(q)) {
            (true, true) => out.push(q),
            (true, false) => out.push(cross(p, q)),
            (false, true) => {
                out.push(cross(p, q));
                out.push(q);
            }
            (false, false) => {}
        }
    }
    out
}

/// Voronoi cells of the points on the torus, each relative to its center.
pub fn voronoi_cells(points: &[Point]) -> Vec<Cell> {
    (0..points.len())
        .map(|t| {
            let mut poly = vec![[-1.0, -1.0], [1.0, -1.0], [1.0, 1.0], [-1.0, 1.0]];
            for (l, &q) in points.iter().enumerate() {
                let d = min_image(q, points[t]);
                for n1 in -2..=2 {
                    for n2 in -2..=2 {
                        if l == t && n1 == 0 && n2 == 0 {
                            continue;
                        }
                        let v = [d[0] + n1 as f64, d[1] + n2 as f64];
                        let c = 0.5 * (v[0] * v[0] + v[1] * v[1]);
                        poly = clip(&poly, v, c);
                    }
                }
            }
            // drop near-duplicate vertices
            let mut clean: Vec<Point> = Vec::new();
            for p in poly {
                if clean.last().is_none_or(|q: &Point| (p[0] - q[0]).hypot(p[1] - q[1]) > 1e-13) {
                    clean.push(p);
                }
            }
            while clean.len() > 1 {
                let (a, b) = (clean[0], clean[clean.len() - 1]);
                if (a[0] - b[0]).hypot(a[1] - b[1]) > 1e-13 {
                    break;
                }
                clean.pop();
            }
            Cell { vertices: clean }
        })
        .collect()
}

/// Quadrature resolution; `refine` doubles every count.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Quadrature {
    /// Gauss nodes per radial panel in the annulus δ0 < r < r0.
    pub radial: usize,
    /// Trapezoid points in angle on the annulus.
    pub angular: usize,
    /// Gauss nodes per edge sector in angle and per radial panel outside r0.
    pub sector_theta: usize,
    pub sector_r: usize,
    /// Number of geometric radial panels in each outer sector.
    pub sector_panels: usize,
}

impl Default for Quadrature {
    fn default() -> Self {
        Self { radial: 16, angular: 64, sector_theta: 32, sector_r: 16, sector_panels: 3 }
    }
}

impl Quadrature {
    pub fn refine(self) -> Self {
        Self {
            radial: 2 * self.radial,
            angular: 2 * self.angular,
            sector_theta: 2 * self.sector_theta,
            sector_r: 2 * self.sector_r,
            sector_panels: self.sector_panels + 1,
        }
    }
}

fn gauss(n: usize) -> Vec<(f64, f64)> {
    GaussLegendre::new(NonZeroUsize::new(n).expect("positive node count"))
        .as_node_weight_pairs()
        .to_vec()
}

/// Density near one blowup point written as r^{−m} g(x) with g(center) = 1.
pub trait Density: Sync {
    /// log g at the offset x from the center (|x| small or moderate).
    fn log_g(&self, x: Point) -> f64;
    /// Full density f at offset x outside the subtraction disk.
    fn value(&self, x: Point) -> f64;
}

/// |x|^{−m} on B(0, r0), zero outside.
pub struct Synthetic;

impl Density for Synthetic {
    fn log_g(&self, _x: Point) -> f64 {
        0.0
    }
    fn value(&self, _x: Point) -> f64 {
        0.0
    }
}

/// (h_i(x)/h_i(p_t)) e^{2πm Σ_l (G(x,p_l) − G*(p_t,p_l))}.
pub struct BubbleDensity<'a> {
    ev: &'a GreenEvaluator,
    cfg: &'a BlowupConfiguration,
    i: usize,
    t: usize,
    m: f64,
    log_h0: f64,
    robin: f64,
    others: Vec<f64>,
}

impl<'a> BubbleDensity<'a> {
    pub fn new(ev: &'a GreenEvaluator, cfg: &'a BlowupConfiguration, i: usize, t: usize) -> Result<Self> {
        if i >= cfg.n() || t >= cfg.num_points() {
            return Err(Error::Input(format!("index (i={i}, t={t}) out of range")));
        }
        let p = cfg.points[t];
        let others = (0..cfg.num_points())
            .map(|l| if l == t { Ok(0.0) } else { ev.green(p, cfg.points[l]) })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            ev,
            cfg,
            i,
            t,
            m: cfg.m_min(),
            log_h0: cfg.weights[i].log_value(p),
            robin: ev.robin_constant(),
            others,
        })
    }

    fn at(&self, x: Point) -> Point {
        let p = self.cfg.points[self.t];
        [p[0] + x[0], p[1] + x[1]]
    }
}

impl Density for BubbleDensity<'_> {
    fn log_g(&self, x: Point) -> f64 {
        let y = self.at(x);
        let p = self.cfg.points[self.t];
        let mut s = self.ev.regular_part(y, p) - self.robin;
        for (l, &q) in self.cfg.points.iter().enumerate() {
            if l != self.t {
                s += self.ev.green(y, q).unwrap_or(f64::INFINITY) - self.others[l];
            }
        }
        self.cfg.weights[self.i].log_value(y) - self.log_h0 + TWO_PI * self.m * s
    }

    fn value(&self, x: Point) -> f64 {
        let r = x[0].hypot(x[1]);
        (self.log_g(x) - self.m * r.ln()).exp()
    }
}

/// Pieces of one bracket evaluation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BracketParts {
    pub delta0: f64,
    pub r0: f64,
    /// ∫_{δ0<r<r0} r^{−m}(g − 1) dA.
    pub annulus: f64,
    /// ∫_{Ω_t \ B(r0)} f dA.
    pub outer: f64,
    /// Angular mean of g − 1 is c2 r² + c4 r⁴ + O(r⁶) near the center.
    pub c2: f64,
    pub c4: f64,
}

fn annulus_integral<D: Density + ?Sized>(dens: &D, m: f64, delta0: f64, r0: f64, q: Quadrature) -> f64 {
    let nodes = gauss(q.radial);
    // dyadic panels from δ0 up to r0
    let mut edges = vec![delta0];
    while edges.last().copied().unwrap_or(r0) * 2.0 < r0 {
        let next = edges.last().unwrap() * 2.0;
        edges.push(next);
    }
    edges.push(r0);
    let mut total = 0.0;
    for w in edges.windows(2) {
        let (a, b) = (w[0], w[1]);
        for &(x, wx) in &nodes {
            let r = 0.5 * (a + b) + 0.5 * (b - a) * x;
            let ring: f64 = (0..q.angular)
                .map(|k| {
                    let th = TWO_PI * k as f64 / q.angular as f64;
                    dens.log_g([r * th.cos(), r * th.sin()]).exp_m1()
                })
                .sum::<f64>()
                * TWO_PI
                / q.angular as f64;
            total += 0.5 * (b - a) * wx * r.powf(1.0 - m) * ring;
        }
    }
    total
}

fn outer_integral<D: Density + ?Sized>(dens: &D, cell: &Cell, r0: f64, q: Quadrature) -> f64 {
    let tn = gauss(q.sector_theta);
    let rn = gauss(q.sector_r);
    let mut total = 0.0;
    for (d, phi, ta, tb) in cell.edges() {
        for &(x, wx) in &tn {
            let th = 0.5 * (ta + tb) + 0.5 * (tb - ta) * x;
            let big_r = d / (th - phi).cos();
            // geometric panels between r0 and R(θ)
            let ratio = (big_r / r0).powf(1.0 / q.sector_panels as f64);
            let mut a = r0;
            let mut sum_r = 0.0;
            for _ in 0..q.sector_panels {
                let b = a * ratio;
                for &(y, wy) in &rn {
                    let r = 0.5 * (a + b) + 0.5 * (b - a) * y;
                    sum_r += 0.5 * (b - a) * wy * r * dens.value([r * th.cos(), r * th.sin()]);
                }
                a = b;
            }
            total += 0.5 * (tb - ta) * wx * sum_r;
        }
    }
    total
}

fn ring_mean<D: Density + ?Sized>(dens: &D, r: f64, angular: usize) -> f64 {
    (0..angular)
        .map(|k| {
            let th = TWO_PI * k as f64 / angular as f64;
            dens.log_g([r * th.cos(), r * th.sin()]).exp_m1()
        })
        .sum::<f64>()
        / angular as f64
}

/// (c2, c4) from the ring means at δ and δ/2; odd orders average out.
fn ring_coefficients<D: Density + ?Sized>(dens: &D, delta: f64, angular: usize) -> (f64, f64) {
    let a1 = ring_mean(dens, delta, angular);
    let a2 = ring_mean(dens, 0.5 * delta, angular);
    let c4 = (a1 - 4.0 * a2) / (0.75 * delta.powi(4));
    ((a1 - c4 * delta.powi(4)) / (delta * delta), c4)
}

/// Evaluates the pieces of the bracket for one cell.
pub fn bracket_parts<D: Density + ?Sized>(dens: &D, m: f64, cell: &Cell, delta0: f64, q: Quadrature) -> Result<BracketParts> {
    let r0 = 0.5 * cell.inradius();
    if !(delta0 > 0.0 && delta0 < r0) {
        return Err(Error::Input(format!("δ0 = {delta0} must lie in (0, r0 = {r0:.4})")));
    }
    let (c2, c4) = ring_coefficients(dens, delta0, q.angular);
    Ok(BracketParts {
        delta0,
        r0,
        annulus: annulus_integral(dens, m, delta0, r0, q),
        outer: outer_integral(dens, cell, r0, q),
        c2,
        c4,
    })
}

impl BracketParts {
    /// δ0^{2−m} − ((m−2)/2π) ∫_{Ω_t \ B(δ0)} f, with the pure r^{−m} part of the
    /// annulus integrated in closed form.
    pub fn value(&self, m: f64) -> f64 {
        self.r0.powf(2.0 - m) - (m - 2.0) / TWO_PI * (self.annulus + self.outer)
    }

    /// The δ0 → 0 limit: adds the disk B(δ0) back using the even Taylor
    /// terms of the ring mean, leaving an O(δ0^{8−m}) error.
    pub fn extrapolated(&self, m: f64) -> f64 {
        let d = self.delta0;
        self.value(m) - (m - 2.0) * (self.c2 * d.powf(4.0 - m) / (4.0 - m) + self.c4 * d.powf(6.0 - m) / (6.0 - m))
    }
}

/// ∫_{δ0<r<r0} r^{−m} dA by quadrature alone (no closed-form subtraction).
pub fn raw_annulus(m: f64, delta0: f64, r0: f64, q: Quadrature) -> f64 {
    struct One;
    impl Density for One {
        fn log_g(&self, _x: Point) -> f64 {
            2f64.ln()
        }
        fn value(&self, _x: Point) -> f64 {
            0.0
        }
    }
    // g = 2 so g − 1 = 1
    annulus_integral(&One, m, delta0, r0, q)
}

fn check_bracket_regime(m: f64, delta0: f64) -> Result<()> {
    if m >= 4.0 - 1e-3 {
        return Err(Error::WrongRegime(format!("m = {m} is not below 4; use the b coefficients")));
    }
    if !(1e-3..=0.1).contains(&delta0) {
        return Err(Error::Input(format!("δ0 = {delta0} outside [1e-3, 0.1]")));
    }
    Ok(())
}

/// Finite-δ0 bracket and its extrapolated limit for component i at point t.
pub fn regularized_bracket(
    ev: &GreenEvaluator,
    cfg: &BlowupConfiguration,
    i: usize,
    t: usize,
    delta0: f64,
    q: Quadrature,
) -> Result<BracketParts> {
    let m = cfg.m_min();
    check_bracket_regime(m, delta0)?;
    let cells = voronoi_cells(&cfg.points);
    let dens = BubbleDensity::new(ev, cfg, i, t)?;
    let parts = bracket_parts(&dens, m, &cells[t], delta0, q)?;
    let fine = bracket_parts(&dens, m, &cells[t], delta0, q.refine())?;
    let (a, b) = (parts.value(m), fine.value(m));
    if !((a - b).abs() <= 1e-6 * b.abs().max(1.0)) {
        return Err(Error::Resolution(format!("bracket changed from {a} to {b} under refinement")));
    }
    Ok(fine)
}

pub fn check_masses(cfg: &BlowupConfiguration, summary: &GlobalSolutionSummary) -> Result<()> {
    if summary.n() != cfg.n() {
        return Err(Error::Input("summary and configuration have different n".into()));
    }
    for i in 0..cfg.n() {
        if (summary.m[i] - cfg.masses[i]).abs() > MASS_MATCH * cfg.masses[i] {
            return Err(Error::Input(format!(
                "mass m_{} = {} in the configuration but {} in the summary",
                i + 1,
                cfg.masses[i],
                summary.m[i]
            )));
        }
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BracketRow {
    pub i: usize,
    pub t: usize,
    pub delta0: f64,
    pub value: f64,
    pub extrapolated: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LeadingTermReport {
    pub cells: String,
    pub i1: Vec<usize>,
    pub m: f64,
    pub c: Vec<f64>,
    pub brackets: Vec<BracketRow>,
    /// Extrapolated bracket at the smallest δ0, per (i ∈ I_1, t).
    pub bracket_limit: Vec<Vec<f64>>,
    /// max over (i, t) of the relative change between the two smallest δ0.
    pub cauchy_defect: f64,
    pub d_total: f64,
    pub convention_factor: f64,
}

impl LeadingTermReport {
    /// Λ_I ≈ convention_factor · D · ε^{m−2} / N.
    pub fn lambda_prediction(&self, eps: f64, n_points: usize) -> f64 {
        self.convention_factor * self.d_total * eps.powf(self.m - 2.0) / n_points as f64
    }
}

/// D = Σ_{i∈I_1} e^{D_i−α_i} Σ_t c_t · lim bracket(i, t), with brackets
/// tabulated at each δ0 in `deltas` (sorted descending).
pub fn d_total(
    ev: &GreenEvaluator,
    cfg: &BlowupConfiguration,
    summary: &GlobalSolutionSummary,
    deltas: &[f64],
    convention_factor: f64,
    q: Quadrature,
) -> Result<LeadingTermReport> {
    check_masses(cfg, summary)?;
    if deltas.is_empty() {
        return Err(Error::Input("at least one δ0 is required".into()));
    }
    if convention_factor != 1.0 && convention_factor != 2.0 {
        return Err(Error::Input(format!("convention factor must be 1 or 2, got {convention_factor}")));
    }
    let m = cfg.m_min();
    for &d in deltas {
        check_bracket_regime(m, d)?;
    }
    let i1 = cfg.i1();
    let coeff = crate::geometry::coefficient_report(ev, cfg)?;
    let n_pts = cfg.num_points();
    let jobs: Vec<(usize, usize, f64)> = i1
        .iter()
        .flat_map(|&i| (0..n_pts).flat_map(move |t| deltas.iter().map(move |&d| (i, t, d))))
        .collect();
    let rows = jobs
        .par_iter()
        .map(|&(i, t, d)| {
            let p = regularized_bracket(ev, cfg, i, t, d, q)?;
            Ok(BracketRow { i, t, delta0: d, value: p.value(m), extrapolated: p.extrapolated(m) })
        })
        .collect::<Result<Vec<_>>>()?;
    let mut limit = vec![vec![0.0; n_pts]; i1.len()];
    let mut cauchy: f64 = 0.0;
    for (a, &i) in i1.iter().enumerate() {
        for (t, slot) in limit[a].iter_mut().enumerate() {
            let seq: Vec<f64> = rows.iter().filter(|r| r.i == i && r.t == t).map(|r| r.extrapolated).collect();
            *slot = *seq.last().expect("nonempty");
            for w in seq.windows(2) {
                cauchy = cauchy.max(((w[1] - w[0]) / w[1]).abs());
            }
        }
    }
    let mut d = 0.0;
    for (a, &i) in i1.iter().enumerate() {
        let e = summary.tail_coefficient(i);
        d += e * (0..n_pts).map(|t| coeff.c[t] * limit[a][t]).sum::<f64>();
    }
    Ok(LeadingTermReport {
        cells: "voronoi".into(),
        i1,
        m,
        c: coeff.c,
        brackets: rows,
        bracket_limit: limit,
        cauchy_defect: cauchy,
        d_total: d,
        convention_factor,
    })
}

pub fn write_brackets_csv<W: Write>(rows: &[BracketRow], mut w: W) -> Result<()> {
    writeln!(w, "i,t,delta0,bracket,extrapolated")?;
    for r in rows {
        writeln!(w, "{},{},{:.17e},{:.17e},{:.17e}", r.i + 1, r.t + 1, r.delta0, r.value, r.extrapolated)?;
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BReport {
    /// b[i][t].
    pub b: Vec<Vec<f64>>,
    pub total: f64,
}

impl BReport {
    /// Λ_I ≈ −4 Σ b_it ε² log(1/ε).
    pub fn lambda_prediction(&self, eps: f64) -> f64 {
        -4.0 * self.total * eps * eps * (1.0 / eps).ln()
    }
}

/// b_it = e^{D_i−α_i}(¼Δh_i/h_i − K + 4πN + 4π(∇h_i/h_i)·g_t + 16π²|g_t|²)
/// with g_t = Σ_l ∇_1 G*(p_t, p_l).
pub fn b_coefficients(ev: &GreenEvaluator, cfg: &BlowupConfiguration, summary: &GlobalSolutionSummary) -> Result<BReport> {
    if let Some(m) = cfg.masses.iter().find(|m| (*m - 4.0).abs() > 1e-6) {
        return Err(Error::WrongRegime(format!("b coefficients need every m_i = 4; found {m}")));
    }
    check_masses(cfg, summary)?;
    let n_pts = cfg.num_points();
    let big_n = n_pts as f64;
    let grads = (0..n_pts).map(|t| gstar_grad(ev, &cfg.points, t)).collect::<Result<Vec<_>>>()?;
    // keep the evaluator honest about coincident points
    for t in 0..n_pts {
        gstar_sum(ev, &cfg.points, t)?;
    }
    let b: Vec<Vec<f64>> = (0..cfg.n())
        .map(|i| {
            let e = summary.tail_coefficient(i);
            (0..n_pts)
                .map(|t| {
                    let p = cfg.points[t];
                    let h = &cfg.weights[i];
                    let g = grads[t];
                    let gl = h.grad_log(p);
                    e * (0.25 * h.lap_over_h(p) - cfg.curvature(p)
                        + 4.0 * PI * big_n
                        + 4.0 * PI * (gl[0] * g[0] + gl[1] * g[1])
                        + 16.0 * PI * PI * (g[0] * g[0] + g[1] * g[1]))
                })
                .collect()
        })
        .collect();
    let total = b.iter().flatten().sum();
    Ok(BReport { b, total })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::WeightFunction;
    use crate::green::GreenMode;

    #[test]
    fn cells_tile_the_torus() {
        for pts in [vec![[0.3, 0.3]], vec![[0.1, 0.2], [0.6, 0.7]], vec![[0.1, 0.1], [0.4, 0.8], [0.75, 0.3]]] {
            let cells = voronoi_cells(&pts);
            let area: f64 = cells.iter().map(|c| c.area()).sum();
            assert!((area - 1.0).abs() < 1e-12, "{area}");
        }
        let single = &voronoi_cells(&[[0.3, 0.3]])[0];
        assert!((single.inradius() - 0.5).abs() < 1e-14);
        let pair = &voronoi_cells(&[[0.1, 0.2], [0.6, 0.7]])[0];
        assert!((pair.inradius() - 0.5f64.sqrt() / 2.0).abs() < 1e-12);
    }

    #[test]
    fn synthetic_bracket_is_exact() {
        let cell = &voronoi_cells(&[[0.5, 0.5]])[0];
        let m = 3.3;
        for delta0 in [0.08, 0.02, 0.005] {
            let p = bracket_parts(&Synthetic, m, cell, delta0, Quadrature::default()).unwrap();
            assert!((p.value(m) - p.r0.powf(2.0 - m)).abs() < 1e-10);
            // the same number assembled from a quadrature of r^{−m}
            let raw = raw_annulus(m, delta0, p.r0, Quadrature::default());
            let assembled = delta0.powf(2.0 - m) - (m - 2.0) / TWO_PI * raw;
            assert!((assembled - p.r0.powf(2.0 - m)).abs() < 1e-10 * delta0.powf(2.0 - m));
        }
    }

    #[test]
    fn b_for_single_bubble() {
        let ev = GreenEvaluator::new(GreenMode::Fourier);
        let cfg = BlowupConfiguration::new(vec![[0.3, 0.3]], vec![4.0], vec![WeightFunction::one()]).unwrap();
        let (_, s) = crate::radial::solve(
            &crate::system_algebra::InteractionMatrix::scalar(1.0).unwrap(),
            &crate::radial::HeightVector::zeros(1),
            1e5,
            1e-10,
        )
        .unwrap();
        let rep = b_coefficients(&ev, &cfg, &s).unwrap();
        assert!((rep.b[0][0] / (256.0 * PI) - 1.0).abs() < 1e-6);
        let wrong = BlowupConfiguration::new(vec![[0.3, 0.3]], vec![3.5], vec![WeightFunction::one()]).unwrap();
        assert!(matches!(b_coefficients(&ev, &wrong, &s), Err(Error::WrongRegime(_))));
    }
}
