//! Global radial solutions of −ΔU_i = Σ_j a_ij e^{U_j} on the plane and
//! their asymptotic data (σ_i, m_i, D_i).
//!
//! The equation is integrated in s = log r. Per component the state carries
//! U, W = rU', the mass S = ∫ e^U r dr and the log-moment T = ∫ log r e^U r dr.

pub mod ode;

use std::io::Write;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::system_algebra::InteractionMatrix;
use ode::{Controls, Node};

pub const DEFAULT_R_MAX: f64 = 1e5;
pub const DEFAULT_TOL: f64 = 1e-10;

/// Step cap in s while the profile is being recorded.
const PROFILE_STEP: f64 = 0.05;
/// Give up on integrability beyond this s.
const S_CAP: f64 = 5000.0;
/// Relative size of the neglected tail at which integration stops.
const TAIL_EPS: f64 = 1e-16;
/// A component mass beyond this is treated as divergent.
const MASS_CAP: f64 = 1e8;

/// Heights α_i = −U_i(0). The normalized form has min α_i = 0, but shifted
/// vectors are accepted since the scaling law is exercised directly.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HeightVector {
    pub alpha: Vec<f64>,
}

impl HeightVector {
    pub fn new(alpha: Vec<f64>) -> Result<Self> {
        if alpha.is_empty() {
            return Err(Error::Input("height vector is empty".into()));
        }
        if let Some(a) = alpha.iter().find(|a| !a.is_finite()) {
            return Err(Error::Input(format!("non-finite height {a}")));
        }
        Ok(Self { alpha })
    }

    pub fn zeros(n: usize) -> Self {
        Self { alpha: vec![0.0; n] }
    }

    pub fn is_normalized(&self) -> bool {
        let min = self.alpha.iter().copied().fold(f64::INFINITY, f64::min);
        min == 0.0
    }

    pub fn shifted(&self, c: f64) -> Self {
        Self { alpha: self.alpha.iter().map(|a| a + c).collect() }
    }
}

/// Taylor data used on [0, r_s].
#[derive(Debug, Clone, PartialEq)]
struct Series {
    alpha: Vec<f64>,
    c: Vec<f64>,
    d: Vec<f64>,
    r_s: f64,
}

impl Series {
    fn new(a: &InteractionMatrix, alpha: &[f64], r_s: f64) -> Self {
        let n = alpha.len();
        let e: Vec<f64> = alpha.iter().map(|x| (-x).exp()).collect();
        let c: Vec<f64> = (0..n).map(|i| (0..n).map(|j| a.get(i, j) * e[j]).sum()).collect();
        let d: Vec<f64> = (0..n)
            .map(|i| (0..n).map(|j| a.get(i, j) * e[j] * c[j]).sum::<f64>() / 64.0)
            .collect();
        Self { alpha: alpha.to_vec(), c, d, r_s }
    }

    fn u(&self, i: usize, r: f64) -> f64 {
        let r2 = r * r;
        -self.alpha[i] - self.c[i] * r2 / 4.0 + self.d[i] * r2 * r2
    }

    fn du(&self, i: usize, r: f64) -> f64 {
        -self.c[i] * r / 2.0 + 4.0 * self.d[i] * r * r * r
    }

    /// State (U, W, S, T) at r_s.
    fn state(&self) -> Vec<f64> {
        let n = self.alpha.len();
        let r = self.r_s;
        let (r2, r4, lr) = (r * r, r.powi(4), r.ln());
        let mut y = vec![0.0; 4 * n];
        for i in 0..n {
            let e = (-self.alpha[i]).exp();
            let c = self.c[i];
            y[i] = self.u(i, r);
            y[n + i] = -c * r2 / 2.0 + 4.0 * self.d[i] * r4;
            y[2 * n + i] = e * (r2 / 2.0 - c * r4 / 16.0);
            y[3 * n + i] = e * ((r2 / 2.0 * lr - r2 / 4.0) - c / 4.0 * (r4 / 4.0 * lr - r4 / 16.0));
        }
        y
    }
}

/// Values of the tail beyond the last integration node, in closed form.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TailData {
    pub s_end: f64,
    pub sigma_tail: Vec<f64>,
    pub tau_tail: Vec<f64>,
    pub w_end: Vec<f64>,
    pub s_int: Vec<f64>,
    pub t_int: Vec<f64>,
}

/// Numerical radial solution with dense output.
#[derive(Debug, Clone, PartialEq)]
pub struct RadialProfile {
    pub n: usize,
    pub alpha: HeightVector,
    pub r_max: f64,
    pub tol: f64,
    series: Series,
    nodes: Vec<Node>,
    tail: TailData,
}

fn profile_step(s: f64, s_max: f64) -> f64 {
    if s < s_max {
        PROFILE_STEP
    } else {
        f64::INFINITY
    }
}

/// Integrates the radial system from U_i(0) = −α_i, U_i'(0) = 0.
pub fn integrate(a: &InteractionMatrix, alpha: &HeightVector, r_max: f64, tol: f64) -> Result<RadialProfile> {
    let n = a.n();
    if alpha.alpha.len() != n {
        return Err(Error::Input(format!("{} heights for a {n}x{n} system", alpha.alpha.len())));
    }
    if !(r_max >= 1e3) {
        return Err(Error::Input(format!("r_max = {r_max} must be at least 1e3")));
    }
    if !(tol > 1e-14 && tol < 1e-3) {
        return Err(Error::Input(format!("tol = {tol} outside (1e-14, 1e-3)")));
    }
    let r_s = 0.5 * tol.powf(1.0 / 6.0);
    let series = Series::new(a, &alpha.alpha, r_s);
    let coup: Vec<f64> = (0..n * n).map(|k| a.get(k / n, k % n)).collect();

    let rhs = move |s: f64, y: &[f64], dy: &mut [f64]| {
        let n = y.len() / 4;
        let mut e = [0.0f64; 16];
        let mut ev = Vec::new();
        let e: &mut [f64] = if n <= 16 {
            &mut e[..n]
        } else {
            ev.resize(n, 0.0);
            &mut ev
        };
        for j in 0..n {
            e[j] = (y[j] + 2.0 * s).exp();
        }
        for i in 0..n {
            dy[i] = y[n + i];
            dy[n + i] = -(0..n).map(|j| coup[i * n + j] * e[j]).sum::<f64>();
            dy[2 * n + i] = e[i];
            dy[3 * n + i] = s * e[i];
        }
    };

    let s0 = r_s.ln();
    let y0 = series.state();
    let mut dy0 = vec![0.0; 4 * n];
    rhs(s0, &y0, &mut dy0);
    let start = Node { t: s0, y: y0, dy: dy0 };
    let s_max = r_max.ln();
    let ctl = Controls {
        tol,
        h_init: 0.01,
        h_min: 1e-12,
        h_max: profile_step,
        h_max_arg: s_max,
    };
    let tail_done = |node: &Node| {
        if node.t < s_max {
            return false;
        }
        (0..n).all(|i| {
            let m_eff = -node.y[n + i];
            let e = (node.y[i] + 2.0 * node.t).exp();
            m_eff > 2.0 && e / (m_eff - 2.0) < TAIL_EPS * node.y[2 * n + i]
        })
    };
    let diverged = |node: &Node| {
        node.y.iter().any(|v| !v.is_finite()) || node.y[2 * n..3 * n].iter().any(|&m| m > MASS_CAP)
    };
    let nodes = match ode::integrate(rhs, start, ctl, S_CAP, |node| tail_done(node) || diverged(node)) {
        Err(Error::Stiffness { r }) if !r.is_finite() || r > r_max => {
            return Err(Error::NonIntegrable(format!("solution blew up near r = {r:.3e}")));
        }
        other => other?,
    };
    let last = nodes.last().expect("nonempty");
    if !tail_done(last) {
        let m_eff: Vec<f64> = (0..n).map(|i| -last.y[n + i]).collect();
        return Err(Error::NonIntegrable(format!(
            "effective exponents {m_eff:?} at r = e^{:.1} do not exceed 2",
            last.t
        )));
    }
    let s_end = last.t;
    let mut sigma_tail = vec![0.0; n];
    let mut tau_tail = vec![0.0; n];
    for i in 0..n {
        let q = -last.y[n + i] - 2.0;
        let e = (last.y[i] + 2.0 * s_end).exp();
        sigma_tail[i] = e / q;
        tau_tail[i] = e * (s_end / q + 1.0 / (q * q));
    }
    let tail = TailData {
        s_end,
        sigma_tail,
        tau_tail,
        w_end: last.y[n..2 * n].to_vec(),
        s_int: last.y[2 * n..3 * n].to_vec(),
        t_int: last.y[3 * n..4 * n].to_vec(),
    };
    Ok(RadialProfile { n, alpha: alpha.clone(), r_max, tol, series, nodes, tail })
}

impl RadialProfile {
    /// Largest radius covered by integration nodes.
    pub fn r_end(&self) -> f64 {
        self.tail.s_end.exp()
    }

    pub fn tail(&self) -> &TailData {
        &self.tail
    }

    fn locate(&self, s: f64) -> usize {
        let k = self.nodes.partition_point(|n| n.t <= s);
        k.clamp(1, self.nodes.len() - 1)
    }

    /// U_i(r) by series on [0, r_s] and Hermite interpolation beyond.
    pub fn u(&self, i: usize, r: f64) -> f64 {
        if r <= self.series.r_s {
            return self.series.u(i, r);
        }
        let s = r.ln();
        let k = self.locate(s);
        ode::hermite(&self.nodes[k - 1], &self.nodes[k], i, s)
    }

    /// dU_i/dr.
    pub fn du(&self, i: usize, r: f64) -> f64 {
        if r <= self.series.r_s {
            return self.series.du(i, r);
        }
        let s = r.ln();
        let k = self.locate(s);
        ode::hermite(&self.nodes[k - 1], &self.nodes[k], self.n + i, s) / r
    }

    /// Recorded grid: r = 0, r_s, then every integration node up to r_max.
    pub fn grid(&self) -> Vec<f64> {
        let mut g = vec![0.0];
        g.extend(self.nodes.iter().map(|n| n.t.exp()).take_while(|&r| r <= self.r_max * (1.0 + 1e-12)));
        g
    }

    /// Writes r, U_1..U_n, dU_1..dU_n as CSV.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        let mut head = vec!["r".to_string()];
        head.extend((1..=self.n).map(|i| format!("U_{i}")));
        head.extend((1..=self.n).map(|i| format!("dU_{i}")));
        writeln!(w, "{}", head.join(","))?;
        for r in self.grid() {
            let mut row = vec![format!("{r:.17e}")];
            row.extend((0..self.n).map(|i| format!("{:.17e}", self.u(i, r))));
            row.extend((0..self.n).map(|i| format!("{:.17e}", self.du(i, r))));
            writeln!(w, "{}", row.join(","))?;
        }
        Ok(())
    }
}

/// Asymptotic data of one global radial solution.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GlobalSolutionSummary {
    pub alpha: HeightVector,
    pub sigma: Vec<f64>,
    pub m: Vec<f64>,
    pub m_min: f64,
    #[serde(rename = "D")]
    pub d: Vec<f64>,
    /// max_i |W_i(end) − (tail mass seen by i) + m_i|: agreement of the two
    /// exponent estimates.
    pub tail_residual: f64,
}

pub fn summarize(a: &InteractionMatrix, profile: &RadialProfile) -> Result<GlobalSolutionSummary> {
    let n = profile.n;
    if a.n() != n {
        return Err(Error::Input("matrix and profile sizes differ".into()));
    }
    let t = &profile.tail;
    let sigma: Vec<f64> = (0..n).map(|i| t.s_int[i] + t.sigma_tail[i]).collect();
    let tau: Vec<f64> = (0..n).map(|i| t.t_int[i] + t.tau_tail[i]).collect();
    let m = a.apply(&sigma);
    let d = a.apply(&tau);
    let tail_mass = a.apply(&t.sigma_tail);
    let tail_residual = (0..n)
        .map(|i| (t.w_end[i] - tail_mass[i] + m[i]).abs())
        .fold(0.0, f64::max);
    let limit = 10.0 * profile.tol;
    if tail_residual > limit {
        return Err(Error::InconsistentTail { residual: tail_residual, limit });
    }
    let m_min = m.iter().copied().fold(f64::INFINITY, f64::min);
    Ok(GlobalSolutionSummary { alpha: profile.alpha.clone(), sigma, m, m_min, d, tail_residual })
}

/// Integrate and summarize in one call.
pub fn solve(a: &InteractionMatrix, alpha: &HeightVector, r_max: f64, tol: f64) -> Result<(RadialProfile, GlobalSolutionSummary)> {
    let p = integrate(a, alpha, r_max, tol)?;
    let s = summarize(a, &p)?;
    Ok((p, s))
}

impl GlobalSolutionSummary {
    pub fn n(&self) -> usize {
        self.sigma.len()
    }

    /// |Σσ_i(m_i − 4)| / Σσ_i.
    pub fn pohozaev_defect(&self) -> f64 {
        let num: f64 = self.sigma.iter().zip(&self.m).map(|(s, m)| s * (m - 4.0)).sum();
        let den: f64 = self.sigma.iter().sum();
        num.abs() / den
    }

    /// |Σ_ij a^ij (m_i−2)(m_j−2)/4 − Σ_ij a^ij|.
    pub fn quadratic_pohozaev_defect(&self, a: &InteractionMatrix) -> Result<f64> {
        let inv = a.inverse()?;
        let n = self.n();
        let mut lhs = 0.0;
        let mut rhs = 0.0;
        for i in 0..n {
            for j in 0..n {
                lhs += inv[(i, j)] * (self.m[i] - 2.0) * (self.m[j] - 2.0) / 4.0;
                rhs += inv[(i, j)];
            }
        }
        Ok((lhs - rhs).abs())
    }

    /// Either m < 4 − tol or every m_i equals 4 within tol.
    pub fn dichotomy_holds(&self, tol: f64) -> bool {
        self.m_min < 4.0 - tol || self.m.iter().all(|m| (m - 4.0).abs() < tol)
    }

    /// e^{D_i − α_i}, the coefficient of r^{−m_i} in e^{U_i}.
    pub fn tail_coefficient(&self, i: usize) -> f64 {
        (self.d[i] - self.alpha.alpha[i]).exp()
    }
}

/// Comparison of a profile with the two-term expansion
/// U_i ≈ −m_i log r + D_i − α_i − Σ_j a_ij (m_j−2)^{−2} e^{D_j−α_j} r^{2−m_j}.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExpansionReport {
    pub window: (f64, f64),
    /// Sup over the window of |U_i − two-term expansion|.
    pub sup_residual: Vec<f64>,
    /// Constant term of the least-squares fit of U_i + m_i log r.
    pub fitted_constant: Vec<f64>,
    pub constant_error: Vec<f64>,
    /// Fitted power-law exponent of the residual over the window.
    pub decay_exponent: Vec<f64>,
    /// Kept correction at the reference radius: predicted and measured.
    pub r_ref: f64,
    pub correction_predicted: Vec<f64>,
    pub correction_measured: Vec<f64>,
    pub correction_rel_error: Vec<f64>,
}

pub fn correction_term(a: &InteractionMatrix, s: &GlobalSolutionSummary, i: usize, r: f64) -> f64 {
    -(0..s.n())
        .map(|j| {
            let q = s.m[j] - 2.0;
            a.get(i, j) / (q * q) * s.tail_coefficient(j) * r.powf(2.0 - s.m[j])
        })
        .sum::<f64>()
}

pub fn expansion_residual(
    a: &InteractionMatrix,
    summary: &GlobalSolutionSummary,
    profile: &RadialProfile,
    window: (f64, f64),
) -> Result<ExpansionReport> {
    let (lo, hi) = window;
    if !(lo > 0.0 && lo < hi && lo >= profile.r_max / 100.0 * (1.0 - 1e-12) && hi <= profile.r_max * (1.0 + 1e-12)) {
        return Err(Error::Input(format!(
            "window [{lo}, {hi}] must lie in [r_max/100, r_max] with r_max = {}",
            profile.r_max
        )));
    }
    let n = profile.n;
    let samples = 201;
    let radii: Vec<f64> = (0..samples)
        .map(|k| (lo.ln() + (hi.ln() - lo.ln()) * k as f64 / (samples - 1) as f64).exp())
        .collect();

    // distinct exponents 2 − m_j present in the fit basis
    let mut exps: Vec<f64> = Vec::new();
    for j in 0..n {
        let e = 2.0 - summary.m[j];
        if exps.iter().all(|x| (x - e).abs() > 1e-6) {
            exps.push(e);
        }
    }
    let basis = DMatrix::from_fn(samples, 1 + exps.len(), |k, c| {
        if c == 0 {
            1.0
        } else {
            radii[k].powf(exps[c - 1])
        }
    });
    let svd = basis.svd(true, true);

    let mut rep = ExpansionReport {
        window,
        sup_residual: vec![0.0; n],
        fitted_constant: vec![0.0; n],
        constant_error: vec![0.0; n],
        decay_exponent: vec![0.0; n],
        r_ref: lo,
        correction_predicted: vec![0.0; n],
        correction_measured: vec![0.0; n],
        correction_rel_error: vec![0.0; n],
    };
    for i in 0..n {
        let base = summary.d[i] - summary.alpha.alpha[i];
        let shifted: Vec<f64> = radii.iter().map(|&r| profile.u(i, r) + summary.m[i] * r.ln()).collect();
        let resid: Vec<f64> = radii
            .iter()
            .zip(&shifted)
            .map(|(&r, v)| v - base - correction_term(a, summary, i, r))
            .collect();
        rep.sup_residual[i] = resid.iter().fold(0.0, |acc: f64, v| acc.max(v.abs()));

        let coef = svd
            .solve(&DVector::from_vec(shifted.clone()), 1e-14)
            .map_err(|e| Error::Input(e.to_string()))?;
        rep.fitted_constant[i] = coef[0];
        rep.constant_error[i] = (coef[0] - base).abs();

        // log–log slope of |residual|
        let pts: Vec<(f64, f64)> = radii
            .iter()
            .zip(&resid)
            .filter(|(_, v)| v.abs() > 0.0)
            .map(|(&r, v)| (r.ln(), v.abs().ln()))
            .collect();
        rep.decay_exponent[i] = slope(&pts);

        let pred = correction_term(a, summary, i, lo);
        let meas = profile.u(i, lo) + summary.m[i] * lo.ln() - base;
        rep.correction_predicted[i] = pred;
        rep.correction_measured[i] = meas;
        rep.correction_rel_error[i] = ((meas - pred) / pred).abs();
    }
    Ok(rep)
}

fn slope(pts: &[(f64, f64)]) -> f64 {
    let k = pts.len() as f64;
    if pts.len() < 2 {
        return f64::NAN;
    }
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / k;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / k;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx) * (p.0 - mx)).sum();
    sxy / sxx
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scalar() -> InteractionMatrix {
        InteractionMatrix::scalar(1.0).unwrap()
    }

    #[test]
    fn scalar_bubble_data() {
        let (p, s) = solve(&scalar(), &HeightVector::zeros(1), DEFAULT_R_MAX, DEFAULT_TOL).unwrap();
        assert!((s.sigma[0] - 4.0).abs() < 1e-8, "sigma {}", s.sigma[0]);
        assert!((s.m[0] - 4.0).abs() < 1e-8);
        assert!((s.d[0] - 64f64.ln()).abs() < 1e-8, "D {}", s.d[0]);
        let mut err: f64 = 0.0;
        for k in 0..=4000 {
            let r = 100.0 * k as f64 / 4000.0;
            err = err.max((p.u(0, r) + 2.0 * (1.0 + r * r / 8.0).ln()).abs());
        }
        assert!(err < 1e-6, "sup error {err}");
    }

    #[test]
    fn derivative_matches_closed_form() {
        let p = integrate(&scalar(), &HeightVector::zeros(1), 1e3, 1e-10).unwrap();
        for r in [0.001, 0.5, 3.0, 40.0, 700.0] {
            let exact = -(r / 2.0) / (1.0 + r * r / 8.0);
            assert!((p.du(0, r) - exact).abs() < 1e-6 * (1.0 + exact.abs()), "r={r}");
        }
    }

    #[test]
    fn swap_matrix_reduces_to_scalar() {
        let a = InteractionMatrix::from_rows(&[vec![0.0, 1.0], vec![1.0, 0.0]]).unwrap();
        let (p, s) = solve(&a, &HeightVector::zeros(2), DEFAULT_R_MAX, DEFAULT_TOL).unwrap();
        for i in 0..2 {
            assert!((s.sigma[i] - 4.0).abs() < 1e-8);
        }
        for r in [0.1, 1.0, 10.0, 100.0] {
            assert_eq!(p.u(0, r), p.u(1, r));
        }
    }

    #[test]
    fn scaling_law() {
        let a = InteractionMatrix::from_rows(&[vec![1.0, 2.0], vec![2.0, 1.0]]).unwrap();
        let base = HeightVector::new(vec![0.0, 0.4]).unwrap();
        let (p0, s0) = solve(&a, &base, DEFAULT_R_MAX, DEFAULT_TOL).unwrap();
        let (p1, s1) = solve(&a, &base.shifted(1.0), DEFAULT_R_MAX, DEFAULT_TOL).unwrap();
        for i in 0..2 {
            assert!((s1.sigma[i] - s0.sigma[i]).abs() < 1e-8);
            assert!((s1.d[i] - s0.d[i] - 0.5 * s0.m[i]).abs() < 1e-6);
            for r in [0.3, 2.0, 20.0] {
                let lhs = p1.u(i, r * 0.5f64.exp());
                assert!((lhs + 1.0 - p0.u(i, r)).abs() < 1e-7);
            }
        }
    }

    #[test]
    fn pohozaev_and_dichotomy() {
        let a = InteractionMatrix::from_rows(&[vec![1.0, 2.0], vec![2.0, 1.0]]).unwrap();
        let (_, s) = solve(&a, &HeightVector::new(vec![0.0, 0.7]).unwrap(), DEFAULT_R_MAX, DEFAULT_TOL).unwrap();
        assert!(s.pohozaev_defect() < 1e-8);
        assert!(s.quadratic_pohozaev_defect(&a).unwrap() < 1e-7);
        assert!(s.dichotomy_holds(1e-6));
        assert!(s.m.iter().all(|&m| m > 2.0));
    }

    #[test]
    fn monotone_in_own_height() {
        let a = InteractionMatrix::from_rows(&[vec![1.0, 2.0], vec![2.0, 1.0]]).unwrap();
        let s = |h: f64| solve(&a, &HeightVector::new(vec![0.0, h]).unwrap(), 1e4, 1e-10).unwrap().1;
        let (lo, hi) = (s(0.3), s(0.31));
        assert!(hi.sigma[1] < lo.sigma[1]);
    }

    #[test]
    fn input_errors() {
        let a = scalar();
        assert!(matches!(integrate(&a, &HeightVector::zeros(2), 1e5, 1e-10), Err(Error::Input(_))));
        assert!(matches!(integrate(&a, &HeightVector::zeros(1), 10.0, 1e-10), Err(Error::Input(_))));
        assert!(matches!(integrate(&a, &HeightVector::zeros(1), 1e5, 1e-2), Err(Error::Input(_))));
    }

    #[test]
    fn scalar_expansion() {
        let a = scalar();
        let (p, s) = solve(&a, &HeightVector::zeros(1), DEFAULT_R_MAX, DEFAULT_TOL).unwrap();
        let rep = expansion_residual(&a, &s, &p, (1e3, 1e5)).unwrap();
        // the kept term is −16 r^{−2}; the exact next term is 64 r^{−4}
        assert!((rep.correction_predicted[0] + 16e-6).abs() < 1e-12);
        assert!(rep.correction_rel_error[0] < 0.05);
        assert!(rep.constant_error[0] < 1e-3);
    }
}
