//! Residual, Jacobian action and Newton–Krylov solves for
//! Δu_i + Σ_j a_ij ρ_j (h_j e^{u_j}/∫h_j e^{u_j} − 1) = 0.

use rayon::prelude::*;
use rustfft::num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::WeightFunction;
use crate::pde::grid::{upsample_hat, TorusGrid};
use crate::system_algebra::InteractionMatrix;

/// Largest admissible spread max u − min u before e^{u−max} underflows.
const MAX_SPREAD: f64 = 700.0;

pub struct MeanFieldProblem {
    pub a: InteractionMatrix,
    pub weights: Vec<WeightFunction>,
    pub grid: TorusGrid,
    /// h_i sampled on the grid.
    hv: Vec<Vec<f64>>,
    pub dealias: bool,
}

impl MeanFieldProblem {
    pub fn new(a: InteractionMatrix, weights: Vec<WeightFunction>, resolution: usize) -> Result<Self> {
        if weights.len() != a.n() {
            return Err(Error::Input(format!("{} weights for an {}-component system", weights.len(), a.n())));
        }
        let grid = TorusGrid::new(resolution)?;
        let hv: Vec<Vec<f64>> = weights.iter().map(|w| grid.sample(|x| w.value(x))).collect();
        for (i, h) in hv.iter().enumerate() {
            let lo = h.iter().cloned().fold(f64::INFINITY, f64::min);
            let hi = h.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            if !(lo >= 0.0 && hi > 0.0) || !lo.is_finite() || !hi.is_finite() {
                return Err(Error::Input(format!("h_{} must be nonnegative and not identically zero", i + 1)));
            }
        }
        Ok(Self { a, weights, grid, hv, dealias: false })
    }

    /// Same system on another grid.
    pub fn at_resolution(&self, resolution: usize) -> Result<Self> {
        let mut p = Self::new(self.a.clone(), self.weights.clone(), resolution)?;
        p.dealias = self.dealias;
        Ok(p)
    }

    pub fn n(&self) -> usize {
        self.a.n()
    }

    pub fn h(&self, i: usize) -> &[f64] {
        &self.hv[i]
    }
}

/// n fields stored by their Fourier coefficients, so Δu is formed without a
/// forward transform of u.
#[derive(Debug, Clone, PartialEq)]
pub struct FieldState {
    pub resolution: usize,
    pub coeffs: Vec<Vec<Complex64>>,
    /// ∫h_i e^{u_i} = 1 for every i.
    pub normalized: bool,
}

impl FieldState {
    pub fn zeros(n: usize, resolution: usize) -> Self {
        Self { resolution, coeffs: vec![vec![Complex64::new(0.0, 0.0); resolution * resolution]; n], normalized: false }
    }

    pub fn from_fields(grid: &TorusGrid, u: &[Vec<f64>]) -> Self {
        Self { resolution: grid.resolution(), coeffs: u.iter().map(|f| grid.forward(f)).collect(), normalized: false }
    }

    pub fn n(&self) -> usize {
        self.coeffs.len()
    }

    pub fn fields(&self, grid: &TorusGrid) -> Vec<Vec<f64>> {
        self.coeffs.iter().map(|c| grid.inverse(c.clone())).collect()
    }

    pub fn means(&self) -> Vec<f64> {
        let mm = (self.resolution * self.resolution) as f64;
        self.coeffs.iter().map(|c| c[0].re / mm).collect()
    }

    /// Adds constants to each component.
    pub fn shifted(&self, c: &[f64]) -> Self {
        let mm = (self.resolution * self.resolution) as f64;
        let mut s = self.clone();
        for (coef, &ci) in s.coeffs.iter_mut().zip(c) {
            coef[0] += Complex64::new(ci * mm, 0.0);
        }
        s.normalized = false;
        s
    }

    /// Mean-free gauge.
    pub fn mean_free(&self) -> Self {
        let m: Vec<f64> = self.means().iter().map(|x| -x).collect();
        self.shifted(&m)
    }

    /// Θ_i = u_i − log∫h_i e^{u_i}.
    pub fn normalize(&self, p: &MeanFieldProblem) -> Result<Self> {
        let u = self.fields(&p.grid);
        let logs = (0..self.n()).map(|i| weights(p, i, &u[i]).map(|w| w.log_integral)).collect::<Result<Vec<_>>>()?;
        let neg: Vec<f64> = logs.iter().map(|x| -x).collect();
        let mut s = self.shifted(&neg);
        s.normalized = true;
        Ok(s)
    }

    pub fn upsample(&self, m_new: usize) -> Result<Self> {
        Ok(Self {
            resolution: m_new,
            coeffs: self.coeffs.iter().map(|c| upsample_hat(c, self.resolution, m_new)).collect::<Result<_>>()?,
            normalized: self.normalized,
        })
    }

    /// Sup-norm distance of the mean-free parts.
    pub fn sup_distance(&self, other: &Self, grid: &TorusGrid) -> f64 {
        let (a, b) = (self.mean_free().fields(grid), other.mean_free().fields(grid));
        a.iter().flatten().zip(b.iter().flatten()).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
    }
}

/// h e^u / mean(h e^u) on the grid, with log∫h e^u.
pub struct Weights {
    pub w: Vec<f64>,
    pub log_integral: f64,
}

pub fn weights(p: &MeanFieldProblem, i: usize, u: &[f64]) -> Result<Weights> {
    let mut hi = f64::NEG_INFINITY;
    let mut lo = f64::INFINITY;
    for &x in u {
        if !x.is_finite() {
            return Err(Error::Amplitude(format!("u_{} is not finite; reduce the continuation step", i + 1)));
        }
        hi = hi.max(x);
        lo = lo.min(x);
    }
    if hi - lo > MAX_SPREAD {
        return Err(Error::Amplitude(format!(
            "oscillation of u_{} is {:.1}; e^u overflows, rescale or shorten the step",
            i + 1,
            hi - lo
        )));
    }
    let mut w: Vec<f64> = u.iter().zip(p.h(i)).map(|(x, h)| h * (x - hi).exp()).collect();
    if p.dealias {
        w = p.grid.dealias(&w);
    }
    let mean = p.grid.mean(&w);
    if !(mean > 0.0) {
        return Err(Error::Amplitude(format!("∫h_{} e^u vanished", i + 1)));
    }
    w.iter_mut().for_each(|x| *x /= mean);
    Ok(Weights { w, log_integral: hi + mean.ln() })
}

pub struct Residual {
    pub fields: Vec<Vec<f64>>,
    /// Grid L² norm over all components.
    pub norm: f64,
    pub weights: Vec<Vec<f64>>,
}

/// F_i = Δu_i + Σ_j a_ij ρ_j (w_j − 1).
pub fn residual(p: &MeanFieldProblem, state: &FieldState, rho: &[f64]) -> Result<Residual> {
    if state.resolution != p.grid.resolution() || state.n() != p.n() || rho.len() != p.n() {
        return Err(Error::Input("state, ρ and problem have mismatched sizes".into()));
    }
    let u = state.fields(&p.grid);
    let w: Vec<Vec<f64>> = (0..p.n()).map(|j| weights(p, j, &u[j]).map(|x| x.w)).collect::<Result<_>>()?;
    let fields: Vec<Vec<f64>> = (0..p.n())
        .map(|i| {
            let mut f = p.grid.laplacian_hat(&state.coeffs[i]);
            for (j, wj) in w.iter().enumerate() {
                let c = p.a.get(i, j) * rho[j];
                if c != 0.0 {
                    f.iter_mut().zip(wj).for_each(|(x, y)| *x += c * (y - 1.0));
                }
            }
            f
        })
        .collect();
    let norm = l2(&fields);
    Ok(Residual { fields, norm, weights: w })
}

fn l2(f: &[Vec<f64>]) -> f64 {
    let len = f.first().map_or(1, |x| x.len()) as f64;
    (f.iter().flatten().map(|x| x * x).sum::<f64>() / len).sqrt()
}

/// K v with (K v)_i = Σ_j a_ij ρ_j w_j (v_j − mean(w_j v_j)).
fn coupling(p: &MeanFieldProblem, rho: &[f64], w: &[Vec<f64>], v: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let n = p.n();
    let t: Vec<Vec<f64>> = (0..n)
        .map(|j| {
            let c = w[j].iter().zip(&v[j]).map(|(a, b)| a * b).sum::<f64>() / w[j].len() as f64;
            w[j].iter().zip(&v[j]).map(|(a, b)| a * (b - c)).collect()
        })
        .collect();
    (0..n)
        .map(|i| {
            let mut out = vec![0.0; w[0].len()];
            for (j, tj) in t.iter().enumerate() {
                let c = p.a.get(i, j) * rho[j];
                if c != 0.0 {
                    out.iter_mut().zip(tj).for_each(|(x, y)| *x += c * y);
                }
            }
            out
        })
        .collect()
}

/// Right-preconditioned GMRES(restart) for A x = b, x0 = 0.
pub fn gmres<F>(apply: F, b: &[f64], rtol: f64, restart: usize, max_iter: usize) -> (Vec<f64>, f64, usize)
where
    F: Fn(&[f64]) -> Vec<f64>,
{
    // fixed chunks summed in order, so results do not depend on scheduling
    let dot = |a: &[f64], b: &[f64]| -> f64 {
        let parts: Vec<f64> =
            a.par_chunks(4096).zip(b.par_chunks(4096)).map(|(x, y)| x.iter().zip(y).map(|(p, q)| p * q).sum()).collect();
        parts.iter().sum()
    };
    let n = b.len();
    let bnorm = dot(b, b).sqrt();
    let mut x = vec![0.0; n];
    if bnorm == 0.0 {
        return (x, 0.0, 0);
    }
    let mut total = 0;
    let mut r = b.to_vec();
    loop {
        let beta = dot(&r, &r).sqrt();
        if beta <= rtol * bnorm || total >= max_iter {
            return (x, beta / bnorm, total);
        }
        let mut v: Vec<Vec<f64>> = vec![r.iter().map(|y| y / beta).collect()];
        let mut hmat = vec![vec![0.0; restart]; restart + 1];
        let (mut cs, mut sn) = (vec![0.0; restart], vec![0.0; restart]);
        let mut g = vec![0.0; restart + 1];
        g[0] = beta;
        let mut k_used = 0;
        for k in 0..restart {
            let mut wv = apply(&v[k]);
            for (j, vj) in v.iter().enumerate() {
                let hj = dot(&wv, vj);
                hmat[j][k] = hj;
                wv.par_iter_mut().zip(vj).for_each(|(a, b)| *a -= hj * b);
            }
            let hn = dot(&wv, &wv).sqrt();
            hmat[k + 1][k] = hn;
            for j in 0..k {
                let t = cs[j] * hmat[j][k] + sn[j] * hmat[j + 1][k];
                hmat[j + 1][k] = -sn[j] * hmat[j][k] + cs[j] * hmat[j + 1][k];
                hmat[j][k] = t;
            }
            let d = hmat[k][k].hypot(hmat[k + 1][k]);
            cs[k] = hmat[k][k] / d;
            sn[k] = hmat[k + 1][k] / d;
            hmat[k][k] = d;
            hmat[k + 1][k] = 0.0;
            g[k + 1] = -sn[k] * g[k];
            g[k] *= cs[k];
            k_used = k + 1;
            total += 1;
            if g[k + 1].abs() <= rtol * bnorm || total >= max_iter || hn == 0.0 {
                break;
            }
            v.push(wv.iter().map(|y| y / hn).collect());
        }
        let mut y = vec![0.0; k_used];
        for i in (0..k_used).rev() {
            let s: f64 = (i + 1..k_used).map(|j| hmat[i][j] * y[j]).sum();
            y[i] = (g[i] - s) / hmat[i][i];
        }
        for (j, yj) in y.iter().enumerate() {
            x.par_iter_mut().zip(&v[j]).for_each(|(a, b)| *a += yj * b);
        }
        let ax = apply(&x);
        r = b.iter().zip(&ax).map(|(a, c)| a - c).collect();
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NewtonControls {
    pub tol: f64,
    pub max_iter: usize,
    pub gmres_restart: usize,
    pub gmres_max: usize,
}

impl Default for NewtonControls {
    fn default() -> Self {
        Self { tol: 1e-10, max_iter: 30, gmres_restart: 80, gmres_max: 800 }
    }
}

#[derive(Debug, Clone)]
pub struct NewtonResult {
    pub state: FieldState,
    pub residual: f64,
    pub iterations: usize,
    pub trace: Vec<f64>,
    pub linear_iterations: usize,
}

/// Splits a flat vector into n grid fields.
fn split(x: &[f64], n: usize, len: usize) -> Vec<Vec<f64>> {
    (0..n).map(|i| x[i * len..(i + 1) * len].to_vec()).collect()
}

/// Optional bordering for the pseudo-arclength system: the unknown gains a
/// scalar s, F gains ∂F/∂s, and one linear constraint row is appended.
pub struct Border<'a> {
    /// ∂F/∂s as grid fields.
    pub dfds: &'a [Vec<f64>],
    /// Tangent (u-part as Fourier coefficients of each component, s-part).
    pub tangent_u: &'a [Vec<f64>],
    pub tangent_s: f64,
    /// Constraint residual ⟨τ_u, u − u0⟩ + τ_s (s − s0) − Δ.
    pub constraint: f64,
}

/// Solves J δ = −F (optionally bordered) for the update with right
/// preconditioning by Δ⁻¹: δ = Δ⁻¹ q.
fn newton_direction(
    p: &MeanFieldProblem,
    rho: &[f64],
    res: &Residual,
    border: Option<&Border>,
    rtol: f64,
    ctl: &NewtonControls,
) -> (Vec<Vec<Complex64>>, f64, usize) {
    let n = p.n();
    let len = p.grid.len();
    let extra = usize::from(border.is_some());
    let grid = &p.grid;
    let apply = |x: &[f64]| -> Vec<f64> {
        let q = split(&x[..n * len], n, len);
        let dv: Vec<Vec<f64>> = q.iter().map(|qi| grid.inverse_laplacian(qi)).collect();
        let kv = coupling(p, rho, &res.weights, &dv);
        let mut out: Vec<f64> = q.iter().zip(&kv).flat_map(|(a, b)| a.iter().zip(b).map(|(x, y)| x + y).collect::<Vec<_>>()).collect();
        if let Some(b) = border {
            let sig = x[n * len];
            for (i, d) in b.dfds.iter().enumerate() {
                out[i * len..(i + 1) * len].iter_mut().zip(d).for_each(|(o, y)| *o += sig * y);
            }
            let tu: f64 = b.tangent_u.iter().zip(&dv).map(|(t, v)| t.iter().zip(v).map(|(a, c)| a * c).sum::<f64>()).sum::<f64>()
                / len as f64;
            out.push(tu + b.tangent_s * sig);
        }
        out
    };
    let mut rhs: Vec<f64> = res.fields.iter().flatten().map(|x| -x).collect();
    if let Some(b) = border {
        rhs.push(-b.constraint);
    }
    let (sol, rel, its) = gmres(apply, &rhs, rtol, ctl.gmres_restart, ctl.gmres_max);
    let q = split(&sol[..n * len], n, len);
    let mut dhat: Vec<Vec<Complex64>> = q.iter().map(|qi| grid.inverse_laplacian_hat(qi)).collect();
    if extra == 1 {
        // trailing one-entry vector carries the s-update
        dhat.push(vec![Complex64::new(sol[n * len], 0.0)]);
    }
    (dhat, rel, its)
}

fn add_update(state: &FieldState, d: &[Vec<Complex64>], t: f64) -> FieldState {
    let mut s = state.clone();
    for (c, dc) in s.coeffs.iter_mut().zip(d) {
        c.iter_mut().zip(dc).for_each(|(a, b)| *a += b * t);
    }
    s.normalized = false;
    s
}

/// Newton–Krylov at fixed ρ.
pub fn newton_solve(p: &MeanFieldProblem, state0: &FieldState, rho: &[f64], ctl: &NewtonControls) -> Result<NewtonResult> {
    let mut state = state0.mean_free();
    let mut res = residual(p, &state, rho)?;
    let mut trace = vec![res.norm];
    let mut lin = 0;
    for it in 0..ctl.max_iter {
        if res.norm < ctl.tol {
            return Ok(NewtonResult { state, residual: res.norm, iterations: it, trace, linear_iterations: lin });
        }
        let rtol = (1e-2 * res.norm).clamp(1e-12, 1e-4);
        let (d, _, its) = newton_direction(p, rho, &res, None, rtol, ctl);
        lin += its;
        let mut t = 1.0;
        loop {
            let trial = add_update(&state, &d, t);
            match residual(p, &trial, rho) {
                Ok(r) if r.norm < res.norm * (1.0 - 1e-4 * t) || (r.norm < 10.0 * ctl.tol && r.norm <= res.norm) => {
                    state = trial;
                    res = r;
                    break;
                }
                _ if t > 1.0 / 64.0 => t *= 0.5,
                Ok(r) if r.norm <= res.norm => {
                    state = trial;
                    res = r;
                    break;
                }
                _ => {
                    trace.push(res.norm);
                    return Err(Error::NonConvergence { iterations: it + 1, trace });
                }
            }
        }
        trace.push(res.norm);
    }
    if res.norm < ctl.tol {
        return Ok(NewtonResult { state, residual: res.norm, iterations: ctl.max_iter, trace, linear_iterations: lin });
    }
    Err(Error::NonConvergence { iterations: ctl.max_iter, trace })
}

/// ρ(s) = base + s·dir.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Ray {
    pub base: Vec<f64>,
    pub dir: Vec<f64>,
}

impl Ray {
    pub fn at(&self, s: f64) -> Vec<f64> {
        self.base.iter().zip(&self.dir).map(|(b, d)| b + s * d).collect()
    }
}

/// ∂F_i/∂s = Σ_j a_ij dir_j (w_j − 1).
pub fn dfds(p: &MeanFieldProblem, ray: &Ray, res: &Residual) -> Vec<Vec<f64>> {
    (0..p.n())
        .map(|i| {
            let mut f = vec![0.0; p.grid.len()];
            for (j, wj) in res.weights.iter().enumerate() {
                let c = p.a.get(i, j) * ray.dir[j];
                f.iter_mut().zip(wj).for_each(|(x, y)| *x += c * (y - 1.0));
            }
            f
        })
        .collect()
}

/// Point on a branch: state and ray parameter.
#[derive(Debug, Clone)]
pub struct BranchPoint {
    pub state: FieldState,
    pub s: f64,
    pub residual: f64,
    pub iterations: usize,
}

/// Grid fields of a state plus scalar, for tangent arithmetic.
pub fn grid_vector(p: &MeanFieldProblem, st: &FieldState) -> Vec<Vec<f64>> {
    st.mean_free().fields(&p.grid)
}

/// Newton on the bordered system F(u, s) = 0, ⟨τ_u, u − u_pred⟩ + τ_s(s − s_pred) = 0.
pub fn arclength_correct(
    p: &MeanFieldProblem,
    ray: &Ray,
    pred: &BranchPoint,
    tangent_u: &[Vec<f64>],
    tangent_s: f64,
    ctl: &NewtonControls,
) -> Result<BranchPoint> {
    let mut state = pred.state.mean_free();
    let mut s = pred.s;
    let u_pred = grid_vector(p, &state);
    let len = p.grid.len() as f64;
    let constraint = |st: &FieldState, s: f64| -> f64 {
        let u = grid_vector(p, st);
        let du: f64 = tangent_u
            .iter()
            .zip(u.iter().zip(&u_pred))
            .map(|(t, (a, b))| t.iter().zip(a.iter().zip(b)).map(|(x, (y, z))| x * (y - z)).sum::<f64>())
            .sum::<f64>()
            / len;
        du + tangent_s * (s - pred.s)
    };
    let mut res = residual(p, &state, &ray.at(s))?;
    let mut trace = vec![res.norm];
    for it in 0..ctl.max_iter {
        let c = constraint(&state, s);
        if res.norm < ctl.tol && c.abs() < 1e-10 {
            return Ok(BranchPoint { state, s, residual: res.norm, iterations: it });
        }
        let d = dfds(p, ray, &res);
        let border = Border { dfds: &d, tangent_u, tangent_s, constraint: c };
        let rtol = (1e-2 * res.norm).clamp(1e-12, 1e-4);
        let (mut upd, _, _) = newton_direction(p, &ray.at(s), &res, Some(&border), rtol, ctl);
        let ds = upd.pop().map(|v| v[0].re).unwrap_or(0.0);
        let mut t = 1.0;
        loop {
            let trial = add_update(&state, &upd, t);
            let st = s + t * ds;
            match residual(p, &trial, &ray.at(st)) {
                Ok(r) if r.norm < res.norm * (1.0 - 1e-4 * t) || r.norm < 10.0 * ctl.tol => {
                    state = trial;
                    s = st;
                    res = r;
                    break;
                }
                _ if t > 1.0 / 16.0 => t *= 0.5,
                _ => {
                    trace.push(res.norm);
                    return Err(Error::NonConvergence { iterations: it + 1, trace });
                }
            }
        }
        trace.push(res.norm);
    }
    Err(Error::NonConvergence { iterations: ctl.max_iter, trace })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::TrigPoly;
    use std::f64::consts::PI;

    fn scalar(h: WeightFunction, m: usize) -> MeanFieldProblem {
        MeanFieldProblem::new(InteractionMatrix::scalar(1.0).unwrap(), vec![h], m).unwrap()
    }

    #[test]
    fn constant_state_solves_flat_weight() {
        let p = scalar(WeightFunction::one(), 64);
        let r = residual(&p, &FieldState::zeros(1, 64), &[7.3]).unwrap();
        assert_eq!(r.norm, 0.0);
    }

    #[test]
    fn residual_is_mean_free() {
        let h = WeightFunction::Trig(TrigPoly::constant(1.0).with_cos([1, 0], 0.4).with_sin([1, 2], 0.2));
        let p = scalar(h, 64);
        let u = p.grid.sample(|x| 3.0 * (2.0 * PI * x[0]).sin() + (2.0 * PI * (x[0] + x[1])).cos());
        let r = residual(&p, &FieldState::from_fields(&p.grid, &[u]), &[20.0]).unwrap();
        assert!(p.grid.mean(&r.fields[0]).abs() < 1e-12);
    }

    #[test]
    fn manufactured_solution() {
        // u = cos 2πx₁ sin 2πx₂ is exact when h e^u = 1 − Δu/ρ = 1 + 8π²u/ρ
        let rho = 100.0;
        let m = 256;
        let mut p = scalar(WeightFunction::one(), m);
        let u = p.grid.sample(|x| (2.0 * PI * x[0]).cos() * (2.0 * PI * x[1]).sin());
        p.hv = vec![u.iter().map(|v| (1.0 + 8.0 * PI * PI * v / rho) * (-v).exp()).collect()];
        let r = residual(&p, &FieldState::from_fields(&p.grid, &[u]), &[rho]).unwrap();
        assert!(r.norm < 1e-10, "{}", r.norm);
    }

    #[test]
    fn newton_small_data() {
        let h = WeightFunction::Trig(TrigPoly::constant(1.0).with_cos([1, 0], 0.1));
        let p = scalar(h, 64);
        let rho = [4.0 * PI];
        let ctl = NewtonControls::default();
        let r = newton_solve(&p, &FieldState::zeros(1, 64), &rho, &ctl).unwrap();
        assert!(r.residual < 1e-10);
        let loose = newton_solve(&p, &FieldState::zeros(1, 64), &rho, &NewtonControls { tol: 1e-8, ..ctl }).unwrap();
        let tight = newton_solve(&p, &FieldState::zeros(1, 64), &rho, &NewtonControls { tol: 1e-12, ..ctl }).unwrap();
        assert!(loose.state.sup_distance(&tight.state, &p.grid) < 1e-7);
        let flat = scalar(WeightFunction::one(), 64);
        let z = newton_solve(&flat, &FieldState::zeros(1, 64), &rho, &ctl).unwrap();
        assert!(z.iterations <= 1 && z.residual == 0.0);
    }

    #[test]
    fn overflow_is_reported() {
        let p = scalar(WeightFunction::one(), 64);
        let u = p.grid.sample(|x| 800.0 * (2.0 * PI * x[0]).cos());
        assert!(matches!(residual(&p, &FieldState::from_fields(&p.grid, &[u]), &[1.0]), Err(Error::Amplitude(_))));
    }
}
