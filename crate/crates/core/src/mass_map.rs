//! The map (α_2,…,α_n) ↦ σ with α_1 = 0, its Jacobian 𝕄 = (∂σ_i/∂α_k)_{i,k≥2}
//! and a damped Newton inverse.

use std::io::Write;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::radial::{self, HeightVector, DEFAULT_R_MAX, DEFAULT_TOL};
use crate::system_algebra::InteractionMatrix;

pub const DEFAULT_H_STEP: f64 = 1e-3;
const MAX_HALVINGS: usize = 30;
const MAX_NEWTON: usize = 40;
/// Targets must satisfy the mass identity to this relative level.
pub const POHOZAEV_PRECONDITION: f64 = 1e-6;
pub const INVERSION_TOL: f64 = 1e-8;

/// Radial solver settings shared by every evaluation of the map.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MassMapSettings {
    pub r_max: f64,
    pub tol: f64,
}

impl Default for MassMapSettings {
    fn default() -> Self {
        Self { r_max: DEFAULT_R_MAX, tol: DEFAULT_TOL }
    }
}

fn heights(alpha_hat: &[f64]) -> Result<HeightVector> {
    let mut a = vec![0.0];
    a.extend_from_slice(alpha_hat);
    HeightVector::new(a)
}

pub fn sigma_of_alpha(a: &InteractionMatrix, alpha_hat: &[f64]) -> Result<Vec<f64>> {
    sigma_of_alpha_with(a, alpha_hat, MassMapSettings::default())
}

pub fn sigma_of_alpha_with(a: &InteractionMatrix, alpha_hat: &[f64], set: MassMapSettings) -> Result<Vec<f64>> {
    if alpha_hat.len() + 1 != a.n() {
        return Err(Error::Input(format!(
            "expected {} free heights, got {}",
            a.n() - 1,
            alpha_hat.len()
        )));
    }
    let (_, s) = radial::solve(a, &heights(alpha_hat)?, set.r_max, set.tol)?;
    Ok(s.sigma)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MassMapSample {
    pub alpha_hat: Vec<f64>,
    pub sigma: Vec<f64>,
    /// Row-major (n−1)×(n−1) matrix 𝕄.
    pub jacobian: Vec<Vec<f64>>,
    pub det: f64,
    pub cond: f64,
}

fn difference(a: &InteractionMatrix, alpha_hat: &[f64], k: usize, h: f64, set: MassMapSettings) -> Result<Vec<f64>> {
    let mut p = alpha_hat.to_vec();
    let mut m = alpha_hat.to_vec();
    p[k] += h;
    m[k] -= h;
    let sp = sigma_of_alpha_with(a, &p, set)?;
    let sm = sigma_of_alpha_with(a, &m, set)?;
    Ok(sp.iter().zip(&sm).skip(1).map(|(x, y)| (x - y) / (2.0 * h)).collect())
}

/// 𝕄 by central differences with one Richardson step, columns in parallel.
pub fn jacobian(a: &InteractionMatrix, alpha_hat: &[f64], h_step: f64) -> Result<MassMapSample> {
    jacobian_with(a, alpha_hat, h_step, MassMapSettings::default())
}

pub fn jacobian_with(a: &InteractionMatrix, alpha_hat: &[f64], h_step: f64, set: MassMapSettings) -> Result<MassMapSample> {
    if !(1e-5..=1e-2).contains(&h_step) {
        return Err(Error::Input(format!("h_step = {h_step} outside [1e-5, 1e-2]")));
    }
    let sigma = sigma_of_alpha_with(a, alpha_hat, set)?;
    let k = alpha_hat.len();
    let cols = (0..k)
        .into_par_iter()
        .map(|c| {
            let d1 = difference(a, alpha_hat, c, h_step, set)?;
            let d2 = difference(a, alpha_hat, c, h_step / 2.0, set)?;
            Ok(d1.iter().zip(&d2).map(|(x, y)| (4.0 * y - x) / 3.0).collect::<Vec<f64>>())
        })
        .collect::<Result<Vec<_>>>()?;
    let m = DMatrix::from_fn(k, k, |i, j| cols[j][i]);
    let (det, cond) = if k == 0 {
        (1.0, 1.0)
    } else {
        let sv = m.clone().singular_values();
        let smax = sv.max();
        let smin = sv.min();
        (m.determinant(), if smin > 0.0 { smax / smin } else { f64::INFINITY })
    };
    let jacobian = (0..k).map(|i| (0..k).map(|j| m[(i, j)]).collect()).collect();
    Ok(MassMapSample { alpha_hat: alpha_hat.to_vec(), sigma, jacobian, det, cond })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Inversion {
    pub alpha_hat: Vec<f64>,
    pub sigma: Vec<f64>,
    pub iterations: usize,
    /// Residual norm ‖σ − target‖ after each iteration.
    pub trace: Vec<f64>,
}

fn pohozaev_defect(a: &InteractionMatrix, sigma: &[f64]) -> f64 {
    let m = a.apply(sigma);
    let num: f64 = sigma.iter().zip(&m).map(|(s, m)| s * (m - 4.0)).sum();
    num.abs() / sigma.iter().sum::<f64>()
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

fn gap(s: &[f64], t: &[f64]) -> f64 {
    norm(&s.iter().zip(t).map(|(x, y)| x - y).collect::<Vec<_>>())
}

/// Damped Newton for σ(α̂) = target on components 2..n.
pub fn invert(a: &InteractionMatrix, target: &[f64], alpha0: &[f64]) -> Result<Inversion> {
    invert_with(a, target, alpha0, MassMapSettings::default())
}

pub fn invert_with(a: &InteractionMatrix, target: &[f64], alpha0: &[f64], set: MassMapSettings) -> Result<Inversion> {
    let n = a.n();
    if target.len() != n || alpha0.len() + 1 != n {
        return Err(Error::Input("target or initial heights have the wrong length".into()));
    }
    if target.iter().any(|s| !(*s > 0.0)) {
        return Err(Error::Input("target masses must be positive".into()));
    }
    let defect = pohozaev_defect(a, target);
    if defect >= POHOZAEV_PRECONDITION {
        return Err(Error::Precondition(format!(
            "target is off the Pohozaev surface: |Σσ_i(m_i−4)|/Σσ_i = {defect:.3e}"
        )));
    }
    let scale = norm(target);
    let mut alpha = alpha0.to_vec();
    let mut sigma = sigma_of_alpha_with(a, &alpha, set)?;
    let mut res = gap(&sigma, target);
    let mut trace = vec![res];
    // ODE noise floor: further Newton steps cannot improve below this
    let floor = 1e-11 * scale;
    let mut it = 0;
    while res > floor && it < MAX_NEWTON && n > 1 {
        it += 1;
        let jac = jacobian_with(a, &alpha, DEFAULT_H_STEP, set)?;
        let k = n - 1;
        let m = DMatrix::from_fn(k, k, |i, j| jac.jacobian[i][j]);
        let f = DVector::from_fn(k, |i, _| sigma[i + 1] - target[i + 1]);
        let step = m
            .lu()
            .solve(&f)
            .ok_or_else(|| Error::Singular(format!("Jacobian singular at {alpha:?}")))?;
        let mut t = 1.0;
        let mut accepted = false;
        for _ in 0..=MAX_HALVINGS {
            let cand: Vec<f64> = alpha.iter().zip(step.iter()).map(|(x, d)| x - t * d).collect();
            if let Ok(s) = sigma_of_alpha_with(a, &cand, set) {
                let r = gap(&s, target);
                if r < res {
                    alpha = cand;
                    sigma = s;
                    res = r;
                    accepted = true;
                    break;
                }
            }
            t *= 0.5;
        }
        trace.push(res);
        if !accepted || step.norm() < 1e-13 {
            break;
        }
    }
    if res > INVERSION_TOL * scale {
        return Err(Error::NonConvergence { iterations: it, trace });
    }
    Ok(Inversion { alpha_hat: alpha, sigma, iterations: it, trace })
}

/// Samples 𝕄 on a tensor grid; failures at individual points are returned
/// alongside the successes.
pub fn sweep(a: &InteractionMatrix, points: &[Vec<f64>], h_step: f64) -> Vec<Result<MassMapSample>> {
    points.par_iter().map(|p| jacobian(a, p, h_step)).collect()
}

/// Tensor grid of `k` points per axis on [lo, hi]^dim.
pub fn tensor_grid(dim: usize, lo: f64, hi: f64, k: usize) -> Vec<Vec<f64>> {
    let axis: Vec<f64> = (0..k)
        .map(|i| if k == 1 { lo } else { lo + (hi - lo) * i as f64 / (k - 1) as f64 })
        .collect();
    let mut out = vec![Vec::new()];
    for _ in 0..dim {
        out = out
            .into_iter()
            .flat_map(|p| {
                axis.iter().map(move |&x| {
                    let mut q = p.clone();
                    q.push(x);
                    q
                })
            })
            .collect();
    }
    out
}

pub fn write_sweep_csv<W: Write>(samples: &[MassMapSample], mut w: W) -> Result<()> {
    let Some(first) = samples.first() else {
        return Ok(());
    };
    let mut head: Vec<String> = (2..=first.alpha_hat.len() + 1).map(|i| format!("alpha_{i}")).collect();
    head.extend((1..=first.sigma.len()).map(|i| format!("sigma_{i}")));
    head.push("det".into());
    writeln!(w, "{}", head.join(","))?;
    for s in samples {
        let mut row: Vec<String> = s.alpha_hat.iter().map(|x| format!("{x:.17e}")).collect();
        row.extend(s.sigma.iter().map(|x| format!("{x:.17e}")));
        row.push(format!("{:.17e}", s.det));
        writeln!(w, "{}", row.join(","))?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn swap() -> InteractionMatrix {
        InteractionMatrix::from_rows(&[vec![0.0, 1.0], vec![1.0, 0.0]]).unwrap()
    }

    fn a12() -> InteractionMatrix {
        InteractionMatrix::from_rows(&[vec![1.0, 2.0], vec![2.0, 1.0]]).unwrap()
    }

    #[test]
    fn symmetric_point() {
        let s = sigma_of_alpha(&swap(), &[0.0]).unwrap();
        assert!((s[0] - 4.0).abs() < 1e-8 && (s[1] - 4.0).abs() < 1e-8);
        let s1 = sigma_of_alpha(&InteractionMatrix::scalar(1.0).unwrap(), &[]).unwrap();
        assert!((s1[0] - 4.0).abs() < 1e-8);
    }

    #[test]
    fn raising_a_height_lowers_its_mass() {
        let lo = sigma_of_alpha(&a12(), &[0.0]).unwrap();
        let hi = sigma_of_alpha(&a12(), &[0.3]).unwrap();
        assert!(hi[1] < lo[1]);
    }

    #[test]
    fn jacobian_is_invertible_and_stable() {
        let j1 = jacobian(&swap(), &[0.0], 2e-3).unwrap();
        let j2 = jacobian(&swap(), &[0.0], 1e-3).unwrap();
        assert!(j1.det.abs() > 1e-3);
        let (x, y) = (j1.jacobian[0][0], j2.jacobian[0][0]);
        assert!(((x - y) / y).abs() < 1e-4);
        assert!(matches!(jacobian(&swap(), &[0.0], 0.5), Err(Error::Input(_))));
    }

    #[test]
    fn symmetric_target_inverts_to_zero() {
        let inv = invert(&swap(), &[4.0, 4.0], &[0.1]).unwrap();
        assert!(inv.alpha_hat[0].abs() < 1e-8);
    }

    #[test]
    fn off_surface_target_is_rejected() {
        let s = sigma_of_alpha(&a12(), &[0.5]).unwrap();
        let bad = vec![s[0] * 1.01, s[1]];
        match invert(&a12(), &bad, &[0.0]) {
            Err(Error::Precondition(msg)) => assert!(msg.contains("Pohozaev")),
            other => panic!("expected precondition error, got {other:?}"),
        }
    }

    #[test]
    fn grid_shapes() {
        assert_eq!(tensor_grid(2, 0.0, 2.0, 5).len(), 25);
        assert_eq!(tensor_grid(0, 0.0, 1.0, 3), vec![Vec::<f64>::new()]);
    }
}
