//! Coupling matrix, hypothesis checks, the Λ functionals and the critical
//! hypersurfaces Γ_N.

use std::collections::VecDeque;
use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Largest system for which all proper subsets are enumerated.
pub const MAX_SUBSET_N: usize = 12;

/// Default relative tolerance for membership in Γ_N.
pub const DEFAULT_GAMMA_TOL: f64 = 1e-9;

const SIGN_TOL: f64 = 1e-12;

/// JSON form of a coupling matrix: `{"n": 2, "a": [[..], [..]]}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatrixSpec {
    pub n: usize,
    pub a: Vec<Vec<f64>>,
}

/// The coupling matrix A = (a_ij) together with its inverse when it exists.
#[derive(Debug, Clone, PartialEq)]
pub struct InteractionMatrix {
    a: DMatrix<f64>,
    a_inv: Option<DMatrix<f64>>,
}

impl InteractionMatrix {
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let n = rows.len();
        if n == 0 {
            return Err(Error::Input("matrix has no rows".into()));
        }
        for (i, row) in rows.iter().enumerate() {
            if row.len() != n {
                return Err(Error::Input(format!(
                    "matrix is not square: row {i} has {} entries, expected {n}",
                    row.len()
                )));
            }
            if let Some(v) = row.iter().find(|v| !v.is_finite()) {
                return Err(Error::Input(format!("non-finite entry {v} in row {i}")));
            }
        }
        let a = DMatrix::from_fn(n, n, |i, j| rows[i][j]);
        Ok(Self::from_matrix_unchecked(a))
    }

    pub fn from_spec(spec: &MatrixSpec) -> Result<Self> {
        if spec.n != spec.a.len() {
            return Err(Error::Input(format!(
                "declared n = {} but {} rows given",
                spec.n,
                spec.a.len()
            )));
        }
        Self::from_rows(&spec.a)
    }

    pub fn scalar(a: f64) -> Result<Self> {
        Self::from_rows(&[vec![a]])
    }

    fn from_matrix_unchecked(a: DMatrix<f64>) -> Self {
        let n = a.nrows();
        let a_inv = a.clone().lu().try_inverse().filter(|inv| {
            let resid = (&a * inv - DMatrix::<f64>::identity(n, n)).amax();
            let scale = a.amax().max(1.0) * inv.amax().max(1.0);
            resid.is_finite() && resid <= 1e-12 * scale
        });
        Self { a, a_inv }
    }

    pub fn to_spec(&self) -> MatrixSpec {
        MatrixSpec {
            n: self.n(),
            a: (0..self.n())
                .map(|i| (0..self.n()).map(|j| self.a[(i, j)]).collect())
                .collect(),
        }
    }

    pub fn n(&self) -> usize {
        self.a.nrows()
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.a[(i, j)]
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.a
    }

    pub fn inverse(&self) -> Result<&DMatrix<f64>> {
        self.a_inv
            .as_ref()
            .ok_or_else(|| Error::Singular("coupling matrix has no inverse".into()))
    }

    pub fn is_symmetric(&self) -> bool {
        let n = self.n();
        let scale = self.a.amax().max(1.0);
        (0..n).all(|i| (0..i).all(|j| (self.a[(i, j)] - self.a[(j, i)]).abs() <= 1e-12 * scale))
    }

    /// Connectivity of the graph whose edges are the nonzero off-diagonal entries.
    pub fn is_irreducible(&self) -> bool {
        let n = self.n();
        let mut seen = vec![false; n];
        let mut queue = VecDeque::from([0usize]);
        seen[0] = true;
        while let Some(i) = queue.pop_front() {
            for j in 0..n {
                if !seen[j] && (self.a[(i, j)] != 0.0 || self.a[(j, i)] != 0.0) {
                    seen[j] = true;
                    queue.push_back(j);
                }
            }
        }
        seen.into_iter().all(|s| s)
    }

    /// Computes m = A·σ.
    pub fn apply(&self, v: &[f64]) -> Vec<f64> {
        (self.a.clone() * DVector::from_column_slice(v)).iter().copied().collect()
    }

    /// Solves A·x = b.
    pub fn solve(&self, b: &[f64]) -> Result<Vec<f64>> {
        let inv = self.inverse()?;
        Ok((inv * DVector::from_column_slice(b)).iter().copied().collect())
    }

    /// The submatrix and index relabeling under a permutation `perm[new] = old`.
    pub fn permuted(&self, perm: &[usize]) -> Result<Self> {
        let n = self.n();
        if perm.len() != n {
            return Err(Error::Input("permutation length mismatch".into()));
        }
        let a = DMatrix::from_fn(n, n, |i, j| self.a[(perm[i], perm[j])]);
        Ok(Self::from_matrix_unchecked(a))
    }
}

/// Result of checking (H1) and (H2).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HypothesisReport {
    pub h1: bool,
    pub h2: bool,
    pub reasons: Vec<String>,
}

pub fn check_hypotheses(a: &InteractionMatrix) -> HypothesisReport {
    let n = a.n();
    let mut reasons = Vec::new();
    let mut h1 = true;
    if !a.is_symmetric() {
        h1 = false;
        reasons.push("H1: matrix is not symmetric".to_string());
    }
    for i in 0..n {
        for j in 0..n {
            if a.get(i, j) < 0.0 {
                h1 = false;
                reasons.push(format!("H1: entry a[{i}][{j}] = {} is negative", a.get(i, j)));
            }
        }
    }
    if !a.is_irreducible() {
        h1 = false;
        reasons.push("H1: support graph is not connected (reducible)".to_string());
    }
    let mut h2 = true;
    match a.inverse() {
        Err(_) => {
            h1 = false;
            h2 = false;
            reasons.push("H1: matrix is not invertible".to_string());
            reasons.push("H2: inverse does not exist".to_string());
        }
        Ok(inv) => {
            let scale = inv.amax().max(1.0) * SIGN_TOL;
            for i in 0..n {
                if inv[(i, i)] > scale {
                    h2 = false;
                    reasons.push(format!("H2: a^{{{i}{i}}} = {} > 0", inv[(i, i)]));
                }
                for j in 0..n {
                    if i != j && inv[(i, j)] < -scale {
                        h2 = false;
                        reasons.push(format!("H2: a^{{{i}{j}}} = {} < 0", inv[(i, j)]));
                    }
                }
                let row: f64 = (0..n).map(|j| inv[(i, j)]).sum();
                if row < -scale {
                    h2 = false;
                    reasons.push(format!("H2: row sum of inverse {i} is {row} < 0"));
                }
            }
        }
    }
    HypothesisReport { h1, h2, reasons }
}

/// A parameter vector ρ together with the concentration level N used in the
/// 2πN scaling of Λ.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParameterPoint {
    pub rho: Vec<f64>,
    pub level: usize,
}

impl ParameterPoint {
    pub fn new(rho: Vec<f64>, level: usize) -> Result<Self> {
        if level == 0 {
            return Err(Error::Input("level N must be at least 1".into()));
        }
        if let Some((i, r)) = rho.iter().enumerate().find(|(_, r)| !(**r > 0.0) || !r.is_finite()) {
            return Err(Error::Input(format!("rho[{i}] = {r} is not a positive real")));
        }
        Ok(Self { rho, level })
    }

    pub fn n(&self) -> usize {
        self.rho.len()
    }

    /// σ_i = ρ_i / (2πN).
    pub fn scaled(&self) -> Vec<f64> {
        let s = 2.0 * PI * self.level as f64;
        self.rho.iter().map(|r| r / s).collect()
    }
}

/// Λ_J(ρ) = 4 Σ_{i∈J} ρ_i/(2πN) − Σ_{i,j∈J} a_ij (ρ_i/2πN)(ρ_j/2πN).
pub fn lambda_subset(a: &InteractionMatrix, rho: &ParameterPoint, subset: &[usize]) -> Result<f64> {
    if subset.is_empty() {
        return Err(Error::Input("subset J must be nonempty".into()));
    }
    if rho.n() != a.n() {
        return Err(Error::Input(format!("rho has {} entries, matrix is {}x{}", rho.n(), a.n(), a.n())));
    }
    if let Some(&i) = subset.iter().find(|&&i| i >= a.n()) {
        return Err(Error::Input(format!("index {i} outside 0..{}", a.n())));
    }
    let s = rho.scaled();
    let linear: f64 = subset.iter().map(|&i| 4.0 * s[i]).sum();
    let quad: f64 = subset
        .iter()
        .flat_map(|&i| subset.iter().map(move |&j| (i, j)))
        .map(|(i, j)| a.get(i, j) * s[i] * s[j])
        .sum();
    Ok(linear - quad)
}

pub fn lambda_full(a: &InteractionMatrix, rho: &ParameterPoint) -> Result<f64> {
    let all: Vec<usize> = (0..a.n()).collect();
    lambda_subset(a, rho, &all)
}

/// Position of ρ relative to Γ_N.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Classification {
    /// Λ_I = 0 within tolerance and Λ_J > 0 for all proper J.
    OnGammaN,
    /// Λ_I > 0: the O_{N−1} side of Γ_N.
    LowerSide,
    /// Λ_I < 0: the O_N side of Γ_N.
    UpperSide,
    /// Some proper subset has Λ_J ≤ 0.
    Outside,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubsetValue {
    pub subset: Vec<usize>,
    pub lambda: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegionReport {
    pub level: usize,
    pub lambda_i: f64,
    pub lambda_j: Vec<SubsetValue>,
    pub classification: Classification,
    /// Index K of the region O_K containing ρ, counted along the ray through ρ.
    pub region_index: usize,
    pub chi: i64,
    pub degree: i64,
    pub normal: Vec<f64>,
}

/// Nonempty proper subsets of {0..n-1} in increasing bitmask order.
pub fn proper_subsets(n: usize) -> Result<Vec<Vec<usize>>> {
    if n > MAX_SUBSET_N {
        return Err(Error::Input(format!("subset enumeration limited to n <= {MAX_SUBSET_N}")));
    }
    let full = (1usize << n) - 1;
    Ok((1..full)
        .map(|mask| (0..n).filter(|i| mask & (1 << i) != 0).collect())
        .collect())
}

pub fn classify(a: &InteractionMatrix, rho: &ParameterPoint, tol: f64, chi: i64) -> Result<RegionReport> {
    if !(tol > 0.0) {
        return Err(Error::Input(format!("tolerance must be positive, got {tol}")));
    }
    let n = a.n();
    if rho.n() != n {
        return Err(Error::Input(format!("rho has {} entries, matrix is {n}x{n}", rho.n())));
    }
    let lambda_i = lambda_full(a, rho)?;
    let lambda_j = proper_subsets(n)?
        .into_iter()
        .map(|subset| {
            let lambda = lambda_subset(a, rho, &subset)?;
            Ok(SubsetValue { subset, lambda })
        })
        .collect::<Result<Vec<_>>>()?;
    let subsets_positive = lambda_j.iter().all(|s| s.lambda > 0.0);
    let total: f64 = rho.rho.iter().sum();
    let classification = if !subsets_positive {
        Classification::Outside
    } else if lambda_i.abs() <= tol * total {
        Classification::OnGammaN
    } else if lambda_i > 0.0 {
        Classification::LowerSide
    } else {
        Classification::UpperSide
    };
    let s = rho.scaled();
    let normal = a.apply(&s).into_iter().map(|m| m - 2.0).collect();
    let region_index = region_index(a, &rho.rho);
    Ok(RegionReport {
        level: rho.level,
        lambda_i,
        lambda_j,
        classification,
        region_index,
        chi,
        degree: degree(region_index, chi),
        normal,
    })
}

/// The K with ρ between Γ_K and Γ_{K+1}: Λ_I at level K+1 is positive and at
/// level K (if K ≥ 1) it is nonpositive.
pub fn region_index(a: &InteractionMatrix, rho: &[f64]) -> usize {
    let quad: f64 = (0..a.n())
        .flat_map(|i| (0..a.n()).map(move |j| (i, j)))
        .map(|(i, j)| a.get(i, j) * rho[i] * rho[j])
        .sum();
    let total: f64 = rho.iter().sum();
    // Λ_I at level K has the sign of 8πK Σρ − ρᵀAρ.
    let ratio = quad / (8.0 * PI * total);
    if ratio <= 0.0 {
        0
    } else {
        ratio.floor() as usize
    }
}

/// Q_N: the solution of A q = 8πN·(1,…,1).
pub fn q_point(a: &InteractionMatrix, level: usize) -> Result<ParameterPoint> {
    let rhs = vec![8.0 * PI * level as f64; a.n()];
    let q = a.solve(&rhs)?;
    ParameterPoint::new(q, level)
}

/// Degree of the solution map in O_N: 1 for N = 0, otherwise
/// (1/N!) Π_{k=1}^{N} (k − χ). The value is always an integer.
pub fn degree(level: usize, chi: i64) -> i64 {
    let mut d: i128 = 1;
    for k in 1..=level as i128 {
        d = d * (k - chi as i128) / k;
    }
    d as i64
}

/// Scales a positive direction onto Γ_N: returns t·dir with Λ_I(t·dir) = 0.
pub fn project_to_gamma(a: &InteractionMatrix, dir: &[f64], level: usize) -> Result<ParameterPoint> {
    let quad: f64 = (0..a.n())
        .flat_map(|i| (0..a.n()).map(move |j| (i, j)))
        .map(|(i, j)| a.get(i, j) * dir[i] * dir[j])
        .sum();
    if !(quad > 0.0) {
        return Err(Error::Input("direction has nonpositive quadratic form".into()));
    }
    let total: f64 = dir.iter().sum();
    let t = 8.0 * PI * level as f64 * total / quad;
    ParameterPoint::new(dir.iter().map(|d| d * t).collect(), level)
}
