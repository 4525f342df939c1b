//! Branch following along a ray ρ(s) = ρ_start + s·dir.

use std::f64::consts::PI;
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::green::Point;
use crate::pde::measure::{measure, MeasureSettings, Measurement};
use crate::pde::solver::{
    arclength_correct, grid_vector, newton_solve, BranchPoint, FieldState, MeanFieldProblem, NewtonControls, Ray,
};
use crate::system_algebra::{lambda_full, ParameterPoint};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ContinuationControls {
    /// Level N of the target surface Γ_N.
    pub level: usize,
    pub step: f64,
    pub min_step: f64,
    pub max_step: f64,
    pub max_steps: usize,
    /// Resolutions climbed as the bubbles narrow.
    pub ladder: Vec<usize>,
    /// Stop when ε < cells · spacing on the finest grid.
    pub stop_cells: f64,
    /// Move up the ladder when ε < cells · spacing on a coarser grid.
    pub refine_cells: f64,
    /// Reject steps that move max Θ by more than this.
    pub max_height_change: f64,
    /// Stop when Λ_I changes sign.
    pub stop_at_surface: bool,
    pub tol: f64,
    pub delta0: f64,
    pub prominence: f64,
    pub dealias: bool,
}

impl Default for ContinuationControls {
    fn default() -> Self {
        Self {
            level: 1,
            step: 0.1,
            min_step: 1e-5,
            max_step: 0.5,
            max_steps: 400,
            ladder: vec![128, 256, 512],
            stop_cells: 8.0,
            refine_cells: 16.0,
            max_height_change: 0.25,
            stop_at_surface: false,
            tol: 1e-10,
            delta0: crate::pde::measure::DEFAULT_DELTA0,
            prominence: crate::pde::measure::DEFAULT_PROMINENCE,
            dealias: false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StepMode {
    Natural,
    Arclength,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContinuationRecord {
    pub step: usize,
    pub s: f64,
    pub rho: Vec<f64>,
    pub lambda: f64,
    pub resolution: usize,
    pub mode: StepMode,
    pub bubble_points: Vec<Point>,
    pub m_k: Vec<f64>,
    pub eps_k: Vec<f64>,
    /// rho_it[t][i].
    pub rho_it: Vec<Vec<f64>>,
    pub local_masses: Vec<Vec<f64>>,
    pub unweighted_masses: Vec<Vec<f64>>,
    pub rho_b: Vec<f64>,
    pub partition_defect: f64,
    pub height_gap: f64,
    pub mass_gap: f64,
    pub unweighted_gap: f64,
    pub theta_max: f64,
    pub residual: f64,
    pub newton_iterations: usize,
}

impl ContinuationRecord {
    pub fn n_detected(&self) -> usize {
        self.m_k.len()
    }

    pub fn min_eps(&self) -> Option<f64> {
        self.eps_k.iter().cloned().reduce(f64::min)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind", content = "detail")]
pub enum StopReason {
    Resolution,
    Surface,
    MaxSteps,
    Abort(String),
}

impl StopReason {
    /// 0 for a resolution or surface stop, 2 otherwise.
    pub fn exit_code(&self) -> i32 {
        match self {
            StopReason::Resolution | StopReason::Surface => 0,
            _ => 2,
        }
    }
}

#[derive(Debug, Clone)]
pub struct ContinuationRun {
    pub records: Vec<ContinuationRecord>,
    pub stop: StopReason,
    /// Parameter values where the branch turned.
    pub folds: Vec<f64>,
    pub final_state: Option<FieldState>,
}

fn lambda_of(level: usize, p: &MeanFieldProblem, rho: &[f64]) -> Result<f64> {
    lambda_full(&p.a, &ParameterPoint::new(rho.to_vec(), level)?)
}

fn record(
    step: usize,
    p: &MeanFieldProblem,
    ray: &Ray,
    bp: &BranchPoint,
    mode: StepMode,
    ctl: &ContinuationControls,
    meas: &Measurement,
) -> Result<ContinuationRecord> {
    let rho = ray.at(bp.s);
    Ok(ContinuationRecord {
        step,
        s: bp.s,
        lambda: lambda_of(ctl.level, p, &rho)?,
        rho,
        resolution: p.grid.resolution(),
        mode,
        bubble_points: meas.bubbles.iter().map(|b| b.point).collect(),
        m_k: meas.bubbles.iter().map(|b| b.height).collect(),
        eps_k: meas.bubbles.iter().map(|b| b.eps).collect(),
        rho_it: meas.bubbles.iter().map(|b| b.rho.clone()).collect(),
        local_masses: meas.bubbles.iter().map(|b| b.local_mass.clone()).collect(),
        unweighted_masses: meas.bubbles.iter().map(|b| b.unweighted_mass.clone()).collect(),
        rho_b: meas.rho_b.clone(),
        partition_defect: meas.partition_defect,
        height_gap: meas.height_gap,
        mass_gap: meas.mass_gap,
        unweighted_gap: meas.unweighted_gap,
        theta_max: meas.theta_max,
        residual: bp.residual,
        newton_iterations: bp.iterations,
    })
}

/// Weighted difference (u_a − u_b, s_a − s_b) normalized in
/// ⟨(u,s),(v,t)⟩ = mean(u·v) + s·t.
fn secant(ga: &[Vec<f64>], sa: f64, gb: &[Vec<f64>], sb: f64) -> (Vec<Vec<f64>>, f64) {
    let len = ga[0].len() as f64;
    let du: Vec<Vec<f64>> = ga.iter().zip(gb).map(|(a, b)| a.iter().zip(b).map(|(x, y)| x - y).collect()).collect();
    let ds = sa - sb;
    let norm = (du.iter().flatten().map(|x| x * x).sum::<f64>() / len + ds * ds).sqrt();
    (du.into_iter().map(|v| v.into_iter().map(|x| x / norm).collect()).collect(), ds / norm)
}

fn add_grid(p: &MeanFieldProblem, st: &FieldState, du: &[Vec<f64>], t: f64) -> FieldState {
    let u = st.mean_free().fields(&p.grid);
    let moved: Vec<Vec<f64>> = u.iter().zip(du).map(|(a, b)| a.iter().zip(b).map(|(x, y)| x + t * y).collect()).collect();
    FieldState::from_fields(&p.grid, &moved)
}

/// Follows the branch through `start` (solved at s = 0 if not converged).
pub fn continue_ray(
    problem: MeanFieldProblem,
    ray: &Ray,
    start: Option<FieldState>,
    ctl: &ContinuationControls,
) -> Result<ContinuationRun> {
    if ray.dir.iter().any(|d| !(*d > 0.0)) || ray.dir.len() != problem.n() || ray.base.len() != problem.n() {
        return Err(Error::Input("the ray direction must have all components positive".into()));
    }
    if ctl.ladder.is_empty() || ctl.ladder.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::Input("resolution ladder must be nonempty and increasing".into()));
    }
    let newton = NewtonControls { tol: ctl.tol, ..NewtonControls::default() };
    let settings = MeasureSettings { delta0: ctl.delta0, prominence: ctl.prominence };
    let mut level = 0;
    let mut p = problem.at_resolution(ctl.ladder[0])?;
    p.dealias = ctl.dealias || problem.dealias;
    let init = match start {
        Some(s) if s.resolution == p.grid.resolution() => s,
        Some(s) if s.resolution < p.grid.resolution() => s.upsample(p.grid.resolution())?,
        Some(_) => return Err(Error::Input("start state is finer than the first ladder rung".into())),
        None => FieldState::zeros(p.n(), p.grid.resolution()),
    };
    let first = newton_solve(&p, &init, &ray.at(0.0), &newton)?;
    let mut cur = BranchPoint { state: first.state, s: 0.0, residual: first.residual, iterations: first.iterations };
    let mut prev: Option<BranchPoint> = None;
    let mut mode = StepMode::Natural;
    let mut h = ctl.step;
    let mut records = Vec::new();
    let mut folds = Vec::new();
    let mut lambda0 = lambda_of(ctl.level, &p, &ray.at(0.0))?;
    let meas = measure(&p, &cur.state, &ray.at(0.0), &settings)?;
    records.push(record(0, &p, ray, &cur, mode, ctl, &meas)?);

    let stop = loop {
        if records.len() > ctl.max_steps {
            break StopReason::MaxSteps;
        }
        let attempt: Result<BranchPoint> = match (mode, &prev) {
            (StepMode::Natural, _) => {
                let s_new = cur.s + h;
                let guess = match &prev {
                    // secant predictor in s
                    Some(pv) if (cur.s - pv.s).abs() > 0.0 => {
                        let (gc, gp) = (grid_vector(&p, &cur.state), grid_vector(&p, &pv.state));
                        let slope: Vec<Vec<f64>> = gc
                            .iter()
                            .zip(&gp)
                            .map(|(a, b)| a.iter().zip(b).map(|(x, y)| (x - y) / (cur.s - pv.s)).collect())
                            .collect();
                        add_grid(&p, &cur.state, &slope, h)
                    }
                    _ => cur.state.clone(),
                };
                newton_solve(&p, &guess, &ray.at(s_new), &newton).map(|r| BranchPoint {
                    state: r.state,
                    s: s_new,
                    residual: r.residual,
                    iterations: r.iterations,
                })
            }
            (StepMode::Arclength, Some(pv)) => {
                let (gc, gp) = (grid_vector(&p, &cur.state), grid_vector(&p, &pv.state));
                let (tu, ts) = secant(&gc, cur.s, &gp, pv.s);
                let pred = BranchPoint { state: add_grid(&p, &cur.state, &tu, h), s: cur.s + h * ts, residual: f64::NAN, iterations: 0 };
                arclength_correct(&p, ray, &pred, &tu, ts, &newton)
            }
            (StepMode::Arclength, None) => break StopReason::Abort("arclength mode needs two branch points".into()),
        };
        match attempt {
            Ok(next) => {
                let rho = ray.at(next.s);
                let meas = match measure(&p, &next.state, &rho, &settings) {
                    Ok(m) => m,
                    Err(e) => break StopReason::Abort(e.to_string()),
                };
                let last = records.last().map_or(meas.theta_max, |r: &ContinuationRecord| r.theta_max);
                if (meas.theta_max - last).abs() > ctl.max_height_change && h > ctl.min_step {
                    h *= 0.5;
                    continue;
                }
                if let Some(pv) = &prev {
                    if (cur.s - pv.s) * (next.s - cur.s) < 0.0 {
                        folds.push(cur.s);
                    }
                }
                if next.iterations <= 4 {
                    h = (h * 1.5).min(ctl.max_step);
                }
                prev = Some(std::mem::replace(&mut cur, next));
                records.push(record(records.len(), &p, ray, &cur, mode, ctl, &meas)?);
                let lam = records.last().map(|r| r.lambda).unwrap_or(lambda0);
                if ctl.stop_at_surface && lam * lambda0 <= 0.0 {
                    break StopReason::Surface;
                }
                lambda0 = if lam != 0.0 { lam } else { lambda0 };
                if let Some(eps) = meas.min_eps() {
                    let spacing = p.grid.spacing();
                    if level + 1 == ctl.ladder.len() && eps < ctl.stop_cells * spacing {
                        break StopReason::Resolution;
                    }
                    if level + 1 < ctl.ladder.len() && eps < ctl.refine_cells * spacing {
                        level += 1;
                        let mut finer = problem.at_resolution(ctl.ladder[level])?;
                        finer.dealias = p.dealias;
                        let lift = |bp: &BranchPoint| -> Result<BranchPoint> {
                            let up = bp.state.upsample(ctl.ladder[level])?;
                            let r = newton_solve(&finer, &up, &ray.at(bp.s), &newton)?;
                            Ok(BranchPoint { state: r.state, s: bp.s, residual: r.residual, iterations: r.iterations })
                        };
                        match (lift(&cur), prev.as_ref().map(lift).transpose()) {
                            (Ok(c), Ok(pv)) => {
                                cur = c;
                                prev = pv;
                                p = finer;
                            }
                            (Err(e), _) | (_, Err(e)) => break StopReason::Abort(format!("refinement failed: {e}")),
                        }
                    }
                }
            }
            Err(e) => {
                if mode == StepMode::Natural && prev.is_some() {
                    // fold signal: switch to arclength with a comparable step
                    mode = StepMode::Arclength;
                    h = ctl.step.min(h);
                    continue;
                }
                h *= 0.5;
                if h < ctl.min_step {
                    break StopReason::Abort(format!("step underflow at s = {:.6}: {e}", cur.s));
                }
            }
        }
    };
    Ok(ContinuationRun { records, stop, folds, final_state: Some(cur.state) })
}

/// CSV with step, rho_i, lambda_I, N_detected, M_kt, eps_kt, rho_it, residual;
/// rows with fewer bubbles leave the trailing cells empty.
pub fn write_records_csv<W: Write>(records: &[ContinuationRecord], mut w: W) -> Result<()> {
    let n = records.first().map_or(0, |r| r.rho.len());
    let nb = records.iter().map(|r| r.n_detected()).max().unwrap_or(0);
    let mut head = vec!["step".to_string()];
    head.extend((1..=n).map(|i| format!("rho_{i}")));
    head.push("lambda_I".into());
    head.push("N_detected".into());
    head.extend((1..=nb).map(|t| format!("M_k{t}")));
    head.extend((1..=nb).map(|t| format!("eps_k{t}")));
    for t in 1..=nb {
        head.extend((1..=n).map(|i| format!("rho_{i}{t}")));
    }
    head.push("residual".into());
    writeln!(w, "{}", head.join(","))?;
    let num = |x: f64| format!("{x:.17e}");
    for r in records {
        let mut row = vec![r.step.to_string()];
        row.extend(r.rho.iter().map(|x| num(*x)));
        row.push(num(r.lambda));
        row.push(r.n_detected().to_string());
        for t in 0..nb {
            row.push(r.m_k.get(t).map_or(String::new(), |x| num(*x)));
        }
        for t in 0..nb {
            row.push(r.eps_k.get(t).map_or(String::new(), |x| num(*x)));
        }
        for t in 0..nb {
            for i in 0..n {
                row.push(r.rho_it.get(t).map_or(String::new(), |v| num(v[i])));
            }
        }
        row.push(num(r.residual));
        writeln!(w, "{}", row.join(","))?;
    }
    Ok(())
}

/// Λ/(ε² log ε⁻¹) for every record with a detected bubble.
pub fn rate_ratios(records: &[ContinuationRecord]) -> Vec<(f64, f64)> {
    records
        .iter()
        .filter_map(|r| r.min_eps().map(|e| (e, r.lambda / (e * e * (1.0 / e).ln()))))
        .collect()
}

/// ρ on the ray that reaches Λ = 0 for n = 1 is 8πN; handy for setting up rays.
pub fn scalar_critical(level: usize) -> f64 {
    8.0 * PI * level as f64
}
