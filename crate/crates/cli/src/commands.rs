//! One function per subcommand. Each returns the JSON result plus any CSV
//! tables; `main` handles printing, artifacts and the manifest.

use liouville::geometry::{coefficient_report, solve_locations, write_trace_csv, BlowupConfiguration};
use liouville::green::{probe, spectral_check, write_probes_csv, GreenEvaluator, GreenMode, Point};
use liouville::leading::{b_coefficients, d_total, write_brackets_csv, Quadrature};
use liouville::mass_map::{invert, jacobian, sweep, tensor_grid, write_sweep_csv, DEFAULT_H_STEP};
use liouville::pde::continuation::write_records_csv;
use liouville::pde::{continue_ray, MeanFieldProblem};
use liouville::radial::{expansion_residual, solve, GlobalSolutionSummary, HeightVector, DEFAULT_R_MAX, DEFAULT_TOL};
use liouville::system_algebra::{
    check_hypotheses, classify, degree, lambda_full, project_to_gamma, q_point, InteractionMatrix, ParameterPoint,
    DEFAULT_GAMMA_TOL,
};
use liouville::verify;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::{json, Value};

use crate::config::ExperimentConfig;
use crate::CliError;

pub const DEFAULT_DELTAS: [f64; 3] = [0.08, 0.04, 0.02];
pub const DEFAULT_RANDOM_PROBES: usize = 10;

pub struct Outcome {
    pub json: Value,
    pub tables: Vec<(String, Vec<u8>)>,
    /// Replaces the JSON on stdout when set.
    pub stdout: Option<String>,
    pub exit_code: i32,
}

impl Outcome {
    fn json(json: Value) -> Self {
        Self { json, tables: Vec::new(), stdout: None, exit_code: 0 }
    }

    fn table(mut self, name: &str, data: Vec<u8>) -> Self {
        self.tables.push((name.to_string(), data));
        self
    }
}

fn csv<F>(f: F) -> Result<Vec<u8>, CliError>
where
    F: FnOnce(&mut Vec<u8>) -> liouville::error::Result<()>,
{
    let mut buf = Vec::new();
    f(&mut buf)?;
    Ok(buf)
}

fn level(cfg: &ExperimentConfig) -> usize {
    cfg.level.unwrap_or(1)
}

fn heights(cfg: &ExperimentConfig, n: usize) -> Result<HeightVector, CliError> {
    let alpha = cfg.alpha.clone().unwrap_or_else(|| vec![0.0; n]);
    if alpha.len() != n {
        return Err(CliError::Usage(format!("--alpha has {} entries for n = {n}", alpha.len())));
    }
    Ok(HeightVector::new(alpha)?)
}

fn global_solution(cfg: &ExperimentConfig, a: &InteractionMatrix) -> Result<GlobalSolutionSummary, CliError> {
    let alpha = heights(cfg, a.n())?;
    Ok(solve(a, &alpha, cfg.r_max.unwrap_or(DEFAULT_R_MAX), cfg.tol.unwrap_or(DEFAULT_TOL))?.1)
}

fn evaluator(cfg: &ExperimentConfig) -> GreenEvaluator {
    GreenEvaluator::new(cfg.green_mode.unwrap_or(GreenMode::Fourier))
}

pub fn check_matrix(cfg: &ExperimentConfig) -> Result<Outcome, CliError> {
    let a = cfg.interaction_matrix()?;
    let h = check_hypotheses(&a);
    let inverse = a.inverse().ok().map(|m| (0..a.n()).map(|i| (0..a.n()).map(|j| m[(i, j)]).collect::<Vec<_>>()).collect::<Vec<_>>());
    Ok(Outcome::json(json!({
        "n": a.n(),
        "symmetric": a.is_symmetric(),
        "irreducible": a.is_irreducible(),
        "h1": h.h1,
        "h2": h.h2,
        "reasons": h.reasons,
        "inverse": inverse,
    })))
}

pub fn gamma(cfg: &ExperimentConfig) -> Result<Outcome, CliError> {
    let a = cfg.interaction_matrix()?;
    let n = level(cfg);
    if cfg.rho.is_none() && cfg.direction.is_none() {
        return Err(CliError::Usage("gamma needs --rho or a direction in the config".into()));
    }
    let report = match &cfg.rho {
        Some(rho) => {
            let p = ParameterPoint::new(rho.clone(), n)?;
            Some(classify(&a, &p, cfg.tol.unwrap_or(DEFAULT_GAMMA_TOL), cfg.chi.unwrap_or(0))?)
        }
        None => None,
    };
    let projection = match &cfg.direction {
        Some(d) => Some(project_to_gamma(&a, d, n)?),
        None => None,
    };
    Ok(Outcome::json(json!({ "level": n, "region": report, "projection": projection })))
}

pub fn qpoint(cfg: &ExperimentConfig) -> Result<Outcome, CliError> {
    let a = cfg.interaction_matrix()?;
    let q = q_point(&a, level(cfg))?;
    let lambda = lambda_full(&a, &q)?;
    Ok(Outcome::json(json!({ "level": q.level, "q": q.rho, "lambda_i": lambda })))
}

pub fn degree_cmd(cfg: &ExperimentConfig) -> Result<Outcome, CliError> {
    let n = cfg.level.ok_or_else(|| CliError::Usage("degree needs --N".into()))?;
    let chi = cfg.chi.ok_or_else(|| CliError::Usage("degree needs --chi".into()))?;
    let d = degree(n, chi);
    let mut out = Outcome::json(json!({ "level": n, "chi": chi, "degree": d }));
    out.stdout = Some(d.to_string());
    Ok(out)
}

pub fn global_solve(cfg: &ExperimentConfig) -> Result<Outcome, CliError> {
    let a = cfg.interaction_matrix()?;
    let alpha = heights(cfg, a.n())?;
    let r_max = cfg.r_max.unwrap_or(DEFAULT_R_MAX);
    let (profile, s) = solve(&a, &alpha, r_max, cfg.tol.unwrap_or(DEFAULT_TOL))?;
    let expansion = if s.m_min < 4.0 { expansion_residual(&a, &s, &profile, (r_max / 100.0, r_max)).ok() } else { None };
    let json = json!({
        "alpha": s.alpha.alpha,
        "sigma": s.sigma,
        "m": s.m,
        "m_min": s.m_min,
        "D": s.d,
        "tail_residual": s.tail_residual,
        "pohozaev_defect": s.pohozaev_defect(),
        "quadratic_pohozaev_defect": s.quadratic_pohozaev_defect(&a).ok(),
        "expansion": expansion,
    });
    Ok(Outcome::json(json).table("profile.csv", csv(|w| profile.write_csv(w))?))
}

pub fn mass_map(cfg: &ExperimentConfig) -> Result<Outcome, CliError> {
    let a = cfg.interaction_matrix()?;
    let dim = a.n().checked_sub(1).filter(|d| *d > 0).ok_or_else(|| CliError::Usage("mass-map needs n ≥ 2".into()))?;
    let start = match &cfg.alpha {
        Some(al) if al.len() == dim => al.clone(),
        Some(al) if al.len() == a.n() => al[1..].iter().map(|x| x - al[0]).collect(),
        Some(al) => return Err(CliError::Usage(format!("--alpha has {} entries, need {dim} or {}", al.len(), a.n()))),
        None => vec![0.0; dim],
    };
    if let Some(target) = &cfg.target_sigma {
        let inv = invert(&a, target, &start)?;
        return Ok(Outcome::json(json!({ "inversion": inv })));
    }
    let points = match &cfg.mass_grid {
        Some(g) => tensor_grid(dim, g.lo, g.hi, g.points_per_axis),
        None => vec![start],
    };
    let results = sweep(&a, &points, DEFAULT_H_STEP);
    let mut ok = Vec::new();
    let mut failed = Vec::new();
    for (p, r) in points.iter().zip(results) {
        match r {
            Ok(s) => ok.push(s),
            Err(e) => failed.push(json!({ "alpha_hat": p, "error": e.kind(), "message": e.to_string() })),
        }
    }
    if ok.len() == 1 && failed.is_empty() && cfg.mass_grid.is_none() {
        return Ok(Outcome::json(json!({ "sample": jacobian(&a, &ok[0].alpha_hat, DEFAULT_H_STEP)? })));
    }
    let min_det = ok.iter().map(|s| s.det.abs()).fold(f64::INFINITY, f64::min);
    let json = json!({ "samples": ok.len(), "min_abs_det": min_det, "failures": failed });
    Ok(Outcome::json(json).table("mass_map.csv", csv(|w| write_sweep_csv(&ok, w))?))
}

pub fn green_probe(cfg: &ExperimentConfig) -> Result<Outcome, CliError> {
    let ev = evaluator(cfg);
    let mut pairs = cfg.probes.clone();
    if pairs.is_empty() {
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        let mut pt = || -> Point { [rng.gen_range(0.0..1.0), rng.gen_range(0.0..1.0)] };
        pairs = (0..cfg.random_probes.unwrap_or(DEFAULT_RANDOM_PROBES)).map(|_| [pt(), pt()]).collect();
    }
    let rows = pairs.iter().map(|[x, y]| probe(&ev, *x, *y)).collect::<liouville::error::Result<Vec<_>>>()?;
    let spectral = match (cfg.resolution, pairs.first()) {
        (Some(m), Some([_, y])) => Some(spectral_check(&ev, *y, m)),
        _ => None,
    };
    let json = json!({ "mode": ev.mode(), "robin_constant": ev.robin_constant(), "probes": rows.len(), "spectral": spectral });
    Ok(Outcome::json(json).table("probes.csv", csv(|w| write_probes_csv(&rows, w))?))
}

fn blowup_config(cfg: &ExperimentConfig, n: usize, masses: Vec<f64>) -> Result<BlowupConfiguration, CliError> {
    if cfg.points.is_empty() {
        return Err(CliError::Usage("blowup points are required in the config".into()));
    }
    Ok(BlowupConfiguration::new(cfg.points.clone(), masses, cfg.weights_for(n)?)?)
}

pub fn locations(cfg: &ExperimentConfig) -> Result<Outcome, CliError> {
    let ev = evaluator(cfg);
    let n = cfg.masses.len().max(1);
    let masses = if cfg.masses.is_empty() { vec![4.0] } else { cfg.masses.clone() };
    if cfg.points.is_empty() {
        return Err(CliError::Usage("initial points are required in the config".into()));
    }
    let sol = solve_locations(&ev, cfg.weights_for(n)?, masses, cfg.points.clone(), cfg.gauge)?;
    let coeff = coefficient_report(&ev, &sol.config)?;
    let json = json!({ "points": sol.config.points, "iterations": sol.iterations, "coefficients": coeff });
    Ok(Outcome::json(json).table("trace.csv", csv(|w| write_trace_csv(&sol.trace, w))?))
}

pub fn leading_term(cfg: &ExperimentConfig) -> Result<Outcome, CliError> {
    let a = cfg.interaction_matrix()?;
    let s = global_solution(cfg, &a)?;
    let bc = blowup_config(cfg, a.n(), s.m.clone())?;
    let deltas = if cfg.deltas.is_empty() { DEFAULT_DELTAS.to_vec() } else { cfg.deltas.clone() };
    let cf = cfg.convention_factor.unwrap_or(2.0);
    let rep = d_total(&evaluator(cfg), &bc, &s, &deltas, cf, Quadrature::default())?;
    let rows = rep.brackets.clone();
    Ok(Outcome::json(json!(rep)).table("brackets.csv", csv(|w| write_brackets_csv(&rows, w))?))
}

pub fn b_coeff(cfg: &ExperimentConfig) -> Result<Outcome, CliError> {
    let a = cfg.interaction_matrix()?;
    let s = global_solution(cfg, &a)?;
    let bc = blowup_config(cfg, a.n(), s.m.clone())?;
    let rep = b_coefficients(&evaluator(cfg), &bc, &s)?;
    Ok(Outcome::json(json!(rep)))
}

pub fn pde_continue(cfg: &ExperimentConfig) -> Result<Outcome, CliError> {
    let a = cfg.interaction_matrix()?;
    let ray = cfg.ray.clone().ok_or_else(|| CliError::Usage("pde-continue needs a ray in the config".into()))?;
    let mut ctl = cfg.controls.clone();
    if let Some(m) = cfg.resolution {
        // cap the ladder at the requested resolution
        ctl.ladder.retain(|&r| r <= m);
        if ctl.ladder.last() != Some(&m) {
            ctl.ladder.push(m);
        }
    }
    let start = *ctl.ladder.first().ok_or_else(|| CliError::Usage("empty resolution ladder".into()))?;
    let weights = cfg.weights_for(a.n())?;
    let p = MeanFieldProblem::new(a, weights, start)?;
    let run = continue_ray(p, &ray, None, &ctl)?;
    let json = json!({
        "stop": run.stop,
        "folds": run.folds,
        "records": run.records.len(),
        "last": run.records.last(),
        "controls": ctl,
    });
    let mut out = Outcome::json(json).table("continuation.csv", csv(|w| write_records_csv(&run.records, w))?);
    out.exit_code = run.stop.exit_code();
    Ok(out)
}

pub fn verify_all(_cfg: &ExperimentConfig) -> Result<Outcome, CliError> {
    let mut results = Vec::new();
    for id in verify::CRITERIA {
        let r = verify::run(id);
        eprintln!("{}", r.line());
        results.push(r);
    }
    let passed = results.iter().all(|r| r.passed);
    let mut out = Outcome::json(json!({ "passed": passed, "criteria": results }));
    out.exit_code = if passed { 0 } else { 2 };
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use liouville::system_algebra::MatrixSpec;

    fn scalar() -> ExperimentConfig {
        ExperimentConfig { matrix: Some(MatrixSpec { n: 1, a: vec![vec![1.0]] }), ..Default::default() }
    }

    #[test]
    fn degree_prints_integer() {
        let cfg = ExperimentConfig { level: Some(0), chi: Some(2), ..Default::default() };
        assert_eq!(degree_cmd(&cfg).unwrap().stdout.as_deref(), Some("1"));
        let cfg = ExperimentConfig { level: Some(1), ..Default::default() };
        assert!(matches!(degree_cmd(&cfg), Err(CliError::Usage(_))));
    }

    #[test]
    fn scalar_global_solve() {
        let out = global_solve(&scalar()).unwrap();
        let m = out.json["m"][0].as_f64().unwrap();
        let d = out.json["D"][0].as_f64().unwrap();
        assert!((m - 4.0).abs() < 1e-8 && (d - 64f64.ln()).abs() < 1e-8);
        assert_eq!(out.tables[0].0, "profile.csv");
    }

    #[test]
    fn random_probes_are_seeded() {
        let cfg = ExperimentConfig { seed: 3, random_probes: Some(4), ..Default::default() };
        let (a, b) = (green_probe(&cfg).unwrap(), green_probe(&cfg).unwrap());
        assert_eq!(a.tables, b.tables);
        let other = green_probe(&ExperimentConfig { seed: 4, ..cfg }).unwrap();
        assert_ne!(a.tables, other.tables);
    }

    #[test]
    fn missing_inputs_are_usage_errors() {
        assert!(matches!(gamma(&scalar()), Err(CliError::Usage(_))));
        assert!(matches!(check_matrix(&ExperimentConfig::default()), Err(CliError::Usage(_))));
        assert!(matches!(pde_continue(&scalar()), Err(CliError::Usage(_))));
    }
}
