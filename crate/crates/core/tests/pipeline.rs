//! Cross-module runs: radial data feeding the location, coefficient and PDE layers.

use std::f64::consts::PI;

use liouville::geometry::{coefficient_report, solve_locations, BlowupConfiguration, Gauge, TrigPoly, WeightFunction};
use liouville::green::{GreenEvaluator, GreenMode};
use liouville::leading::{b_coefficients, d_total, Quadrature};
use liouville::pde::continuation::{rate_ratios, write_records_csv};
use liouville::pde::{continue_ray, measure, ContinuationControls, MeanFieldProblem, MeasureSettings, Ray, StopReason};
use liouville::radial::{solve, HeightVector, DEFAULT_R_MAX, DEFAULT_TOL};
use liouville::system_algebra::{classify, Classification, InteractionMatrix, ParameterPoint};

#[test]
fn located_pair_feeds_both_coefficients() {
    let ev = GreenEvaluator::new(GreenMode::Ewald);
    let one = WeightFunction::one();
    let sol = solve_locations(&ev, vec![one.clone()], vec![4.0], vec![[0.02, 0.01], [0.47, 0.53]], Gauge::Auto).unwrap();
    let d = liouville::green::min_image(sol.config.points[0], sol.config.points[1]);
    assert!((d[0].abs() - 0.5).abs() < 1e-8 && (d[1].abs() - 0.5).abs() < 1e-8, "{d:?}");

    let (_, s) = solve(&InteractionMatrix::scalar(1.0).unwrap(), &HeightVector::zeros(1), DEFAULT_R_MAX, DEFAULT_TOL).unwrap();
    let b = b_coefficients(&ev, &sol.config, &s).unwrap();
    // each point of the pair carries 64·8π
    assert!((b.total / (2.0 * 64.0 * 8.0 * PI) - 1.0).abs() < 1e-6);
    assert!(b.lambda_prediction(1e-2) < 0.0);

    // with m < 4 the same geometry goes through the bracket route instead
    let a = InteractionMatrix::from_rows(&[vec![1.0, 2.0], vec![2.0, 1.0]]).unwrap();
    let (_, s2) = solve(&a, &HeightVector::new(vec![0.0, 0.4]).unwrap(), DEFAULT_R_MAX, DEFAULT_TOL).unwrap();
    let cfg = BlowupConfiguration::new(sol.config.points.clone(), s2.m.clone(), vec![one.clone(), one]).unwrap();
    assert!(coefficient_report(&ev, &cfg).unwrap().compatibility_defect < 1e-10);
    let rep = d_total(&ev, &cfg, &s2, &[0.04, 0.02], 1.0, Quadrature::default()).unwrap();
    assert!(rep.d_total.is_finite() && rep.cauchy_defect < 1e-2);
    assert!(b_coefficients(&ev, &cfg, &s2).is_err());
}

fn h2() -> WeightFunction {
    WeightFunction::Trig(TrigPoly::constant(1.0).with_cos([1, 0], 0.5).with_cos([0, 1], 0.5))
}

#[test]
fn short_branch_below_the_first_surface() {
    let a = InteractionMatrix::scalar(1.0).unwrap();
    let p = MeanFieldProblem::new(a.clone(), vec![h2()], 64).unwrap();
    let ctl = ContinuationControls { ladder: vec![64], max_steps: 8, ..Default::default() };
    let run = continue_ray(p, &Ray { base: vec![PI], dir: vec![2.0 * PI] }, None, &ctl).unwrap();
    assert_eq!(run.stop, StopReason::MaxSteps);
    assert_eq!(run.stop.exit_code(), 2);
    assert_eq!(run.records.len(), 9);
    for r in &run.records {
        assert!(r.residual < 1e-10);
        let side = classify(&a, &ParameterPoint::new(r.rho.clone(), 1).unwrap(), 1e-12, 0).unwrap();
        assert_eq!(side.classification, Classification::LowerSide);
        assert!(r.lambda > 0.0);
        assert!(r.partition_defect < 1e-10);
    }
    assert!(run.records.windows(2).all(|w| w[1].rho[0] > w[0].rho[0]));
    // no bubbles this far from concentration, so nothing to rate
    assert!(rate_ratios(&run.records).is_empty());
    let mut buf = Vec::new();
    write_records_csv(&run.records, &mut buf).unwrap();
    let text = String::from_utf8(buf).unwrap();
    assert_eq!(text.lines().count(), 10);
    assert!(text.starts_with("step,rho_1,lambda_I,N_detected"));

    let st = run.final_state.unwrap();
    let p = MeanFieldProblem::new(a, vec![h2()], 64).unwrap();
    let m = measure(&p, &st, &run.records.last().unwrap().rho, &MeasureSettings::default()).unwrap();
    assert!(m.bubbles.is_empty());
    assert_eq!(m.theta_max, run.records.last().unwrap().theta_max);
}
