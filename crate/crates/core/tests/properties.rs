//! Invariants checked on random inputs.

use std::f64::consts::PI;

use liouville::geometry::{BlowupConfiguration, TrigPoly, WeightFunction};
use liouville::green::{min_image, GreenEvaluator, GreenMode, Point};
use liouville::leading::{b_coefficients, voronoi_cells};
use liouville::pde::{measure, FieldState, MeanFieldProblem, MeasureSettings};
use liouville::radial::{solve, HeightVector, DEFAULT_R_MAX, DEFAULT_TOL};
use liouville::system_algebra::{
    check_hypotheses, classify, degree, lambda_full, project_to_gamma, InteractionMatrix, ParameterPoint,
};
use proptest::prelude::*;

fn sym3() -> impl Strategy<Value = Vec<Vec<f64>>> {
    prop::array::uniform6(0.0..3.0f64).prop_map(|e| {
        vec![vec![e[0], e[1], e[2]], vec![e[1], e[3], e[4]], vec![e[2], e[4], e[5]]]
    })
}

fn point() -> impl Strategy<Value = Point> {
    (0.0..1.0f64, 0.0..1.0f64).prop_map(|(a, b)| [a, b])
}

fn weight() -> impl Strategy<Value = WeightFunction> {
    (-0.3..0.3f64, -0.3..0.3f64, 1i32..3, 1i32..3).prop_map(|(a, b, k, l)| {
        WeightFunction::Trig(TrigPoly::constant(1.0).with_cos([k, 0], a).with_sin([0, l], b))
    })
}

/// 2×2 matrices [[a,b],[b,c]] with b > a, c ≥ 0 satisfy both hypotheses.
fn admissible2() -> impl Strategy<Value = Vec<Vec<f64>>> {
    (1.0..2.0f64, 0.0..1.0f64, 0.0..1.0f64).prop_map(|(b, x, y)| vec![vec![x * b, b], vec![b, y * b]])
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn lambda_and_class_are_permutation_invariant(rows in sym3(), rho in prop::array::uniform3(1.0..40.0f64), level in 1usize..3) {
        let a = InteractionMatrix::from_rows(&rows).unwrap();
        let perm = [2, 0, 1];
        let b = a.permuted(&perm).unwrap();
        let p = ParameterPoint::new(rho.to_vec(), level).unwrap();
        let q = ParameterPoint::new(perm.iter().map(|&k| rho[k]).collect(), level).unwrap();
        let (la, lb) = (lambda_full(&a, &p).unwrap(), lambda_full(&b, &q).unwrap());
        prop_assert!((la - lb).abs() <= 1e-9 * (1.0 + la.abs()));
        let (ca, cb) = (classify(&a, &p, 1e-9, 0).unwrap(), classify(&b, &q, 1e-9, 0).unwrap());
        prop_assert_eq!(ca.classification, cb.classification);
        prop_assert_eq!(check_hypotheses(&a).h2, check_hypotheses(&b).h2);
    }

    #[test]
    fn projection_lands_on_the_surface(rows in sym3(), dir in prop::array::uniform3(0.1..1.0f64), level in 1usize..4) {
        let a = InteractionMatrix::from_rows(&rows).unwrap();
        if let Ok(p) = project_to_gamma(&a, &dir, level) {
            let scale = p.rho.iter().sum::<f64>();
            prop_assert!(lambda_full(&a, &p).unwrap().abs() <= 1e-10 * (1.0 + scale));
        }
    }

    #[test]
    fn degree_matches_product_formula(level in 0usize..8, chi in -6i64..3) {
        let mut num = 1.0f64;
        let mut fact = 1.0f64;
        for k in 1..=level {
            num *= k as f64 - chi as f64;
            fact *= k as f64;
        }
        prop_assert_eq!(degree(level, chi) as f64, num / fact);
    }

    #[test]
    fn green_is_symmetric_and_periodic(x in point(), y in point(), n in -2i32..3, m in -2i32..3) {
        prop_assume!(min_image(x, y).iter().map(|d| d * d).sum::<f64>() > 1e-6);
        let ev = GreenEvaluator::new(GreenMode::Fourier);
        let g = ev.green(x, y).unwrap();
        prop_assert!((g - ev.green(y, x).unwrap()).abs() < 1e-13);
        let shifted = [x[0] + n as f64, x[1] + m as f64];
        prop_assert!((g - ev.green(shifted, y).unwrap()).abs() < 1e-12);
    }

    #[test]
    fn voronoi_cells_tile_the_torus(pts in prop::collection::vec(point(), 1..6), x in point()) {
        for (i, p) in pts.iter().enumerate() {
            for q in &pts[..i] {
                let d = min_image(*p, *q);
                prop_assume!(d[0].hypot(d[1]) > 0.05);
            }
        }
        let cells = voronoi_cells(&pts);
        let area: f64 = cells.iter().map(|c| c.area()).sum();
        prop_assert!((area - 1.0).abs() < 1e-10);
        // cells are stored relative to their centers
        for c in &cells {
            prop_assert!(c.inradius() > 0.0);
            prop_assert!(c.contains([0.0, 0.0]));
        }
        let dist = |p: &Point| { let d = min_image(x, *p); d[0].hypot(d[1]) };
        let nearest = (0..pts.len()).min_by(|&i, &j| dist(&pts[i]).total_cmp(&dist(&pts[j]))).unwrap();
        prop_assert!(cells[nearest].contains(min_image(x, pts[nearest])));
    }

    #[test]
    fn log_weight_shifts_under_scaling(h in weight(), x in point(), c in 1e-3..1e3f64) {
        let s = h.scaled(c);
        prop_assert!((s.log_value(x) - h.log_value(x) - c.ln()).abs() < 1e-12);
        let (g, gs) = (h.grad_log(x), s.grad_log(x));
        prop_assert!((g[0] - gs[0]).abs() < 1e-12 && (g[1] - gs[1]).abs() < 1e-12);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn pohozaev_identities_hold(rows in admissible2(), a2 in 0.0..0.8f64) {
        let a = InteractionMatrix::from_rows(&rows).unwrap();
        let h = check_hypotheses(&a);
        prop_assert!(h.h1 && h.h2);
        match solve(&a, &HeightVector::new(vec![0.0, a2]).unwrap(), DEFAULT_R_MAX, DEFAULT_TOL) {
            Ok((_, s)) => {
                prop_assert!(s.pohozaev_defect() < 1e-8);
                prop_assert!(s.quadratic_pohozaev_defect(&a).unwrap() < 1e-7);
            }
            Err(liouville::error::Error::NonIntegrable(_)) => {}
            Err(e) => prop_assert!(false, "{e}"),
        }
    }

    #[test]
    fn masses_ignore_a_common_height_shift(rows in admissible2(), a2 in 0.0..0.8f64, c in -1.0..1.0f64) {
        let a = InteractionMatrix::from_rows(&rows).unwrap();
        let base = HeightVector::new(vec![0.0, a2]).unwrap();
        if let (Ok((_, s)), Ok((_, t))) = (
            solve(&a, &base, DEFAULT_R_MAX, DEFAULT_TOL),
            solve(&a, &base.shifted(c), DEFAULT_R_MAX, DEFAULT_TOL),
        ) {
            for (x, y) in s.sigma.iter().zip(&t.sigma) {
                prop_assert!((x - y).abs() < 1e-7 * x.abs(), "{x} {y}");
            }
        }
    }

    #[test]
    fn b_ignores_weight_rescaling(h in weight(), p in point(), c in 1e-3..1e3f64) {
        let (_, s) = solve(&InteractionMatrix::scalar(1.0).unwrap(), &HeightVector::zeros(1), DEFAULT_R_MAX, DEFAULT_TOL).unwrap();
        let ev = GreenEvaluator::new(GreenMode::Fourier);
        let base = BlowupConfiguration::new(vec![p], vec![4.0], vec![h.clone()]).unwrap();
        let scaled = BlowupConfiguration::new(vec![p], vec![4.0], vec![h.scaled(c)]).unwrap();
        let (x, y) = (b_coefficients(&ev, &base, &s).unwrap().total, b_coefficients(&ev, &scaled, &s).unwrap().total);
        prop_assert!((x - y).abs() <= 16.0 * f64::EPSILON * x.abs().max(1.0), "{x} {y}");
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn bubble_partition_is_exact(c in point(), lam in 200.0..3000.0f64, rho in 1.0..30.0f64, h in weight()) {
        let p = MeanFieldProblem::new(InteractionMatrix::scalar(1.0).unwrap(), vec![h], 64).unwrap();
        let u = p.grid.sample(|x| {
            let d = min_image(x, c);
            -2.0 * (1.0 + lam * (d[0] * d[0] + d[1] * d[1])).ln() + 0.1 * (2.0 * PI * x[0]).sin()
        });
        let st = FieldState::from_fields(&p.grid, &[u]);
        let settings = MeasureSettings { delta0: 0.1, ..Default::default() };
        let m = measure(&p, &st, &[rho], &settings).unwrap();
        prop_assert!(m.partition_defect < 1e-12 * rho);
        prop_assert!(m.bubbles.len() <= 1);
        for b in &m.bubbles {
            prop_assert_eq!(b.eps, (-0.5 * b.height).exp());
        }
    }
}
