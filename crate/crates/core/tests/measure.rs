use std::f64::consts::PI;

use plap_core::pharmonic_measure::*;
use plap_core::plap_solver::SolverConfig;
use proptest::prelude::*;

fn cfg() -> SolverConfig {
    SolverConfig::default()
}

#[test]
fn full_and_empty_sets() {
    let full = MeasureProblem::new(3.0, &[(0.0, 2.0 * PI)]).unwrap();
    assert!(full.is_full());
    let b = estimate_measure(&full, 0.08, &cfg()).unwrap();
    assert_eq!((b.lower, b.upper), (1.0, 1.0));
    let b = estimate_measure(&MeasureProblem::empty(3.0).unwrap(), 0.08, &cfg()).unwrap();
    assert_eq!((b.lower, b.upper), (0.0, 0.0));
}

#[test]
fn harmonic_arc_is_bracketed_and_additive() {
    let e = MeasureProblem::new(2.0, &[(0.0, 0.5 * PI)]).unwrap();
    let b = estimate_measure(&e, 0.08, &cfg()).unwrap();
    assert!(b.lower <= 0.25 && 0.25 <= b.upper, "{b:?}");
    assert!(b.width() < 0.05);
    let c = estimate_measure(&e.complement(), 0.08, &cfg()).unwrap();
    assert!(b.lower + c.lower <= 1.0 + 1e-9 && b.upper + c.upper >= 1.0 - 1e-9);
    assert!((b.upper + c.lower - 1.0).abs() < 1e-6, "{} {}", b.upper, c.lower);
}

#[test]
fn rotation_and_nesting() {
    let delta = 0.08;
    let n = measure_grid(delta).n_theta;
    let e = MeasureProblem::new(3.0, &[(0.3, 1.8)]).unwrap();
    let big = MeasureProblem::new(3.0, &[(0.1, 2.4)]).unwrap();
    let a = estimate_measure(&e, delta, &cfg()).unwrap();
    let r = estimate_measure(&e.rotated(2.0 * PI * 37.0 / n as f64), delta, &cfg()).unwrap();
    assert!((a.lower - r.lower).abs() < 1e-9 && (a.upper - r.upper).abs() < 1e-9, "{a:?} {r:?}");
    let b = estimate_measure(&big, delta, &cfg()).unwrap();
    assert!(a.upper <= b.upper + 1e-9 && a.lower <= b.lower + 1e-9);
    assert!(a.lower <= a.upper);
}

#[test]
fn invalid_inputs() {
    assert!(matches!(MeasureProblem::new(1.0, &[]), Err(MeasureError::InvalidP(_))));
    assert!(matches!(MeasureProblem::new(2.0, &[(1.0, 0.0)]), Err(MeasureError::InvalidArc(..))));
    let e = MeasureProblem::new(2.0, &[(0.0, 1.0), (1.01, 2.0)]).unwrap();
    assert!(matches!(estimate_measure(&e, 0.05, &cfg()), Err(MeasureError::ArcsTooClose { .. })));
    assert!(matches!(estimate_measure(&e, 0.0, &cfg()), Err(MeasureError::InvalidDelta(_))));
    assert!(matches!(normalize_profiles(&[vec![0.0; 64]]), Err(MeasureError::NonpositiveMean { level: 1, .. })));
    assert!(matches!(validate_frequencies(&[1, 4, 12], 4), Err(MeasureError::Divisibility { .. })));
}

#[test]
fn lambda_from_constant_minima() {
    let m = block_minima(&vec![0.1; 64], 2, 1).unwrap();
    let c = choose_lambda(&[m], 2, 1.0).unwrap();
    assert!((c.lambda - 1.1f64.sqrt()).abs() < 1e-14);
    assert!((c.upper - 1.1).abs() < 1e-14);
    let zero = BlockMinima {
        a: vec![0.0; 2],
        sum: 0.0,
        product: 1.0,
    };
    assert!(matches!(choose_lambda(&[zero], 2, 1.0), Err(MeasureError::EmptyFeasibleInterval(_))));
}

#[test]
fn single_level_constant_products() {
    let norm = normalize_profiles(&[vec![0.3; 64]]).unwrap();
    assert!(norm.tables[0].iter().all(|&v| (v - 0.5).abs() < 1e-15));
    let prods = build_products(&[1], &norm, 2).unwrap();
    assert!(prods.report.passed(), "{:?}", prods.report);
    assert!((prods.choice.lambda - 1.5f64.sqrt()).abs() < 1e-14);
    for k in 1..=2 {
        let s = prods.state(1, k);
        assert!(s.f.iter().all(|&v| (v - 1.5).abs() < 1e-15));
        assert!(s.level_set(2.0).is_full());
    }
}

#[test]
fn block_increments_are_orthogonal() {
    let kappa = 4;
    let rows = [[0.1, 0.3, 0.2, 0.4], [0.2, 0.05, 0.3, 0.1], [0.4, 0.1, 0.1, 0.2]];
    let minima: Vec<BlockMinima> = rows
        .iter()
        .map(|a| BlockMinima {
            a: a.to_vec(),
            sum: a.iter().sum(),
            product: a.iter().map(|v| 1.0 + v).product(),
        })
        .collect();
    let (rep, fit) = orthogonal_growth(&[1, 4, 16], &minima, kappa, 1, 2048, 5).unwrap();
    assert!(fit.max_inner < 1e-10, "{}", fit.max_inner);
    assert!(fit.max_block_mean < 1e-12);
    assert_eq!(fit.q95.len(), 3);
    assert!(rep.checks.iter().any(|c| c.name == "max inner product" && c.pass));
}

#[test]
fn geometric_fit() {
    let pts: Vec<(f64, f64)> = (1..6).map(|n| (n as f64, 3.0 * 0.7f64.powi(n))).collect();
    assert!((fit_ratio(&pts) - 0.7).abs() < 1e-12);
    assert!(fit_ratio(&[(1.0, 1.0)]).is_nan());
}

fn arcs() -> impl Strategy<Value = Vec<(f64, f64)>> {
    prop::collection::vec((-10.0f64..10.0, 0.0f64..3.0), 0..6).prop_map(|v| v.into_iter().map(|(a, l)| (a, a + l)).collect())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn arcs_normalize_to_disjoint_pieces(raw in arcs(), phi in -7.0f64..7.0) {
        let e = MeasureProblem::new(2.0, &raw).unwrap();
        prop_assert!(e.measure() <= 2.0 * PI + 1e-12);
        for w in e.arcs.windows(2) {
            prop_assert!(w[0].0 + w[0].1 < w[1].0 + 1e-12);
        }
        for &(a, b) in &raw {
            prop_assert!(e.dist_to_set(0.5 * (a + b)) < 1e-9);
        }
        if !e.is_full() {
            prop_assert!((e.measure() + e.complement().measure() - 2.0 * PI).abs() < 1e-9);
        }
        prop_assert!((e.rotated(phi).measure() - e.measure()).abs() < 1e-9);
    }

    #[test]
    fn coarsening_contains_the_set(raw in arcs(), width in 0.01f64..0.5) {
        let e = MeasureProblem::new(2.0, &raw).unwrap();
        let c = e.coarsen(width);
        prop_assert!(c.measure() >= e.measure() - 1e-12);
        for &(s, l) in &e.arcs {
            prop_assert!(c.dist_to_set(s + 0.5 * l) < 1e-9);
        }
        if !c.is_full() {
            prop_assert!(c.arcs.iter().all(|a| a.1 >= width - 1e-12));
            prop_assert!(c.min_gap() >= width - 1e-12 || c.arcs.is_empty());
        }
    }

    #[test]
    fn collar_traces_bracket_the_indicator(raw in arcs(), theta in -PI..PI, delta in 0.01f64..0.3) {
        let e = MeasureProblem::new(2.0, &raw).unwrap();
        let inside = e.dist_to_set(theta) == 0.0;
        let (lo, up) = (e.lower_trace(theta, delta), e.upper_trace(theta, delta));
        prop_assert!((0.0..=1.0).contains(&lo) && (0.0..=1.0).contains(&up));
        let ind = if inside { 1.0 } else { 0.0 };
        prop_assert!(lo <= ind && up >= ind);
    }
}
