use std::f64::consts::PI;

use plap_core::gap_series::*;
use plap_core::plap_solver::SolverConfig;
use proptest::prelude::*;

fn cfg() -> SolverConfig {
    SolverConfig::default()
}

#[test]
fn plan_validation() {
    let freqs = GapPlan::geometric_frequencies(4, 2);
    assert_eq!(freqs, vec![1, 2, 4, 8]);
    assert!(GapPlan::null(freqs.clone()).validate().is_ok());
    let mut bad = GapPlan::null(vec![1, 3, 5]);
    assert!(bad.validate().is_err());
    bad.n = vec![2, 4, 8];
    assert!(bad.validate().is_err());
    let mut loud = GapPlan::null(freqs.clone());
    loud.a = vec![0.6; 4];
    assert!(loud.validate().is_err());
    loud.a = vec![0.1; 4];
    loud.r = 0.5;
    assert!(loud.validate().is_err());
    let mut tight = GapPlan::null(freqs);
    tight.gap_growth = true;
    assert!(tight.validate().is_err());
    assert!(gap_growth_ok(1, 2) && !gap_growth_ok(2, 4));
}

#[test]
fn block_pattern_sums_stay_in_unit_interval() {
    let mut s = 0.0;
    let mut zeros = 0;
    for j in 1..=200 {
        s += block_pattern(j);
        assert!((-1e-12..=1.0 + 1e-12).contains(&s), "j={j} s={s}");
        if s.abs() < 1e-12 {
            zeros += 1;
        }
    }
    assert!(zeros >= 10);
    let abs: f64 = (1..=200).map(|j| block_pattern(j).abs()).sum();
    assert!(abs > 10.0);
}

#[test]
fn profiles_have_zero_mean_after_centering() {
    for (p, kind) in [(2.0, ProfileKind::Surrogate), (3.0, ProfileKind::Surrogate), (3.0, ProfileKind::Full)] {
        let freqs = GapPlan::geometric_frequencies(3, 2);
        let prof = Profiles::build(p, &freqs, kind, &cfg()).unwrap();
        assert!(fourier_sanity(&prof).passed(), "p={p} {kind:?}");
        for j in 0..3 {
            let v = prof.grid_values(j, 4096 * freqs[j] as usize).unwrap();
            let mean = v.iter().sum::<f64>() / v.len() as f64;
            assert!((mean - prof.levels[j].d).abs() < 1e-5, "p={p} j={j}: {mean} vs {}", prof.levels[j].d);
            let sup = v.iter().fold(0.0f64, |s, x| s.max(x.abs()));
            assert!((sup - 1.0).abs() < 1e-2, "sup {sup}");
        }
    }
}

#[test]
fn single_term_maximal_function_is_the_profile_norm() {
    let prof = Profiles::build(3.0, &[1], ProfileKind::Surrogate, &cfg()).unwrap();
    let plan = GapPlan {
        n: vec![1],
        a: vec![1.0],
        r: 0.0,
        gap_growth: false,
    };
    let n = 1024;
    let d = prof.levels[0].d;
    let psi: Vec<f64> = prof.grid_values(0, n).unwrap().into_iter().map(|v| v - d).collect();
    let norm2 = psi.iter().map(|v| v * v).sum::<f64>() * 2.0 * PI / n as f64;
    let (rep, rows) = maximal_stats(&plan, &prof, n, &[1, 2]).unwrap();
    assert!(rep.passed(), "{rep:?}");
    let row = rows.iter().find(|r| r.n_grid == n).unwrap();
    assert!((row.ratio - norm2).abs() < 1e-12, "{} vs {norm2}", row.ratio);

    let zero = maximal_function(&[0.0, 0.0], &[psi.clone(), psi]);
    assert!(zero.iter().all(|&v| v == 0.0));
}

#[test]
fn null_ladder_stays_positive_and_shrinks() {
    let freqs = GapPlan::geometric_frequencies(10, 2);
    let prof = Profiles::build(2.0, &freqs, ProfileKind::Surrogate, &cfg()).unwrap();
    let run = build_ladder_null(&GapPlan::null(freqs.clone()), &prof, 16 * 512).unwrap();
    assert!(run.report.passed(), "{:?}", run.report);
    assert!(run.ladder.legality().passed());
    let half = Exact::new(1, 2);
    let one = Exact::from_integer(1);
    assert!(run.ladder.ratios.iter().flatten().all(|r| *r == half || *r == one));
    for w in run.ladder.l.windows(2) {
        assert!(w[1].iter().zip(&w[0]).all(|(b, a)| *b > 0.0 && b <= a));
    }
    let tr = &run.trace;
    assert!(tr.sigma[0].iter().all(|&v| v >= 0.75 - 1e-12));
    assert!(tr.sigma.iter().flatten().all(|&v| v > 0.0));
    let med: Vec<f64> = [2, 6, 10].iter().map(|&j| tr.median_sigma(j)).collect();
    assert!(med.windows(2).all(|w| w[1] < w[0]), "{med:?}");
}

#[test]
fn divergent_ladder_is_bounded() {
    let freqs = GapPlan::geometric_frequencies(8, 2);
    let prof = Profiles::build(2.0, &freqs, ProfileKind::Surrogate, &cfg()).unwrap();
    let plan = GapPlan::divergent(freqs, &prof.d(), 0.9);
    let s: f64 = plan.a.iter().map(|v| v * v).sum();
    assert!((s - 0.9).abs() < 1e-12);
    assert!(plan.validate().is_ok());
    let run = build_ladder_divergent(&plan, &prof, 16 * 128).unwrap();
    assert!(run.report.passed(), "{:?}", run.report);
    assert!(run.trace.sup_sigma().is_finite());
    let f = run.trace.oscillation_fraction(4, 0.1);
    assert!(f > 0.5, "oscillation fraction {f}");
}

#[test]
fn decay_exponents() {
    assert_eq!(decay_alpha(2.0), 0.0);
    assert!((decay_alpha(4.0) - 0.5).abs() < 1e-15);
    assert!((decay_alpha(1.5) - 0.25).abs() < 1e-15);
}

#[test]
fn scan_of_constant_field_is_flat() {
    use plap_core::plap_solver::{solve_disk, PolarGrid, DEFAULT_GRADING};
    let grid = PolarGrid::graded(16, 64, DEFAULT_GRADING);
    let sol = solve_disk(3.0, &vec![0.4; 64], &grid, &cfg()).unwrap();
    let scan = scan_rays(&sol, &[0.5, 0.9, 0.99], 1e-3);
    assert_eq!(scan.oscillation_fraction, 0.0);
    assert_eq!(scan.small_terminal_fraction, 0.0);
    assert!((scan.median_terminal - 0.4).abs() < 1e-12);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn maximal_function_dominates_partial_sums(rows in prop::collection::vec(prop::collection::vec(-1.0f64..1.0, 16), 1..6), scale in -2.0f64..2.0) {
        let amps: Vec<f64> = (0..rows.len()).map(|j| scale / (j + 1) as f64).collect();
        let s = maximal_function(&amps, &rows);
        for i in 0..16 {
            let mut acc = 0.0;
            for (a, r) in amps.iter().zip(&rows) {
                acc += a * r[i];
                prop_assert!(s[i] >= acc.abs() - 1e-15);
            }
            prop_assert!((s[i] - 0.0f64.max(s[i])).abs() == 0.0);
        }
        let neg: Vec<f64> = amps.iter().map(|a| -a).collect();
        prop_assert_eq!(maximal_function(&neg, &rows), s);
    }

    #[test]
    fn geometric_plans_validate(levels in 1usize..10, ratio in 2u64..5) {
        let plan = GapPlan::null(GapPlan::geometric_frequencies(levels, ratio));
        prop_assert!(plan.validate().is_ok());
    }
}
