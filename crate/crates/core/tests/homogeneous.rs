use std::f64::consts::{FRAC_PI_2, FRAC_PI_4, PI};

use approx::assert_relative_eq;
use plap_core::homogeneous::*;
use proptest::prelude::*;

/// Root of `3λ² + (4c + 2)λ - 1 = 0` with `λ < 0`, `c = (2-p)/(p-1)`: the
/// negative branch at `α = π/2` after squaring `(λ-1) = -2 S(λ)`.
fn hat_lambda_quadratic(p: f64) -> f64 {
    let c = (2.0 - p) / (p - 1.0);
    let b = 4.0 * c + 2.0;
    let disc = (b * b + 12.0).sqrt();
    (b + disc) / 6.0
}

/// Independent bisection on the exponent relation.
fn bisect(p: f64, alpha: f64) -> f64 {
    let c = (2.0 - p) / (p - 1.0);
    let f = |l: f64| 1.0 - (l - 1.0) / (l * (l + c)).sqrt() - 2.0 * alpha / PI;
    let (mut lo, mut hi) = ((-c).max(0.0) + 1e-300, 1.0);
    while f(hi) > 0.0 {
        hi *= 2.0;
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if f(mid) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

#[test]
fn exponent_closed_forms() {
    assert_relative_eq!(solve_exponent(2.0, FRAC_PI_4, Branch::Positive).unwrap(), 2.0, epsilon = 1e-12);
    for p in [1.3, 2.0, 3.0, 7.5] {
        assert_relative_eq!(solve_exponent(p, FRAC_PI_2, Branch::Positive).unwrap(), 1.0, epsilon = 1e-12);
    }
    let neg = solve_exponent(3.0, FRAC_PI_2, Branch::Negative).unwrap();
    assert_relative_eq!(neg, -3f64.sqrt() / 3.0, epsilon = 1e-12);
    assert!(exponent_residual(3.0, FRAC_PI_2, neg, Branch::Negative).abs() < 1e-12);
}

#[test]
fn hat_lambda_values() {
    assert_eq!(hat_lambda(2.0), 1.0);
    assert_relative_eq!(hat_lambda(3.0), 3f64.sqrt() / 3.0, epsilon = 1e-15);
    let seq: Vec<f64> = [2.5, 3.0, 4.0, 8.0].iter().map(|&p| hat_lambda(p)).collect();
    assert!(seq.windows(2).all(|w| w[1] < w[0]), "{seq:?}");
    for p in [1.2, 1.5, 2.5, 3.0, 6.0, 15.0] {
        assert_relative_eq!(hat_lambda(p), hat_lambda_quadratic(p), epsilon = 1e-12);
        assert_relative_eq!(
            -solve_exponent(p, FRAC_PI_2, Branch::Negative).unwrap(),
            hat_lambda(p),
            epsilon = 1e-10
        );
    }
}

#[test]
fn p2_profile_is_cosine_and_shape_holds() {
    let m = homogeneous_mode(2.0, FRAC_PI_4, Branch::Positive, 256).unwrap();
    assert_relative_eq!(m.lambda, 2.0, epsilon = 1e-12);
    for (t, v) in m.theta.iter().zip(&m.phi) {
        assert!((v - (2.0 * t).cos()).abs() < 1e-8, "theta {t}");
    }
    for (p, alpha) in [(1.5, 0.4), (3.0, PI / 16.0), (5.0, 2.0)] {
        let prof = SectorProfile::new(p, alpha, Branch::Positive).unwrap();
        assert_relative_eq!(prof.eval(0.0).0, 1.0, epsilon = 1e-12);
        assert!(prof.eval(alpha).0.abs() < 1e-8);
        for k in 1..=50 {
            let d = prof.eval(alpha * k as f64 / 50.0).1;
            assert!(d < 0.0, "p={p} derivative {d} at step {k}");
        }
    }
}

#[test]
fn wolff_mode_shape() {
    assert_eq!(wolff_gamma(2.0), 1.0);
    let w = WolffMode::new(2.0).unwrap();
    for k in 0..40 {
        let x = -PI + 2.0 * PI * k as f64 / 40.0;
        assert!((w.f(x) - x.cos()).abs() < 1e-8);
    }
    for p in [1.5, 3.0, 4.0] {
        let w = WolffMode::new(p).unwrap();
        for k in 0..40 {
            let x = 1.5 * k as f64 / 40.0;
            assert!((w.f(FRAC_PI_2 - x) + w.f(FRAC_PI_2 + x)).abs() < 1e-8, "p={p} x={x}");
        }
    }
}

#[test]
fn rescaled_profiles() {
    let g = RescaledProfile::new(2.0, 1).unwrap();
    for k in 0..32 {
        let x = -PI + 2.0 * PI * k as f64 / 32.0;
        assert!((g.g(x) - x.cos()).abs() < 1e-10);
    }
    for (p, n) in [(1.5, 4), (3.0, 8), (4.0, 32)] {
        let g = RescaledProfile::new(p, n).unwrap();
        assert_relative_eq!(g.g(0.0), 1.0, epsilon = 1e-12);
        assert!(g.g(FRAC_PI_2).abs() < 1e-8 && g.g(-FRAC_PI_2).abs() < 1e-8);
    }
    let devs: Vec<f64> = [4, 8, 16, 32].iter().map(|&n| rescaled_deviation(3.0, n, 2048).unwrap()).collect();
    assert!(devs.windows(2).all(|w| w[1] < w[0]), "{devs:?}");
}

#[test]
fn gamma_times_n() {
    for r in gamma_times_n_rows(2.0, &[1, 4, 16]).unwrap() {
        assert_relative_eq!(r.difference, 0.0, epsilon = 1e-10);
    }
    for p in [1.5, 3.0] {
        let rep = gamma_times_n_check(p, &[8, 16, 32, 64]).unwrap();
        assert!(rep.passed(), "{rep:?}");
        let last = gamma_times_n_rows(p, &[4096]).unwrap()[0].difference;
        assert!((last - gamma_n_offset(p)).abs() < 1e-2, "p={p}: {last} vs {}", gamma_n_offset(p));
    }
}

#[test]
fn invalid_inputs_are_rejected() {
    assert!(solve_exponent(1.0, 1.0, Branch::Positive).is_err());
    assert!(solve_exponent(f64::NAN, 1.0, Branch::Positive).is_err());
    assert!(solve_exponent(2.0, 0.0, Branch::Positive).is_err());
    assert!(solve_exponent(2.0, 4.0, Branch::Positive).is_err());
    assert!(RescaledProfile::new(2.0, 0).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn exponent_matches_independent_bisection(p in 1.1f64..10.0, alpha in 0.05f64..3.1) {
        let l = solve_exponent(p, alpha, Branch::Positive).unwrap();
        prop_assert!(exponent_residual(p, alpha, l, Branch::Positive).abs() < 1e-10);
        let b = bisect(p, alpha);
        prop_assert!((l - b).abs() <= 1e-8 * b.max(1.0), "{} vs {}", l, b);
    }

    #[test]
    fn exponent_decreases_with_angle(p in 1.1f64..10.0, a in 0.05f64..3.0, da in 0.01f64..0.1) {
        let l1 = solve_exponent(p, a, Branch::Positive).unwrap();
        let l2 = solve_exponent(p, a + da, Branch::Positive).unwrap();
        prop_assert!(l2 < l1);
    }

    #[test]
    fn hat_lambda_is_decreasing(p in 1.05f64..20.0, dp in 0.001f64..1.0) {
        prop_assert!(hat_lambda(p + dp) < hat_lambda(p));
        prop_assert!(hat_lambda_derivative_sign(p) < 0.0);
    }

    #[test]
    fn profile_stays_in_unit_interval(p in 1.2f64..8.0, alpha in 0.1f64..3.0, s in 0.0f64..1.0) {
        let prof = SectorProfile::new(p, alpha, Branch::Positive).unwrap();
        let v = prof.eval(s * alpha).0;
        prop_assert!((-1e-10..=1.0 + 1e-12).contains(&v));
        // Even in theta.
        prop_assert!((prof.eval(-s * alpha).0 - v).abs() < 1e-10);
    }
}
