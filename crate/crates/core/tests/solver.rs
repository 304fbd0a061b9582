use std::f64::consts::PI;

use plap_core::homogeneous::{Branch, SectorProfile};
use plap_core::plap_solver::checks::*;
use plap_core::plap_solver::linearized::{disk_coefficients, solve_linearized_disk};
use plap_core::plap_solver::*;
use proptest::prelude::*;

fn cfg() -> SolverConfig {
    SolverConfig::default()
}

fn sample_trace(grid: &PolarGrid, f: impl Fn(f64) -> f64) -> Vec<f64> {
    grid.sector_angles().into_iter().map(f).collect()
}

#[test]
fn harmonic_extension_of_cos3() {
    let grid = PolarGrid::graded(128, 256, DEFAULT_GRADING);
    let u = solve_disk(2.0, &sample_trace(&grid, |t| (3.0 * t).cos()), &grid, &cfg()).unwrap();
    let mut err: f64 = u.center().abs();
    for i in 1..=grid.n_r() {
        let r = grid.radius(i);
        for (j, t) in grid.full_angles().iter().enumerate() {
            err = err.max((u.value(i, j) - r.powi(3) * (3.0 * t).cos()).abs());
        }
    }
    assert!(err < 1e-3, "max error {err}");
    assert!(harmonic_oracle_error(&u) < 1e-3);
}

#[test]
fn constant_trace_gives_constant_field() {
    let grid = PolarGrid::graded(16, 64, DEFAULT_GRADING);
    for p in [1.5, 2.0, 3.0] {
        let u = solve_disk(p, &vec![0.7; 64], &grid, &cfg()).unwrap();
        assert!(u.values.iter().all(|v| (v - 0.7).abs() < 1e-14), "p={p}");
    }
}

#[test]
fn p3_homogeneous_mode_is_reproduced() {
    let n = 8;
    let prof = SectorProfile::new(3.0, PI / (2.0 * n as f64), Branch::Positive).unwrap();
    let grid = PolarGrid::graded(64, 512, DEFAULT_GRADING).with_sectors(n);
    let trace = sample_trace(&grid, |t| prof.eval_extended(t).0);
    let u = solve_disk(3.0, &trace, &grid, &cfg()).unwrap();
    let ang = grid.sector_angles();
    let mut worst: f64 = 0.0;
    for i in 1..=grid.n_r() {
        let r = grid.radius(i);
        if r < 0.5 {
            continue;
        }
        let scale = r.powf(prof.lambda);
        for (j, &t) in ang.iter().enumerate() {
            worst = worst.max((u.value(i, j) - scale * prof.eval_extended(t).0).abs() / scale);
        }
    }
    assert!(worst < 0.01, "relative error {worst}");
    let k = radial_decay_fit(&u).unwrap();
    assert!((k - prof.lambda).abs() < 0.02 * prof.lambda, "fit {k} vs {}", prof.lambda);
}

#[test]
fn energy_quadrature() {
    let grid = PolarGrid::graded(64, 256, DEFAULT_GRADING);
    assert!(discrete_energy(&vec![2.5; grid.n_nodes()], &grid, 3.0) < 1e-30);
    let lin = grid.sample(|x, _| x);
    assert!((discrete_energy(&lin, &grid, 2.0) - PI).abs() < 1e-3);
}

#[test]
fn weak_residual_is_second_order_and_detects_perturbations() {
    let exact = |x: f64, y: f64| x.powi(3) - 3.0 * x * y * y;
    let res = |n_r: usize, n_t: usize| {
        let g = PolarGrid::graded(n_r, n_t, DEFAULT_GRADING);
        weak_residual(&g.sample(exact), &g, 2.0, 0.0, (0.3, 0.9))
    };
    let ratio = res(32, 256) / res(64, 512);
    assert!((3.0..=5.0).contains(&ratio), "ratio {ratio}");

    let grid = PolarGrid::graded(32, 128, DEFAULT_GRADING);
    let u = solve_disk(3.0, &sample_trace(&grid, |t| t.sin() + 0.3 * (2.0 * t).cos()), &grid, &cfg()).unwrap();
    let base = weak_residual(&u.values, &grid, 3.0, 0.0, (0.0, 1.0));
    assert!(residual_report(&u, cfg().eps_end, 1e-8).passed(), "residual {base}");
    let mut bumped = u.values.clone();
    for i in 1..grid.n_r() {
        let r = grid.radius(i);
        for j in 0..grid.n_theta {
            let b = (-((r - 0.5).powi(2)) / 0.01).exp();
            bumped[grid.node(i, j)] += 0.1 * b;
        }
    }
    let after = weak_residual(&bumped, &grid, 3.0, 0.0, (0.0, 1.0));
    assert!(after >= 10.0 * base.max(1e-14), "{after} vs {base}");
}

#[test]
fn comparison_and_translation() {
    let grid = PolarGrid::graded(32, 128, DEFAULT_GRADING);
    let g = sample_trace(&grid, |t| (3.0 * t).cos());
    for p in [1.5, 2.0, 3.0] {
        let u = solve_disk(p, &g, &grid, &cfg()).unwrap();
        let g1: Vec<f64> = g.iter().map(|v| v + 1.0).collect();
        let v = solve_disk(p, &g1, &grid, &cfg()).unwrap();
        let gap = u.values.iter().zip(&v.values).map(|(a, b)| b - a).fold((f64::INFINITY, f64::NEG_INFINITY), |m, d| (m.0.min(d), m.1.max(d)));
        assert!((gap.0 - 1.0).abs() < 1e-8 && (gap.1 - 1.0).abs() < 1e-8, "p={p} {gap:?}");
        assert!(check_comparison(&u, &v, 1e-9).passed());
        let mp = maximum_principle(&u, 1e-9);
        assert!(mp.passed(), "p={p} {mp:?}");
    }
    let n = 8;
    let prof = SectorProfile::new(3.0, PI / (2.0 * n as f64), Branch::Positive).unwrap();
    let grid = PolarGrid::graded(32, 256, DEFAULT_GRADING).with_sectors(n);
    let phi = sample_trace(&grid, |t| prof.eval_extended(t).0.max(0.0));
    let twice: Vec<f64> = phi.iter().map(|v| 2.0 * v).collect();
    let a = solve_disk(3.0, &phi, &grid, &cfg()).unwrap();
    let b = solve_disk(3.0, &twice, &grid, &cfg()).unwrap();
    assert!(check_comparison(&a, &b, 1e-9).passed());
}

#[test]
fn radial_decay_of_exact_powers() {
    for n in [2, 4, 6] {
        let grid = PolarGrid::graded(64, 256, DEFAULT_GRADING);
        let values = grid.sample(|x, y| x.hypot(y).powi(n) * (n as f64 * y.atan2(x)).cos());
        let u = DiskSolution {
            grid,
            p: 2.0,
            values,
            energy: 0.0,
            newton_steps: 0,
        };
        let k = radial_decay_fit(&u).unwrap();
        assert!((k - n as f64).abs() < 1e-2, "N={n}: {k}");
    }
    let grid = PolarGrid::graded(16, 64, DEFAULT_GRADING);
    let flat = DiskSolution {
        values: vec![1.0; grid.n_nodes()],
        grid,
        p: 2.0,
        energy: 0.0,
        newton_steps: 0,
    };
    assert_eq!(radial_decay_fit(&flat), Err(SolverError::DegenerateFit));
}

#[test]
fn linearized_solver_reduces_to_laplace_at_p2() {
    let prof = SectorProfile::new(2.0, PI / 16.0, Branch::Positive).unwrap();
    let grid = PolarGrid::graded(64, 256, DEFAULT_GRADING);
    let coeff = disk_coefficients(&prof, &grid).unwrap();
    let trace = sample_trace(&grid, |t| (3.0 * t).cos());
    let (u, _) = solve_linearized_disk(&coeff, &trace, &grid).unwrap();
    assert!(harmonic_oracle_error(&u) < 1e-3);
    let (c, _) = solve_linearized_disk(&coeff, &vec![-0.25; 256], &grid).unwrap();
    assert!(c.values.iter().all(|v| (v + 0.25).abs() < 1e-12));
}

#[test]
fn bad_inputs_are_errors() {
    let grid = PolarGrid::graded(16, 64, DEFAULT_GRADING);
    assert!(matches!(solve_disk(1.0, &vec![0.0; 64], &grid, &cfg()), Err(SolverError::InvalidP(_))));
    assert!(matches!(solve_disk(2.0, &vec![0.0; 63], &grid, &cfg()), Err(SolverError::TraceLength { .. })));
    let mut t = vec![0.0; 64];
    t[3] = f64::NAN;
    assert!(matches!(solve_disk(2.0, &t, &grid, &cfg()), Err(SolverError::NonFiniteData)));
}

fn trace_strategy() -> impl Strategy<Value = Vec<(f64, f64)>> {
    prop::collection::vec((-1.0f64..1.0, -1.0f64..1.0), 1..5)
}

fn fourier(coef: &[(f64, f64)], t: f64) -> f64 {
    coef.iter()
        .enumerate()
        .map(|(k, (a, b))| (a * (k as f64 * t).cos() + b * (k as f64 * t).sin()) / (k.max(1) as f64))
        .sum()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn maximum_principle_and_translation(coef in trace_strategy(), p in prop::sample::select(vec![1.5, 2.0, 3.0]), c in -2.0f64..2.0) {
        let grid = PolarGrid::graded(16, 64, DEFAULT_GRADING);
        let g = sample_trace(&grid, |t| fourier(&coef, t));
        let u = solve_disk(p, &g, &grid, &cfg()).unwrap();
        prop_assert!(maximum_principle(&u, 1e-9).passed());
        let shifted: Vec<f64> = g.iter().map(|v| v + c).collect();
        let v = solve_disk(p, &shifted, &grid, &cfg()).unwrap();
        for (a, b) in u.values.iter().zip(&v.values) {
            prop_assert!((b - a - c).abs() < 1e-7);
        }
    }

    #[test]
    fn rotation_by_grid_cells_commutes(coef in trace_strategy(), m in 1usize..64) {
        let grid = PolarGrid::graded(16, 64, DEFAULT_GRADING);
        let g = sample_trace(&grid, |t| fourier(&coef, t));
        let rot: Vec<f64> = (0..64).map(|j| g[(j + 64 - m) % 64]).collect();
        let u = solve_disk(3.0, &g, &grid, &cfg()).unwrap();
        let v = solve_disk(3.0, &rot, &grid, &cfg()).unwrap();
        for i in 1..=grid.n_r() {
            for j in 0..64 {
                prop_assert!((v.value(i, (j + m) % 64) - u.value(i, j)).abs() < 1e-8);
            }
        }
    }

    #[test]
    fn repeated_solves_are_bitwise_identical(coef in trace_strategy()) {
        let grid = PolarGrid::graded(16, 64, DEFAULT_GRADING);
        let g = sample_trace(&grid, |t| fourier(&coef, t));
        let a = solve_disk(1.5, &g, &grid, &cfg()).unwrap();
        let b = solve_disk(1.5, &g, &grid, &cfg()).unwrap();
        prop_assert!(a.values.iter().zip(&b.values).all(|(x, y)| x.to_bits() == y.to_bits()));
    }
}
