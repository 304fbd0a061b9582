//! The twelve acceptance criteria at smoke and full resolution.

use std::f64::consts::PI;
use std::fmt::Display;
use std::time::Instant;

use plap_core::gap_series::{
    build_ladder_divergent, build_ladder_null, maximal_stats, GapPlan, ProfileKind, Profiles,
};
use plap_core::homogeneous::{hat_lambda, hat_lambda_derivative_sign, rescaled_deviation, solve_exponent, Branch};
use plap_core::pharmonic_measure::{
    estimate_measure, measure_decay_for_gj, measure_refinement, products_for, MeasureProblem,
};
use plap_core::plap_solver::checks::{
    check_comparison, harmonic_oracle_error, maximum_principle, mode_residual_refinement, residual_report,
};
use plap_core::plap_solver::{solve_disk, DiskSolution, PolarGrid, SolverConfig, DEFAULT_GRADING};
use plap_core::report::VerificationReport;
use plap_core::wolff_construction::{
    construct_v, verify_theorem_1_2, verify_theorem_a, StripResolution, TheoremAResolution,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::config::SuiteLevel;

pub struct Criterion {
    pub id: u8,
    pub title: &'static str,
    /// Wall-clock budget at full resolution.
    pub budget_secs: f64,
}

pub const CRITERIA: [Criterion; 12] = [
    Criterion { id: 1, title: "exponent oracle", budget_secs: 1.0 },
    Criterion { id: 2, title: "hat lambda monotonicity", budget_secs: 1.0 },
    Criterion { id: 3, title: "profile residual refinement", budget_secs: 120.0 },
    Criterion { id: 4, title: "rescaled profile convergence", budget_secs: 60.0 },
    Criterion { id: 5, title: "harmonic oracle", budget_secs: 120.0 },
    Criterion { id: 6, title: "strip scaling trend", budget_secs: 600.0 },
    Criterion { id: 7, title: "disk function V metrics", budget_secs: 1200.0 },
    Criterion { id: 8, title: "gap-series ladder laws", budget_secs: 300.0 },
    Criterion { id: 9, title: "maximal function bound", budget_secs: 60.0 },
    Criterion { id: 10, title: "arc measure oracle", budget_secs: 300.0 },
    Criterion { id: 11, title: "product covering and level-set decay", budget_secs: 1800.0 },
    Criterion { id: 12, title: "property suite", budget_secs: f64::INFINITY },
];

#[derive(Debug, Clone, Serialize)]
pub struct CriterionResult {
    pub id: u8,
    pub title: String,
    pub report: VerificationReport,
    pub error: Option<String>,
    #[serde(skip)]
    pub seconds: f64,
    #[serde(skip)]
    pub budget_secs: f64,
}

impl CriterionResult {
    pub fn passed(&self) -> bool {
        self.error.is_none() && self.report.passed() && self.within_budget()
    }

    pub fn within_budget(&self) -> bool {
        self.seconds <= self.budget_secs
    }

    /// One status line for terminals and test logs.
    pub fn line(&self) -> String {
        let status = if self.passed() { "PASS" } else { "FAIL" };
        let mut s = format!(
            "criterion {:>2} {status} {} ({:.1} s, {})",
            self.id,
            self.title,
            self.seconds,
            if self.budget_secs.is_finite() { format!("budget {:.0} s", self.budget_secs) } else { "no budget".into() }
        );
        if let Some(e) = &self.error {
            s.push_str(&format!("\n    error: {e}"));
        }
        for c in self.report.failures() {
            s.push_str(&format!("\n    failed: {} = {:e} (bound {:e}; {})", c.name, c.value, c.bound, c.anchor));
        }
        if !self.within_budget() {
            s.push_str("\n    failed: over time budget");
        }
        s
    }
}

fn err<E: Display>(e: E) -> String {
    e.to_string()
}

/// Runs one criterion; errors are recorded rather than propagated so that
/// the remaining criteria still run.
pub fn run_criterion(id: u8, level: SuiteLevel, seed: u64, cfg: &SolverConfig) -> CriterionResult {
    let c = CRITERIA.iter().find(|c| c.id == id).expect("criterion id in 1..=12");
    let start = Instant::now();
    let out = match id {
        1 => exponent_oracle(),
        2 => monotonicity(),
        3 => profile_residual(level),
        4 => rescaled_convergence(),
        5 => harmonic_oracle(seed, cfg),
        6 => strip_scaling(cfg),
        7 => disk_function(level, cfg),
        8 => ladder_laws(cfg),
        9 => maximal_bound(seed, cfg),
        10 => arc_oracle(cfg),
        11 => product_checks(level, cfg),
        _ => property_suite(level, seed, cfg),
    };
    let seconds = start.elapsed().as_secs_f64();
    let (report, error) = match out {
        Ok(r) => (r, None),
        Err(e) => (VerificationReport::new(c.title), Some(e)),
    };
    CriterionResult {
        id,
        title: c.title.into(),
        report,
        error,
        seconds,
        budget_secs: c.budget_secs,
    }
}

fn exponent_oracle() -> Result<VerificationReport, String> {
    let mut r = VerificationReport::new("exponent oracle");
    for (label, alpha) in [("pi/8", PI / 8.0), ("pi/4", PI / 4.0), ("pi/2", PI / 2.0)] {
        let l = solve_exponent(2.0, alpha, Branch::Positive).map_err(err)?;
        r.at_most(
            format!("lambda error alpha={label}"),
            (l - PI / (2.0 * alpha)).abs(),
            1e-10,
            "lambda = pi / (2 alpha) at p = 2",
        );
    }
    let h = hat_lambda(2.0);
    r.push("hat lambda at p = 2", h, 1.0, h == 1.0, "hat lambda(2) = 1");
    Ok(r)
}

fn monotonicity() -> Result<VerificationReport, String> {
    let ps: Vec<f64> = (1..=50).map(|i| 1.05 + 18.95 * i as f64 / 50.0).collect();
    let vals: Vec<f64> = ps.iter().map(|&p| hat_lambda(p)).collect();
    let rises = vals.windows(2).filter(|w| !(w[1] < w[0])).count();
    let signs = ps.iter().filter(|&&p| !(hat_lambda_derivative_sign(p) < 0.0)).count();
    let mut r = VerificationReport::new("hat lambda monotonicity");
    r.at_most("non-decreasing steps", rises as f64, 0.0, "hat lambda strictly decreasing in p");
    r.at_most("non-negative derivative signs", signs as f64, 0.0, "p/2 - 3/2 - sqrt(p^2 - 3p + 3) < 0");
    Ok(r)
}

fn profile_residual(level: SuiteLevel) -> Result<VerificationReport, String> {
    let (n_r, n_theta) = match level {
        SuiteLevel::Smoke => (32, 256),
        SuiteLevel::Full => (64, 512),
    };
    let mut r = VerificationReport::new("profile residual refinement");
    for p in [3.0, 1.5] {
        let (coarse, fine, ratio) = mode_residual_refinement(p, 8, n_r, n_theta).map_err(err)?;
        r.push(format!("coarse residual p={p}"), coarse, f64::NAN, coarse.is_finite(), "second-order consistency");
        r.push(format!("fine residual p={p}"), fine, f64::NAN, fine.is_finite(), "second-order consistency");
        r.push(
            format!("residual ratio p={p}"),
            ratio,
            4.0,
            (3.0..=5.0).contains(&ratio),
            "second-order consistency",
        );
    }
    Ok(r)
}

fn rescaled_convergence() -> Result<VerificationReport, String> {
    let ns = [4, 8, 16, 32, 64];
    let devs = ns
        .iter()
        .map(|&n| rescaled_deviation(3.0, n, 4096))
        .collect::<Result<Vec<_>, _>>()
        .map_err(err)?;
    let mut r = VerificationReport::new("rescaled profile convergence");
    for (n, d) in ns.iter().zip(&devs) {
        r.push(format!("sup |g_N - f| N={n}"), *d, f64::NAN, d.is_finite(), "g_N -> f uniformly");
    }
    let rises = devs.windows(2).filter(|w| !(w[1] < w[0])).count();
    r.at_most("non-decreasing steps", rises as f64, 0.0, "g_N -> f uniformly");
    r.at_most("sup |g_64 - f|", devs[4], devs[0] / 4.0, "g_N -> f uniformly");
    Ok(r)
}

/// `Σ_{k<=kmax} (a_k cos kθ + b_k sin kθ) / max(k, 1)` with `a, b ~ U(-1, 1)`.
pub fn random_trace(rng: &mut ChaCha8Rng, angles: &[f64], kmax: usize) -> Vec<f64> {
    let coef: Vec<(f64, f64)> = (0..=kmax)
        .map(|_| (rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)))
        .collect();
    angles
        .iter()
        .map(|&t| {
            coef.iter()
                .enumerate()
                .map(|(k, (a, b))| (a * (k as f64 * t).cos() + b * (k as f64 * t).sin()) / k.max(1) as f64)
                .sum()
        })
        .collect()
}

fn harmonic_oracle(seed: u64, cfg: &SolverConfig) -> Result<VerificationReport, String> {
    let grid = PolarGrid::graded(128, 256, DEFAULT_GRADING);
    let angles = grid.sector_angles();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut r = VerificationReport::new("harmonic oracle");
    for i in 0..5 {
        let trace = random_trace(&mut rng, &angles, 8);
        let u = solve_disk(2.0, &trace, &grid, cfg).map_err(err)?;
        r.at_most(format!("max error trace {i}"), harmonic_oracle_error(&u), 1e-3, "harmonic extension at p = 2");
    }
    Ok(r)
}

fn strip_scaling(cfg: &SolverConfig) -> Result<VerificationReport, String> {
    let (rep, _) = verify_theorem_1_2(3.0, &[0.05, 0.025], &StripResolution::default(), cfg).map_err(err)?;
    Ok(rep)
}

fn disk_function(level: SuiteLevel, cfg: &SolverConfig) -> Result<VerificationReport, String> {
    let ns: &[usize] = match level {
        SuiteLevel::Smoke => &[8, 16],
        SuiteLevel::Full => &[8, 16, 32],
    };
    let reports = ns
        .iter()
        .map(|&n| construct_v(3.0, n, 0.05, &TheoremAResolution::default(), cfg).map(|run| run.report))
        .collect::<Result<Vec<_>, _>>()
        .map_err(err)?;
    Ok(verify_theorem_a(&reports, 1e-12).0)
}

fn ladder_laws(cfg: &SolverConfig) -> Result<VerificationReport, String> {
    let p = 3.0;
    let mut r = VerificationReport::new("gap-series ladder laws");
    let mut sups = Vec::new();
    for levels in [8, 10] {
        let freqs = GapPlan::geometric_frequencies(levels, 2);
        let profiles = Profiles::build(p, &freqs, ProfileKind::Surrogate, cfg).map_err(err)?;
        let n_grid = 16 * *freqs.last().unwrap() as usize;
        let run = build_ladder_null(&GapPlan::null(freqs), &profiles, n_grid).map_err(err)?;
        sups.push(run.trace.sup_sigma());
        if levels == 10 {
            for mut c in run.report.checks {
                c.name = format!("null J=10 {}", c.name);
                r.checks.push(c);
            }
        }
    }
    let spread = sups[0].max(sups[1]) / sups[0].min(sups[1]);
    r.at_most("sup sigma spread J=8 vs J=10", spread, 2.0, "partial sums stay bounded");

    let freqs = GapPlan::geometric_frequencies(8, 2);
    let profiles = Profiles::build(2.0, &freqs, ProfileKind::Surrogate, cfg).map_err(err)?;
    let plan = GapPlan::divergent(freqs.clone(), &profiles.d(), 0.9);
    let run = build_ladder_divergent(&plan, &profiles, 16 * *freqs.last().unwrap() as usize).map_err(err)?;
    let frac = run.trace.oscillation_fraction(4, 0.1);
    for mut c in run.report.checks {
        c.name = format!("divergent J=8 {}", c.name);
        r.checks.push(c);
    }
    r.at_least("oscillation fraction J=8", frac, 0.9, "partial sums diverge almost everywhere");
    Ok(r)
}

fn maximal_bound(seed: u64, cfg: &SolverConfig) -> Result<VerificationReport, String> {
    let levels = 6;
    let freqs = GapPlan::geometric_frequencies(levels, 2);
    let profiles = Profiles::build(3.0, &freqs, ProfileKind::Surrogate, cfg).map_err(err)?;
    let plan = GapPlan {
        n: freqs.clone(),
        a: vec![(0.9 / levels as f64).sqrt(); levels],
        r: 0.0,
        gap_growth: false,
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let seeds: Vec<u64> = (0..3).map(|_| rng.random()).collect();
    let (rep, _) = maximal_stats(&plan, &profiles, 16 * *freqs.last().unwrap() as usize, &seeds).map_err(err)?;
    Ok(rep)
}

fn arc_oracle(cfg: &SolverConfig) -> Result<VerificationReport, String> {
    let mut r = VerificationReport::new("arc measure oracle");
    for s in [0.25, 0.5] {
        let prob = MeasureProblem::new(2.0, &[(0.0, 2.0 * PI * s)]).map_err(err)?;
        let [coarse, fine] = measure_refinement(&prob, 0.04, cfg).map_err(err)?;
        for b in [&coarse, &fine] {
            r.push(
                format!("bracket s={s} delta={}", b.delta),
                s,
                f64::NAN,
                b.lower <= s && s <= b.upper,
                "harmonic measure at the center is normalized arclength",
            );
        }
        r.at_most(format!("width s={s} delta={}", fine.delta), fine.width(), 0.02, "bounds tighten as delta halves");
        r.at_most(format!("width shrinks s={s}"), fine.width(), coarse.width(), "bounds tighten as delta halves");
    }
    Ok(r)
}

fn prefixed(rep: VerificationReport, prefix: &str) -> impl Iterator<Item = plap_core::report::Check> + '_ {
    rep.checks.into_iter().map(move |mut c| {
        c.name = format!("{prefix} {}", c.name);
        c
    })
}

fn product_checks(level: SuiteLevel, cfg: &SolverConfig) -> Result<VerificationReport, String> {
    let mut r = VerificationReport::new("product covering and level-set decay");
    // Decay runs re-use the products but stop at a level whose grid stays
    // within a single-core budget.
    let decay: [(f64, usize); 2] = match level {
        SuiteLevel::Smoke => [(2.0, 3), (3.0, 2)],
        SuiteLevel::Full => [(2.0, 4), (3.0, 4)],
    };
    for (p, decay_levels) in decay {
        let prods = products_for(p, 4, 8, ProfileKind::Surrogate, cfg).map_err(err)?;
        r.checks.extend(prefixed(prods.report.clone(), &format!("p={p}")));
        let prods = if decay_levels == 4 {
            prods
        } else {
            products_for(p, decay_levels, prods.kappa, ProfileKind::Surrogate, cfg).map_err(err)?
        };
        let (rep, _) = measure_decay_for_gj(&prods, p, 1, 1..=decay_levels, cfg).map_err(err)?;
        r.checks.extend(prefixed(rep, &format!("p={p} J={decay_levels}")));
    }
    Ok(r)
}

/// Boundary values rotated by `m` grid cells.
fn rotate(v: &[f64], m: usize) -> Vec<f64> {
    let n = v.len();
    (0..n).map(|j| v[(j + n - m) % n]).collect()
}

/// `max |u_rot(i, j + m) - u(i, j)|` over all rings.
fn rotation_defect(u: &DiskSolution, u_rot: &DiskSolution, m: usize) -> f64 {
    let mut d = (u.center() - u_rot.center()).abs();
    for i in 1..=u.grid.n_r() {
        let a = u.full_ring(i);
        let b = u_rot.full_ring(i);
        let n = a.len();
        for j in 0..n {
            d = d.max((b[(j + m) % n] - a[j]).abs());
        }
    }
    d
}

fn property_suite(level: SuiteLevel, seed: u64, cfg: &SolverConfig) -> Result<VerificationReport, String> {
    let traces = match level {
        SuiteLevel::Smoke => 1,
        SuiteLevel::Full => 3,
    };
    let grid = PolarGrid::graded(32, 128, DEFAULT_GRADING);
    let angles = grid.sector_angles();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut r = VerificationReport::new("property suite");
    for p in [1.5, 2.0, 3.0] {
        for t in 0..traces {
            let label = format!("p={p} trace={t}");
            let tag = |s: &str| format!("{label} {s}");
            let g = random_trace(&mut rng, &angles, 6);
            let u = solve_disk(p, &g, &grid, cfg).map_err(err)?;
            r.checks.extend(prefixed(maximum_principle(&u, 1e-9), &label));

            let raised: Vec<f64> = g
                .iter()
                .zip(&angles)
                .map(|(v, th)| v + 0.05 + 0.05 * (2.0 * th).sin().powi(2))
                .collect();
            let v = solve_disk(p, &raised, &grid, cfg).map_err(err)?;
            r.checks.extend(prefixed(check_comparison(&u, &v, 1e-9), &label));

            let m = rng.random_range(1..grid.n_theta);
            let u_rot = solve_disk(p, &rotate(&g, m), &grid, cfg).map_err(err)?;
            r.at_most(tag("rotation defect"), rotation_defect(&u, &u_rot, m), 1e-10, "rotation equivariance");

            let again = solve_disk(p, &g, &grid, cfg).map_err(err)?;
            let same = again.values.iter().zip(&u.values).all(|(a, b)| a.to_bits() == b.to_bits());
            r.push(tag("bitwise repeat"), if same { 0.0 } else { 1.0 }, 0.0, same, "determinism");

            if p != 1.5 {
                r.checks.extend(prefixed(residual_report(&u, cfg.eps_end, 1e-8), &label));
            }
        }
    }

    let delta = 0.08;
    let n_theta = plap_core::pharmonic_measure::measure_grid(delta).n_theta;
    for p in [1.5, 3.0] {
        let tag = |s: &str| format!("p={p} {s}");
        let start = rng.random_range(0.0..2.0 * PI);
        let small = MeasureProblem::new(p, &[(start, start + 1.5)]).map_err(err)?;
        let large = MeasureProblem::new(p, &[(start - 0.4, start + 2.2)]).map_err(err)?;
        let bs = estimate_measure(&small, delta, cfg).map_err(err)?;
        let bl = estimate_measure(&large, delta, cfg).map_err(err)?;
        r.at_most(tag("nested upper"), bs.upper - bl.upper, 1e-9, "monotonicity of measure");
        r.at_most(tag("nested lower"), bs.lower - bl.lower, 1e-9, "monotonicity of measure");

        let m = rng.random_range(1..n_theta);
        let turned = small.rotated(2.0 * PI * m as f64 / n_theta as f64);
        let bt = estimate_measure(&turned, delta, cfg).map_err(err)?;
        let d = (bt.upper - bs.upper).abs().max((bt.lower - bs.lower).abs());
        r.at_most(tag("rotated arc"), d, 1e-8, "rotation invariance of measure");
    }
    Ok(r)
}

/// Runs the selected criteria (all when `only` is empty) in order.
pub fn run_suite(level: SuiteLevel, only: &[u8], seed: u64, cfg: &SolverConfig, mut on_done: impl FnMut(&CriterionResult)) -> Vec<CriterionResult> {
    CRITERIA
        .iter()
        .filter(|c| only.is_empty() || only.contains(&c.id))
        .map(|c| {
            let res = run_criterion(c.id, level, seed, cfg);
            on_done(&res);
            res
        })
        .collect()
}
