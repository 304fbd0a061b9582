//! Executes a [`RunConfig`] and writes its artifacts.

use std::f64::consts::PI;
use std::path::Path;

use plap_core::gap_series::{build_ladder_divergent, build_ladder_null, fourier_sanity, GapPlan, Profiles};
use plap_core::homogeneous::{exponent_residual, homogeneous_mode};
use plap_core::pharmonic_measure::{
    measure_decay_for_gj, measure_refinement, orthogonal_growth, products_for, MeasureError, MeasureProblem,
};
use plap_core::plap_solver::checks::{harmonic_oracle_error, maximum_principle, residual_report};
use plap_core::plap_solver::{solve_disk, PolarGrid, DEFAULT_GRADING};
use plap_core::report::VerificationReport;
use plap_core::wolff_construction::{
    construct_v, verify_theorem_1_2, verify_theorem_a, StripResolution, TheoremAResolution,
};
use serde::Serialize;
use serde_json::{json, Value};
use thiserror::Error;

use crate::config::{Command, Format, LadderKind, RunConfig};
use crate::output::{read_trace_csv, to_csv, to_json, write_atomic};
use crate::suite::{run_suite, CriterionResult};

#[derive(Debug, Error)]
pub enum RunError {
    #[error("usage: {0}")]
    Usage(String),
    #[error("computation failed: {0}")]
    Compute(String),
    #[error("writing artifacts: {0}")]
    Io(#[from] std::io::Error),
}

impl RunError {
    pub fn exit_code(&self) -> i32 {
        match self {
            RunError::Usage(_) => 2,
            RunError::Compute(_) | RunError::Io(_) => 3,
        }
    }
}

fn compute<E: std::fmt::Display>(e: E) -> RunError {
    RunError::Compute(e.to_string())
}

fn measure_err(e: MeasureError) -> RunError {
    match e {
        MeasureError::InvalidP(_)
        | MeasureError::InvalidArc(..)
        | MeasureError::InvalidDelta(_)
        | MeasureError::ArcsTooClose { .. } => RunError::Usage(e.to_string()),
        e => compute(e),
    }
}

/// Tabular data of a run, written as CSV or as JSON columns.
pub struct Table {
    pub name: String,
    pub header: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

impl Table {
    fn new(name: impl Into<String>, header: &[&str], rows: Vec<Vec<f64>>) -> Self {
        Table {
            name: name.into(),
            header: header.iter().map(|s| s.to_string()).collect(),
            rows,
        }
    }
}

/// Everything a run produces before anything is written.
pub struct Outcome {
    pub report: VerificationReport,
    pub results: Value,
    pub tables: Vec<Table>,
    /// Set when a suite criterion could not be computed.
    pub errored: bool,
    /// Lines for the terminal (may contain timings).
    pub log: Vec<String>,
}

impl Outcome {
    fn new(report: VerificationReport, results: Value, tables: Vec<Table>) -> Self {
        Outcome {
            report,
            results,
            tables,
            errored: false,
            log: Vec::new(),
        }
    }

    pub fn exit_code(&self) -> i32 {
        if self.errored {
            3
        } else if self.report.passed() {
            0
        } else {
            1
        }
    }
}

#[derive(Serialize)]
struct ReportFile<'a> {
    command: &'a str,
    seed: u64,
    passed: bool,
    run_id: &'a str,
    checks: &'a [plap_core::report::Check],
    results: &'a Value,
}

/// Worker threads for independent sub-runs, from `PLAP_THREADS` (default 1).
pub fn threads() -> usize {
    std::env::var("PLAP_THREADS")
        .ok()
        .and_then(|s| s.parse::<usize>().ok())
        .filter(|&n| n > 0)
        .unwrap_or(1)
}

/// Runs the configured command without touching the output directory.
pub fn execute(cfg: &RunConfig) -> Result<Outcome, RunError> {
    cfg.validate().map_err(RunError::Usage)?;
    let s = &cfg.solver;
    match &cfg.command {
        Command::Mode { p, alpha, sign, n_theta } => {
            let m = homogeneous_mode(*p, *alpha, sign.branch(), *n_theta).map_err(compute)?;
            let mut rep = VerificationReport::new(format!("mode p={p}"));
            let res = exponent_residual(*p, *alpha, m.lambda, sign.branch());
            rep.at_most("exponent relation residual", res.abs(), 1e-10, "exponent relation");
            let rows = (0..m.theta.len()).map(|i| vec![m.theta[i], m.phi[i], m.psi[i]]).collect();
            Ok(Outcome::new(
                rep,
                json!({ "p": p, "alpha": alpha, "branch": m.branch, "lambda": m.lambda }),
                vec![Table::new("profile", &["theta", "phi", "psi"], rows)],
            ))
        }
        Command::Solve { p, trace, n_r, .. } => {
            let data = read_trace_csv(trace).map_err(RunError::Usage)?;
            let n = data.len();
            let theta0 = data[0].0;
            let h = 2.0 * PI / n as f64;
            if n < 8 || data.iter().enumerate().any(|(j, (t, _))| (t - theta0 - h * j as f64).abs() > 1e-9) {
                return Err(RunError::Usage("trace angles must be equispaced over one period (at least 8)".into()));
            }
            let grid = PolarGrid::graded(*n_r, n, DEFAULT_GRADING).with_theta0(theta0);
            let values: Vec<f64> = data.iter().map(|d| d.1).collect();
            let u = solve_disk(*p, &values, &grid, s).map_err(compute)?;
            let mut rep = maximum_principle(&u, 1e-9);
            rep.run_id = format!("disk solve p={p}");
            if *p >= 2.0 {
                rep.extend(residual_report(&u, s.eps_end, 1e-8));
            }
            let mut results = json!({ "p": p, "center": u.center(), "energy": u.energy, "newton_steps": u.newton_steps });
            if *p == 2.0 {
                let e = harmonic_oracle_error(&u);
                rep.at_most("harmonic oracle error", e, 1e-3, "harmonic extension at p = 2");
                results["harmonic_oracle_error"] = json!(e);
            }
            let rows = u.rows().into_iter().map(|r| r.to_vec()).collect();
            Ok(Outcome::new(rep, results, vec![Table::new("field", &["r", "theta", "value"], rows)]))
        }
        Command::Theorem12 { p, t } => {
            let (rep, runs) = verify_theorem_1_2(*p, t, &StripResolution::default(), s).map_err(compute)?;
            let rows = runs
                .iter()
                .map(|r| vec![r.t, r.s, r.i_s, r.i_1, r.ratio, r.xi, r.top_oscillation])
                .collect();
            Ok(Outcome::new(
                rep,
                json!({ "runs": runs }),
                vec![Table::new("strip", &["t", "s", "i_s", "i_1", "ratio", "xi", "top_oscillation"], rows)],
            ))
        }
        Command::TheoremA { p, n, t } => {
            let runs = n
                .iter()
                .map(|&n| construct_v(*p, n, *t, &TheoremAResolution::default(), s))
                .collect::<Result<Vec<_>, _>>()
                .map_err(compute)?;
            let reports: Vec<_> = runs.iter().map(|r| r.report.clone()).collect();
            let (rep, c1) = verify_theorem_a(&reports, 1e-12);
            let mut tables = Vec::new();
            for run in &runs {
                let ang = run.field.grid.full_angles();
                let rows = ang.iter().zip(run.field.trace()).map(|(t, v)| vec![*t, v]).collect();
                tables.push(Table::new(format!("trace_n{}", run.report.n), &["theta", "value"], rows));
            }
            Ok(Outcome::new(rep, json!({ "c1": c1, "runs": reports }), tables))
        }
        Command::GapSeries { p, levels, ladder, kind, ratio, total, grid_factor } => {
            let freqs = GapPlan::geometric_frequencies(*levels, *ratio);
            let profiles = Profiles::build(*p, &freqs, *kind, s).map_err(compute)?;
            let n_grid = grid_factor * *freqs.last().unwrap() as usize;
            let run = match ladder {
                LadderKind::Null => build_ladder_null(&GapPlan::null(freqs.clone()), &profiles, n_grid),
                LadderKind::Divergent => {
                    build_ladder_divergent(&GapPlan::divergent(freqs.clone(), &profiles.d(), *total), &profiles, n_grid)
                }
            }
            .map_err(compute)?;
            let mut rep = run.report.clone();
            rep.extend(fourier_sanity(&profiles));
            let mut header = vec!["theta".to_string()];
            header.extend((1..=*levels).map(|j| format!("sigma_{j}")));
            let rows = (0..run.trace.theta.len())
                .map(|i| {
                    let mut row = vec![run.trace.theta[i]];
                    row.extend(run.trace.sigma.iter().map(|s| s[i]));
                    row
                })
                .collect();
            let results = json!({
                "frequencies": freqs,
                "n_grid": n_grid,
                "d": profiles.d(),
                "sup_sigma": run.trace.sup_sigma(),
                "oscillation_fraction": run.trace.oscillation_fraction(levels.div_ceil(2), 0.1),
                "median_sigma": run.trace.median_sigma(*levels),
            });
            Ok(Outcome::new(rep, results, vec![Table { name: "sigma".into(), header, rows }]))
        }
        Command::Measure { p, arcs, delta } => {
            let prob = MeasureProblem::new(*p, arcs).map_err(measure_err)?;
            let bounds = measure_refinement(&prob, *delta, s).map_err(measure_err)?;
            let mut rep = VerificationReport::new(format!("measure p={p}"));
            for b in &bounds {
                rep.at_most(format!("lower - upper delta={}", b.delta), b.lower - b.upper, 0.0, "comparison principle");
            }
            rep.at_most("width shrinks", bounds[1].width(), bounds[0].width(), "bounds tighten as delta halves");
            let length = prob.measure() / (2.0 * PI);
            if *p == 2.0 {
                for b in &bounds {
                    rep.push(
                        format!("bracket delta={}", b.delta),
                        length,
                        f64::NAN,
                        b.lower <= length && length <= b.upper,
                        "harmonic measure at the center is normalized arclength",
                    );
                }
            }
            let rows = bounds.iter().map(|b| vec![b.delta, b.lower, b.upper]).collect();
            Ok(Outcome::new(
                rep,
                json!({ "normalized_length": length, "bounds": bounds }),
                vec![Table::new("bounds", &["delta", "lower", "upper"], rows)],
            ))
        }
        Command::TheoremC { p, levels, kappa, decay_levels } => {
            let prods = products_for(*p, *levels, *kappa, plap_core::gap_series::ProfileKind::Surrogate, s)
                .map_err(measure_err)?;
            let mut rep = prods.report.clone();
            let (growth_rep, growth) =
                orthogonal_growth(&prods.freqs, &prods.minima, prods.kappa, 1, 4096, cfg.seed).map_err(measure_err)?;
            rep.extend(growth_rep);
            let lengths: Vec<f64> = (1..=*levels)
                .map(|j| prods.state(j, 1).level_set(*p).measure() / (2.0 * PI))
                .collect();
            let mut results = json!({
                "kappa": prods.kappa,
                "frequencies": prods.freqs,
                "lambda": prods.choice,
                "normalization": prods.normalization,
                "level_set_lengths": lengths,
                "growth": growth,
            });
            let mut tables = vec![Table::new(
                "level_sets",
                &["level", "length"],
                lengths.iter().enumerate().map(|(j, l)| vec![(j + 1) as f64, *l]).collect(),
            )];
            if *decay_levels > 0 {
                let dp = if *decay_levels == *levels {
                    prods
                } else {
                    products_for(*p, *decay_levels, prods.kappa, plap_core::gap_series::ProfileKind::Surrogate, s)
                        .map_err(measure_err)?
                };
                let (drep, rows) = measure_decay_for_gj(&dp, *p, 1, 1..=*decay_levels, s).map_err(measure_err)?;
                rep.extend(drep);
                tables.push(Table::new(
                    "decay",
                    &["from", "length", "set_lower", "set_upper", "complement_lower", "complement_upper"],
                    rows.iter()
                        .map(|r| {
                            vec![r.from as f64, r.length, r.set.lower, r.set.upper, r.complement.lower, r.complement.upper]
                        })
                        .collect(),
                ));
                results["decay"] = json!(rows);
            }
            Ok(Outcome::new(rep, results, tables))
        }
        Command::Suite { level, only } => {
            let mut log = Vec::new();
            let results = run_suite_threads(*level, only, cfg.seed, s, &mut log);
            let mut rep = VerificationReport::new(format!("suite {}", if *level == crate::config::SuiteLevel::Smoke { "smoke" } else { "full" }));
            let mut summary = Vec::new();
            let mut errored = false;
            for r in &results {
                for c in &r.report.checks {
                    let mut c = c.clone();
                    c.name = format!("criterion {} {}", r.id, c.name);
                    rep.checks.push(c);
                }
                if let Some(e) = &r.error {
                    errored = true;
                    rep.push(format!("criterion {} computed", r.id), f64::NAN, f64::NAN, false, e.clone());
                }
                summary.push(json!({
                    "id": r.id,
                    "title": r.title,
                    "passed": r.error.is_none() && r.report.passed(),
                    "error": r.error,
                }));
            }
            let mut out = Outcome::new(rep, json!({ "criteria": summary }), Vec::new());
            out.errored = errored;
            out.log = log;
            Ok(out)
        }
    }
}

fn run_suite_threads(
    level: crate::config::SuiteLevel,
    only: &[u8],
    seed: u64,
    cfg: &plap_core::plap_solver::SolverConfig,
    log: &mut Vec<String>,
) -> Vec<CriterionResult> {
    let n = threads();
    if n <= 1 {
        return run_suite(level, only, seed, cfg, |r| {
            println!("{}", r.line());
            log.push(r.line());
        });
    }
    let ids: Vec<u8> = crate::suite::CRITERIA
        .iter()
        .map(|c| c.id)
        .filter(|id| only.is_empty() || only.contains(id))
        .collect();
    let next = std::sync::atomic::AtomicUsize::new(0);
    let done = std::sync::Mutex::new(Vec::new());
    std::thread::scope(|sc| {
        for _ in 0..n.min(ids.len()) {
            sc.spawn(|| loop {
                let i = next.fetch_add(1, std::sync::atomic::Ordering::SeqCst);
                let Some(&id) = ids.get(i) else { break };
                let r = crate::suite::run_criterion(id, level, seed, cfg);
                println!("{}", r.line());
                done.lock().unwrap().push(r);
            });
        }
    });
    let mut results = done.into_inner().unwrap();
    results.sort_by_key(|r| r.id);
    log.extend(results.iter().map(|r| r.line()));
    results
}

/// Writes `report.json`, `config.json` and the data tables into `dir`.
pub fn write_artifacts(cfg: &RunConfig, out: &Outcome, dir: &Path) -> Result<(), RunError> {
    std::fs::create_dir_all(dir)?;
    let report = ReportFile {
        command: cfg.command.name(),
        seed: cfg.seed,
        passed: out.report.passed(),
        run_id: &out.report.run_id,
        checks: &out.report.checks,
        results: &out.results,
    };
    write_atomic(dir, "config.json", cfg.to_json().as_bytes())?;
    match cfg.format {
        Format::Csv => {
            for t in &out.tables {
                let header: Vec<&str> = t.header.iter().map(|s| s.as_str()).collect();
                write_atomic(dir, &format!("{}.csv", t.name), &to_csv(&header, t.rows.iter().cloned()))?;
            }
        }
        Format::Json => {
            if !out.tables.is_empty() {
                let map: serde_json::Map<String, Value> = out
                    .tables
                    .iter()
                    .map(|t| (t.name.clone(), json!({ "columns": t.header, "rows": t.rows })))
                    .collect();
                write_atomic(dir, "data.json", to_json(&map).as_bytes())?;
            }
        }
    }
    // Last, so a complete report implies complete data.
    write_atomic(dir, "report.json", to_json(&report).as_bytes())?;
    Ok(())
}

/// Runs the configuration, writes artifacts and returns the exit status.
pub fn run(cfg: &RunConfig) -> i32 {
    let out = match execute(cfg) {
        Ok(o) => o,
        Err(e) => {
            eprintln!("error: {e}");
            return e.exit_code();
        }
    };
    if let Err(e) = write_artifacts(cfg, &out, &cfg.out_dir) {
        eprintln!("error: {e}");
        return e.exit_code();
    }
    for c in &out.report.checks {
        println!(
            "{} {} = {:e} (bound {:e})",
            if c.pass { "ok  " } else { "FAIL" },
            c.name,
            c.value,
            c.bound
        );
    }
    let code = out.exit_code();
    println!(
        "{}: {} -> {}",
        cfg.command.name(),
        if code == 0 { "all checks passed" } else if code == 1 { "check failures" } else { "errors" },
        cfg.out_dir.display()
    );
    code
}
