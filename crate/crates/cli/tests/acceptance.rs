//! Runs all twelve acceptance criteria at full resolution and prints one
//! status line per criterion (outside the test harness capture).

use std::io::Write;

use plap_cli::config::{SuiteLevel, DEFAULT_SEED};
use plap_cli::suite::{run_criterion, CRITERIA};
use plap_core::plap_solver::SolverConfig;

#[test]
fn acceptance_criteria() {
    let cfg = SolverConfig::default();
    let mut failed = Vec::new();
    for c in &CRITERIA {
        let r = run_criterion(c.id, SuiteLevel::Full, DEFAULT_SEED, &cfg);
        let _ = writeln!(std::io::stderr(), "{}", r.line());
        if !r.passed() {
            failed.push(c.id);
        }
    }
    assert!(failed.is_empty(), "failed criteria: {failed:?}");
}
