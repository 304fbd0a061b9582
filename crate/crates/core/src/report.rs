//! Named pass/fail checks with measured values.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub value: f64,
    /// Bound or oracle value the measurement is compared with.
    pub bound: f64,
    pub pass: bool,
    /// Short description of the statement being checked.
    pub anchor: String,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct VerificationReport {
    pub run_id: String,
    pub checks: Vec<Check>,
}

impl VerificationReport {
    pub fn new(run_id: impl Into<String>) -> Self {
        VerificationReport {
            run_id: run_id.into(),
            checks: Vec::new(),
        }
    }

    pub fn push(&mut self, name: impl Into<String>, value: f64, bound: f64, pass: bool, anchor: impl Into<String>) {
        self.checks.push(Check {
            name: name.into(),
            value,
            bound,
            pass,
            anchor: anchor.into(),
        });
    }

    /// `value <= bound`.
    pub fn at_most(&mut self, name: impl Into<String>, value: f64, bound: f64, anchor: impl Into<String>) {
        self.push(name, value, bound, value <= bound, anchor);
    }

    /// `value >= bound`.
    pub fn at_least(&mut self, name: impl Into<String>, value: f64, bound: f64, anchor: impl Into<String>) {
        self.push(name, value, bound, value >= bound, anchor);
    }

    pub fn extend(&mut self, other: VerificationReport) {
        self.checks.extend(other.checks);
    }

    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.pass)
    }

    pub fn failures(&self) -> impl Iterator<Item = &Check> {
        self.checks.iter().filter(|c| !c.pass)
    }

    pub fn get(&self, name: &str) -> Option<&Check> {
        self.checks.iter().find(|c| c.name == name)
    }
}
