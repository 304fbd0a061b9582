//! Serializable run configuration.

use std::path::PathBuf;

use plap_core::gap_series::ProfileKind;
use plap_core::homogeneous::Branch;
use plap_core::plap_solver::SolverConfig;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Json,
    Csv,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Domain {
    Disk,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum LadderKind {
    Null,
    Divergent,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum SuiteLevel {
    Smoke,
    Full,
}

/// Sign branch as written on the command line: `+` or `-`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Sign {
    #[serde(rename = "+")]
    Plus,
    #[serde(rename = "-")]
    Minus,
}

impl Sign {
    pub fn branch(self) -> Branch {
        match self {
            Sign::Plus => Branch::Positive,
            Sign::Minus => Branch::Negative,
        }
    }
}

impl std::str::FromStr for Sign {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "+" | "plus" => Ok(Sign::Plus),
            "-" | "minus" => Ok(Sign::Minus),
            _ => Err(format!("sign must be + or -, got {s:?}")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "name", rename_all = "kebab-case")]
pub enum Command {
    Mode {
        p: f64,
        alpha: f64,
        sign: Sign,
        n_theta: usize,
    },
    Solve {
        domain: Domain,
        p: f64,
        trace: PathBuf,
        n_r: usize,
    },
    #[serde(rename = "theorem-1-2")]
    Theorem12 {
        p: f64,
        t: Vec<f64>,
    },
    TheoremA {
        p: f64,
        n: Vec<usize>,
        t: f64,
    },
    GapSeries {
        p: f64,
        levels: usize,
        ladder: LadderKind,
        kind: ProfileKind,
        ratio: u64,
        total: f64,
        grid_factor: usize,
    },
    Measure {
        p: f64,
        arcs: Vec<(f64, f64)>,
        delta: f64,
    },
    TheoremC {
        p: f64,
        levels: usize,
        kappa: usize,
        decay_levels: usize,
    },
    Suite {
        level: SuiteLevel,
        only: Vec<u8>,
    },
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Mode { .. } => "mode",
            Command::Solve { .. } => "solve",
            Command::Theorem12 { .. } => "theorem-1-2",
            Command::TheoremA { .. } => "theorem-a",
            Command::GapSeries { .. } => "gap-series",
            Command::Measure { .. } => "measure",
            Command::TheoremC { .. } => "theorem-c",
            Command::Suite { .. } => "suite",
        }
    }
}

/// Everything that determines a run's artifacts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub command: Command,
    pub seed: u64,
    pub out_dir: PathBuf,
    pub format: Format,
    pub solver: SolverConfig,
}

pub const DEFAULT_SEED: u64 = 20240611;

impl RunConfig {
    pub fn new(command: Command) -> Self {
        RunConfig {
            command,
            seed: DEFAULT_SEED,
            out_dir: PathBuf::from("out"),
            format: Format::Json,
            solver: SolverConfig::default(),
        }
    }

    pub fn to_json(&self) -> String {
        crate::output::to_json(self)
    }

    pub fn from_json(s: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(s)
    }

    /// Range checks that need no computation; failures are usage errors.
    pub fn validate(&self) -> Result<(), String> {
        let p_ok = |p: f64| {
            if p.is_finite() && p > 1.0 {
                Ok(())
            } else {
                Err(format!("p must be a finite number > 1, got {p}"))
            }
        };
        let s = &self.solver;
        if !(s.tol > 0.0 && s.tol_intermediate > 0.0 && s.eps_end > 0.0 && s.eps_start >= s.eps_end && s.eps_factor > 1.0) {
            return Err("solver tolerances must be positive and eps_start >= eps_end".into());
        }
        match &self.command {
            Command::Mode { p, alpha, n_theta, .. } => {
                p_ok(*p)?;
                if !(alpha.is_finite() && *alpha > 0.0 && *alpha <= std::f64::consts::PI) {
                    return Err(format!("alpha must lie in (0, pi], got {alpha}"));
                }
                if *n_theta < 64 || n_theta % 2 != 0 {
                    return Err("n-theta must be even and at least 64".into());
                }
            }
            Command::Solve { p, n_r, .. } => {
                p_ok(*p)?;
                if *n_r < 2 {
                    return Err("n-r must be at least 2".into());
                }
            }
            Command::Theorem12 { p, t } => {
                p_ok(*p)?;
                if t.is_empty() || t.iter().any(|t| !(*t > 0.0 && *t <= 0.1)) {
                    return Err("t values must lie in (0, 0.1]".into());
                }
            }
            Command::TheoremA { p, n, t } => {
                p_ok(*p)?;
                if *p <= 2.0 {
                    return Err("theorem-a needs p > 2".into());
                }
                if n.is_empty() || n.iter().any(|n| *n < 8) {
                    return Err("sector counts must be at least 8".into());
                }
                if !(*t > 0.0 && *t <= 0.1) {
                    return Err("t must lie in (0, 0.1]".into());
                }
            }
            Command::GapSeries { p, levels, ratio, total, grid_factor, .. } => {
                p_ok(*p)?;
                if *levels == 0 || *levels > 24 {
                    return Err("levels must lie in 1..=24".into());
                }
                if *ratio < 2 {
                    return Err("ratio must be at least 2".into());
                }
                if !(total.is_finite() && *total > 0.0 && *total < 1.0) {
                    return Err("total must lie in (0, 1)".into());
                }
                if *grid_factor < 2 {
                    return Err("grid-factor must be at least 2".into());
                }
            }
            Command::Measure { p, arcs, delta } => {
                p_ok(*p)?;
                if arcs.iter().any(|(a, b)| !(a.is_finite() && b.is_finite() && b >= a)) {
                    return Err("arcs must be finite pairs a:b with a <= b".into());
                }
                if !(*delta > 0.0 && *delta < 1.0) {
                    return Err("delta must lie in (0, 1)".into());
                }
            }
            Command::TheoremC { p, levels, kappa, decay_levels } => {
                p_ok(*p)?;
                if *levels == 0 || *levels > 8 {
                    return Err("levels must lie in 1..=8".into());
                }
                if *kappa < 2 || !kappa.is_power_of_two() {
                    return Err("kappa must be a power of two, at least 2".into());
                }
                if decay_levels > levels {
                    return Err("decay-levels cannot exceed levels".into());
                }
            }
            Command::Suite { only, .. } => {
                if let Some(id) = only.iter().find(|&&i| !(1..=12).contains(&i)) {
                    return Err(format!("criterion ids lie in 1..=12, got {id}"));
                }
            }
        }
        Ok(())
    }
}

/// Parses `a1:b1,a2:b2,...` into arc endpoints.
pub fn parse_arcs(s: &str) -> Result<Vec<(f64, f64)>, String> {
    if s.trim().is_empty() {
        return Ok(Vec::new());
    }
    s.split(',')
        .map(|part| {
            let (a, b) = part
                .split_once(':')
                .ok_or_else(|| format!("arc {part:?} is not of the form a:b"))?;
            let a: f64 = a.trim().parse().map_err(|e| format!("arc start {a:?}: {e}"))?;
            let b: f64 = b.trim().parse().map_err(|e| format!("arc end {b:?}: {e}"))?;
            Ok((a, b))
        })
        .collect()
}
