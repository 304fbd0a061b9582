//! Command-line flags and their mapping onto [`RunConfig`].

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use plap_core::gap_series::ProfileKind;

use crate::config::{parse_arcs, Command, Domain, Format, LadderKind, RunConfig, Sign, SuiteLevel};

#[derive(Debug, Parser)]
#[command(name = "plap", version, about = "p-harmonic measure experiments")]
pub struct Cli {
    /// Seed for every randomized choice.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    #[arg(long, global = true, value_enum)]
    pub format: Option<Format>,
    /// Serialized RunConfig; replaces the subcommand.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Multiplies the Newton tolerances (negative control).
    #[arg(long, global = true)]
    pub tol_scale: Option<f64>,
    #[command(subcommand)]
    pub command: Option<Sub>,
}

#[derive(Debug, Subcommand)]
pub enum Sub {
    /// Exponent and angular profile of a homogeneous solution in a sector.
    Mode {
        #[arg(long)]
        p: f64,
        /// Sector half-angle.
        #[arg(long)]
        alpha: f64,
        #[arg(long, allow_hyphen_values = true)]
        sign: Sign,
        /// Angular intervals across the sector (even, at least 64).
        #[arg(long, default_value_t = 256)]
        n_theta: usize,
    },
    /// Dirichlet problem on the unit disk.
    Solve {
        #[arg(long, value_enum, default_value_t = Domain::Disk)]
        domain: Domain,
        #[arg(long)]
        p: f64,
        /// CSV with columns theta,value.
        #[arg(long)]
        trace: PathBuf,
        #[arg(long, default_value_t = 64)]
        n_r: usize,
    },
    /// Strip scaling of I_s / I_1.
    #[command(name = "theorem-1-2")]
    Theorem12 {
        #[arg(long)]
        p: f64,
        #[arg(long, value_delimiter = ',', default_value = "0.05,0.025")]
        t: Vec<f64>,
    },
    /// Disk function V for several sector counts.
    TheoremA {
        #[arg(long)]
        p: f64,
        #[arg(long, value_delimiter = ',', default_value = "8,16,32")]
        n: Vec<usize>,
        #[arg(long, default_value_t = 0.05)]
        t: f64,
    },
    GapSeries(GapArgs),
    /// Two-sided bounds for the p-harmonic measure of a union of arcs.
    Measure {
        #[arg(long)]
        p: f64,
        /// Arcs as a1:b1,a2:b2 (radians).
        #[arg(long, allow_hyphen_values = true, value_parser = parse_arc_list)]
        arcs: ArcList,
        #[arg(long, default_value_t = 0.04)]
        delta: f64,
    },
    /// Product construction, covering and level-set decay.
    TheoremC {
        #[arg(long)]
        p: f64,
        #[arg(long, default_value_t = 4)]
        levels: usize,
        #[arg(long, default_value_t = 8)]
        kappa: usize,
        /// Levels used for the decay of level-set unions (0 skips it).
        #[arg(long, default_value_t = 4)]
        decay_levels: usize,
    },
    /// Acceptance suite.
    Suite {
        #[arg(value_enum)]
        level: SuiteLevel,
        /// Comma-separated criterion ids.
        #[arg(long, value_delimiter = ',')]
        only: Vec<u8>,
    },
}

/// Lacunary series with a weight ladder.
#[derive(Debug, Args)]
pub struct GapArgs {
    #[arg(long)]
    pub p: f64,
    #[arg(long, default_value_t = 8)]
    pub levels: usize,
    #[arg(long, value_enum)]
    pub ladder: LadderKind,
    #[arg(long, value_enum, default_value_t = ProfileArg::Surrogate)]
    pub kind: ProfileArg,
    #[arg(long, default_value_t = 2)]
    pub ratio: u64,
    /// Sum of squared amplitudes for the divergent ladder.
    #[arg(long, default_value_t = 0.9)]
    pub total: f64,
    /// Grid points per period of the top frequency.
    #[arg(long, default_value_t = 16)]
    pub grid_factor: usize,
}

#[derive(Debug, Clone)]
pub struct ArcList(pub Vec<(f64, f64)>);

fn parse_arc_list(s: &str) -> Result<ArcList, String> {
    parse_arcs(s).map(ArcList)
}

#[derive(Debug, Clone, Copy, clap::ValueEnum)]
pub enum ProfileArg {
    Surrogate,
    Full,
}

impl From<ProfileArg> for ProfileKind {
    fn from(k: ProfileArg) -> Self {
        match k {
            ProfileArg::Surrogate => ProfileKind::Surrogate,
            ProfileArg::Full => ProfileKind::Full,
        }
    }
}

impl From<Sub> for Command {
    fn from(s: Sub) -> Self {
        match s {
            Sub::Mode { p, alpha, sign, n_theta } => Command::Mode { p, alpha, sign, n_theta },
            Sub::Solve { domain, p, trace, n_r } => Command::Solve { domain, p, trace, n_r },
            Sub::Theorem12 { p, t } => Command::Theorem12 { p, t },
            Sub::TheoremA { p, n, t } => Command::TheoremA { p, n, t },
            Sub::GapSeries(g) => Command::GapSeries {
                p: g.p,
                levels: g.levels,
                ladder: g.ladder,
                kind: g.kind.into(),
                ratio: g.ratio,
                total: g.total,
                grid_factor: g.grid_factor,
            },
            Sub::Measure { p, arcs, delta } => Command::Measure { p, arcs: arcs.0, delta },
            Sub::TheoremC { p, levels, kappa, decay_levels } => Command::TheoremC { p, levels, kappa, decay_levels },
            Sub::Suite { level, only } => Command::Suite { level, only },
        }
    }
}

impl Cli {
    /// Builds the run configuration; errors are usage errors.
    pub fn into_config(self) -> Result<RunConfig, String> {
        let mut cfg = match (self.config, self.command) {
            (Some(_), Some(_)) => return Err("--config replaces the subcommand; give one or the other".into()),
            (None, None) => return Err("a subcommand or --config is required".into()),
            (Some(path), None) => {
                let text = std::fs::read_to_string(&path).map_err(|e| format!("{}: {e}", path.display()))?;
                RunConfig::from_json(&text).map_err(|e| format!("{}: {e}", path.display()))?
            }
            (None, Some(sub)) => RunConfig::new(sub.into()),
        };
        if let Some(seed) = self.seed {
            cfg.seed = seed;
        }
        if let Some(out) = self.out {
            cfg.out_dir = out;
        }
        if let Some(f) = self.format {
            cfg.format = f;
        }
        if let Some(s) = self.tol_scale {
            if !(s.is_finite() && s > 0.0) {
                return Err(format!("--tol-scale must be positive, got {s}"));
            }
            cfg.solver.tol *= s;
            cfg.solver.tol_intermediate *= s;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}
