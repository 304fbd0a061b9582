//! Lacunary boundary series `σ = R + Σ a_j L_j Φ̃_j`: profiles, the maximal
//! function statistics, adaptive weight ladders kept in exact rationals,
//! frequency scheduling against disk solves, and radial scans.

use std::f64::consts::PI;

use num_rational::Ratio;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rustfft::num_complex::Complex;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::homogeneous::{HomogeneousError, RescaledProfile};
use crate::plap_solver::{solve_disk, DiskSolution, PolarGrid, SolverConfig, SolverError};
use crate::report::VerificationReport;
use crate::wolff_construction::{construct_v, TheoremAResolution, WolffError};

pub type Exact = Ratio<i128>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GapError {
    #[error("invalid plan: {0}")]
    InvalidPlan(String),
    #[error("inconsistent plan: {0}")]
    InconsistentPlan(String),
    #[error("partial sum not positive at level {level}: min {value:e}")]
    PositivityViolation { level: usize, value: f64 },
    #[error("ladder invariant violated at level {level}: {detail}")]
    InvariantViolation { level: usize, detail: String },
    #[error("no admissible frequency at level {level} below the cap {cap}")]
    BudgetExhausted { level: usize, cap: u64 },
    #[error("grid of {n} points does not resolve frequency {freq}")]
    Grid { n: usize, freq: u64 },
    #[error(transparent)]
    Solver(#[from] SolverError),
    #[error(transparent)]
    Homogeneous(#[from] HomogeneousError),
    #[error(transparent)]
    Wolff(#[from] WolffError),
}

/// `N_{j+1} > N_j (log(2 + N_j))³`.
pub fn gap_growth_ok(n_j: u64, n_next: u64) -> bool {
    let a = n_j as f64;
    n_next as f64 > a * (2.0 + a).ln().powi(3)
}

/// Term `j >= 1` of the sequence made of blocks `+1/k` (k times) then
/// `-1/k` (k times) for `k = 1, 2, …`. Its partial sums stay in `[0, 1]`
/// and return to 0 at the end of every block, while the series diverges.
pub fn block_pattern(j: usize) -> f64 {
    let mut left = j - 1;
    let mut k = 1usize;
    while left >= 2 * k {
        left -= 2 * k;
        k += 1;
    }
    if left < k {
        1.0 / k as f64
    } else {
        -1.0 / k as f64
    }
}

/// Frequencies `N_j`, amplitudes `a_j` and base constant `R`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GapPlan {
    pub n: Vec<u64>,
    pub a: Vec<f64>,
    pub r: f64,
    /// Require `N_{j+1} > N_j (log(2 + N_j))³`.
    pub gap_growth: bool,
}

impl GapPlan {
    /// `N_j = ratio^{j-1}`.
    pub fn geometric_frequencies(levels: usize, ratio: u64) -> Vec<u64> {
        (0..levels).map(|j| ratio.pow(j as u32)).collect()
    }

    /// `R = 1`, `a_j = -1/(4j)`.
    pub fn null(n: Vec<u64>) -> Self {
        let a = (1..=n.len()).map(|j| -0.25 / j as f64).collect();
        GapPlan {
            n,
            a,
            r: 1.0,
            gap_growth: false,
        }
    }

    /// `R = 0`, `a_j d_j = c · block_pattern(j)` with `c` fixed by
    /// `Σ a_j² = total`.
    pub fn divergent(n: Vec<u64>, d: &[f64], total: f64) -> Self {
        let raw: Vec<f64> = (1..=n.len()).map(|j| block_pattern(j) / d[j - 1]).collect();
        let norm = raw.iter().map(|v| v * v).sum::<f64>().sqrt();
        let c = total.sqrt() / norm;
        GapPlan {
            n,
            a: raw.iter().map(|v| c * v).collect(),
            r: 0.0,
            gap_growth: false,
        }
    }

    pub fn levels(&self) -> usize {
        self.n.len()
    }

    /// Frequency conditions only.
    pub fn validate_frequencies(&self) -> Result<(), GapError> {
        if self.n.is_empty() || self.n.len() != self.a.len() {
            return Err(GapError::InvalidPlan("need one amplitude per frequency".into()));
        }
        if self.n[0] != 1 {
            return Err(GapError::InvalidPlan(format!("N_1 = {} != 1", self.n[0])));
        }
        for w in self.n.windows(2) {
            if w[1] < 2 * w[0] || w[1] % w[0] != 0 {
                return Err(GapError::InvalidPlan(format!("{} does not divide {} with ratio >= 2", w[0], w[1])));
            }
            if self.gap_growth && !gap_growth_ok(w[0], w[1]) {
                return Err(GapError::InvalidPlan(format!("gap growth fails between {} and {}", w[0], w[1])));
            }
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<(), GapError> {
        self.validate_frequencies()?;
        let s: f64 = self.a.iter().map(|v| v * v).sum();
        if !(s < 1.0) {
            return Err(GapError::InvalidPlan(format!("sum of squared amplitudes {s} >= 1")));
        }
        if !(self.r == 0.0 || self.r == 1.0) {
            return Err(GapError::InvalidPlan(format!("R = {} not in {{0, 1}}", self.r)));
        }
        Ok(())
    }
}

/// Weight of the positive part in the surrogate profile
/// `s·max(g, 0) + (1 - s)·g`.
pub const SURROGATE_WEIGHT: f64 = 0.75;

/// Sector count of the disk function whose trace shape is reused at every
/// level in full mode.
pub const FULL_MODE_SECTORS: usize = 8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ProfileKind {
    Surrogate,
    Full,
}

/// One period of a boundary profile in the phase variable `x ∈ [-π, π)`.
#[derive(Debug, Clone)]
pub enum Shape {
    Surrogate { g: RescaledProfile, weight: f64 },
    /// Equispaced samples, periodic linear interpolation.
    Sampled(Vec<f64>),
}

impl Shape {
    fn raw(&self, x: f64) -> f64 {
        match self {
            Shape::Surrogate { g, weight } => {
                let v = g.g(x);
                weight * v.max(0.0) + (1.0 - weight) * v
            }
            Shape::Sampled(s) => {
                let m = s.len() as f64;
                let u = ((x + PI) / (2.0 * PI)).rem_euclid(1.0) * m;
                let k = (u.floor() as usize).min(s.len() - 1);
                let w = u - k as f64;
                (1.0 - w) * s[k] + w * s[(k + 1) % s.len()]
            }
        }
    }
}

/// Normalized profile `Φ̃_j` of one level with its mean `d_j` and the
/// Lipschitz constant of `ψ_j = φ_j - d_j` in the phase variable.
#[derive(Debug, Clone)]
pub struct LevelProfile {
    pub n: u64,
    pub shape: Shape,
    pub scale: f64,
    pub d: f64,
    pub lipschitz: f64,
}

/// Phase samples used for means and Lipschitz constants.
pub const PHASE_SAMPLES: usize = 4096;

impl LevelProfile {
    fn new(n: u64, shape: Shape) -> Self {
        let m = PHASE_SAMPLES;
        let raw: Vec<f64> = (0..m).map(|k| shape.raw(-PI + 2.0 * PI * k as f64 / m as f64)).collect();
        let sup = raw.iter().fold(0.0f64, |s, v| s.max(v.abs()));
        let scale = 1.0 / sup;
        let d = raw.iter().sum::<f64>() * scale / m as f64;
        let h = 2.0 * PI / m as f64;
        let lipschitz = (0..m).map(|k| (raw[(k + 1) % m] - raw[k]).abs() * scale / h).fold(0.0, f64::max);
        LevelProfile {
            n,
            shape,
            scale,
            d,
            lipschitz,
        }
    }

    /// `φ_j(x) = Φ̃_j(x / N_j)`.
    pub fn phase(&self, x: f64) -> f64 {
        self.scale * self.shape.raw(x)
    }

    /// `Φ̃_j(θ)`.
    pub fn at(&self, theta: f64) -> f64 {
        self.phase(self.n as f64 * theta)
    }

    /// `φ_j` at the phases `-π + 2πm/n`, `m = 0..n`.
    pub fn phase_table(&self, n: usize) -> Vec<f64> {
        (0..n).map(|m| self.phase(-PI + 2.0 * PI * m as f64 / n as f64)).collect()
    }
}

/// Phase index of `N·θ_i + 2π shift_num/shift_den` on the grid
/// `θ_i = -π + 2πi/n`; `n` must be even and divisible by `shift_den`.
pub fn phase_index(freq: u64, i: usize, n: usize, shift_num: usize, shift_den: usize) -> usize {
    let n_i = n as i128;
    let f = freq as i128;
    let m = f * i as i128 - (f - 1) * (n_i / 2) + (shift_num * (n / shift_den)) as i128;
    m.rem_euclid(n_i) as usize
}

#[derive(Debug, Clone)]
pub struct Profiles {
    pub p: f64,
    pub kind: ProfileKind,
    pub levels: Vec<LevelProfile>,
}

impl Profiles {
    pub fn build(p: f64, freqs: &[u64], kind: ProfileKind, cfg: &SolverConfig) -> Result<Self, GapError> {
        let levels = match kind {
            ProfileKind::Surrogate => freqs
                .iter()
                .map(|&n| {
                    let g = RescaledProfile::new(p, n as usize)?;
                    Ok(LevelProfile::new(
                        n,
                        Shape::Surrogate {
                            g,
                            weight: SURROGATE_WEIGHT,
                        },
                    ))
                })
                .collect::<Result<Vec<_>, GapError>>()?,
            ProfileKind::Full => {
                let run = construct_v(p, FULL_MODE_SECTORS, 0.05, &TheoremAResolution::default(), cfg)?;
                freqs
                    .iter()
                    .map(|&n| LevelProfile::new(n, Shape::Sampled(run.trace.clone())))
                    .collect()
            }
        };
        Ok(Profiles { p, kind, levels })
    }

    /// `Φ̃_j` on the grid `θ_i = -π + 2πi/n`, evaluated at exact phases.
    pub fn grid_values(&self, j: usize, n: usize) -> Result<Vec<f64>, GapError> {
        self.shifted_grid_values(j, n, 0, 1)
    }

    /// `φ_j(N_j θ_i + 2π shift_num/shift_den)` on the grid.
    pub fn shifted_grid_values(&self, j: usize, n: usize, shift_num: usize, shift_den: usize) -> Result<Vec<f64>, GapError> {
        let lp = &self.levels[j];
        if n % 2 != 0 || n % shift_den != 0 || (n as u64) < 4 * lp.n {
            return Err(GapError::Grid { n, freq: lp.n });
        }
        let table = lp.phase_table(n);
        Ok((0..n).map(|i| table[phase_index(lp.n, i, n, shift_num, shift_den)]).collect())
    }

    pub fn d(&self) -> Vec<f64> {
        self.levels.iter().map(|l| l.d).collect()
    }
}

/// Samples of `Φ̃_j` on the grid, with `d_j`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ProfileSamples {
    pub theta: Vec<f64>,
    pub values: Vec<f64>,
    pub d: f64,
    pub sup: f64,
}

/// `Φ̃_j` for level `j` (0-based) of `freqs` on an `n`-point grid.
pub fn boundary_profile(
    j: usize,
    p: f64,
    freqs: &[u64],
    kind: ProfileKind,
    n: usize,
    cfg: &SolverConfig,
) -> Result<ProfileSamples, GapError> {
    let prof = Profiles::build(p, &freqs[..=j], kind, cfg)?;
    let values = prof.grid_values(j, n)?;
    let sup = values.iter().fold(0.0f64, |s, v| s.max(v.abs()));
    Ok(ProfileSamples {
        theta: theta_grid(n),
        values,
        d: prof.levels[j].d,
        sup,
    })
}

pub fn theta_grid(n: usize) -> Vec<f64> {
    (0..n).map(|i| -PI + 2.0 * PI * i as f64 / n as f64).collect()
}

/// Zero mean of `ψ_j` and the derivative bound `Σ n²|b_n|² <= c Lip²`.
pub fn fourier_sanity(profiles: &Profiles) -> VerificationReport {
    let m = PHASE_SAMPLES;
    let mut rep = VerificationReport::new("Fourier sanity");
    let fft = FftPlanner::<f64>::new().plan_fft_forward(m);
    for (j, lp) in profiles.levels.iter().enumerate() {
        let table = lp.phase_table(m);
        let mut buf: Vec<Complex<f64>> = table.iter().map(|v| Complex::new(v - lp.d, 0.0)).collect();
        fft.process(&mut buf);
        let b: Vec<Complex<f64>> = buf.iter().map(|z| z / m as f64).collect();
        let deriv: f64 = (1..m)
            .map(|k| {
                let kk = if k <= m / 2 { k as f64 } else { k as f64 - m as f64 };
                kk * kk * b[k].norm_sqr()
            })
            .sum();
        rep.at_most(format!("mean of psi level {}", j + 1), b[0].norm(), 1e-12, "elementary properties of Fourier series");
        rep.at_most(
            format!("sum n^2 b_n^2 / Lip^2 level {}", j + 1),
            deriv / (lp.lipschitz * lp.lipschitz),
            2.0,
            "elementary properties of Fourier series",
        );
    }
    rep
}

/// One row of [`maximal_stats`].
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MaximalRow {
    pub seed: u64,
    pub n_grid: usize,
    /// `∫ (s*)² dθ / Σ a_j²`.
    pub ratio: f64,
    /// `|{s* > λ}|` for `λ = 1, 2, 4`.
    pub tails: [f64; 3],
}

/// `s*(θ) = sup_k |Σ_{j<=k} a_j ψ_j(N_j θ)|` on the grid.
pub fn maximal_function(amps: &[f64], psi: &[Vec<f64>]) -> Vec<f64> {
    let n = psi[0].len();
    let mut sum = vec![0.0; n];
    let mut sup = vec![0.0f64; n];
    for (a, row) in amps.iter().zip(psi) {
        for i in 0..n {
            sum[i] += a * row[i];
            sup[i] = sup[i].max(sum[i].abs());
        }
    }
    sup
}

/// Maximal-function statistics for random signs of the plan amplitudes,
/// one seed per sign pattern, on grids of `n_grid` and `2 n_grid` points.
pub fn maximal_stats(
    plan: &GapPlan,
    profiles: &Profiles,
    n_grid: usize,
    seeds: &[u64],
) -> Result<(VerificationReport, Vec<MaximalRow>), GapError> {
    plan.validate_frequencies()?;
    let sum_sq: f64 = plan.a.iter().map(|v| v * v).sum();
    let mut rows = Vec::new();
    let mut rep = VerificationReport::new("maximal function");
    for &seed in seeds {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let amps: Vec<f64> = plan.a.iter().map(|a| if rng.random::<bool>() { *a } else { -*a }).collect();
        let mut ratios = Vec::new();
        for n in [n_grid, 2 * n_grid] {
            let psi = (0..plan.levels())
                .map(|j| {
                    let d = profiles.levels[j].d;
                    profiles.grid_values(j, n).map(|v| v.into_iter().map(|x| x - d).collect())
                })
                .collect::<Result<Vec<Vec<f64>>, _>>()?;
            let s = maximal_function(&amps, &psi);
            let h = 2.0 * PI / n as f64;
            let ratio = if sum_sq > 0.0 {
                s.iter().map(|v| v * v).sum::<f64>() * h / sum_sq
            } else {
                0.0
            };
            let tail = |l: f64| s.iter().filter(|&&v| v > l).count() as f64 * h;
            ratios.push(ratio);
            rows.push(MaximalRow {
                seed,
                n_grid: n,
                ratio,
                tails: [tail(1.0), tail(2.0), tail(4.0)],
            });
        }
        rep.push(format!("ratio seed={seed}"), ratios[0], f64::NAN, ratios[0].is_finite(), "maximal function bound");
        let stab = if ratios[0] > 0.0 && ratios[1] > 0.0 {
            ratios[0].max(ratios[1]) / ratios[0].min(ratios[1])
        } else if ratios[0] == ratios[1] {
            1.0
        } else {
            f64::INFINITY
        };
        rep.at_most(format!("grid doubling spread seed={seed}"), stab, 2.0, "maximal function bound");
    }
    let lip = profiles.levels.iter().map(|l| l.lipschitz).fold(0.0, f64::max);
    let worst = rows.iter().map(|r| r.ratio).fold(0.0, f64::max);
    rep.push("ratio / Lip^2", worst / (lip * lip), f64::NAN, worst.is_finite(), "maximal function bound");
    Ok((rep, rows))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Family {
    /// Large partial sums of the unweighted series.
    Upsilon,
    /// Small weighted partial sums.
    F,
    /// Very negative unweighted partial sums where the weight is still large.
    H,
}

/// Intervals of `G_level` in one family for one `n`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FlagSet {
    pub level: usize,
    pub family: Family,
    pub n: u32,
    pub intervals: Vec<(f64, f64)>,
}

/// Weights `L_1, …, L_{J+1}` on the grid, with the breakpoint ratios
/// `L_{j+1}/L_j` at `θ = -π + πq/N_j` and exact values of `L_j` at the
/// breakpoints of `G_j`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct WeightLadder {
    pub n: Vec<u64>,
    pub n_grid: usize,
    pub l: Vec<Vec<f64>>,
    pub ratios: Vec<Vec<Exact>>,
    pub exact: Vec<Vec<Exact>>,
}

/// Piecewise-linear interpolation of breakpoint values at position
/// `num/den`, measured in breakpoint spacings from `-π`.
fn lerp_exact(ratios: &[Exact], num: i128, den: i128) -> Exact {
    let nq = ratios.len() as i128;
    let q = num.div_euclid(den);
    let frac = Exact::new(num.rem_euclid(den), den);
    let a = ratios[q.rem_euclid(nq) as usize];
    let b = ratios[(q + 1).rem_euclid(nq) as usize];
    a + (b - a) * frac
}

impl WeightLadder {
    /// `L_j(θ)` for `j >= 1` at any angle.
    pub fn eval(&self, j: usize, theta: f64) -> f64 {
        let mut v = 1.0;
        for l in 0..j - 1 {
            let r = &self.ratios[l];
            let nq = r.len();
            let u = ((theta + PI) / (2.0 * PI)).rem_euclid(1.0) * nq as f64;
            let q = (u.floor() as usize).min(nq - 1);
            let w = u - q as f64;
            let a = *r[q].numer() as f64 / *r[q].denom() as f64;
            let b = *r[(q + 1) % nq].numer() as f64 / *r[(q + 1) % nq].denom() as f64;
            v *= if a == b { a } else { a + (b - a) * w };
        }
        v
    }

    /// Exact `L_j` at `θ = -π + π m/N_j`, `m = 0..2N_j`.
    fn exact_at_breaks(&self, j: usize) -> Vec<Exact> {
        let nj = self.n[j - 1] as i128;
        (0..2 * nj)
            .map(|m| {
                let mut v = Exact::from_integer(1);
                for l in 0..j - 1 {
                    let q = nj / self.n[l] as i128;
                    v *= lerp_exact(&self.ratios[l], m, q);
                }
                v
            })
            .collect()
    }

    /// Breakpoint ratios in `{1/2, 1}`, `0 < L_{j+1} <= L_j` and agreement
    /// of the grid weights with the exact values.
    pub fn legality(&self) -> VerificationReport {
        let mut rep = VerificationReport::new("ladder legality");
        let half = Exact::new(1, 2);
        let one = Exact::from_integer(1);
        let bad = self.ratios.iter().flatten().filter(|r| **r != half && **r != one).count();
        rep.at_most("breakpoint ratios outside {1/2, 1}", bad as f64, 0.0, "halve or copy the weight");
        let mut drift: f64 = 0.0;
        let mut nonpos = 0usize;
        for j in 1..=self.exact.len() {
            let w = self.n_grid / (2 * self.n[j - 1] as usize);
            for (m, v) in self.exact[j - 1].iter().enumerate() {
                if *v <= Exact::from_integer(0) || *v > one {
                    nonpos += 1;
                }
                let f = *v.numer() as f64 / *v.denom() as f64;
                drift = drift.max((self.l[j - 1][m * w] - f).abs());
            }
        }
        let mut increase = 0usize;
        for j in 0..self.l.len() - 1 {
            increase += self.l[j + 1].iter().zip(&self.l[j]).filter(|(a, b)| a > b).count();
        }
        rep.at_most("weights outside (0, 1] at breakpoints", nonpos as f64, 0.0, "weights stay positive");
        rep.at_most("grid weight increases", increase as f64, 0.0, "weights are nonincreasing");
        rep.at_most("grid vs exact breakpoint weight", drift, 1e-12, "linear on the intervals of the partition");
        rep
    }
}

/// Grid data of a ladder run.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SeriesTrace {
    pub theta: Vec<f64>,
    /// `σ_j` for `j = 1..=J`.
    pub sigma: Vec<Vec<f64>>,
    /// `s̃_j` for `j = 1..=J`.
    pub s_tilde: Vec<Vec<f64>>,
    pub flags: Vec<FlagSet>,
}

impl SeriesTrace {
    pub fn sup_sigma(&self) -> f64 {
        self.sigma.iter().flatten().fold(0.0f64, |s, v| s.max(v.abs()))
    }

    /// Fraction of grid angles where `σ_j`, `j` in `from..=J`, oscillates by
    /// more than `threshold`.
    pub fn oscillation_fraction(&self, from: usize, threshold: f64) -> f64 {
        let n = self.theta.len();
        let count = (0..n)
            .filter(|&i| {
                let vals = self.sigma[from - 1..].iter().map(|s| s[i]);
                let (lo, hi) = vals.fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(v), b.max(v)));
                hi - lo > threshold
            })
            .count();
        count as f64 / n as f64
    }

    /// Median of `σ_j` over the grid.
    pub fn median_sigma(&self, j: usize) -> f64 {
        let mut v = self.sigma[j - 1].clone();
        v.sort_by(f64::total_cmp);
        let n = v.len();
        0.5 * (v[(n - 1) / 2] + v[n / 2])
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LadderRun {
    pub ladder: WeightLadder,
    pub trace: SeriesTrace,
    pub report: VerificationReport,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Rule {
    Divergent,
    Null,
}

/// Largest `n >= 1` with `value < 2^{-n}`, capped at 1000; 0 if none.
fn dyadic_depth(value: f64) -> u32 {
    let mut n = 0;
    while n < 1000 && value < 0.5f64.powi(n as i32 + 1) {
        n += 1;
    }
    n
}

/// Largest `n >= 1` with `value > n`; 0 if none.
fn level_exceeded(value: f64) -> u32 {
    if value > 1.0 {
        (value.ceil() - 1.0).min(1e6) as u32
    } else {
        0
    }
}

fn build_ladder(plan: &GapPlan, profiles: &Profiles, n_grid: usize, rule: Rule) -> Result<LadderRun, GapError> {
    plan.validate()?;
    let jmax = plan.levels();
    if profiles.levels.len() < jmax || profiles.levels.iter().zip(&plan.n).any(|(l, n)| l.n != *n) {
        return Err(GapError::InconsistentPlan("profiles do not match the plan frequencies".into()));
    }
    let n = n_grid;
    let top = *plan.n.last().unwrap();
    if n % (2 * top as usize) != 0 || (n as u64) < 8 * top {
        return Err(GapError::Grid { n, freq: top });
    }
    let theta = theta_grid(n);
    let mut l = vec![1.0; n];
    let mut sigma = vec![plan.r; n];
    let mut st = vec![0.0; n];
    let mut ls = vec![l.clone()];
    let mut sigmas = Vec::new();
    let mut sts = Vec::new();
    let mut ratios_all = Vec::new();
    let mut flags = Vec::new();
    let mut anc_u = vec![0u32; 2];
    let mut anc_f = vec![0u32; 2];
    let mut worst_4_30: f64 = 0.0;
    for j in 0..jmax {
        let phi = profiles.grid_values(j, n)?;
        let a = plan.a[j];
        for i in 0..n {
            st[i] += a * phi[i];
            sigma[i] += a * l[i] * phi[i];
        }
        if rule == Rule::Null {
            let m = sigma.iter().copied().fold(f64::INFINITY, f64::min);
            if !(m > 0.0) {
                return Err(GapError::PositivityViolation { level: j + 1, value: m });
            }
        }
        let nj = plan.n[j] as usize;
        let nq = 2 * nj;
        let w = n / nq;
        let mut flagged = vec![false; nq];
        let mut depth = vec![0u32; nq];
        let mut fam: Vec<(Family, u32, usize)> = Vec::new();
        for q in 0..nq {
            let idx = (q * w..=(q + 1) * w).map(|i| i % n);
            let (mut smin, mut tmin, mut tmax, mut lmax) =
                (f64::INFINITY, f64::INFINITY, f64::NEG_INFINITY, 0.0f64);
            let mut tabs: f64 = 0.0;
            for i in idx {
                smin = smin.min(sigma[i]);
                tmin = tmin.min(st[i]);
                tmax = tmax.max(st[i]);
                tabs = tabs.max(st[i].abs());
                lmax = lmax.max(l[i]);
            }
            let up = match rule {
                Rule::Divergent => level_exceeded(tabs),
                Rule::Null => level_exceeded(tmax),
            };
            if up > anc_u[q] {
                for k in anc_u[q] + 1..=up {
                    fam.push((Family::Upsilon, k, q));
                }
                anc_u[q] = up;
                flagged[q] = true;
            }
            if rule == Rule::Null {
                let fd = dyadic_depth(smin);
                depth[q] = fd;
                if fd > anc_f[q] {
                    for k in anc_f[q] + 1..=fd {
                        fam.push((Family::F, k, q));
                    }
                    anc_f[q] = fd;
                    flagged[q] = true;
                }
                let mut k = 1u32;
                while k < 60 && tmin < -(2f64.powi(k as i32)) / (k as f64 + 1.0) {
                    if lmax > 0.5f64.powi(k as i32) {
                        fam.push((Family::H, k, q));
                        flagged[q] = true;
                    }
                    k += 1;
                }
            }
        }
        let half = Exact::new(1, 2);
        let one = Exact::from_integer(1);
        let rho: Vec<Exact> = (0..nq)
            .map(|q| if flagged[(q + nq - 1) % nq] || flagged[q] { half } else { one })
            .collect();
        let rf: Vec<f64> = rho.iter().map(|r| if *r == half { 0.5 } else { 1.0 }).collect();
        for i in 0..n {
            let q = i / w;
            let (ra, rb) = (rf[q], rf[(q + 1) % nq]);
            let r = if ra == rb { ra } else { ra + (rb - ra) * (i % w) as f64 / w as f64 };
            l[i] *= r;
        }
        if rule == Rule::Null {
            for q in 0..nq {
                if depth[q] == 0 {
                    continue;
                }
                let bound = 0.5f64.powi(depth[q] as i32);
                let lm = (q * w..=(q + 1) * w).map(|i| l[i % n]).fold(0.0, f64::max);
                worst_4_30 = worst_4_30.max(lm / bound);
                if lm > bound * (1.0 + 1e-12) {
                    return Err(GapError::InvariantViolation {
                        level: j + 1,
                        detail: format!("interval {q}: weight {lm} above {bound}"),
                    });
                }
            }
        }
        let mut grouped: Vec<FlagSet> = Vec::new();
        for (f, k, q) in fam {
            let iv = (-PI + PI * q as f64 / nj as f64, -PI + PI * (q + 1) as f64 / nj as f64);
            match grouped.iter_mut().find(|g| g.family == f && g.n == k) {
                Some(g) => g.intervals.push(iv),
                None => grouped.push(FlagSet {
                    level: j + 1,
                    family: f,
                    n: k,
                    intervals: vec![iv],
                }),
            }
        }
        flags.extend(grouped);
        ratios_all.push(rho);
        sigmas.push(sigma.clone());
        sts.push(st.clone());
        ls.push(l.clone());
        if j + 1 < jmax {
            let ratio = (plan.n[j + 1] / plan.n[j]) as usize;
            anc_u = (0..2 * plan.n[j + 1] as usize).map(|c| anc_u[c / ratio]).collect();
            anc_f = (0..2 * plan.n[j + 1] as usize).map(|c| anc_f[c / ratio]).collect();
        }
    }
    let mut ladder = WeightLadder {
        n: plan.n.clone(),
        n_grid: n,
        l: ls,
        ratios: ratios_all,
        exact: Vec::new(),
    };
    ladder.exact = (1..=jmax).map(|j| ladder.exact_at_breaks(j)).collect();
    let trace = SeriesTrace {
        theta,
        sigma: sigmas,
        s_tilde: sts,
        flags,
    };
    let mut report = ladder.legality();
    report.run_id = match rule {
        Rule::Divergent => "divergent ladder".into(),
        Rule::Null => "null ladder".into(),
    };
    report.push("sup_j max |sigma_j|", trace.sup_sigma(), f64::NAN, trace.sup_sigma().is_finite(), "partial sums stay bounded");
    if rule == Rule::Null {
        let m = trace.sigma.iter().flatten().copied().fold(f64::INFINITY, f64::min);
        report.push("min_j min sigma_j", m, 0.0, m > 0.0, "partial sums stay positive");
        report.at_most("small partial sum forces small weight", worst_4_30, 1.0, "small partial sum forces small weight");
    }
    Ok(LadderRun { ladder, trace, report })
}

/// Ladder for `R = 0` with bounded but divergent partial sums of `Σ d_j a_j`.
pub fn build_ladder_divergent(plan: &GapPlan, profiles: &Profiles, n_grid: usize) -> Result<LadderRun, GapError> {
    if plan.r != 0.0 {
        return Err(GapError::InconsistentPlan(format!("R = {} for a divergent ladder", plan.r)));
    }
    let d = profiles.d();
    let mut s = 0.0f64;
    let mut sup = 0.0f64;
    let mut big = 0.0f64;
    for (a, dj) in plan.a.iter().zip(&d) {
        s += a * dj;
        sup = sup.max(s.abs());
        big = big.max((a * dj).abs());
    }
    if sup > 2.0 * big * (1.0 + 1e-12) {
        return Err(GapError::InconsistentPlan(format!(
            "partial sums of d_j a_j reach {sup}, more than twice the largest term {big}"
        )));
    }
    let mut run = build_ladder(plan, profiles, n_grid, Rule::Divergent)?;
    let jmax = plan.levels();
    let frac = run.trace.oscillation_fraction(jmax.div_ceil(2), 0.1);
    run.report.push("oscillation fraction", frac, f64::NAN, true, "partial sums diverge almost everywhere");
    Ok(run)
}

/// Ladder for `R = 1`, `a_j = -1/(4j)`; keeps every partial sum positive.
pub fn build_ladder_null(plan: &GapPlan, profiles: &Profiles, n_grid: usize) -> Result<LadderRun, GapError> {
    let ok = plan.r == 1.0
        && plan
            .a
            .iter()
            .enumerate()
            .all(|(j, a)| (a + 0.25 / (j + 1) as f64).abs() <= 1e-15);
    if !ok {
        return Err(GapError::InconsistentPlan("null ladder needs R = 1 and a_j = -1/(4j)".into()));
    }
    let mut run = build_ladder(plan, profiles, n_grid, Rule::Null)?;
    let j = plan.levels();
    run.report.push("median sigma_J", run.trace.median_sigma(j), f64::NAN, true, "partial sums tend to zero almost everywhere");
    Ok(run)
}

/// Polar grid for disk extensions of traces with frequencies up to `top`.
pub fn series_grid(top: u64) -> PolarGrid {
    let n_theta = (16 * top as usize).max(64);
    let h_min = (0.25 / top as f64).min(0.02);
    PolarGrid::rim_geometric(h_min, 1.1, 0.05, n_theta).with_theta0(-PI)
}

/// Realized frequency schedule.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Schedule {
    pub plan: GapPlan,
    pub alpha: f64,
    /// `A_j` with `1 - A_j N_{j+1}^{-α}` the radius of agreement.
    pub a_const: Vec<f64>,
    /// `A_j N_{j+1}^{-α}`.
    pub depth: Vec<f64>,
    /// Largest deviation inside the radius of agreement.
    pub deviation: Vec<f64>,
    pub candidates_tried: usize,
    /// Slope of `log depth` against `log N_{j+1}` when two or more depths
    /// are positive; compare with `-α`.
    pub fitted_slope: Option<f64>,
    pub report: VerificationReport,
}

/// `α = 1 - 2/p` for `p >= 2`, `1 - p/2` otherwise.
pub fn decay_alpha(p: f64) -> f64 {
    if p >= 2.0 {
        1.0 - 2.0 / p
    } else {
        1.0 - p / 2.0
    }
}

fn series_trace_at(profiles: &Profiles, amps: &[f64], r: f64, angles: &[f64]) -> Vec<f64> {
    angles
        .iter()
        .map(|&t| r + amps.iter().zip(&profiles.levels).map(|(a, lp)| a * lp.at(t)).sum::<f64>())
        .collect()
}

/// Largest ring radius `r*` such that `|u - v| < tol` on every node with
/// radius at most `r*`; 0 if the center already fails.
fn agreement_radius(u: &DiskSolution, v: &DiskSolution, tol: f64) -> (f64, f64) {
    let mut dev = (u.center() - v.center()).abs();
    if dev >= tol {
        return (-1.0, dev);
    }
    let mut r_ok = 0.0;
    for i in 1..=u.grid.n_r() {
        let d = u.ring(i).iter().zip(v.ring(i)).fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
        if d >= tol {
            break;
        }
        dev = dev.max(d);
        r_ok = u.grid.radius(i);
    }
    (r_ok, dev)
}

/// Choose `N_2, …, N_J` for the null amplitudes: each `N_{j+1}` is the
/// smallest multiple of `N_j` with the gap growth whose disk extension
/// agrees with the previous one to `2^{-(j+1)}` on a disk whose distance
/// to the rim is at most `2^{-j}`.
pub fn schedule_gaps(p: f64, levels: usize, kind: ProfileKind, cap: u64, cfg: &SolverConfig) -> Result<Schedule, GapError> {
    if levels == 0 || levels > 12 {
        return Err(GapError::InvalidPlan(format!("levels = {levels} outside 1..=12")));
    }
    let alpha = decay_alpha(p);
    let amps: Vec<f64> = (1..=levels).map(|j| -0.25 / j as f64).collect();
    let mut n = vec![1u64];
    let mut a_const = Vec::new();
    let mut depth = Vec::new();
    let mut deviation = Vec::new();
    let mut tried = 0;
    let mut rep = VerificationReport::new(format!("gap schedule p={p}"));
    for j in 1..levels {
        let nj = *n.last().unwrap();
        let mut c = 2 * nj;
        while !gap_growth_ok(nj, c) {
            c += nj;
        }
        loop {
            if c > cap {
                return Err(GapError::BudgetExhausted { level: j + 1, cap });
            }
            tried += 1;
            let mut freqs = n.clone();
            freqs.push(c);
            let profiles = Profiles::build(p, &freqs, kind, cfg)?;
            let grid = series_grid(c);
            let ang = grid.sector_angles();
            let prev = solve_disk(p, &series_trace_at(&profiles, &amps[..j], 1.0, &ang), &grid, cfg)?;
            let next = solve_disk(p, &series_trace_at(&profiles, &amps[..=j], 1.0, &ang), &grid, cfg)?;
            let tol = 0.5f64.powi(j as i32 + 1);
            let (r_ok, dev) = agreement_radius(&next, &prev, tol);
            let dpt = 1.0 - r_ok;
            let admissible = r_ok >= 0.0 && dpt <= 0.5f64.powi(j as i32);
            if admissible {
                n.push(c);
                depth.push(dpt);
                a_const.push(dpt * (c as f64).powf(alpha));
                deviation.push(dev);
                rep.at_most(format!("deviation level {}", j + 1), dev, tol, "agreement inside the radius");
                break;
            }
            c += nj;
        }
    }
    for w in n.windows(2) {
        rep.push(
            format!("gap growth {} -> {}", w[0], w[1]),
            w[1] as f64,
            w[0] as f64 * (2.0 + w[0] as f64).ln().powi(3),
            w[1] % w[0] == 0 && gap_growth_ok(w[0], w[1]),
            "frequency gaps",
        );
    }
    let pts: Vec<(f64, f64)> = n[1..]
        .iter()
        .zip(&depth)
        .filter(|(_, d)| **d > 0.0)
        .map(|(c, d)| ((*c as f64).ln(), d.ln()))
        .collect();
    let fitted_slope = (pts.len() >= 2).then(|| {
        let k = pts.len() as f64;
        let mx = pts.iter().map(|q| q.0).sum::<f64>() / k;
        let my = pts.iter().map(|q| q.1).sum::<f64>() / k;
        pts.iter().map(|q| (q.0 - mx) * (q.1 - my)).sum::<f64>() / pts.iter().map(|q| (q.0 - mx).powi(2)).sum::<f64>()
    });
    let plan = GapPlan {
        n,
        a: amps,
        r: 1.0,
        gap_growth: true,
    };
    plan.validate()?;
    Ok(Schedule {
        plan,
        alpha,
        a_const,
        depth,
        deviation,
        candidates_tried: tried,
        fitted_slope,
        report: rep,
    })
}

/// Radial behavior of the disk extension of `σ_J`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RadialScan {
    pub radii: Vec<f64>,
    pub threshold: f64,
    /// Fraction of angles whose radial values oscillate by more than the
    /// threshold.
    pub oscillation_fraction: f64,
    /// Fraction of angles whose value at the last radius is below the
    /// threshold.
    pub small_terminal_fraction: f64,
    pub median_terminal: f64,
    pub min_boundary: f64,
    pub theta: Vec<f64>,
    pub oscillation: Vec<f64>,
    pub terminal: Vec<f64>,
}

/// Value at radius `r` along the grid angle `j`, linear between rings.
fn ray_value(u: &DiskSolution, r: f64, j: usize) -> f64 {
    let g = &u.grid;
    let n_r = g.n_r();
    let k = g.radii.partition_point(|&v| v < r);
    if k == 0 {
        let w = r / g.radii[0];
        return (1.0 - w) * u.center() + w * u.value(1, j);
    }
    if k >= n_r {
        return u.value(n_r, j);
    }
    let (r0, r1) = (g.radii[k - 1], g.radii[k]);
    let w = (r - r0) / (r1 - r0);
    (1.0 - w) * u.value(k, j) + w * u.value(k + 1, j)
}

/// Solve the disk problem with boundary data `σ_J` from a ladder run and
/// record, along every grid ray, the values at `radii`.
pub fn radial_limit_scan(
    plan: &GapPlan,
    run: &LadderRun,
    p: f64,
    radii: &[f64],
    threshold: f64,
    cfg: &SolverConfig,
) -> Result<(RadialScan, DiskSolution), GapError> {
    let top = *plan.n.last().unwrap();
    let n = run.ladder.n_grid;
    let grid = PolarGrid::rim_geometric((0.25 / top as f64).min(0.02), 1.1, 0.05, n).with_theta0(-PI);
    let trace = run.trace.sigma.last().unwrap().clone();
    let sol = solve_disk(p, &trace, &grid, cfg)?;
    Ok((scan_rays(&sol, radii, threshold), sol))
}

/// Radial statistics of a solved disk field.
pub fn scan_rays(sol: &DiskSolution, radii: &[f64], threshold: f64) -> RadialScan {
    let n = sol.grid.n_theta;
    let mut osc = Vec::with_capacity(n);
    let mut term = Vec::with_capacity(n);
    for j in 0..n {
        let vals: Vec<f64> = radii.iter().map(|&r| ray_value(sol, r, j)).collect();
        let lo = vals.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = vals.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        osc.push(hi - lo);
        term.push(*vals.last().unwrap());
    }
    let mut sorted = term.clone();
    sorted.sort_by(f64::total_cmp);
    let median = 0.5 * (sorted[(n - 1) / 2] + sorted[n / 2]);
    let trace = sol.trace();
    RadialScan {
        radii: radii.to_vec(),
        threshold,
        oscillation_fraction: osc.iter().filter(|&&v| v > threshold).count() as f64 / n as f64,
        small_terminal_fraction: term.iter().filter(|&&v| v < threshold).count() as f64 / n as f64,
        median_terminal: median,
        min_boundary: trace.iter().copied().fold(f64::INFINITY, f64::min),
        theta: sol.grid.full_angles(),
        oscillation: osc,
        terminal: term,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn block_pattern_partial_sums() {
        let mut s = 0.0;
        let mut zeros = 0;
        for j in 1..=200 {
            s += block_pattern(j);
            assert!((-1e-12..=1.0 + 1e-12).contains(&s));
            if s.abs() < 1e-12 {
                zeros += 1;
            }
        }
        assert!(zeros >= 10);
        assert_eq!(block_pattern(1), 1.0);
        assert_eq!(block_pattern(2), -1.0);
        assert_eq!(block_pattern(3), 0.5);
        assert_eq!(block_pattern(5), -0.5);
    }

    #[test]
    fn phase_index_matches_float_phase() {
        let n = 64;
        for &f in &[1u64, 2, 8] {
            for i in 0..n {
                let th = -PI + 2.0 * PI * i as f64 / n as f64;
                let m = phase_index(f, i, n, 0, 1);
                let x = -PI + 2.0 * PI * m as f64 / n as f64;
                let diff = (f as f64 * th - x).rem_euclid(2.0 * PI);
                assert!(diff < 1e-9 || (2.0 * PI - diff) < 1e-9);
            }
        }
    }

    #[test]
    fn surrogate_mean_is_closed_form_for_p2() {
        let prof = Profiles::build(2.0, &[1, 2], ProfileKind::Surrogate, &SolverConfig::default()).unwrap();
        for lp in &prof.levels {
            assert!((lp.d - SURROGATE_WEIGHT / PI).abs() < 1e-6, "{}", lp.d);
        }
    }

    #[test]
    fn plan_validation() {
        let mut plan = GapPlan::null(vec![1, 2, 4]);
        assert!(plan.validate().is_ok());
        plan.n[2] = 5;
        assert!(plan.validate().is_err());
        let plan = GapPlan {
            n: vec![1, 2],
            a: vec![0.8, 0.8],
            r: 0.0,
            gap_growth: false,
        };
        assert!(plan.validate().is_err());
        assert!(gap_growth_ok(1, 2));
        assert!(!gap_growth_ok(2, 4));
    }
}
