//! p-harmonic measure of boundary arcs at the origin, bracketed by solves
//! with dilated and eroded indicator data, and the product construction
//! `f_j^k = ∏_{l≤j} (1 + q_l^k)` whose level sets carry small measure.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::gap_series::{GapError, Profiles};
use crate::plap_solver::{solve_disk, PolarGrid, SolverConfig, SolverError};
use crate::report::VerificationReport;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MeasureError {
    #[error("invalid exponent p = {0}")]
    InvalidP(f64),
    #[error("invalid arc [{0}, {1}]")]
    InvalidArc(f64, f64),
    #[error("smoothing width {0} is not positive")]
    InvalidDelta(f64),
    #[error("gap {gap:e} between arcs is below the smoothing width {delta:e}")]
    ArcsTooClose { gap: f64, delta: f64 },
    #[error("profile {level} has nonpositive mean {mean:e}")]
    NonpositiveMean { level: usize, mean: f64 },
    #[error("kappa = {kappa} too small at level {level}: sum {sum:e}, product {product:e}")]
    KappaTooSmall { level: usize, kappa: usize, sum: f64, product: f64 },
    #[error("no admissible Lambda: {0}")]
    EmptyFeasibleInterval(String),
    #[error("N_{{j+1}}/N_j = {num}/{den} is not a multiple of kappa = {kappa}")]
    Divisibility { num: u64, den: u64, kappa: usize },
    #[error("invalid input: {0}")]
    Invalid(String),
    #[error(transparent)]
    Solver(#[from] SolverError),
    #[error(transparent)]
    Gap(#[from] GapError),
}

fn wrap(theta: f64) -> f64 {
    (theta + PI).rem_euclid(2.0 * PI) - PI
}

/// Boundary set `E` at the evaluation point `0`, stored as disjoint closed
/// arcs `(start, length)` with `start ∈ [-π, π)`, sorted by start.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeasureProblem {
    pub p: f64,
    pub arcs: Vec<(f64, f64)>,
}

impl MeasureProblem {
    /// Arcs `[a, b]` with `a <= b`; overlapping arcs are merged.
    pub fn new(p: f64, arcs: &[(f64, f64)]) -> Result<Self, MeasureError> {
        if !(p.is_finite() && p > 1.0) {
            return Err(MeasureError::InvalidP(p));
        }
        let mut pieces = Vec::new();
        for &(a, b) in arcs {
            if !(a.is_finite() && b.is_finite() && a <= b) {
                return Err(MeasureError::InvalidArc(a, b));
            }
            if b - a >= 2.0 * PI {
                return Ok(MeasureProblem {
                    p,
                    arcs: vec![(-PI, 2.0 * PI)],
                });
            }
            let s = wrap(a);
            let e = s + (b - a);
            if e > PI {
                pieces.push((s, PI));
                pieces.push((-PI, e - 2.0 * PI));
            } else {
                pieces.push((s, e));
            }
        }
        pieces.sort_by(|x, y| x.0.total_cmp(&y.0));
        let mut merged: Vec<(f64, f64)> = Vec::new();
        for (s, e) in pieces {
            match merged.last_mut() {
                Some(last) if s <= last.1 => last.1 = last.1.max(e),
                _ => merged.push((s, e)),
            }
        }
        // Join across θ = π.
        if merged.len() > 1 && merged[0].0 <= -PI && merged.last().unwrap().1 >= PI {
            let first = merged.remove(0);
            merged.last_mut().unwrap().1 = PI + (first.1 + PI);
        }
        let arcs: Vec<(f64, f64)> = merged.into_iter().map(|(s, e)| (s, e - s)).collect();
        let total: f64 = arcs.iter().map(|a| a.1).sum();
        if total >= 2.0 * PI {
            return Ok(MeasureProblem {
                p,
                arcs: vec![(-PI, 2.0 * PI)],
            });
        }
        Ok(MeasureProblem { p, arcs })
    }

    pub fn empty(p: f64) -> Result<Self, MeasureError> {
        Self::new(p, &[])
    }

    pub fn is_full(&self) -> bool {
        self.arcs.len() == 1 && self.arcs[0].1 >= 2.0 * PI
    }

    /// Total arc length.
    pub fn measure(&self) -> f64 {
        self.arcs.iter().map(|a| a.1).sum()
    }

    /// Gaps between consecutive arcs, cyclically, as `(start, length)`.
    pub fn gaps(&self) -> Vec<(f64, f64)> {
        if self.arcs.is_empty() {
            return vec![(-PI, 2.0 * PI)];
        }
        if self.is_full() {
            return Vec::new();
        }
        let m = self.arcs.len();
        (0..m)
            .map(|i| {
                let end = self.arcs[i].0 + self.arcs[i].1;
                let next = self.arcs[(i + 1) % m].0 + if i + 1 == m { 2.0 * PI } else { 0.0 };
                (wrap(end), next - end)
            })
            .collect()
    }

    pub fn min_gap(&self) -> f64 {
        self.gaps().iter().map(|g| g.1).fold(f64::INFINITY, f64::min)
    }

    /// Closure of the complement.
    pub fn complement(&self) -> Self {
        let arcs: Vec<(f64, f64)> = self.gaps().iter().map(|&(s, l)| (s, s + l)).collect();
        MeasureProblem::new(self.p, &arcs).expect("gaps are valid arcs")
    }

    /// Merge arcs across gaps shorter than `width`; the result contains `E`.
    pub fn bridge(&self, width: f64) -> Self {
        if self.arcs.is_empty() || self.is_full() {
            return self.clone();
        }
        let keep: Vec<(f64, f64)> = self.gaps().into_iter().filter(|g| g.1 >= width).collect();
        if keep.is_empty() {
            return MeasureProblem {
                p: self.p,
                arcs: vec![(-PI, 2.0 * PI)],
            };
        }
        let arcs: Vec<(f64, f64)> = keep.iter().map(|&(s, l)| (s, s + l)).collect();
        MeasureProblem::new(self.p, &arcs).expect("gaps are valid arcs").complement()
    }

    /// Superset of `E` whose arcs and gaps are all at least `width` long:
    /// short gaps are bridged and short arcs widened about their centers.
    pub fn coarsen(&self, width: f64) -> Self {
        let mut cur = self.bridge(width);
        // Widen slightly past `width` so rounding in the arc arithmetic
        // cannot leave an arc just short of it.
        let target = width * (1.0 + 1e-9);
        loop {
            if cur.is_full() || cur.arcs.iter().all(|a| a.1 >= width) {
                return cur;
            }
            let arcs: Vec<(f64, f64)> = cur
                .arcs
                .iter()
                .map(|&(s, l)| {
                    let pad = 0.5 * (target - l).max(0.0);
                    (s - pad, s + l + pad)
                })
                .collect();
            cur = MeasureProblem::new(self.p, &arcs).expect("widened arcs are valid").bridge(width);
        }
    }

    /// Rotation by `phi`.
    pub fn rotated(&self, phi: f64) -> Self {
        let arcs: Vec<(f64, f64)> = self.arcs.iter().map(|&(s, l)| (s + phi, s + phi + l)).collect();
        MeasureProblem::new(self.p, &arcs).expect("rotation keeps arcs valid")
    }

    /// Distance along the circle from `theta` to `E`.
    pub fn dist_to_set(&self, theta: f64) -> f64 {
        if self.is_full() {
            return 0.0;
        }
        self.arcs
            .iter()
            .map(|&(s, l)| {
                let u = (theta - s).rem_euclid(2.0 * PI);
                if u <= l {
                    0.0
                } else {
                    (u - l).min(2.0 * PI - u)
                }
            })
            .fold(f64::INFINITY, f64::min)
    }

    /// Distance from `theta` to the complement of `E`.
    pub fn dist_to_complement(&self, theta: f64) -> f64 {
        if self.is_full() {
            return f64::INFINITY;
        }
        self.arcs
            .iter()
            .map(|&(s, l)| {
                let u = (theta - s).rem_euclid(2.0 * PI);
                if u <= l {
                    u.min(l - u)
                } else {
                    0.0
                }
            })
            .fold(0.0, f64::max)
    }

    /// `max(0, 1 - dist(θ, E)/δ)`: at least the indicator of `E`.
    pub fn upper_trace(&self, theta: f64, delta: f64) -> f64 {
        (1.0 - self.dist_to_set(theta) / delta).max(0.0)
    }

    /// `min(1, dist(θ, ∂B \ E)/δ)`: at most the indicator of `E`.
    pub fn lower_trace(&self, theta: f64, delta: f64) -> f64 {
        (self.dist_to_complement(theta) / delta).clamp(0.0, 1.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeasureBounds {
    pub delta: f64,
    pub lower: f64,
    pub upper: f64,
    pub n_theta: usize,
}

impl MeasureBounds {
    pub fn width(&self) -> f64 {
        self.upper - self.lower
    }
}

/// Disk grid for smoothing width `delta`: angular step at most `δ/4`, rings
/// graded from the same step at the rim.
pub fn measure_grid(delta: f64) -> PolarGrid {
    let n_theta = ((8.0 * PI / delta).ceil() as usize).next_power_of_two().max(256);
    let h = 2.0 * PI / n_theta as f64;
    PolarGrid::rim_geometric(h, 1.1, 0.05, n_theta)
}

fn solve_center(p: f64, trace: &[f64], grid: &PolarGrid, cfg: &SolverConfig) -> Result<f64, MeasureError> {
    let first = trace[0];
    if trace.iter().all(|&v| v == first) {
        return Ok(first);
    }
    Ok(solve_disk(p, trace, grid, cfg)?.center())
}

/// `(lower, upper)` bounds for `ω_p(0, E)` from the solutions at the origin
/// with the eroded and dilated collar data.
pub fn estimate_measure(prob: &MeasureProblem, delta: f64, cfg: &SolverConfig) -> Result<MeasureBounds, MeasureError> {
    if !(delta > 0.0 && delta.is_finite()) {
        return Err(MeasureError::InvalidDelta(delta));
    }
    if prob.arcs.len() > 1 || (prob.arcs.len() == 1 && !prob.is_full()) {
        let gap = prob.min_gap();
        if gap < delta {
            return Err(MeasureError::ArcsTooClose { gap, delta });
        }
    }
    let grid = measure_grid(delta);
    let ang = grid.full_angles();
    let up: Vec<f64> = ang.iter().map(|&t| prob.upper_trace(t, delta)).collect();
    let lo: Vec<f64> = ang.iter().map(|&t| prob.lower_trace(t, delta)).collect();
    let (upper, lower) = std::thread::scope(|s| {
        let hu = s.spawn(|| solve_center(prob.p, &up, &grid, cfg));
        let l = solve_center(prob.p, &lo, &grid, cfg);
        (hu.join().expect("solver thread"), l)
    });
    Ok(MeasureBounds {
        delta,
        lower: lower?,
        upper: upper?,
        n_theta: grid.n_theta,
    })
}

/// Bounds at `δ` and `δ/2`.
pub fn measure_refinement(prob: &MeasureProblem, delta: f64, cfg: &SolverConfig) -> Result<[MeasureBounds; 2], MeasureError> {
    Ok([estimate_measure(prob, delta, cfg)?, estimate_measure(prob, 0.5 * delta, cfg)?])
}

/// Rescaled profiles `Φ̃_j = Φ_j / c` sampled over one period in the phase
/// variable at `-π + 2πm/M`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct NormalizedProfiles {
    pub c: f64,
    /// `1 / min_j ∫ log(1 + Φ̃_j)`.
    pub c2: f64,
    /// `max_j max(Lip Φ̃_j, 1/∫Φ̃_j, 1)` in the phase variable.
    pub c1: f64,
    pub mean_integrals: Vec<f64>,
    pub log_integrals: Vec<f64>,
    pub sup: f64,
    pub tables: Vec<Vec<f64>>,
}

/// `c = max_j max(2‖Φ_j‖∞, 2∫Φ_j²/∫Φ_j)`, which gives `‖Φ̃_j‖∞ <= 1/2` and
/// `∫ log(1 + Φ̃_j) >= ∫Φ̃_j / 2 > 0`.
pub fn normalize_profiles(tables: &[Vec<f64>]) -> Result<NormalizedProfiles, MeasureError> {
    if tables.is_empty() || tables.iter().any(|t| t.len() < 4) {
        return Err(MeasureError::Invalid("need at least one sampled profile".into()));
    }
    let integral = |t: &[f64], f: &dyn Fn(f64) -> f64| t.iter().map(|&v| f(v)).sum::<f64>() * 2.0 * PI / t.len() as f64;
    let mut c = 0.0f64;
    for (j, t) in tables.iter().enumerate() {
        let mean = integral(t, &|v| v);
        if !(mean > 0.0) {
            return Err(MeasureError::NonpositiveMean { level: j + 1, mean });
        }
        let sup = t.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        c = c.max(2.0 * sup).max(2.0 * integral(t, &|v| v * v) / mean);
    }
    let scaled: Vec<Vec<f64>> = tables.iter().map(|t| t.iter().map(|v| v / c).collect()).collect();
    let mean_integrals: Vec<f64> = scaled.iter().map(|t| integral(t, &|v| v)).collect();
    let log_integrals: Vec<f64> = scaled.iter().map(|t| integral(t, &|v| v.ln_1p())).collect();
    let c2 = 1.0 / log_integrals.iter().copied().fold(f64::INFINITY, f64::min);
    let mut c1 = 1.0f64;
    for (t, &mi) in scaled.iter().zip(&mean_integrals) {
        let h = 2.0 * PI / t.len() as f64;
        let lip = (0..t.len()).map(|m| (t[(m + 1) % t.len()] - t[m]).abs() / h).fold(0.0, f64::max);
        c1 = c1.max(lip).max(1.0 / mi);
    }
    let sup = scaled.iter().flatten().fold(0.0f64, |m, v| m.max(v.abs()));
    Ok(NormalizedProfiles {
        c,
        c2,
        c1,
        mean_integrals,
        log_integrals,
        sup,
        tables: scaled,
    })
}

/// Phase tables of the gap-series profiles with `m` samples.
pub fn profile_tables(profiles: &Profiles, m: usize) -> Vec<Vec<f64>> {
    profiles.levels.iter().map(|l| l.phase_table(m)).collect()
}

/// Minima `a_l` of one profile over the phase blocks
/// `[-π + 2(l-1)π/κ, -π + 2lπ/κ]`, endpoints included.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlockMinima {
    pub a: Vec<f64>,
    pub sum: f64,
    pub product: f64,
}

impl BlockMinima {
    /// Smallest `C` with `Σ a_l >= 1/C` and `∏(1 + a_l) >= 1 + 1/C`.
    pub fn constant(&self) -> f64 {
        (1.0 / self.sum).max(1.0 / (self.product - 1.0))
    }
}

pub fn block_minima(table: &[f64], kappa: usize, level: usize) -> Result<BlockMinima, MeasureError> {
    let m = table.len();
    if kappa < 2 || m % kappa != 0 {
        return Err(MeasureError::Invalid(format!("kappa = {kappa} must be >= 2 and divide {m}")));
    }
    let w = m / kappa;
    let a: Vec<f64> = (0..kappa)
        .map(|l| (l * w..=(l + 1) * w).map(|i| table[i % m]).fold(f64::INFINITY, f64::min))
        .collect();
    let sum: f64 = a.iter().sum();
    let product: f64 = a.iter().map(|v| 1.0 + v).product();
    if !(sum > 0.0 && product > 1.0) {
        return Err(MeasureError::KappaTooSmall {
            level,
            kappa,
            sum,
            product,
        });
    }
    Ok(BlockMinima { a, sum, product })
}

/// `Λ` with `1 < Λ^κ < min_j ∏_l (1 + a_lj)` and `Ñ₀`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LambdaChoice {
    pub lambda: f64,
    pub n0: u32,
    /// `min_j ∏_l (1 + a_lj)^{1/κ}`.
    pub upper: f64,
    /// Largest `C` over levels.
    pub c: f64,
}

pub fn choose_lambda(minima: &[BlockMinima], kappa: usize, c1: f64) -> Result<LambdaChoice, MeasureError> {
    if minima.is_empty() {
        return Err(MeasureError::EmptyFeasibleInterval("no levels".into()));
    }
    let pmin = minima.iter().map(|b| b.product).fold(f64::INFINITY, f64::min);
    if !(pmin > 1.0) {
        return Err(MeasureError::EmptyFeasibleInterval(format!("min product {pmin}")));
    }
    let upper = pmin.powf(1.0 / kappa as f64);
    let lambda = upper.sqrt();
    let room = minima
        .iter()
        .map(|b| 1.0 + b.a.iter().copied().fold(f64::NEG_INFINITY, f64::max) - lambda)
        .fold(1.0 / (c1 * kappa as f64), f64::min);
    if !(room > 0.0) {
        return Err(MeasureError::EmptyFeasibleInterval(format!("threshold {room}")));
    }
    let mut n0 = 0u32;
    while 3f64.powi(-(n0 as i32)) >= room {
        n0 += 1;
    }
    let c = minima.iter().map(BlockMinima::constant).fold(0.0, f64::max);
    Ok(LambdaChoice { lambda, n0, upper, c })
}

/// `f_j^k` and `q_j^k` on the grid `θ_i = -π + 2πi/n`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ProductState {
    pub level: usize,
    pub branch: usize,
    pub f: Vec<f64>,
    pub q: Vec<f64>,
    pub lambda: f64,
    pub kappa: usize,
}

impl ProductState {
    /// `G_j^k = {f_j^k > Λ^j}` as arcs, endpoints by linear interpolation.
    pub fn level_set(&self, p: f64) -> MeasureProblem {
        let thr = self.lambda.powi(self.level as i32);
        super_level_arcs(p, &self.f, thr)
    }
}

fn super_level_arcs(p: f64, f: &[f64], thr: f64) -> MeasureProblem {
    let n = f.len();
    let h = 2.0 * PI / n as f64;
    let theta = |i: f64| -PI + h * i;
    let Some(start) = (0..n).find(|&i| f[i] <= thr) else {
        return MeasureProblem::new(p, &[(-PI, PI)]).expect("full circle");
    };
    let cross = |i: usize| {
        let (a, b) = (f[i % n], f[(i + 1) % n]);
        i as f64 + (thr - a) / (b - a)
    };
    let mut arcs = Vec::new();
    let mut open: Option<f64> = None;
    for s in 0..n {
        let i = start + s;
        let (a, b) = (f[i % n], f[(i + 1) % n]);
        if a <= thr && b > thr {
            open = Some(cross(i));
        } else if a > thr && b <= thr {
            let o = open.take().expect("arc opened before it closes");
            arcs.push((theta(o), theta(cross(i))));
        }
    }
    MeasureProblem::new(p, &arcs).expect("interpolated arcs are ordered")
}

/// All product states with the checks of the construction.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Products {
    pub freqs: Vec<u64>,
    pub kappa: usize,
    pub n_grid: usize,
    pub choice: LambdaChoice,
    pub minima: Vec<BlockMinima>,
    pub normalization: NormalizedProfilesSummary,
    /// Index `(j - 1) κ + (k - 1)`.
    pub states: Vec<ProductState>,
    pub report: VerificationReport,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct NormalizedProfilesSummary {
    pub c: f64,
    pub c1: f64,
    pub c2: f64,
    pub sup: f64,
}

impl Products {
    pub fn state(&self, j: usize, k: usize) -> &ProductState {
        &self.states[(j - 1) * self.kappa + (k - 1)]
    }

    pub fn levels(&self) -> usize {
        self.freqs.len()
    }
}

/// Grid size for products through frequency `top`.
pub fn product_grid(top: u64, kappa: usize) -> usize {
    16 * kappa * top as usize
}

/// Phase index of `N θ_i + π + 2πk/κ` in a table of size `n`.
fn product_phase(freq: u64, i: usize, n: usize, k: usize, kappa: usize) -> usize {
    let n_i = n as i128;
    let m = freq as i128 * i as i128 - freq as i128 * (n_i / 2) + n_i / 2 + (k * (n / kappa)) as i128;
    m.rem_euclid(n_i) as usize
}

pub fn validate_frequencies(freqs: &[u64], kappa: usize) -> Result<(), MeasureError> {
    if freqs.first() != Some(&1) {
        return Err(MeasureError::Invalid("N_1 must be 1".into()));
    }
    for w in freqs.windows(2) {
        if w[1] % w[0] != 0 || (w[1] / w[0]) % kappa as u64 != 0 {
            return Err(MeasureError::Divisibility {
                num: w[1],
                den: w[0],
                kappa,
            });
        }
    }
    Ok(())
}

/// Builds `f_j^k` for all levels and branches from normalized tables of size
/// `n`, the grid size. `q_j^k(θ) = Φ̃_j` at phase `N_j θ + π + 2πk/κ`.
pub fn build_products(freqs: &[u64], norm: &NormalizedProfiles, kappa: usize) -> Result<Products, MeasureError> {
    validate_frequencies(freqs, kappa)?;
    let n = norm.tables.first().map_or(0, Vec::len);
    if norm.tables.len() != freqs.len() || norm.tables.iter().any(|t| t.len() != n) {
        return Err(MeasureError::Invalid("one table of the grid size per level".into()));
    }
    if n % (2 * kappa) != 0 || (n as u64) < 4 * freqs.last().unwrap() {
        return Err(MeasureError::Invalid(format!("grid {n} too coarse or not a multiple of 2 kappa")));
    }
    let minima = norm
        .tables
        .iter()
        .enumerate()
        .map(|(j, t)| block_minima(t, kappa, j + 1))
        .collect::<Result<Vec<_>, _>>()?;
    let choice = choose_lambda(&minima, kappa, norm.c1)?;
    let lambda = choice.lambda;
    let mut states: Vec<ProductState> = Vec::with_capacity(freqs.len() * kappa);
    for (j, &freq) in freqs.iter().enumerate() {
        for k in 1..=kappa {
            let q: Vec<f64> = (0..n).map(|i| norm.tables[j][product_phase(freq, i, n, k % kappa, kappa)]).collect();
            let f: Vec<f64> = if j == 0 {
                q.iter().map(|v| 1.0 + v).collect()
            } else {
                let prev = &states[(j - 1) * kappa + (k - 1)].f;
                prev.iter().zip(&q).map(|(a, b)| a * (1.0 + b)).collect()
            };
            states.push(ProductState {
                level: j + 1,
                branch: k,
                f,
                q,
                lambda,
                kappa,
            });
        }
    }
    let mut report = VerificationReport::new(format!("products kappa={kappa}"));
    report.at_most("sup |Phi~|", norm.sup, 0.5, "normalized profiles bounded by one half");
    report.at_least("min log integral", 1.0 / norm.c2, 0.0, "normalized profiles have positive log mean");
    report.push("Lambda", lambda, choice.upper, lambda > 1.0 && lambda < choice.upper, "Lambda strictly between one and the block product root");
    for j in 1..=freqs.len() {
        let thr = lambda.powi((kappa * j) as i32);
        let mut cover = f64::INFINITY;
        let mut ident = 0.0f64;
        let mut lo = f64::INFINITY;
        let mut hi = 0.0f64;
        let mut uncovered = 0usize;
        for i in 0..n {
            let prod: f64 = (1..=kappa).map(|k| states[(j - 1) * kappa + k - 1].f[i]).product();
            let mut direct = 1.0;
            for (l, &fl) in freqs.iter().take(j).enumerate() {
                for k in 1..=kappa {
                    direct *= 1.0 + norm.tables[l][product_phase(fl, i, n, k % kappa, kappa)];
                }
            }
            ident = ident.max((prod - direct).abs() / direct);
            cover = cover.min(prod / thr);
            let lj = lambda.powi(j as i32);
            if (1..=kappa).all(|k| states[(j - 1) * kappa + k - 1].f[i] <= lj) {
                uncovered += 1;
            }
            for k in 1..=kappa {
                let v = states[(j - 1) * kappa + k - 1].f[i];
                lo = lo.min(v);
                hi = hi.max(v);
            }
        }
        report.at_most(format!("product identity j={j}"), ident, 1e-10, "product over branches equals the double product");
        report.push(
            format!("covering j={j}"),
            cover,
            1.0,
            cover > 1.0,
            "product over branches exceeds Lambda^(kappa j)",
        );
        report.at_most(format!("uncovered points j={j}"), uncovered as f64, 0.0, "level sets of the branches cover the circle");
        report.at_least(format!("envelope min j={j}"), lo, 0.5f64.powi(j as i32), "products stay above 2^-j");
        report.at_most(format!("envelope max j={j}"), hi, 1.5f64.powi(j as i32), "products stay below (3/2)^j");
    }
    Ok(Products {
        freqs: freqs.to_vec(),
        kappa,
        n_grid: n,
        choice,
        minima,
        normalization: NormalizedProfilesSummary {
            c: norm.c,
            c1: norm.c1,
            c2: norm.c2,
            sup: norm.sup,
        },
        states,
        report,
    })
}

/// Largest `κ` tried by [`products_for`].
pub const MAX_KAPPA: usize = 64;

/// Products for `N_j = κ^{j-1}`, `j = 1..=levels`, from gap-series profiles.
/// `κ` is doubled while the block minima are too small.
pub fn products_for(
    p: f64,
    levels: usize,
    kappa: usize,
    kind: crate::gap_series::ProfileKind,
    cfg: &SolverConfig,
) -> Result<Products, MeasureError> {
    let mut kappa = kappa;
    loop {
        let freqs: Vec<u64> = (0..levels).map(|j| (kappa as u64).pow(j as u32)).collect();
        let profiles = Profiles::build(p, &freqs, kind, cfg)?;
        let n = product_grid(*freqs.last().unwrap(), kappa);
        let norm = normalize_profiles(&profile_tables(&profiles, n))?;
        match build_products(&freqs, &norm, kappa) {
            Err(MeasureError::KappaTooSmall { .. }) if 2 * kappa <= MAX_KAPPA => kappa *= 2,
            r => return r,
        }
    }
}

/// Union of `G_j^k` over `j ∈ [from, J]`.
pub fn level_union(products: &Products, p: f64, k: usize, from: usize) -> MeasureProblem {
    let mut arcs = Vec::new();
    for j in from..=products.levels() {
        let g = products.state(j, k).level_set(p);
        if g.is_full() {
            return g;
        }
        arcs.extend(g.arcs.iter().map(|&(s, l)| (s, s + l)));
    }
    MeasureProblem::new(p, &arcs).expect("arcs from level sets")
}

/// Smoothing width `2π / (8 max N_j)`.
pub fn product_delta(freqs: &[u64]) -> f64 {
    2.0 * PI / (8.0 * *freqs.iter().max().unwrap_or(&1) as f64)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DecayRow {
    pub from: usize,
    /// Length of the coarsened union.
    pub length: f64,
    pub set: MeasureBounds,
    pub complement: MeasureBounds,
}

/// Measure of `⋃_{j=n}^J G_j^k` for each `n` in `range`, coarsened so that
/// arcs and gaps are at least `2δ` long. Passes when the fitted geometric
/// ratio is below one and the estimates do not increase with `n`; for
/// `p = 2` also checks `ω(E) + ω(∂B \ E) ≈ 1`.
pub fn measure_decay_for_gj(
    products: &Products,
    p: f64,
    k: usize,
    range: std::ops::RangeInclusive<usize>,
    cfg: &SolverConfig,
) -> Result<(VerificationReport, Vec<DecayRow>), MeasureError> {
    let delta = product_delta(&products.freqs);
    let mut rows = Vec::new();
    for from in range {
        let set = level_union(products, p, k, from).coarsen(2.0 * delta);
        let comp = set.complement();
        let b = estimate_measure(&set, delta, cfg)?;
        let c = estimate_measure(&comp, delta, cfg)?;
        rows.push(DecayRow {
            from,
            length: set.measure(),
            set: b,
            complement: c,
        });
    }
    let mut rep = VerificationReport::new(format!("measure decay p={p} k={k}"));
    let lam = products.choice.lambda;
    let ratio = fit_ratio(&rows.iter().map(|r| (r.from as f64, r.set.upper)).collect::<Vec<_>>());
    rep.push("geometric ratio", ratio, 1.0, ratio < 1.0, "measure of level unions decays geometrically");
    rep.push("1 / Lambda", 1.0 / lam, f64::NAN, true, "measure of level unions decays geometrically");
    let rise = rows.windows(2).map(|w| w[1].set.upper - w[0].set.upper).fold(f64::NEG_INFINITY, f64::max);
    if rows.len() > 1 {
        rep.at_most("max increase in n", rise, 1e-8, "monotonicity of measure");
        let c0 = rows[0].complement.lower;
        let c1 = rows.last().unwrap().complement.lower;
        rep.at_least("complement trend", c1 - c0, -1e-8, "complement measure grows toward one");
    }
    if p == 2.0 {
        for r in &rows {
            let width = r.set.width().max(r.complement.width());
            let s = r.set.upper + r.complement.upper;
            rep.push(
                format!("additivity n={}", r.from),
                s,
                1.0 + 2.0 * width,
                (s - 1.0).abs() <= 2.0 * width,
                "harmonic measure is additive",
            );
        }
    }
    Ok((rep, rows))
}

/// `exp` of the least-squares slope of `log y` against `x`.
pub fn fit_ratio(pts: &[(f64, f64)]) -> f64 {
    let pts: Vec<(f64, f64)> = pts.iter().filter(|p| p.1 > 0.0).map(|&(x, y)| (x, y.ln())).collect();
    if pts.len() < 2 {
        return f64::NAN;
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    (sxy / sxx).exp()
}

/// Block of the phase `N θ + π + 2πk/κ` for `θ = -π + 2π num/den`, in exact
/// integer arithmetic.
pub fn phase_block(freq: u64, num: u128, den: u128, k: usize, kappa: usize) -> usize {
    let kap = kappa as i128;
    let den = den as i128;
    let modulus = 2 * kap * den;
    let x = 2 * kap * (freq as i128) * (num as i128) % modulus + (kap * (2 - freq as i128) * den) % modulus + 2 * k as i128 * den;
    (x.rem_euclid(modulus) / (2 * den)) as usize
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GrowthFit {
    pub levels: Vec<usize>,
    /// 95th percentile of `|Σ_{l≤j} h_l|` per level.
    pub q95: Vec<f64>,
    pub exponent: f64,
    pub max_inner: f64,
    pub max_block_mean: f64,
}

/// `h_j = τ_j(phase) - m_j` with `τ_j = log(1 + a_lj)` on block `l` and `m_j`
/// its block average. Orthogonality is checked on a cell-centered grid; the
/// growth of partial sums uses `samples` random angles on the dyadic grid of
/// step `2π / 2^62`.
pub fn orthogonal_growth(
    freqs: &[u64],
    minima: &[BlockMinima],
    kappa: usize,
    k: usize,
    samples: usize,
    seed: u64,
) -> Result<(VerificationReport, GrowthFit), MeasureError> {
    validate_frequencies(freqs, kappa)?;
    if minima.len() != freqs.len() {
        return Err(MeasureError::Invalid("one minima row per level".into()));
    }
    let tau: Vec<Vec<f64>> = minima.iter().map(|b| b.a.iter().map(|a| a.ln_1p()).collect()).collect();
    let means: Vec<f64> = tau.iter().map(|t| t.iter().sum::<f64>() / kappa as f64).collect();
    let h = |j: usize, block: usize| tau[j][block] - means[j];

    let mut rep = VerificationReport::new(format!("orthogonal growth kappa={kappa}"));
    // Orthogonality on the finest grid that stays small.
    let mut top = 1;
    while top < freqs.len() && freqs[top] <= 1 << 16 {
        top += 1;
    }
    let n = 2 * kappa * freqs[top - 1] as usize;
    let cells: Vec<Vec<f64>> = (0..top)
        .map(|j| (0..n).map(|i| h(j, phase_block(freqs[j], 2 * i as u128 + 1, 2 * n as u128, k, kappa))).collect())
        .collect();
    let mut max_block_mean = 0.0f64;
    for j in 0..top {
        let width = if j == 0 { n } else { n / (kappa * freqs[j - 1] as usize) };
        for c in cells[j].chunks(width) {
            max_block_mean = max_block_mean.max((c.iter().sum::<f64>() / c.len() as f64).abs());
        }
    }
    let mut max_inner = 0.0f64;
    for a in 0..top {
        for b in a + 1..top {
            let ip = cells[a].iter().zip(&cells[b]).map(|(x, y)| x * y).sum::<f64>() / n as f64;
            max_inner = max_inner.max(ip.abs());
        }
    }
    rep.at_most("block mean of h_j", max_block_mean, 1e-12, "h_j has zero mean where h_(j-1) is constant");
    rep.at_most("max inner product", max_inner, 1e-10, "h_j are orthogonal");

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    const U: u128 = 1 << 62;
    let mut sums = vec![Vec::with_capacity(samples); freqs.len()];
    for _ in 0..samples {
        let m: u128 = rng.random_range(0..U);
        let mut s = 0.0;
        for (j, &f) in freqs.iter().enumerate() {
            s += h(j, phase_block(f, m, U, k, kappa));
            sums[j].push(s.abs());
        }
    }
    let q95: Vec<f64> = sums
        .iter_mut()
        .map(|v| {
            v.sort_by(f64::total_cmp);
            v[((v.len() as f64 * 0.95) as usize).min(v.len() - 1)]
        })
        .collect();
    let levels: Vec<usize> = (1..=freqs.len()).collect();
    let exponent = fit_ratio(&levels.iter().zip(&q95).map(|(&j, &q)| ((j as f64).ln(), q)).collect::<Vec<_>>()).ln();
    rep.at_most("growth exponent", exponent, 1.0, "partial sums grow slower than j");
    rep.push("reference exponent", 0.75, f64::NAN, true, "partial sums are O(j^(3/4)) almost everywhere");
    Ok((
        rep,
        GrowthFit {
            levels,
            q95,
            exponent,
            max_inner,
            max_block_mean,
        },
    ))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn arcs_merge_and_wrap() {
        let e = MeasureProblem::new(2.0, &[(3.0, 3.5), (-1.0, 0.0), (-0.5, 0.5)]).unwrap();
        assert_eq!(e.arcs.len(), 2);
        assert!((e.measure() - 2.0).abs() < 1e-12);
        let c = e.complement();
        assert!((c.measure() + e.measure() - 2.0 * PI).abs() < 1e-12);
        assert_eq!(e.dist_to_set(PI), 0.0);
        assert!((e.dist_to_complement(0.0) - 0.5).abs() < 1e-12);
    }

    #[test]
    fn bridge_merges_short_gaps() {
        let e = MeasureProblem::new(2.0, &[(0.0, 1.0), (1.05, 2.0), (3.0, 3.1)]).unwrap();
        let b = e.bridge(0.1);
        assert_eq!(b.arcs.len(), 2);
        assert!((b.measure() - 2.1).abs() < 1e-12);
    }

    #[test]
    fn block_minima_of_constant() {
        let t = vec![0.2; 64];
        let b = block_minima(&t, 4, 1).unwrap();
        assert_eq!(b.a, vec![0.2; 4]);
        assert!((b.product - 1.2f64.powi(4)).abs() < 1e-14);
        let z = vec![0.0; 64];
        assert!(matches!(block_minima(&z, 4, 1), Err(MeasureError::KappaTooSmall { .. })));
    }

    #[test]
    fn lambda_midpoint() {
        let b = BlockMinima {
            a: vec![0.05, 0.0476190476190477],
            sum: 0.0976190476190477,
            product: 1.1f64.powi(2),
        };
        let c = choose_lambda(&[b], 2, 1.0).unwrap();
        assert!((c.lambda - 1.1f64.sqrt()).abs() < 1e-14);
    }

    #[test]
    fn phase_block_matches_float() {
        let (n, kappa) = (1024usize, 8usize);
        for &f in &[1u64, 8, 64] {
            for k in 0..kappa {
                for i in (0..n).step_by(37) {
                    let theta = -PI + 2.0 * PI * (2 * i + 1) as f64 / (2 * n) as f64;
                    let x = (f as f64 * theta + PI + 2.0 * PI * k as f64 / kappa as f64 + PI).rem_euclid(2.0 * PI);
                    let want = (x / (2.0 * PI / kappa as f64)).floor() as usize;
                    assert_eq!(phase_block(f, 2 * i as u128 + 1, 2 * n as u128, k, kappa), want);
                }
            }
        }
    }

    #[test]
    fn product_phase_hits_every_block() {
        let (n, kappa) = (256usize, 4usize);
        for i in 0..n {
            let mut blocks: Vec<usize> = (0..kappa).map(|k| product_phase(4, i, n, k, kappa) / (n / kappa)).collect();
            blocks.sort();
            blocks.dedup();
            assert_eq!(blocks.len(), kappa);
        }
    }
}
