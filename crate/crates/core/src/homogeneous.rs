//! Homogeneous p-harmonic functions `r^λ φ(θ)` in sectors, the exponent
//! relation between the opening angle and `λ`, and the strip limit
//! `e^{-γy} f(x)` obtained by rescaling the sector profile.

use std::f64::consts::{FRAC_PI_2, PI};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::report::VerificationReport;

/// Residual tolerance when solving for the exponent.
pub const EXPONENT_TOL: f64 = 1e-12;
/// Iteration cap for every bisection in this module.
pub const MAX_BISECTION: usize = 200;
/// Default number of angular intervals on `[-α, α]`.
pub const DEFAULT_N_THETA: usize = 4096;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum HomogeneousError {
    #[error("invalid exponent p = {0}: need 1 < p < inf")]
    InvalidP(f64),
    #[error("invalid opening angle alpha = {0}: need 0 < alpha <= pi")]
    InvalidAngle(f64),
    #[error("no root of the exponent relation (p = {p}, alpha = {alpha})")]
    NoRoot { p: f64, alpha: f64 },
    #[error("grid too small: {0} angular intervals, need an even count >= 64")]
    GridTooSmall(usize),
    #[error("lambda = {lambda} does not solve the exponent relation for alpha = {alpha}")]
    InconsistentExponent { lambda: f64, alpha: f64 },
    #[error("invalid sector count N = {0}")]
    InvalidN(usize),
}

/// Sign branch of the exponent relation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Branch {
    Positive,
    Negative,
}

impl Branch {
    fn sign(self) -> f64 {
        match self {
            Branch::Positive => 1.0,
            Branch::Negative => -1.0,
        }
    }
}

fn check_p(p: f64) -> Result<(), HomogeneousError> {
    if p.is_finite() && p > 1.0 {
        Ok(())
    } else {
        Err(HomogeneousError::InvalidP(p))
    }
}

fn check_alpha(alpha: f64) -> Result<(), HomogeneousError> {
    if alpha.is_finite() && alpha > 0.0 && alpha <= PI {
        Ok(())
    } else {
        Err(HomogeneousError::InvalidAngle(alpha))
    }
}

/// `(2-p)/(p-1)`.
fn shift(p: f64) -> f64 {
    (2.0 - p) / (p - 1.0)
}

/// `sqrt(λ² + λ(2-p)/(p-1))`, NaN outside the admissible range.
fn s_of(p: f64, lambda: f64) -> f64 {
    (lambda * (lambda + shift(p))).sqrt()
}

/// Left side minus right side of the exponent relation
/// `±1 - (λ-1)/S(λ) = 2α/π`.
pub fn exponent_residual(p: f64, alpha: f64, lambda: f64, branch: Branch) -> f64 {
    branch.sign() - (lambda - 1.0) / s_of(p, lambda) - 2.0 * alpha / PI
}

/// Opening half-angle for which `λ` solves the exponent relation.
pub fn angle_for_exponent(p: f64, lambda: f64) -> f64 {
    let sign = if lambda > 0.0 { 1.0 } else { -1.0 };
    FRAC_PI_2 * (sign - (lambda - 1.0) / s_of(p, lambda))
}

/// Solve the exponent relation on the requested branch by bisection.
pub fn solve_exponent(p: f64, alpha: f64, branch: Branch) -> Result<f64, HomogeneousError> {
    check_p(p)?;
    check_alpha(alpha)?;
    let c = shift(p);
    let f = |l: f64| exponent_residual(p, alpha, l, branch);
    // `inner` is the singular end of the branch where the residual is +inf.
    let (inner, mut outer) = match branch {
        Branch::Positive => ((-c).max(0.0), 2.0 + (-c).max(0.0)),
        Branch::Negative => ((-c).min(0.0), -2.0 + (-c).min(0.0)),
    };
    let mut guard = 0;
    while !(f(outer) < 0.0) {
        outer = inner + 2.0 * (outer - inner);
        guard += 1;
        if guard > 2000 || !outer.is_finite() {
            return Err(HomogeneousError::NoRoot { p, alpha });
        }
    }
    let (mut pos, mut neg) = (inner, outer);
    let mut mid = 0.5 * (pos + neg);
    for _ in 0..MAX_BISECTION {
        mid = 0.5 * (pos + neg);
        if mid == pos || mid == neg {
            break;
        }
        let v = f(mid);
        if v.is_nan() || v > 0.0 {
            pos = mid;
        } else {
            neg = mid;
        }
    }
    // The endpoint with the smaller residual.
    let cand = [mid, neg, pos];
    let best = cand
        .iter()
        .copied()
        .filter(|l| f(*l).is_finite())
        .min_by(|a, b| f(*a).abs().total_cmp(&f(*b).abs()))
        .ok_or(HomogeneousError::NoRoot { p, alpha })?;
    if f(best).abs() <= EXPONENT_TOL {
        Ok(best)
    } else {
        Err(HomogeneousError::NoRoot { p, alpha })
    }
}

/// Decay exponent of the half-plane mode: `-λ̂` solves the negative branch
/// at `α = π/2`.
pub fn hat_lambda(p: f64) -> f64 {
    (3.0 - p + 2.0 * (p * p - 3.0 * p + 3.0).sqrt()) / (3.0 * (p - 1.0))
}

/// Sign of `dλ̂/dp`, which reduces to the sign of `p/2 - 3/2 - sqrt(p²-3p+3)`.
pub fn hat_lambda_derivative_sign(p: f64) -> f64 {
    (p / 2.0 - 1.5 - (p * p - 3.0 * p + 3.0).sqrt()).signum()
}

/// Exact description of the sector profile for a given `(p, λ)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SectorProfile {
    pub p: f64,
    pub lambda: f64,
    /// Half-angle implied by `λ`.
    pub alpha: f64,
    s: f64,
}

impl SectorProfile {
    pub fn new(p: f64, alpha: f64, branch: Branch) -> Result<Self, HomogeneousError> {
        let lambda = solve_exponent(p, alpha, branch)?;
        Ok(Self::from_lambda(p, lambda))
    }

    pub fn from_lambda(p: f64, lambda: f64) -> Self {
        SectorProfile {
            p,
            lambda,
            alpha: angle_for_exponent(p, lambda),
            s: s_of(p, lambda),
        }
    }

    /// Implicit relation between `ψ = φ'/φ` and `θ`, evaluated as
    /// `G(ψ) + θ`; zero exactly at `ψ(θ)`.
    fn relation(&self, psi: f64, theta: f64) -> f64 {
        let (l, s) = (self.lambda, self.s);
        let k = (l - 1.0) / s;
        if psi.abs() <= 4.0 * l.abs().max(s) {
            (psi / l).atan() - k * (psi / s).atan() + theta
        } else {
            // Same quantity with the constant part folded into α, which keeps
            // the difference `θ - α` exact when `ψ` is large.
            theta - self.alpha - (l / psi).atan() + k * (s / psi).atan()
        }
    }

    /// `ψ(θ)` for `0 <= θ < α` (odd extension for negative `θ`).
    pub fn psi(&self, theta: f64) -> f64 {
        if theta < 0.0 {
            return -self.psi(-theta);
        }
        if theta == 0.0 {
            return 0.0;
        }
        if theta >= self.alpha {
            return f64::NEG_INFINITY;
        }
        let mut lo = -1.0;
        while self.relation(lo, theta) > 0.0 {
            lo *= 2.0;
            if lo < -1e300 {
                return f64::NEG_INFINITY;
            }
        }
        let mut hi = 0.0;
        for _ in 0..MAX_BISECTION {
            let mid = 0.5 * (lo + hi);
            if mid == lo || mid == hi {
                break;
            }
            if self.relation(mid, theta) > 0.0 {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        0.5 * (lo + hi)
    }

    /// `log φ` as a function of `ψ`: the integral of `ψ dθ` carried out in
    /// the `ψ` variable.
    pub fn log_phi_of_psi(&self, psi: f64) -> f64 {
        let (l, s) = (self.lambda, self.s);
        let q = psi * psi;
        -0.5 * l * (q / (l * l)).ln_1p() + 0.5 * (l - 1.0) * (q / (s * s)).ln_1p()
    }

    /// `(φ, φ')` on `[-α, α]`.
    pub fn eval(&self, theta: f64) -> (f64, f64) {
        if theta.abs() >= self.alpha {
            let slope = self.edge_slope();
            return (0.0, if theta > 0.0 { slope } else { -slope });
        }
        let psi = self.psi(theta);
        let phi = self.log_phi_of_psi(psi).exp();
        (phi, psi * phi)
    }

    /// `φ'(α)`, the limit of `ψ φ` as `ψ -> -inf`.
    pub fn edge_slope(&self) -> f64 {
        let (l, s) = (self.lambda, self.s);
        // log|ψ φ| = log|ψ| + log φ(ψ) -> constant as ψ -> -inf.
        let c = -0.5 * l * (1.0 / (l * l)).ln() + 0.5 * (l - 1.0) * (1.0 / (s * s)).ln();
        -c.exp()
    }

    /// `(φ, φ')` for all `θ`, extending by odd reflection across `±α`
    /// (period `4α`).
    pub fn eval_extended(&self, theta: f64) -> (f64, f64) {
        let a = self.alpha;
        let period = 4.0 * a;
        let mut t = (theta + a).rem_euclid(period) - a;
        if t > 3.0 * a {
            t -= period;
        }
        if t <= a {
            self.eval(t)
        } else {
            let (v, d) = self.eval(2.0 * a - t);
            (-v, d)
        }
    }

    /// `r^λ φ(θ)` and its Cartesian gradient at `(x, y)`.
    pub fn solution(&self, x: f64, y: f64) -> (f64, [f64; 2]) {
        let r = x.hypot(y);
        let th = y.atan2(x);
        let (phi, dphi) = self.eval_extended(th);
        if r == 0.0 {
            return (if self.lambda > 0.0 { 0.0 } else { f64::INFINITY }, [0.0, 0.0]);
        }
        let rl1 = r.powf(self.lambda - 1.0);
        let ur = self.lambda * rl1 * phi;
        let ut = rl1 * dphi;
        let (c, s) = (th.cos(), th.sin());
        (r * rl1 * phi, [ur * c - ut * s, ur * s + ut * c])
    }
}

/// Sampled homogeneous mode `r^λ φ(θ)` on a uniform grid of `[-α, α]`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct HomogeneousMode {
    pub p: f64,
    pub alpha: f64,
    pub lambda: f64,
    pub branch: Branch,
    pub theta: Vec<f64>,
    pub phi: Vec<f64>,
    /// `φ'/φ`; infinite at `±α`.
    #[serde(skip)]
    pub psi: Vec<f64>,
}

impl HomogeneousMode {
    pub fn profile(&self) -> SectorProfile {
        SectorProfile::from_lambda(self.p, self.lambda)
    }

    pub fn center_index(&self) -> usize {
        self.theta.len() / 2
    }
}

/// Sample `φ` and `ψ` for the exponent `λ` on `n_theta` intervals of
/// `[-α, α]`.
pub fn angular_profile(
    p: f64,
    lambda: f64,
    alpha: f64,
    n_theta: usize,
) -> Result<HomogeneousMode, HomogeneousError> {
    check_p(p)?;
    check_alpha(alpha)?;
    if n_theta < 64 || n_theta % 2 != 0 {
        return Err(HomogeneousError::GridTooSmall(n_theta));
    }
    let branch = if lambda > 0.0 { Branch::Positive } else { Branch::Negative };
    if !(exponent_residual(p, alpha, lambda, branch).abs() <= 1e-9) {
        return Err(HomogeneousError::InconsistentExponent { lambda, alpha });
    }
    let prof = SectorProfile::from_lambda(p, lambda);
    let half = n_theta / 2;
    let mut theta = Vec::with_capacity(n_theta + 1);
    let mut phi = Vec::with_capacity(n_theta + 1);
    let mut psi = Vec::with_capacity(n_theta + 1);
    for k in 0..=n_theta {
        let th = if k == half {
            0.0
        } else {
            alpha * (k as f64 - half as f64) / half as f64
        };
        theta.push(th);
        if k == 0 || k == n_theta {
            phi.push(0.0);
            psi.push(if k == 0 { f64::INFINITY } else { f64::NEG_INFINITY });
        } else {
            let ps = prof.psi(th);
            psi.push(ps);
            phi.push(prof.log_phi_of_psi(ps).exp());
        }
    }
    Ok(HomogeneousMode {
        p,
        alpha,
        lambda,
        branch,
        theta,
        phi,
        psi,
    })
}

/// Exponent, profile and grid in one call.
pub fn homogeneous_mode(
    p: f64,
    alpha: f64,
    branch: Branch,
    n_theta: usize,
) -> Result<HomogeneousMode, HomogeneousError> {
    let lambda = solve_exponent(p, alpha, branch)?;
    angular_profile(p, lambda, alpha, n_theta)
}

/// `γ = p / (2(p-1))`.
pub fn wolff_gamma(p: f64) -> f64 {
    p / (2.0 * (p - 1.0))
}

/// Periodic profile `f` with `e^{-γy} f(x)` p-harmonic.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WolffMode {
    pub p: f64,
    pub gamma: f64,
}

impl WolffMode {
    pub fn new(p: f64) -> Result<Self, HomogeneousError> {
        check_p(p)?;
        Ok(WolffMode {
            p,
            gamma: wolff_gamma(p),
        })
    }

    fn relation(&self, sigma: f64, x: f64) -> f64 {
        let (p, g) = (self.p, self.gamma);
        let k = (p - 2.0) / (2.0 * (p - 1.0));
        let rat = k * sigma / (sigma * sigma + g * g);
        if sigma.abs() <= 4.0 * g {
            (sigma / g).atan() - rat + x
        } else {
            x - FRAC_PI_2 - (g / sigma).atan() - rat
        }
    }

    /// `σ = f'/f` on `[0, π/2)`.
    pub fn sigma(&self, x: f64) -> f64 {
        if x < 0.0 {
            return -self.sigma(-x);
        }
        if x == 0.0 {
            return 0.0;
        }
        if x >= FRAC_PI_2 {
            return f64::NEG_INFINITY;
        }
        let mut lo = -1.0;
        while self.relation(lo, x) > 0.0 {
            lo *= 2.0;
            if lo < -1e300 {
                return f64::NEG_INFINITY;
            }
        }
        let mut hi = 0.0;
        for _ in 0..MAX_BISECTION {
            let mid = 0.5 * (lo + hi);
            if mid == lo || mid == hi {
                break;
            }
            if self.relation(mid, x) > 0.0 {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        0.5 * (lo + hi)
    }

    fn log_f_of_sigma(&self, sigma: f64) -> f64 {
        let (p, g) = (self.p, self.gamma);
        let q = sigma * sigma;
        -0.5 * (q / (g * g)).ln_1p() + (p - 2.0) / (2.0 * (p - 1.0)) * q / (q + g * g)
    }

    fn edge_slope(&self) -> f64 {
        let (p, g) = (self.p, self.gamma);
        let c = -0.5 * (1.0 / (g * g)).ln() + (p - 2.0) / (2.0 * (p - 1.0));
        -c.exp()
    }

    fn eval_base(&self, x: f64) -> (f64, f64) {
        if x >= FRAC_PI_2 {
            return (0.0, self.edge_slope());
        }
        let s = self.sigma(x);
        let f = self.log_f_of_sigma(s).exp();
        (f, s * f)
    }

    /// `(f, f')` at any `x`: even, `2π`-periodic, odd about `π/2`.
    pub fn eval(&self, x: f64) -> (f64, f64) {
        let t = (x + PI).rem_euclid(2.0 * PI) - PI;
        let a = t.abs();
        let sgn = if t < 0.0 { -1.0 } else { 1.0 };
        if a <= FRAC_PI_2 {
            let (f, d) = self.eval_base(a);
            (f, sgn * d)
        } else {
            let (f, d) = self.eval_base(PI - a);
            (-f, sgn * d)
        }
    }

    pub fn f(&self, x: f64) -> f64 {
        self.eval(x).0
    }

    /// `e^{-γy} f(x)` and its gradient.
    pub fn solution(&self, x: f64, y: f64) -> (f64, [f64; 2]) {
        let (f, d) = self.eval(x);
        let e = (-self.gamma * y).exp();
        (e * f, [e * d, -self.gamma * e * f])
    }
}

/// Samples of the Wolff profile on `[-π, π]`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct WolffSamples {
    pub p: f64,
    pub gamma: f64,
    pub x_grid: Vec<f64>,
    pub f: Vec<f64>,
    /// `f'/f` at the samples of `[0, π/2)`.
    pub sigma: Vec<f64>,
}

/// Sample `f` at `n_x + 1` equispaced points of `[-π, π]`.
pub fn wolff_mode(p: f64, n_x: usize) -> Result<WolffSamples, HomogeneousError> {
    let m = WolffMode::new(p)?;
    if n_x < 4 || n_x % 4 != 0 {
        return Err(HomogeneousError::GridTooSmall(n_x));
    }
    let x_grid: Vec<f64> = (0..=n_x).map(|k| -PI + 2.0 * PI * k as f64 / n_x as f64).collect();
    let f = x_grid.iter().map(|&x| m.f(x)).collect();
    let sigma = x_grid
        .iter()
        .filter(|&&x| (0.0..FRAC_PI_2).contains(&x))
        .map(|&x| m.sigma(x))
        .collect();
    Ok(WolffSamples {
        p,
        gamma: m.gamma,
        x_grid,
        f,
        sigma,
    })
}

/// `g_N(x) = φ(x/N)` for the sector of half-angle `π/(2N)`, extended by odd
/// reflection; `2π`-periodic.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RescaledProfile {
    pub n: usize,
    pub sector: SectorProfile,
}

impl RescaledProfile {
    pub fn new(p: f64, n: usize) -> Result<Self, HomogeneousError> {
        if n == 0 {
            return Err(HomogeneousError::InvalidN(n));
        }
        let sector = SectorProfile::new(p, PI / (2.0 * n as f64), Branch::Positive)?;
        Ok(RescaledProfile { n, sector })
    }

    /// `(g_N, g_N')` in the rescaled variable.
    pub fn eval(&self, x: f64) -> (f64, f64) {
        let nf = self.n as f64;
        let t = (x + PI).rem_euclid(2.0 * PI) - PI;
        let (v, d) = self.sector.eval_extended(t / nf);
        (v, d / nf)
    }

    pub fn g(&self, x: f64) -> f64 {
        self.eval(x).0
    }
}

/// Samples of `g_N` on `[-π, π]`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RescaledSamples {
    pub p: f64,
    pub n: usize,
    pub lambda_n: f64,
    pub x_grid: Vec<f64>,
    pub g: Vec<f64>,
}

/// Sample `g_N` at `n_x + 1` equispaced points of `[-π, π]`.
pub fn rescaled_profile(p: f64, n: usize, n_x: usize) -> Result<RescaledSamples, HomogeneousError> {
    let prof = RescaledProfile::new(p, n)?;
    if n_x < 4 || n_x % 4 != 0 {
        return Err(HomogeneousError::GridTooSmall(n_x));
    }
    let x_grid: Vec<f64> = (0..=n_x).map(|k| -PI + 2.0 * PI * k as f64 / n_x as f64).collect();
    let g = x_grid.iter().map(|&x| prof.g(x)).collect();
    Ok(RescaledSamples {
        p,
        n,
        lambda_n: prof.sector.lambda,
        x_grid,
        g,
    })
}

/// `sup_x |g_N(x) - f(x)|` over `samples` equispaced points of `[-π, π)`.
pub fn rescaled_deviation(p: f64, n: usize, samples: usize) -> Result<f64, HomogeneousError> {
    let g = RescaledProfile::new(p, n)?;
    let f = WolffMode::new(p)?;
    let mut sup: f64 = 0.0;
    for k in 0..samples {
        let x = -PI + 2.0 * PI * k as f64 / samples as f64;
        sup = sup.max((g.g(x) - f.f(x)).abs());
    }
    Ok(sup)
}

/// `sup_x |g_N'(x) - f'(x)|` over `samples` equispaced points of `[-π, π)`.
pub fn rescaled_derivative_deviation(p: f64, n: usize, samples: usize) -> Result<f64, HomogeneousError> {
    let g = RescaledProfile::new(p, n)?;
    let f = WolffMode::new(p)?;
    let mut sup: f64 = 0.0;
    for k in 0..samples {
        let x = -PI + 2.0 * PI * k as f64 / samples as f64;
        sup = sup.max((g.eval(x).1 - f.eval(x).1).abs());
    }
    Ok(sup)
}

/// `min_x (|g_N'(x)| + |g_N(x)|)` over equispaced samples.
pub fn profile_lower_bound(p: f64, n: usize, samples: usize) -> Result<f64, HomogeneousError> {
    let g = RescaledProfile::new(p, n)?;
    let mut low = f64::INFINITY;
    for k in 0..samples {
        let x = -PI + 2.0 * PI * k as f64 / samples as f64;
        let (v, d) = g.eval(x);
        low = low.min(v.abs() + d.abs());
    }
    Ok(low)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GammaNRow {
    pub n: usize,
    pub lambda: f64,
    pub gamma_n: f64,
    pub difference: f64,
}

/// `λ(π/(2N)) - γN` for each `N`.
pub fn gamma_times_n_rows(p: f64, ns: &[usize]) -> Result<Vec<GammaNRow>, HomogeneousError> {
    check_p(p)?;
    let g = wolff_gamma(p);
    ns.iter()
        .map(|&n| {
            if n == 0 {
                return Err(HomogeneousError::InvalidN(n));
            }
            let lambda = solve_exponent(p, PI / (2.0 * n as f64), Branch::Positive)?;
            Ok(GammaNRow {
                n,
                lambda,
                gamma_n: g * n as f64,
                difference: lambda - g * n as f64,
            })
        })
        .collect()
}

/// Boundedness of `|λ(π/(2N)) - γN|`: the largest value over `ns` may
/// exceed the value at the smallest `N` by at most a factor 10.
pub fn gamma_times_n_check(p: f64, ns: &[usize]) -> Result<VerificationReport, HomogeneousError> {
    let rows = gamma_times_n_rows(p, ns)?;
    let mut rep = VerificationReport::new(format!("gamma-times-n p={p}"));
    let first = rows.first().map_or(0.0, |r| r.difference.abs());
    let worst = rows.iter().fold(0.0f64, |m, r| m.max(r.difference.abs()));
    for r in &rows {
        rep.push(format!("|lambda - gamma N| at N={}", r.n), r.difference.abs(), f64::NAN, true, "gamma N = lambda + O(1)");
    }
    // Exact zero at p = 2 passes through the absolute floor.
    rep.at_most("max over N", worst, 10.0 * first + 1e-12, "gamma N = lambda + O(1)");
    Ok(rep)
}

/// Limit of `λ(π/(2N)) - γN` as `N -> inf`, from the expansion of the
/// exponent relation in `1/λ`.
pub fn gamma_n_offset(p: f64) -> f64 {
    let c = shift(p);
    let g = wolff_gamma(p);
    // 1/N = (1 + c/2)/λ - (c/2 + 3c²/8)/λ² + O(λ^-3), and 1 + c/2 = γ.
    -(c / 2.0 + 3.0 * c * c / 8.0) / g
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn exponent_p2_is_pi_over_2alpha() {
        for &a in &[PI / 8.0, PI / 4.0, PI / 2.0, PI] {
            let l = solve_exponent(2.0, a, Branch::Positive).unwrap();
            assert_relative_eq!(l, PI / (2.0 * a), epsilon = 1e-10);
        }
    }

    #[test]
    fn half_plane_is_linear_for_all_p() {
        for &p in &[1.2, 1.5, 2.0, 3.0, 7.0] {
            let l = solve_exponent(p, FRAC_PI_2, Branch::Positive).unwrap();
            assert_relative_eq!(l, 1.0, epsilon = 1e-11);
        }
    }

    #[test]
    fn hat_lambda_matches_negative_branch() {
        for &p in &[1.1, 1.5, 2.0, 3.0, 10.0] {
            let l = solve_exponent(p, FRAC_PI_2, Branch::Negative).unwrap();
            assert_relative_eq!(-l, hat_lambda(p), epsilon = 1e-10);
        }
        assert_relative_eq!(hat_lambda(3.0), 3f64.sqrt() / 3.0, epsilon = 1e-15);
        assert_eq!(hat_lambda(2.0), 1.0);
    }

    #[test]
    fn rejects_bad_inputs() {
        assert_eq!(
            solve_exponent(1.0, 1.0, Branch::Positive),
            Err(HomogeneousError::InvalidP(1.0))
        );
        assert!(matches!(
            solve_exponent(2.0, 0.0, Branch::Positive),
            Err(HomogeneousError::InvalidAngle(_))
        ));
        assert!(matches!(
            angular_profile(2.0, 2.0, PI / 4.0, 10),
            Err(HomogeneousError::GridTooSmall(10))
        ));
    }

    #[test]
    fn p2_profile_is_cosine() {
        let m = homogeneous_mode(2.0, PI / 4.0, Branch::Positive, 512).unwrap();
        assert_relative_eq!(m.lambda, 2.0, epsilon = 1e-12);
        for (t, v) in m.theta.iter().zip(&m.phi) {
            assert!((v - (2.0 * t).cos()).abs() < 1e-12, "{t} {v}");
        }
        assert_eq!(m.phi[m.center_index()], 1.0);
    }

    #[test]
    fn negative_branch_p2_profile() {
        let pr = SectorProfile::new(2.0, FRAC_PI_2, Branch::Negative).unwrap();
        assert_relative_eq!(pr.lambda, -1.0, epsilon = 1e-12);
        for k in 1..20 {
            let t = k as f64 * 0.07;
            assert_relative_eq!(pr.eval(t).0, t.cos(), epsilon = 1e-11);
        }
    }

    #[test]
    fn edge_slope_matches_limit() {
        let pr = SectorProfile::new(3.0, PI / 8.0, Branch::Positive).unwrap();
        let h = 1e-7;
        let (v, _) = pr.eval(pr.alpha - h);
        assert_relative_eq!(-v / h, pr.edge_slope(), max_relative = 1e-5);
    }

    #[test]
    fn wolff_p2_is_cosine() {
        let w = WolffMode::new(2.0).unwrap();
        for k in -40..40 {
            let x = k as f64 * 0.1;
            assert!((w.f(x) - x.cos()).abs() < 1e-12);
            assert!((w.eval(x).1 + x.sin()).abs() < 1e-10);
        }
    }

    #[test]
    fn wolff_sigma_solves_ode() {
        let w = WolffMode::new(3.5).unwrap();
        let (p, g) = (w.p, w.gamma);
        for &x in &[0.2, 0.7, 1.2] {
            let h = 1e-6;
            let ds = (w.sigma(x + h) - w.sigma(x - h)) / (2.0 * h);
            let s = w.sigma(x);
            let rhs = (p - 1.0) * (g * g + s * s).powi(2) / (g * g + (p - 1.0) * s * s);
            assert_relative_eq!(-ds, rhs, max_relative = 1e-6);
        }
    }

    #[test]
    fn gamma_offset_matches_large_n() {
        let rows = gamma_times_n_rows(3.0, &[256, 1024]).unwrap();
        let off = gamma_n_offset(3.0);
        assert!((rows[1].difference - off).abs() < 5e-3);
        assert!((rows[1].difference - off).abs() < (rows[0].difference - off).abs());
    }
}
