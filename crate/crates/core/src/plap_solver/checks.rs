//! Checks of solved disk fields against the maximum principle, comparison,
//! Harnack-type bounds and periodic decay.

use std::f64::consts::PI;

use rustfft::num_complex::Complex;
use rustfft::FftPlanner;

use super::{weak_residual, DiskSolution, PolarGrid, SolverError, DEFAULT_GRADING};
use crate::homogeneous::{Branch, SectorProfile};
use crate::report::VerificationReport;

fn trace_range(u: &DiskSolution) -> (f64, f64) {
    let t = u.ring(u.grid.n_r());
    let lo = t.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = t.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    (lo, hi)
}

/// `min(trace) - tol <= u <= max(trace) + tol` at every node.
pub fn maximum_principle(u: &DiskSolution, tol: f64) -> VerificationReport {
    let (lo, hi) = trace_range(u);
    let umin = u.values.iter().copied().fold(f64::INFINITY, f64::min);
    let umax = u.values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut rep = VerificationReport::new("maximum principle");
    rep.at_most("max u - max trace", umax - hi, tol, "maximum principle");
    rep.at_most("min trace - min u", lo - umin, tol, "maximum principle");
    rep
}

/// Comparison: if `u <= v + tol` on the boundary then `u <= v + tol` inside.
/// Also checks the maximum principle for both fields.
pub fn check_comparison(u: &DiskSolution, v: &DiskSolution, tol: f64) -> VerificationReport {
    let mut rep = VerificationReport::new("comparison");
    if u.grid != v.grid || u.p != v.p {
        rep.push("same grid and exponent", 0.0, 1.0, false, "comparison principle");
        return rep;
    }
    let n_r = u.grid.n_r();
    let bdry = u
        .ring(n_r)
        .iter()
        .zip(v.ring(n_r))
        .fold(f64::NEG_INFINITY, |m, (a, b)| m.max(a - b));
    let inside = u.values.iter().zip(&v.values).fold(f64::NEG_INFINITY, |m, (a, b)| m.max(a - b));
    rep.push("boundary max(u - v)", bdry, tol, true, "comparison principle");
    if bdry <= tol {
        rep.at_most("interior max(u - v)", inside, tol, "comparison principle");
    }
    rep.extend(maximum_principle(u, tol));
    rep.extend(maximum_principle(v, tol));
    rep
}

/// `max / min` of the field over nodes with radius at most `radius`.
pub fn harnack_ratio(u: &DiskSolution, radius: f64) -> f64 {
    let g = &u.grid;
    let mut lo = u.center();
    let mut hi = u.center();
    for i in 1..=g.n_r() {
        if g.radius(i) > radius {
            break;
        }
        for &v in u.ring(i) {
            lo = lo.min(v);
            hi = hi.max(v);
        }
    }
    if lo <= 0.0 {
        f64::INFINITY
    } else {
        hi / lo
    }
}

/// Oscillation over the circle of ring `i`.
pub fn ring_oscillation(u: &DiskSolution, i: usize) -> f64 {
    let r = u.ring(i);
    let lo = r.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = r.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    hi - lo
}

/// Least-squares slope of `log osc(r)` against `log r` over the rings with
/// `0.2 <= r <= 0.8`.
pub fn radial_decay_fit(u: &DiskSolution) -> Result<f64, SolverError> {
    let g = &u.grid;
    let mut pts = Vec::new();
    for i in 1..=g.n_r() {
        let r = g.radius(i);
        if !(0.2..=0.8).contains(&r) {
            continue;
        }
        let osc = ring_oscillation(u, i);
        if osc > 0.0 && osc.is_finite() {
            pts.push((r.ln(), osc.ln()));
        }
    }
    if pts.len() < 2 {
        return Err(SolverError::DegenerateFit);
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    Ok(sxy / sxx)
}

/// Decay fit with the checks `exponent >= c N` for the reported constant
/// `c = exponent / N`, and `exponent > 0`.
pub fn radial_decay_report(u: &DiskSolution, n: usize) -> Result<VerificationReport, SolverError> {
    let k = radial_decay_fit(u)?;
    let mut rep = VerificationReport::new(format!("radial decay N={n}"));
    rep.at_least("decay exponent", k, 0.0, "decay of periodic solutions");
    rep.push("exponent / N", k / n as f64, f64::NAN, true, "decay of periodic solutions");
    Ok(rep)
}

/// Weak residual of the interpolated mode `r^λ φ(θ)` with `N`-fold odd
/// symmetry (half-angle `π/(2N)`) on a graded sector grid, over radii in
/// `window`. Regularized with `ε = 1e-12`.
pub fn mode_residual(p: f64, n: usize, n_r: usize, n_theta: usize, window: (f64, f64)) -> Result<f64, SolverError> {
    let prof = SectorProfile::new(p, PI / (2.0 * n as f64), Branch::Positive).map_err(|_| SolverError::InvalidP(p))?;
    let grid = PolarGrid::graded(n_r, n_theta, DEFAULT_GRADING).with_sectors(n);
    grid.validate()?;
    let values = grid.sample(|x, y| prof.solution(x, y).0);
    Ok(weak_residual(&values, &grid, p, 1e-12, window))
}

/// Residuals of [`mode_residual`] on `(n_r, n_theta)` and on the grid with
/// both steps halved, and their ratio.
pub fn mode_residual_refinement(p: f64, n: usize, n_r: usize, n_theta: usize) -> Result<(f64, f64, f64), SolverError> {
    let window = (0.3, 0.9);
    let coarse = mode_residual(p, n, n_r, n_theta, window)?;
    let fine = mode_residual(p, n, 2 * n_r, 2 * n_theta, window)?;
    Ok((coarse, fine, coarse / fine))
}

/// Harmonic extension of the boundary trace of `u` by the Fourier series
/// `Σ c_k r^|k| e^{ikθ}`, at every stored node. Requires a full-circle grid.
pub fn fourier_extension(u: &DiskSolution) -> Vec<f64> {
    let g = &u.grid;
    let n = g.n_theta;
    let mut planner = FftPlanner::<f64>::new();
    let fwd = planner.plan_fft_forward(n);
    let inv = planner.plan_fft_inverse(n);
    let mut c: Vec<Complex<f64>> = u.trace().iter().map(|&v| Complex::new(v, 0.0)).collect();
    fwd.process(&mut c);
    let mut out = Vec::with_capacity(g.n_nodes());
    out.push(c[0].re / n as f64);
    for i in 1..=g.n_r() {
        let r = g.radius(i);
        let mut ring: Vec<Complex<f64>> = c
            .iter()
            .enumerate()
            .map(|(k, v)| v * r.powi(k.min(n - k) as i32) / n as f64)
            .collect();
        inv.process(&mut ring);
        out.extend(ring.iter().take(g.sector_nodes()).map(|v| v.re));
    }
    out
}

/// `max |u - harmonic extension of its trace|` over all nodes.
pub fn harmonic_oracle_error(u: &DiskSolution) -> f64 {
    fourier_extension(u)
        .iter()
        .zip(&u.values)
        .fold(0.0f64, |m, (a, b)| m.max((a - b).abs()))
}

/// Largest normalized weak residual of a solved field over interior nodes.
pub fn residual_report(u: &DiskSolution, eps: f64, bound: f64) -> VerificationReport {
    let r = weak_residual(&u.values, &u.grid, u.p, eps, (0.0, 1.0));
    let mut rep = VerificationReport::new(format!("weak residual p={}", u.p));
    rep.at_most("max weak residual", r, bound, "discrete Euler-Lagrange equation");
    rep
}
