//! Boundary-layer constructions: the bump solution in the half-plane, the
//! periodic strip function `Ψ` whose averages at two heights separate as
//! the bump shrinks, and the disk function `V` built from a thin triangle.

use std::f64::consts::{FRAC_PI_2, PI};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::homogeneous::{hat_lambda, HomogeneousError};
use crate::plap_solver::mesh::Patch;
use crate::plap_solver::{
    mesh_energy, solve_disk, solve_halfplane, solve_mesh, solve_strip, DiskSolution, HalfPlaneSolution, PolarGrid,
    SolverConfig, SolverError, StripGrid,
};
use crate::report::VerificationReport;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum WolffError {
    #[error("invalid bump width t = {0}: need 0 < t <= 0.1")]
    InvalidT(f64),
    #[error("invalid exponent p = {0}")]
    InvalidP(f64),
    #[error("invalid sector count N = {0}")]
    InvalidN(usize),
    #[error("impossible triangle geometry: {0}")]
    Geometry(String),
    #[error("domain too small: extrapolated value {0:e} at the outer radius")]
    DomainTooSmall(f64),
    #[error(transparent)]
    Solver(#[from] SolverError),
    #[error(transparent)]
    Homogeneous(#[from] HomogeneousError),
}

/// `C^∞` step from 0 at `u <= 0` to 1 at `u >= 1`.
pub fn smoothstep(u: f64) -> f64 {
    if u <= 0.0 {
        0.0
    } else if u >= 1.0 {
        1.0
    } else {
        let a = (-1.0 / u).exp();
        let b = (-1.0 / (1.0 - u)).exp();
        a / (a + b)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BumpParams {
    pub t: f64,
}

impl BumpParams {
    pub fn new(t: f64) -> Result<Self, WolffError> {
        if t.is_finite() && t > 0.0 && t <= 0.1 {
            Ok(BumpParams { t })
        } else {
            Err(WolffError::InvalidT(t))
        }
    }

    /// `a(x)`: 1 on `|x| <= t/2`, 0 on `|x| >= t`, smooth in between.
    pub fn a(&self, x: f64) -> f64 {
        smoothstep((self.t - x.abs()) / (0.5 * self.t))
    }

    /// `sup |a'|` measured on a fine grid of the transition.
    pub fn slope_bound(&self) -> f64 {
        let n = 4096;
        let h = 0.5 * self.t / n as f64;
        (0..n)
            .map(|k| {
                let x = 0.5 * self.t + k as f64 * h;
                (self.a(x + h) - self.a(x)).abs() / h
            })
            .fold(0.0, f64::max)
    }
}

fn check_p(p: f64) -> Result<(), WolffError> {
    if p.is_finite() && p > 1.0 {
        Ok(())
    } else {
        Err(WolffError::InvalidP(p))
    }
}

/// Bump solution `û` in the upper half-plane.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BumpSolution {
    pub p: f64,
    pub t: f64,
    pub u_it: f64,
    pub u_i: f64,
    /// Fitted slope of `log û(iy)` against `log y` for `10t <= y <= 10⁴t`.
    pub decay_exponent: f64,
    pub max_value: f64,
    pub min_value: f64,
    #[serde(skip)]
    pub field: Option<HalfPlaneSolution>,
}

pub fn solve_bump_halfplane(p: f64, params: BumpParams, cfg: &SolverConfig) -> Result<BumpSolution, WolffError> {
    check_p(p)?;
    let t = params.t;
    let sol = solve_halfplane(p, |x| params.a(x), t, cfg)?;
    let g = &sol.grid;
    let mid = g.n_angle / 2;
    let mut pts = Vec::new();
    for (k, &r) in g.radii.iter().enumerate() {
        if (10.0 * t..=1e4 * t).contains(&r) {
            let v = sol.values[g.node(k + 1, mid)];
            if v > 0.0 {
                pts.push((r.ln(), v.ln()));
            }
        }
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|q| q.0).sum::<f64>() / n;
    let my = pts.iter().map(|q| q.1).sum::<f64>() / n;
    let slope = pts.iter().map(|q| (q.0 - mx) * (q.1 - my)).sum::<f64>()
        / pts.iter().map(|q| (q.0 - mx).powi(2)).sum::<f64>();
    // Value the untruncated solution would have at the outer radius.
    let r_out = *g.radii.last().unwrap();
    let extrapolated = (my + slope * (r_out.ln() - mx)).exp();
    if !(extrapolated < 1e-3) {
        return Err(WolffError::DomainTooSmall(extrapolated));
    }
    let max_value = sol.values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let min_value = sol.values.iter().copied().fold(f64::INFINITY, f64::min);
    Ok(BumpSolution {
        p,
        t,
        u_it: sol.eval(0.0, t),
        u_i: sol.eval(0.0, 1.0),
        decay_exponent: slope,
        max_value,
        min_value,
        field: Some(sol),
    })
}

/// Resolution of the periodic strip problem for `Ψ`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StripResolution {
    pub nx: usize,
    pub cluster: f64,
    pub height: f64,
    pub ny: usize,
    /// First row spacing as a fraction of `t`.
    pub dy0_over_t: f64,
}

impl Default for StripResolution {
    fn default() -> Self {
        StripResolution {
            nx: 256,
            cluster: 0.9,
            height: 5.0,
            ny: 96,
            dy0_over_t: 1.0 / 16.0,
        }
    }
}

/// Averages of the strip function `Ψ` with bump data of width `t`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StripRun {
    pub p: f64,
    pub t: f64,
    /// Probe height `s = 2t`.
    pub s: f64,
    pub i_s: f64,
    pub i_1: f64,
    pub ratio: f64,
    pub xi: f64,
    pub top_oscillation: f64,
    pub newton_steps: usize,
}

/// Solve for `Ψ` (period 1, data `a(x)` on the real axis, free top at
/// height `res.height`) and record `I_s`, `I_1` and the top constant.
pub fn strip_run(p: f64, params: BumpParams, res: &StripResolution, cfg: &SolverConfig) -> Result<StripRun, WolffError> {
    check_p(p)?;
    let t = params.t;
    let s = 2.0 * t;
    let grid = StripGrid::new(1.0, res.nx, res.cluster, res.height, res.ny, res.dy0_over_t * t, &[s, 1.0]);
    let data: Vec<f64> = grid.xs.iter().map(|&x| params.a(x)).collect();
    let sol = solve_strip(p, &data, &grid, cfg)?;
    let is_row = grid.row_of(s).expect("probe row present");
    let i1_row = grid.row_of(1.0).expect("unit row present");
    let top = grid.ys.len() - 1;
    let top_vals: Vec<f64> = (0..grid.nx()).map(|j| sol.value(top, j)).collect();
    let hi = top_vals.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lo = top_vals.iter().copied().fold(f64::INFINITY, f64::min);
    let i_s = sol.row_integral(is_row);
    let i_1 = sol.row_integral(i1_row);
    Ok(StripRun {
        p,
        t,
        s,
        i_s,
        i_1,
        ratio: i_s / i_1,
        xi: sol.xi,
        top_oscillation: hi - lo,
        newton_steps: sol.newton_steps,
    })
}

/// Runs the strip problem at each `t` and checks the scaling of
/// `I_s / I_1`: between consecutive widths `t_a > t_b` the ratio must drop
/// by at least `(t_a/t_b)^{(1-λ̂)/2}`, half the predicted power.
pub fn verify_theorem_1_2(
    p: f64,
    ts: &[f64],
    res: &StripResolution,
    cfg: &SolverConfig,
) -> Result<(VerificationReport, Vec<StripRun>), WolffError> {
    let mut runs = Vec::new();
    for &t in ts {
        runs.push(strip_run(p, BumpParams::new(t)?, res, cfg)?);
    }
    let mut rep = VerificationReport::new(format!("strip scaling p={p}"));
    let lh = hat_lambda(p);
    for r in &runs {
        rep.at_most(format!("top oscillation t={}", r.t), r.top_oscillation, 1e-4, "flat limit at infinite height");
        rep.push(format!("I_s/I_1 t={}", r.t), r.ratio, f64::NAN, r.ratio.is_finite() && r.ratio > 0.0, "I_s <= c t^(1-hat lambda) I_1");
    }
    let mut sorted: Vec<&StripRun> = runs.iter().collect();
    sorted.sort_by(|a, b| b.t.total_cmp(&a.t));
    for w in sorted.windows(2) {
        let need = (w[0].t / w[1].t).powf(0.5 * (1.0 - lh));
        rep.at_least(
            format!("ratio drop t={} -> t={}", w[0].t, w[1].t),
            w[0].ratio / w[1].ratio,
            need,
            "I_s <= c t^(1-hat lambda) I_1",
        );
    }
    Ok((rep, runs))
}

/// Resolution of the triangle and disk meshes used to build `V`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TheoremAResolution {
    /// Angular intervals per sector (even).
    pub m: usize,
    /// Ring spacing at the rim as a fraction of `bt`.
    pub h_min_over_bt: f64,
    pub growth: f64,
    /// Cap on the ring spacing, in units of the angular spacing at the rim.
    pub h_max_over_ds: f64,
    /// Layers between the unit circle and the base of the triangle.
    pub tail_layers: usize,
}

impl Default for TheoremAResolution {
    fn default() -> Self {
        TheoremAResolution {
            m: 512,
            h_min_over_bt: 0.125,
            growth: 1.08,
            h_max_over_ds: 16.0,
            tail_layers: 24,
        }
    }
}

/// Metrics of the disk function `V` for one `N`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TheoremAReport {
    pub n: usize,
    pub p: f64,
    pub t: f64,
    pub b: f64,
    pub v0: f64,
    /// `∫ V(e^{iθ}) dθ` over the full circle.
    pub integral: f64,
    /// `∫ |∇V|^p` over the disk.
    pub energy: f64,
    /// Largest difference quotient of the boundary trace.
    pub lipschitz: f64,
    /// Largest difference between the trace and its rotation by `2π/N`.
    pub periodicity_defect: f64,
    pub sup_abs: f64,
    /// Value of the disk solution at the center, `v̆(i)`.
    pub center_value: f64,
    /// `∫ v₁ |dz|` over the arc of the unit circle inside the triangle.
    pub arc_integral: f64,
    /// `max (v₁ - v̆)` over the shared nodes inside the unit disk.
    pub comparison_defect: f64,
}

/// Output of [`construct_v`].
#[derive(Debug, Clone)]
pub struct TheoremARun {
    pub report: TheoremAReport,
    /// `V` on the disk grid.
    pub field: DiskSolution,
    /// Boundary trace of `V` over one sector.
    pub trace: Vec<f64>,
    /// `v₁` at the triangle nodes, apex first, then row by row.
    pub v1: Vec<f64>,
    pub triangle_coords: Vec<[f64; 2]>,
}

/// Half-width `b` of the triangle base for which the sides meet the unit
/// circle around the apex at angles `-π/2 ± π/N`:
/// `arctan(b/(1+bt)) = π/N`.
pub fn base_half_width(n: usize, t: f64) -> Result<f64, WolffError> {
    if n < 3 {
        return Err(WolffError::InvalidN(n));
    }
    let k = (PI / n as f64).tan();
    if t * k >= 1.0 {
        return Err(WolffError::Geometry(format!("t tan(pi/N) = {} >= 1", t * k)));
    }
    Ok(k / (1.0 - t * k))
}

/// Build `V = v̆(i) - v̆(· + i)` for `p > 2` and sector count `N >= 8`.
/// Coordinates are centered at the apex `i` of the triangle.
pub fn construct_v(
    p: f64,
    n: usize,
    t: f64,
    res: &TheoremAResolution,
    cfg: &SolverConfig,
) -> Result<TheoremARun, WolffError> {
    if !(p.is_finite() && p > 2.0) {
        return Err(WolffError::InvalidP(p));
    }
    if n < 8 {
        return Err(WolffError::InvalidN(n));
    }
    let params = BumpParams::new(t)?;
    if res.m < 16 || res.m % 2 != 0 {
        return Err(SolverError::GridTooSmall(format!("m = {}", res.m)).into());
    }
    let b = base_half_width(n, t)?;
    let bt = b * t;
    let m = res.m;
    let half = PI / n as f64;
    let theta0 = -FRAC_PI_2 - half;
    let dtheta = 2.0 * half / m as f64;
    let ds = dtheta;
    let grid = PolarGrid::rim_geometric(res.h_min_over_bt * bt, res.growth, (res.h_max_over_ds * ds).max(res.h_min_over_bt * bt), n * m)
        .with_sectors(n)
        .with_theta0(theta0);
    grid.validate()?;
    let angles: Vec<f64> = (0..=m).map(|j| theta0 + j as f64 * dtheta).collect();

    // Triangle: rings shared with the disk, then layers down to the base.
    let depth = 1.0 + bt;
    let base_rho = |phi: f64| depth / (phi + FRAC_PI_2).cos();
    let mut rows: Vec<Vec<[f64; 2]>> = grid
        .radii
        .iter()
        .map(|&r| angles.iter().map(|&a| [r * a.cos(), r * a.sin()]).collect())
        .collect();
    let k_tail = res.tail_layers.max(2);
    for k in 1..=k_tail {
        let sig = k as f64 / k_tail as f64;
        rows.push(
            angles
                .iter()
                .map(|&a| {
                    let rho = 1.0 + (base_rho(a) - 1.0) * sig;
                    [rho * a.cos(), rho * a.sin()]
                })
                .collect(),
        );
    }
    let patch = Patch {
        rows,
        periodic: false,
        apex: Some([0.0, 0.0]),
    };
    let mesh = patch.build();
    let n_rows = patch.rows.len();
    let mut fixed = vec![None; mesh.n_nodes()];
    fixed[0] = Some(0.0);
    for i in 0..n_rows {
        fixed[patch.node(i, 0)] = Some(0.0);
        fixed[patch.node(i, m)] = Some(0.0);
    }
    for j in 0..=m {
        let x = patch.rows[n_rows - 1][j][0];
        fixed[patch.node(n_rows - 1, j)] = Some(params.a(x / b));
    }
    let v1 = solve_mesh(&mesh, &fixed, p, None, cfg)?.values;

    // Trace on the unit circle and the disk problem.
    let rim = grid.n_r() - 1;
    let h: Vec<f64> = (0..m).map(|j| v1[patch.node(rim, j)]).collect();
    let disk = solve_disk(p, &h, &grid, cfg)?;
    let center = disk.center();
    let mut comparison_defect = f64::NEG_INFINITY;
    for i in 0..grid.n_r() {
        for j in 0..m {
            comparison_defect = comparison_defect.max(v1[patch.node(i, j)] - disk.value(i + 1, j));
        }
    }

    let values: Vec<f64> = disk.values.iter().map(|v| center - v).collect();
    let trace: Vec<f64> = h.iter().map(|v| center - v).collect();
    let energy = n as f64 * mesh_energy(&grid.mesh(), &values, p);
    let field = DiskSolution {
        grid: grid.clone(),
        p,
        values,
        energy,
        newton_steps: disk.newton_steps,
    };
    let full = field.trace();
    let integral = full.iter().sum::<f64>() * grid.dtheta();
    let nt = full.len();
    let lipschitz = (0..nt)
        .map(|j| (full[(j + 1) % nt] - full[j]).abs() / grid.dtheta())
        .fold(0.0, f64::max);
    let periodicity_defect = (0..nt).map(|j| (full[(j + m) % nt] - full[j]).abs()).fold(0.0, f64::max);
    let sup_abs = field.values.iter().fold(0.0f64, |s, v| s.max(v.abs()));
    let arc_integral = h.iter().sum::<f64>() * dtheta;
    let report = TheoremAReport {
        n,
        p,
        t,
        b,
        v0: field.center(),
        integral,
        energy,
        lipschitz,
        periodicity_defect,
        sup_abs,
        center_value: center,
        arc_integral,
        comparison_defect,
    };
    Ok(TheoremARun {
        report,
        field,
        trace,
        v1,
        triangle_coords: mesh.coords,
    })
}

/// Spread `max / min` of positive values; infinite if any is not positive.
fn spread(v: &[f64]) -> f64 {
    let lo = v.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if lo > 0.0 {
        hi / lo
    } else {
        f64::INFINITY
    }
}

/// Checks boundedness, exact periodicity, positive mean and the `N`
/// scalings of energy and Lipschitz norm over a set of runs. Returns the
/// report and the smallest constant `c₁` consistent with every run.
pub fn verify_theorem_a(reports: &[TheoremAReport], tol: f64) -> (VerificationReport, f64) {
    let mut rep = VerificationReport::new("disk function V");
    let mut c1: f64 = 0.0;
    for r in reports {
        let nf = r.n as f64;
        let tag = |s: &str| format!("{s} N={}", r.n);
        rep.push(tag("V(0)"), r.v0, 0.0, r.v0 == 0.0, "V(0) = 0");
        rep.at_most(tag("periodicity defect"), r.periodicity_defect, 0.0, "2pi/N periodic");
        rep.at_most(tag("sup |V|"), r.sup_abs, 2.0, "V bounded");
        rep.at_least(tag("integral of V"), r.integral, tol, "c1 * integral of V >= 1");
        rep.push(tag("energy / N^(p-1)"), r.energy / nf.powf(r.p - 1.0), f64::NAN, r.energy.is_finite(), "energy <= c1 N^(p-1)");
        rep.push(tag("Lipschitz / N"), r.lipschitz / nf, f64::NAN, r.lipschitz.is_finite(), "trace Lipschitz <= c1 N");
        let inv = if r.integral > 0.0 { 1.0 / r.integral } else { f64::INFINITY };
        c1 = c1.max(r.sup_abs).max(inv).max(r.energy / nf.powf(r.p - 1.0)).max(r.lipschitz / nf);
    }
    if reports.len() > 1 {
        let ints: Vec<f64> = reports.iter().map(|r| r.integral).collect();
        let en: Vec<f64> = reports.iter().map(|r| r.energy / (r.n as f64).powf(r.p - 1.0)).collect();
        let li: Vec<f64> = reports.iter().map(|r| r.lipschitz / r.n as f64).collect();
        rep.at_most("integral spread", spread(&ints), 10.0, "c1 * integral of V >= 1");
        rep.at_most("energy / N^(p-1) spread", spread(&en), 10.0, "energy <= c1 N^(p-1)");
        rep.at_most("Lipschitz / N spread", spread(&li), 10.0, "trace Lipschitz <= c1 N");
    }
    rep.push("c1", c1, f64::NAN, c1.is_finite(), "smallest consistent constant");
    (rep, c1)
}
