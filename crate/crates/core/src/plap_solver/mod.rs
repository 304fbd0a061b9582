//! Regularized p-Laplace solver. The discrete energy
//! `(1/p) Σ_T w_T (|∇u_T|² + ε²)^{p/2}` is minimized by damped Newton with an
//! Armijo line search while `ε` is continued down to its final value.

pub mod checks;
pub mod linearized;
pub mod mesh;

use std::f64::consts::PI;

use faer::linalg::solvers::Solve;
use faer::sparse::linalg::solvers::{Llt, SymbolicLlt};
use faer::sparse::{Pair, SparseColMat, SymbolicSparseColMat};
use faer::{Col, Side};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use mesh::{Element, Mesh, Patch};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SolverError {
    #[error("invalid exponent p = {0}")]
    InvalidP(f64),
    #[error("grid too small: {0}")]
    GridTooSmall(String),
    #[error("boundary data has {got} values, expected {expected}")]
    TraceLength { got: usize, expected: usize },
    #[error("boundary data is not finite")]
    NonFiniteData,
    #[error("sparse factorization failed at eps = {eps}")]
    Factorization { eps: f64 },
    #[error("line search stagnated at eps = {eps} with step {step:e}")]
    NewtonStagnation { eps: f64, step: f64 },
    #[error("Newton did not converge at eps = {eps} after {steps} steps")]
    NonConvergence { eps: f64, steps: usize },
    #[error("field is constant on the fit window")]
    DegenerateFit,
    #[error("vanishing gradient of the linearization point at node {0}")]
    SingularGradient(usize),
    #[error("linear solve failed")]
    LinearSolve,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolverConfig {
    pub eps_start: f64,
    pub eps_end: f64,
    pub eps_factor: f64,
    /// Max-norm step size at which Newton stops on the final level.
    pub tol: f64,
    /// Same, for intermediate continuation levels.
    pub tol_intermediate: f64,
    pub max_newton: usize,
    pub armijo: f64,
    pub max_backtracks: usize,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            eps_start: 1e-1,
            eps_end: 1e-8,
            eps_factor: 10.0,
            tol: 1e-10,
            tol_intermediate: 1e-6,
            max_newton: 60,
            armijo: 1e-4,
            max_backtracks: 50,
        }
    }
}

impl SolverConfig {
    pub fn eps_levels(&self) -> Vec<f64> {
        let mut v = vec![self.eps_start];
        let mut e = self.eps_start;
        while e > self.eps_end * (1.0 + 1e-12) {
            e = (e / self.eps_factor).max(self.eps_end);
            v.push(e);
        }
        v
    }
}

/// Result of a solve on an arbitrary mesh.
#[derive(Debug, Clone)]
pub struct NodalSolve {
    pub values: Vec<f64>,
    pub newton_steps: usize,
    /// Regularized energy after every accepted step, one list per `ε` level.
    pub energy_history: Vec<(f64, Vec<f64>)>,
}

fn check_p(p: f64) -> Result<(), SolverError> {
    if p.is_finite() && p > 1.0 {
        Ok(())
    } else {
        Err(SolverError::InvalidP(p))
    }
}

#[inline]
fn elem_grad(e: &Element, u: &[f64]) -> [f64; 2] {
    let mut g = [0.0; 2];
    for k in 0..3 {
        let v = u[e.nodes[k]];
        g[0] += v * e.grad[k][0];
        g[1] += v * e.grad[k][1];
    }
    g
}

/// `(1/p) Σ w (|∇u|² + ε²)^{p/2}`.
pub fn regularized_energy(mesh: &Mesh, u: &[f64], p: f64, eps: f64) -> f64 {
    let e2 = eps * eps;
    mesh.elements
        .iter()
        .map(|e| {
            let g = elem_grad(e, u);
            e.weight * (g[0] * g[0] + g[1] * g[1] + e2).powf(0.5 * p)
        })
        .sum::<f64>()
        / p
}

/// `Σ w |∇u|^p`.
pub fn mesh_energy(mesh: &Mesh, u: &[f64], p: f64) -> f64 {
    mesh.elements
        .iter()
        .map(|e| {
            let g = elem_grad(e, u);
            e.weight * (g[0] * g[0] + g[1] * g[1]).powf(0.5 * p)
        })
        .sum()
}

/// Discrete weak residual `∫ (|∇u|²+ε²)^{(p-2)/2} ∇u·∇η_k` for every node,
/// divided by the integral of the hat function `η_k`.
pub fn nodal_residual(mesh: &Mesh, u: &[f64], p: f64, eps: f64) -> Vec<f64> {
    let mut r = vec![0.0; mesh.n_nodes()];
    let e2 = eps * eps;
    for e in &mesh.elements {
        let g = elem_grad(e, u);
        let a = (g[0] * g[0] + g[1] * g[1] + e2).powf(0.5 * p - 1.0);
        for k in 0..3 {
            r[e.nodes[k]] += e.weight * a * (g[0] * e.grad[k][0] + g[1] * e.grad[k][1]);
        }
    }
    for (v, m) in r.iter_mut().zip(&mesh.mass) {
        *v /= *m;
    }
    r
}

struct System<'a> {
    mesh: &'a Mesh,
    dof: Vec<usize>,
    n: usize,
    sym: SymbolicSparseColMat<usize>,
    argsort: faer::sparse::Argsort<usize>,
    llt: SymbolicLlt<usize>,
}

const FIXED: usize = usize::MAX;

impl<'a> System<'a> {
    fn new(mesh: &'a Mesh, fixed: &[Option<f64>]) -> Result<Self, SolverError> {
        let mut dof = vec![FIXED; mesh.n_nodes()];
        let mut n = 0;
        for (i, f) in fixed.iter().enumerate() {
            if f.is_none() {
                dof[i] = n;
                n += 1;
            }
        }
        if n == 0 {
            return Err(SolverError::GridTooSmall("no free nodes".into()));
        }
        let mut pairs = Vec::with_capacity(mesh.elements.len() * 6);
        for e in &mesh.elements {
            Self::for_pairs(&dof, e, |a, b, _, _| pairs.push(Pair { row: a, col: b }));
        }
        let (sym, argsort) = SymbolicSparseColMat::try_new_from_indices(n, n, &pairs)
            .map_err(|_| SolverError::Factorization { eps: f64::NAN })?;
        let llt = SymbolicLlt::try_new(sym.as_ref(), Side::Lower)
            .map_err(|_| SolverError::Factorization { eps: f64::NAN })?;
        Ok(System {
            mesh,
            dof,
            n,
            sym,
            argsort,
            llt,
        })
    }

    /// Visit the lower-triangle pairs of free dofs of an element in a fixed
    /// order: `(row, col, local_row, local_col)`.
    #[inline]
    fn for_pairs(dof: &[usize], e: &Element, mut f: impl FnMut(usize, usize, usize, usize)) {
        for a in 0..3 {
            let da = dof[e.nodes[a]];
            if da == FIXED {
                continue;
            }
            for b in 0..3 {
                let db = dof[e.nodes[b]];
                if db == FIXED || db > da || (db == da && b != a) {
                    continue;
                }
                f(da, db, a, b);
            }
        }
    }

    /// Gradient and Hessian values (in pattern order) of the regularized
    /// energy.
    fn assemble(&self, u: &[f64], p: f64, eps: f64) -> (Vec<f64>, Vec<f64>) {
        let mut grad = vec![0.0; self.n];
        let mut vals = Vec::with_capacity(self.mesh.elements.len() * 6);
        let e2 = eps * eps;
        for e in &self.mesh.elements {
            let g = elem_grad(e, u);
            let s = g[0] * g[0] + g[1] * g[1] + e2;
            let a = s.powf(0.5 * p - 1.0);
            let b = if p == 2.0 || s == 0.0 { 0.0 } else { (p - 2.0) * a / s };
            let gb = [
                g[0] * e.grad[0][0] + g[1] * e.grad[0][1],
                g[0] * e.grad[1][0] + g[1] * e.grad[1][1],
                g[0] * e.grad[2][0] + g[1] * e.grad[2][1],
            ];
            for k in 0..3 {
                let d = self.dof[e.nodes[k]];
                if d != FIXED {
                    grad[d] += e.weight * a * gb[k];
                }
            }
            let w = e.weight;
            Self::for_pairs(&self.dof, e, |_, _, ka, kb| {
                let bb = e.grad[ka][0] * e.grad[kb][0] + e.grad[ka][1] * e.grad[kb][1];
                vals.push(w * (a * bb + b * gb[ka] * gb[kb]));
            });
        }
        (grad, vals)
    }

    /// Gradient, Hessian values and absolute row sums of the quadratic
    /// energy `½ Σ w ∇uᵀ A_T ∇u`.
    fn assemble_quadratic(&self, u: &[f64], coeffs: &[[[f64; 2]; 2]]) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
        let mut grad = vec![0.0; self.n];
        let mut rows = vec![0.0; self.n];
        let mut vals = Vec::with_capacity(self.mesh.elements.len() * 6);
        for (e, a) in self.mesh.elements.iter().zip(coeffs) {
            let w = e.weight;
            let k = |ka: usize, kb: usize| {
                let (ga, gb) = (e.grad[ka], e.grad[kb]);
                w * (ga[0] * (a[0][0] * gb[0] + a[0][1] * gb[1]) + ga[1] * (a[1][0] * gb[0] + a[1][1] * gb[1]))
            };
            for ka in 0..3 {
                let d = self.dof[e.nodes[ka]];
                if d == FIXED {
                    continue;
                }
                for kb in 0..3 {
                    let kab = k(ka, kb);
                    let ub = u[e.nodes[kb]];
                    grad[d] += kab * ub;
                    rows[d] += (kab * ub).abs();
                }
            }
            Self::for_pairs(&self.dof, e, |_, _, ka, kb| vals.push(k(ka, kb)));
        }
        (grad, vals, rows)
    }

    fn newton_direction(&self, grad: &[f64], vals: &[f64], eps: f64) -> Result<Vec<f64>, SolverError> {
        let fail = SolverError::Factorization { eps };
        let mat = SparseColMat::new_from_argsort(self.sym.clone(), &self.argsort, vals).map_err(|_| fail.clone())?;
        let llt = Llt::try_new_with_symbolic(self.llt.clone(), mat.as_ref(), Side::Lower).map_err(|_| fail.clone())?;
        let rhs = Col::<f64>::from_fn(self.n, |i| -grad[i]);
        let x = llt.solve(&rhs);
        let out: Vec<f64> = (0..self.n).map(|i| x[i]).collect();
        if out.iter().all(|v| v.is_finite()) {
            Ok(out)
        } else {
            Err(fail)
        }
    }

    fn apply(&self, u: &[f64], dir: &[f64], t: f64) -> Vec<f64> {
        let mut v = u.to_vec();
        for (node, &d) in self.dof.iter().enumerate() {
            if d != FIXED {
                v[node] += t * dir[d];
            }
        }
        v
    }
}

/// Relative energy change treated as round-off.
pub const ENERGY_ROUNDOFF: f64 = 1e-12;

/// Minimize the regularized energy on `mesh` with the given Dirichlet values.
pub fn solve_mesh(
    mesh: &Mesh,
    fixed: &[Option<f64>],
    p: f64,
    init: Option<&[f64]>,
    cfg: &SolverConfig,
) -> Result<NodalSolve, SolverError> {
    check_p(p)?;
    if fixed.iter().flatten().any(|v| !v.is_finite()) {
        return Err(SolverError::NonFiniteData);
    }
    faer::set_global_parallelism(faer::Par::Seq);
    let sys = System::new(mesh, fixed)?;
    let mut u: Vec<f64> = match init {
        Some(v) => v.to_vec(),
        None => vec![0.0; mesh.n_nodes()],
    };
    for (i, f) in fixed.iter().enumerate() {
        if let Some(v) = f {
            u[i] = *v;
        }
    }
    let mut steps = 0;
    let mut history = Vec::new();
    if init.is_none() || p == 2.0 {
        // Quadratic problem: one Newton step is exact.
        let (g, h) = sys.assemble(&u, 2.0, 0.0);
        let d = sys.newton_direction(&g, &h, 0.0)?;
        u = sys.apply(&u, &d, 1.0);
        steps += 1;
        if p == 2.0 {
            history.push((0.0, vec![regularized_energy(mesh, &u, 2.0, 0.0)]));
            return Ok(NodalSolve {
                values: u,
                newton_steps: steps,
                energy_history: history,
            });
        }
    }
    let scale = fixed.iter().flatten().fold(1.0f64, |m, v| m.max(v.abs()));
    let levels = cfg.eps_levels();
    for (li, &eps) in levels.iter().enumerate() {
        let last = li + 1 == levels.len();
        let tol = scale * if last { cfg.tol } else { cfg.tol_intermediate };
        let mut energy = regularized_energy(mesh, &u, p, eps);
        let mut hist = vec![energy];
        let mut done = false;
        // Full steps once the energy can no longer resolve the line search.
        let mut pure = false;
        let mut prev_size = f64::INFINITY;
        for _ in 0..cfg.max_newton {
            let (g, h) = sys.assemble(&u, p, eps);
            let d = sys.newton_direction(&g, &h, eps)?;
            steps += 1;
            let size = d.iter().fold(0.0f64, |m, v| m.max(v.abs()));
            if size <= tol {
                done = true;
                break;
            }
            if pure {
                if size >= prev_size {
                    // Round-off floor.
                    done = true;
                    break;
                }
                let trial = sys.apply(&u, &d, 1.0);
                let e1 = regularized_energy(mesh, &trial, p, eps);
                if e1 > energy + ENERGY_ROUNDOFF * energy.abs() {
                    done = true;
                    break;
                }
                u = trial;
                energy = e1;
                hist.push(energy);
                prev_size = size;
                continue;
            }
            let slope: f64 = g.iter().zip(&d).map(|(a, b)| a * b).sum();
            let mut t = 1.0;
            let mut accepted = false;
            for _ in 0..cfg.max_backtracks {
                let trial = sys.apply(&u, &d, t);
                let e1 = regularized_energy(mesh, &trial, p, eps);
                if e1 <= energy + cfg.armijo * t * slope.min(0.0) {
                    u = trial;
                    energy = e1;
                    hist.push(e1);
                    accepted = true;
                    break;
                }
                t *= 0.5;
            }
            // Below this decrement the energy no longer resolves the step.
            let flat = -slope <= 1e-13 * energy.abs();
            if flat {
                pure = true;
                prev_size = if accepted { size } else { f64::INFINITY };
                continue;
            }
            if !accepted && size * t <= tol {
                done = true;
                break;
            }
            if !accepted {
                return Err(SolverError::NewtonStagnation { eps, step: size });
            }
        }
        history.push((eps, hist));
        if !done && pure {
            done = true;
        }
        if !done {
            return Err(SolverError::NonConvergence { eps, steps });
        }
    }
    Ok(NodalSolve {
        values: u,
        newton_steps: steps,
        energy_history: history,
    })
}

/// Solve the linear problem `∇·(A∇u) = 0` with one symmetric coefficient
/// matrix per element. Returns the nodal values and the relative residual
/// `max |K u| / max Σ|K_ij u_j|` over free rows.
pub fn solve_linear_mesh(
    mesh: &Mesh,
    coeffs: &[[[f64; 2]; 2]],
    fixed: &[Option<f64>],
) -> Result<(Vec<f64>, f64), SolverError> {
    if coeffs.len() != mesh.elements.len() {
        return Err(SolverError::TraceLength {
            got: coeffs.len(),
            expected: mesh.elements.len(),
        });
    }
    if fixed.iter().flatten().any(|v| !v.is_finite()) {
        return Err(SolverError::NonFiniteData);
    }
    faer::set_global_parallelism(faer::Par::Seq);
    let sys = System::new(mesh, fixed)?;
    let mut u: Vec<f64> = fixed.iter().map(|f| f.unwrap_or(0.0)).collect();
    let (g, h, _) = sys.assemble_quadratic(&u, coeffs);
    let d = sys.newton_direction(&g, &h, 0.0).map_err(|_| SolverError::LinearSolve)?;
    u = sys.apply(&u, &d, 1.0);
    let (g, _, rows) = sys.assemble_quadratic(&u, coeffs);
    let scale = rows.iter().fold(0.0f64, |m, v| m.max(*v));
    let res = g.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let rel = if scale > 0.0 { res / scale } else { res };
    Ok((u, rel))
}

/// Polar grid on the unit disk: an origin node plus `n_r` rings, the last of
/// which is the boundary. Angular nodes are uniform; with `sectors = N > 1`
/// only one sector of width `2π/N` is stored and closed periodically.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolarGrid {
    /// Ring radii `r_1 < ... < r_{n_r} = 1`.
    pub radii: Vec<f64>,
    /// Angular nodes on the full circle.
    pub n_theta: usize,
    pub sectors: usize,
    /// Angle of the first node.
    pub theta0: f64,
}

/// Default spacing ratio between the innermost and outermost radial cells.
pub const DEFAULT_GRADING: f64 = 2.0;

impl PolarGrid {
    /// `n_r` rings from the map `r = s + c s(1-s)`, `c = (g-1)/(g+1)`, whose
    /// spacing shrinks by the factor `g` from the center to the rim.
    pub fn graded(n_r: usize, n_theta: usize, grading: f64) -> Self {
        let c = (grading - 1.0) / (grading + 1.0);
        let radii = (1..=n_r)
            .map(|i| {
                let s = i as f64 / n_r as f64;
                if i == n_r {
                    1.0
                } else {
                    s + c * s * (1.0 - s)
                }
            })
            .collect();
        PolarGrid {
            radii,
            n_theta,
            sectors: 1,
            theta0: 0.0,
        }
    }

    /// Rings packed toward the rim: spacing `h_min` at `r = 1` growing by
    /// `growth` per ring up to `h_max`.
    pub fn rim_geometric(h_min: f64, growth: f64, h_max: f64, n_theta: usize) -> Self {
        let mut radii = vec![1.0];
        let mut h = h_min;
        let mut r = 1.0;
        while r - h > 0.75 * h {
            r -= h;
            radii.push(r);
            h = (h * growth).min(h_max);
        }
        radii.reverse();
        PolarGrid {
            radii,
            n_theta,
            sectors: 1,
            theta0: 0.0,
        }
    }

    pub fn with_sectors(mut self, n: usize) -> Self {
        self.sectors = n;
        self
    }

    pub fn with_theta0(mut self, theta0: f64) -> Self {
        self.theta0 = theta0;
        self
    }

    pub fn n_r(&self) -> usize {
        self.radii.len()
    }

    /// Angular nodes in the stored sector.
    pub fn sector_nodes(&self) -> usize {
        self.n_theta / self.sectors
    }

    pub fn dtheta(&self) -> f64 {
        2.0 * PI / self.n_theta as f64
    }

    /// Angles of the stored nodes, `θ_0 + j Δθ`.
    pub fn sector_angles(&self) -> Vec<f64> {
        (0..self.sector_nodes()).map(|j| self.theta0 + j as f64 * self.dtheta()).collect()
    }

    /// Angles of all nodes on the full circle.
    pub fn full_angles(&self) -> Vec<f64> {
        (0..self.n_theta).map(|j| self.theta0 + j as f64 * self.dtheta()).collect()
    }

    pub fn validate(&self) -> Result<(), SolverError> {
        if self.sectors == 0 || self.n_theta % self.sectors != 0 {
            return Err(SolverError::GridTooSmall(format!(
                "n_theta = {} is not divisible by N = {}",
                self.n_theta, self.sectors
            )));
        }
        if self.n_r() < 16 || self.n_theta < 32 || self.sector_nodes() < 4 {
            return Err(SolverError::GridTooSmall(format!(
                "n_r = {}, n_theta = {}, sector nodes = {}",
                self.n_r(),
                self.n_theta,
                self.sector_nodes()
            )));
        }
        let ok = self.radii.windows(2).all(|w| w[1] > w[0]) && self.radii[0] > 0.0 && *self.radii.last().unwrap() == 1.0;
        if !ok {
            return Err(SolverError::GridTooSmall("radii must increase from (0 to 1]".into()));
        }
        Ok(())
    }

    /// Structured patch centered at `center`.
    pub fn patch(&self, center: [f64; 2]) -> Patch {
        let m = self.sector_nodes();
        let dt = self.dtheta();
        let rows = self
            .radii
            .iter()
            .map(|&r| {
                (0..=m)
                    .map(|j| {
                        let t = self.theta0 + j as f64 * dt;
                        [center[0] + r * t.cos(), center[1] + r * t.sin()]
                    })
                    .collect()
            })
            .collect();
        Patch {
            rows,
            periodic: true,
            apex: Some(center),
        }
    }

    pub fn mesh(&self) -> Mesh {
        self.patch([0.0, 0.0]).build()
    }

    /// Node index of ring `i` (1-based, `0` is the origin) and angular index
    /// `j` (any integer, reduced modulo the sector).
    pub fn node(&self, i: usize, j: usize) -> usize {
        if i == 0 {
            0
        } else {
            let m = self.sector_nodes();
            1 + (i - 1) * m + j % m
        }
    }

    pub fn n_nodes(&self) -> usize {
        1 + self.n_r() * self.sector_nodes()
    }

    /// Radius of ring `i`, with `0` for the origin.
    pub fn radius(&self, i: usize) -> f64 {
        if i == 0 {
            0.0
        } else {
            self.radii[i - 1]
        }
    }

    /// Sample a function of `(x, y)` at every stored node.
    pub fn sample(&self, f: impl Fn(f64, f64) -> f64) -> Vec<f64> {
        let mut v = Vec::with_capacity(self.n_nodes());
        v.push(f(0.0, 0.0));
        let ang = self.sector_angles();
        for &r in &self.radii {
            for &t in &ang {
                v.push(f(r * t.cos(), r * t.sin()));
            }
        }
        v
    }
}

/// Field on a [`PolarGrid`].
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DiskSolution {
    pub grid: PolarGrid,
    pub p: f64,
    pub values: Vec<f64>,
    /// `∫ |∇u|^p` over the whole disk.
    pub energy: f64,
    pub newton_steps: usize,
}

impl DiskSolution {
    pub fn center(&self) -> f64 {
        self.values[0]
    }

    /// Values on ring `i` (1-based) over the stored sector.
    pub fn ring(&self, i: usize) -> &[f64] {
        let m = self.grid.sector_nodes();
        let start = self.grid.node(i, 0);
        &self.values[start..start + m]
    }

    /// Values on ring `i` over the full circle.
    pub fn full_ring(&self, i: usize) -> Vec<f64> {
        let r = self.ring(i);
        (0..self.grid.n_theta).map(|j| r[j % r.len()]).collect()
    }

    pub fn trace(&self) -> Vec<f64> {
        self.full_ring(self.grid.n_r())
    }

    pub fn value(&self, i: usize, j: usize) -> f64 {
        self.values[self.grid.node(i, j)]
    }

    /// Rows `(r, θ, value)` over the full disk, `θ` varying fastest; the
    /// origin appears once.
    pub fn rows(&self) -> Vec<[f64; 3]> {
        let mut out = vec![[0.0, self.grid.theta0, self.center()]];
        let ang = self.grid.full_angles();
        for i in 1..=self.grid.n_r() {
            let r = self.grid.radius(i);
            for (j, &t) in ang.iter().enumerate() {
                out.push([r, t, self.value(i, j)]);
            }
        }
        out
    }
}

fn disk_constraints(grid: &PolarGrid, trace: &[f64]) -> Vec<Option<f64>> {
    let mut fixed = vec![None; grid.n_nodes()];
    let n_r = grid.n_r();
    for (j, &v) in trace.iter().enumerate() {
        fixed[grid.node(n_r, j)] = Some(v);
    }
    fixed
}

/// Solve the Dirichlet problem on the unit disk. `trace` holds the boundary
/// values at the stored sector nodes.
pub fn solve_disk(p: f64, trace: &[f64], grid: &PolarGrid, cfg: &SolverConfig) -> Result<DiskSolution, SolverError> {
    solve_disk_from(p, trace, grid, None, cfg)
}

/// [`solve_disk`] with an initial guess.
pub fn solve_disk_from(
    p: f64,
    trace: &[f64],
    grid: &PolarGrid,
    init: Option<&[f64]>,
    cfg: &SolverConfig,
) -> Result<DiskSolution, SolverError> {
    check_p(p)?;
    grid.validate()?;
    if trace.len() != grid.sector_nodes() {
        return Err(SolverError::TraceLength {
            got: trace.len(),
            expected: grid.sector_nodes(),
        });
    }
    let mesh = grid.mesh();
    let fixed = disk_constraints(grid, trace);
    let sol = solve_mesh(&mesh, &fixed, p, init, cfg)?;
    let energy = grid.sectors as f64 * mesh_energy(&mesh, &sol.values, p);
    Ok(DiskSolution {
        grid: grid.clone(),
        p,
        values: sol.values,
        energy,
        newton_steps: sol.newton_steps,
    })
}

/// `∫ |∇u|^p` of nodal values on a polar grid.
pub fn discrete_energy(values: &[f64], grid: &PolarGrid, p: f64) -> f64 {
    grid.sectors as f64 * mesh_energy(&grid.mesh(), values, p)
}

/// Largest normalized weak residual over interior nodes with radius in
/// `[r_lo, r_hi]`.
pub fn weak_residual(values: &[f64], grid: &PolarGrid, p: f64, eps: f64, window: (f64, f64)) -> f64 {
    let mesh = grid.mesh();
    let r = nodal_residual(&mesh, values, p, eps);
    let mut worst: f64 = 0.0;
    for i in 1..grid.n_r() {
        let rad = grid.radius(i);
        if rad < window.0 || rad > window.1 {
            continue;
        }
        for j in 0..grid.sector_nodes() {
            worst = worst.max(r[grid.node(i, j)].abs());
        }
    }
    worst
}

/// Grid on the periodic strip `[-P/2, P/2) × [0, Y]`, with `x` nodes
/// clustered around `x = 0`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StripGrid {
    pub period: f64,
    pub xs: Vec<f64>,
    pub ys: Vec<f64>,
}

impl StripGrid {
    /// `nx` columns from `x = P(ξ - β sin(2πξ)/(2π))`, `ξ` uniform; `ny`
    /// rows growing geometrically from `dy0` to the height, plus the
    /// `required` levels.
    pub fn new(period: f64, nx: usize, cluster: f64, height: f64, ny: usize, dy0: f64, required: &[f64]) -> Self {
        let xs = (0..nx)
            .map(|j| {
                let xi = -0.5 + j as f64 / nx as f64;
                period * (xi - cluster * (2.0 * PI * xi).sin() / (2.0 * PI))
            })
            .collect();
        let sum = |q: f64| {
            if (q - 1.0).abs() < 1e-12 {
                dy0 * ny as f64
            } else {
                dy0 * (q.powi(ny as i32) - 1.0) / (q - 1.0)
            }
        };
        let (mut lo, mut hi) = (1.0, 2.0);
        while sum(hi) < height {
            hi *= 2.0;
        }
        if sum(lo) < height {
            for _ in 0..200 {
                let mid = 0.5 * (lo + hi);
                if sum(mid) < height {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
        }
        let q = 0.5 * (lo + hi);
        let mut ys = vec![0.0];
        let mut h = dy0;
        for _ in 0..ny {
            let y = (ys.last().unwrap() + h).min(height);
            ys.push(y);
            h *= q;
        }
        *ys.last_mut().unwrap() = height;
        for &r in required {
            if r <= 0.0 || r >= height {
                continue;
            }
            let k = ys.partition_point(|&y| y < r);
            let gap = ys[k] - ys[k - 1];
            if (ys[k] - r).abs() < 0.3 * gap && k + 1 < ys.len() {
                ys[k] = r;
            } else if (r - ys[k - 1]).abs() < 0.3 * gap && k > 1 {
                ys[k - 1] = r;
            } else {
                ys.insert(k, r);
            }
        }
        StripGrid { period, xs, ys }
    }

    pub fn nx(&self) -> usize {
        self.xs.len()
    }

    pub fn node(&self, i: usize, j: usize) -> usize {
        i * self.nx() + j % self.nx()
    }

    pub fn patch(&self) -> Patch {
        let rows = self
            .ys
            .iter()
            .map(|&y| {
                let mut row: Vec<[f64; 2]> = self.xs.iter().map(|&x| [x, y]).collect();
                row.push([self.xs[0] + self.period, y]);
                row
            })
            .collect();
        Patch {
            rows,
            periodic: true,
            apex: None,
        }
    }

    /// Trapezoid weights of the periodic `x` nodes.
    pub fn x_weights(&self) -> Vec<f64> {
        let n = self.nx();
        (0..n)
            .map(|j| {
                let left = if j == 0 { self.xs[n - 1] - self.period } else { self.xs[j - 1] };
                let right = if j + 1 == n { self.xs[0] + self.period } else { self.xs[j + 1] };
                0.5 * (right - left)
            })
            .collect()
    }

    pub fn row_of(&self, y: f64) -> Option<usize> {
        self.ys.iter().position(|&v| (v - y).abs() <= 1e-12 * (1.0 + y.abs()))
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StripSolution {
    pub grid: StripGrid,
    pub p: f64,
    pub values: Vec<f64>,
    /// Mean over the top row, the limit value at infinite height.
    pub xi: f64,
    pub newton_steps: usize,
}

impl StripSolution {
    pub fn value(&self, i: usize, j: usize) -> f64 {
        self.values[self.grid.node(i, j)]
    }

    /// `∫ Ψ(x + i y_i) dx` over one period.
    pub fn row_integral(&self, i: usize) -> f64 {
        self.grid
            .x_weights()
            .iter()
            .enumerate()
            .map(|(j, w)| w * self.value(i, j))
            .sum()
    }
}

/// Periodic strip problem with Dirichlet data on `y = 0` and a free top.
pub fn solve_strip(p: f64, data: &[f64], grid: &StripGrid, cfg: &SolverConfig) -> Result<StripSolution, SolverError> {
    check_p(p)?;
    if grid.nx() < 32 || grid.ys.len() < 16 {
        return Err(SolverError::GridTooSmall(format!("{} x {}", grid.nx(), grid.ys.len())));
    }
    if data.len() != grid.nx() {
        return Err(SolverError::TraceLength {
            got: data.len(),
            expected: grid.nx(),
        });
    }
    let mesh = grid.patch().build();
    let mut fixed = vec![None; mesh.n_nodes()];
    for (j, &v) in data.iter().enumerate() {
        fixed[grid.node(0, j)] = Some(v);
    }
    let sol = solve_mesh(&mesh, &fixed, p, None, cfg)?;
    let top = grid.ys.len() - 1;
    let w = grid.x_weights();
    let xi = (0..grid.nx()).map(|j| w[j] * sol.values[grid.node(top, j)]).sum::<f64>() / grid.period;
    Ok(StripSolution {
        grid: grid.clone(),
        p,
        values: sol.values,
        xi,
        newton_steps: sol.newton_steps,
    })
}

/// Log-polar grid on a large upper half-disk, for data supported near 0.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HalfDiskGrid {
    pub radii: Vec<f64>,
    /// Angular intervals on `[0, π]`.
    pub n_angle: usize,
}

impl HalfDiskGrid {
    pub fn log_spaced(r_min: f64, r_max: f64, dlog: f64, n_angle: usize) -> Self {
        let n = ((r_max / r_min).ln() / dlog).ceil() as usize;
        let step = (r_max / r_min).ln() / n as f64;
        let radii = (0..=n).map(|k| r_min * (k as f64 * step).exp()).collect();
        HalfDiskGrid { radii, n_angle }
    }

    pub fn angle(&self, j: usize) -> f64 {
        PI * j as f64 / self.n_angle as f64
    }

    pub fn node(&self, i: usize, j: usize) -> usize {
        if i == 0 {
            0
        } else {
            1 + (i - 1) * (self.n_angle + 1) + j
        }
    }

    pub fn patch(&self) -> Patch {
        let rows = self
            .radii
            .iter()
            .map(|&r| {
                (0..=self.n_angle)
                    .map(|j| {
                        let t = self.angle(j);
                        [r * t.cos(), r * t.sin()]
                    })
                    .collect()
            })
            .collect();
        Patch {
            rows,
            periodic: false,
            apex: Some([0.0, 0.0]),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct HalfPlaneSolution {
    pub grid: HalfDiskGrid,
    pub p: f64,
    pub values: Vec<f64>,
    pub newton_steps: usize,
}

impl HalfPlaneSolution {
    /// Bilinear interpolation in `(log r, θ)`; zero beyond the outer radius.
    pub fn eval(&self, x: f64, y: f64) -> f64 {
        let g = &self.grid;
        let r = x.hypot(y);
        let t = y.atan2(x).clamp(0.0, PI);
        if r >= *g.radii.last().unwrap() {
            return 0.0;
        }
        let fj = t / PI * g.n_angle as f64;
        let j = (fj.floor() as usize).min(g.n_angle - 1);
        let wj = fj - j as f64;
        let ring = |i: usize| (1.0 - wj) * self.values[g.node(i, j)] + wj * self.values[g.node(i, j + 1)];
        if r <= g.radii[0] {
            let w = r / g.radii[0];
            return (1.0 - w) * self.values[0] + w * ring(1);
        }
        let k = g.radii.partition_point(|&v| v <= r);
        let (r0, r1) = (g.radii[k - 1], g.radii[k]);
        let w = (r / r0).ln() / (r1 / r0).ln();
        (1.0 - w) * ring(k) + w * ring(k + 1)
    }
}

/// p-harmonic function in the upper half-plane with boundary values
/// `data(x)` (supported in `|x| < t_support`) and limit zero at infinity,
/// computed on a half-disk of radius `t_support * 1e6`.
pub fn solve_halfplane(
    p: f64,
    data: impl Fn(f64) -> f64,
    t_support: f64,
    cfg: &SolverConfig,
) -> Result<HalfPlaneSolution, SolverError> {
    check_p(p)?;
    let grid = HalfDiskGrid::log_spaced(1e-2 * t_support, 1e6 * t_support, 0.05, 64);
    let mesh = grid.patch().build();
    let mut fixed = vec![None; mesh.n_nodes()];
    fixed[0] = Some(data(0.0));
    let n_ring = grid.radii.len();
    for i in 1..=n_ring {
        let r = grid.radii[i - 1];
        fixed[grid.node(i, 0)] = Some(data(r));
        fixed[grid.node(i, grid.n_angle)] = Some(data(-r));
    }
    for j in 0..=grid.n_angle {
        fixed[grid.node(n_ring, j)] = Some(0.0);
    }
    let sol = solve_mesh(&mesh, &fixed, p, None, cfg)?;
    Ok(HalfPlaneSolution {
        grid,
        p,
        values: sol.values,
        newton_steps: sol.newton_steps,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fourier_trace(grid: &PolarGrid) -> Vec<f64> {
        grid.sector_angles()
            .iter()
            .map(|t| 0.3 + (2.0 * t).cos() - 0.5 * (3.0 * t).sin())
            .collect()
    }

    #[test]
    fn harmonic_matches_fourier_extension() {
        let grid = PolarGrid::graded(64, 128, DEFAULT_GRADING);
        let sol = solve_disk(2.0, &fourier_trace(&grid), &grid, &SolverConfig::default()).unwrap();
        let exact = grid.sample(|x, y| {
            let (r, t) = (x.hypot(y), y.atan2(x));
            0.3 + r * r * (2.0 * t).cos() - 0.5 * r.powi(3) * (3.0 * t).sin()
        });
        let err = sol.values.iter().zip(&exact).fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
        assert!(err < 5e-3, "{err}");
    }

    #[test]
    fn energy_decreases_monotonically() {
        let grid = PolarGrid::graded(24, 64, DEFAULT_GRADING);
        let mesh = grid.mesh();
        let fixed = disk_constraints(&grid, &fourier_trace(&grid));
        for &p in &[1.5, 3.0] {
            let sol = solve_mesh(&mesh, &fixed, p, None, &SolverConfig::default()).unwrap();
            for (_, h) in &sol.energy_history {
                assert!(h.windows(2).all(|w| w[1] <= w[0] + ENERGY_ROUNDOFF * w[0].abs()));
            }
        }
    }

    #[test]
    fn constants_are_reproduced() {
        let grid = PolarGrid::graded(16, 32, DEFAULT_GRADING);
        let trace = vec![0.7; 32];
        let sol = solve_disk(3.0, &trace, &grid, &SolverConfig::default()).unwrap();
        assert!(sol.values.iter().all(|v| (v - 0.7).abs() < 1e-9));
    }

    #[test]
    fn sector_and_full_solves_agree() {
        let full = PolarGrid::graded(24, 96, DEFAULT_GRADING);
        let sect = full.clone().with_sectors(4);
        let f = |t: f64| (4.0 * t).cos() + 0.2 * (8.0 * t).sin();
        let cfg = SolverConfig::default();
        let a = solve_disk(3.0, &full.sector_angles().iter().map(|&t| f(t)).collect::<Vec<_>>(), &full, &cfg).unwrap();
        let b = solve_disk(3.0, &sect.sector_angles().iter().map(|&t| f(t)).collect::<Vec<_>>(), &sect, &cfg).unwrap();
        for i in 0..=full.n_r() {
            for j in 0..96 {
                assert!((a.value(i, j) - b.value(i, j)).abs() < 1e-8);
            }
        }
        assert!((a.energy - b.energy).abs() < 1e-8 * a.energy);
    }

    #[test]
    fn rejects_bad_grids() {
        let g = PolarGrid::graded(8, 32, 2.0);
        assert!(matches!(solve_disk(2.0, &[0.0; 32], &g, &SolverConfig::default()), Err(SolverError::GridTooSmall(_))));
        let g = PolarGrid::graded(16, 30, 2.0).with_sectors(4);
        assert!(matches!(g.validate(), Err(SolverError::GridTooSmall(_))));
        let g = PolarGrid::graded(16, 32, 2.0);
        assert!(matches!(solve_disk(0.5, &[0.0; 32], &g, &SolverConfig::default()), Err(SolverError::InvalidP(_))));
    }

    #[test]
    fn eps_levels_follow_schedule() {
        let l = SolverConfig::default().eps_levels();
        assert_eq!(l.len(), 8);
        assert!((l[7] - 1e-8).abs() < 1e-20);
    }
}
