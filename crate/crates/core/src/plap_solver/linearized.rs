//! Coefficient matrices of the equation linearized at a homogeneous mode,
//! `A = |∇v|^{p-4} ((p-2) ∇v ∇vᵀ + |∇v|² I)`, and the linear solve on the
//! disk.

use serde::{Deserialize, Serialize};

use super::{disk_constraints, solve_linear_mesh, DiskSolution, PolarGrid, SolverError, StripGrid};
use crate::homogeneous::{SectorProfile, WolffMode};

pub type Matrix2 = [[f64; 2]; 2];

/// One symmetric 2×2 matrix per node.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoefficientField {
    pub coords: Vec<[f64; 2]>,
    pub a11: Vec<f64>,
    pub a12: Vec<f64>,
    pub a21: Vec<f64>,
    pub a22: Vec<f64>,
}

impl CoefficientField {
    fn from_matrices(coords: Vec<[f64; 2]>, m: &[Matrix2]) -> Self {
        CoefficientField {
            coords,
            a11: m.iter().map(|a| a[0][0]).collect(),
            a12: m.iter().map(|a| a[0][1]).collect(),
            a21: m.iter().map(|a| a[1][0]).collect(),
            a22: m.iter().map(|a| a[1][1]).collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.a11.len()
    }

    pub fn is_empty(&self) -> bool {
        self.a11.is_empty()
    }

    pub fn matrix(&self, i: usize) -> Matrix2 {
        [[self.a11[i], self.a12[i]], [self.a21[i], self.a22[i]]]
    }

    pub fn is_symmetric(&self) -> bool {
        self.a12 == self.a21
    }

    /// Largest eigenvalue ratio over nodes with a nonzero matrix.
    pub fn ellipticity_ratio(&self) -> f64 {
        (0..self.len())
            .filter_map(|i| {
                let (lo, hi) = eigenvalues(self.matrix(i));
                (hi > 0.0).then(|| hi / lo)
            })
            .fold(0.0, f64::max)
    }
}

/// Eigenvalues `(min, max)` of a symmetric 2×2 matrix.
pub fn eigenvalues(a: Matrix2) -> (f64, f64) {
    let m = 0.5 * (a[0][0] + a[1][1]);
    let d = (0.25 * (a[0][0] - a[1][1]).powi(2) + a[0][1] * a[1][0]).sqrt();
    (m - d, m + d)
}

/// Exact eigenvalue ratio of the linearized matrix, `max(p-1, 1/(p-1))`.
pub fn ellipticity_bound(p: f64) -> f64 {
    (p - 1.0).max(1.0 / (p - 1.0))
}

/// `|g|^{p-4} ((p-2) g gᵀ + |g|² I)`; `None` when `g = 0` and the limit
/// is not finite.
pub fn linearized_matrix(p: f64, g: [f64; 2]) -> Option<Matrix2> {
    let s = g[0] * g[0] + g[1] * g[1];
    if s == 0.0 {
        return if p == 2.0 {
            Some([[1.0, 0.0], [0.0, 1.0]])
        } else if p > 2.0 {
            Some([[0.0; 2]; 2])
        } else {
            None
        };
    }
    let w = s.powf(0.5 * p - 2.0);
    let off = w * (p - 2.0) * g[0] * g[1];
    Some([
        [w * (s + (p - 2.0) * g[0] * g[0]), off],
        [off, w * (s + (p - 2.0) * g[1] * g[1])],
    ])
}

/// Linearization of `r^λ φ(θ)` in the frame `(e_θ, -e_r)`:
/// `r^{(λ-1)(p-2)} (λ²φ² + φ'²)^{(p-4)/2}` times
/// `[[λ²φ² + (p-1)φ'², -(p-2)λφφ'], [-(p-2)λφφ', (p-1)λ²φ² + φ'²]]`.
pub fn polar_matrix(profile: &SectorProfile, r: f64, theta: f64) -> Matrix2 {
    let (p, l) = (profile.p, profile.lambda);
    let (phi, dphi) = profile.eval_extended(theta);
    let (a, b) = (l * l * phi * phi, dphi * dphi);
    let tau = r.powf((l - 1.0) * (p - 2.0)) * (a + b).powf(0.5 * p - 2.0);
    let off = -tau * (p - 2.0) * l * phi * dphi;
    [[tau * (a + (p - 1.0) * b), off], [off, tau * ((p - 1.0) * a + b)]]
}

/// Cartesian coefficients at every stored node of a polar grid.
pub fn disk_coefficients(profile: &SectorProfile, grid: &PolarGrid) -> Result<CoefficientField, SolverError> {
    let mut coords = vec![[0.0, 0.0]];
    let ang = grid.sector_angles();
    for &r in &grid.radii {
        for &t in &ang {
            coords.push([r * t.cos(), r * t.sin()]);
        }
    }
    let mats = coords
        .iter()
        .enumerate()
        .map(|(i, c)| {
            let (_, g) = profile.solution(c[0], c[1]);
            let g = if i == 0 { [0.0, 0.0] } else { g };
            if i > 0 && g == [0.0, 0.0] {
                return Err(SolverError::SingularGradient(i));
            }
            linearized_matrix(profile.p, g).ok_or(SolverError::SingularGradient(i))
        })
        .collect::<Result<Vec<_>, _>>()?;
    Ok(CoefficientField::from_matrices(coords, &mats))
}

/// Coefficients of the linearization of `e^{-γy} f(x)` on a strip grid.
/// With `unweighted` the common factor `e^{-γ(p-2)y}` is removed.
pub fn strip_coefficients(mode: &WolffMode, grid: &StripGrid, unweighted: bool) -> Result<CoefficientField, SolverError> {
    let mut coords = Vec::with_capacity(grid.xs.len() * grid.ys.len());
    let mut mats = Vec::with_capacity(coords.capacity());
    for &y in &grid.ys {
        for &x in &grid.xs {
            let (_, g) = mode.solution(x, y);
            let mut m = linearized_matrix(mode.p, g).ok_or(SolverError::SingularGradient(coords.len()))?;
            if g == [0.0, 0.0] {
                return Err(SolverError::SingularGradient(coords.len()));
            }
            if unweighted {
                let w = (mode.gamma * (mode.p - 2.0) * y).exp();
                for row in &mut m {
                    for v in row.iter_mut() {
                        *v *= w;
                    }
                }
            }
            coords.push([x, y]);
            mats.push(m);
        }
    }
    Ok(CoefficientField::from_matrices(coords, &mats))
}

/// Weak solution of `∇·(A∇ζ) = 0` on the disk with `A` averaged from the
/// nodal field over each element. Returns the field and the relative
/// linear residual.
pub fn solve_linearized_disk(
    coeff: &CoefficientField,
    trace: &[f64],
    grid: &PolarGrid,
) -> Result<(DiskSolution, f64), SolverError> {
    grid.validate()?;
    if coeff.len() != grid.n_nodes() {
        return Err(SolverError::TraceLength {
            got: coeff.len(),
            expected: grid.n_nodes(),
        });
    }
    if trace.len() != grid.sector_nodes() {
        return Err(SolverError::TraceLength {
            got: trace.len(),
            expected: grid.sector_nodes(),
        });
    }
    let mesh = grid.mesh();
    let per_elem: Vec<Matrix2> = mesh
        .elements
        .iter()
        .map(|e| {
            let mut m = [[0.0; 2]; 2];
            for &n in &e.nodes {
                let a = coeff.matrix(n);
                for i in 0..2 {
                    for j in 0..2 {
                        m[i][j] += a[i][j] / 3.0;
                    }
                }
            }
            m
        })
        .collect();
    let fixed = disk_constraints(grid, trace);
    let (values, residual) = solve_linear_mesh(&mesh, &per_elem, &fixed)?;
    let energy = grid.sectors as f64 * super::mesh_energy(&mesh, &values, 2.0);
    Ok((
        DiskSolution {
            grid: grid.clone(),
            p: 2.0,
            values,
            energy,
            newton_steps: 1,
        },
        residual,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::homogeneous::Branch;
    use std::f64::consts::PI;

    #[test]
    fn p2_gives_identity() {
        let g = [0.3, -1.2];
        let m = linearized_matrix(2.0, g).unwrap();
        assert_eq!(m, [[1.0, 0.0], [0.0, 1.0]]);
    }

    #[test]
    fn polar_form_is_rotated_cartesian_form() {
        let prof = SectorProfile::new(3.0, PI / 16.0, Branch::Positive).unwrap();
        for &(r, t) in &[(0.7, 0.05), (0.4, -0.1), (0.9, 0.3)] {
            let (x, y) = (r * f64::cos(t), r * f64::sin(t));
            let (_, g) = prof.solution(x, y);
            let c = linearized_matrix(3.0, g).unwrap();
            let pm = polar_matrix(&prof, r, t);
            // Columns of the frame (e_θ, -e_r).
            let e = [[-t.sin(), -t.cos()], [t.cos(), -t.sin()]];
            for i in 0..2 {
                for j in 0..2 {
                    let mut v = 0.0;
                    for k in 0..2 {
                        for l in 0..2 {
                            v += e[k][i] * c[k][l] * e[l][j];
                        }
                    }
                    assert!((v - pm[i][j]).abs() < 1e-9 * (1.0 + pm[i][j].abs()), "{v} {}", pm[i][j]);
                }
            }
        }
    }

    #[test]
    fn eigenvalue_ratio_is_p_minus_one() {
        for &p in &[1.5, 3.0, 5.0] {
            let m = linearized_matrix(p, [0.8, 0.3]).unwrap();
            let (lo, hi) = eigenvalues(m);
            assert!((hi / lo - ellipticity_bound(p)).abs() < 1e-12);
        }
    }
}
