//! Numerical experiments on p-harmonic functions in the plane: homogeneous
//! modes, a regularized Newton solver, boundary-layer constructions, lacunary
//! boundary series and p-harmonic measure estimates.

pub mod homogeneous;
pub mod report;
pub mod plap_solver;
pub mod wolff_construction;
pub mod gap_series;
pub mod pharmonic_measure;
