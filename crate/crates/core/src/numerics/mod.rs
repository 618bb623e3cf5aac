//! Dense linear algebra and special functions shared by the rest of the crate.
//!
//! Matrices are `nalgebra::DMatrix<f64>`. The routines that the stability
//! filter depends on (matrix exponential, eigenvalues, discrete Lyapunov
//! solve) are implemented here rather than delegated, so the two sides of
//! the eigenvalue/Lyapunov equivalence stay independent of each other.

mod eigen;
mod expm;
mod jacobian;
mod lyapunov;
mod special;

pub use eigen::{spectrum, Spectrum};
pub use expm::{discretize_pair, mat_exp};
pub use jacobian::fd_jacobian;
pub use lyapunov::{cholesky_is_pd, solve_discrete_lyapunov, LyapunovSolution};
pub use special::{beta_quantile, ln_gamma, regularized_incomplete_beta};

use nalgebra::DMatrix;

use crate::error::{Error, Result};

pub type Matrix = DMatrix<f64>;
pub type Vector = nalgebra::DVector<f64>;
pub use nalgebra::Complex;

pub(crate) fn ensure_square(m: &Matrix) -> Result<usize> {
    if m.nrows() != m.ncols() {
        return Err(Error::NonSquare {
            rows: m.nrows(),
            cols: m.ncols(),
        });
    }
    Ok(m.nrows())
}

pub(crate) fn ensure_finite(m: &Matrix, what: &'static str) -> Result<()> {
    if m.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::NonFinite(what))
    }
}

/// Induced 2-norm (largest singular value).
pub fn norm2(m: &Matrix) -> f64 {
    if m.is_empty() {
        return 0.0;
    }
    m.clone()
        .svd(false, false)
        .singular_values
        .iter()
        .fold(0.0_f64, |acc, &s| acc.max(s))
}
