use super::{ensure_finite, ensure_square, Matrix, Vector};
use crate::error::{Error, Result};

const PIVOT_TOLERANCE: f64 = 1e-12;

/// Solution `M` of `GᵀMG − M = −Q` and whether it is positive definite.
#[derive(Debug, Clone, PartialEq)]
pub struct LyapunovSolution {
    pub m: Matrix,
    pub positive_definite: bool,
}

/// Solves the discrete Lyapunov equation through the `n²×n²` Kronecker
/// system `(Gᵀ⊗Gᵀ − I)·vec(M) = −vec(Q)`.
///
/// The solution is unique unless some eigenvalue product `λᵢλⱼ` equals one,
/// which is reported as [`Error::SingularLyapunov`].
pub fn solve_discrete_lyapunov(g: &Matrix, q: &Matrix) -> Result<LyapunovSolution> {
    let n = ensure_square(g)?;
    if q.nrows() != n || q.ncols() != n {
        return Err(Error::DimensionMismatch(format!(
            "G is {n}x{n} but Q is {}x{}",
            q.nrows(),
            q.ncols()
        )));
    }
    ensure_finite(g, "Lyapunov G")?;
    ensure_finite(q, "Lyapunov Q")?;
    if n == 0 {
        return Ok(LyapunovSolution {
            m: Matrix::zeros(0, 0),
            positive_definite: true,
        });
    }

    // column-major vec: vec(AXB) = (Bᵀ ⊗ A) vec(X), here A = Gᵀ and B = G
    let nn = n * n;
    let mut k = Matrix::zeros(nn, nn);
    for c1 in 0..n {
        for r1 in 0..n {
            let row = c1 * n + r1;
            for c2 in 0..n {
                let gc = g[(c2, c1)];
                for r2 in 0..n {
                    k[(row, c2 * n + r2)] = gc * g[(r2, r1)];
                }
            }
            k[(row, row)] -= 1.0;
        }
    }
    let rhs = Vector::from_iterator(nn, q.iter().map(|v| -v));

    let lu = k.full_piv_lu();
    let u = lu.u();
    let (min_pivot, max_pivot) = u
        .diagonal()
        .iter()
        .fold((f64::INFINITY, 0.0_f64), |(lo, hi), v| {
            (lo.min(v.abs()), hi.max(v.abs()))
        });
    if !(min_pivot > (nn as f64) * f64::EPSILON * max_pivot) {
        return Err(Error::SingularLyapunov);
    }
    let x = lu.solve(&rhs).ok_or(Error::SingularLyapunov)?;
    let m = Matrix::from_column_slice(n, n, x.as_slice());
    let m = (&m + m.transpose()) * 0.5;
    let positive_definite = cholesky_is_pd(&m);
    Ok(LyapunovSolution {
        m,
        positive_definite,
    })
}

/// Cholesky factorisation attempt; fails on any pivot at or below `1e-12`.
pub fn cholesky_is_pd(m: &Matrix) -> bool {
    let n = m.nrows();
    if n != m.ncols() {
        return false;
    }
    let mut l = Matrix::zeros(n, n);
    for j in 0..n {
        let mut d = m[(j, j)];
        for k in 0..j {
            d -= l[(j, k)] * l[(j, k)];
        }
        if !(d > PIVOT_TOLERANCE) {
            return false;
        }
        let d = d.sqrt();
        l[(j, j)] = d;
        for i in (j + 1)..n {
            let mut s = m[(i, j)];
            for k in 0..j {
                s -= l[(i, k)] * l[(j, k)];
            }
            l[(i, j)] = s / d;
        }
    }
    true
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn zero_dynamics_returns_q() {
        let sol = solve_discrete_lyapunov(&Matrix::zeros(3, 3), &Matrix::identity(3, 3)).unwrap();
        assert_relative_eq!(sol.m, Matrix::identity(3, 3), epsilon = 1e-15);
        assert!(sol.positive_definite);
    }

    #[test]
    fn scalar_stable() {
        let sol = solve_discrete_lyapunov(
            &Matrix::from_element(1, 1, 0.5),
            &Matrix::from_element(1, 1, 1.0),
        )
        .unwrap();
        assert_relative_eq!(sol.m[(0, 0)], 4.0 / 3.0, epsilon = 1e-14);
        assert!(sol.positive_definite);
    }

    #[test]
    fn scalar_unstable() {
        let sol = solve_discrete_lyapunov(
            &Matrix::from_element(1, 1, 2.0),
            &Matrix::from_element(1, 1, 1.0),
        )
        .unwrap();
        assert_relative_eq!(sol.m[(0, 0)], -1.0 / 3.0, epsilon = 1e-14);
        assert!(!sol.positive_definite);
    }

    #[test]
    fn residual_is_small() {
        let g = Matrix::from_row_slice(3, 3, &[0.2, 0.5, -0.1, 0.0, 0.4, 0.3, -0.2, 0.1, 0.6]);
        let q = Matrix::from_row_slice(3, 3, &[2.0, 0.5, 0.0, 0.5, 1.0, 0.1, 0.0, 0.1, 3.0]);
        let sol = solve_discrete_lyapunov(&g, &q).unwrap();
        let residual = g.transpose() * &sol.m * &g - &sol.m + &q;
        assert!(residual.amax() < 1e-12);
    }

    #[test]
    fn unit_eigenvalue_product_is_singular() {
        let g = Matrix::from_diagonal(&Vector::from_vec(vec![2.0, 0.5]));
        assert_eq!(
            solve_discrete_lyapunov(&g, &Matrix::identity(2, 2)),
            Err(Error::SingularLyapunov)
        );
    }

    #[test]
    fn cholesky_detects_indefinite() {
        assert!(cholesky_is_pd(&Matrix::identity(2, 2)));
        assert!(!cholesky_is_pd(&Matrix::from_row_slice(
            2,
            2,
            &[1.0, 2.0, 2.0, 1.0]
        )));
        assert!(!cholesky_is_pd(&Matrix::zeros(2, 2)));
    }
}
