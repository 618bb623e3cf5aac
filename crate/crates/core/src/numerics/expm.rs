use super::{ensure_finite, ensure_square, Matrix};
use crate::error::{Error, Result};

// Padé coefficients and the 1-norm thresholds below which each degree is
// accurate to double precision (Higham, 2005).
const B3: [f64; 4] = [120.0, 60.0, 12.0, 1.0];
const B5: [f64; 6] = [30240.0, 15120.0, 3360.0, 420.0, 30.0, 1.0];
const B7: [f64; 8] = [
    17297280.0, 8648640.0, 1995840.0, 277200.0, 25200.0, 1512.0, 56.0, 1.0,
];
const B9: [f64; 10] = [
    17643225600.0,
    8821612800.0,
    2075673600.0,
    302702400.0,
    30270240.0,
    2162160.0,
    110880.0,
    3960.0,
    90.0,
    1.0,
];
const B13: [f64; 14] = [
    64764752532480000.0,
    32382376266240000.0,
    7771770303897600.0,
    1187353796428800.0,
    129060195264000.0,
    10559470521600.0,
    670442572800.0,
    33522128640.0,
    1323241920.0,
    40840800.0,
    960960.0,
    16380.0,
    182.0,
    1.0,
];
const THETA: [(usize, f64); 4] = [
    (3, 1.495585217958292e-2),
    (5, 2.539398330063230e-1),
    (7, 9.504178996162932e-1),
    (9, 2.097847961257068),
];
const THETA13: f64 = 5.371920351148152;

fn norm1(m: &Matrix) -> f64 {
    m.column_iter()
        .map(|c| c.iter().map(|v| v.abs()).sum::<f64>())
        .fold(0.0, f64::max)
}

fn pade_low(a: &Matrix, coeffs: &[f64]) -> (Matrix, Matrix) {
    let n = a.nrows();
    let a2 = a * a;
    let mut power = Matrix::identity(n, n);
    let mut u_even = Matrix::zeros(n, n);
    let mut v = Matrix::zeros(n, n);
    for pair in coeffs.chunks(2) {
        v += &power * pair[0];
        u_even += &power * pair[1];
        power = &power * &a2;
    }
    (a * u_even, v)
}

fn pade13(a: &Matrix) -> (Matrix, Matrix) {
    let n = a.nrows();
    let b = &B13;
    let ident = Matrix::identity(n, n);
    let a2 = a * a;
    let a4 = &a2 * &a2;
    let a6 = &a4 * &a2;
    let inner_u = &a6 * b[13] + &a4 * b[11] + &a2 * b[9];
    let u = a * (&a6 * inner_u + &a6 * b[7] + &a4 * b[5] + &a2 * b[3] + &ident * b[1]);
    let inner_v = &a6 * b[12] + &a4 * b[10] + &a2 * b[8];
    let v = &a6 * inner_v + &a6 * b[6] + &a4 * b[4] + &a2 * b[2] + &ident * b[0];
    (u, v)
}

fn solve_pade(u: Matrix, v: Matrix) -> Result<Matrix> {
    let p = &v + &u;
    let q = v - u;
    q.lu()
        .solve(&p)
        .ok_or_else(|| Error::InvalidArgument("Padé denominator is singular".into()))
}

/// `e^{A t}` by scaling and squaring with a diagonal Padé approximant.
pub fn mat_exp(a: &Matrix, t: f64) -> Result<Matrix> {
    let n = ensure_square(a)?;
    ensure_finite(a, "mat_exp input")?;
    if !t.is_finite() {
        return Err(Error::NonFinite("mat_exp time"));
    }
    if n == 0 {
        return Ok(Matrix::zeros(0, 0));
    }
    let at = a * t;
    let norm = norm1(&at);
    for &(degree, theta) in &THETA {
        if norm <= theta {
            let coeffs: &[f64] = match degree {
                3 => &B3,
                5 => &B5,
                7 => &B7,
                _ => &B9,
            };
            let (u, v) = pade_low(&at, coeffs);
            return solve_pade(u, v);
        }
    }
    let squarings = if norm > THETA13 {
        (norm / THETA13).log2().ceil().max(0.0) as i32
    } else {
        0
    };
    let scaled = at / 2f64.powi(squarings);
    let (u, v) = pade13(&scaled);
    let mut r = solve_pade(u, v)?;
    for _ in 0..squarings {
        r = &r * &r;
    }
    Ok(r)
}

/// Zero-order-hold pair `G = e^{Aτ}`, `H = ∫₀^τ e^{Aλ} dλ · B`, read off the
/// top blocks of `exp([[A, B], [0, 0]]·τ)`.
pub fn discretize_pair(a: &Matrix, b: &Matrix, tau: f64) -> Result<(Matrix, Matrix)> {
    let n = ensure_square(a)?;
    if b.nrows() != n {
        return Err(Error::DimensionMismatch(format!(
            "A is {n}x{n} but B has {} rows",
            b.nrows()
        )));
    }
    if !(tau > 0.0) || !tau.is_finite() {
        return Err(Error::InvalidArgument(format!(
            "sampling period must be positive, got {tau}"
        )));
    }
    let m = b.ncols();
    let mut aug = Matrix::zeros(n + m, n + m);
    aug.view_mut((0, 0), (n, n)).copy_from(a);
    aug.view_mut((0, n), (n, m)).copy_from(b);
    let e = mat_exp(&aug, tau)?;
    Ok((
        e.view((0, 0), (n, n)).into_owned(),
        e.view((0, n), (n, m)).into_owned(),
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn zero_matrix_gives_identity() {
        let e = mat_exp(&Matrix::zeros(2, 2), 1.0).unwrap();
        assert_eq!(e, Matrix::identity(2, 2));
    }

    #[test]
    fn nilpotent_series_terminates() {
        let a = Matrix::from_row_slice(2, 2, &[0.0, 1.0, 0.0, 0.0]);
        let e = mat_exp(&a, 0.3).unwrap();
        assert_relative_eq!(
            e,
            Matrix::from_row_slice(2, 2, &[1.0, 0.3, 0.0, 1.0]),
            epsilon = 1e-15
        );
    }

    #[test]
    fn scalar_exponential() {
        let a = Matrix::from_element(1, 1, -1.0);
        let e = mat_exp(&a, 1.0).unwrap();
        assert_relative_eq!(e[(0, 0)], (-1.0f64).exp(), max_relative = 1e-14);
        // large norm exercises the squaring phase
        let e = mat_exp(&a, 40.0).unwrap();
        assert_relative_eq!(e[(0, 0)], (-40.0f64).exp(), max_relative = 1e-10);
    }

    #[test]
    fn rotation_generator() {
        let a = Matrix::from_row_slice(2, 2, &[0.0, -1.0, 1.0, 0.0]);
        for &t in &[0.01, 0.5, 3.0, 20.0] {
            let e = mat_exp(&a, t).unwrap();
            let want = Matrix::from_row_slice(2, 2, &[t.cos(), -t.sin(), t.sin(), t.cos()]);
            assert_relative_eq!(e, want, epsilon = 1e-12);
        }
    }

    #[test]
    fn rejects_bad_input() {
        assert!(matches!(
            mat_exp(&Matrix::zeros(2, 3), 1.0),
            Err(Error::NonSquare { .. })
        ));
        let mut a = Matrix::zeros(2, 2);
        a[(0, 1)] = f64::NAN;
        assert!(matches!(mat_exp(&a, 1.0), Err(Error::NonFinite(_))));
    }

    #[test]
    fn zoh_with_zero_dynamics() {
        let b = Matrix::from_column_slice(2, 1, &[2.0, -1.0]);
        let (g, h) = discretize_pair(&Matrix::zeros(2, 2), &b, 0.4).unwrap();
        assert_relative_eq!(g, Matrix::identity(2, 2), epsilon = 1e-15);
        assert_relative_eq!(h, &b * 0.4, epsilon = 1e-15);
    }

    #[test]
    fn zoh_scalar_closed_form() {
        for &a in &[-2.0, -0.3, 0.7] {
            let (g, h) = discretize_pair(
                &Matrix::from_element(1, 1, a),
                &Matrix::from_element(1, 1, 1.0),
                0.5,
            )
            .unwrap();
            assert_relative_eq!(g[(0, 0)], (a * 0.5).exp(), max_relative = 1e-14);
            assert_relative_eq!(h[(0, 0)], ((a * 0.5).exp() - 1.0) / a, max_relative = 1e-13);
        }
    }

    #[test]
    fn zoh_rejects_nonpositive_period() {
        let a = Matrix::zeros(1, 1);
        let b = Matrix::zeros(1, 1);
        assert!(discretize_pair(&a, &b, 0.0).is_err());
        assert!(discretize_pair(&a, &Matrix::zeros(2, 1), 1.0).is_err());
    }
}
