use super::{Matrix, Vector};
use crate::error::{Error, Result};

/// Central-difference Jacobian with per-coordinate step `1e-6·max(1, |xᵢ|)`.
pub fn fd_jacobian<F>(func: F, point: &Vector) -> Result<Matrix>
where
    F: Fn(&Vector) -> Vector,
{
    let n = point.len();
    let f0 = func(point);
    if f0.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("function value at Jacobian base point"));
    }
    let k = f0.len();
    let mut jac = Matrix::zeros(k, n);
    let mut probe = point.clone();
    for i in 0..n {
        let h = 1e-6 * point[i].abs().max(1.0);
        probe[i] = point[i] + h;
        let fp = func(&probe);
        probe[i] = point[i] - h;
        let fm = func(&probe);
        probe[i] = point[i];
        if fp.len() != k || fm.len() != k {
            return Err(Error::DimensionMismatch(
                "function output length changed between probes".into(),
            ));
        }
        if fp.iter().chain(fm.iter()).any(|v| !v.is_finite()) {
            return Err(Error::JacobianNonFinite { coordinate: i });
        }
        for r in 0..k {
            jac[(r, i)] = (fp[r] - fm[r]) / (2.0 * h);
        }
    }
    Ok(jac)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn linear_map_is_recovered() {
        let a = Matrix::from_row_slice(2, 3, &[1.0, -2.0, 0.5, 3.0, 0.0, -1.0]);
        let x = Vector::from_vec(vec![0.3, -7.0, 120.0]);
        let j = fd_jacobian(|v| &a * v, &x).unwrap();
        assert_relative_eq!(j, a, epsilon = 1e-8);
    }

    #[test]
    fn square_derivative() {
        let x = Vector::from_element(1, 3.0);
        let j = fd_jacobian(|v| v.map(|t| t * t), &x).unwrap();
        assert!((j[(0, 0)] - 6.0).abs() < 1e-6);
    }

    #[test]
    fn non_finite_probe_is_reported() {
        let x = Vector::from_element(1, 0.0);
        let r = fd_jacobian(|v| v.map(|t| if t < 0.0 { f64::NAN } else { t }), &x);
        assert_eq!(r, Err(Error::JacobianNonFinite { coordinate: 0 }));
    }
}
