use serde::{Deserialize, Serialize};

use super::{ensure_finite, ensure_square, Complex, Matrix};
use crate::error::{Error, Result};

/// Eigenvalues of a real square matrix together with its spectral radius.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Spectrum {
    pub eigenvalues: Vec<Complex<f64>>,
    pub spectral_radius: f64,
}

/// All eigenvalues of `m`: Householder reduction to upper Hessenberg form,
/// then Francis double-shift QR. Gives up after `100·n` sweeps.
pub fn spectrum(m: &Matrix) -> Result<Spectrum> {
    let n = ensure_square(m)?;
    ensure_finite(m, "spectrum input")?;
    let mut h: Vec<Vec<f64>> = (0..n).map(|i| m.row(i).iter().copied().collect()).collect();
    reduce_to_hessenberg(&mut h);
    let (re, im) = hessenberg_qr(&mut h)?;
    let eigenvalues: Vec<Complex<f64>> = re
        .into_iter()
        .zip(im)
        .map(|(r, i)| Complex::new(r, i))
        .collect();
    let spectral_radius = eigenvalues
        .iter()
        .map(|z| z.re.hypot(z.im))
        .fold(0.0, f64::max);
    Ok(Spectrum {
        eigenvalues,
        spectral_radius,
    })
}

fn reduce_to_hessenberg(h: &mut [Vec<f64>]) {
    let n = h.len();
    if n < 3 {
        return;
    }
    let high = n - 1;
    let mut ort = vec![0.0; n];
    for m in 1..high {
        let scale: f64 = (m..=high).map(|i| h[i][m - 1].abs()).sum();
        if scale == 0.0 {
            continue;
        }
        let mut hh = 0.0;
        for i in (m..=high).rev() {
            ort[i] = h[i][m - 1] / scale;
            hh += ort[i] * ort[i];
        }
        let mut g = hh.sqrt();
        if ort[m] > 0.0 {
            g = -g;
        }
        hh -= ort[m] * g;
        ort[m] -= g;

        for j in m..n {
            let f: f64 = (m..=high).rev().map(|i| ort[i] * h[i][j]).sum::<f64>() / hh;
            for i in m..=high {
                h[i][j] -= f * ort[i];
            }
        }
        for row in h.iter_mut().take(high + 1) {
            let f: f64 = (m..=high).rev().map(|j| ort[j] * row[j]).sum::<f64>() / hh;
            for j in m..=high {
                row[j] -= f * ort[j];
            }
        }
        ort[m] *= scale;
        h[m][m - 1] = scale * g;
    }
}

// Eigenvalue-only variant of the EISPACK hqr iteration.
#[allow(clippy::many_single_char_names)]
fn hessenberg_qr(h: &mut [Vec<f64>]) -> Result<(Vec<f64>, Vec<f64>)> {
    let nn = h.len();
    let mut d = vec![0.0; nn];
    let mut e = vec![0.0; nn];
    if nn == 0 {
        return Ok((d, e));
    }
    let eps = f64::EPSILON;
    let max_iterations = 100 * nn;
    let low: isize = 0;
    let mut n = nn as isize - 1;
    let mut exshift = 0.0;
    let (mut p, mut q, mut r) = (0.0, 0.0, 0.0);
    let (mut s, mut z): (f64, f64);
    let (mut w, mut x, mut y);

    let mut norm = 0.0;
    for i in 0..nn {
        for j in i.saturating_sub(1)..nn {
            norm += h[i][j].abs();
        }
    }

    let mut iter = 0usize;
    let mut total = 0usize;
    macro_rules! at {
        ($i:expr, $j:expr) => {
            h[($i) as usize][($j) as usize]
        };
    }

    while n >= low {
        let mut l = n;
        while l > low {
            s = at!(l - 1, l - 1).abs() + at!(l, l).abs();
            if s == 0.0 {
                s = norm;
            }
            if at!(l, l - 1).abs() < eps * s {
                break;
            }
            l -= 1;
        }

        if l == n {
            at!(n, n) += exshift;
            d[n as usize] = at!(n, n);
            e[n as usize] = 0.0;
            n -= 1;
            iter = 0;
        } else if l == n - 1 {
            w = at!(n, n - 1) * at!(n - 1, n);
            p = (at!(n - 1, n - 1) - at!(n, n)) / 2.0;
            q = p * p + w;
            z = q.abs().sqrt();
            at!(n, n) += exshift;
            at!(n - 1, n - 1) += exshift;
            x = at!(n, n);
            let (i0, i1) = ((n - 1) as usize, n as usize);
            if q >= 0.0 {
                z = if p >= 0.0 { p + z } else { p - z };
                d[i0] = x + z;
                d[i1] = d[i0];
                if z != 0.0 {
                    d[i1] = x - w / z;
                }
                e[i0] = 0.0;
                e[i1] = 0.0;
            } else {
                d[i0] = x + p;
                d[i1] = x + p;
                e[i0] = z;
                e[i1] = -z;
            }
            n -= 2;
            iter = 0;
        } else {
            x = at!(n, n);
            y = 0.0;
            w = 0.0;
            if l < n {
                y = at!(n - 1, n - 1);
                w = at!(n, n - 1) * at!(n - 1, n);
            }
            if iter == 10 {
                exshift += x;
                for i in low..=n {
                    at!(i, i) -= x;
                }
                s = at!(n, n - 1).abs() + at!(n - 1, n - 2).abs();
                x = 0.75 * s;
                y = x;
                w = -0.4375 * s * s;
            }
            if iter == 30 {
                s = (y - x) / 2.0;
                s = s * s + w;
                if s > 0.0 {
                    s = s.sqrt();
                    if y < x {
                        s = -s;
                    }
                    s = x - w / ((y - x) / 2.0 + s);
                    for i in low..=n {
                        at!(i, i) -= s;
                    }
                    exshift += s;
                    x = 0.964;
                    y = x;
                    w = x;
                }
            }
            iter += 1;
            total += 1;
            if total > max_iterations {
                return Err(Error::EigenNoConvergence {
                    iterations: total - 1,
                });
            }

            let mut m = n - 2;
            while m >= l {
                z = at!(m, m);
                r = x - z;
                s = y - z;
                p = (r * s - w) / at!(m + 1, m) + at!(m, m + 1);
                q = at!(m + 1, m + 1) - z - r - s;
                r = at!(m + 2, m + 1);
                s = p.abs() + q.abs() + r.abs();
                p /= s;
                q /= s;
                r /= s;
                if m == l {
                    break;
                }
                if at!(m, m - 1).abs() * (q.abs() + r.abs())
                    < eps
                        * (p.abs() * (at!(m - 1, m - 1).abs() + z.abs() + at!(m + 1, m + 1).abs()))
                {
                    break;
                }
                m -= 1;
            }
            for i in (m + 2)..=n {
                at!(i, i - 2) = 0.0;
                if i > m + 2 {
                    at!(i, i - 3) = 0.0;
                }
            }

            let mut k = m;
            while k < n {
                let notlast = k != n - 1;
                if k != m {
                    p = at!(k, k - 1);
                    q = at!(k + 1, k - 1);
                    r = if notlast { at!(k + 2, k - 1) } else { 0.0 };
                    x = p.abs() + q.abs() + r.abs();
                    if x == 0.0 {
                        k += 1;
                        continue;
                    }
                    p /= x;
                    q /= x;
                    r /= x;
                }
                s = (p * p + q * q + r * r).sqrt();
                if p < 0.0 {
                    s = -s;
                }
                if s != 0.0 {
                    if k != m {
                        at!(k, k - 1) = -s * x;
                    } else if l != m {
                        at!(k, k - 1) = -at!(k, k - 1);
                    }
                    p += s;
                    x = p / s;
                    y = q / s;
                    z = r / s;
                    q /= p;
                    r /= p;

                    for j in k..nn as isize {
                        p = at!(k, j) + q * at!(k + 1, j);
                        if notlast {
                            p += r * at!(k + 2, j);
                            at!(k + 2, j) -= p * z;
                        }
                        at!(k, j) -= p * x;
                        at!(k + 1, j) -= p * y;
                    }
                    for i in 0..=n.min(k + 3) {
                        p = x * at!(i, k) + y * at!(i, k + 1);
                        if notlast {
                            p += z * at!(i, k + 2);
                            at!(i, k + 2) -= p * r;
                        }
                        at!(i, k) -= p;
                        at!(i, k + 1) -= p * q;
                    }
                }
                k += 1;
            }
        }
    }
    Ok((d, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn sorted_moduli(s: &Spectrum) -> Vec<f64> {
        let mut v: Vec<f64> = s.eigenvalues.iter().map(|z| z.norm()).collect();
        v.sort_by(|a, b| a.partial_cmp(b).unwrap());
        v
    }

    #[test]
    fn identity_has_unit_spectrum() {
        let s = spectrum(&Matrix::identity(3, 3)).unwrap();
        assert_eq!(s.eigenvalues.len(), 3);
        for z in &s.eigenvalues {
            assert_relative_eq!(z.re, 1.0, epsilon = 1e-14);
            assert_relative_eq!(z.im, 0.0, epsilon = 1e-14);
        }
        assert_relative_eq!(s.spectral_radius, 1.0, epsilon = 1e-14);
    }

    #[test]
    fn diagonal_radius() {
        let m = Matrix::from_diagonal(&nalgebra::DVector::from_vec(vec![0.5, 1.2]));
        let s = spectrum(&m).unwrap();
        assert_relative_eq!(s.spectral_radius, 1.2, epsilon = 1e-14);
    }

    #[test]
    fn companion_of_golden_polynomial() {
        // s^2 - s - 1: roots from the quadratic formula
        let golden = (1.0 + 5f64.sqrt()) / 2.0;
        let other = (1.0 - 5f64.sqrt()) / 2.0;
        let m = Matrix::from_row_slice(2, 2, &[1.0, 1.0, 1.0, 0.0]);
        let s = spectrum(&m).unwrap();
        assert_relative_eq!(s.spectral_radius, golden, epsilon = 1e-14);
        assert_relative_eq!(sorted_moduli(&s)[0], other.abs(), epsilon = 1e-14);
    }

    #[test]
    fn complex_pair_from_rotation() {
        let th: f64 = 0.3;
        let r = 0.9;
        let m = Matrix::from_row_slice(
            3,
            3,
            &[
                r * th.cos(),
                -r * th.sin(),
                0.0,
                r * th.sin(),
                r * th.cos(),
                0.0,
                0.0,
                0.0,
                -0.2,
            ],
        );
        let s = spectrum(&m).unwrap();
        let complex: Vec<_> = s
            .eigenvalues
            .iter()
            .filter(|z| z.im.abs() > 1e-12)
            .collect();
        assert_eq!(complex.len(), 2);
        for z in complex {
            assert_relative_eq!(z.norm(), r, epsilon = 1e-13);
            assert_relative_eq!(z.im.abs(), r * th.sin(), epsilon = 1e-13);
        }
        assert_relative_eq!(s.spectral_radius, r, epsilon = 1e-13);
    }

    #[test]
    fn companion_matrix_roots_match_polynomial() {
        // (s - 0.5)(s + 2)(s - 3)(s^2 + 1) expanded
        let roots_mod = [0.5, 1.0, 1.0, 2.0, 3.0];
        // coefficients of s^5 + c4 s^4 + ... + c0
        let poly = {
            let mut c = vec![1.0];
            let mul = |c: &Vec<f64>, f: &[f64]| {
                let mut out = vec![0.0; c.len() + f.len() - 1];
                for (i, a) in c.iter().enumerate() {
                    for (j, b) in f.iter().enumerate() {
                        out[i + j] += a * b;
                    }
                }
                out
            };
            c = mul(&c, &[1.0, -0.5]);
            c = mul(&c, &[1.0, 2.0]);
            c = mul(&c, &[1.0, -3.0]);
            c = mul(&c, &[1.0, 0.0, 1.0]);
            c
        };
        let n = poly.len() - 1;
        let mut m = Matrix::zeros(n, n);
        for j in 0..n {
            m[(0, j)] = -poly[j + 1];
        }
        for i in 1..n {
            m[(i, i - 1)] = 1.0;
        }
        let s = spectrum(&m).unwrap();
        for (got, want) in sorted_moduli(&s).iter().zip(roots_mod) {
            assert_relative_eq!(*got, want, epsilon = 1e-10);
        }
    }

    #[test]
    fn rejects_non_square() {
        assert!(spectrum(&Matrix::zeros(2, 3)).is_err());
    }

    #[test]
    fn empty_and_scalar() {
        assert_eq!(spectrum(&Matrix::zeros(0, 0)).unwrap().eigenvalues.len(), 0);
        let s = spectrum(&Matrix::from_element(1, 1, -4.0)).unwrap();
        assert_relative_eq!(s.spectral_radius, 4.0);
    }
}
