//! Digital controllers: difference equations, shift-register state space,
//! PID gains and decentralized stacking.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{Matrix, Vector};

/// `u(k) = −Σ a_i u(k−i) + Σ b_i e(k−i)` with zero initial history.
#[derive(Debug, Clone, PartialEq)]
pub struct DifferenceController {
    a: Vec<f64>,
    b: Vec<f64>,
    past_u: Vec<f64>,
    past_e: Vec<f64>,
}

impl DifferenceController {
    /// `a` holds `a_1..a_L` and `b` holds `b_0..b_L`.
    pub fn new(a: Vec<f64>, b: Vec<f64>) -> Result<Self> {
        if b.len() != a.len() + 1 {
            return Err(Error::DimensionMismatch(format!(
                "degree {} needs {} b coefficients, got {}",
                a.len(),
                a.len() + 1,
                b.len()
            )));
        }
        if a.iter().chain(&b).any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("controller coefficient"));
        }
        let l = a.len();
        Ok(Self {
            a,
            b,
            past_u: vec![0.0; l],
            past_e: vec![0.0; l],
        })
    }

    /// Builds a controller from `p = [b0, a1, b1, …, aL, bL]`.
    pub fn from_params(p: &[f64]) -> Result<Self> {
        if p.len() % 2 == 0 {
            return Err(Error::DimensionMismatch(format!(
                "parameter vector must have odd length, got {}",
                p.len()
            )));
        }
        let a = p.iter().skip(1).step_by(2).copied().collect();
        let b = p.iter().step_by(2).copied().collect();
        Self::new(a, b)
    }

    pub fn params(&self) -> Vec<f64> {
        let mut p = vec![self.b[0]];
        for (a, b) in self.a.iter().zip(&self.b[1..]) {
            p.push(*a);
            p.push(*b);
        }
        p
    }

    pub fn degree(&self) -> usize {
        self.a.len()
    }
    pub fn a(&self) -> &[f64] {
        &self.a
    }
    pub fn b(&self) -> &[f64] {
        &self.b
    }

    pub fn reset(&mut self) {
        self.past_u.fill(0.0);
        self.past_e.fill(0.0);
    }

    pub fn step(&mut self, e: f64) -> Result<f64> {
        if !e.is_finite() {
            return Err(Error::NonFinite("tracking error"));
        }
        Ok(self.step_unchecked(e))
    }

    pub(crate) fn step_unchecked(&mut self, e: f64) -> f64 {
        let mut u = self.b[0] * e;
        for i in 0..self.a.len() {
            u += -self.a[i] * self.past_u[i] + self.b[i + 1] * self.past_e[i];
        }
        if !self.a.is_empty() {
            self.past_u.rotate_right(1);
            self.past_u[0] = u;
            self.past_e.rotate_right(1);
            self.past_e[0] = e;
        }
        u
    }

    /// Shift-register realization with state `[u(k−1..k−L), e(k−1..k−L)]`.
    pub fn to_state_space(&self) -> StateSpaceController {
        let l = self.degree();
        let n = 2 * l;
        let mut g = Matrix::zeros(n, n);
        let mut h = Matrix::zeros(n, 1);
        let mut c = Matrix::zeros(1, n);
        let d = Matrix::from_element(1, 1, self.b[0]);
        for i in 0..l {
            c[(0, i)] = -self.a[i];
            c[(0, l + i)] = self.b[i + 1];
        }
        if l > 0 {
            // new u(k−1) is u(k) = C x + D e
            for j in 0..n {
                g[(0, j)] = c[(0, j)];
            }
            h[(0, 0)] = self.b[0];
            h[(l, 0)] = 1.0;
            for i in 1..l {
                g[(i, i - 1)] = 1.0;
                g[(l + i, l + i - 1)] = 1.0;
            }
        }
        StateSpaceController::new(g, h, c, d).expect("shift-register blocks are consistent")
    }
}

/// `x(k+1) = G_c x(k) + H_c e(k)`, `u(k) = C_c x(k) + D_c e(k)`.
#[derive(Debug, Clone, PartialEq)]
pub struct StateSpaceController {
    pub g: Matrix,
    pub h: Matrix,
    pub c: Matrix,
    pub d: Matrix,
    state: Vector,
}

impl StateSpaceController {
    pub fn new(g: Matrix, h: Matrix, c: Matrix, d: Matrix) -> Result<Self> {
        let n = g.nrows();
        let ok = g.ncols() == n
            && h.nrows() == n
            && c.ncols() == n
            && d.nrows() == c.nrows()
            && d.ncols() == h.ncols();
        if !ok {
            return Err(Error::DimensionMismatch(format!(
                "controller blocks G {}x{}, H {}x{}, C {}x{}, D {}x{}",
                g.nrows(),
                g.ncols(),
                h.nrows(),
                h.ncols(),
                c.nrows(),
                c.ncols(),
                d.nrows(),
                d.ncols()
            )));
        }
        Ok(Self {
            state: Vector::zeros(n),
            g,
            h,
            c,
            d,
        })
    }

    pub fn state_dim(&self) -> usize {
        self.g.nrows()
    }
    pub fn inputs(&self) -> usize {
        self.h.ncols()
    }
    pub fn outputs(&self) -> usize {
        self.c.nrows()
    }
    pub fn state(&self) -> &Vector {
        &self.state
    }

    pub fn reset(&mut self) {
        self.state.fill(0.0);
    }

    pub fn step(&mut self, e: &Vector) -> Vector {
        let u = &self.c * &self.state + &self.d * e;
        self.state = &self.g * &self.state + &self.h * e;
        u
    }

    /// Block-diagonal composition of independent controllers.
    pub fn stack(parts: &[StateSpaceController]) -> StateSpaceController {
        let n: usize = parts.iter().map(|p| p.state_dim()).sum();
        let m: usize = parts.iter().map(|p| p.inputs()).sum();
        let q: usize = parts.iter().map(|p| p.outputs()).sum();
        let (mut g, mut h, mut c, mut d) = (
            Matrix::zeros(n, n),
            Matrix::zeros(n, m),
            Matrix::zeros(q, n),
            Matrix::zeros(q, m),
        );
        let (mut sn, mut sm, mut sq) = (0, 0, 0);
        for p in parts {
            let (pn, pm, pq) = (p.state_dim(), p.inputs(), p.outputs());
            g.view_mut((sn, sn), (pn, pn)).copy_from(&p.g);
            h.view_mut((sn, sm), (pn, pm)).copy_from(&p.h);
            c.view_mut((sq, sn), (pq, pn)).copy_from(&p.c);
            d.view_mut((sq, sm), (pq, pm)).copy_from(&p.d);
            sn += pn;
            sm += pm;
            sq += pq;
        }
        StateSpaceController::new(g, h, c, d).expect("stacked blocks are consistent")
    }
}

/// Proportional, integral and derivative gains of the incremental PID law.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PidGains {
    pub kp: f64,
    #[serde(default)]
    pub ki: f64,
    #[serde(default)]
    pub kd: f64,
}

/// Degree-2 form of `u(k) = u(k−1) + K_P Δe + K_I e(k) + K_D Δ²e`.
pub fn pid_to_coeffs(g: PidGains) -> DifferenceController {
    DifferenceController {
        a: vec![-1.0, 0.0],
        b: vec![g.kp + g.ki + g.kd, -(g.kp + 2.0 * g.kd), g.kd],
        past_u: vec![0.0; 2],
        past_e: vec![0.0; 2],
    }
}

/// Lowest-degree difference equation for a PID-family law: P, PI or PID.
pub fn pid_family(kind: usize, gains: &[f64]) -> Result<DifferenceController> {
    match (kind, gains) {
        (0, [kp]) => DifferenceController::new(vec![], vec![*kp]),
        (1, [kp, ki]) => DifferenceController::new(vec![-1.0], vec![kp + ki, -kp]),
        (2, [kp, ki, kd]) => Ok(pid_to_coeffs(PidGains {
            kp: *kp,
            ki: *ki,
            kd: *kd,
        })),
        _ => Err(Error::DimensionMismatch(format!(
            "PID family degree {kind} with {} gains",
            gains.len()
        ))),
    }
}

/// One SISO controller per plant input; channel `i` reads error `i`.
#[derive(Debug, Clone, PartialEq)]
pub struct DecentralizedController {
    pub channels: Vec<DifferenceController>,
}

impl DecentralizedController {
    pub fn new(channels: Vec<DifferenceController>) -> Self {
        Self { channels }
    }

    pub fn single(c: DifferenceController) -> Self {
        Self { channels: vec![c] }
    }

    pub fn len(&self) -> usize {
        self.channels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.channels.is_empty()
    }

    pub fn total_degree(&self) -> usize {
        self.channels.iter().map(|c| c.degree()).sum()
    }

    pub fn reset(&mut self) {
        self.channels.iter_mut().for_each(|c| c.reset());
    }

    /// Steps every channel on its own error; `u` receives the outputs.
    pub fn step(&mut self, e: &[f64], u: &mut [f64]) {
        for ((c, e), u) in self.channels.iter_mut().zip(e).zip(u) {
            *u = c.step_unchecked(*e);
        }
    }

    pub fn to_state_space(&self) -> StateSpaceController {
        let parts: Vec<_> = self.channels.iter().map(|c| c.to_state_space()).collect();
        StateSpaceController::stack(&parts)
    }

    /// Concatenated `[b0, a1, b1, …]` vectors of all channels.
    pub fn params(&self) -> Vec<f64> {
        self.channels.iter().flat_map(|c| c.params()).collect()
    }
}

/// Serialized controller description.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged, deny_unknown_fields)]
pub enum ControllerSpec {
    Coefficients {
        degree: usize,
        a: Vec<f64>,
        b: Vec<f64>,
    },
    Pid(PidGains),
    Channels {
        channels: Vec<ControllerSpec>,
    },
}

impl ControllerSpec {
    pub fn build(&self) -> Result<DecentralizedController> {
        match self {
            ControllerSpec::Coefficients { degree, a, b } => {
                if a.len() != *degree {
                    return Err(Error::DimensionMismatch(format!(
                        "degree {degree} with {} a coefficients",
                        a.len()
                    )));
                }
                Ok(DecentralizedController::single(DifferenceController::new(
                    a.clone(),
                    b.clone(),
                )?))
            }
            ControllerSpec::Pid(g) => Ok(DecentralizedController::single(pid_to_coeffs(*g))),
            ControllerSpec::Channels { channels } => {
                let mut out = Vec::with_capacity(channels.len());
                for c in channels {
                    let built = c.build()?;
                    out.extend(built.channels);
                }
                Ok(DecentralizedController::new(out))
            }
        }
    }

    pub fn from_controller(c: &DecentralizedController) -> Self {
        let one = |d: &DifferenceController| ControllerSpec::Coefficients {
            degree: d.degree(),
            a: d.a().to_vec(),
            b: d.b().to_vec(),
        };
        match c.channels.as_slice() {
            [single] => one(single),
            many => ControllerSpec::Channels {
                channels: many.iter().map(one).collect(),
            },
        }
    }
}

/// Parametrization searched by the optimizer for a given degree.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase", tag = "kind", content = "degree")]
pub enum ControllerFamily {
    /// Gains `[K_P, K_I, K_D]` truncated to `degree + 1` entries.
    Pid(usize),
    /// Difference-equation coefficients `[b0, a1, b1, …]` of the given degree.
    General(usize),
}

impl ControllerFamily {
    pub fn degree(&self) -> usize {
        match *self {
            ControllerFamily::Pid(l) | ControllerFamily::General(l) => l,
        }
    }

    /// Parameters per channel.
    pub fn channel_dim(&self) -> usize {
        match *self {
            ControllerFamily::Pid(l) => l + 1,
            ControllerFamily::General(l) => 2 * l + 1,
        }
    }

    /// Splits `p` into `channels` equal blocks and builds one controller per block.
    pub fn build(&self, p: &[f64], channels: usize) -> Result<DecentralizedController> {
        let k = self.channel_dim();
        if p.len() != k * channels {
            return Err(Error::DimensionMismatch(format!(
                "{} parameters for {channels} channels of {k}",
                p.len()
            )));
        }
        let parts = p
            .chunks_exact(k)
            .map(|block| match *self {
                ControllerFamily::Pid(l) => pid_family(l, block),
                ControllerFamily::General(_) => DifferenceController::from_params(block),
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(DecentralizedController::new(parts))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pid_direct(g: PidGains, errors: &[f64]) -> Vec<f64> {
        let (mut u_prev, mut e1, mut e2) = (0.0, 0.0, 0.0);
        errors
            .iter()
            .map(|&e| {
                let u = u_prev + g.kp * (e - e1) + g.ki * e + g.kd * (e - 2.0 * e1 + e2);
                u_prev = u;
                e2 = e1;
                e1 = e;
                u
            })
            .collect()
    }

    #[test]
    fn zero_pid_is_silent() {
        let mut c = pid_to_coeffs(PidGains {
            kp: 0.0,
            ki: 0.0,
            kd: 0.0,
        });
        assert_eq!(c.b(), &[0.0, 0.0, 0.0]);
        for e in [1.0, -3.0, 7.5] {
            assert_eq!(c.step(e).unwrap(), 0.0);
        }
    }

    #[test]
    fn unit_proportional_coefficients() {
        let c = pid_to_coeffs(PidGains {
            kp: 1.0,
            ki: 0.0,
            kd: 0.0,
        });
        assert_eq!(c.a(), &[-1.0, 0.0]);
        assert_eq!(c.b(), &[1.0, -1.0, 0.0]);
    }

    #[test]
    fn pancreas_gains_match_direct_recursion() {
        let g = PidGains {
            kp: -5.716e-3,
            ki: -1.88e-7,
            kd: -0.2002,
        };
        let errors: Vec<f64> = (0..500).map(|k| if k == 0 { 0.0 } else { 1.0 }).collect();
        let mut c = pid_to_coeffs(g);
        let expected = pid_direct(g, &errors);
        for (e, want) in errors.iter().zip(expected) {
            assert!((c.step(*e).unwrap() - want).abs() <= 1e-12);
        }
    }

    #[test]
    fn proportional_and_integral_limits() {
        let mut p = pid_to_coeffs(PidGains {
            kp: 2.5,
            ki: 0.0,
            kd: 0.0,
        });
        let mut i = pid_to_coeffs(PidGains {
            kp: 0.0,
            ki: 0.3,
            kd: 0.0,
        });
        for k in 0..20 {
            assert!((p.step(1.0).unwrap() - 2.5).abs() < 1e-15);
            assert!((i.step(1.0).unwrap() - (k + 1) as f64 * 0.3).abs() < 1e-12);
        }
    }

    #[test]
    fn pid_family_matches_full_pid() {
        let errors: Vec<f64> = (0..50).map(|k| ((k * 7) % 11) as f64 - 5.0).collect();
        let cases = [
            (0, vec![0.7]),
            (1, vec![0.7, 0.2]),
            (2, vec![0.7, 0.2, -0.1]),
        ];
        for (kind, gains) in cases {
            let mut full = [0.0; 3];
            full[..gains.len()].copy_from_slice(&gains);
            let g = PidGains {
                kp: full[0],
                ki: full[1],
                kd: full[2],
            };
            let mut c = pid_family(kind, &gains).unwrap();
            assert_eq!(c.degree(), kind);
            for (e, want) in errors.iter().zip(pid_direct(g, &errors)) {
                assert!((c.step(*e).unwrap() - want).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn state_space_shapes() {
        let c0 = DifferenceController::new(vec![], vec![3.0]).unwrap();
        let ss = c0.to_state_space();
        assert_eq!(ss.state_dim(), 0);
        assert_eq!(ss.d[(0, 0)], 3.0);
        let pid = pid_to_coeffs(PidGains {
            kp: 1.0,
            ki: 1.0,
            kd: 1.0,
        });
        assert_eq!(pid.to_state_space().state_dim(), 4);
    }

    #[test]
    fn params_round_trip() {
        let p = [1.0, -0.5, 2.0, 0.25, -3.0];
        let c = DifferenceController::from_params(&p).unwrap();
        assert_eq!(c.a(), &[-0.5, 0.25]);
        assert_eq!(c.b(), &[1.0, 2.0, -3.0]);
        assert_eq!(c.params(), p);
        assert!(DifferenceController::from_params(&[1.0, 2.0]).is_err());
    }

    #[test]
    fn rejects_non_finite_error() {
        let mut c = DifferenceController::new(vec![], vec![1.0]).unwrap();
        assert!(c.step(f64::NAN).is_err());
    }

    #[test]
    fn json_forms() {
        let pid: ControllerSpec = serde_json::from_str(r#"{"kp": 1.0, "ki": 0.5}"#).unwrap();
        assert_eq!(pid.build().unwrap().channels[0].degree(), 2);
        let coeffs: ControllerSpec =
            serde_json::from_str(r#"{"degree": 1, "a": [0.2], "b": [1.0, -0.5]}"#).unwrap();
        let built = coeffs.build().unwrap();
        assert_eq!(built.params(), vec![1.0, 0.2, -0.5]);
        let back = ControllerSpec::from_controller(&built);
        assert_eq!(back, coeffs);
        let multi: ControllerSpec = serde_json::from_str(
            r#"{"channels": [{"kp": 1.0}, {"degree": 0, "a": [], "b": [2.0]}]}"#,
        )
        .unwrap();
        assert_eq!(multi.build().unwrap().len(), 2);
        let bad: ControllerSpec =
            serde_json::from_str(r#"{"degree": 2, "a": [0.2], "b": [1.0, -0.5]}"#).unwrap();
        assert!(bad.build().is_err());
    }

    #[test]
    fn stacked_equals_channelwise() {
        let a = DifferenceController::from_params(&[0.5, -0.3, 0.2]).unwrap();
        let b = pid_to_coeffs(PidGains {
            kp: 1.0,
            ki: 0.1,
            kd: -0.2,
        });
        let mut dec = DecentralizedController::new(vec![a, b]);
        let mut ss = dec.to_state_space();
        let mut u = [0.0; 2];
        for k in 0..200 {
            let e = [(k as f64 * 0.37).sin(), (k as f64 * 0.11).cos()];
            dec.step(&e, &mut u);
            let v = ss.step(&Vector::from_row_slice(&e));
            assert!((u[0] - v[0]).abs() < 1e-12);
            assert!((u[1] - v[1]).abs() < 1e-12);
        }
    }
}
