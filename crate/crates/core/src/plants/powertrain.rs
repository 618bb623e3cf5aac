//! Air-fuel ratio control of a spark-ignition engine.

use super::{check_timing, normal, overridable};
use crate::error::Result;
use crate::model::{ErrorChannel, Event, InputBounds, PlantModel, SafetySpec, StreamRng};
use crate::numerics::Vector;

const P: usize = 0;
const THETA: usize = 1;
const LAMBDA: usize = 2;

#[derive(Debug, Clone, PartialEq)]
pub struct PowertrainParams {
    pub c1: f64,
    pub c2: f64,
    pub c3: f64,
    pub c4: f64,
    pub c5: f64,
    pub c6: f64,
    pub c7: f64,
    pub c8: f64,
    pub c9: f64,
    pub c10: f64,
    pub c12: f64,
    pub c25: f64,
    pub c26: f64,
    pub throttle_rate: f64,
    pub lambda_bar: f64,
    /// Throttle pulse period, also the horizon.
    pub zeta: f64,
    pub tau: f64,
    pub omega_mean: f64,
    pub omega_variance: f64,
    pub amplitude_mean: f64,
    pub amplitude_variance: f64,
    pub throttle_low: f64,
    pub noise_variance: f64,
    pub mu_max: f64,
    pub mu_settled: f64,
}

impl Default for PowertrainParams {
    fn default() -> Self {
        Self {
            c1: 0.41328,
            c2: -0.366,
            c3: 0.08979,
            c4: -0.0337,
            c5: 0.0001,
            c6: 2.821,
            c7: -0.05231,
            c8: 0.10299,
            c9: -0.00063,
            c10: 1.0,
            c12: 0.9,
            c25: 1.0,
            c26: 4.0,
            throttle_rate: 10.0,
            lambda_bar: 14.7,
            zeta: 4.0,
            tau: 0.04,
            omega_mean: 105.0,
            omega_variance: 4.0,
            amplitude_mean: 30.6,
            amplitude_variance: 25.0,
            throttle_low: 8.8,
            noise_variance: 0.0625,
            mu_max: 1.0,
            mu_settled: 0.05,
        }
    }
}

overridable!(
    PowertrainParams,
    "pt",
    [
        c1,
        c2,
        c3,
        c4,
        c5,
        c6,
        c7,
        c8,
        c9,
        c10,
        c12,
        c25,
        c26,
        throttle_rate,
        lambda_bar,
        zeta,
        tau,
        omega_mean,
        omega_variance,
        amplitude_mean,
        amplitude_variance,
        throttle_low,
        noise_variance,
        mu_max,
        mu_settled,
    ]
);

/// Three-state engine model `(p, θ, λ)` with disturbance `d = [ω, θ_in]`.
///
/// The control input scales commanded fuel, `F_c = (1 + u)·ṁ_c/λ̄`. The
/// sampled parameters are `[ω, a]`: engine speed and throttle pulse height.
#[derive(Debug, Clone)]
pub struct Powertrain {
    p: PowertrainParams,
}

impl Powertrain {
    pub fn new(p: PowertrainParams) -> Result<Self> {
        check_timing(p.tau, p.zeta)?;
        Ok(Self { p })
    }

    pub fn params(&self) -> &PowertrainParams {
        &self.p
    }

    fn cylinder_flow(&self, p: f64, omega: f64) -> f64 {
        let c = &self.p;
        c.c12 * (c.c2 + c.c3 * omega * p + c.c4 * omega * p * p + c.c5 * omega * omega * p)
    }

    /// Relative air-fuel error `μ = (λ − λ̄)/λ̄`.
    pub fn mu(&self, x: &[f64]) -> f64 {
        (x[LAMBDA] - self.p.lambda_bar) / self.p.lambda_bar
    }
}

impl PlantModel for Powertrain {
    fn name(&self) -> &str {
        "powertrain"
    }
    fn state_dim(&self) -> usize {
        3
    }
    fn input_dim(&self) -> usize {
        1
    }
    fn output_dim(&self) -> usize {
        1
    }
    fn disturbance_dim(&self) -> usize {
        2
    }

    fn dynamics(&self, x: &[f64], u: &[f64], d: &[f64], dx: &mut [f64]) {
        let c = &self.p;
        let (omega, theta_in) = (d[0], d[1]);
        let theta = x[THETA];
        let plate = c.c6 + c.c7 * theta + c.c8 * theta * theta + c.c9 * theta * theta * theta;
        let m_c = self.cylinder_flow(x[P], omega);
        let ratio = x[P] / c.c10;
        let m_af = 2.0 * plate * (ratio - ratio * ratio).max(0.0).sqrt();
        let fuel = (1.0 + u[0]) * m_c / c.lambda_bar;
        dx[P] = c.c1 * (m_af - m_c);
        dx[THETA] = c.throttle_rate * (theta_in - theta);
        dx[LAMBDA] = c.c26 * (m_c / (c.c25 * fuel) - x[LAMBDA]);
    }

    fn output(&self, x: &[f64], y: &mut [f64]) {
        y[0] = x[LAMBDA];
    }

    fn equilibrium_guess(&self) -> Vector {
        Vector::from_vec(vec![0.9, self.p.throttle_low, self.p.lambda_bar])
    }

    fn nominal_input(&self) -> Vector {
        Vector::zeros(1)
    }

    fn nominal_disturbance(&self) -> Vector {
        Vector::from_vec(vec![self.p.omega_mean, self.p.throttle_low])
    }

    fn sampling_period(&self) -> f64 {
        self.p.tau
    }
    fn horizon(&self) -> f64 {
        self.p.zeta
    }

    fn input_bounds(&self) -> Vec<InputBounds> {
        vec![InputBounds::UNBOUNDED]
    }

    fn error_channels(&self) -> Vec<ErrorChannel> {
        // e = y − λ̄
        vec![ErrorChannel {
            output: 0,
            reference: self.p.lambda_bar,
            sign: -1.0,
            scale: 1.0,
        }]
    }

    fn noise_std(&self) -> Vec<f64> {
        vec![self.p.noise_variance.max(0.0).sqrt()]
    }

    fn sample_parameters(&self, rng: &mut StreamRng) -> Vec<f64> {
        let c = &self.p;
        let omega = normal(rng, c.omega_mean, c.omega_variance);
        let amplitude = normal(rng, c.amplitude_mean, c.amplitude_variance);
        vec![omega, amplitude]
    }

    fn disturbance(&self, params: &[f64], t: f64, d: &mut [f64]) {
        d[0] = params[0];
        d[1] = if t < 0.5 * self.p.zeta {
            params[1]
        } else {
            self.p.throttle_low
        };
    }

    fn events(&self, _params: &[f64]) -> Vec<Event> {
        Vec::new()
    }

    fn initial_state(&self, _params: &[f64], equilibrium: &Vector) -> Vector {
        equilibrium.clone()
    }

    fn safety(&self) -> SafetySpec {
        let c = self.p.clone();
        let z = c.zeta;
        SafetySpec::new(
            format!(
                "|mu| < {} and (t in [z/8, z/2] or [5z/8, z] -> |mu| < {}), z = {z}",
                c.mu_max, c.mu_settled
            ),
            move |t, x, _| {
                let mu = ((x[LAMBDA] - c.lambda_bar) / c.lambda_bar).abs();
                let settling = (t >= z / 8.0 && t <= z / 2.0) || (t >= 5.0 * z / 8.0 && t <= z);
                mu < c.mu_max && (!settling || mu < c.mu_settled)
            },
        )
    }
}
