//! Double integrator with a random initial displacement.

use rand::Rng;

use super::{check_timing, overridable};
use crate::error::Result;
use crate::model::{ErrorChannel, Event, InputBounds, PlantModel, SafetySpec, StreamRng};
use crate::numerics::Vector;

#[derive(Debug, Clone, PartialEq)]
pub struct LinearTestParams {
    pub tau: f64,
    pub horizon: f64,
    pub noise_std: f64,
    pub displacement: f64,
    pub bound: f64,
    pub settle_time: f64,
    pub settle_band: f64,
}

impl Default for LinearTestParams {
    fn default() -> Self {
        Self {
            tau: 0.1,
            horizon: 10.0,
            noise_std: 0.01,
            displacement: 1.0,
            bound: 2.0,
            settle_time: 5.0,
            settle_band: 0.2,
        }
    }
}

overridable!(
    LinearTestParams,
    "lt",
    [
        tau,
        horizon,
        noise_std,
        displacement,
        bound,
        settle_time,
        settle_band
    ]
);

/// `ẋ₁ = x₂, ẋ₂ = u`, `y = x₁`, with `x₁(0) ~ U(−δ, δ)`.
#[derive(Debug, Clone)]
pub struct LinearTest {
    p: LinearTestParams,
}

impl LinearTest {
    pub fn new(p: LinearTestParams) -> Result<Self> {
        check_timing(p.tau, p.horizon)?;
        Ok(Self { p })
    }
}

impl PlantModel for LinearTest {
    fn name(&self) -> &str {
        "linear-test"
    }
    fn state_dim(&self) -> usize {
        2
    }
    fn input_dim(&self) -> usize {
        1
    }
    fn output_dim(&self) -> usize {
        1
    }
    fn disturbance_dim(&self) -> usize {
        0
    }

    fn dynamics(&self, x: &[f64], u: &[f64], _d: &[f64], dx: &mut [f64]) {
        dx[0] = x[1];
        dx[1] = u[0];
    }

    fn output(&self, x: &[f64], y: &mut [f64]) {
        y[0] = x[0];
    }

    fn equilibrium_guess(&self) -> Vector {
        Vector::zeros(2)
    }
    fn nominal_input(&self) -> Vector {
        Vector::zeros(1)
    }
    fn nominal_disturbance(&self) -> Vector {
        Vector::zeros(0)
    }
    fn sampling_period(&self) -> f64 {
        self.p.tau
    }
    fn horizon(&self) -> f64 {
        self.p.horizon
    }
    fn input_bounds(&self) -> Vec<InputBounds> {
        vec![InputBounds::UNBOUNDED]
    }
    fn error_channels(&self) -> Vec<ErrorChannel> {
        vec![ErrorChannel::standard(0, 0.0)]
    }
    fn noise_std(&self) -> Vec<f64> {
        vec![self.p.noise_std]
    }

    fn sample_parameters(&self, rng: &mut StreamRng) -> Vec<f64> {
        let delta = self.p.displacement;
        if delta > 0.0 {
            vec![rng.random_range(-delta..=delta)]
        } else {
            vec![0.0]
        }
    }

    fn disturbance(&self, _params: &[f64], _t: f64, _d: &mut [f64]) {}

    fn events(&self, _params: &[f64]) -> Vec<Event> {
        Vec::new()
    }

    fn initial_state(&self, params: &[f64], equilibrium: &Vector) -> Vector {
        let mut x = equilibrium.clone();
        x[0] += params[0];
        x
    }

    fn safety(&self) -> SafetySpec {
        let p = self.p.clone();
        SafetySpec::new(
            format!(
                "|x1| <= {} and (t >= {} -> |x1| <= {})",
                p.bound, p.settle_time, p.settle_band
            ),
            move |t, x, _| {
                x[0].abs() <= p.bound && (t < p.settle_time || x[0].abs() <= p.settle_band)
            },
        )
    }
}
