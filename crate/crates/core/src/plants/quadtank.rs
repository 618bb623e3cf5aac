//! Four interconnected water tanks under decentralized level control.

use rand::Rng;

use super::{check_timing, normal, overridable};
use crate::error::Result;
use crate::model::{
    ErrorChannel, Event, EventKind, InputBounds, PlantModel, SafetySpec, StreamRng,
};
use crate::numerics::Vector;

/// Sampled values per disturbance event: two removals, two valve settings.
const PER_EVENT: usize = 4;

#[derive(Debug, Clone, PartialEq)]
pub struct QuadTankParams {
    pub area1: f64,
    pub area2: f64,
    pub area3: f64,
    pub area4: f64,
    pub outlet1: f64,
    pub outlet2: f64,
    pub outlet3: f64,
    pub outlet4: f64,
    pub k1: f64,
    pub k2: f64,
    pub kc: f64,
    /// Gravity in cm/s².
    pub g: f64,
    pub gamma1_mean: f64,
    pub gamma2_mean: f64,
    pub gamma_variance: f64,
    pub gamma_min: f64,
    pub gamma_max: f64,
    pub removal_max: f64,
    pub event_period: f64,
    pub r1: f64,
    pub r2: f64,
    pub u1_nominal: f64,
    pub u2_nominal: f64,
    pub u_min: f64,
    pub u_max: f64,
    pub noise_variance: f64,
    pub level_min: f64,
    pub level_max: f64,
    pub settle_time: f64,
    pub band: f64,
    pub tau: f64,
    pub horizon: f64,
}

impl Default for QuadTankParams {
    fn default() -> Self {
        Self {
            area1: 28.0,
            area2: 32.0,
            area3: 28.0,
            area4: 32.0,
            outlet1: 0.071,
            outlet2: 0.057,
            outlet3: 0.071,
            outlet4: 0.057,
            k1: 3.33,
            k2: 3.35,
            kc: 0.5,
            g: 981.0,
            gamma1_mean: 0.7,
            gamma2_mean: 0.6,
            gamma_variance: 0.223,
            gamma_min: 0.05,
            gamma_max: 0.95,
            removal_max: 3.0,
            event_period: 60.0,
            r1: 12.4,
            r2: 12.7,
            u1_nominal: 3.0,
            u2_nominal: 3.0,
            u_min: 0.0,
            u_max: 24.0,
            noise_variance: 0.33,
            level_min: 0.0,
            level_max: 20.0,
            settle_time: 5.0,
            band: 1.0,
            tau: 0.1,
            horizon: 180.0,
        }
    }
}

overridable!(
    QuadTankParams,
    "qt",
    [
        area1,
        area2,
        area3,
        area4,
        outlet1,
        outlet2,
        outlet3,
        outlet4,
        k1,
        k2,
        kc,
        g,
        gamma1_mean,
        gamma2_mean,
        gamma_variance,
        gamma_min,
        gamma_max,
        removal_max,
        event_period,
        r1,
        r2,
        u1_nominal,
        u2_nominal,
        u_min,
        u_max,
        noise_variance,
        level_min,
        level_max,
        settle_time,
        band,
        tau,
        horizon,
    ]
);

/// Levels `(h1, h2, h3, h4)`; pump voltages `(u1, u2)`; sensors `kc·h1, kc·h2`.
///
/// Disturbance events happen every `event_period` from `t = 0`. Each one
/// lowers `h1` and `h2` by `U(0, removal_max)` and redraws the valve settings,
/// which are carried as the disturbance `d = [γ1, γ2]`.
#[derive(Debug, Clone)]
pub struct QuadTank {
    p: QuadTankParams,
    event_count: usize,
}

impl QuadTank {
    pub fn new(p: QuadTankParams) -> Result<Self> {
        check_timing(p.tau, p.horizon)?;
        let event_count = if p.event_period > 0.0 {
            ((p.horizon / p.event_period) - 1e-9).floor() as usize + 1
        } else {
            1
        };
        Ok(Self { p, event_count })
    }

    pub fn params(&self) -> &QuadTankParams {
        &self.p
    }

    pub fn event_count(&self) -> usize {
        self.event_count
    }

    fn sample_gamma(&self, rng: &mut StreamRng, mean: f64) -> f64 {
        let p = &self.p;
        for _ in 0..100 {
            let g = normal(rng, mean, p.gamma_variance);
            if g > p.gamma_min && g < p.gamma_max {
                return g;
            }
        }
        normal(rng, mean, p.gamma_variance).clamp(p.gamma_min, p.gamma_max)
    }

    fn event_index(&self, t: f64) -> usize {
        if self.p.event_period <= 0.0 {
            return 0;
        }
        ((t / self.p.event_period + 1e-9).floor().max(0.0) as usize).min(self.event_count - 1)
    }
}

impl PlantModel for QuadTank {
    fn name(&self) -> &str {
        "quad-tank"
    }
    fn state_dim(&self) -> usize {
        4
    }
    fn input_dim(&self) -> usize {
        2
    }
    fn output_dim(&self) -> usize {
        2
    }
    fn disturbance_dim(&self) -> usize {
        2
    }

    fn dynamics(&self, x: &[f64], u: &[f64], d: &[f64], dx: &mut [f64]) {
        let p = &self.p;
        let q = |a: f64, h: f64| a * (2.0 * p.g * h.max(0.0)).sqrt();
        let (q1, q2, q3, q4) = (
            q(p.outlet1, x[0]),
            q(p.outlet2, x[1]),
            q(p.outlet3, x[2]),
            q(p.outlet4, x[3]),
        );
        let (g1, g2) = (d[0], d[1]);
        let (f1, f2) = (p.k1 * u[0], p.k2 * u[1]);
        dx[0] = (-q1 + q3 + g1 * f1) / p.area1;
        dx[1] = (-q2 + q4 + g2 * f2) / p.area2;
        dx[2] = (-q3 + (1.0 - g2) * f2) / p.area3;
        dx[3] = (-q4 + (1.0 - g1) * f1) / p.area4;
    }

    fn output(&self, x: &[f64], y: &mut [f64]) {
        y[0] = self.p.kc * x[0];
        y[1] = self.p.kc * x[1];
    }

    fn equilibrium_guess(&self) -> Vector {
        Vector::from_vec(vec![12.4, 12.7, 1.8, 1.4])
    }

    fn nominal_input(&self) -> Vector {
        Vector::from_vec(vec![self.p.u1_nominal, self.p.u2_nominal])
    }

    fn nominal_disturbance(&self) -> Vector {
        Vector::from_vec(vec![self.p.gamma1_mean, self.p.gamma2_mean])
    }

    fn sampling_period(&self) -> f64 {
        self.p.tau
    }
    fn horizon(&self) -> f64 {
        self.p.horizon
    }

    fn input_bounds(&self) -> Vec<InputBounds> {
        let b = InputBounds {
            lo: self.p.u_min,
            hi: self.p.u_max,
        };
        vec![b, b]
    }

    fn error_channels(&self) -> Vec<ErrorChannel> {
        // levels, not volts: e = r − y/kc
        let scale = 1.0 / self.p.kc;
        vec![
            ErrorChannel {
                output: 0,
                reference: self.p.r1,
                sign: 1.0,
                scale,
            },
            ErrorChannel {
                output: 1,
                reference: self.p.r2,
                sign: 1.0,
                scale,
            },
        ]
    }

    fn noise_std(&self) -> Vec<f64> {
        let s = self.p.noise_variance.max(0.0).sqrt();
        vec![s, s]
    }

    fn sample_parameters(&self, rng: &mut StreamRng) -> Vec<f64> {
        let p = &self.p;
        let mut out = Vec::with_capacity(PER_EVENT * self.event_count);
        for _ in 0..self.event_count {
            let r1 = rng.random::<f64>() * p.removal_max;
            let r2 = rng.random::<f64>() * p.removal_max;
            let g1 = self.sample_gamma(rng, p.gamma1_mean);
            let g2 = self.sample_gamma(rng, p.gamma2_mean);
            out.extend_from_slice(&[r1, r2, g1, g2]);
        }
        out
    }

    fn disturbance(&self, params: &[f64], t: f64, d: &mut [f64]) {
        let j = self.event_index(t) * PER_EVENT;
        d[0] = params[j + 2];
        d[1] = params[j + 3];
    }

    fn events(&self, _params: &[f64]) -> Vec<Event> {
        (0..self.event_count)
            .map(|j| Event {
                time: j as f64 * self.p.event_period,
                kind: EventKind::Reset { ordinal: j },
            })
            .collect()
    }

    fn apply_reset(&self, params: &[f64], ordinal: usize, x: &mut [f64]) {
        let j = ordinal * PER_EVENT;
        x[0] = (x[0] - params[j]).max(0.0);
        x[1] = (x[1] - params[j + 1]).max(0.0);
    }

    fn project(&self, x: &mut [f64]) {
        for h in x.iter_mut() {
            *h = h.max(0.0);
        }
    }

    fn initial_state(&self, _params: &[f64], equilibrium: &Vector) -> Vector {
        equilibrium.clone()
    }

    fn safety(&self) -> SafetySpec {
        let p = self.p.clone();
        SafetySpec::new(
            format!(
                "h in [{}, {}] and |h_i - r_i| <= {} on [t_d + {}, t_d + {}) for i = 1, 2",
                p.level_min, p.level_max, p.band, p.settle_time, p.event_period
            ),
            move |t, x, _| {
                if x.iter().any(|h| !(p.level_min..=p.level_max).contains(h)) {
                    return false;
                }
                let since = if p.event_period > 0.0 {
                    t - (t / p.event_period + 1e-9).floor() * p.event_period
                } else {
                    t
                };
                since < p.settle_time - 1e-9
                    || ((x[0] - p.r1).abs() <= p.band && (x[1] - p.r2).abs() <= p.band)
            },
        )
    }
}
