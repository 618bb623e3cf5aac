//! Glucose-insulin regulation with three random meals.

use super::{check_timing, normal, overridable};
use crate::error::Result;
use crate::model::{
    ErrorChannel, Event, EventKind, InputBounds, PlantModel, SafetySpec, StreamRng,
};
use crate::numerics::Vector;

/// Converts grams of carbohydrate to mmol of glucose (molar mass 180.16 g/mol).
pub const GLUCOSE_MMOL_PER_GRAM: f64 = 1000.0 / 180.16;

const Q1: usize = 0;
const Q2: usize = 1;
const G1: usize = 2;
const G2: usize = 3;
const C: usize = 4;
const S1: usize = 5;
const S2: usize = 6;
const I: usize = 7;
const X1: usize = 8;
const X2: usize = 9;
const X3: usize = 10;

#[derive(Debug, Clone, PartialEq)]
pub struct PancreasParams {
    /// Body weight (kg).
    pub w: f64,
    pub k12: f64,
    pub ka1: f64,
    pub ka2: f64,
    pub ka3: f64,
    pub kb1: f64,
    pub kb2: f64,
    pub kb3: f64,
    pub ke: f64,
    pub tmax_i: f64,
    pub tmax_g: f64,
    pub a_g: f64,
    pub k_int: f64,
    pub f_r: f64,
    /// Per-kg coefficients of V_I, V_G, F01 and EGP0.
    pub v_i_per_kg: f64,
    pub v_g_per_kg: f64,
    pub f01_per_kg: f64,
    pub egp0_per_kg: f64,
    /// Basal infusion (U/min).
    pub u_b: f64,
    /// Lower bound on total infusion (U/min).
    pub insulin_min: f64,
    pub reference: f64,
    pub noise_std: f64,
    pub tau: f64,
    pub horizon: f64,
    pub meal0_mean: f64,
    pub meal1_mean: f64,
    pub meal2_mean: f64,
    pub meal_variance: f64,
    pub wait_mean: f64,
    pub wait_variance: f64,
    pub min_wait: f64,
    pub glucose_lo: f64,
    pub glucose_hi: f64,
    pub final_window_start: f64,
    pub final_band: f64,
}

impl Default for PancreasParams {
    fn default() -> Self {
        Self {
            w: 100.0,
            k12: 0.066,
            ka1: 0.006,
            ka2: 0.06,
            ka3: 0.03,
            kb1: 0.0034,
            kb2: 0.056,
            kb3: 0.024,
            ke: 0.138,
            tmax_i: 55.0,
            tmax_g: 40.0,
            a_g: 0.8,
            k_int: 0.025,
            f_r: 0.0,
            v_i_per_kg: 0.12,
            v_g_per_kg: 0.16,
            f01_per_kg: 0.0097,
            egp0_per_kg: 0.0161,
            u_b: 0.05548,
            insulin_min: f64::NEG_INFINITY,
            reference: 6.11,
            noise_std: 0.25,
            tau: 5.0,
            horizon: 1440.0,
            meal0_mean: 50.0,
            meal1_mean: 70.0,
            meal2_mean: 60.0,
            meal_variance: 100.0,
            wait_mean: 300.0,
            wait_variance: 100.0,
            min_wait: 30.0,
            glucose_lo: 4.0,
            glucose_hi: 16.0,
            final_window_start: 1410.0,
            final_band: 0.25,
        }
    }
}

overridable!(
    PancreasParams,
    "ap",
    [
        w,
        k12,
        ka1,
        ka2,
        ka3,
        kb1,
        kb2,
        kb3,
        ke,
        tmax_i,
        tmax_g,
        a_g,
        k_int,
        f_r,
        v_i_per_kg,
        v_g_per_kg,
        f01_per_kg,
        egp0_per_kg,
        u_b,
        insulin_min,
        reference,
        noise_std,
        tau,
        horizon,
        meal0_mean,
        meal1_mean,
        meal2_mean,
        meal_variance,
        wait_mean,
        wait_variance,
        min_wait,
        glucose_lo,
        glucose_hi,
        final_window_start,
        final_band,
    ]
);

/// Eleven-state gluco-regulatory model.
///
/// States are `(Q1, Q2, G1, G2, C, S1, S2, I, x1, x2, x3)`; the single input is
/// the total insulin infusion rate; the sensor reads `C`. Disturbance
/// parameters are `[D0, D1, D2, T1, T2]` in grams and minutes.
#[derive(Debug, Clone)]
pub struct ArtificialPancreas {
    p: PancreasParams,
    v_i: f64,
    v_g: f64,
    f01: f64,
    egp0: f64,
}

impl ArtificialPancreas {
    pub fn new(p: PancreasParams) -> Result<Self> {
        check_timing(p.tau, p.horizon)?;
        Ok(Self {
            v_i: p.v_i_per_kg * p.w,
            v_g: p.v_g_per_kg * p.w,
            f01: p.f01_per_kg * p.w,
            egp0: p.egp0_per_kg * p.w,
            p,
        })
    }

    pub fn params(&self) -> &PancreasParams {
        &self.p
    }

    /// Plasma glucose concentration (mmol/L).
    pub fn glucose(&self, x: &[f64]) -> f64 {
        x[Q1] / self.v_g
    }

    /// Meal onset times `[0, T1, T1 + T2]` for a parameter vector.
    pub fn meal_times(params: &[f64]) -> [f64; 3] {
        [0.0, params[3], params[3] + params[4]]
    }
}

impl PlantModel for ArtificialPancreas {
    fn name(&self) -> &str {
        "artificial-pancreas"
    }
    fn state_dim(&self) -> usize {
        11
    }
    fn input_dim(&self) -> usize {
        1
    }
    fn output_dim(&self) -> usize {
        1
    }
    fn disturbance_dim(&self) -> usize {
        1
    }

    fn dynamics(&self, x: &[f64], u: &[f64], d: &[f64], dx: &mut [f64]) {
        let p = &self.p;
        let u_g = x[G2] / p.tmax_g;
        let g = x[Q1] / self.v_g;
        dx[Q1] =
            -self.f01 - x[X1] * x[Q1] + p.k12 * x[Q2] - p.f_r + self.egp0 * (1.0 - x[X3]) + u_g;
        dx[Q2] = x[X1] * x[Q1] - (p.k12 + x[X2]) * x[Q2];
        dx[G1] = -x[G1] / p.tmax_g + p.a_g * d[0];
        dx[G2] = (x[G1] - x[G2]) / p.tmax_g;
        dx[C] = p.k_int * (g - x[C]);
        dx[S1] = u[0] - x[S1] / p.tmax_i;
        dx[S2] = (x[S1] - x[S2]) / p.tmax_i;
        dx[I] = x[S2] / (p.tmax_i * self.v_i) - p.ke * x[I];
        dx[X1] = -p.ka1 * x[X1] + p.kb1 * x[I];
        dx[X2] = -p.ka2 * x[X2] + p.kb2 * x[I];
        dx[X3] = -p.ka3 * x[X3] + p.kb3 * x[I];
    }

    fn output(&self, x: &[f64], y: &mut [f64]) {
        y[0] = x[C];
    }

    fn equilibrium_guess(&self) -> Vector {
        let p = &self.p;
        let s = p.u_b * p.tmax_i;
        let i = s / (p.tmax_i * self.v_i * p.ke);
        let x1 = p.kb1 / p.ka1 * i;
        let x2 = p.kb2 / p.ka2 * i;
        let x3 = p.kb3 / p.ka3 * i;
        let net = self.egp0 * (1.0 - x3) - self.f01 - p.f_r;
        let q1 = (net * (p.k12 + x2) / (x1 * x2)).max(0.0);
        let q2 = x1 * q1 / (p.k12 + x2);
        let g = q1 / self.v_g;
        Vector::from_vec(vec![q1, q2, 0.0, 0.0, g, s, s, i, x1, x2, x3])
    }

    fn nominal_input(&self) -> Vector {
        Vector::from_element(1, self.p.u_b)
    }

    fn nominal_disturbance(&self) -> Vector {
        Vector::zeros(1)
    }

    fn sampling_period(&self) -> f64 {
        self.p.tau
    }
    fn horizon(&self) -> f64 {
        self.p.horizon
    }

    fn input_bounds(&self) -> Vec<InputBounds> {
        vec![InputBounds {
            lo: self.p.insulin_min,
            hi: f64::INFINITY,
        }]
    }

    fn error_channels(&self) -> Vec<ErrorChannel> {
        vec![ErrorChannel::standard(0, self.p.reference)]
    }

    fn noise_std(&self) -> Vec<f64> {
        vec![self.p.noise_std]
    }

    fn sample_parameters(&self, rng: &mut StreamRng) -> Vec<f64> {
        let p = &self.p;
        let meals = [p.meal0_mean, p.meal1_mean, p.meal2_mean]
            .map(|m| normal(rng, m, p.meal_variance).max(0.0));
        let t1 = normal(rng, p.wait_mean, p.wait_variance).max(p.min_wait);
        let t2 = normal(rng, p.wait_mean, p.wait_variance).max(p.min_wait);
        vec![meals[0], meals[1], meals[2], t1, t2]
    }

    fn disturbance(&self, _params: &[f64], _t: f64, d: &mut [f64]) {
        d[0] = 0.0;
    }

    fn events(&self, params: &[f64]) -> Vec<Event> {
        Self::meal_times(params)
            .iter()
            .zip(&params[..3])
            .map(|(&time, &grams)| Event {
                time,
                kind: EventKind::Impulse {
                    channel: 0,
                    amount: grams * GLUCOSE_MMOL_PER_GRAM,
                },
            })
            .collect()
    }

    fn initial_state(&self, _params: &[f64], equilibrium: &Vector) -> Vector {
        equilibrium.clone()
    }

    fn safety(&self) -> SafetySpec {
        let v_g = self.v_g;
        let p = self.p.clone();
        SafetySpec::new(
            format!(
                "G in [{}, {}] and (t >= {} -> |G - {}| <= {})",
                p.glucose_lo, p.glucose_hi, p.final_window_start, p.reference, p.final_band
            ),
            move |t, x, _| {
                let g = x[Q1] / v_g;
                let in_range = (p.glucose_lo..=p.glucose_hi).contains(&g);
                let settled = t < p.final_window_start || (g - p.reference).abs() <= p.final_band;
                in_range && settled
            },
        )
    }
}
