//! Closed-loop sampled-data simulation with zero-order hold.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::controller::DecentralizedController;
use crate::error::{Error, Result};
use crate::model::{measure_into, EventKind, Plant, SafetySpec, UncertaintyRealization};

/// States larger than this in magnitude count as divergence.
pub const DIVERGENCE_THRESHOLD: f64 = 1e12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SolverMode {
    Euler,
    Rk4,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolverConfig {
    pub mode: SolverMode,
    /// Integration steps per sampling period.
    pub substeps: usize,
    /// Relative local-error tolerance for the RK4 step-doubling estimate.
    pub error_tolerance: f64,
}

impl SolverConfig {
    pub fn euler(substeps: usize) -> Self {
        Self {
            mode: SolverMode::Euler,
            substeps,
            error_tolerance: f64::INFINITY,
        }
    }

    pub fn rk4(substeps: usize) -> Self {
        Self {
            mode: SolverMode::Rk4,
            substeps,
            error_tolerance: 1e-6,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SafetyOutcome {
    pub safe: bool,
    pub first_violation_time: Option<f64>,
    pub diverged: bool,
    /// RK4 step-doubling estimate exceeded the tolerance somewhere.
    pub tolerance_breached: bool,
}

/// Recorded closed-loop run. States are stored per grid point, inputs and
/// measurements per sampling instant.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub state_dim: usize,
    pub input_dim: usize,
    pub output_dim: usize,
    pub substeps: usize,
    pub times: Vec<f64>,
    pub states: Vec<f64>,
    pub inputs: Vec<f64>,
    pub measurements: Vec<f64>,
    pub realization: UncertaintyRealization,
    pub diverged_at: Option<f64>,
    pub max_local_error: f64,
    pub tolerance_breaches: usize,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn state(&self, i: usize) -> &[f64] {
        &self.states[i * self.state_dim..(i + 1) * self.state_dim]
    }

    fn sample_of(&self, i: usize) -> usize {
        let samples = self.inputs.len() / self.input_dim.max(1);
        (i / self.substeps).min(samples.saturating_sub(1))
    }

    /// Applied input held at grid point `i`.
    pub fn input_at(&self, i: usize) -> &[f64] {
        let k = self.sample_of(i);
        &self.inputs[k * self.input_dim..(k + 1) * self.input_dim]
    }

    /// Latest measurement at grid point `i`.
    pub fn measurement_at(&self, i: usize) -> &[f64] {
        let k = self.sample_of(i);
        &self.measurements[k * self.output_dim..(k + 1) * self.output_dim]
    }

    /// CSV with header `t,x1..xn,u1..um,y1..yq`, 17 significant digits.
    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        let mut header = vec!["t".to_string()];
        header.extend((1..=self.state_dim).map(|i| format!("x{i}")));
        header.extend((1..=self.input_dim).map(|i| format!("u{i}")));
        header.extend((1..=self.output_dim).map(|i| format!("y{i}")));
        writeln!(w, "{}", header.join(","))?;
        if self.inputs.is_empty() {
            return Ok(());
        }
        for i in 0..self.len() {
            let mut row = format!("{:.16e}", self.times[i]);
            let fields = self
                .state(i)
                .iter()
                .chain(self.input_at(i))
                .chain(self.measurement_at(i));
            for v in fields {
                row.push_str(&format!(",{v:.16e}"));
            }
            writeln!(w, "{row}")?;
        }
        Ok(())
    }
}

/// Summary of an integration run.
#[derive(Debug, Clone, Copy, PartialEq)]
struct RunEnd {
    diverged_at: Option<f64>,
    max_local_error: f64,
    tolerance_breaches: usize,
}

/// View of one grid point handed to the visitor.
struct GridPoint<'a> {
    t: f64,
    x: &'a [f64],
    new_sample: bool,
    u: &'a [f64],
    y: &'a [f64],
}

fn check_layout(plant: &Plant, controller: &DecentralizedController) -> Result<()> {
    let model = plant.model.as_ref();
    let errors = model.error_channels().len();
    if controller.len() != model.input_dim() || errors != model.input_dim() {
        return Err(Error::DimensionMismatch(format!(
            "{} controller channels for {} inputs and {} error channels",
            controller.len(),
            model.input_dim(),
            errors
        )));
    }
    Ok(())
}

fn diverged(x: &[f64]) -> bool {
    x.iter().any(|v| !(v.abs() <= DIVERGENCE_THRESHOLD))
}

/// Integrates the closed loop, calling `visit` at every grid point until it
/// returns `false`.
fn integrate<F>(
    plant: &Plant,
    controller: &DecentralizedController,
    realization: &UncertaintyRealization,
    solver: &SolverConfig,
    mut visit: F,
) -> Result<RunEnd>
where
    F: FnMut(GridPoint<'_>) -> bool,
{
    if solver.substeps == 0 {
        return Err(Error::InvalidArgument(
            "solver needs at least one substep".into(),
        ));
    }
    check_layout(plant, controller)?;
    let model = plant.model.as_ref();
    let params = realization.disturbance_params.as_slice();
    let n = model.state_dim();
    let m_in = model.input_dim();
    let q = model.output_dim();
    let m = solver.substeps;
    let tau = model.sampling_period();
    let h = tau / m as f64;
    let total = model.samples() * m;

    let channels = model.error_channels();
    let bounds = model.input_bounds();
    let noise = model.noise_std();
    let u_nom = model.nominal_input();

    // Events are mapped to grid indices once: resets fire at the first grid
    // point at or after their time, impulses spread over the step containing them.
    let mut resets: Vec<(usize, usize)> = Vec::new();
    let mut impulses: Vec<(usize, usize, f64)> = Vec::new();
    for ev in model.events(params) {
        match ev.kind {
            EventKind::Reset { ordinal } => {
                let g = (ev.time / h - 1e-9).ceil().max(0.0) as usize;
                resets.push((g, ordinal));
            }
            EventKind::Impulse { channel, amount } => {
                let g = (ev.time / h + 1e-9).floor().max(0.0) as usize;
                impulses.push((g, channel, amount));
            }
        }
    }
    resets.sort_by_key(|r| r.0);

    let mut ctrl = controller.clone();
    ctrl.reset();
    let mut x: Vec<f64> = model.initial_state(params, &plant.x_e).as_slice().to_vec();
    let mut y = vec![0.0; q];
    let mut e = vec![0.0; m_in];
    let mut u_ctrl = vec![0.0; m_in];
    let mut u = vec![0.0; m_in];
    let mut d = vec![0.0; model.disturbance_dim()];
    let mut work = Rk4Work::new(n);

    let mut next_reset = 0;
    let mut end = RunEnd {
        diverged_at: None,
        max_local_error: 0.0,
        tolerance_breaches: 0,
    };

    for g in 0..=total {
        let t = g as f64 * h;
        while next_reset < resets.len() && resets[next_reset].0 <= g {
            model.apply_reset(params, resets[next_reset].1, &mut x);
            next_reset += 1;
        }
        let new_sample = g % m == 0 && g < total;
        if new_sample {
            let k = (g / m) as u64;
            measure_into(model, &noise, &x, realization, k, &mut y);
            for (ei, ch) in e.iter_mut().zip(&channels) {
                *ei = ch.error(&y);
            }
            ctrl.step(&e, &mut u_ctrl);
            for i in 0..m_in {
                u[i] = bounds[i].clamp(u_nom[i] + u_ctrl[i]);
            }
        }
        if diverged(&x) || u.iter().any(|v| !v.is_finite()) {
            end.diverged_at = Some(t);
            visit(GridPoint {
                t,
                x: &x,
                new_sample,
                u: &u,
                y: &y,
            });
            break;
        }
        if !visit(GridPoint {
            t,
            x: &x,
            new_sample,
            u: &u,
            y: &y,
        }) || g == total
        {
            break;
        }

        model.disturbance(params, t + 1e-9 * h, &mut d);
        for &(step, channel, amount) in &impulses {
            if step == g {
                d[channel] += amount / h;
            }
        }
        match solver.mode {
            SolverMode::Euler => {
                model.dynamics(&x, &u, &d, &mut work.k1);
                for i in 0..n {
                    x[i] += h * work.k1[i];
                }
            }
            SolverMode::Rk4 => {
                let err = work.doubled_step(model, &mut x, &u, &d, h);
                end.max_local_error = end.max_local_error.max(err);
                if err > solver.error_tolerance {
                    end.tolerance_breaches += 1;
                }
            }
        }
        model.project(&mut x);
    }
    Ok(end)
}

struct Rk4Work {
    k1: Vec<f64>,
    k2: Vec<f64>,
    k3: Vec<f64>,
    k4: Vec<f64>,
    tmp: Vec<f64>,
    full: Vec<f64>,
    half: Vec<f64>,
}

impl Rk4Work {
    fn new(n: usize) -> Self {
        Self {
            k1: vec![0.0; n],
            k2: vec![0.0; n],
            k3: vec![0.0; n],
            k4: vec![0.0; n],
            tmp: vec![0.0; n],
            full: vec![0.0; n],
            half: vec![0.0; n],
        }
    }

    fn step(
        &mut self,
        model: &dyn crate::model::PlantModel,
        x: &mut [f64],
        u: &[f64],
        d: &[f64],
        h: f64,
    ) {
        let n = x.len();
        model.dynamics(x, u, d, &mut self.k1);
        for i in 0..n {
            self.tmp[i] = x[i] + 0.5 * h * self.k1[i];
        }
        model.dynamics(&self.tmp, u, d, &mut self.k2);
        for i in 0..n {
            self.tmp[i] = x[i] + 0.5 * h * self.k2[i];
        }
        model.dynamics(&self.tmp, u, d, &mut self.k3);
        for i in 0..n {
            self.tmp[i] = x[i] + h * self.k3[i];
        }
        model.dynamics(&self.tmp, u, d, &mut self.k4);
        for i in 0..n {
            x[i] += h / 6.0 * (self.k1[i] + 2.0 * self.k2[i] + 2.0 * self.k3[i] + self.k4[i]);
        }
    }

    /// Advances `x` by two half steps and returns the scaled difference to a
    /// single full step.
    fn doubled_step(
        &mut self,
        model: &dyn crate::model::PlantModel,
        x: &mut [f64],
        u: &[f64],
        d: &[f64],
        h: f64,
    ) -> f64 {
        let mut full = std::mem::take(&mut self.full);
        let mut half = std::mem::take(&mut self.half);
        full.copy_from_slice(x);
        half.copy_from_slice(x);
        self.step(model, &mut full, u, d, h);
        self.step(model, &mut half, u, d, 0.5 * h);
        self.step(model, &mut half, u, d, 0.5 * h);
        let err = full
            .iter()
            .zip(&half)
            .map(|(a, b)| (a - b).abs() / b.abs().max(1.0))
            .fold(0.0, f64::max);
        x.copy_from_slice(&half);
        self.full = full;
        self.half = half;
        err
    }
}

/// Records the full closed-loop run for one realization.
pub fn simulate_trajectory(
    plant: &Plant,
    controller: &DecentralizedController,
    realization: &UncertaintyRealization,
    solver: &SolverConfig,
) -> Result<Trajectory> {
    let model = plant.model.as_ref();
    let points = model.samples() * solver.substeps + 1;
    let mut traj = Trajectory {
        state_dim: model.state_dim(),
        input_dim: model.input_dim(),
        output_dim: model.output_dim(),
        substeps: solver.substeps,
        times: Vec::with_capacity(points),
        states: Vec::with_capacity(points * model.state_dim()),
        inputs: Vec::new(),
        measurements: Vec::new(),
        realization: realization.clone(),
        diverged_at: None,
        max_local_error: 0.0,
        tolerance_breaches: 0,
    };
    let end = integrate(plant, controller, realization, solver, |p| {
        traj.times.push(p.t);
        traj.states.extend_from_slice(p.x);
        if p.new_sample {
            traj.inputs.extend_from_slice(p.u);
            traj.measurements.extend_from_slice(p.y);
        }
        true
    })?;
    traj.diverged_at = end.diverged_at;
    traj.max_local_error = end.max_local_error;
    traj.tolerance_breaches = end.tolerance_breaches;
    Ok(traj)
}

/// Simulates and checks the invariant on the fly, stopping at the first
/// violation.
pub fn simulate_outcome(
    plant: &Plant,
    controller: &DecentralizedController,
    realization: &UncertaintyRealization,
    solver: &SolverConfig,
) -> Result<SafetyOutcome> {
    let mut violation = None;
    let end = integrate(plant, controller, realization, solver, |p| {
        if plant.safety.holds(p.t, p.x, realization) {
            true
        } else {
            violation = Some(p.t);
            false
        }
    })?;
    let diverged = end.diverged_at.is_some();
    let first_violation_time = match (violation, end.diverged_at) {
        (Some(v), Some(d)) => Some(v.min(d)),
        (v, d) => v.or(d),
    };
    Ok(SafetyOutcome {
        safe: first_violation_time.is_none(),
        first_violation_time,
        diverged,
        tolerance_breached: end.tolerance_breaches > 0,
    })
}

/// Evaluates the invariant at every recorded grid point.
pub fn safety_outcome(traj: &Trajectory, spec: &SafetySpec) -> SafetyOutcome {
    let violation = (0..traj.len())
        .find(|&i| !spec.holds(traj.times[i], traj.state(i), &traj.realization))
        .map(|i| traj.times[i]);
    let first_violation_time = match (violation, traj.diverged_at) {
        (Some(v), Some(d)) => Some(v.min(d)),
        (v, d) => v.or(d),
    };
    SafetyOutcome {
        safe: first_violation_time.is_none(),
        first_violation_time,
        diverged: traj.diverged_at.is_some(),
        tolerance_breached: traj.tolerance_breaches > 0,
    }
}
