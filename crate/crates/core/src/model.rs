//! Sampled-data stochastic plant abstraction.

use std::fmt;
use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{fd_jacobian, Matrix, Vector};

/// Random generator used for every stream in the crate.
pub type StreamRng = ChaCha12Rng;

/// Purpose tags separating independent random streams.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
#[repr(u64)]
pub enum StreamTag {
    Disturbance = 0x6469_7374,
    Noise = 0x6e6f_6973,
    Candidates = 0x6361_6e64,
    Synthetic = 0x7379_6e74,
}

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Derives a 64-bit key from a parent key and a label.
pub fn derive_key(parent: u64, label: u64) -> u64 {
    splitmix(splitmix(parent) ^ label.rotate_left(17))
}

/// Opens the stream `(key, tag)` at position `counter`.
///
/// Streams for different counters never overlap, so callers can draw
/// them in any order.
pub fn stream(key: u64, tag: StreamTag, counter: u64) -> StreamRng {
    let mut seed = [0u8; 32];
    let words = [
        splitmix(key),
        splitmix(key ^ tag as u64),
        splitmix(tag as u64),
        splitmix(key.wrapping_add(1)),
    ];
    for (chunk, w) in seed.chunks_exact_mut(8).zip(words) {
        chunk.copy_from_slice(&w.to_le_bytes());
    }
    let mut rng = StreamRng::from_seed(seed);
    rng.set_stream(counter);
    rng
}

/// Everything random about one trajectory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UncertaintyRealization {
    pub index: u64,
    pub disturbance_params: Vec<f64>,
    pub noise_seed: u64,
}

/// Instantaneous disturbance applied during integration.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum EventKind {
    /// Adds `amount / h` to disturbance channel `channel` over the integration
    /// step of length `h` containing the event.
    Impulse { channel: usize, amount: f64 },
    /// Discrete state jump handled by [`PlantModel::apply_reset`].
    Reset { ordinal: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Event {
    pub time: f64,
    pub kind: EventKind,
}

/// How a measurement turns into a tracking error:
/// `e = sign · (reference − scale · y[output])`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ErrorChannel {
    pub output: usize,
    pub reference: f64,
    pub sign: f64,
    pub scale: f64,
}

impl ErrorChannel {
    pub fn standard(output: usize, reference: f64) -> Self {
        Self {
            output,
            reference,
            sign: 1.0,
            scale: 1.0,
        }
    }

    pub fn error(&self, y: &[f64]) -> f64 {
        self.sign * (self.reference - self.scale * y[self.output])
    }
}

/// Closed interval on an input channel; infinite ends mean unbounded.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InputBounds {
    pub lo: f64,
    pub hi: f64,
}

impl InputBounds {
    pub const UNBOUNDED: Self = Self {
        lo: f64::NEG_INFINITY,
        hi: f64::INFINITY,
    };

    pub fn clamp(&self, v: f64) -> f64 {
        v.clamp(self.lo, self.hi)
    }
}

/// Continuous-time plant with sampled noisy outputs and a finite-dimensional
/// random disturbance model.
///
/// Controller channel `i` reads error channel `i` and drives input `i`; the
/// applied input is `clamp(nominal_input[i] + u_controller[i])`.
pub trait PlantModel: Send + Sync {
    fn name(&self) -> &str;
    fn state_dim(&self) -> usize;
    fn input_dim(&self) -> usize;
    fn output_dim(&self) -> usize;
    fn disturbance_dim(&self) -> usize;

    /// Writes `f(x, u, d)` into `dx`.
    fn dynamics(&self, x: &[f64], u: &[f64], d: &[f64], dx: &mut [f64]);
    /// Writes the noise-free output `o(x)` into `y`.
    fn output(&self, x: &[f64], y: &mut [f64]);

    /// Declared operating point, refined later by [`find_equilibrium`].
    fn equilibrium_guess(&self) -> Vector;
    fn nominal_input(&self) -> Vector;
    fn nominal_disturbance(&self) -> Vector;

    fn sampling_period(&self) -> f64;
    fn horizon(&self) -> f64;
    fn input_bounds(&self) -> Vec<InputBounds>;
    fn error_channels(&self) -> Vec<ErrorChannel>;
    /// Standard deviation of the additive noise on each output.
    fn noise_std(&self) -> Vec<f64>;

    fn sample_parameters(&self, rng: &mut StreamRng) -> Vec<f64>;
    /// Piecewise-constant part of `d(t)`.
    fn disturbance(&self, params: &[f64], t: f64, d: &mut [f64]);
    fn events(&self, params: &[f64]) -> Vec<Event>;
    fn apply_reset(&self, _params: &[f64], _ordinal: usize, _x: &mut [f64]) {}
    /// Maps an integrated state back onto the physical domain.
    fn project(&self, _x: &mut [f64]) {}
    fn initial_state(&self, params: &[f64], equilibrium: &Vector) -> Vector;

    fn safety(&self) -> SafetySpec;

    /// Number of sampling instants, `T / τ` rounded.
    fn samples(&self) -> usize {
        (self.horizon() / self.sampling_period()).round() as usize
    }
}

type Predicate = dyn Fn(f64, &[f64], &UncertaintyRealization) -> bool + Send + Sync;

/// Time-indexed safety invariant.
#[derive(Clone)]
pub struct SafetySpec {
    pub description: String,
    predicate: Arc<Predicate>,
}

impl SafetySpec {
    pub fn new<F>(description: impl Into<String>, predicate: F) -> Self
    where
        F: Fn(f64, &[f64], &UncertaintyRealization) -> bool + Send + Sync + 'static,
    {
        Self {
            description: description.into(),
            predicate: Arc::new(predicate),
        }
    }

    pub fn holds(&self, t: f64, x: &[f64], realization: &UncertaintyRealization) -> bool {
        (self.predicate)(t, x, realization)
    }
}

impl fmt::Debug for SafetySpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("SafetySpec")
            .field("description", &self.description)
            .finish_non_exhaustive()
    }
}

/// A plant paired with its refined equilibrium and safety invariant.
#[derive(Clone)]
pub struct Plant {
    pub model: Arc<dyn PlantModel>,
    pub safety: SafetySpec,
    pub x_e: Vector,
    pub u_e: Vector,
}

impl fmt::Debug for Plant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Plant")
            .field("name", &self.model.name())
            .field("x_e", &self.x_e.as_slice())
            .field("u_e", &self.u_e.as_slice())
            .finish()
    }
}

impl Plant {
    /// Wraps a model, refining its declared equilibrium by Newton iteration.
    pub fn new(model: Arc<dyn PlantModel>) -> Result<Self> {
        let u_e = model.nominal_input();
        let x_e = find_equilibrium(model.as_ref(), &model.equilibrium_guess(), &u_e)?;
        let safety = model.safety();
        Ok(Self {
            model,
            safety,
            x_e,
            u_e,
        })
    }

    pub fn name(&self) -> &str {
        self.model.name()
    }
}

/// Draws the realization for trajectory `index` of a run seeded by `master_seed`.
pub fn sample_uncertainty(
    plant: &dyn PlantModel,
    master_seed: u64,
    index: u64,
) -> UncertaintyRealization {
    let mut rng = stream(master_seed, StreamTag::Disturbance, index);
    let disturbance_params = plant.sample_parameters(&mut rng);
    UncertaintyRealization {
        index,
        disturbance_params,
        noise_seed: derive_key(derive_key(master_seed, StreamTag::Noise as u64), index),
    }
}

/// Piecewise-constant disturbance at time `t`. Impulsive events are not
/// included; see [`PlantModel::events`].
pub fn evaluate_disturbance(
    plant: &dyn PlantModel,
    realization: &UncertaintyRealization,
    t: f64,
) -> Result<Vector> {
    let horizon = plant.horizon();
    if !(0.0..=horizon * (1.0 + 1e-12)).contains(&t) {
        return Err(Error::OutOfHorizon { t, horizon });
    }
    let mut d = Vector::zeros(plant.disturbance_dim());
    plant.disturbance(&realization.disturbance_params, t, d.as_mut_slice());
    Ok(d)
}

/// Writes `o(x) + η(t_k)` into `y`.
pub fn measure_into(
    plant: &dyn PlantModel,
    noise_std: &[f64],
    x: &[f64],
    realization: &UncertaintyRealization,
    k: u64,
    y: &mut [f64],
) {
    plant.output(x, y);
    if noise_std.iter().all(|s| *s == 0.0) {
        return;
    }
    let mut rng = stream(realization.noise_seed, StreamTag::Noise, k);
    for (yi, s) in y.iter_mut().zip(noise_std) {
        let z: f64 = StandardNormal.sample(&mut rng);
        *yi += s * z;
    }
}

pub fn measure_output(
    plant: &dyn PlantModel,
    x: &Vector,
    realization: &UncertaintyRealization,
    k: u64,
) -> Vector {
    let mut y = Vector::zeros(plant.output_dim());
    measure_into(
        plant,
        &plant.noise_std(),
        x.as_slice(),
        realization,
        k,
        y.as_mut_slice(),
    );
    y
}

/// `f(x, u, d)` as an owned vector.
pub fn eval_dynamics(plant: &dyn PlantModel, x: &Vector, u: &Vector, d: &Vector) -> Vector {
    let mut dx = Vector::zeros(plant.state_dim());
    plant.dynamics(x.as_slice(), u.as_slice(), d.as_slice(), dx.as_mut_slice());
    dx
}

/// Damped Newton solve of `f(x, u, d_nominal) = 0` starting from `guess`.
pub fn find_equilibrium(plant: &dyn PlantModel, guess: &Vector, input: &Vector) -> Result<Vector> {
    const MAX_ITERATIONS: usize = 200;
    const TOLERANCE: f64 = 1e-9;
    let d = plant.nominal_disturbance();
    let f = |x: &Vector| eval_dynamics(plant, x, input, &d);
    let mut x = guess.clone();
    let mut fx = f(&x);
    let mut residual = fx.amax();
    for _ in 0..MAX_ITERATIONS {
        if residual <= TOLERANCE {
            return Ok(x);
        }
        let jac = fd_jacobian(f, &x)?;
        let step = jac
            .svd(true, true)
            .solve(&(-&fx), 1e-12)
            .map_err(|e| Error::InvalidArgument(e.to_string()))?;
        let mut lambda = 1.0;
        loop {
            let trial = &x + &step * lambda;
            let ft = f(&trial);
            let r = ft.amax();
            if r.is_finite() && (r < residual || lambda < 1e-6) {
                x = trial;
                fx = ft;
                residual = r;
                break;
            }
            lambda *= 0.5;
        }
    }
    if residual <= TOLERANCE {
        Ok(x)
    } else {
        Err(Error::NewtonDivergence {
            residual,
            iterations: MAX_ITERATIONS,
        })
    }
}

/// Jacobians `(A, B, C)` of dynamics and output at `(x, u, d_nominal)`.
pub fn linearize(
    plant: &dyn PlantModel,
    x: &Vector,
    u: &Vector,
) -> Result<(Matrix, Matrix, Matrix)> {
    let d = plant.nominal_disturbance();
    let a = fd_jacobian(|xv| eval_dynamics(plant, xv, u, &d), x)?;
    let b = fd_jacobian(|uv| eval_dynamics(plant, x, uv, &d), u)?;
    let c = fd_jacobian(
        |xv| {
            let mut y = Vector::zeros(plant.output_dim());
            plant.output(xv.as_slice(), y.as_mut_slice());
            y
        },
        x,
    )?;
    Ok((a, b, c))
}
