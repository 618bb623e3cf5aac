//! Instability filter on the sampled linearized closed loop, plus the
//! perturbation-bound diagnostics.

use serde::{Deserialize, Serialize};

use crate::controller::{DecentralizedController, StateSpaceController};
use crate::error::{Error, Result};
use crate::model::{linearize, Plant};
use crate::numerics::{discretize_pair, mat_exp, norm2, spectrum, Matrix, Spectrum};

/// Rejection margin on the spectral radius.
pub const EPS_STAB: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Verdict {
    Accept,
    Reject,
}

/// Plant-side part of the linearization; reusable across controllers.
#[derive(Debug, Clone, PartialEq)]
pub struct PlantLinearization {
    pub a: Matrix,
    pub b: Matrix,
    /// Output Jacobian `∂o/∂x`.
    pub c: Matrix,
    /// Error-space feedback matrix: the linearized error is `e = −c_fb·δx`.
    pub c_fb: Matrix,
    pub g: Matrix,
    pub h: Matrix,
    pub tau: f64,
}

impl PlantLinearization {
    /// Linearizes at the plant's refined equilibrium and discretizes with ZOH.
    pub fn new(plant: &Plant) -> Result<Self> {
        let model = plant.model.as_ref();
        let (a, b, c) = linearize(model, &plant.x_e, &plant.u_e)?;
        let channels = model.error_channels();
        let mut c_fb = Matrix::zeros(channels.len(), model.state_dim());
        for (i, ch) in channels.iter().enumerate() {
            c_fb.row_mut(i)
                .copy_from(&(c.row(ch.output) * (ch.sign * ch.scale)));
        }
        Self::from_matrices(a, b, c, c_fb, model.sampling_period())
    }

    pub fn from_matrices(a: Matrix, b: Matrix, c: Matrix, c_fb: Matrix, tau: f64) -> Result<Self> {
        let (g, h) = discretize_pair(&a, &b, tau)?;
        if c_fb.ncols() != a.nrows() {
            return Err(Error::DimensionMismatch(format!(
                "feedback matrix has {} columns for {} states",
                c_fb.ncols(),
                a.nrows()
            )));
        }
        Ok(Self {
            a,
            b,
            c,
            c_fb,
            g,
            h,
            tau,
        })
    }

    /// Forms the closed loop with a controller in state-space form.
    pub fn close_loop(&self, ctrl: &StateSpaceController) -> Result<ClosedLoopLinearization> {
        let n = self.g.nrows();
        let nc = ctrl.state_dim();
        if ctrl.inputs() != self.c_fb.nrows() || ctrl.outputs() != self.h.ncols() {
            return Err(Error::DimensionMismatch(format!(
                "controller maps {} errors to {} inputs; plant has {} errors and {} inputs",
                ctrl.inputs(),
                ctrl.outputs(),
                self.c_fb.nrows(),
                self.h.ncols()
            )));
        }
        let mut ghat = Matrix::zeros(n + nc, n + nc);
        let hd = &self.h * &ctrl.d;
        ghat.view_mut((0, 0), (n, n))
            .copy_from(&(&self.g - &hd * &self.c_fb));
        if nc > 0 {
            ghat.view_mut((0, n), (n, nc))
                .copy_from(&(&self.h * &ctrl.c));
            ghat.view_mut((n, 0), (nc, n))
                .copy_from(&(-(&ctrl.h * &self.c_fb)));
            ghat.view_mut((n, n), (nc, nc)).copy_from(&ctrl.g);
        }
        let (spectrum, verdict) = spectral_verdict(&ghat)?;
        Ok(ClosedLoopLinearization {
            plant: self.clone(),
            controller: ctrl.clone(),
            ghat,
            spectrum,
            verdict,
        })
    }
}

/// Sampled linear closed loop on the stacked state `(δx, x_c)`:
///
/// `Ĝ = [[G − H·D_c·C_fb, H·C_c], [−H_c·C_fb, G_c]]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ClosedLoopLinearization {
    pub plant: PlantLinearization,
    pub controller: StateSpaceController,
    pub ghat: Matrix,
    pub spectrum: Spectrum,
    pub verdict: Verdict,
}

pub fn linearize_closed_loop(
    plant: &Plant,
    controller: &DecentralizedController,
) -> Result<ClosedLoopLinearization> {
    PlantLinearization::new(plant)?.close_loop(&controller.to_state_space())
}

/// Rejects a transition matrix whose spectral radius exceeds `1 + EPS_STAB`.
pub fn spectral_verdict(ghat: &Matrix) -> Result<(Spectrum, Verdict)> {
    let spectrum = spectrum(ghat)?;
    let verdict = if spectrum.spectral_radius > 1.0 + EPS_STAB {
        Verdict::Reject
    } else {
        Verdict::Accept
    };
    Ok((spectrum, verdict))
}

/// Necessary condition only: `Accept` does not prove stability.
pub fn stability_check(lin: &ClosedLoopLinearization) -> Verdict {
    lin.verdict
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PerturbationBounds {
    pub gamma: f64,
    pub l: f64,
    pub l1: f64,
    pub l2: f64,
    /// Numerical estimate of the growth constant of `‖e^{At}‖ e^{−αt}`.
    pub growth: f64,
    pub alpha: f64,
    pub t: f64,
    pub h1: f64,
    pub h2: f64,
    pub hhat1: f64,
    pub hhat2: f64,
}

/// `(e^{xt} − 1)/x`, continuous through `x = 0`.
fn phi(x: f64, t: f64) -> f64 {
    if (x * t).abs() < 1e-300 {
        t
    } else {
        (x * t).exp_m1() / x
    }
}

const GROWTH_GRID: usize = 10_000;

/// Sup of `‖e^{At}‖₂·e^{−αt}` over a uniform grid on `[0, 10τ]`.
pub fn growth_constant(a: &Matrix, alpha: f64, tau: f64) -> Result<f64> {
    let dt = 10.0 * tau / (GROWTH_GRID - 1) as f64;
    let step = mat_exp(a, dt)?;
    let mut e = Matrix::identity(a.nrows(), a.ncols());
    let mut sup: f64 = 1.0;
    for k in 1..GROWTH_GRID {
        e = &e * &step;
        let t = k as f64 * dt;
        sup = sup.max(norm2(&e) * (-alpha * t).exp());
    }
    Ok(sup)
}

/// Evaluates the perturbation bounds `h1, h2, ĥ1, ĥ2` at time `t`.
pub fn perturbation_bounds(
    lin: &ClosedLoopLinearization,
    gamma: f64,
    t: f64,
) -> Result<PerturbationBounds> {
    if !(gamma > 0.0) || !(t >= 0.0) || !gamma.is_finite() || !t.is_finite() {
        return Err(Error::InvalidArgument(format!(
            "bounds need gamma > 0 and t >= 0, got gamma = {gamma}, t = {t}"
        )));
    }
    let p = &lin.plant;
    let ctl = &lin.controller;
    let dc_c = &ctl.d * &p.c_fb;
    let n_cc = norm2(&ctl.c);
    let n_dc = norm2(&ctl.d);
    let n_dcc = norm2(&dc_c);
    let l = norm2(&p.a) + gamma;
    let l1 = norm2(&(&p.b * &ctl.c)) + gamma * n_cc;
    let l2 = norm2(&(&p.b * &dc_c)) + gamma * n_dcc + gamma * gamma * n_dc;

    let a_max = spectrum(&p.a)?
        .eigenvalues
        .iter()
        .map(|z| z.re)
        .fold(f64::NEG_INFINITY, f64::max);
    let alpha = if p.a.nrows() == 0 { 1.0 } else { a_max + 1.0 };
    let growth = growth_constant(&p.a, alpha, p.tau)?;

    let grow_l = (l * t).exp_m1();
    let h1 = (l * t).exp() + grow_l * l2 / l;
    let h2 = grow_l * l1 / l;
    // (e^{Lt} − e^{αt})/(L − α) = e^{αt}·φ(L − α, t)
    let cross = (alpha * t).exp() * phi(l - alpha, t);
    let tail = phi(alpha, t);
    let hhat1 = growth * (1.0 + l2 / l) * cross + growth * (n_dcc + gamma * n_dc - l2 / l) * tail;
    let hhat2 = growth * l1 / l * cross + growth * (n_cc - l1 / l) * tail;
    Ok(PerturbationBounds {
        gamma,
        l,
        l1,
        l2,
        growth,
        alpha,
        t,
        h1,
        h2,
        hhat1,
        hhat2,
    })
}
