//! Online multi-observer: unknown-input state estimation and algebraic fault
//! reconstruction from output derivatives.

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::integrate::rk4;
use crate::multimodel::{check_convex, ModelBank};
use crate::synthesis::UioDesign;

/// Default time constant of the output differentiator (s).
pub const DEFAULT_TAU_F: f64 = 0.01;

/// First-order filtered differentiator `s / (τ s + 1)` applied channel-wise.
///
/// Discretized ramp-invariantly (input assumed linear between samples), so a
/// ramp is differentiated exactly once the initial transient has decayed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DerivFilter {
    /// Low-pass filtered output.
    pub y_filt: DVector<f64>,
    /// Last derivative estimate `(y − y_filt) / τ`.
    pub y_dot: DVector<f64>,
    /// Previous raw sample, needed by the ramp-invariant update.
    pub y_prev: DVector<f64>,
}

impl DerivFilter {
    /// Starts at rest on the sample `y0` (zero derivative estimate).
    pub fn new(y0: &DVector<f64>) -> Self {
        Self {
            y_filt: y0.clone(),
            y_dot: DVector::zeros(y0.len()),
            y_prev: y0.clone(),
        }
    }
}

pub fn deriv_filter_step(
    filter: &DerivFilter,
    y: &DVector<f64>,
    dt: f64,
    tau_f: f64,
) -> Result<(DerivFilter, DVector<f64>)> {
    if !(dt > 0.0) {
        return Err(Error::NonPositiveStep(dt));
    }
    if !(tau_f > 0.0) {
        return Err(Error::Config(format!("filter time constant must be > 0, got {tau_f}")));
    }
    if y.len() != filter.y_filt.len() {
        return Err(Error::Dimension {
            context: "derivative filter",
            expected: filter.y_filt.len().to_string(),
            found: y.len().to_string(),
        });
    }
    let y_filt = lowpass_ramp(&filter.y_filt, &filter.y_prev, y, dt, tau_f);
    let y_dot = (y - &y_filt) / tau_f;
    Ok((
        DerivFilter {
            y_filt,
            y_dot: y_dot.clone(),
            y_prev: y.clone(),
        },
        y_dot,
    ))
}

/// One step of `τ ż = v − z` with `v` moving linearly from `v0` to `v1` over `dt`.
fn lowpass_ramp(z: &DVector<f64>, v0: &DVector<f64>, v1: &DVector<f64>, dt: f64, tau: f64) -> DVector<f64> {
    let decay = (-dt / tau).exp();
    let slope = (v1 - v0) / dt;
    z * decay + v0 * (1.0 - decay) + slope * (dt - tau * (1.0 - decay))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObserverState {
    pub x_hat_f: DVector<f64>,
    pub f_hat: DVector<f64>,
    pub deriv_filter: DerivFilter,
    /// `Σ μ_i H_i C (A_i x̂_f + B_i u_f + ΔX_i)` passed through the same low-pass
    /// as the output, so that `f̂` sees matched filtering on both terms.
    pub prediction_filt: DVector<f64>,
}

impl ObserverState {
    pub fn new(x0: DVector<f64>, y0: &DVector<f64>, s: usize) -> Self {
        Self {
            x_hat_f: x0,
            f_hat: DVector::zeros(s),
            deriv_filter: DerivFilter::new(y0),
            prediction_filt: DVector::zeros(s),
        }
    }
}

fn check_dims(
    design: &UioDesign,
    bank: &ModelBank,
    mu: &[f64],
    y_len: usize,
    x_len: usize,
    u_len: usize,
) -> Result<()> {
    check_convex(mu, bank.len())?;
    if design.h_proj.len() != bank.len() || design.k2.len() != bank.len() {
        return Err(Error::Dimension {
            context: "observer design",
            expected: format!("{} models", bank.len()),
            found: format!("{} projectors, {} gains", design.h_proj.len(), design.k2.len()),
        });
    }
    let md = &bank.models[0];
    let found = (y_len, x_len, u_len);
    let expected = (md.p(), md.n(), md.m());
    if found != expected {
        return Err(Error::Dimension {
            context: "observer signals (y, x, u)",
            expected: format!("{expected:?}"),
            found: format!("{found:?}"),
        });
    }
    Ok(())
}

/// `f̂ = Σ μ_i H_i (ẏ − C (A_i x̂_f + B_i u_f + ΔX_i))`.
pub fn fault_estimate(
    design: &UioDesign,
    bank: &ModelBank,
    mu: &[f64],
    y_dot: &DVector<f64>,
    x_hat_f: &DVector<f64>,
    u_f: &DVector<f64>,
) -> Result<DVector<f64>> {
    check_dims(design, bank, mu, y_dot.len(), x_hat_f.len(), u_f.len())?;
    Ok(fault_estimate_unchecked(design, bank, mu, y_dot, x_hat_f, u_f))
}

fn fault_estimate_unchecked(
    design: &UioDesign,
    bank: &ModelBank,
    mu: &[f64],
    y_dot: &DVector<f64>,
    x_hat_f: &DVector<f64>,
    u_f: &DVector<f64>,
) -> DVector<f64> {
    let s = bank.models[0].s();
    let zero_fault = DVector::zeros(s);
    let mut f_hat = DVector::zeros(s);
    for ((w, md), h) in mu.iter().zip(&bank.models).zip(&design.h_proj) {
        if *w == 0.0 {
            continue;
        }
        let predicted = &md.c_mat * md.rhs(x_hat_f, u_f, &zero_fault);
        f_hat += h * (y_dot - predicted) * *w;
    }
    f_hat
}

/// Right-hand side of the unknown-input observer,
/// `Σ μ_i (A_i x̂_f + B_i u_f + L_i f̂ + ΔX_i + K₂ᵢ (y − C x̂_f))`, with `f̂` evaluated
/// from `y_dot` at the same instant.
pub fn observer_rhs(
    design: &UioDesign,
    bank: &ModelBank,
    mu: &[f64],
    x_hat_f: &DVector<f64>,
    u_f: &DVector<f64>,
    y: &DVector<f64>,
    y_dot: &DVector<f64>,
) -> DVector<f64> {
    let f_hat = fault_estimate_unchecked(design, bank, mu, y_dot, x_hat_f, u_f);
    let mut dx = DVector::zeros(x_hat_f.len());
    for ((w, md), k2) in mu.iter().zip(&bank.models).zip(&design.k2) {
        if *w == 0.0 {
            continue;
        }
        let innovation = y - &md.c_mat * x_hat_f;
        dx += (md.rhs(x_hat_f, u_f, &f_hat) + k2 * innovation) * *w;
    }
    dx
}

/// Advances the observer over one sample interval.
///
/// `u_f` is the command applied during the interval and `y` the measurement at
/// its end. The differentiator is updated first; its estimate is held over the
/// interval while `y` is interpolated linearly from the previous sample. The
/// reported `f̂` is the fault estimate with both the output derivative and the
/// model prediction seen through the differentiator's low-pass, i.e. a
/// first-order filtered version of the exact-derivative estimate. Without the
/// matching filter on the prediction, `f̂` reacts to `u_f` instantly but to the
/// plant response only after the filter lag.
#[allow(clippy::too_many_arguments)]
pub fn uio_step(
    design: &UioDesign,
    bank: &ModelBank,
    state: &ObserverState,
    u_f: &DVector<f64>,
    y: &DVector<f64>,
    mu: &[f64],
    dt: f64,
    tau_f: f64,
) -> Result<ObserverState> {
    check_dims(design, bank, mu, y.len(), state.x_hat_f.len(), u_f.len())?;
    let (deriv_filter, y_dot) = deriv_filter_step(&state.deriv_filter, y, dt, tau_f)?;
    let y_prev = &state.deriv_filter.y_prev;
    let x_hat_f = integrate_interval(&state.x_hat_f, dt, y_prev, y, |x, y_t| {
        observer_rhs(design, bank, mu, x, u_f, y_t, &y_dot)
    });
    let p_start = projected_prediction(design, bank, mu, &state.x_hat_f, u_f);
    let p_end = projected_prediction(design, bank, mu, &x_hat_f, u_f);
    let prediction_filt = lowpass_ramp(&state.prediction_filt, &p_start, &p_end, dt, tau_f);
    let mut f_hat = -&prediction_filt;
    for (w, h) in mu.iter().zip(&design.h_proj) {
        f_hat += h * &y_dot * *w;
    }
    Ok(ObserverState {
        x_hat_f,
        f_hat,
        deriv_filter,
        prediction_filt,
    })
}

fn projected_prediction(
    design: &UioDesign,
    bank: &ModelBank,
    mu: &[f64],
    x_hat_f: &DVector<f64>,
    u_f: &DVector<f64>,
) -> DVector<f64> {
    let zero_y_dot = DVector::zeros(bank.models[0].p());
    -fault_estimate_unchecked(design, bank, mu, &zero_y_dot, x_hat_f, u_f)
}

/// RK4 over one interval of an observer driven by a linearly interpolated
/// measurement. Time is carried as an extra state so the stages see the right
/// interpolation point.
pub(crate) fn integrate_interval(
    x: &DVector<f64>,
    dt: f64,
    y0: &DVector<f64>,
    y1: &DVector<f64>,
    rhs: impl Fn(&DVector<f64>, &DVector<f64>) -> DVector<f64>,
) -> DVector<f64> {
    let n = x.len();
    let aug = x.clone().insert_row(n, 0.0);
    let out = rk4(&aug, dt, |z| {
        let frac = z[n] / dt;
        let y_t = y0 + (y1 - y0) * frac;
        let dx = rhs(&z.rows(0, n).into_owned(), &y_t);
        dx.insert_row(n, 1.0)
    });
    out.rows(0, n).into_owned()
}

/// Fault-free reference observer `x̂̇ = Σ μ_i (A_i x̂ + B_i u + ΔX_i + K_i (y − C x̂))`.
#[allow(clippy::too_many_arguments)]
pub fn luenberger_step(
    gains: &[nalgebra::DMatrix<f64>],
    bank: &ModelBank,
    x_hat: &DVector<f64>,
    u: &DVector<f64>,
    y_prev: &DVector<f64>,
    y: &DVector<f64>,
    mu: &[f64],
    dt: f64,
) -> Result<DVector<f64>> {
    check_convex(mu, bank.len())?;
    if gains.len() != bank.len() {
        return Err(Error::Dimension {
            context: "reference observer gains",
            expected: bank.len().to_string(),
            found: gains.len().to_string(),
        });
    }
    let s = bank.models[0].s();
    let zero_fault = DVector::zeros(s);
    Ok(integrate_interval(x_hat, dt, y_prev, y, |x, y_t| {
        let mut dx = DVector::zeros(x.len());
        for ((w, md), k) in mu.iter().zip(&bank.models).zip(gains) {
            if *w == 0.0 {
                continue;
            }
            dx += (md.rhs(x, u, &zero_fault) + k * (y_t - &md.c_mat * x)) * *w;
        }
        dx
    }))
}
