//! Nonlinear twin-rotor (TRMS) dynamics.
//!
//! State ordering is `[alpha_v, s_v, u_vv, alpha_h, s_h, u_hh]`, input ordering
//! `[u_v, u_h]`. Pitch is driven by the main rotor, yaw by the tail rotor; the two
//! planes couple through the rotor reaction terms in the angular rates and the
//! centrifugal torque on the pitch axis.

use std::path::Path;

use nalgebra::{Vector2, Vector6};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::integrate::rk4;

/// Polynomial without constant term: `c[0]·x + c[1]·x² + …`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Polynomial(pub Vec<f64>);

impl Polynomial {
    pub fn eval(&self, x: f64) -> f64 {
        x * self.0.iter().rev().fold(0.0, |acc, &c| acc * x + c)
    }

    pub fn derivative(&self, x: f64) -> f64 {
        self.0
            .iter()
            .enumerate()
            .rev()
            .fold(0.0, |acc, (k, &c)| acc * x + (k as f64 + 1.0) * c)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Channel {
    Main,
    Tail,
}

/// Physical constants of the rig. Every field may be overridden from a flat JSON
/// document; absent keys keep the defaults.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrmsParams {
    pub a_const: f64,
    pub b_const: f64,
    pub c_const: f64,
    pub d_const: f64,
    pub e_const: f64,
    pub f_const: f64,
    pub h_const: f64,
    pub s_f: f64,
    pub j_v: f64,
    pub j_mr: f64,
    pub j_tr: f64,
    pub l_m: f64,
    pub l_t: f64,
    pub t_mr: f64,
    pub t_tr: f64,
    pub k_mr: f64,
    pub k_tr: f64,
    pub k_v: f64,
    pub k_h: f64,
    pub g: f64,
    /// Main rotor speed as a function of the internal motor voltage.
    pub main_speed: Polynomial,
    /// Main rotor thrust as a function of rotor speed.
    pub main_thrust: Polynomial,
    pub tail_speed: Polynomial,
    /// Tail thrust. The linear coefficient (0.8080) is an order of magnitude
    /// above the main-rotor one; kept as tabulated.
    pub tail_thrust: Polynomial,
}

impl Default for TrmsParams {
    fn default() -> Self {
        Self {
            a_const: 0.0946875,
            b_const: 0.11046,
            c_const: 0.01986,
            d_const: 0.04988,
            e_const: 0.004745,
            f_const: 0.006230,
            h_const: 0.048210,
            s_f: 0.000843318,
            j_v: 0.055448,
            j_mr: 0.000016543,
            j_tr: 0.0000265,
            l_m: 0.24,
            l_t: 0.25,
            t_mr: 1.432,
            t_tr: 0.3842,
            k_mr: 1.0,
            k_tr: 1.0,
            k_v: 0.0095,
            k_h: 0.00545371,
            g: 9.81,
            main_speed: Polynomial(vec![1238.41, 63.45, -1238.64, -129.26, 599.73, 90.90]),
            main_thrust: Polynomial(vec![9.544e-2, -1.632e-4, 4.123e-6, 1.09e-9, -3.48e-12]),
            tail_speed: Polynomial(vec![3796.83, -262.87, -4283.15, 194.69, 2020.0]),
            tail_thrust: Polynomial(vec![0.8080, -1.808e-4, 2.511e-7, 1.595e-11, -3e-14]),
        }
    }
}

impl TrmsParams {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("j_v", self.j_v),
            ("j_mr", self.j_mr),
            ("j_tr", self.j_tr),
            ("t_mr", self.t_mr),
            ("t_tr", self.t_tr),
            ("l_m", self.l_m),
            ("l_t", self.l_t),
            ("g", self.g),
            ("d_const", self.d_const),
            ("e_const", self.e_const),
            ("f_const", self.f_const),
        ];
        for (name, v) in positive {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::InvalidParameter {
                    name,
                    reason: format!("must be finite and > 0, got {v}"),
                });
            }
        }
        let finite = [
            ("a_const", self.a_const),
            ("b_const", self.b_const),
            ("c_const", self.c_const),
            ("h_const", self.h_const),
            ("s_f", self.s_f),
            ("k_mr", self.k_mr),
            ("k_tr", self.k_tr),
            ("k_v", self.k_v),
            ("k_h", self.k_h),
        ];
        for (name, v) in finite {
            if !v.is_finite() {
                return Err(Error::InvalidParameter {
                    name,
                    reason: "must be finite".into(),
                });
            }
        }
        let polys = [
            ("main_speed", &self.main_speed),
            ("main_thrust", &self.main_thrust),
            ("tail_speed", &self.tail_speed),
            ("tail_thrust", &self.tail_thrust),
        ];
        for (name, p) in polys {
            if p.0.iter().any(|c| !c.is_finite()) {
                return Err(Error::InvalidParameter {
                    name,
                    reason: "coefficients must be finite".into(),
                });
            }
        }
        Ok(())
    }

    /// Reads a flat JSON override document.
    pub fn from_json_file(path: impl AsRef<Path>) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let params: Self = serde_json::from_str(&text)?;
        params.validate()?;
        Ok(params)
    }

    /// Pitch angle at which gravity torque vanishes (`tan α = (A − B) / C`).
    pub fn rest_angle(&self) -> f64 {
        (self.a_const - self.b_const).atan2(self.c_const)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct PlantState {
    pub alpha_v: f64,
    pub s_v: f64,
    pub u_vv: f64,
    pub alpha_h: f64,
    pub s_h: f64,
    pub u_hh: f64,
}

impl PlantState {
    pub fn to_vector(&self) -> Vector6<f64> {
        Vector6::new(self.alpha_v, self.s_v, self.u_vv, self.alpha_h, self.s_h, self.u_hh)
    }

    pub fn from_vector(v: &Vector6<f64>) -> Self {
        Self {
            alpha_v: v[0],
            s_v: v[1],
            u_vv: v[2],
            alpha_h: v[3],
            s_h: v[4],
            u_hh: v[5],
        }
    }

    pub fn from_slice(v: &[f64]) -> Result<Self> {
        if v.len() != 6 {
            return Err(Error::Dimension {
                context: "plant state",
                expected: "6".into(),
                found: v.len().to_string(),
            });
        }
        Ok(Self::from_vector(&Vector6::from_column_slice(v)))
    }

    pub fn is_finite(&self) -> bool {
        self.to_vector().iter().all(|v| v.is_finite())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct ControlInput {
    pub u_v: f64,
    pub u_h: f64,
}

/// Default symmetric actuator limit (V).
pub const DEFAULT_INPUT_LIMIT: f64 = 2.5;

impl ControlInput {
    pub fn new(u_v: f64, u_h: f64) -> Self {
        Self { u_v, u_h }
    }

    pub fn to_vector(&self) -> Vector2<f64> {
        Vector2::new(self.u_v, self.u_h)
    }

    pub fn from_vector(v: &Vector2<f64>) -> Self {
        Self::new(v[0], v[1])
    }

    pub fn saturate(&self, limit: f64) -> Self {
        Self::new(self.u_v.clamp(-limit, limit), self.u_h.clamp(-limit, limit))
    }
}

pub fn rotor_speed(params: &TrmsParams, channel: Channel, u_internal: f64) -> Result<f64> {
    if !u_internal.is_finite() {
        return Err(Error::NonFinite("rotor_speed"));
    }
    Ok(speed_poly(params, channel).eval(u_internal))
}

pub fn thrust(params: &TrmsParams, channel: Channel, omega: f64) -> Result<f64> {
    if !omega.is_finite() {
        return Err(Error::NonFinite("thrust"));
    }
    Ok(thrust_poly(params, channel).eval(omega))
}

fn speed_poly(params: &TrmsParams, channel: Channel) -> &Polynomial {
    match channel {
        Channel::Main => &params.main_speed,
        Channel::Tail => &params.tail_speed,
    }
}

fn thrust_poly(params: &TrmsParams, channel: Channel) -> &Polynomial {
    match channel {
        Channel::Main => &params.main_thrust,
        Channel::Tail => &params.tail_thrust,
    }
}

/// Gravity return torque on the pitch axis.
pub fn gravity_torque(alpha_v: f64, params: &TrmsParams) -> f64 {
    params.g * ((params.a_const - params.b_const) * alpha_v.cos() - params.c_const * alpha_v.sin())
}

pub fn centrifugal_torque(alpha_v: f64, omega_h: f64, params: &TrmsParams) -> f64 {
    -omega_h * omega_h * params.h_const * alpha_v.sin() * alpha_v.cos()
}

/// Yaw-axis inertia, which depends on the pitch angle.
pub fn horizontal_inertia(alpha_v: f64, params: &TrmsParams) -> f64 {
    let (s, c) = alpha_v.sin_cos();
    params.d_const * c * c + params.e_const * s * s + params.f_const
}

/// Beam angular rates `(Ω_v, Ω_h)` including the rotor reaction terms.
pub fn angular_rates(state: &PlantState, params: &TrmsParams) -> (f64, f64) {
    let omega_t = params.tail_speed.eval(state.u_hh);
    let omega_m = params.main_speed.eval(state.u_vv);
    let omega_v = state.s_v + params.j_tr * omega_t / params.j_v;
    let omega_h = state.s_h
        + params.j_mr * omega_m * state.alpha_v.cos() / horizontal_inertia(state.alpha_v, params);
    (omega_v, omega_h)
}

/// State derivative of the nonlinear plant.
///
/// The rotor reaction term in both angular rates is `J_mr·ω_m(u_vv)·cos α_v / J_h`, and
/// the tail torque projects through `cos α_v`.
pub fn dynamics(state: &PlantState, input: &ControlInput, params: &TrmsParams) -> PlantState {
    let alpha_v = state.alpha_v;
    let (omega_v, omega_h) = angular_rates(state, params);
    let j_h = horizontal_inertia(alpha_v, params);

    let f_v = params.main_thrust.eval(params.main_speed.eval(state.u_vv));
    let f_h = params.tail_thrust.eval(params.tail_speed.eval(state.u_hh));

    let pitch_torque = params.l_m * params.s_f * f_v - params.k_v * omega_v
        + gravity_torque(alpha_v, params)
        + centrifugal_torque(alpha_v, omega_h, params);
    let yaw_torque = params.l_t * params.s_f * f_h * alpha_v.cos() - params.k_h * omega_h;

    PlantState {
        alpha_v: omega_v,
        s_v: pitch_torque / params.j_v,
        u_vv: (-state.u_vv + params.k_mr * input.u_v) / params.t_mr,
        alpha_h: omega_h,
        s_h: yaw_torque / j_h,
        u_hh: (-state.u_hh + params.k_tr * input.u_h) / params.t_tr,
    }
}

pub fn dynamics_vec(x: &Vector6<f64>, u: &Vector2<f64>, params: &TrmsParams) -> Vector6<f64> {
    dynamics(&PlantState::from_vector(x), &ControlInput::from_vector(u), params).to_vector()
}

/// One classical RK4 step with the input held constant over `dt`.
pub fn step(state: &PlantState, input: &ControlInput, dt: f64, params: &TrmsParams) -> Result<PlantState> {
    if !(dt > 0.0) {
        return Err(Error::NonPositiveStep(dt));
    }
    let u = input.to_vector();
    let next = rk4(&state.to_vector(), dt, |x| dynamics_vec(x, &u, params));
    Ok(PlantState::from_vector(&next))
}

/// An equilibrium `(x*, u*)` of the plant.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Trim {
    pub state: PlantState,
    pub input: ControlInput,
}

const TRIM_SCAN_INTERVALS: usize = 2000;
const TRIM_RESIDUAL_TOL: f64 = 1e-8;

/// Solves for an equilibrium at the requested pitch and yaw angles.
///
/// Yaw is neutrally stable, so any `alpha_h_ref` is admissible; zero net yaw torque
/// forces the tail rotor to rest and the horizontal momentum to cancel the main
/// rotor reaction. The main-motor voltage is the root of the pitch torque balance
/// with the smallest magnitude inside `[-u_limit, u_limit]`.
pub fn trim(alpha_v_ref: f64, alpha_h_ref: f64, params: &TrmsParams, u_limit: f64) -> Result<Trim> {
    if !alpha_v_ref.is_finite() || !alpha_h_ref.is_finite() {
        return Err(Error::NonFinite("trim"));
    }
    let infeasible = |reason: String| Error::InfeasibleTrim {
        alpha_v: alpha_v_ref,
        reason,
    };
    if params.k_mr == 0.0 {
        return Err(infeasible("main motor gain is zero".into()));
    }

    let gravity = gravity_torque(alpha_v_ref, params);
    let balance = |u_v: f64| {
        let omega_m = params.main_speed.eval(params.k_mr * u_v);
        params.l_m * params.s_f * params.main_thrust.eval(omega_m) + gravity
    };

    let u_v = smallest_root(balance, -u_limit, u_limit, TRIM_SCAN_INTERVALS).ok_or_else(|| {
        infeasible(format!(
            "no main-rotor voltage within ±{u_limit} V balances gravity torque {gravity:.6}"
        ))
    })?;

    let u_vv = params.k_mr * u_v;
    let omega_m = params.main_speed.eval(u_vv);
    let s_h = -params.j_mr * omega_m * alpha_v_ref.cos() / horizontal_inertia(alpha_v_ref, params);
    let state = PlantState {
        alpha_v: alpha_v_ref,
        s_v: 0.0,
        u_vv,
        alpha_h: alpha_h_ref,
        s_h,
        u_hh: 0.0,
    };
    let input = ControlInput::new(u_v, 0.0);

    let residual = dynamics(&state, &input, params).to_vector().norm();
    if residual > TRIM_RESIDUAL_TOL {
        return Err(infeasible(format!("equilibrium residual {residual:e} above tolerance")));
    }
    Ok(Trim { state, input })
}

/// Root of `f` on `[lo, hi]` closest to zero, located by a uniform sign scan and
/// refined by bisection.
fn smallest_root(f: impl Fn(f64) -> f64, lo: f64, hi: f64, intervals: usize) -> Option<f64> {
    let mut best: Option<f64> = None;
    let mut consider = |r: f64| {
        if best.is_none_or(|b| r.abs() < b.abs()) {
            best = Some(r);
        }
    };
    let h = (hi - lo) / intervals as f64;
    let mut a = lo;
    let mut fa = f(a);
    for k in 1..=intervals {
        let b = if k == intervals { hi } else { lo + h * k as f64 };
        let fb = f(b);
        if fa == 0.0 {
            consider(a);
        } else if fa * fb < 0.0 {
            consider(bisect(&f, a, b, fa));
        }
        a = b;
        fa = fb;
    }
    if fa == 0.0 {
        consider(a);
    }
    best
}

fn bisect(f: &impl Fn(f64) -> f64, mut a: f64, mut b: f64, mut fa: f64) -> f64 {
    for _ in 0..200 {
        let m = 0.5 * (a + b);
        if m <= a || m >= b {
            break;
        }
        let fm = f(m);
        if fm == 0.0 {
            return m;
        }
        if fa * fm < 0.0 {
            b = m;
        } else {
            a = m;
            fa = fm;
        }
    }
    let fb = f(b);
    if fa.abs() <= fb.abs() {
        a
    } else {
        b
    }
}
