//! Closed-loop scenarios: plant, both observers and the fault-tolerant
//! controller stepped together with fault injection, logged to a [`SimTrace`].

mod fault;
mod metrics;
mod trace;

use std::path::Path;

use nalgebra::{DMatrix, DVector, Vector2, Vector6};
use rand::{rngs::StdRng, SeedableRng};
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

pub use fault::{fault_signal, FaultKind, FaultProfile};
pub use metrics::{inferred_onset, metrics, Metrics, SETTLE_BAND};
pub use trace::SimTrace;

use crate::error::{Error, Result};
use crate::ftc::{self, Reference};
use crate::integrate::rk4;
use crate::multimodel::{BankConfig, FaultConvention, ModelBank};
use crate::observer::{self, ObserverState, DEFAULT_TAU_F};
use crate::plant::{self, PlantState, Trim, TrmsParams, DEFAULT_INPUT_LIMIT};
use crate::synthesis::{Design, FeedbackWeights};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum ControllerKind {
    #[default]
    StateFeedback,
    Hinf,
}

impl ControllerKind {
    /// Default `(ζ, ρ)` of each nominal controller variant.
    pub fn preset(self) -> FeedbackWeights {
        match self {
            ControllerKind::StateFeedback => FeedbackWeights { zeta: 2.0, rho: 700.0 },
            ControllerKind::Hinf => FeedbackWeights { zeta: 10.0, rho: 700.0 },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ControllerConfig {
    #[serde(rename = "type")]
    pub kind: ControllerKind,
    pub zeta: Option<f64>,
    pub rho: Option<f64>,
    /// Symmetric actuator limit (V).
    pub u_limit: f64,
    /// Scale on `f̂` in the compensation term; 0 disables fault compensation.
    pub compensation: f64,
}

impl Default for ControllerConfig {
    fn default() -> Self {
        Self {
            kind: ControllerKind::StateFeedback,
            zeta: None,
            rho: None,
            u_limit: DEFAULT_INPUT_LIMIT,
            compensation: 1.0,
        }
    }
}

impl ControllerConfig {
    pub fn weights(&self) -> FeedbackWeights {
        let preset = self.kind.preset();
        FeedbackWeights {
            zeta: self.zeta.unwrap_or(preset.zeta),
            rho: self.rho.unwrap_or(preset.rho),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ObserverConfig {
    /// Output differentiator time constant (s). Smaller values cut the
    /// estimation lag and amplify measurement noise.
    pub tau_f: f64,
}

impl Default for ObserverConfig {
    fn default() -> Self {
        Self { tau_f: DEFAULT_TAU_F }
    }
}

/// Which plant the loop runs against.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum PlantModel {
    #[default]
    Nonlinear,
    /// Local model `i` of the bank, frozen.
    Frozen(usize),
}

/// Source of the output derivative used for fault reconstruction.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum DerivativeSource {
    #[default]
    Filtered,
    /// Exact `ẏ` from the plant model; only available for frozen plants.
    Exact,
}

/// Optional Gaussian measurement noise on `y`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseConfig {
    pub std: f64,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimConfig {
    pub dt: f64,
    pub t_end: f64,
    /// Plant initial state; defaults to the trim of the initial reference.
    pub initial_state: Option<[f64; 6]>,
    /// Initial guess of both observers; defaults to the trim of the initial reference.
    pub observer_initial_state: Option<[f64; 6]>,
    pub reference: Reference,
    pub plant: PlantModel,
    pub derivative: DerivativeSource,
    pub noise: Option<NoiseConfig>,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            dt: 1e-3,
            t_end: 50.0,
            initial_state: None,
            observer_initial_state: None,
            reference: Reference::default(),
            plant: PlantModel::Nonlinear,
            derivative: DerivativeSource::Filtered,
            noise: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(default, deny_unknown_fields)]
pub struct ScenarioConfig {
    pub params: TrmsParams,
    pub bank: BankConfig,
    pub controller: ControllerConfig,
    pub observer: ObserverConfig,
    pub fault: FaultProfile,
    pub sim: SimConfig,
}

impl ScenarioConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn from_file(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn build_bank(&self) -> Result<ModelBank> {
        self.params.validate()?;
        ModelBank::build(&self.params, &self.bank, self.controller.u_limit)
    }

    pub fn design(&self) -> Result<Design> {
        Design::synthesize(self.build_bank()?, self.controller.weights())
    }

    fn validate(&self, design: &Design) -> Result<()> {
        self.params.validate()?;
        let sim = &self.sim;
        if !(sim.dt > 0.0 && sim.dt.is_finite()) {
            return Err(Error::NonPositiveStep(sim.dt));
        }
        if !(sim.t_end >= 0.0 && sim.t_end.is_finite()) {
            return Err(Error::Config(format!("t_end must be >= 0, got {}", sim.t_end)));
        }
        if !(self.controller.u_limit > 0.0) {
            return Err(Error::Config("u_limit must be positive".into()));
        }
        if !(self.observer.tau_f > 0.0) {
            return Err(Error::Config("tau_f must be positive".into()));
        }
        if !self.controller.compensation.is_finite() {
            return Err(Error::Config("compensation scale must be finite".into()));
        }
        if let PlantModel::Frozen(i) = sim.plant {
            if i >= design.bank.len() {
                return Err(Error::Config(format!("frozen model {i} not in a bank of {}", design.bank.len())));
            }
        } else if sim.derivative == DerivativeSource::Exact {
            return Err(Error::Config("exact output derivative needs a frozen plant".into()));
        }
        if let Some(n) = sim.noise {
            if !(n.std >= 0.0 && n.std.is_finite()) {
                return Err(Error::Config("noise std must be >= 0".into()));
            }
        }
        self.fault.validate(design.bank.models[0].s(), sim.t_end)?;
        sim.reference.validate(&self.params, self.controller.u_limit)
    }
}

fn dvec6(v: &Vector6<f64>) -> DVector<f64> {
    DVector::from_column_slice(v.as_slice())
}

fn arr6(v: &DVector<f64>) -> [f64; 6] {
    v.as_slice().try_into().expect("state dimension is 6")
}

/// Continuous-time plant with fault injection.
struct FaultyPlant<'a> {
    params: &'a TrmsParams,
    design: &'a Design,
    model: PlantModel,
    /// Fixed fault distribution for torque-channel injection; `None` means the
    /// fault adds to the actuator command.
    l_fixed: Option<DMatrix<f64>>,
}

impl FaultyPlant<'_> {
    fn rhs(&self, x: &Vector6<f64>, u: &Vector2<f64>, f: &DVector<f64>) -> Vector6<f64> {
        let (u_eff, extra) = match &self.l_fixed {
            None => (u + Vector2::new(f[0], f[1]), None),
            Some(l) => (*u, Some(l * f)),
        };
        let mut dx = match self.model {
            PlantModel::Nonlinear => plant::dynamics_vec(x, &u_eff, self.params),
            PlantModel::Frozen(i) => {
                let md = &self.design.bank.models[i];
                let out = &md.a_mat * dvec6(x) + &md.b_mat * DVector::from_column_slice(u_eff.as_slice()) + &md.delta_x;
                Vector6::from_column_slice(out.as_slice())
            }
        };
        if let Some(e) = extra {
            dx += Vector6::from_column_slice(e.as_slice());
        }
        dx
    }
}

struct TrimCache {
    key: Option<(f64, f64)>,
    trim: Option<Trim>,
}

impl TrimCache {
    fn get(&mut self, reference: &Reference, t: f64, params: &TrmsParams, u_limit: f64) -> Result<Trim> {
        let key = reference.at(t);
        if self.key != Some(key) {
            self.trim = Some(plant::trim(key.0, key.1, params, u_limit)?);
            self.key = Some(key);
        }
        Ok(self.trim.expect("trim cached above"))
    }
}

/// Synthesizes the design from the config and runs the scenario.
pub fn run_scenario(config: &ScenarioConfig) -> Result<SimTrace> {
    let design = config.design()?;
    run_scenario_with(config, &design)
}

/// Runs a scenario against a precomputed design.
///
/// Per sample: measure `y`; update both observers with the command applied over
/// the previous interval; schedule `μ` from the reference estimate's pitch;
/// compute the nominal and fault-tolerant commands; inject the fault; advance
/// the plant one RK4 step; log.
pub fn run_scenario_with(config: &ScenarioConfig, design: &Design) -> Result<SimTrace> {
    config.validate(design)?;
    let params = &config.params;
    let sim = &config.sim;
    let bank = &design.bank;
    let u_limit = config.controller.u_limit;
    let c_mat = bank.c_mat().clone();
    let s = bank.models[0].s();
    let dt = sim.dt;
    let steps = (sim.t_end / dt).round() as usize;

    let l_fixed = match &config.bank.fault_spec.fault {
        FaultConvention::Actuator => None,
        FaultConvention::Matrix(_) => Some(bank.models[0].l_mat.clone()),
    };
    if l_fixed.is_none() && s != 2 {
        return Err(Error::Config("actuator fault convention needs two fault channels".into()));
    }
    let plant_model = FaultyPlant {
        params,
        design,
        model: sim.plant,
        l_fixed,
    };

    let mut trims = TrimCache { key: None, trim: None };
    let trim0 = trims.get(&sim.reference, 0.0, params, u_limit)?;
    let mut x = match sim.initial_state {
        Some(v) => Vector6::from_column_slice(&v),
        None => trim0.state.to_vector(),
    };
    if !PlantState::from_vector(&x).is_finite() {
        return Err(Error::NonFinite("initial state"));
    }
    let x_obs0 = match sim.observer_initial_state {
        Some(v) => DVector::from_column_slice(&v),
        None => dvec6(&trim0.state.to_vector()),
    };

    let mut rng = sim.noise.map(|n| (StdRng::seed_from_u64(n.seed), Normal::new(0.0, n.std)));
    let mut measure = |x: &Vector6<f64>| -> Result<DVector<f64>> {
        let mut y = &c_mat * dvec6(x);
        if let Some((rng, normal)) = rng.as_mut() {
            let normal = normal.as_ref().map_err(|e| Error::Config(e.to_string()))?;
            for v in y.iter_mut() {
                *v += normal.sample(rng);
            }
        }
        Ok(y)
    };

    let mut x_prev = x;
    let mut y = measure(&x)?;
    let mut uio = ObserverState::new(x_obs0.clone(), &y, s);
    let mut x_hat = x_obs0;
    let mut y_prev = y.clone();
    let mut u_prev = DVector::<f64>::zeros(2);
    let mut u_nom_prev = DVector::<f64>::zeros(2);
    let mut f_prev = DVector::<f64>::zeros(s);
    let mut mu = bank.weights(x_hat[0]);

    let mut trace = SimTrace {
        dt,
        ..Default::default()
    };
    let cap = steps + 1;
    trace.t.reserve(cap);

    for k in 0..=steps {
        let t = k as f64 * dt;
        if k > 0 {
            y = measure(&x)?;
            uio = match sim.derivative {
                DerivativeSource::Filtered => {
                    observer::uio_step(&design.uio, bank, &uio, &u_prev, &y, &mu, dt, config.observer.tau_f)?
                }
                DerivativeSource::Exact => {
                    exact_derivative_step(design, &plant_model, &uio, &x_prev, &u_prev, &f_prev, &y, &mu, dt)?
                }
            };
            x_hat = observer::luenberger_step(
                &design.reference_observer.k,
                bank,
                &x_hat,
                &u_nom_prev,
                &y_prev,
                &y,
                &mu,
                dt,
            )?;
            y_prev = y.clone();
        }

        mu = bank.weights(x_hat[0]);
        let trim = trims.get(&sim.reference, t, params, u_limit)?;
        let u_nom = ftc::nominal_control(&design.gains, &mu, &x_hat, &trim, u_limit)?;
        let f_hat_used = &uio.f_hat * config.controller.compensation;
        let u_f = ftc::ftc_augment(&design.gains, &mu, &u_nom, &f_hat_used, &x_hat, &uio.x_hat_f, u_limit)?;
        let f = fault_signal(&config.fault, t, s);

        trace.t.push(t);
        trace.x.push(x.into());
        trace.x_hat.push(arr6(&x_hat));
        trace.x_hat_f.push(arr6(&uio.x_hat_f));
        let (rv, rh) = sim.reference.at(t);
        trace.reference.push([rv, rh]);
        trace.u.push([u_f[0], u_f[1]]);
        trace.f.push(f.as_slice().to_vec());
        trace.f_hat.push(uio.f_hat.as_slice().to_vec());

        if k < steps {
            let u2 = Vector2::new(u_f[0], u_f[1]);
            x_prev = x;
            x = rk4(&x, dt, |z| plant_model.rhs(z, &u2, &f));
            if !x.iter().all(|v| v.is_finite()) {
                return Err(Error::NonFinite("plant state during simulation"));
            }
        }
        u_prev = u_f;
        u_nom_prev = u_nom;
        f_prev = f;
    }
    Ok(trace)
}

/// Observer update with the true output derivative of a frozen plant: plant and
/// observer are integrated jointly over the interval so every RK stage sees the
/// exact `ẏ = C ẋ`.
#[allow(clippy::too_many_arguments)]
fn exact_derivative_step(
    design: &Design,
    plant_model: &FaultyPlant<'_>,
    obs: &ObserverState,
    x_start: &Vector6<f64>,
    u: &DVector<f64>,
    f: &DVector<f64>,
    y_end: &DVector<f64>,
    mu: &[f64],
    dt: f64,
) -> Result<ObserverState> {
    let n = 6;
    let bank = &design.bank;
    let c_mat = bank.c_mat();
    let u2 = Vector2::new(u[0], u[1]);
    let mut joint = DVector::zeros(2 * n);
    joint.rows_mut(0, n).copy_from(&dvec6(x_start));
    joint.rows_mut(n, n).copy_from(&obs.x_hat_f);
    let out = rk4(&joint, dt, |z| {
        let xp = Vector6::from_column_slice(z.rows(0, n).as_slice());
        let dxp = plant_model.rhs(&xp, &u2, f);
        let y = c_mat * dvec6(&xp);
        let y_dot = c_mat * dvec6(&dxp);
        let xo = z.rows(n, n).into_owned();
        let dxo = observer::observer_rhs(&design.uio, bank, mu, &xo, u, &y, &y_dot);
        let mut d = DVector::zeros(2 * n);
        d.rows_mut(0, n).copy_from(&dvec6(&dxp));
        d.rows_mut(n, n).copy_from(&dxo);
        d
    });
    let x_end = Vector6::from_column_slice(out.rows(0, n).as_slice());
    let x_hat_f = out.rows(n, n).into_owned();
    let y_dot = c_mat * dvec6(&plant_model.rhs(&x_end, &u2, f));
    let f_hat = observer::fault_estimate(&design.uio, bank, mu, &y_dot, &x_hat_f, u)?;
    Ok(ObserverState {
        x_hat_f,
        f_hat,
        deriv_filter: observer::DerivFilter {
            y_filt: y_end.clone(),
            y_dot,
            y_prev: y_end.clone(),
        },
        prediction_filt: obs.prediction_filt.clone(),
    })
}
