//! Measured quantities behind the acceptance checks. Each function returns a
//! [`Check`] so the acceptance report and the focused tests share one oracle.

use std::time::{Duration, Instant};

use nalgebra::{DMatrix, DVector, Vector2, Vector6};
use rand::{rngs::StdRng, Rng, SeedableRng};
use rand_distr::StandardNormal;

use trms_ftc::ftc::{ftc_command, nominal_command};
use trms_ftc::harness::{
    metrics, run_scenario, DerivativeSource, NoiseConfig, ScenarioConfig,
};
use trms_ftc::integrate::rk4;
use trms_ftc::linalg::eigenvalues;
use trms_ftc::multimodel::{BankConfig, ModelBank};
use trms_ftc::plant::{self, dynamics_vec, gravity_torque, trim, ControlInput, PlantState, Polynomial, TrmsParams};
use trms_ftc::synthesis::{Design, FeedbackWeights};

use super::{frozen_scenario, index_at, offset_trim, spectrum_distance, step_fault, NODES};

pub const EXAMPLE_CONFIG: &str = include_str!("../../configs/scenario.json");

#[derive(Debug, Clone)]
pub struct Check {
    pub name: &'static str,
    pub pass: bool,
    pub detail: String,
}

impl Check {
    fn new(name: &'static str, pass: bool, detail: String) -> Self {
        Self { name, pass, detail }
    }

    pub fn line(&self) -> String {
        format!("{} {}: {}", if self.pass { "PASS" } else { "FAIL" }, self.name, self.detail)
    }
}

pub fn default_design() -> Design {
    let bank = ModelBank::build(&TrmsParams::default(), &BankConfig::default(), 2.5).unwrap();
    Design::synthesize(bank, FeedbackWeights::default()).unwrap()
}

/// Zero of the gravity torque on `[-π/2, 0]` by plain bisection.
pub fn gravity_root(params: &TrmsParams) -> f64 {
    let (mut lo, mut hi) = (-std::f64::consts::FRAC_PI_2, 0.0);
    let g_lo = gravity_torque(lo, params);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if gravity_torque(mid, params).signum() == g_lo.signum() {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

pub fn rest_angle() -> Check {
    let params = TrmsParams::default();
    let dt = 1e-3;
    let steps = 120_000;
    let start = Instant::now();
    let mut state = PlantState::default();
    let zero = ControlInput::default();
    let mut tail_swing: f64 = 0.0;
    for k in 0..steps {
        state = plant::step(&state, &zero, dt, &params).unwrap();
        if k >= steps - 10_000 {
            tail_swing = tail_swing.max(state.alpha_v.abs());
        }
    }
    let elapsed = start.elapsed();
    let root = gravity_root(&params);
    let err_nominal = (state.alpha_v + 0.671).abs();
    let err_root = (state.alpha_v - root).abs();
    let pass = err_nominal <= 0.01 && err_root <= 0.01 && elapsed < Duration::from_secs(1);
    Check::new(
        "rest angle",
        pass,
        format!(
            "alpha_v(120 s) = {:.5} rad, root {:.5}, |err| {:.2e} (tol 0.01), runtime {:.0?} (< 1 s)",
            state.alpha_v, root, err_nominal.max(err_root), elapsed
        ),
    )
}

pub fn pendulum_params() -> TrmsParams {
    TrmsParams {
        k_v: 0.0,
        main_thrust: Polynomial(vec![0.0; 5]),
        tail_thrust: Polynomial(vec![0.0; 5]),
        ..TrmsParams::default()
    }
}

/// `½ J_v Ω_v² − g ((A − B) sin α + C cos α)`.
pub fn pendulum_energy(state: &PlantState, params: &TrmsParams) -> f64 {
    let (omega_v, _) = plant::angular_rates(state, params);
    let (s, c) = state.alpha_v.sin_cos();
    0.5 * params.j_v * omega_v * omega_v
        - params.g * ((params.a_const - params.b_const) * s + params.c_const * c)
}

pub fn energy_conservation() -> Check {
    let params = pendulum_params();
    let mut state = PlantState {
        alpha_v: 0.5,
        ..PlantState::default()
    };
    let e0 = pendulum_energy(&state, &params);
    let zero = ControlInput::default();
    let mut drift: f64 = 0.0;
    for _ in 0..10_000 {
        state = plant::step(&state, &zero, 1e-3, &params).unwrap();
        drift = drift.max((pendulum_energy(&state, &params) - e0).abs() / e0.abs());
    }
    Check::new(
        "energy conservation",
        drift < 1e-6,
        format!("max relative drift over 10 s = {drift:.2e} (tol 1e-6)"),
    )
}

/// Ratio of first-order residuals at `h` and `h/2` along `dir` (state then input).
pub fn linearization_ratio(params: &TrmsParams, model_index: usize, bank: &ModelBank, dir: &[f64; 8], h: f64) -> f64 {
    let md = &bank.models[model_index];
    let x0 = md.op_state.to_vector();
    let u0 = md.op_input.to_vector();
    let f0 = dynamics_vec(&x0, &u0, params);
    let residual = |h: f64| {
        let dx = Vector6::from_fn(|i, _| h * dir[i]);
        let du = Vector2::new(h * dir[6], h * dir[7]);
        let exact = dynamics_vec(&(x0 + dx), &(u0 + du), params) - f0;
        let dxd = DVector::from_column_slice(dx.as_slice());
        let dud = DVector::from_column_slice(du.as_slice());
        let lin = &md.a_mat * dxd + &md.b_mat * dud;
        (DVector::from_column_slice(exact.as_slice()) - lin).norm()
    };
    residual(h) / residual(0.5 * h)
}

pub fn linearization() -> Check {
    let params = TrmsParams::default();
    let bank = ModelBank::build(&params, &BankConfig::default(), 2.5).unwrap();
    let mut rng = StdRng::seed_from_u64(11);
    let mut worst = f64::INFINITY;
    for i in 0..bank.len() {
        for _ in 0..100 {
            let mut dir: [f64; 8] = std::array::from_fn(|_| rng.sample(StandardNormal));
            let norm = dir.iter().map(|v| v * v).sum::<f64>().sqrt();
            dir.iter_mut().for_each(|v| *v /= norm);
            worst = worst.min(linearization_ratio(&params, i, &bank, &dir, 1e-2));
        }
    }
    Check::new(
        "linearization ratio",
        worst >= 3.5,
        format!("min residual ratio over 3 nodes x 100 directions = {worst:.3} (>= 3.5)"),
    )
}

pub fn projector_identities(design: &Design) -> Check {
    let mut worst: f64 = 0.0;
    for (md, h) in design.bank.models.iter().zip(&design.uio.h_proj) {
        let s = md.s();
        let n = md.n();
        let hcl = h * &md.c_mat * &md.l_mat - DMatrix::<f64>::identity(s, s);
        let annihilated = (DMatrix::<f64>::identity(n, n) - &md.l_mat * h * &md.c_mat) * &md.l_mat;
        worst = worst.max(hcl.abs().max()).max(annihilated.abs().max());
    }
    Check::new(
        "fault projector identities",
        worst <= 1e-10,
        format!("max |HCL - I|, |(I - LHC)L| = {worst:.2e} (tol 1e-10)"),
    )
}

pub fn stability(design: &Design) -> Check {
    let mut abscissa = f64::NEG_INFINITY;
    let mut union_err: f64 = 0.0;
    for (i, (md, a0)) in design.bank.models.iter().zip(design.augmented_error_matrices()).enumerate() {
        let closed = &md.a_mat - &md.b_mat * &design.gains.k1[i];
        let err = &design.uio.a_bar[i] - &design.uio.k2[i] * &md.c_mat;
        let mut blocks = eigenvalues(&closed);
        blocks.extend(eigenvalues(&err));
        abscissa = blocks.iter().map(|z| z.re).fold(abscissa, f64::max);
        union_err = union_err.max(spectrum_distance(&eigenvalues(&a0), &blocks));
    }
    Check::new(
        "closed-loop stability",
        abscissa < -0.05 && union_err <= 1e-8,
        format!(
            "max Re(eig) over all blocks = {abscissa:.4} (< -0.05), augmented vs block spectra {union_err:.2e} (tol 1e-8)"
        ),
    )
}

/// Time after `t_on` from which every channel stays within `band` of the fault.
pub fn capture_time(trace: &trms_ftc::harness::SimTrace, t_on: f64, t_off: f64, band: f64) -> Option<f64> {
    let (k0, k1) = (index_at(trace, t_on), index_at(trace, t_off));
    let last_bad = (k0..k1).rev().find(|&k| {
        trace.f[k].iter().zip(&trace.f_hat[k]).any(|(f, fh)| (f - fh).abs() > band)
    });
    match last_bad {
        None => Some(0.0),
        Some(k) if k + 1 < k1 => Some(trace.t[k + 1] - t_on),
        Some(_) => None,
    }
}

pub fn fault_estimation() -> Check {
    let amplitude = 0.3;
    let mut slowest: f64 = 0.0;
    let mut captured = true;
    for node in NODES {
        for channel in 0..2 {
            let mut cfg = frozen_scenario(node, DerivativeSource::Filtered, 8.0);
            cfg.fault = step_fault(channel, amplitude, 2.0, 8.0);
            let trace = run_scenario(&cfg).unwrap();
            match capture_time(&trace, 2.0, 8.0 - 0.01, 0.01 * amplitude) {
                Some(t) => slowest = slowest.max(t),
                None => captured = false,
            }
        }
    }
    let mut zero_fault: f64 = 0.0;
    for node in NODES {
        let mut cfg = frozen_scenario(node, DerivativeSource::Filtered, 30.0);
        cfg.sim.observer_initial_state = Some(offset_trim(node, [0.01, 0.0, 0.01, 0.01, 0.0, 0.0]));
        let trace = run_scenario(&cfg).unwrap();
        for k in index_at(&trace, 20.0)..trace.len() {
            let norm = trace.f_hat[k].iter().map(|v| v * v).sum::<f64>().sqrt();
            zero_fault = zero_fault.max(norm);
        }
    }
    Check::new(
        "fault estimation",
        captured && slowest <= 2.0 && zero_fault <= 1e-6,
        format!(
            "step 0.3 held within 1% after {slowest:.3} s (<= 2 s), zero-fault max |f_hat| after 20 s = {zero_fault:.2e} (tol 1e-6)"
        ),
    )
}

/// Largest state gap over 10 s between the fault-free loop and the faulty loop
/// with `−S f` compensation, both on local model `i` with exact estimates.
pub fn compensation_gap(design: &Design, i: usize, fault: [f64; 2]) -> f64 {
    let md = &design.bank.models[i];
    let mut mu = vec![0.0; design.bank.len()];
    mu[i] = 1.0;
    let node = design.bank.scheduling_nodes[i];
    let ref_trim = trim(node, 0.1, &TrmsParams::default(), 2.5).unwrap();
    let x0 = DVector::from_column_slice(&offset_trim(node, [0.05, 0.0, 0.0, 0.1, 0.0, 0.0]));
    let f_on = DVector::from_column_slice(&fault);
    let zero_f = DVector::zeros(2);
    let dt = 1e-3;

    let nominal = |x: &DVector<f64>| nominal_command(&design.gains, &mu, x, &ref_trim).unwrap();
    let (mut x_free, mut x_ftc) = (x0.clone(), x0);
    let mut gap: f64 = 0.0;
    for k in 0..10_000 {
        let f = if k as f64 * dt >= 1.0 { &f_on } else { &zero_f };
        x_free = rk4(&x_free, dt, |x| md.rhs(x, &nominal(x), &zero_f));
        x_ftc = rk4(&x_ftc, dt, |x| {
            let u = ftc_command(&design.gains, &mu, &nominal(x), f, x, x).unwrap();
            md.rhs(x, &u, f)
        });
        gap = gap.max((&x_free - &x_ftc).abs().max());
    }
    gap
}

pub fn exact_compensation(design: &Design) -> Check {
    let gap = (0..design.bank.len())
        .map(|i| compensation_gap(design, i, [0.2, -0.15]))
        .fold(0.0, f64::max);
    Check::new(
        "exact compensation",
        gap <= 1e-8,
        format!("max |x_ftc - x_fault_free| over 10 s = {gap:.2e} (tol 1e-8)"),
    )
}

pub fn end_to_end() -> Check {
    let mut cfg = ScenarioConfig::from_json(EXAMPLE_CONFIG).unwrap();
    let onset = cfg.fault.t_start;
    let u_limit = cfg.controller.u_limit;
    let start = Instant::now();
    let with_ftc = metrics(&run_scenario(&cfg).unwrap(), Some(onset), u_limit).unwrap();
    let elapsed = start.elapsed();
    cfg.controller.compensation = 0.0;
    let without = metrics(&run_scenario(&cfg).unwrap(), Some(onset), u_limit).unwrap();

    let pre = with_ftc.tracking_rms_pre.map(Option::unwrap);
    let post = with_ftc.tracking_rms_post.map(Option::unwrap);
    let post_off = without.tracking_rms_post.map(Option::unwrap);
    let bounded = (0..2).all(|a| post[a] <= 2.0 * pre[a]);
    let better = (0..2).all(|a| post[a] < post_off[a]);
    Check::new(
        "end-to-end scenario",
        bounded && better && elapsed < Duration::from_secs(10),
        format!(
            "RMS pre [{:.4}, {:.4}], post FTC [{:.4}, {:.4}] (<= 2x pre), post without compensation [{:.4}, {:.4}] (FTC strictly less), runtime {:.2?} (< 10 s)",
            pre[0], pre[1], post[0], post[1], post_off[0], post_off[1], elapsed
        ),
    )
}

pub fn determinism() -> Check {
    let mut cfg = ScenarioConfig::from_json(EXAMPLE_CONFIG).unwrap();
    cfg.sim.t_end = 20.0;
    cfg.fault.t_start = 5.0;
    cfg.fault.t_stop = 15.0;
    cfg.sim.noise = Some(NoiseConfig { std: 1e-4, seed: 42 });
    let a = run_scenario(&cfg).unwrap().to_csv();
    let b = run_scenario(&cfg).unwrap().to_csv();
    let nominal = ScenarioConfig::from_json(EXAMPLE_CONFIG).unwrap();
    let c = run_scenario(&nominal).unwrap().to_csv();
    let d = run_scenario(&nominal).unwrap().to_csv();
    Check::new(
        "determinism",
        a == b && c == d,
        format!("repeated runs byte-identical: noisy {} ({} bytes), example {} ({} bytes)", a == b, a.len(), c == d, c.len()),
    )
}
