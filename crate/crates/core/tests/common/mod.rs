#![allow(dead_code)]

pub mod criteria;

use nalgebra::{DMatrix, DVector};
use trms_ftc::ftc::{Breakpoints, Reference};
use trms_ftc::harness::{
    DerivativeSource, FaultKind, FaultProfile, PlantModel, ScenarioConfig, SimTrace,
};
use trms_ftc::multimodel::BankConfig;
use trms_ftc::plant::{trim, TrmsParams};

pub const NODES: [f64; 3] = [-0.4, 0.0, 0.4];

/// Scenario whose plant is the single local model built at pitch `node`, held
/// at that model's trim.
pub fn frozen_scenario(node: f64, derivative: DerivativeSource, t_end: f64) -> ScenarioConfig {
    let mut cfg = ScenarioConfig {
        bank: BankConfig {
            nodes: vec![node],
            ..BankConfig::default()
        },
        ..ScenarioConfig::default()
    };
    cfg.sim.plant = PlantModel::Frozen(0);
    cfg.sim.derivative = derivative;
    cfg.sim.t_end = t_end;
    cfg.sim.reference = Reference {
        alpha_v: Breakpoints::constant(node),
        alpha_h: Breakpoints::constant(0.0),
    };
    cfg
}

pub fn step_fault(channel: usize, amplitude: f64, t_start: f64, t_stop: f64) -> FaultProfile {
    FaultProfile {
        kind: FaultKind::Step,
        channels: vec![channel],
        amplitude,
        t_start,
        t_stop,
        ..FaultProfile::default()
    }
}

/// Trim state at pitch `alpha_v` with an offset added, as an initial condition.
pub fn offset_trim(alpha_v: f64, offset: [f64; 6]) -> [f64; 6] {
    let x = trim(alpha_v, 0.0, &TrmsParams::default(), 2.5).unwrap().state.to_vector();
    std::array::from_fn(|i| x[i] + offset[i])
}

pub fn row(v: &[f64; 6]) -> DVector<f64> {
    DVector::from_column_slice(v)
}

/// Largest `|a − b|` over matched eigenvalue multisets (greedy nearest match).
pub fn spectrum_distance(a: &[nalgebra::Complex<f64>], b: &[nalgebra::Complex<f64>]) -> f64 {
    assert_eq!(a.len(), b.len());
    let mut used = vec![false; b.len()];
    let mut worst: f64 = 0.0;
    for za in a {
        let (j, d) = b
            .iter()
            .enumerate()
            .filter(|(j, _)| !used[*j])
            .map(|(j, zb)| (j, (za - zb).norm()))
            .min_by(|x, y| x.1.total_cmp(&y.1))
            .unwrap();
        used[j] = true;
        worst = worst.max(d);
    }
    worst
}

pub fn max_abs(m: &DMatrix<f64>) -> f64 {
    m.abs().max()
}

/// Index of the first sample at or after `t`.
pub fn index_at(trace: &SimTrace, t: f64) -> usize {
    trace.t.partition_point(|&s| s < t - 1e-9)
}
