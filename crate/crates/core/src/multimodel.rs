//! Bank of affine local models `ẋ = A_i x + B_i u + L_i f + ΔX_i`, `y = C x`, obtained
//! by linearizing the plant at trim points and blended with normalized Gaussian
//! weights of the pitch angle.

use nalgebra::{DMatrix, DVector, Vector2, Vector6};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{self, flat, rows};
use crate::plant::{self, ControlInput, PlantState, TrmsParams};

pub const STATE_DIM: usize = 6;
pub const INPUT_DIM: usize = 2;

/// Tolerance on `Σμ = 1` and `μ ≥ 0` accepted by [`ModelBank::blend`].
pub const CONVEXITY_TOL: f64 = 1e-9;

/// Real part above which a mode counts as not asymptotically stable in the
/// stabilizability/detectability tests.
const PBH_MARGIN: f64 = 1e-9;

/// How faults enter the state equation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum FaultConvention {
    /// Additive actuator faults, `L_i = B_i`.
    #[default]
    Actuator,
    /// Fixed n×s distribution matrix, given by rows.
    Matrix(Vec<Vec<f64>>),
}

/// Output selection and fault distribution shared by every local model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FaultSpec {
    /// State indices (0-based) measured by `C`.
    pub outputs: Vec<usize>,
    pub fault: FaultConvention,
}

impl Default for FaultSpec {
    fn default() -> Self {
        Self {
            outputs: vec![0, 2, 3, 5],
            fault: FaultConvention::Actuator,
        }
    }
}

impl FaultSpec {
    pub fn output_matrix(&self) -> Result<DMatrix<f64>> {
        if self.outputs.is_empty() {
            return Err(Error::Config("at least one measured output is required".into()));
        }
        let mut c = DMatrix::zeros(self.outputs.len(), STATE_DIM);
        for (row, &idx) in self.outputs.iter().enumerate() {
            if idx >= STATE_DIM {
                return Err(Error::Config(format!("output index {idx} out of range 0..{STATE_DIM}")));
            }
            c[(row, idx)] = 1.0;
        }
        Ok(c)
    }

    fn fault_matrix(&self, b: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        match &self.fault {
            FaultConvention::Actuator => Ok(b.clone()),
            FaultConvention::Matrix(r) => {
                let l = linalg::from_rows(r).map_err(Error::Config)?;
                if l.nrows() != STATE_DIM {
                    return Err(Error::Dimension {
                        context: "fault distribution L",
                        expected: format!("{STATE_DIM} rows"),
                        found: format!("{} rows", l.nrows()),
                    });
                }
                Ok(l)
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LocalModel {
    #[serde(with = "rows")]
    pub a_mat: DMatrix<f64>,
    #[serde(with = "rows")]
    pub b_mat: DMatrix<f64>,
    #[serde(with = "rows")]
    pub c_mat: DMatrix<f64>,
    #[serde(with = "flat")]
    pub delta_x: DVector<f64>,
    #[serde(with = "rows")]
    pub l_mat: DMatrix<f64>,
    pub op_state: PlantState,
    pub op_input: ControlInput,
}

impl LocalModel {
    pub fn n(&self) -> usize {
        self.a_mat.nrows()
    }
    pub fn m(&self) -> usize {
        self.b_mat.ncols()
    }
    pub fn p(&self) -> usize {
        self.c_mat.nrows()
    }
    pub fn s(&self) -> usize {
        self.l_mat.ncols()
    }

    /// `A x + B u + L f + ΔX`.
    pub fn rhs(&self, x: &DVector<f64>, u: &DVector<f64>, f: &DVector<f64>) -> DVector<f64> {
        &self.a_mat * x + &self.b_mat * u + &self.l_mat * f + &self.delta_x
    }

    /// Checks dimensions, `rank(C L) = s`, stabilizability of `(A, B)` and
    /// detectability of `(A, C)`.
    pub fn validate(&self) -> Result<()> {
        let n = self.n();
        let checks = [
            ("A", self.a_mat.shape(), (n, n)),
            ("B", self.b_mat.shape(), (n, self.m())),
            ("C", self.c_mat.shape(), (self.p(), n)),
            ("L", self.l_mat.shape(), (n, self.s())),
            ("dX", (self.delta_x.len(), 1), (n, 1)),
        ];
        for (name, found, expected) in checks {
            if found != expected {
                return Err(Error::Dimension {
                    context: "local model",
                    expected: format!("{name} {expected:?}"),
                    found: format!("{found:?}"),
                });
            }
        }
        let s = self.s();
        if s > self.p() {
            return Err(Error::RankDeficient { rank: self.p(), s });
        }
        let r = linalg::rank(&(&self.c_mat * &self.l_mat));
        if r < s {
            return Err(Error::RankDeficient { rank: r, s });
        }
        if !linalg::is_stabilizable(&self.a_mat, &self.b_mat, PBH_MARGIN) {
            return Err(Error::Synthesis("(A_i, B_i) is not stabilizable".into()));
        }
        if !linalg::is_detectable(&self.a_mat, &self.c_mat, PBH_MARGIN) {
            return Err(Error::Synthesis("(A_i, C) is not detectable".into()));
        }
        Ok(())
    }
}

fn fd_step(v: f64) -> f64 {
    1e-6 * v.abs().max(1.0)
}

/// Linearizes the plant by central differences around `(op_state, op_input)`.
pub fn linearize(
    params: &TrmsParams,
    op_state: &PlantState,
    op_input: &ControlInput,
    spec: &FaultSpec,
) -> Result<LocalModel> {
    if !op_state.is_finite() || !op_input.u_v.is_finite() || !op_input.u_h.is_finite() {
        return Err(Error::NonFinite("linearize"));
    }
    let x0 = op_state.to_vector();
    let u0 = op_input.to_vector();
    let f = |x: &Vector6<f64>, u: &Vector2<f64>| plant::dynamics_vec(x, u, params);

    let mut a = DMatrix::zeros(STATE_DIM, STATE_DIM);
    for j in 0..STATE_DIM {
        let h = fd_step(x0[j]);
        let mut xp = x0;
        let mut xm = x0;
        xp[j] += h;
        xm[j] -= h;
        let col = (f(&xp, &u0) - f(&xm, &u0)) / (xp[j] - xm[j]);
        a.set_column(j, &DVector::from_column_slice(col.as_slice()));
    }
    let mut b = DMatrix::zeros(STATE_DIM, INPUT_DIM);
    for j in 0..INPUT_DIM {
        let h = fd_step(u0[j]);
        let mut up = u0;
        let mut um = u0;
        up[j] += h;
        um[j] -= h;
        let col = (f(&x0, &up) - f(&x0, &um)) / (up[j] - um[j]);
        b.set_column(j, &DVector::from_column_slice(col.as_slice()));
    }

    let xd = DVector::from_column_slice(x0.as_slice());
    let ud = DVector::from_column_slice(u0.as_slice());
    let f0 = DVector::from_column_slice(f(&x0, &u0).as_slice());
    let delta_x = f0 - &a * &xd - &b * &ud;

    let c_mat = spec.output_matrix()?;
    let l_mat = spec.fault_matrix(&b)?;
    let model = LocalModel {
        a_mat: a,
        b_mat: b,
        c_mat,
        delta_x,
        l_mat,
        op_state: *op_state,
        op_input: *op_input,
    };
    model.validate()?;
    Ok(model)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BankConfig {
    /// Trim pitch angles (rad) that double as scheduling nodes.
    pub nodes: Vec<f64>,
    /// Spread of the Gaussian memberships (rad).
    pub sigma: f64,
    #[serde(flatten)]
    pub fault_spec: FaultSpec,
}

impl Default for BankConfig {
    fn default() -> Self {
        Self {
            nodes: vec![-0.4, 0.0, 0.4],
            sigma: 0.25,
            fault_spec: FaultSpec::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelBank {
    pub models: Vec<LocalModel>,
    pub scheduling_nodes: Vec<f64>,
    pub weight_width: f64,
}

impl ModelBank {
    pub fn new(models: Vec<LocalModel>, scheduling_nodes: Vec<f64>, weight_width: f64) -> Result<Self> {
        if models.is_empty() {
            return Err(Error::Config("model bank needs at least one model".into()));
        }
        if models.len() != scheduling_nodes.len() {
            return Err(Error::Config(format!(
                "{} models but {} scheduling nodes",
                models.len(),
                scheduling_nodes.len()
            )));
        }
        if scheduling_nodes.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::Config("scheduling nodes must be strictly increasing".into()));
        }
        if !(weight_width.is_finite() && weight_width > 0.0) {
            return Err(Error::Config(format!("membership width must be > 0, got {weight_width}")));
        }
        let (n, m, p, s) = {
            let first = &models[0];
            (first.n(), first.m(), first.p(), first.s())
        };
        if models.iter().any(|md| (md.n(), md.m(), md.p(), md.s()) != (n, m, p, s)) {
            return Err(Error::Config("local models have inconsistent dimensions".into()));
        }
        if models.iter().any(|md| md.c_mat != models[0].c_mat) {
            return Err(Error::Config("local models must share one output matrix C".into()));
        }
        Ok(Self {
            models,
            scheduling_nodes,
            weight_width,
        })
    }

    /// Trims the plant at every node pitch (yaw 0) and linearizes there.
    pub fn build(params: &TrmsParams, config: &BankConfig, u_limit: f64) -> Result<Self> {
        let models = config
            .nodes
            .iter()
            .map(|&alpha_v| {
                let t = plant::trim(alpha_v, 0.0, params, u_limit)?;
                linearize(params, &t.state, &t.input, &config.fault_spec)
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(models, config.nodes.clone(), config.sigma)
    }

    pub fn len(&self) -> usize {
        self.models.len()
    }

    pub fn is_empty(&self) -> bool {
        self.models.is_empty()
    }

    pub fn c_mat(&self) -> &DMatrix<f64> {
        &self.models[0].c_mat
    }

    /// Normalized Gaussian memberships `μ_i ∝ exp(−((ξ − ξ_i)/σ)²)`.
    pub fn weights(&self, xi: f64) -> Vec<f64> {
        let d2: Vec<f64> = self
            .scheduling_nodes
            .iter()
            .map(|c| ((xi - c) / self.weight_width).powi(2))
            .collect();
        let dmin = d2.iter().copied().fold(f64::INFINITY, f64::min);
        if !dmin.is_finite() {
            // non-finite ξ: fall back to the uniform blend
            return vec![1.0 / self.len() as f64; self.len()];
        }
        let raw: Vec<f64> = d2.iter().map(|d| (-(d - dmin)).exp()).collect();
        let total: f64 = raw.iter().sum();
        raw.iter().map(|r| r / total).collect()
    }

    /// Convex combination of the local `(A_i, B_i, ΔX_i)`.
    pub fn blend(&self, mu: &[f64]) -> Result<(DMatrix<f64>, DMatrix<f64>, DVector<f64>)> {
        check_convex(mu, self.len())?;
        let first = &self.models[0];
        let mut a = DMatrix::zeros(first.n(), first.n());
        let mut b = DMatrix::zeros(first.n(), first.m());
        let mut dx = DVector::zeros(first.n());
        for (w, md) in mu.iter().zip(&self.models) {
            a += &md.a_mat * *w;
            b += &md.b_mat * *w;
            dx += &md.delta_x * *w;
        }
        Ok((a, b, dx))
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let raw: Self = serde_json::from_str(text)?;
        for md in &raw.models {
            md.validate()?;
        }
        Self::new(raw.models, raw.scheduling_nodes, raw.weight_width)
    }
}

pub fn check_convex(mu: &[f64], n: usize) -> Result<()> {
    if mu.len() != n {
        return Err(Error::Dimension {
            context: "weights",
            expected: n.to_string(),
            found: mu.len().to_string(),
        });
    }
    if mu.iter().any(|w| !w.is_finite() || *w < -CONVEXITY_TOL) {
        return Err(Error::NonConvexWeights(format!("negative or non-finite weight in {mu:?}")));
    }
    let sum: f64 = mu.iter().sum();
    if (sum - 1.0).abs() > CONVEXITY_TOL {
        return Err(Error::NonConvexWeights(format!("weights sum to {sum}")));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn default_bank() -> ModelBank {
        ModelBank::build(&TrmsParams::default(), &BankConfig::default(), plant::DEFAULT_INPUT_LIMIT).unwrap()
    }

    #[test]
    fn motor_rows_are_exact() {
        let bank = default_bank();
        for md in &bank.models {
            assert_abs_diff_eq!(md.a_mat[(2, 2)], -0.6983, epsilon = 5e-5);
            assert_abs_diff_eq!(md.b_mat[(2, 0)], 0.6983, epsilon = 5e-5);
            assert_abs_diff_eq!(md.b_mat[(5, 1)], 2.6028, epsilon = 5e-5);
            assert_abs_diff_eq!(md.a_mat[(2, 2)], -1.0 / 1.432, epsilon = 1e-8);
        }
    }

    #[test]
    fn affine_offset_definition() {
        let p = TrmsParams::default();
        let t = plant::trim(0.1, 0.0, &p, 2.5).unwrap();
        // off-equilibrium point so that f(x̄, ū) ≠ 0
        let x = PlantState { s_v: 0.3, u_hh: 0.05, ..t.state };
        let u = ControlInput::new(t.input.u_v + 0.1, 0.2);
        let md = linearize(&p, &x, &u, &FaultSpec::default()).unwrap();
        let xv = DVector::from_column_slice(x.to_vector().as_slice());
        let uv = DVector::from_column_slice(u.to_vector().as_slice());
        let f0 = DVector::from_column_slice(plant::dynamics(&x, &u, &p).to_vector().as_slice());
        let recon = &md.a_mat * &xv + &md.b_mat * &uv + &md.delta_x;
        assert!((recon - f0).norm() < 1e-12);
    }

    #[test]
    fn rank_deficient_fault_rejected() {
        let p = TrmsParams::default();
        let t = plant::trim(0.0, 0.0, &p, 2.5).unwrap();
        // only the pitch angle is measured, C L = 0 for actuator faults
        let spec = FaultSpec {
            outputs: vec![0],
            fault: FaultConvention::Actuator,
        };
        let err = linearize(&p, &t.state, &t.input, &spec).unwrap_err();
        assert!(matches!(err, Error::RankDeficient { .. }), "{err}");
    }

    #[test]
    fn weight_cases() {
        let bank = default_bank();
        let single = ModelBank::new(vec![bank.models[0].clone()], vec![0.0], 0.25).unwrap();
        assert_eq!(single.weights(3.0), vec![1.0]);

        let mu = bank.weights(0.4);
        let argmax = mu.iter().enumerate().max_by(|a, b| a.1.total_cmp(b.1)).unwrap().0;
        assert_eq!(argmax, 2);

        let pair = ModelBank::new(bank.models[..2].to_vec(), vec![-0.4, 0.0], 0.25).unwrap();
        let mu = pair.weights(-0.2);
        assert_abs_diff_eq!(mu[0], 0.5, epsilon = 1e-15);
        assert_abs_diff_eq!(mu[1], 0.5, epsilon = 1e-15);

        // far outside the range the nearest node still wins without underflow
        let mu = bank.weights(40.0);
        assert!((mu[2] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn blend_cases() {
        let bank = default_bank();
        let (a, b, dx) = bank.blend(&[0.0, 1.0, 0.0]).unwrap();
        assert_eq!(a, bank.models[1].a_mat);
        assert_eq!(b, bank.models[1].b_mat);
        assert_eq!(dx, bank.models[1].delta_x);

        let same = ModelBank::new(vec![bank.models[0].clone(); 3], vec![0.0, 1.0, 2.0], 0.3).unwrap();
        let (a, _, _) = same.blend(&[1.0 / 3.0; 3]).unwrap();
        assert!((a - &bank.models[0].a_mat).abs().max() < 1e-14);

        assert!(matches!(bank.blend(&[0.5, 0.6, 0.0]), Err(Error::NonConvexWeights(_))));
        assert!(bank.blend(&[1.2, -0.2, 0.0]).is_err());
        assert!(bank.blend(&[1.0]).is_err());
    }

    #[test]
    fn well_separated_nodes_recover_local_models() {
        let p = TrmsParams::default();
        let config = BankConfig {
            sigma: 0.1, // nodes 0.4 apart = 4σ
            ..BankConfig::default()
        };
        let bank = ModelBank::build(&p, &config, 2.5).unwrap();
        // e^{-16} leak from each neighbour, scaled by entries of order 10
        let scale = bank
            .models
            .iter()
            .map(|m| m.a_mat.abs().max().max(m.b_mat.abs().max()).max(m.delta_x.abs().max()))
            .fold(1.0, f64::max);
        for (i, &node) in bank.scheduling_nodes.iter().enumerate() {
            let (a, b, dx) = bank.blend(&bank.weights(node)).unwrap();
            let dev = (a - &bank.models[i].a_mat)
                .abs()
                .max()
                .max((b - &bank.models[i].b_mat).abs().max())
                .max((dx - &bank.models[i].delta_x).abs().max());
            assert!(dev <= 1e-6 * scale, "node {i}: deviation {dev}");
        }
    }

    #[test]
    fn bank_rejects_bad_nodes() {
        let bank = default_bank();
        let models = bank.models.clone();
        assert!(ModelBank::new(models.clone(), vec![0.0, 0.0, 1.0], 0.2).is_err());
        assert!(ModelBank::new(models.clone(), vec![0.0, 1.0], 0.2).is_err());
        assert!(ModelBank::new(models, vec![0.0, 1.0, 2.0], 0.0).is_err());
        assert!(ModelBank::new(Vec::new(), Vec::new(), 0.2).is_err());
    }

    #[test]
    fn bank_json_roundtrip() {
        let bank = default_bank();
        let text = bank.to_json().unwrap();
        let v: serde_json::Value = serde_json::from_str(&text).unwrap();
        // row-major: first row of A has 6 entries
        assert_eq!(v["models"][0]["a_mat"][0].as_array().unwrap().len(), 6);
        assert_eq!(v["models"][0]["c_mat"].as_array().unwrap().len(), 4);
        let back = ModelBank::from_json(&text).unwrap();
        assert_eq!(back, bank);
    }

    proptest! {
        #[test]
        fn weights_partition_unity(xi in -1.5f64..1.5) {
            let bank = default_bank();
            let mu = bank.weights(xi);
            prop_assert!(mu.iter().all(|w| *w >= 0.0));
            prop_assert!((mu.iter().sum::<f64>() - 1.0).abs() <= 1e-12);
        }

        #[test]
        fn blend_stays_in_elementwise_hull(w0 in 0.0f64..1.0, w1 in 0.0f64..1.0, w2 in 0.0f64..1.0) {
            prop_assume!(w0 + w1 + w2 > 1e-3);
            let bank = default_bank();
            let t = w0 + w1 + w2;
            let mu = [w0 / t, w1 / t, w2 / t];
            let (a, _, _) = bank.blend(&mu).unwrap();
            for i in 0..6 {
                for j in 0..6 {
                    let vals: Vec<f64> = bank.models.iter().map(|m| m.a_mat[(i, j)]).collect();
                    let lo = vals.iter().copied().fold(f64::INFINITY, f64::min);
                    let hi = vals.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                    let slack = 1e-12 * (1.0 + lo.abs().max(hi.abs()));
                    prop_assert!(a[(i, j)] >= lo - slack && a[(i, j)] <= hi + slack);
                }
            }
        }
    }
}
