//! Offline gain synthesis: fault projectors, Riccati state-feedback and observer
//! gains, and fault compensation matrices for every local model of a bank.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{self, rows_vec};
use crate::multimodel::{LocalModel, ModelBank};

/// Hamiltonian eigenvalues closer than this (relative to `max(1, ‖H‖_F)`) to the
/// imaginary axis abort the Riccati solve.
pub const IMAGINARY_AXIS_TOL: f64 = 1e-9;

const SIGN_MAX_ITER: usize = 100;
const SIGN_TOL: f64 = 1e-13;
const NEWTON_MAX_ITER: usize = 8;

/// `H = (LᵀL)⁻¹ Lᵀ` applied to `C·L`: the left pseudo-inverse mapping output
/// derivatives back to fault space.
pub fn fault_projector(c_mat: &DMatrix<f64>, l_mat: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    if c_mat.ncols() != l_mat.nrows() {
        return Err(Error::Dimension {
            context: "fault projector",
            expected: format!("L with {} rows", c_mat.ncols()),
            found: format!("{} rows", l_mat.nrows()),
        });
    }
    let cl = c_mat * l_mat;
    let s = cl.ncols();
    if s == 0 {
        return Ok(DMatrix::zeros(0, c_mat.nrows()));
    }
    let r = linalg::rank(&cl);
    if r < s {
        return Err(Error::RankDeficient { rank: r, s });
    }
    let normal = cl.transpose() * &cl;
    let chol = normal
        .cholesky()
        .ok_or(Error::RankDeficient { rank: r, s })?;
    Ok(chol.solve(&cl.transpose()))
}

/// Stabilizing solution of `AᵀP + PA − PBR⁻¹BᵀP + Q = 0`.
///
/// The stable invariant subspace of the Hamiltonian is extracted with the
/// scaled Newton iteration for the matrix sign function, then polished with
/// Newton–Kleinman steps.
pub fn solve_care(
    a: &DMatrix<f64>,
    b: &DMatrix<f64>,
    q: &DMatrix<f64>,
    r: &DMatrix<f64>,
) -> Result<DMatrix<f64>> {
    let n = a.nrows();
    let m = b.ncols();
    if a.ncols() != n || b.nrows() != n || q.shape() != (n, n) || r.shape() != (m, m) {
        return Err(Error::Dimension {
            context: "CARE",
            expected: format!("A {n}x{n}, B {n}x{m}, Q {n}x{n}, R {m}x{m}"),
            found: format!(
                "A {:?}, B {:?}, Q {:?}, R {:?}",
                a.shape(),
                b.shape(),
                q.shape(),
                r.shape()
            ),
        });
    }
    let r_chol = r
        .clone()
        .cholesky()
        .ok_or_else(|| Error::Synthesis("R is not positive definite".into()))?;
    let g = b * r_chol.solve(&b.transpose());

    let mut ham = DMatrix::zeros(2 * n, 2 * n);
    ham.view_mut((0, 0), (n, n)).copy_from(a);
    ham.view_mut((0, n), (n, n)).copy_from(&(-&g));
    ham.view_mut((n, 0), (n, n)).copy_from(&(-q));
    ham.view_mut((n, n), (n, n)).copy_from(&(-a.transpose()));

    let scale = ham.norm().max(1.0);
    let closest = linalg::eigenvalues(&ham)
        .iter()
        .map(|l| l.re.abs())
        .fold(f64::INFINITY, f64::min);
    if closest <= IMAGINARY_AXIS_TOL * scale {
        return Err(Error::Synthesis(format!(
            "Hamiltonian has an eigenvalue on the imaginary axis (|Re| = {closest:e}); \
             the pair is not stabilizable or the weights not detectable"
        )));
    }

    let w = matrix_sign(&ham)?;
    let id = DMatrix::<f64>::identity(n, n);
    let mut lhs = DMatrix::zeros(2 * n, n);
    lhs.view_mut((0, 0), (n, n)).copy_from(&w.view((0, n), (n, n)));
    lhs.view_mut((n, 0), (n, n)).copy_from(&(w.view((n, n), (n, n)) + &id));
    let mut rhs = DMatrix::zeros(2 * n, n);
    rhs.view_mut((0, 0), (n, n)).copy_from(&(-(w.view((0, 0), (n, n)) + &id)));
    rhs.view_mut((n, 0), (n, n)).copy_from(&(-w.view((n, 0), (n, n))));
    let mut p = linalg::symmetrize(&linalg::lstsq(&lhs, &rhs)?);

    let mut res = care_residual(a, &g, q, &p).norm();
    for _ in 0..NEWTON_MAX_ITER {
        let closed = a - &g * &p;
        if !linalg::is_hurwitz(&closed) {
            break;
        }
        let rhs = q + &p * &g * &p;
        let Ok(next) = linalg::solve_lyapunov(&closed, &rhs) else {
            break;
        };
        let next = linalg::symmetrize(&next);
        let next_res = care_residual(a, &g, q, &next).norm();
        if !(next_res < res) {
            break;
        }
        p = next;
        res = next_res;
    }

    let closed = a - &g * &p;
    if !linalg::is_hurwitz(&closed) {
        return Err(Error::Synthesis(
            "Riccati solution is not stabilizing; (A, B) is not stabilizable".into(),
        ));
    }
    if !p.iter().all(|v| v.is_finite()) {
        return Err(Error::Synthesis("non-finite Riccati solution".into()));
    }
    Ok(p)
}

fn care_residual(a: &DMatrix<f64>, g: &DMatrix<f64>, q: &DMatrix<f64>, p: &DMatrix<f64>) -> DMatrix<f64> {
    a.transpose() * p + p * a - p * g * p + q
}

fn matrix_sign(h: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let dim = h.nrows();
    let mut z = h.clone();
    for _ in 0..SIGN_MAX_ITER {
        let lu = z.clone().lu();
        let det = lu.determinant();
        let inv = lu
            .try_inverse()
            .ok_or_else(|| Error::Synthesis("singular iterate in sign iteration".into()))?;
        let c = if det.is_finite() && det != 0.0 {
            det.abs().powf(-1.0 / dim as f64)
        } else {
            1.0
        };
        let next = (&z * c + inv / c) * 0.5;
        let delta = (&next - &z).abs().column_sum().max();
        let size = next.abs().column_sum().max();
        z = next;
        if delta <= SIGN_TOL * size {
            return Ok(z);
        }
    }
    // the Newton polish in `solve_care` tolerates a loosely converged sign
    Ok(z)
}

/// Residual `‖AᵀP + PA − PBR⁻¹BᵀP + Q‖_F`.
pub fn care_residual_norm(
    a: &DMatrix<f64>,
    b: &DMatrix<f64>,
    q: &DMatrix<f64>,
    r: &DMatrix<f64>,
    p: &DMatrix<f64>,
) -> f64 {
    let g = b * r.clone().try_inverse().unwrap_or_else(|| DMatrix::zeros(r.nrows(), r.ncols())) * b.transpose();
    care_residual(a, &g, q, p).norm()
}

/// Weight knobs of the state-feedback synthesis: `Q = CᵀC + ζ·I`, `R = I/ρ`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FeedbackWeights {
    pub zeta: f64,
    pub rho: f64,
}

impl Default for FeedbackWeights {
    fn default() -> Self {
        Self { zeta: 2.0, rho: 700.0 }
    }
}

pub fn feedback_gain(model: &LocalModel, zeta: f64, rho: f64) -> Result<DMatrix<f64>> {
    if !(zeta >= 0.0 && rho > 0.0 && zeta.is_finite() && rho.is_finite()) {
        return Err(Error::Config(format!("need zeta >= 0 and rho > 0, got {zeta}, {rho}")));
    }
    let n = model.n();
    let q = model.c_mat.transpose() * &model.c_mat + DMatrix::identity(n, n) * zeta;
    let r = DMatrix::identity(model.m(), model.m()) / rho;
    let p = solve_care(&model.a_mat, &model.b_mat, &q, &r)?;
    Ok(model.b_mat.transpose() * p * rho)
}

/// Decoupled matrix `Ā = (I − L H C) A` and a stabilizing observer gain for
/// `Ā − K₂ C`, computed by duality with identity weights.
pub fn observer_gain(model: &LocalModel, h_proj: &DMatrix<f64>) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    let n = model.n();
    if h_proj.shape() != (model.s(), model.p()) {
        return Err(Error::Dimension {
            context: "observer gain",
            expected: format!("H {}x{}", model.s(), model.p()),
            found: format!("{:?}", h_proj.shape()),
        });
    }
    let proj = DMatrix::<f64>::identity(n, n) - &model.l_mat * h_proj * &model.c_mat;
    let a_bar = proj * &model.a_mat;
    if !linalg::is_detectable(&a_bar, &model.c_mat, 1e-9) {
        return Err(Error::Synthesis(
            "(Ā_i, C) is not detectable; the pairs (A_i, C) must be observable".into(),
        ));
    }
    let p = solve_care(
        &a_bar.transpose(),
        &model.c_mat.transpose(),
        &DMatrix::identity(n, n),
        &DMatrix::identity(model.p(), model.p()),
    )
    .map_err(|e| Error::Synthesis(format!("observer Riccati: {e}")))?;
    let k2 = p * model.c_mat.transpose();
    Ok((a_bar, k2))
}

/// Least-squares `S` with `B·S ≈ L`, together with the Frobenius residual.
pub fn comp_gain(b_mat: &DMatrix<f64>, l_mat: &DMatrix<f64>) -> Result<(DMatrix<f64>, f64)> {
    let s = linalg::lstsq(b_mat, l_mat)?;
    let residual = (b_mat * &s - l_mat).norm();
    Ok((s, residual))
}

/// Block upper-triangular error matrix `[A − BK₁, LHCA; 0, Ā − K₂C]`.
pub fn augmented_error_matrix(
    model: &LocalModel,
    k1: &DMatrix<f64>,
    h_proj: &DMatrix<f64>,
    a_bar: &DMatrix<f64>,
    k2: &DMatrix<f64>,
) -> DMatrix<f64> {
    let n = model.n();
    let mut a0 = DMatrix::zeros(2 * n, 2 * n);
    a0.view_mut((0, 0), (n, n))
        .copy_from(&(&model.a_mat - &model.b_mat * k1));
    a0.view_mut((0, n), (n, n))
        .copy_from(&(&model.l_mat * h_proj * &model.c_mat * &model.a_mat));
    a0.view_mut((n, n), (n, n)).copy_from(&(a_bar - k2 * &model.c_mat));
    a0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FtcGains {
    #[serde(with = "rows_vec")]
    pub k1: Vec<DMatrix<f64>>,
    #[serde(with = "rows_vec")]
    pub s_comp: Vec<DMatrix<f64>>,
    /// Residual of `B_i S_i ≈ L_i`; nonzero means part of the fault is not
    /// compensable through the actuators.
    pub comp_residual: Vec<f64>,
    pub zeta: f64,
    pub rho: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UioDesign {
    #[serde(with = "rows_vec")]
    pub h_proj: Vec<DMatrix<f64>>,
    #[serde(with = "rows_vec")]
    pub k2: Vec<DMatrix<f64>>,
    #[serde(with = "rows_vec")]
    pub a_bar: Vec<DMatrix<f64>>,
}

/// Gains of the fault-free reference observer (a plain Luenberger design on
/// the nominal bank).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LuenbergerDesign {
    #[serde(with = "rows_vec")]
    pub k: Vec<DMatrix<f64>>,
}

/// Everything the online loop needs, serialized as the `design` document.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Design {
    pub bank: ModelBank,
    pub gains: FtcGains,
    pub uio: UioDesign,
    pub reference_observer: LuenbergerDesign,
}

impl Design {
    pub fn synthesize(bank: ModelBank, weights: FeedbackWeights) -> Result<Self> {
        let mut k1 = Vec::with_capacity(bank.len());
        let mut s_comp = Vec::with_capacity(bank.len());
        let mut comp_residual = Vec::with_capacity(bank.len());
        let mut h_proj = Vec::with_capacity(bank.len());
        let mut k2 = Vec::with_capacity(bank.len());
        let mut a_bar = Vec::with_capacity(bank.len());
        let mut k_ref = Vec::with_capacity(bank.len());

        for (i, md) in bank.models.iter().enumerate() {
            let tag = |e: Error| Error::Synthesis(format!("model {i}: {e}"));
            k1.push(feedback_gain(md, weights.zeta, weights.rho).map_err(tag)?);
            let (s, res) = comp_gain(&md.b_mat, &md.l_mat)?;
            s_comp.push(s);
            comp_residual.push(res);
            let h = fault_projector(&md.c_mat, &md.l_mat)?;
            let (ab, k) = observer_gain(md, &h).map_err(tag)?;
            h_proj.push(h);
            a_bar.push(ab);
            k2.push(k);

            let nominal = LocalModel {
                l_mat: DMatrix::zeros(md.n(), 0),
                ..md.clone()
            };
            let (_, kr) = observer_gain(&nominal, &DMatrix::zeros(0, md.p())).map_err(tag)?;
            k_ref.push(kr);
        }

        Ok(Self {
            bank,
            gains: FtcGains {
                k1,
                s_comp,
                comp_residual,
                zeta: weights.zeta,
                rho: weights.rho,
            },
            uio: UioDesign { h_proj, k2, a_bar },
            reference_observer: LuenbergerDesign { k: k_ref },
        })
    }

    pub fn augmented_error_matrices(&self) -> Vec<DMatrix<f64>> {
        self.bank
            .models
            .iter()
            .enumerate()
            .map(|(i, md)| {
                augmented_error_matrix(md, &self.gains.k1[i], &self.uio.h_proj[i], &self.uio.a_bar[i], &self.uio.k2[i])
            })
            .collect()
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let d: Self = serde_json::from_str(text)?;
        let nm = d.bank.len();
        let lens = [
            d.gains.k1.len(),
            d.gains.s_comp.len(),
            d.uio.h_proj.len(),
            d.uio.k2.len(),
            d.uio.a_bar.len(),
            d.reference_observer.k.len(),
        ];
        if lens.iter().any(|&l| l != nm) {
            return Err(Error::Config(format!("design gain lists do not match {nm} models")));
        }
        Ok(d)
    }
}
