//! Nominal tracking command and the additive fault-tolerant augmentation
//! `u_f = u + Σ μ_i (−S_i f̂ + K₁ᵢ (x̂ − x̂_f))`.

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::multimodel::check_convex;
use crate::plant::{self, Trim, TrmsParams};
use crate::synthesis::FtcGains;

/// Piecewise-constant signal given as `[t, value]` breakpoints; the value of the
/// last breakpoint at or before `t` applies, and the first one before it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Breakpoints(pub Vec<[f64; 2]>);

impl Breakpoints {
    pub fn constant(v: f64) -> Self {
        Self(vec![[0.0, v]])
    }

    /// Square wave alternating `low`/`high` every half `period`, starting low at `t0`,
    /// expanded up to `t_end`.
    pub fn square(low: f64, high: f64, period: f64, t0: f64, t_end: f64) -> Self {
        let mut pts = vec![[0.0, low]];
        let half = 0.5 * period;
        let mut k = 1usize;
        loop {
            let t = t0 + half * k as f64;
            if t > t_end {
                break;
            }
            pts.push([t, if k % 2 == 1 { high } else { low }]);
            k += 1;
        }
        Self(pts)
    }

    pub fn validate(&self) -> Result<()> {
        if self.0.is_empty() {
            return Err(Error::Config("reference needs at least one breakpoint".into()));
        }
        if self.0.iter().any(|p| !p[0].is_finite() || !p[1].is_finite()) {
            return Err(Error::Config("reference breakpoints must be finite".into()));
        }
        if self.0.windows(2).any(|w| !(w[1][0] > w[0][0])) {
            return Err(Error::Config("reference breakpoint times must increase".into()));
        }
        Ok(())
    }

    pub fn value(&self, t: f64) -> f64 {
        let idx = self.0.partition_point(|p| p[0] <= t);
        self.0[idx.saturating_sub(1)][1]
    }

    pub fn values(&self) -> impl Iterator<Item = f64> + '_ {
        self.0.iter().map(|p| p[1])
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Reference {
    pub alpha_v: Breakpoints,
    pub alpha_h: Breakpoints,
}

impl Default for Reference {
    fn default() -> Self {
        Self {
            alpha_v: Breakpoints::constant(0.0),
            alpha_h: Breakpoints::constant(0.0),
        }
    }
}

impl Reference {
    pub fn at(&self, t: f64) -> (f64, f64) {
        (self.alpha_v.value(t), self.alpha_h.value(t))
    }

    /// Equilibrium behind the reference at time `t`.
    pub fn trim_at(&self, t: f64, params: &TrmsParams, u_limit: f64) -> Result<Trim> {
        let (av, ah) = self.at(t);
        plant::trim(av, ah, params, u_limit)
    }

    /// Checks every pitch level in the reference is trimmable.
    pub fn validate(&self, params: &TrmsParams, u_limit: f64) -> Result<()> {
        self.alpha_v.validate()?;
        self.alpha_h.validate()?;
        for av in self.alpha_v.values() {
            plant::trim(av, 0.0, params, u_limit)?;
        }
        Ok(())
    }
}

pub fn saturate(u: &DVector<f64>, limit: f64) -> DVector<f64> {
    u.map(|v| v.clamp(-limit, limit))
}

fn blended_gain_times(
    mats: &[nalgebra::DMatrix<f64>],
    mu: &[f64],
    v: &DVector<f64>,
) -> DVector<f64> {
    let mut out = DVector::zeros(mats[0].nrows());
    for (w, k) in mu.iter().zip(mats) {
        if *w != 0.0 {
            out += k * v * *w;
        }
    }
    out
}

fn check(gains: &FtcGains, mu: &[f64], x_len: usize) -> Result<()> {
    check_convex(mu, gains.k1.len())?;
    if gains.k1[0].ncols() != x_len {
        return Err(Error::Dimension {
            context: "state estimate",
            expected: gains.k1[0].ncols().to_string(),
            found: x_len.to_string(),
        });
    }
    Ok(())
}

/// `u*(ref) − Σ μ_i K₁ᵢ (x̂ − x*(ref))` before saturation.
pub fn nominal_command(gains: &FtcGains, mu: &[f64], x_hat: &DVector<f64>, trim: &Trim) -> Result<DVector<f64>> {
    check(gains, mu, x_hat.len())?;
    let x_star = DVector::from_column_slice(trim.state.to_vector().as_slice());
    let u_star = DVector::from_column_slice(trim.input.to_vector().as_slice());
    Ok(u_star - blended_gain_times(&gains.k1, mu, &(x_hat - x_star)))
}

pub fn nominal_control(
    gains: &FtcGains,
    mu: &[f64],
    x_hat: &DVector<f64>,
    trim: &Trim,
    u_limit: f64,
) -> Result<DVector<f64>> {
    Ok(saturate(&nominal_command(gains, mu, x_hat, trim)?, u_limit))
}

/// `u_nom + Σ μ_i (−S_i f̂ + K₁ᵢ (x̂ − x̂_f))` before saturation.
pub fn ftc_command(
    gains: &FtcGains,
    mu: &[f64],
    u_nom: &DVector<f64>,
    f_hat: &DVector<f64>,
    x_hat: &DVector<f64>,
    x_hat_f: &DVector<f64>,
) -> Result<DVector<f64>> {
    check(gains, mu, x_hat.len())?;
    if x_hat_f.len() != x_hat.len() || u_nom.len() != gains.k1[0].nrows() {
        return Err(Error::Dimension {
            context: "ftc augmentation",
            expected: format!("x {} / u {}", x_hat.len(), gains.k1[0].nrows()),
            found: format!("x {} / u {}", x_hat_f.len(), u_nom.len()),
        });
    }
    if f_hat.len() != gains.s_comp[0].ncols() {
        return Err(Error::Dimension {
            context: "fault estimate",
            expected: gains.s_comp[0].ncols().to_string(),
            found: f_hat.len().to_string(),
        });
    }
    let comp = blended_gain_times(&gains.s_comp, mu, f_hat);
    let recovery = blended_gain_times(&gains.k1, mu, &(x_hat - x_hat_f));
    Ok(u_nom - comp + recovery)
}

pub fn ftc_augment(
    gains: &FtcGains,
    mu: &[f64],
    u_nom: &DVector<f64>,
    f_hat: &DVector<f64>,
    x_hat: &DVector<f64>,
    x_hat_f: &DVector<f64>,
    u_limit: f64,
) -> Result<DVector<f64>> {
    Ok(saturate(&ftc_command(gains, mu, u_nom, f_hat, x_hat, x_hat_f)?, u_limit))
}
