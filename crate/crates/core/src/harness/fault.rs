use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum FaultKind {
    #[default]
    None,
    Step,
    Intermittent,
    Ramp,
}

/// Additive fault `f(t)` on selected fault channels.
///
/// * `step`: `amplitude` on `[t_start, t_stop)`.
/// * `intermittent`: square pulses of `amplitude`, on for `duty·period` at the
///   start of every `period`, inside `[t_start, t_stop)`.
/// * `ramp`: rises linearly from 0 at `t_start` to `amplitude` at `t_stop`, then
///   drops to 0.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FaultProfile {
    pub kind: FaultKind,
    pub channels: Vec<usize>,
    pub amplitude: f64,
    pub t_start: f64,
    pub t_stop: f64,
    pub period: f64,
    pub duty: f64,
}

impl Default for FaultProfile {
    fn default() -> Self {
        Self {
            kind: FaultKind::None,
            channels: vec![0],
            amplitude: 0.0,
            t_start: 25.0,
            t_stop: 50.0,
            period: 4.0,
            duty: 0.5,
        }
    }
}

impl FaultProfile {
    pub fn none() -> Self {
        Self::default()
    }

    pub fn validate(&self, s: usize, t_end: f64) -> Result<()> {
        if self.kind == FaultKind::None {
            return Ok(());
        }
        let bad = |msg: String| Err(Error::Config(format!("fault profile: {msg}")));
        if !self.amplitude.is_finite() {
            return bad("amplitude must be finite".into());
        }
        if !(self.t_start < self.t_stop) {
            return bad(format!("t_start {} must precede t_stop {}", self.t_start, self.t_stop));
        }
        if self.t_stop > t_end {
            return bad(format!("t_stop {} beyond t_end {t_end}", self.t_stop));
        }
        if let Some(&c) = self.channels.iter().find(|&&c| c >= s) {
            return bad(format!("channel {c} out of range for {s} fault channels"));
        }
        if self.kind == FaultKind::Intermittent
            && !(self.period > 0.0 && self.duty > 0.0 && self.duty <= 1.0)
        {
            return bad("intermittent faults need period > 0 and duty in (0, 1]".into());
        }
        Ok(())
    }

    /// Onset time, or `None` for a fault-free profile.
    pub fn onset(&self) -> Option<f64> {
        (self.kind != FaultKind::None).then_some(self.t_start)
    }

    fn level(&self, t: f64) -> f64 {
        if t < self.t_start || t >= self.t_stop {
            return 0.0;
        }
        match self.kind {
            FaultKind::None => 0.0,
            FaultKind::Step => self.amplitude,
            FaultKind::Intermittent => {
                let phase = (t - self.t_start).rem_euclid(self.period);
                if phase < self.duty * self.period {
                    self.amplitude
                } else {
                    0.0
                }
            }
            FaultKind::Ramp => self.amplitude * (t - self.t_start) / (self.t_stop - self.t_start),
        }
    }
}

pub fn fault_signal(profile: &FaultProfile, t: f64, s: usize) -> DVector<f64> {
    let mut f = DVector::zeros(s);
    let v = profile.level(t);
    if v != 0.0 {
        for &c in profile.channels.iter().filter(|&&c| c < s) {
            f[c] = v;
        }
    }
    f
}
