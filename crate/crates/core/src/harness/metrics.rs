use serde::{Deserialize, Serialize};

use super::trace::SimTrace;
use crate::error::{Error, Result};

/// Band (rad) an axis error must stay inside to count as settled.
pub const SETTLE_BAND: f64 = 0.02;

/// Summary statistics of a trace. Windows with no samples report `None`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    /// Split time between the pre- and post-fault windows.
    pub split: Option<f64>,
    /// `[pitch, yaw]` tracking RMS error before the split.
    pub tracking_rms_pre: [Option<f64>; 2],
    /// `[pitch, yaw]` tracking RMS error from the split on.
    pub tracking_rms_post: [Option<f64>; 2],
    /// RMS of `f − f̂` over all channels and samples.
    pub fault_estimation_rms: Option<f64>,
    /// First time after which the axis error stays within [`SETTLE_BAND`] up to
    /// the split.
    pub settling_time: [Option<f64>; 2],
    /// Fraction of samples with at least one command at the limit.
    pub saturation_duty: f64,
}

fn rms(values: impl Iterator<Item = f64>) -> Option<f64> {
    let (sum, n) = values.fold((0.0, 0usize), |(s, n), v| (s + v * v, n + 1));
    (n > 0).then(|| (sum / n as f64).sqrt())
}

/// Computes metrics, splitting windows at `split` (typically the fault onset).
pub fn metrics(trace: &SimTrace, split: Option<f64>, u_limit: f64) -> Result<Metrics> {
    if trace.is_empty() {
        return Err(Error::Config("metrics need a nonempty trace".into()));
    }
    let err = |k: usize, axis: usize| {
        let idx = if axis == 0 { 0 } else { 3 };
        trace.x[k][idx] - trace.reference[k][axis]
    };
    let is_pre = |k: usize| split.is_none_or(|s| trace.t[k] < s);
    let n = trace.len();

    let window_rms = |axis: usize, pre: bool| rms((0..n).filter(|&k| is_pre(k) == pre).map(|k| err(k, axis)));
    let tracking_rms_pre = [window_rms(0, true), window_rms(1, true)];
    let tracking_rms_post = [window_rms(0, false), window_rms(1, false)];

    let fault_estimation_rms = rms(
        trace
            .f
            .iter()
            .zip(&trace.f_hat)
            .flat_map(|(f, fh)| f.iter().zip(fh).map(|(a, b)| a - b)),
    );

    let settling_time = [0, 1].map(|axis| {
        let pre: Vec<usize> = (0..n).filter(|&k| is_pre(k)).collect();
        if pre.is_empty() {
            return None;
        }
        match pre.iter().rposition(|&k| err(k, axis).abs() > SETTLE_BAND) {
            None => Some(trace.t[pre[0]]),
            Some(last) if last + 1 < pre.len() => Some(trace.t[pre[last + 1]]),
            Some(_) => None,
        }
    });

    let saturated = trace
        .u
        .iter()
        .filter(|u| u.iter().any(|v| v.abs() >= u_limit - 1e-12))
        .count();

    Ok(Metrics {
        split,
        tracking_rms_pre,
        tracking_rms_post,
        fault_estimation_rms,
        settling_time,
        saturation_duty: saturated as f64 / n as f64,
    })
}

/// Fault onset inferred from the logged fault columns.
pub fn inferred_onset(trace: &SimTrace) -> Option<f64> {
    trace
        .f
        .iter()
        .position(|f| f.iter().any(|v| *v != 0.0))
        .map(|k| trace.t[k])
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn trace_with_error(n: usize, dt: f64, e: impl Fn(f64) -> f64) -> SimTrace {
        let mut tr = SimTrace {
            dt,
            ..Default::default()
        };
        for k in 0..n {
            let t = k as f64 * dt;
            tr.t.push(t);
            tr.x.push([0.1 + e(t), 0.0, 0.0, -0.2 + e(t), 0.0, 0.0]);
            tr.x_hat.push([0.0; 6]);
            tr.x_hat_f.push([0.0; 6]);
            tr.reference.push([0.1, -0.2]);
            tr.u.push([0.0, 0.0]);
            tr.f.push(vec![0.0, 0.0]);
            tr.f_hat.push(vec![0.0, 0.0]);
        }
        tr
    }

    #[test]
    fn perfect_tracking() {
        let tr = trace_with_error(100, 0.01, |_| 0.0);
        let m = metrics(&tr, None, 2.5).unwrap();
        assert_eq!(m.tracking_rms_pre, [Some(0.0), Some(0.0)]);
        assert_eq!(m.tracking_rms_post, [None, None]);
        assert_eq!(m.settling_time, [Some(0.0), Some(0.0)]);
        assert_eq!(m.saturation_duty, 0.0);
    }

    #[test]
    fn constant_offset() {
        let tr = trace_with_error(100, 0.01, |_| -0.3);
        let m = metrics(&tr, Some(0.5), 2.5).unwrap();
        for v in m.tracking_rms_pre.iter().chain(&m.tracking_rms_post) {
            assert_abs_diff_eq!(v.unwrap(), 0.3, epsilon = 1e-12);
        }
        assert_eq!(m.settling_time, [None, None]);
    }

    #[test]
    fn sine_rms() {
        // 10 full periods of a 1 Hz sine, endpoint excluded
        let a = 0.7;
        let tr = trace_with_error(10_000, 1e-3, |t| a * (2.0 * std::f64::consts::PI * t).sin());
        let m = metrics(&tr, None, 2.5).unwrap();
        assert_abs_diff_eq!(m.tracking_rms_pre[0].unwrap(), a / 2f64.sqrt(), epsilon = 1e-6);
    }

    #[test]
    fn empty_trace_rejected() {
        assert!(metrics(&SimTrace::default(), None, 2.5).is_err());
    }

    #[test]
    fn onset_inference() {
        let mut tr = trace_with_error(10, 0.1, |_| 0.0);
        assert_eq!(inferred_onset(&tr), None);
        tr.f[4][1] = 0.2;
        assert_eq!(inferred_onset(&tr), Some(tr.t[4]));
    }
}
