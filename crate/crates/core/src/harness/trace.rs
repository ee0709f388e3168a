//! Time-indexed simulation record and its CSV form.

use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct SimTrace {
    pub dt: f64,
    pub t: Vec<f64>,
    pub x: Vec<[f64; 6]>,
    /// Fault-free reference estimate.
    pub x_hat: Vec<[f64; 6]>,
    /// Unknown-input (faulty) estimate.
    pub x_hat_f: Vec<[f64; 6]>,
    /// `[alpha_v_ref, alpha_h_ref]`.
    pub reference: Vec<[f64; 2]>,
    /// Applied command before fault injection.
    pub u: Vec<[f64; 2]>,
    pub f: Vec<Vec<f64>>,
    pub f_hat: Vec<Vec<f64>>,
}

impl SimTrace {
    pub fn len(&self) -> usize {
        self.t.len()
    }

    pub fn is_empty(&self) -> bool {
        self.t.is_empty()
    }

    pub fn fault_dim(&self) -> usize {
        self.f.first().map_or(0, Vec::len)
    }

    pub fn header(s: usize) -> String {
        let mut cols = vec!["t".to_string()];
        cols.extend((1..=6).map(|i| format!("x{i}")));
        cols.extend((1..=6).map(|i| format!("xh{i}")));
        cols.extend((1..=6).map(|i| format!("xf{i}")));
        cols.extend(["ref_av", "ref_ah", "u_v", "u_h"].map(String::from));
        cols.extend((1..=s).map(|i| format!("f{i}")));
        cols.extend((1..=s).map(|i| format!("fhat{i}")));
        cols.join(",")
    }

    /// CSV with 9 significant digits per value.
    pub fn to_csv(&self) -> String {
        let s = self.fault_dim();
        let mut out = Self::header(s);
        out.push('\n');
        for k in 0..self.len() {
            let row = std::iter::once(self.t[k])
                .chain(self.x[k])
                .chain(self.x_hat[k])
                .chain(self.x_hat_f[k])
                .chain(self.reference[k])
                .chain(self.u[k])
                .chain(self.f[k].iter().copied())
                .chain(self.f_hat[k].iter().copied());
            for (i, v) in row.enumerate() {
                if i > 0 {
                    out.push(',');
                }
                write!(out, "{v:.8e}").expect("writing to a String cannot fail");
            }
            out.push('\n');
        }
        out
    }

    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_csv())?;
        Ok(())
    }

    pub fn from_csv(text: &str) -> Result<Self> {
        let mut lines = text.lines().filter(|l| !l.trim().is_empty());
        let header = lines
            .next()
            .ok_or_else(|| Error::Config("empty trace file".into()))?;
        let ncols = header.split(',').count();
        let fixed = 1 + 18 + 4;
        if ncols < fixed || (ncols - fixed) % 2 != 0 {
            return Err(Error::Config(format!("unexpected trace header with {ncols} columns")));
        }
        let s = (ncols - fixed) / 2;
        if header.trim() != Self::header(s) {
            return Err(Error::Config(format!("trace header mismatch: `{header}`")));
        }

        let mut trace = SimTrace::default();
        for (lineno, line) in lines.enumerate() {
            let vals = line
                .split(',')
                .map(|v| v.trim().parse::<f64>())
                .collect::<std::result::Result<Vec<_>, _>>()
                .map_err(|e| Error::Config(format!("trace row {}: {e}", lineno + 1)))?;
            if vals.len() != ncols {
                return Err(Error::Config(format!(
                    "trace row {} has {} values, expected {ncols}",
                    lineno + 1,
                    vals.len()
                )));
            }
            let arr6 = |o: usize| -> [f64; 6] { vals[o..o + 6].try_into().unwrap() };
            trace.t.push(vals[0]);
            trace.x.push(arr6(1));
            trace.x_hat.push(arr6(7));
            trace.x_hat_f.push(arr6(13));
            trace.reference.push([vals[19], vals[20]]);
            trace.u.push([vals[21], vals[22]]);
            trace.f.push(vals[23..23 + s].to_vec());
            trace.f_hat.push(vals[23 + s..23 + 2 * s].to_vec());
        }
        if trace.t.len() >= 2 {
            trace.dt = trace.t[1] - trace.t[0];
        }
        Ok(trace)
    }

    pub fn read_csv(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_csv(&std::fs::read_to_string(path)?)
    }
}
