//! Simulation and control synthesis for a twin-rotor MIMO helicopter rig with
//! additive actuator faults.
//!
//! The pipeline is: nonlinear [`plant`] → bank of affine local models
//! ([`multimodel`]) → offline gains ([`synthesis`]) → online fault estimation
//! ([`observer`]) and fault-tolerant command ([`ftc`]) → closed-loop scenarios
//! ([`harness`]).

// `!(x > 0.0)` is used on purpose so that NaN fails validation.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod ftc;
pub mod harness;
pub mod integrate;
pub mod linalg;
pub mod multimodel;
pub mod observer;
pub mod plant;
pub mod synthesis;

pub use error::{Error, Result};
