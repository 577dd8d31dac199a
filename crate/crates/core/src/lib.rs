//! Model-free longitudinal/lateral vehicle control laboratory.
//!
//! * [`plant`]: control model and "truth" vehicle plant.
//! * [`ultralocal`]: ultra-local model bookkeeping and algebraic estimation of `F`.
//! * [`controllers`]: intelligent controllers, the two-channel model-free vehicle
//!   controller, the flatness-based controller and the PID baselines.
//! * [`trajectory`]: reference path reconstruction, synthetic tracks and
//!   lateral deviation measurement.
//! * [`simkit`]: closed-loop scenarios, traces and the normalized-error metrics.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod controllers;
pub mod error;
pub mod plant;
pub mod simkit;
pub mod trajectory;
pub mod ultralocal;

pub use error::{Error, Result};
