//! Vehicle controllers: the intelligent controller family and the two-channel
//! model-free controller built on it, the flatness-based controller and the
//! classical PID baselines.

pub mod flat;
pub mod intelligent;
pub mod mfc;
pub mod pid;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error};
use crate::plant::{ControlInput, Saturation};

pub use flat::{
    decoupling, flat_outputs, recover_state, ControlModelParams, Decoupling, FlatConfig,
    FlatController, FlatGains, FlatReference,
};
pub use intelligent::{
    ip_control, ipd_control, ipi_control, ipid_control, IntelligentController, IntelligentGains,
    ReferenceSignal,
};
pub use mfc::{MfcConfig, MfcReference, MfcVehicle};
pub use pid::{Pid, PidConfig, PidGains, PidVehicle};

/// Controller selection, one per column of the comparison table.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ControllerKind {
    Mfc,
    Flat,
    Pid,
}

impl ControllerKind {
    pub const ALL: [ControllerKind; 3] = [
        ControllerKind::Mfc,
        ControllerKind::Flat,
        ControllerKind::Pid,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            ControllerKind::Mfc => "mfc",
            ControllerKind::Flat => "flat",
            ControllerKind::Pid => "pid",
        }
    }
}

impl fmt::Display for ControllerKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ControllerKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "mfc" => Ok(ControllerKind::Mfc),
            "flat" => Ok(ControllerKind::Flat),
            "pid" => Ok(ControllerKind::Pid),
            other => Err(invalid(
                "controller",
                format!("unknown controller {other:?}; expected mfc, flat or pid"),
            )),
        }
    }
}

/// What the measurement-only controllers see.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Measurement {
    /// Longitudinal speed (m/s).
    pub vx: f64,
    /// Signed lateral deviation from the path, left positive (m).
    pub y_err: f64,
    /// Heading relative to the path tangent (rad).
    pub psi_err: f64,
}

/// One control sample, already bounded to the actuator limits.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct ControlOutput {
    pub input: ControlInput,
    pub saturation: Saturation,
    /// Estimate of the unknown term of the speed channel (model-free only).
    pub f1: Option<f64>,
    /// Estimate of the unknown term of the lateral channel (model-free only).
    pub f2: Option<f64>,
    /// Second flat output and its reference (flatness controller only).
    pub z2: Option<f64>,
    pub z2_ref: Option<f64>,
}
