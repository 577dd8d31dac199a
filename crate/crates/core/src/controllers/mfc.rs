//! Two-channel model-free vehicle controller.
//!
//! * longitudinal: `z1 = Vx`, `nu = 1`, iP driving the wheel torque;
//! * lateral: `z2 = y` (lateral deviation), `nu = 2`, iPD driving the steering.
//!
//! The controller only ever sees measurements; it has no access to vehicle
//! parameters. Controller outputs are expressed in channel units
//! (`torque_unit_nm`, `steer_unit_rad`) that set the scale of `alpha`.

use serde::{Deserialize, Serialize};

use super::intelligent::{IntelligentController, IntelligentGains, ReferenceSignal};
use super::{ControlOutput, Measurement};
use crate::error::{invalid, Result};
use crate::plant::{ActuatorLimits, ControlInput, Saturation};
use crate::ultralocal::{
    AlgebraicEstimator, Differentiator, UltraLocalConfig, DEFAULT_DIFF_SAMPLES,
};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MfcConfig {
    pub longitudinal: IntelligentGains,
    pub lateral: IntelligentGains,
    #[serde(rename = "tau_long_s")]
    pub tau_long: f64,
    #[serde(rename = "tau_lat_s")]
    pub tau_lat: f64,
    /// Wheel torque per unit of longitudinal controller output.
    #[serde(rename = "torque_unit_nm")]
    pub torque_unit: f64,
    /// Steering angle per unit of lateral controller output.
    #[serde(rename = "steer_unit_rad")]
    pub steer_unit: f64,
    /// Samples in the least-squares differentiator of the lateral error.
    pub diff_samples: usize,
}

impl Default for MfcConfig {
    fn default() -> Self {
        Self {
            longitudinal: IntelligentGains::longitudinal(),
            lateral: IntelligentGains::lateral(),
            tau_long: 0.04,
            tau_lat: 0.04,
            torque_unit: 1000.0,
            steer_unit: 8f64.to_radians(),
            diff_samples: DEFAULT_DIFF_SAMPLES,
        }
    }
}

impl MfcConfig {
    pub fn validate(&self, fs: f64) -> Result<()> {
        self.longitudinal.validate()?;
        self.lateral.validate()?;
        if self.longitudinal.nu != 1 {
            return Err(invalid(
                "longitudinal.nu",
                "the speed channel is first order",
            ));
        }
        if self.lateral.nu != 2 {
            return Err(invalid(
                "lateral.nu",
                "the lateral deviation channel is second order",
            ));
        }
        for (name, v) in [
            ("torque_unit_nm", self.torque_unit),
            ("steer_unit_rad", self.steer_unit),
        ] {
            if !(v.is_finite() && v > 0.0) {
                return Err(invalid(name, "must be finite and > 0"));
            }
        }
        self.ultralocal(fs).map(|_| ())
    }

    fn ultralocal(&self, fs: f64) -> Result<(UltraLocalConfig, UltraLocalConfig)> {
        Ok((
            UltraLocalConfig::new(1, self.longitudinal.alpha, self.tau_long, fs)?,
            UltraLocalConfig::new(2, self.lateral.alpha, self.tau_lat, fs)?,
        ))
    }

    /// Longest estimation window, i.e. the bootstrap interval.
    pub fn bootstrap(&self, fs: f64) -> f64 {
        match self.ultralocal(fs) {
            Ok((a, b)) => a.span().max(b.span()),
            Err(_) => self.tau_long.max(self.tau_lat),
        }
    }
}

/// References for the two channels; the lateral deviation reference is the
/// path itself, so its derivatives are zero unless an offset is commanded.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct MfcReference {
    pub vx: ReferenceSignal,
    pub lateral: ReferenceSignal,
}

#[derive(Debug, Clone)]
pub struct MfcVehicle {
    cfg: MfcConfig,
    dt: f64,
    est_long: AlgebraicEstimator,
    est_lat: AlgebraicEstimator,
    e_lat_rate: Differentiator,
    long: IntelligentController,
    lat: IntelligentController,
    /// Last applied outputs in channel units, held over the coming interval.
    held: (f64, f64),
}

impl MfcVehicle {
    pub fn new(cfg: MfcConfig, fs: f64, limits: ActuatorLimits) -> Result<Self> {
        cfg.validate(fs)?;
        limits.validate()?;
        let (c1, c2) = cfg.ultralocal(fs)?;
        Ok(Self {
            est_long: AlgebraicEstimator::new(c1)?,
            est_lat: AlgebraicEstimator::new(c2)?,
            e_lat_rate: Differentiator::new(cfg.diff_samples, fs)?,
            long: IntelligentController::new(
                cfg.longitudinal,
                limits.torque_max / cfg.torque_unit,
            )?,
            lat: IntelligentController::new(cfg.lateral, limits.steer_max / cfg.steer_unit)?,
            held: (0.0, 0.0),
            dt: 1.0 / fs,
            cfg,
        })
    }

    pub fn config(&self) -> &MfcConfig {
        &self.cfg
    }

    /// One control sample. Outputs zero until both estimation windows are full.
    pub fn step(&mut self, m: &Measurement, r: &MfcReference) -> Result<ControlOutput> {
        let e_lat = m.y_err - r.lateral.z_d;
        self.est_long.push(m.vx, self.held.0);
        self.est_lat.push(m.y_err, self.held.1);
        self.e_lat_rate.push(e_lat);

        if !(self.est_long.is_ready() && self.est_lat.is_ready()) {
            self.held = (0.0, 0.0);
            return Ok(ControlOutput::default());
        }
        let f1 = self.est_long.estimate()?;
        let f2 = self.est_lat.estimate()?;
        let (u1, sat1) = self.long.step(f1, &r.vx, m.vx, 0.0, self.dt);
        let y_dot = self.e_lat_rate.estimate() + r.lateral.z_d_dot;
        let (u2, sat2) = self.lat.step(f2, &r.lateral, m.y_err, y_dot, self.dt);
        self.held = (u1, u2);
        Ok(ControlOutput {
            input: ControlInput {
                torque: u1 * self.cfg.torque_unit,
                steer: u2 * self.cfg.steer_unit,
            },
            saturation: Saturation {
                torque: sat1,
                steer: sat2,
            },
            f1: Some(f1),
            f2: Some(f2),
            ..Default::default()
        })
    }
}
