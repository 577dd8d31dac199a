//! Classical PID baselines on the speed error and on the lateral deviation
//! error, with a first-order filter on the derivative action.

use serde::{Deserialize, Serialize};

use super::{ControlOutput, Measurement};
use crate::error::{invalid, Result};
use crate::plant::{ActuatorLimits, ControlInput, Saturation};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PidGains {
    pub kp: f64,
    pub ki: f64,
    pub kd: f64,
    /// Time constant of the derivative filter.
    #[serde(rename = "tf_s", default = "default_tf")]
    pub tf: f64,
}

fn default_tf() -> f64 {
    0.02
}

impl PidGains {
    /// Default speed-loop gains.
    pub fn longitudinal() -> Self {
        Self {
            kp: 1.51,
            ki: 0.75,
            kd: 0.52,
            tf: default_tf(),
        }
    }

    /// Default lateral-deviation gains.
    pub fn lateral() -> Self {
        Self {
            kp: 0.95,
            ki: 46.0,
            kd: 0.36,
            tf: default_tf(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if ![self.kp, self.ki, self.kd].iter().all(|g| g.is_finite()) {
            return Err(invalid("pid gains", "must be finite"));
        }
        if !(self.tf.is_finite() && self.tf > 0.0) {
            return Err(invalid("tf_s", "derivative filter constant must be > 0"));
        }
        Ok(())
    }
}

/// Discrete PID: rectangular integral, backward-Euler filtered derivative
/// `kd s / (tf s + 1)`, conditional-integration anti-windup.
#[derive(Debug, Clone)]
pub struct Pid {
    gains: PidGains,
    u_max: f64,
    dt: f64,
    integral: f64,
    derivative: f64,
    prev_e: Option<f64>,
}

impl Pid {
    pub fn new(gains: PidGains, u_max: f64, dt: f64) -> Result<Self> {
        gains.validate()?;
        if !(u_max > 0.0) {
            return Err(invalid("u_max", "must be > 0"));
        }
        if !(dt.is_finite() && dt > 0.0) {
            return Err(invalid("dt", "must be > 0"));
        }
        Ok(Self {
            gains,
            u_max,
            dt,
            integral: 0.0,
            derivative: 0.0,
            prev_e: None,
        })
    }

    pub fn integral(&self) -> f64 {
        self.integral
    }

    /// Returns the bounded output and whether it saturated. The first sample
    /// produces no derivative kick.
    pub fn step(&mut self, e: f64) -> (f64, bool) {
        let g = &self.gains;
        let de = self.prev_e.map_or(0.0, |p| e - p);
        self.prev_e = Some(e);
        self.derivative = (g.tf * self.derivative + g.kd * de) / (g.tf + self.dt);
        let candidate = self.integral + e * self.dt;
        let u = g.kp * e + self.derivative + g.ki * candidate;
        if u.abs() <= self.u_max {
            self.integral = candidate;
            return (u, false);
        }
        let u = g.kp * e + self.derivative + g.ki * self.integral;
        let bounded = u.clamp(-self.u_max, self.u_max);
        (bounded, bounded != u)
    }

    pub fn reset(&mut self) {
        self.integral = 0.0;
        self.derivative = 0.0;
        self.prev_e = None;
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PidConfig {
    pub longitudinal: PidGains,
    pub lateral: PidGains,
    /// Wheel torque per unit of speed-loop output.
    #[serde(rename = "torque_unit_nm")]
    pub torque_unit: f64,
    /// Steering angle per unit of lateral-loop output.
    #[serde(rename = "steer_unit_rad")]
    pub steer_unit: f64,
}

impl Default for PidConfig {
    fn default() -> Self {
        Self {
            longitudinal: PidGains::longitudinal(),
            lateral: PidGains::lateral(),
            torque_unit: 1000.0,
            steer_unit: 5.0,
        }
    }
}

impl PidConfig {
    pub fn validate(&self) -> Result<()> {
        self.longitudinal.validate()?;
        self.lateral.validate()?;
        for (name, v) in [
            ("torque_unit_nm", self.torque_unit),
            ("steer_unit_rad", self.steer_unit),
        ] {
            if !(v.is_finite() && v > 0.0) {
                return Err(invalid(name, "must be finite and > 0"));
            }
        }
        Ok(())
    }
}

/// The two PID loops acting on measurements only.
#[derive(Debug, Clone)]
pub struct PidVehicle {
    cfg: PidConfig,
    speed: Pid,
    lateral: Pid,
}

impl PidVehicle {
    pub fn new(cfg: PidConfig, fs: f64, limits: ActuatorLimits) -> Result<Self> {
        cfg.validate()?;
        limits.validate()?;
        if !(fs.is_finite() && fs > 0.0) {
            return Err(invalid("fs_hz", "must be > 0"));
        }
        let dt = 1.0 / fs;
        Ok(Self {
            speed: Pid::new(cfg.longitudinal, limits.torque_max / cfg.torque_unit, dt)?,
            lateral: Pid::new(cfg.lateral, limits.steer_max / cfg.steer_unit, dt)?,
            cfg,
        })
    }

    pub fn config(&self) -> &PidConfig {
        &self.cfg
    }

    /// Errors are reference minus measurement: `e_Vx = Vx_d - Vx`,
    /// `e_y = y_d - y`.
    pub fn step(&mut self, m: &Measurement, vx_d: f64, y_d: f64) -> ControlOutput {
        let (u1, sat1) = self.speed.step(vx_d - m.vx);
        let (u2, sat2) = self.lateral.step(y_d - m.y_err);
        ControlOutput {
            input: ControlInput {
                torque: u1 * self.cfg.torque_unit,
                steer: u2 * self.cfg.steer_unit,
            },
            saturation: Saturation {
                torque: sat1,
                steer: sat2,
            },
            ..Default::default()
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_error_zero_output() {
        let mut c =
            PidVehicle::new(PidConfig::default(), 200.0, ActuatorLimits::default()).unwrap();
        let m = Measurement {
            vx: 20.0,
            ..Default::default()
        };
        for _ in 0..100 {
            let out = c.step(&m, 20.0, 0.0);
            assert_eq!(out.input, ControlInput::default());
        }
    }

    #[test]
    fn proportional_plus_integral_after_one_second() {
        let mut pid = Pid::new(PidGains::longitudinal(), 1e9, 1.0 / 200.0).unwrap();
        let mut u = 0.0;
        for _ in 0..200 {
            u = pid.step(1.0).0;
        }
        // constant error: the filtered derivative never kicks
        assert!((u - 2.26).abs() < 1e-9, "u = {u}");
    }

    #[test]
    fn derivative_is_filtered_ramp_slope() {
        let g = PidGains {
            kp: 0.0,
            ki: 0.0,
            kd: 2.0,
            tf: 0.02,
        };
        let dt = 0.005;
        let mut pid = Pid::new(g, 1e9, dt).unwrap();
        let mut u = 0.0;
        for k in 0..400 {
            u = pid.step(0.7 * k as f64 * dt).0;
        }
        assert!((u - 1.4).abs() < 1e-9);
    }

    #[test]
    fn anti_windup_freezes_integral() {
        let mut pid = Pid::new(PidGains::lateral(), 1.0, 0.005).unwrap();
        for _ in 0..100 {
            let (u, sat) = pid.step(5.0);
            assert!(sat);
            assert_eq!(u, 1.0);
        }
        assert_eq!(pid.integral(), 0.0);
    }

    #[test]
    fn default_gains() {
        let c = PidConfig::default();
        assert_eq!(
            (c.longitudinal.kp, c.longitudinal.kd, c.longitudinal.ki),
            (1.51, 0.52, 0.75)
        );
        assert_eq!(
            (c.lateral.kp, c.lateral.kd, c.lateral.ki),
            (0.95, 0.36, 46.0)
        );
        let mut bad = c;
        bad.lateral.tf = 0.0;
        assert!(bad.validate().is_err());
    }
}
