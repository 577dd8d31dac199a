//! Intelligent controllers for the ultra-local model `z^(nu) = F + alpha u`.
//!
//! Each law injects `-F_est` and the reference derivative of order `nu`, so
//! with an exact estimate the tracking error `e = z - z_d` obeys a linear ODE
//! set by the gains alone:
//!
//! | law  | nu | closed-loop error equation            |
//! |------|----|---------------------------------------|
//! | iP   | 1  | `e' + KP e = 0`                       |
//! | iPI  | 1  | `e' + KP e + KI int e = 0`            |
//! | iPD  | 2  | `e'' + KD e' + KP e = 0`              |
//! | iPID | 2  | `e'' + KD e' + KP e + KI int e = 0`   |

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IntelligentGains {
    pub kp: f64,
    #[serde(default)]
    pub ki: f64,
    #[serde(default)]
    pub kd: f64,
    pub alpha: f64,
    pub nu: u8,
}

impl IntelligentGains {
    /// Default longitudinal gains (iP, `nu = 1`).
    pub fn longitudinal() -> Self {
        Self {
            kp: 2.0,
            ki: 0.0,
            kd: 0.0,
            alpha: 1.5,
            nu: 1,
        }
    }

    /// Default lateral gains (iPD, `nu = 2`).
    pub fn lateral() -> Self {
        Self {
            kp: 1.9,
            ki: 0.0,
            kd: 0.5,
            alpha: 1.95,
            nu: 2,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if ![self.kp, self.ki, self.kd].iter().all(|g| g.is_finite()) {
            return Err(invalid("gains", "must be finite"));
        }
        if !(self.alpha.is_finite() && self.alpha != 0.0) {
            return Err(invalid("alpha", "must be finite and non-zero"));
        }
        match self.nu {
            1 if self.kp > 0.0 => Ok(()),
            2 if self.kp > 0.0 && self.kd > 0.0 => Ok(()),
            1 | 2 => Err(invalid(
                "gains",
                "closed-loop error polynomial must be Hurwitz (kp > 0, and kd > 0 for nu = 2)",
            )),
            nu => Err(invalid("nu", format!("must be 1 or 2, got {nu}"))),
        }
    }
}

/// Desired output and its analytic derivatives.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct ReferenceSignal {
    pub z_d: f64,
    pub z_d_dot: f64,
    pub z_d_ddot: f64,
}

/// iP: `u = -(F - z_d' + KP e) / alpha`.
pub fn ip_control(f_est: f64, r: &ReferenceSignal, z: f64, g: &IntelligentGains) -> f64 {
    let e = z - r.z_d;
    -(f_est - r.z_d_dot + g.kp * e) / g.alpha
}

/// iPI: iP plus `KI int e`. `KI = 0` reproduces [`ip_control`] exactly.
pub fn ipi_control(
    f_est: f64,
    r: &ReferenceSignal,
    z: f64,
    int_e: f64,
    g: &IntelligentGains,
) -> f64 {
    let e = z - r.z_d;
    let mut acc = f_est - r.z_d_dot + g.kp * e;
    if g.ki != 0.0 {
        acc += g.ki * int_e;
    }
    -acc / g.alpha
}

/// iPD: `u = -(F - z_d'' + KP e + KD e') / alpha` with `e'` estimated from
/// measurements.
pub fn ipd_control(
    f_est: f64,
    r: &ReferenceSignal,
    z: f64,
    z_dot_est: f64,
    g: &IntelligentGains,
) -> f64 {
    let e = z - r.z_d;
    let e_dot = z_dot_est - r.z_d_dot;
    -(f_est - r.z_d_ddot + g.kp * e + g.kd * e_dot) / g.alpha
}

/// iPID: iPD plus `KI int e`. `KI = 0` reproduces [`ipd_control`] exactly.
pub fn ipid_control(
    f_est: f64,
    r: &ReferenceSignal,
    z: f64,
    z_dot_est: f64,
    int_e: f64,
    g: &IntelligentGains,
) -> f64 {
    let e = z - r.z_d;
    let e_dot = z_dot_est - r.z_d_dot;
    let mut acc = f_est - r.z_d_ddot + g.kp * e + g.kd * e_dot;
    if g.ki != 0.0 {
        acc += g.ki * int_e;
    }
    -acc / g.alpha
}

/// Stateful intelligent controller holding the error integral, with
/// conditional-integration anti-windup against symmetric output bounds.
#[derive(Debug, Clone)]
pub struct IntelligentController {
    gains: IntelligentGains,
    integral: f64,
    u_max: f64,
}

impl IntelligentController {
    pub fn new(gains: IntelligentGains, u_max: f64) -> Result<Self> {
        gains.validate()?;
        if !(u_max > 0.0) {
            return Err(invalid("u_max", "must be > 0"));
        }
        Ok(Self {
            gains,
            integral: 0.0,
            u_max,
        })
    }

    pub fn gains(&self) -> &IntelligentGains {
        &self.gains
    }

    pub fn integral(&self) -> f64 {
        self.integral
    }

    fn law(&self, f_est: f64, r: &ReferenceSignal, z: f64, z_dot_est: f64, int_e: f64) -> f64 {
        if self.gains.nu == 1 {
            ipi_control(f_est, r, z, int_e, &self.gains)
        } else {
            ipid_control(f_est, r, z, z_dot_est, int_e, &self.gains)
        }
    }

    /// Returns the bounded output and whether it saturated. `z_dot_est` is
    /// ignored for `nu = 1`. The integral is not advanced while the output
    /// sits at a bound.
    pub fn step(
        &mut self,
        f_est: f64,
        r: &ReferenceSignal,
        z: f64,
        z_dot_est: f64,
        dt: f64,
    ) -> (f64, bool) {
        let e = z - r.z_d;
        let candidate = self.integral + e * dt;
        let u = self.law(f_est, r, z, z_dot_est, candidate);
        if u.abs() <= self.u_max {
            self.integral = candidate;
            return (u, false);
        }
        let u = self.law(f_est, r, z, z_dot_est, self.integral);
        let bounded = u.clamp(-self.u_max, self.u_max);
        (bounded, bounded != u)
    }

    pub fn reset(&mut self) {
        self.integral = 0.0;
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ip_perfect_tracking_gives_zero() {
        let r = ReferenceSignal {
            z_d: 3.0,
            z_d_dot: 1.25,
            z_d_ddot: 0.0,
        };
        assert_eq!(
            ip_control(1.25, &r, 3.0, &IntelligentGains::longitudinal()),
            0.0
        );
    }

    #[test]
    fn ip_direct_evaluation() {
        let r = ReferenceSignal {
            z_d: 0.0,
            z_d_dot: 1.0,
            z_d_ddot: 0.0,
        };
        let u = ip_control(2.0, &r, 0.5, &IntelligentGains::longitudinal());
        assert!((u + 4.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn ipd_direct_evaluation() {
        let g = IntelligentGains::lateral();
        let r = ReferenceSignal::default();
        assert_eq!(ipd_control(0.0, &r, 0.0, 0.0, &g), 0.0);
        let u = ipd_control(0.0, &r, 0.1, -0.2, &g);
        assert!((u + 0.09 / 1.95).abs() < 1e-15);
        assert!((u + 0.046_153_846_153_846).abs() < 1e-12);
    }

    #[test]
    fn zero_ki_reductions_are_bit_exact() {
        let r = ReferenceSignal {
            z_d: 0.3,
            z_d_dot: -0.7,
            z_d_ddot: 0.11,
        };
        let g1 = IntelligentGains::longitudinal();
        let g2 = IntelligentGains::lateral();
        for &(f, z, zd, i) in &[
            (1.3, 0.2, 0.05, 4.0),
            (-0.0, 0.3, -0.7, -2.0),
            (1e-300, -5.0, 7.0, 0.1),
        ] {
            assert_eq!(
                ipi_control(f, &r, z, i, &g1).to_bits(),
                ip_control(f, &r, z, &g1).to_bits()
            );
            assert_eq!(
                ipid_control(f, &r, z, zd, i, &g2).to_bits(),
                ipd_control(f, &r, z, zd, &g2).to_bits()
            );
        }
    }

    #[test]
    fn gains_validation() {
        assert!(IntelligentGains::longitudinal().validate().is_ok());
        assert!(IntelligentGains::lateral().validate().is_ok());
        let mut g = IntelligentGains::lateral();
        g.kd = 0.0;
        assert!(g.validate().is_err());
        g = IntelligentGains::longitudinal();
        g.alpha = 0.0;
        assert!(g.validate().is_err());
    }

    #[test]
    fn integral_frozen_at_saturation() {
        let g = IntelligentGains {
            ki: 1.0,
            ..IntelligentGains::longitudinal()
        };
        let mut c = IntelligentController::new(g, 1.0).unwrap();
        let r = ReferenceSignal::default();
        // large error drives the output to the bound
        for _ in 0..100 {
            let (u, sat) = c.step(0.0, &r, 5.0, 0.0, 0.01);
            assert!(sat);
            assert_eq!(u, -1.0);
        }
        assert_eq!(c.integral(), 0.0);
        let (_, sat) = c.step(0.0, &r, 0.1, 0.0, 0.01);
        assert!(!sat);
        assert!((c.integral() - 0.001).abs() < 1e-15);
    }
}
