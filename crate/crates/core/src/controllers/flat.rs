//! Flatness-based controller on the control model.
//!
//! Flat outputs `z1 = Vx`, `z2 = Lf m Vy - Iz psi_dot`. Along the control model
//!
//! ```text
//! z1'  = psi_dot Vy + T / (m R)
//! z2'  = L Fyr - Lf m psi_dot Vx          (independent of the steering)
//! [z1'; z2''] = Delta (T, delta) + Phi
//! ```
//!
//! and the input is recovered as `u = Delta^-1 (v - Phi)` with `v` from a
//! linear tracking law with integral action on both outputs.

use serde::{Deserialize, Serialize};

use super::ControlOutput;
use crate::error::{invalid, Error, Result};
use crate::plant::{steady_cornering, ActuatorLimits, ControlInput, PlantState, VehicleParams};
use crate::trajectory::{PathPoint, Projection};

/// The subset of vehicle parameters the flatness controller is allowed to
/// read: the control-model constants, with an assumed adhesion.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ControlModelParams {
    pub m: f64,
    pub iz: f64,
    pub lf: f64,
    pub lr: f64,
    pub cf: f64,
    pub cr: f64,
    pub r: f64,
    pub mu: f64,
}

impl ControlModelParams {
    /// Control-model view of `p` with the adhesion the controller assumes.
    pub fn nominal(p: &VehicleParams, assumed_mu: f64) -> Self {
        Self {
            m: p.m,
            iz: p.iz,
            lf: p.lf,
            lr: p.lr,
            cf: p.cf,
            cr: p.cr,
            r: p.r,
            mu: assumed_mu,
        }
    }

    pub fn wheelbase(&self) -> f64 {
        self.lf + self.lr
    }

    fn as_vehicle(&self) -> VehicleParams {
        VehicleParams {
            m: self.m,
            iz: self.iz,
            lf: self.lf,
            lr: self.lr,
            cf: self.cf,
            cr: self.cr,
            r: self.r,
            mu: self.mu,
            ..VehicleParams::default()
        }
    }

    fn cf_eff(&self) -> f64 {
        self.mu * self.cf
    }

    fn cr_eff(&self) -> f64 {
        self.mu * self.cr
    }

    /// Speed at which the state-recovery denominator vanishes, if any.
    pub fn singular_speed(&self) -> Option<f64> {
        let a = self.cr_eff() * self.wheelbase() * (self.iz - self.lr * self.lf * self.m);
        (a < 0.0).then(|| (-a).sqrt() / (self.lf * self.m))
    }
}

impl From<&VehicleParams> for ControlModelParams {
    fn from(p: &VehicleParams) -> Self {
        Self::nominal(p, p.mu)
    }
}

/// `(z1, z2)` for a state.
pub fn flat_outputs(state: &PlantState, p: &ControlModelParams) -> (f64, f64) {
    (state.vx, p.lf * p.m * state.vy - p.iz * state.psi_dot)
}

/// Time derivative of `z2` along the control model (linear rear tire).
pub fn z2_rate(vx: f64, vy: f64, psi_dot: f64, p: &ControlModelParams) -> f64 {
    let fyr = -p.cr_eff() * (vy - p.lr * psi_dot) / vx;
    p.wheelbase() * fyr - p.lf * p.m * psi_dot * vx
}

/// `(Vx, Vy, psi_dot)` from `(z1, z2, z2')`.
pub fn recover_state(
    z1: f64,
    z2: f64,
    z2_dot: f64,
    p: &ControlModelParams,
) -> Result<(f64, f64, f64)> {
    let lfm = p.lf * p.m;
    let crl = p.cr_eff() * p.wheelbase();
    let den = crl * (p.iz - p.lr * lfm) + (lfm * z1).powi(2);
    let scale = crl * p.iz.abs() + (lfm * z1).powi(2);
    if !(den.abs() > 1e-12 * scale) {
        return Err(Error::SingularRecovery(den));
    }
    let w = (lfm * z1 * z2_dot + crl * z2) / den;
    Ok((z1, z2 / lfm - p.iz / lfm * w, -w))
}

/// Decoupling matrix and drift term of `[z1'; z2''] = Delta u + Phi` at a
/// state, with `u = (T, delta)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Decoupling {
    pub delta: [[f64; 2]; 2],
    pub phi: [f64; 2],
}

impl Decoupling {
    /// Condition number of `Delta` after scaling each row to unit max-norm,
    /// so the mixed units of torque and steering do not dominate.
    pub fn condition(&self) -> f64 {
        let mut a = self.delta;
        for row in a.iter_mut() {
            let s = row[0].abs().max(row[1].abs());
            if s > 0.0 {
                row[0] /= s;
                row[1] /= s;
            }
        }
        let (p, q, r, s) = (a[0][0], a[0][1], a[1][0], a[1][1]);
        let fro2 = p * p + q * q + r * r + s * s;
        let det = (p * s - q * r).abs();
        if det == 0.0 {
            return f64::INFINITY;
        }
        // singular values of a 2x2 matrix from its Frobenius norm and determinant
        let disc = (fro2 * fro2 - 4.0 * det * det).max(0.0).sqrt();
        let smax = ((fro2 + disc) / 2.0).sqrt();
        let smin = det / smax;
        smax / smin
    }

    /// Solves `Delta u = v - Phi`.
    pub fn solve(&self, v: [f64; 2], cond_max: f64) -> Result<ControlInput> {
        let cond = self.condition();
        if !(cond <= cond_max) {
            return Err(Error::SingularDecoupling(cond));
        }
        let [[a, b], [c, d]] = self.delta;
        let (r1, r2) = (v[0] - self.phi[0], v[1] - self.phi[1]);
        let det = a * d - b * c;
        Ok(ControlInput {
            torque: (d * r1 - b * r2) / det,
            steer: (a * r2 - c * r1) / det,
        })
    }
}

/// `Delta` and `Phi` of the control model at `(Vx, Vy, psi_dot)`.
pub fn decoupling(vx: f64, vy: f64, psi_dot: f64, p: &ControlModelParams) -> Result<Decoupling> {
    if !(vx.abs() > 1e-9) {
        return Err(Error::Singularity { vx, vx_min: 1e-9 });
    }
    let l = p.wheelbase();
    let (cf, cr) = (p.cf_eff(), p.cr_eff());
    let a = 1.0 / (p.m * p.r);
    let lfm = p.lf * p.m;
    let rear_slip_num = vy - p.lr * psi_dot;

    // drift of (Vy, psi_dot) at zero steering
    let fyf0 = -cf * (vy + p.lf * psi_dot) / vx;
    let fyr = -cr * rear_slip_num / vx;
    let vy_dot0 = -psi_dot * vx + (fyf0 + fyr) / p.m;
    let psi_ddot0 = (p.lf * fyf0 - p.lr * fyr) / p.iz;
    let vx_dot0 = psi_dot * vy;

    let d11 = a;
    let d21 = a * (l * cr * rear_slip_num / (vx * vx) - lfm * psi_dot);
    let d22 = -(l * cr * cf / vx) * (1.0 / p.m - p.lr * p.lf / p.iz) - p.lf * lfm * vx * cf / p.iz;
    let phi1 = vx_dot0;
    let fyr_dot0 = -cr * ((vy_dot0 - p.lr * psi_ddot0) / vx - rear_slip_num * vx_dot0 / (vx * vx));
    let phi2 = l * fyr_dot0 - lfm * (psi_ddot0 * vx + psi_dot * vx_dot0);
    Ok(Decoupling {
        delta: [[d11, 0.0], [d21, d22]],
        phi: [phi1, phi2],
    })
}

/// Gains of the tracking law
/// `z1' = z1'_ref + K1^1 e1 + K1^2 int e1`,
/// `z2'' = z2''_ref + K2^1 e2' + K2^2 e2 + K2^3 int e2`, with `e = ref - z`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FlatGains {
    pub k1_1: f64,
    pub k1_2: f64,
    pub k2_1: f64,
    pub k2_2: f64,
    pub k2_3: f64,
}

impl FlatGains {
    /// Places a double pole at `-a` for the speed loop and a triple pole at
    /// `-b` for the `z2` loop.
    pub fn from_poles(a: f64, b: f64) -> Self {
        Self {
            k1_1: 2.0 * a,
            k1_2: a * a,
            k2_1: 3.0 * b,
            k2_2: 3.0 * b * b,
            k2_3: b * b * b,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let g = [self.k1_1, self.k1_2, self.k2_1, self.k2_2, self.k2_3];
        if !g.iter().all(|k| k.is_finite() && *k >= 0.0) {
            return Err(invalid("flat gains", "must be finite and >= 0"));
        }
        // Hurwitz conditions of s^2 + k11 s + k12 and s^3 + k21 s^2 + k22 s + k23
        if !(self.k1_1 > 0.0 && self.k2_1 > 0.0 && self.k2_1 * self.k2_2 > self.k2_3) {
            return Err(invalid(
                "flat gains",
                "tracking error dynamics must be Hurwitz",
            ));
        }
        Ok(())
    }
}

impl Default for FlatGains {
    fn default() -> Self {
        Self::from_poles(2.0, 3.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FlatConfig {
    pub gains: FlatGains,
    /// Adhesion assumed by the model inversion.
    pub assumed_mu: f64,
    /// Threshold on the equilibrated condition number of `Delta`.
    pub cond_max: f64,
    /// Outer path guidance: yaw-rate correction per rad of course error (1/s).
    pub guidance_heading_gain: f64,
    /// Outer path guidance: look-ahead rate converting lateral deviation into
    /// a course correction (1/s).
    pub guidance_lateral_gain: f64,
}

impl Default for FlatConfig {
    fn default() -> Self {
        Self {
            gains: FlatGains::default(),
            assumed_mu: 1.0,
            cond_max: 1e8,
            guidance_heading_gain: 4.0,
            guidance_lateral_gain: 1.0,
        }
    }
}

impl FlatConfig {
    pub fn validate(&self) -> Result<()> {
        self.gains.validate()?;
        if !(self.assumed_mu > 0.0 && self.assumed_mu <= 1.0) {
            return Err(invalid("assumed_mu", "must be in (0, 1]"));
        }
        if !(self.cond_max > 1.0) {
            return Err(invalid("cond_max", "must be > 1"));
        }
        for (name, v) in [
            ("guidance_heading_gain", self.guidance_heading_gain),
            ("guidance_lateral_gain", self.guidance_lateral_gain),
        ] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(invalid(name, "must be finite and >= 0"));
            }
        }
        Ok(())
    }
}

/// References of the flat outputs and their derivatives.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct FlatReference {
    pub z1: f64,
    pub z1_dot: f64,
    pub z2: f64,
    pub z2_dot: f64,
    pub z2_ddot: f64,
}

impl FlatReference {
    /// `z2` of the steady cornering manoeuvre at speed `v` on curvature `rho`
    /// is `rho g(v)`; returns `(g, g')`.
    fn cornering_gain(v: f64, p: &ControlModelParams) -> (f64, f64) {
        let l = p.wheelbase();
        let k = p.m * p.lf / (l * p.cr_eff());
        // Vy = v rho (Lr - k v^2), psi_dot = v rho
        let g = p.lf * p.m * v * (p.lr - k * v * v) - p.iz * v;
        let dg = p.lf * p.m * (p.lr - 3.0 * k * v * v) - p.iz;
        (g, dg)
    }

    /// References of the manoeuvre at a path point: speed from the profile,
    /// `z2` from the steady cornering state of the control model. Time
    /// derivatives follow the path at the reference speed; second
    /// derivatives of curvature and speed along the path are neglected.
    pub fn from_path(point: &PathPoint, p: &ControlModelParams) -> Self {
        let v = point.vx;
        let (g, dg) = Self::cornering_gain(v, p);
        let rho_dot = point.drho_ds * v;
        let v_dot = point.dvx_ds * v;
        let z2_dot = rho_dot * g + point.rho * dg * v_dot;
        let z2_ddot = 2.0 * rho_dot * dg * v_dot;
        debug_assert!({
            let (vy, pd, _) = steady_cornering(v, point.rho, &p.as_vehicle());
            ((p.lf * p.m * vy - p.iz * pd) - point.rho * g).abs()
                <= 1e-6 * (1.0 + (point.rho * g).abs())
        });
        Self {
            z1: v,
            z1_dot: v_dot,
            z2: point.rho * g,
            z2_dot,
            z2_ddot,
        }
    }
}

/// Flatness-based tracking controller. Reads the measured body velocities
/// and the control-model parameters only.
#[derive(Debug, Clone)]
pub struct FlatController {
    cfg: FlatConfig,
    model: ControlModelParams,
    limits: ActuatorLimits,
    int_e1: f64,
    int_e2: f64,
}

impl FlatController {
    pub fn new(cfg: FlatConfig, model: ControlModelParams, limits: ActuatorLimits) -> Result<Self> {
        cfg.validate()?;
        limits.validate()?;
        if ![
            model.m, model.iz, model.lf, model.lr, model.cf, model.cr, model.r, model.mu,
        ]
        .iter()
        .all(|v| v.is_finite() && *v > 0.0)
        {
            return Err(invalid(
                "control model",
                "parameters must be finite and > 0",
            ));
        }
        Ok(Self {
            cfg,
            model,
            limits,
            int_e1: 0.0,
            int_e2: 0.0,
        })
    }

    pub fn model(&self) -> &ControlModelParams {
        &self.model
    }

    /// Tracks the given flat-output references.
    pub fn step(
        &mut self,
        state: &PlantState,
        r: &FlatReference,
        dt: f64,
    ) -> Result<ControlOutput> {
        let p = &self.model;
        let (z1, z2) = flat_outputs(state, p);
        let z2_dot = z2_rate(state.vx, state.vy, state.psi_dot, p);
        let e1 = r.z1 - z1;
        let e2 = r.z2 - z2;
        let e2_dot = r.z2_dot - z2_dot;
        let g = &self.cfg.gains;
        let (i1, i2) = (self.int_e1 + e1 * dt, self.int_e2 + e2 * dt);
        let v = [
            r.z1_dot + g.k1_1 * e1 + g.k1_2 * i1,
            r.z2_ddot + g.k2_1 * e2_dot + g.k2_2 * e2 + g.k2_3 * i2,
        ];
        let dec = decoupling(state.vx, state.vy, state.psi_dot, p)?;
        let raw = dec.solve(v, self.cfg.cond_max)?;
        if !(raw.torque.is_finite() && raw.steer.is_finite()) {
            return Err(Error::NonFinite("flatness control input"));
        }
        let (input, saturation) = self.limits.clamp(raw);
        if !saturation.torque {
            self.int_e1 = i1;
        }
        if !saturation.steer {
            self.int_e2 = i2;
        }
        Ok(ControlOutput {
            input,
            saturation,
            z2: Some(z2),
            z2_ref: Some(r.z2),
            ..Default::default()
        })
    }

    /// Tracks the manoeuvre at `point`, with an outer guidance correction of
    /// the yaw-rate reference that steers the course back onto the path.
    pub fn step_on_path(
        &mut self,
        state: &PlantState,
        point: &PathPoint,
        proj: &Projection,
        dt: f64,
    ) -> Result<ControlOutput> {
        let mut r = FlatReference::from_path(point, &self.model);
        let vx = state.vx.max(1.0);
        let course_err = proj.psi_err + state.vy.atan2(state.vx);
        let target = -(self.cfg.guidance_lateral_gain * proj.y_err / vx).atan();
        let psi_dot_corr = self.cfg.guidance_heading_gain * (target - course_err);
        r.z2 -= self.model.iz * psi_dot_corr;
        self.step(state, &r, dt)
    }

    pub fn reset(&mut self) {
        self.int_e1 = 0.0;
        self.int_e2 = 0.0;
    }
}
