//! Vehicle plants.
//!
//! Two plants share the planar two-wheel ("bicycle") body dynamics
//!
//! ```text
//! m (dVx/dt - r Vy) = Fxf + Fxr
//! m (dVy/dt + r Vx) = Fyf + Fyr
//! Iz dr/dt          = Lf Fyf - Lr Fyr
//! ```
//!
//! with `r` the yaw rate. The *control model* uses linear lateral tires and
//! longitudinal forces taken straight from the wheel torques (wheel inertia
//! neglected). The *truth plant* adds saturating tires, aerodynamic drag,
//! wheel spin dynamics with a longitudinal slip model, and friction scaling
//! of every tire force. Both are advanced by fixed-step RK4 with the input
//! held constant over the step.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};

/// Physical constants of the car and tires. All SI.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct VehicleParams {
    #[serde(rename = "m_kg")]
    pub m: f64,
    #[serde(rename = "iz_kg_m2")]
    pub iz: f64,
    #[serde(rename = "lf_m")]
    pub lf: f64,
    #[serde(rename = "lr_m")]
    pub lr: f64,
    #[serde(rename = "cf_n_per_rad")]
    pub cf: f64,
    #[serde(rename = "cr_n_per_rad")]
    pub cr: f64,
    /// Wheel radius.
    #[serde(rename = "r_m")]
    pub r: f64,
    /// Spin inertia of one axle's wheels. Zero collapses the wheel dynamics.
    #[serde(rename = "ir_kg_m2")]
    pub ir: f64,
    /// Road adhesion coefficient in (0, 1].
    pub mu: f64,
    /// Aerodynamic drag coefficient; drag force is `rho_x * Vx^2`.
    #[serde(rename = "rho_x_n_s2_per_m2")]
    pub rho_x: f64,
    #[serde(rename = "g_m_per_s2")]
    pub g: f64,
    /// Share of a braking torque applied to the front axle.
    pub brake_front_share: f64,
    /// Slip-angle singularity guard.
    #[serde(rename = "vx_min_m_per_s")]
    pub vx_min: f64,
}

impl Default for VehicleParams {
    fn default() -> Self {
        Self {
            m: 1600.0,
            iz: 2600.0,
            lf: 1.2,
            lr: 1.4,
            cf: 57_000.0,
            cr: 47_000.0,
            r: 0.3,
            ir: 1.2,
            mu: 1.0,
            rho_x: 0.35,
            g: 9.81,
            brake_front_share: 0.6,
            vx_min: 0.5,
        }
    }
}

impl VehicleParams {
    pub fn validate(&self) -> Result<()> {
        let strictly_positive = [
            ("m_kg", self.m),
            ("iz_kg_m2", self.iz),
            ("lf_m", self.lf),
            ("lr_m", self.lr),
            ("cf_n_per_rad", self.cf),
            ("cr_n_per_rad", self.cr),
            ("r_m", self.r),
            ("g_m_per_s2", self.g),
            ("vx_min_m_per_s", self.vx_min),
        ];
        for (name, v) in strictly_positive {
            if !(v.is_finite() && v > 0.0) {
                return Err(invalid(name, format!("must be finite and > 0, got {v}")));
            }
        }
        // Ir = 0 and rho_x = 0 are meaningful reductions of the truth plant.
        for (name, v) in [("ir_kg_m2", self.ir), ("rho_x_n_s2_per_m2", self.rho_x)] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(invalid(name, format!("must be finite and >= 0, got {v}")));
            }
        }
        if !(self.mu > 0.0 && self.mu <= 1.0) {
            return Err(invalid(
                "mu",
                format!("must lie in (0, 1], got {}", self.mu),
            ));
        }
        if !(0.0..=1.0).contains(&self.brake_front_share) {
            return Err(invalid(
                "brake_front_share",
                format!("must lie in [0, 1], got {}", self.brake_front_share),
            ));
        }
        Ok(())
    }

    pub fn wheelbase(&self) -> f64 {
        self.lf + self.lr
    }

    /// Static vertical loads (front, rear).
    pub fn axle_loads(&self) -> (f64, f64) {
        let w = self.m * self.g / self.wheelbase();
        (w * self.lr, w * self.lf)
    }

    /// Splits a signed wheel torque into (front, rear) axle torques.
    /// Positive torque drives the front axle; negative torque brakes both.
    pub fn axle_torques(&self, torque: f64) -> (f64, f64) {
        if torque >= 0.0 {
            (torque, 0.0)
        } else {
            let front = self.brake_front_share * torque;
            (front, torque - front)
        }
    }
}

/// Dynamic state of the simulated vehicle.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct PlantState {
    pub vx: f64,
    pub vy: f64,
    pub psi: f64,
    pub psi_dot: f64,
    pub x: f64,
    pub y: f64,
    pub omega_f: f64,
    pub omega_r: f64,
}

impl PlantState {
    /// Straight-running state at speed `vx`, wheels rolling without slip.
    pub fn cruising(vx: f64, params: &VehicleParams) -> Self {
        Self {
            vx,
            omega_f: vx / params.r,
            omega_r: vx / params.r,
            ..Self::default()
        }
    }

    pub fn is_finite(&self) -> bool {
        self.as_array().iter().all(|v| v.is_finite())
    }

    fn as_array(&self) -> [f64; 8] {
        [
            self.vx,
            self.vy,
            self.psi,
            self.psi_dot,
            self.x,
            self.y,
            self.omega_f,
            self.omega_r,
        ]
    }

    fn from_array(a: [f64; 8]) -> Self {
        Self {
            vx: a[0],
            vy: a[1],
            psi: a[2],
            psi_dot: a[3],
            x: a[4],
            y: a[5],
            omega_f: a[6],
            omega_r: a[7],
        }
    }
}

/// Actuator commands: signed wheel torque (N·m) and front steering angle (rad).
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct ControlInput {
    pub torque: f64,
    pub steer: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ActuatorLimits {
    #[serde(rename = "torque_max_nm")]
    pub torque_max: f64,
    #[serde(rename = "steer_max_rad")]
    pub steer_max: f64,
}

impl Default for ActuatorLimits {
    fn default() -> Self {
        Self {
            torque_max: 2000.0,
            steer_max: 0.5,
        }
    }
}

/// Which actuators hit their bounds on a given sample.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Saturation {
    pub torque: bool,
    pub steer: bool,
}

impl ActuatorLimits {
    pub fn validate(&self) -> Result<()> {
        if !(self.torque_max.is_finite() && self.torque_max > 0.0) {
            return Err(invalid("torque_max_nm", "must be finite and > 0"));
        }
        if !(self.steer_max.is_finite() && self.steer_max > 0.0) {
            return Err(invalid("steer_max_rad", "must be finite and > 0"));
        }
        Ok(())
    }

    pub fn clamp(&self, u: ControlInput) -> (ControlInput, Saturation) {
        let torque = u.torque.clamp(-self.torque_max, self.torque_max);
        let steer = u.steer.clamp(-self.steer_max, self.steer_max);
        (
            ControlInput { torque, steer },
            Saturation {
                torque: torque != u.torque,
                steer: steer != u.steer,
            },
        )
    }
}

/// Lateral tire characteristic.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum TireModel {
    /// `F = mu * C * slip`.
    Linear,
    /// `F = mu * Fpk * tanh(C * slip / Fpk)` with `Fpk = peak_factor * Fz`
    /// (static axle load). Odd, slope `mu * C` at the origin, peak `mu * Fpk`.
    Saturating { peak_factor: f64 },
}

impl Default for TireModel {
    fn default() -> Self {
        TireModel::Saturating { peak_factor: 1.0 }
    }
}

impl TireModel {
    pub fn validate(&self) -> Result<()> {
        if let TireModel::Saturating { peak_factor } = *self {
            if !(peak_factor.is_finite() && peak_factor > 0.0) {
                return Err(invalid("peak_factor", "must be finite and > 0"));
            }
        }
        Ok(())
    }

    /// Force for a given slip, cornering (or slip) stiffness, adhesion and
    /// vertical load.
    pub fn force(&self, slip: f64, stiffness: f64, mu: f64, load: f64) -> f64 {
        match *self {
            TireModel::Linear => mu * stiffness * slip,
            TireModel::Saturating { peak_factor } => {
                let peak = peak_factor * load;
                mu * peak * (stiffness * slip / peak).tanh()
            }
        }
    }

    /// Slip producing `force`. Demands beyond the peak are clamped just below it.
    pub fn slip_for(&self, force: f64, stiffness: f64, mu: f64, load: f64) -> f64 {
        match *self {
            TireModel::Linear => force / (mu * stiffness),
            TireModel::Saturating { peak_factor } => {
                let peak = peak_factor * load;
                let ratio = (force / (mu * peak)).clamp(-0.999, 0.999);
                peak * ratio.atanh() / stiffness
            }
        }
    }

    /// Peak force magnitude, `None` for the linear kind.
    pub fn peak(&self, mu: f64, load: f64) -> Option<f64> {
        match *self {
            TireModel::Linear => None,
            TireModel::Saturating { peak_factor } => Some(mu * peak_factor * load),
        }
    }
}

/// Front and rear tire slip angles.
pub fn slip_angles(state: &PlantState, delta: f64, params: &VehicleParams) -> Result<(f64, f64)> {
    if !(state.vx >= params.vx_min) {
        return Err(Error::Singularity {
            vx: state.vx,
            vx_min: params.vx_min,
        });
    }
    let front = delta - (state.vy + state.psi_dot * params.lf) / state.vx;
    let rear = -(state.vy - state.psi_dot * params.lr) / state.vx;
    Ok((front, rear))
}

/// Lateral tire forces (Fyf, Fyr) in the vehicle frame.
pub fn lateral_forces(
    state: &PlantState,
    delta: f64,
    params: &VehicleParams,
    tire: &TireModel,
) -> Result<(f64, f64)> {
    let (alpha_f, alpha_r) = slip_angles(state, delta, params)?;
    let (fz_f, fz_r) = params.axle_loads();
    Ok((
        tire.force(alpha_f, params.cf, params.mu, fz_f),
        tire.force(alpha_r, params.cr, params.mu, fz_r),
    ))
}

pub(crate) fn rk4<const N: usize, F>(x: [f64; N], h: f64, mut f: F) -> Result<[f64; N]>
where
    F: FnMut(&[f64; N]) -> Result<[f64; N]>,
{
    let axpy = |a: &[f64; N], k: &[f64; N], s: f64| {
        let mut out = *a;
        for (o, ki) in out.iter_mut().zip(k) {
            *o += s * ki;
        }
        out
    };
    let k1 = f(&x)?;
    let k2 = f(&axpy(&x, &k1, h / 2.0))?;
    let k3 = f(&axpy(&x, &k2, h / 2.0))?;
    let k4 = f(&axpy(&x, &k3, h))?;
    let mut out = x;
    for i in 0..N {
        out[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
    }
    Ok(out)
}

fn check_step(state: &PlantState, dt: f64) -> Result<()> {
    if !(dt.is_finite() && dt > 0.0) {
        return Err(invalid("dt", format!("must be finite and > 0, got {dt}")));
    }
    if !state.is_finite() {
        return Err(Error::NonFinite("plant state"));
    }
    Ok(())
}

/// Time derivative of (Vx, Vy, psi, psi_dot, X, Y) under the control model.
pub fn control_model_derivative(
    state: &PlantState,
    input: &ControlInput,
    params: &VehicleParams,
) -> Result<[f64; 6]> {
    let (fyf, fyr) = lateral_forces(state, input.steer, params, &TireModel::Linear)?;
    // Wheel inertia neglected: the axle forces are the torques over the radius,
    // so the front/rear split does not change their sum.
    let fx = input.torque / params.r;
    let (s, c) = state.psi.sin_cos();
    Ok([
        state.psi_dot * state.vy + fx / params.m,
        -state.psi_dot * state.vx + (fyf + fyr) / params.m,
        state.psi_dot,
        (params.lf * fyf - params.lr * fyr) / params.iz,
        state.vx * c - state.vy * s,
        state.vx * s + state.vy * c,
    ])
}

/// One RK4 step of the 3DoF control model. Wheel speeds are set to the
/// rolling-without-slip value.
pub fn step_control_model(
    state: &PlantState,
    input: &ControlInput,
    params: &VehicleParams,
    dt: f64,
) -> Result<PlantState> {
    check_step(state, dt)?;
    let x0 = [
        state.vx,
        state.vy,
        state.psi,
        state.psi_dot,
        state.x,
        state.y,
    ];
    let x1 = rk4(x0, dt, |x| {
        let s = PlantState {
            vx: x[0],
            vy: x[1],
            psi: x[2],
            psi_dot: x[3],
            x: x[4],
            y: x[5],
            ..*state
        };
        control_model_derivative(&s, input, params)
    })?;
    let next = PlantState {
        vx: x1[0],
        vy: x1[1],
        psi: x1[2],
        psi_dot: x1[3],
        x: x1[4],
        y: x1[5],
        omega_f: x1[0] / params.r,
        omega_r: x1[0] / params.r,
    };
    if !next.is_finite() {
        return Err(Error::NonFinite("control model state"));
    }
    Ok(next)
}

/// The "truth" vehicle: richer than anything a controller is designed on.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TruthPlant {
    pub params: VehicleParams,
    pub tire: TireModel,
    /// Longitudinal slip stiffness per axle (N per unit slip ratio).
    #[serde(rename = "slip_stiffness_n")]
    pub slip_stiffness: f64,
    /// Upper bound on the internal RK4 sub-step.
    #[serde(rename = "max_substep_s")]
    pub max_substep: f64,
}

impl Default for TruthPlant {
    fn default() -> Self {
        Self {
            params: VehicleParams::default(),
            tire: TireModel::default(),
            slip_stiffness: 100_000.0,
            max_substep: 1e-3,
        }
    }
}

impl TruthPlant {
    pub fn new(params: VehicleParams, tire: TireModel) -> Self {
        Self {
            params,
            tire,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.params.validate()?;
        self.tire.validate()?;
        if !(self.slip_stiffness.is_finite() && self.slip_stiffness > 0.0) {
            return Err(invalid("slip_stiffness_n", "must be finite and > 0"));
        }
        if !(self.max_substep.is_finite() && self.max_substep > 0.0) {
            return Err(invalid("max_substep_s", "must be finite and > 0"));
        }
        Ok(())
    }

    fn wheel_dynamics(&self) -> bool {
        self.params.ir > 0.0
    }

    /// Longitudinal tire forces (front, rear).
    fn longitudinal_forces(&self, s: &PlantState, torque_f: f64, torque_r: f64) -> (f64, f64) {
        let p = &self.params;
        if !self.wheel_dynamics() {
            return (torque_f / p.r, torque_r / p.r);
        }
        let (fz_f, fz_r) = p.axle_loads();
        let slip_f = (p.r * s.omega_f - s.vx) / s.vx;
        let slip_r = (p.r * s.omega_r - s.vx) / s.vx;
        (
            self.tire.force(slip_f, self.slip_stiffness, p.mu, fz_f),
            self.tire.force(slip_r, self.slip_stiffness, p.mu, fz_r),
        )
    }

    /// Time derivative of the full 8-component state.
    pub fn derivative(&self, s: &PlantState, input: &ControlInput) -> Result<[f64; 8]> {
        let p = &self.params;
        let (fyf, fyr) = lateral_forces(s, input.steer, p, &self.tire)?;
        let (tf, tr) = p.axle_torques(input.torque);
        let (fxf, fxr) = self.longitudinal_forces(s, tf, tr);
        let drag = p.rho_x * s.vx * s.vx.abs();
        let (sin, cos) = s.psi.sin_cos();
        let vx_dot = s.psi_dot * s.vy + (fxf + fxr - drag) / p.m;
        let (wf_dot, wr_dot) = if self.wheel_dynamics() {
            ((tf - p.r * fxf) / p.ir, (tr - p.r * fxr) / p.ir)
        } else {
            (vx_dot / p.r, vx_dot / p.r)
        };
        Ok([
            vx_dot,
            -s.psi_dot * s.vx + (fyf + fyr) / p.m,
            s.psi_dot,
            (p.lf * fyf - p.lr * fyr) / p.iz,
            s.vx * cos - s.vy * sin,
            s.vx * sin + s.vy * cos,
            wf_dot,
            wr_dot,
        ])
    }

    /// Number of RK4 sub-steps used for a control step of length `dt`.
    /// The wheel-slip mode is stiff at low speed, so the sub-step is also
    /// bounded by its time constant `Ir Vx / (R^2 mu Cx)`.
    pub fn substeps(&self, state: &PlantState, dt: f64) -> usize {
        let mut h = self.max_substep;
        if self.wheel_dynamics() {
            let p = &self.params;
            let vx = state.vx.max(p.vx_min);
            let tau = p.ir * vx / (p.r * p.r * p.mu * self.slip_stiffness);
            h = h.min(tau);
        }
        ((dt / h).ceil() as usize).max(1)
    }

    /// Advances the truth plant by `dt`, input held constant.
    pub fn step(&self, state: &PlantState, input: &ControlInput, dt: f64) -> Result<PlantState> {
        check_step(state, dt)?;
        let n = self.substeps(state, dt);
        let h = dt / n as f64;
        let mut x = state.as_array();
        for _ in 0..n {
            x = rk4(x, h, |x| {
                self.derivative(&PlantState::from_array(*x), input)
            })?;
        }
        let next = PlantState::from_array(x);
        if !next.is_finite() {
            return Err(Error::NonFinite("truth plant state"));
        }
        Ok(next)
    }
}

/// Convenience wrapper around [`TruthPlant::step`] with default slip stiffness
/// and sub-step bound.
pub fn step_truth_plant(
    state: &PlantState,
    input: &ControlInput,
    params: &VehicleParams,
    tire: &TireModel,
    dt: f64,
) -> Result<PlantState> {
    TruthPlant::new(*params, *tire).step(state, input, dt)
}

/// Matrix of the linear lateral subsystem in (Vy, psi_dot) at speed `vx`
/// (linear tires, adhesion included).
pub fn lateral_state_matrix(vx: f64, p: &VehicleParams) -> [[f64; 2]; 2] {
    let cf = p.mu * p.cf;
    let cr = p.mu * p.cr;
    [
        [
            -(cf + cr) / (p.m * vx),
            -vx - (cf * p.lf - cr * p.lr) / (p.m * vx),
        ],
        [
            -(p.lf * cf - p.lr * cr) / (p.iz * vx),
            -(p.lf * p.lf * cf + p.lr * p.lr * cr) / (p.iz * vx),
        ],
    ]
}

/// Steady cornering of the linear model on a path of curvature `rho` at speed
/// `vx`: returns (Vy, psi_dot, delta).
pub fn steady_cornering(vx: f64, rho: f64, p: &VehicleParams) -> (f64, f64, f64) {
    let l = p.wheelbase();
    let psi_dot = vx * rho;
    let lateral = p.m * vx * vx * rho;
    let fyf = lateral * p.lr / l;
    let fyr = lateral * p.lf / l;
    let vy = p.lr * psi_dot - fyr * vx / (p.mu * p.cr);
    let delta = fyf / (p.mu * p.cf) + (vy + p.lf * psi_dot) / vx;
    (vy, psi_dot, delta)
}

/// Steady cornering with a given tire characteristic: returns (Vy, psi_dot,
/// delta). Equal to [`steady_cornering`] for the linear tire.
pub fn steady_cornering_with(
    vx: f64,
    rho: f64,
    p: &VehicleParams,
    tire: &TireModel,
) -> (f64, f64, f64) {
    let l = p.wheelbase();
    let psi_dot = vx * rho;
    let lateral = p.m * vx * vx * rho;
    let (fz_f, fz_r) = p.axle_loads();
    let alpha_f = tire.slip_for(lateral * p.lr / l, p.cf, p.mu, fz_f);
    let alpha_r = tire.slip_for(lateral * p.lf / l, p.cr, p.mu, fz_r);
    let vy = p.lr * psi_dot - alpha_r * vx;
    let delta = alpha_f + (vy + p.lf * psi_dot) / vx;
    (vy, psi_dot, delta)
}
