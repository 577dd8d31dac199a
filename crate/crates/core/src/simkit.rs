//! Closed-loop scenario execution and the comparison methodology.
//!
//! A run couples the truth plant, one controller and a reference path at a
//! single fixed rate: every sample the pose is projected on the path, the
//! controller produces a bounded input, and the plant advances one period
//! with that input held.

use std::fmt::Write as _;
use std::io::{Read, Write};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::controllers::{
    ControlModelParams, ControlOutput, ControllerKind, FlatConfig, FlatController, Measurement,
    MfcConfig, MfcReference, MfcVehicle, PidConfig, PidVehicle, ReferenceSignal,
};
use crate::error::{invalid, Error, Result};
use crate::plant::{
    steady_cornering_with, ActuatorLimits, PlantState, TireModel, TruthPlant, VehicleParams,
};
use crate::trajectory::{
    synthetic_track, PathTracker, Pose, ReferencePath, SpeedProfile, TrackKind, DEFAULT_CORRIDOR,
    DEFAULT_SPACING,
};

/// Reference speed along the path.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case", deny_unknown_fields)]
pub enum SpeedSpec {
    /// Curvature-scheduled profile.
    Profile(SpeedProfile),
    Constant {
        #[serde(rename = "vx_m_per_s")]
        vx: f64,
    },
}

impl Default for SpeedSpec {
    fn default() -> Self {
        SpeedSpec::Profile(SpeedProfile::default())
    }
}

/// White measurement noise (standard deviations); zero disables a channel.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NoiseSpec {
    pub vx_std_m_per_s: f64,
    pub y_std_m: f64,
    pub psi_std_rad: f64,
}

impl NoiseSpec {
    pub fn is_off(&self) -> bool {
        self.vx_std_m_per_s == 0.0 && self.y_std_m == 0.0 && self.psi_std_rad == 0.0
    }

    fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("noise.vx_std_m_per_s", self.vx_std_m_per_s),
            ("noise.y_std_m", self.y_std_m),
            ("noise.psi_std_rad", self.psi_std_rad),
        ] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(invalid(name, "must be finite and >= 0"));
            }
        }
        Ok(())
    }
}

/// Everything that defines a closed-loop run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Scenario {
    pub name: String,
    pub track: TrackKind,
    pub spacing_m: f64,
    pub speed: SpeedSpec,
    pub controller: ControllerKind,
    pub vehicle: VehicleParams,
    /// Road adhesion of the truth plant; overrides `vehicle.mu`.
    pub mu: f64,
    pub tire: TireModel,
    pub limits: ActuatorLimits,
    pub fs_hz: f64,
    /// Run length; `None` runs to the end of the path.
    pub duration_s: Option<f64>,
    /// Initial lateral offset from the path, left positive.
    pub initial_offset_m: f64,
    pub corridor_m: f64,
    /// Caps the profile's lateral acceleration at this fraction of `mu g`;
    /// `None` leaves the profile as configured.
    pub friction_fraction: Option<f64>,
    pub seed: u64,
    pub noise: NoiseSpec,
    pub mfc: MfcConfig,
    pub flat: FlatConfig,
    pub pid: PidConfig,
}

impl Default for Scenario {
    fn default() -> Self {
        Self {
            name: "tracklike_mfc".into(),
            track: TrackKind::track_like(),
            spacing_m: DEFAULT_SPACING,
            speed: SpeedSpec::default(),
            controller: ControllerKind::Mfc,
            vehicle: VehicleParams::default(),
            mu: 1.0,
            tire: TireModel::default(),
            limits: ActuatorLimits::default(),
            fs_hz: 200.0,
            duration_s: None,
            initial_offset_m: 0.0,
            corridor_m: DEFAULT_CORRIDOR,
            friction_fraction: Some(0.8),
            seed: 0,
            noise: NoiseSpec::default(),
            mfc: MfcConfig::default(),
            flat: FlatConfig::default(),
            pid: PidConfig::default(),
        }
    }
}

impl Scenario {
    /// Truth-plant parameters with the scenario adhesion applied.
    pub fn plant_params(&self) -> VehicleParams {
        VehicleParams {
            mu: self.mu,
            ..self.vehicle
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.plant_params().validate()?;
        self.tire.validate()?;
        self.limits.validate()?;
        self.noise.validate()?;
        if !(self.fs_hz.is_finite() && self.fs_hz > 0.0) {
            return Err(invalid("fs_hz", "must be finite and > 0"));
        }
        if !(self.spacing_m.is_finite() && self.spacing_m > 0.0) {
            return Err(invalid("spacing_m", "must be finite and > 0"));
        }
        if !(self.corridor_m.is_finite() && self.corridor_m > 0.0) {
            return Err(invalid("corridor_m", "must be finite and > 0"));
        }
        if !self.initial_offset_m.is_finite() {
            return Err(invalid("initial_offset_m", "must be finite"));
        }
        if let Some(f) = self.friction_fraction {
            if !(f.is_finite() && f > 0.0) {
                return Err(invalid("friction_fraction", "must be finite and > 0"));
            }
        }
        if let Some(d) = self.duration_s {
            if !(d.is_finite() && d >= 0.0) {
                return Err(invalid("duration_s", "must be finite and >= 0"));
            }
        }
        match self.speed {
            SpeedSpec::Profile(p) => p.validate()?,
            SpeedSpec::Constant { vx } => {
                if !(vx.is_finite() && vx >= self.vehicle.vx_min) {
                    return Err(invalid(
                        "speed.vx_m_per_s",
                        "must be finite and above the singularity guard",
                    ));
                }
            }
        }
        match self.controller {
            ControllerKind::Mfc => self.mfc.validate(self.fs_hz),
            ControllerKind::Flat => self.flat.validate(),
            ControllerKind::Pid => self.pid.validate(),
        }
    }

    /// The reference path with its speed profile.
    pub fn reference_path(&self) -> Result<ReferencePath> {
        let path = synthetic_track(&self.track, self.spacing_m)?;
        match self.speed {
            SpeedSpec::Profile(mut p) => {
                if let Some(f) = self.friction_fraction {
                    p.ay_max = p.ay_max.min(f * self.mu * self.vehicle.g);
                }
                path.with_speed_profile(&p)
            }
            SpeedSpec::Constant { vx } => Ok(path.with_constant_speed(vx)),
        }
    }

    /// Initial interval excluded from every metric: the longest estimation
    /// window plus 0.1 s. Applied to all controllers so comparisons share
    /// the same samples.
    pub fn bootstrap_s(&self) -> f64 {
        self.mfc.bootstrap(self.fs_hz) + 0.1
    }
}

/// How a run ended.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "verdict", rename_all = "snake_case")]
pub enum Verdict {
    Completed,
    OffCorridor { t: f64, distance: f64 },
    NonFinite { t: f64 },
    ControllerFault { t: f64, message: String },
}

impl Verdict {
    pub fn is_completed(&self) -> bool {
        matches!(self, Verdict::Completed)
    }

    pub fn describe(&self) -> String {
        match self {
            Verdict::Completed => "completed".into(),
            Verdict::OffCorridor { t, distance } => {
                format!("off-corridor at t={t:.2} s ({distance:.2} m)")
            }
            Verdict::NonFinite { t } => format!("non-finite state at t={t:.2} s"),
            Verdict::ControllerFault { t, message } => {
                format!("controller fault at t={t:.2} s: {message}")
            }
        }
    }
}

/// One sample of a run. Errors are measurement minus reference.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct TraceRow {
    pub t: f64,
    pub s: f64,
    pub x: f64,
    pub y: f64,
    pub psi: f64,
    pub vx: f64,
    pub vy: f64,
    pub psi_dot: f64,
    pub omega_f: f64,
    pub omega_r: f64,
    pub x_d: f64,
    pub y_d: f64,
    pub psi_d: f64,
    /// Reference yaw: path tangent minus the reference sideslip.
    pub psi_ref: f64,
    pub vx_d: f64,
    pub y_err: f64,
    pub e_psi: f64,
    pub e_vx: f64,
    pub torque: f64,
    pub steer: f64,
    pub f1: Option<f64>,
    pub f2: Option<f64>,
    pub z2: Option<f64>,
    pub z2_ref: Option<f64>,
    pub sat_torque: bool,
    pub sat_steer: bool,
}

/// Time series of a closed-loop run on a uniform grid.
#[derive(Debug, Clone, PartialEq)]
pub struct RunTrace {
    pub scenario: String,
    pub controller: ControllerKind,
    pub mu: f64,
    pub dt: f64,
    pub bootstrap_s: f64,
    pub rows: Vec<TraceRow>,
    pub verdict: Verdict,
}

/// Column names of the trace CSV, in order.
pub const TRACE_COLUMNS: [&str; 26] = [
    "t",
    "s",
    "x",
    "y",
    "psi",
    "vx",
    "vy",
    "psi_dot",
    "omega_f",
    "omega_r",
    "x_d",
    "y_d",
    "psi_d",
    "psi_ref",
    "vx_d",
    "y_err",
    "e_psi",
    "e_vx",
    "torque",
    "steer",
    "f1",
    "f2",
    "z2",
    "z2_ref",
    "sat_torque",
    "sat_steer",
];

impl RunTrace {
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        write_trace_rows(&self.rows, w)
    }

    pub fn report(&self) -> Result<ErrorReport> {
        ErrorReport::from_trace(self)
    }
}

pub fn write_trace_rows<W: Write>(rows: &[TraceRow], w: W) -> Result<()> {
    let mut wr = csv::WriterBuilder::new()
        .has_headers(false)
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(w);
    wr.write_record(TRACE_COLUMNS)?;
    for r in rows {
        wr.serialize(r)?;
    }
    wr.flush()?;
    Ok(())
}

pub fn read_trace_rows<R: Read>(r: R) -> Result<Vec<TraceRow>> {
    let mut rd = csv::ReaderBuilder::new().from_reader(r);
    let headers = rd.headers()?.clone();
    if headers.iter().ne(TRACE_COLUMNS.iter().copied()) {
        return Err(Error::Csv(format!(
            "unexpected trace header: {}",
            headers.iter().collect::<Vec<_>>().join(",")
        )));
    }
    rd.deserialize()
        .map(|row| row.map_err(Error::from))
        .collect()
}

enum Active {
    Mfc(Box<MfcVehicle>),
    Flat(FlatController),
    Pid(PidVehicle),
}

impl Active {
    fn new(scn: &Scenario) -> Result<Self> {
        Ok(match scn.controller {
            ControllerKind::Mfc => {
                Active::Mfc(Box::new(MfcVehicle::new(scn.mfc, scn.fs_hz, scn.limits)?))
            }
            ControllerKind::Flat => Active::Flat(FlatController::new(
                scn.flat,
                ControlModelParams::nominal(&scn.vehicle, scn.flat.assumed_mu),
                scn.limits,
            )?),
            ControllerKind::Pid => Active::Pid(PidVehicle::new(scn.pid, scn.fs_hz, scn.limits)?),
        })
    }
}

struct Noise {
    rng: ChaCha8Rng,
    spec: NoiseSpec,
}

impl Noise {
    fn sample(&mut self, std: f64) -> f64 {
        if std == 0.0 {
            return 0.0;
        }
        Normal::new(0.0, std)
            .map(|n| n.sample(&mut self.rng))
            .unwrap_or(0.0)
    }
}

/// Sideslip of an ideal vehicle whose centre of gravity stays on the path at
/// the reference speed. Holding the course on the path leaves the
/// sideslip `beta = Vy / Vx` with the second-order dynamics
/// `Iz beta'' = L Fyr - Lf m (Vx' beta + Vx rho V) + Iz (rho V)'`,
/// with `psi_dot = rho V - beta'`, integrated here with the truth tire.
struct ReferenceSideslip {
    params: VehicleParams,
    tire: TireModel,
    beta: f64,
    beta_dot: f64,
    prev: Option<(f64, f64)>,
}

impl ReferenceSideslip {
    fn new(params: VehicleParams, tire: TireModel) -> Self {
        Self {
            params,
            tire,
            beta: 0.0,
            beta_dot: 0.0,
            prev: None,
        }
    }

    /// Advances to the reference sample (speed, curvature) and returns beta.
    fn update(&mut self, vx: f64, rho: f64, dt: f64) -> f64 {
        let p = &self.params;
        let vx = vx.max(p.vx_min);
        let Some((vx_prev, rv_prev)) = self.prev else {
            let (vy, _, _) = steady_cornering_with(vx, rho, p, &self.tire);
            self.beta = vy / vx;
            self.prev = Some((vx, rho * vx));
            return self.beta;
        };
        let vx_rate = (vx - vx_prev) / dt;
        let rv_rate = (rho * vx - rv_prev) / dt;
        self.prev = Some((vx, rho * vx));
        let (_, fz_r) = p.axle_loads();
        let accel = |beta: f64, beta_dot: f64| {
            let psi_dot = rho * vx - beta_dot;
            let slip = p.lr * psi_dot / vx - beta;
            let fyr = self.tire.force(slip, p.cr, p.mu, fz_r);
            (p.wheelbase() * fyr - p.lf * p.m * (vx_rate * beta + vx * rho * vx) + p.iz * rv_rate)
                / p.iz
        };
        // semi-implicit Euler over a few substeps
        let n = 4;
        let h = dt / n as f64;
        for _ in 0..n {
            self.beta_dot += h * accel(self.beta, self.beta_dot);
            self.beta += h * self.beta_dot;
        }
        self.beta
    }
}

/// Runs a scenario to completion. Failures of the closed loop end the run and
/// are reported in the verdict; only an invalid scenario is an error.
pub fn run_scenario(scn: &Scenario) -> Result<RunTrace> {
    scn.validate()?;
    let path = scn.reference_path()?;
    let params = scn.plant_params();
    let plant = TruthPlant::new(params, scn.tire);
    plant.validate()?;
    let dt = 1.0 / scn.fs_hz;
    let mut controller = Active::new(scn)?;
    let mut noise = Noise {
        rng: ChaCha8Rng::seed_from_u64(scn.seed),
        spec: scn.noise,
    };

    // start in steady cornering on the initial curvature
    let start = path.start_pose();
    let v0 = path.vx[0];
    let (vy0, psi_dot0, _) = steady_cornering_with(v0, path.rho[0], &params, &scn.tire);
    let mut state = PlantState {
        x: start.x - scn.initial_offset_m * start.psi.sin(),
        y: start.y + scn.initial_offset_m * start.psi.cos(),
        psi: start.psi - (vy0 / v0).atan(),
        vy: vy0,
        psi_dot: psi_dot0,
        ..PlantState::cruising(v0, &params)
    };
    let mean_speed = path.vx.iter().sum::<f64>() / path.len() as f64;
    let horizon = scn
        .duration_s
        .unwrap_or(2.0 * path.length() / mean_speed.max(1.0) + 10.0);
    let steps = (horizon * scn.fs_hz).round() as usize;
    let end_s = path.length() - 1.0;

    let mut tracker = PathTracker::new(scn.corridor_m);
    let mut sideslip = ReferenceSideslip::new(params, scn.tire);
    let mut rows = Vec::with_capacity(steps);
    let mut verdict = Verdict::Completed;
    for k in 0..steps {
        let t = k as f64 * dt;
        let pose = Pose {
            x: state.x,
            y: state.y,
            psi: state.psi,
        };
        let proj = match tracker.project(&pose, &path) {
            Ok(p) => p,
            Err(Error::OffCorridor { distance, .. }) => {
                verdict = Verdict::OffCorridor { t, distance };
                break;
            }
            Err(e) => return Err(e),
        };
        if scn.duration_s.is_none() && proj.s >= end_s {
            break;
        }
        let point = path.sample(proj.s);
        let psi_ref = point.psi - sideslip.update(point.vx, point.rho, dt).atan();

        let m = Measurement {
            vx: state.vx + noise.sample(noise.spec.vx_std_m_per_s),
            y_err: proj.y_err + noise.sample(noise.spec.y_std_m),
            psi_err: proj.psi_err + noise.sample(noise.spec.psi_std_rad),
        };
        let out: Result<ControlOutput> = match &mut controller {
            Active::Mfc(c) => c.step(
                &m,
                &MfcReference {
                    vx: ReferenceSignal {
                        z_d: point.vx,
                        z_d_dot: point.dvx_ds * point.vx,
                        z_d_ddot: 0.0,
                    },
                    lateral: ReferenceSignal::default(),
                },
            ),
            Active::Flat(c) => {
                let mut sensed = state;
                sensed.vx = m.vx;
                let mut p = proj;
                p.y_err = m.y_err;
                p.psi_err = m.psi_err;
                c.step_on_path(&sensed, &point, &p, dt)
            }
            Active::Pid(c) => Ok(c.step(&m, point.vx, 0.0)),
        };
        let out = match out {
            Ok(o) => o,
            Err(e) => {
                verdict = Verdict::ControllerFault {
                    t,
                    message: e.to_string(),
                };
                break;
            }
        };
        rows.push(TraceRow {
            t,
            s: proj.s,
            x: state.x,
            y: state.y,
            psi: state.psi,
            vx: state.vx,
            vy: state.vy,
            psi_dot: state.psi_dot,
            omega_f: state.omega_f,
            omega_r: state.omega_r,
            x_d: point.x,
            y_d: point.y,
            psi_d: point.psi,
            psi_ref,
            vx_d: point.vx,
            y_err: proj.y_err,
            e_psi: state.psi - psi_ref,
            e_vx: state.vx - point.vx,
            torque: out.input.torque,
            steer: out.input.steer,
            f1: out.f1,
            f2: out.f2,
            z2: out.z2,
            z2_ref: out.z2_ref,
            sat_torque: out.saturation.torque,
            sat_steer: out.saturation.steer,
        });
        state = match plant.step(&state, &out.input, dt) {
            Ok(s) => s,
            Err(Error::NonFinite(_)) => {
                verdict = Verdict::NonFinite { t: t + dt };
                break;
            }
            Err(e) => {
                verdict = Verdict::ControllerFault {
                    t: t + dt,
                    message: e.to_string(),
                };
                break;
            }
        };
    }
    Ok(RunTrace {
        scenario: scn.name.clone(),
        controller: scn.controller,
        mu: scn.mu,
        dt,
        bootstrap_s: scn.bootstrap_s(),
        rows,
        verdict,
    })
}

/// Maximum normalized error in percent:
/// `max_i 100 |z_s(i) - z_act(i)| / max_i |z_act(i)|`.
pub fn normalized_error(z_s: &[f64], z_act: &[f64]) -> Result<f64> {
    if z_s.len() != z_act.len() {
        return Err(Error::LengthMismatch(z_s.len(), z_act.len()));
    }
    let scale = z_act.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
    if !(scale > 0.0) {
        return Err(Error::ZeroReference);
    }
    let worst = z_s
        .iter()
        .zip(z_act)
        .fold(0.0_f64, |m, (s, a)| m.max((s - a).abs()));
    Ok(100.0 * worst / scale)
}

/// Metrics of one error channel.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct ChannelError {
    /// Maximum normalized error (%); `None` when the reference is identically
    /// zero over the window.
    pub normalized_pct: Option<f64>,
    /// L-infinity of the raw error (channel units).
    pub linf: f64,
    /// Root mean square of the raw error (channel units).
    pub rms: f64,
}

impl ChannelError {
    fn from_series(z_s: &[f64], z_act: &[f64], raw: &[f64]) -> Result<Self> {
        let n = raw.len().max(1) as f64;
        Ok(Self {
            normalized_pct: match normalized_error(z_s, z_act) {
                Ok(v) => Some(v),
                Err(Error::ZeroReference) => None,
                Err(e) => return Err(e),
            },
            linf: raw.iter().fold(0.0_f64, |m, e| m.max(e.abs())),
            rms: (raw.iter().map(|e| e * e).sum::<f64>() / n).sqrt(),
        })
    }
}

/// Error summary of a run after the bootstrap interval.
///
/// * `vx`: speed against the reference speed (m/s);
/// * `psi`: yaw against the reference yaw (rad);
/// * `y`: global lateral position against the path for the normalized
///   error, and the signed path-frame deviation for L-infinity/RMS (m);
/// * `z2`: second flat output against its reference (flatness controller).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorReport {
    pub scenario: String,
    pub controller: ControllerKind,
    pub mu: f64,
    pub verdict: Verdict,
    pub bootstrap_s: f64,
    pub samples: usize,
    pub vx: ChannelError,
    pub psi: ChannelError,
    pub y: ChannelError,
    pub z2: Option<ChannelError>,
    pub saturated_fraction: f64,
}

impl ErrorReport {
    pub fn from_trace(trace: &RunTrace) -> Result<Self> {
        let rows: Vec<&TraceRow> = trace
            .rows
            .iter()
            .filter(|r| r.t >= trace.bootstrap_s - 1e-12)
            .collect();
        let col = |f: fn(&TraceRow) -> f64| rows.iter().map(|r| f(r)).collect::<Vec<f64>>();
        let empty = rows.is_empty();
        let channel = |zs: Vec<f64>, za: Vec<f64>, raw: Vec<f64>| -> Result<ChannelError> {
            if empty {
                Ok(ChannelError::default())
            } else {
                ChannelError::from_series(&zs, &za, &raw)
            }
        };
        let vx = channel(col(|r| r.vx), col(|r| r.vx_d), col(|r| r.e_vx))?;
        let psi = channel(col(|r| r.psi), col(|r| r.psi_ref), col(|r| r.e_psi))?;
        let y = channel(col(|r| r.y), col(|r| r.y_d), col(|r| r.y_err))?;
        let z2 = if !empty && rows.iter().all(|r| r.z2.is_some() && r.z2_ref.is_some()) {
            let zs = col(|r| r.z2.unwrap_or(0.0));
            let za = col(|r| r.z2_ref.unwrap_or(0.0));
            let raw: Vec<f64> = zs.iter().zip(&za).map(|(a, b)| a - b).collect();
            ChannelError::from_series(&zs, &za, &raw).ok()
        } else {
            None
        };
        let saturated = rows.iter().filter(|r| r.sat_torque || r.sat_steer).count();
        Ok(Self {
            scenario: trace.scenario.clone(),
            controller: trace.controller,
            mu: trace.mu,
            verdict: trace.verdict.clone(),
            bootstrap_s: trace.bootstrap_s,
            samples: rows.len(),
            vx,
            psi,
            y,
            z2,
            saturated_fraction: if empty {
                0.0
            } else {
                saturated as f64 / rows.len() as f64
            },
        })
    }

    /// Normalized errors in table order (e_Vx, e_psi, e_y).
    pub fn normalized(&self) -> [Option<f64>; 3] {
        [
            self.vx.normalized_pct,
            self.psi.normalized_pct,
            self.y.normalized_pct,
        ]
    }
}

/// Benchmark maximum normalized errors (%) as (e_Vx, e_psi, e_y), for
/// context next to our own numbers. They come from a different plant and
/// recorded data and are not targets.
pub fn benchmark_errors(kind: ControllerKind, mu: f64) -> Option<[f64; 3]> {
    let dry = (mu - 1.0).abs() < 1e-9;
    let wet = (mu - 0.7).abs() < 1e-9;
    match (kind, dry, wet) {
        (ControllerKind::Pid, true, _) => Some([0.93, 1.76, 2.8]),
        (ControllerKind::Flat, true, _) => Some([0.45, 1.21, 1.4]),
        (ControllerKind::Mfc, true, _) => Some([0.186, 0.45, 0.35]),
        (ControllerKind::Pid, _, true) => Some([5.54, 13.54, 16.64]),
        (ControllerKind::Flat, _, true) => Some([4.23, 7.67, 9.37]),
        (ControllerKind::Mfc, _, true) => Some([2.31, 2.7, 3.49]),
        _ => None,
    }
}

/// One cell of a comparison grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonEntry {
    pub mu: f64,
    pub controller: ControllerKind,
    pub report: ErrorReport,
}

/// Reports of every (mu, controller) pair, ordered by mu (descending) then
/// controller, whatever order the runs finished in.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    pub entries: Vec<ComparisonEntry>,
}

/// Runs `base` for every adhesion and controller on the shared track, speed
/// profile and seed. `jobs = 0` uses all cores.
pub fn compare_controllers(
    base: &Scenario,
    mus: &[f64],
    controllers: &[ControllerKind],
    jobs: usize,
) -> Result<Comparison> {
    let mut grid = Vec::new();
    for &mu in mus {
        for &c in controllers {
            let mut s = base.clone();
            s.mu = mu;
            s.controller = c;
            s.name = format!("{}_{}_mu{}", base.name, c, mu);
            grid.push(s);
        }
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build()
        .map_err(|e| invalid("jobs", e.to_string()))?;
    let results: Vec<Result<ComparisonEntry>> = pool.install(|| {
        grid.par_iter()
            .map(|s| {
                let report = run_scenario(s)?.report()?;
                Ok(ComparisonEntry {
                    mu: s.mu,
                    controller: s.controller,
                    report,
                })
            })
            .collect()
    });
    let mut entries = results.into_iter().collect::<Result<Vec<_>>>()?;
    entries.sort_by(|a, b| b.mu.total_cmp(&a.mu).then(a.controller.cmp(&b.controller)));
    Ok(Comparison { entries })
}

fn fmt_pct(v: f64) -> String {
    if v != 0.0 && v.abs() < 0.01 {
        format!("{v:.2e}")
    } else {
        format!("{v:.3}")
    }
}

impl Comparison {
    pub fn get(&self, mu: f64, controller: ControllerKind) -> Option<&ErrorReport> {
        self.entries
            .iter()
            .find(|e| e.controller == controller && (e.mu - mu).abs() < 1e-12)
            .map(|e| &e.report)
    }

    fn mus(&self) -> Vec<f64> {
        let mut mus: Vec<f64> = Vec::new();
        for e in &self.entries {
            if !mus.iter().any(|m| (m - e.mu).abs() < 1e-12) {
                mus.push(e.mu);
            }
        }
        mus
    }

    fn controllers(&self) -> Vec<ControllerKind> {
        let mut cs: Vec<ControllerKind> = self.entries.iter().map(|e| e.controller).collect();
        cs.sort();
        cs.dedup();
        cs.reverse(); // pid, flat, mfc: benchmark column order
        cs
    }

    /// Aligned text table: one block per adhesion, rows e_Vx, e_psi, e_y,
    /// one column per controller, benchmark values in brackets when known.
    pub fn to_table(&self) -> String {
        let cs = self.controllers();
        let mut out = String::new();
        let _ = writeln!(
            out,
            "Maximum normalized errors (%)  [benchmark value, different plant]"
        );
        let labels = [
            "Longitudinal speed e_Vx",
            "Yaw angle e_psi",
            "Lateral deviation e_y",
        ];
        for mu in self.mus() {
            let _ = write!(out, "\nmu = {mu:<5} {:<24}", "");
            for c in &cs {
                let _ = write!(out, "{:>22}", c.name().to_uppercase());
            }
            out.push('\n');
            for (i, label) in labels.iter().enumerate() {
                let _ = write!(out, "{:<36}", label);
                for c in &cs {
                    let cell = match self.get(mu, *c) {
                        Some(r) if r.verdict.is_completed() => {
                            let ours = r.normalized()[i].map_or("n/a".to_string(), fmt_pct);
                            match benchmark_errors(*c, mu) {
                                Some(p) => format!("{ours} [{}]", p[i]),
                                None => ours,
                            }
                        }
                        Some(_) => "FAILED".to_string(),
                        None => "-".to_string(),
                    };
                    let _ = write!(out, "{cell:>22}");
                }
                out.push('\n');
            }
            for c in &cs {
                if let Some(r) = self.get(mu, *c) {
                    if !r.verdict.is_completed() {
                        let _ = writeln!(out, "  {}: {}", c.name(), r.verdict.describe());
                    }
                }
            }
        }
        out
    }

    /// One CSV line per run with normalized and raw errors.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wr = csv::WriterBuilder::new()
            .terminator(csv::Terminator::Any(b'\n'))
            .from_writer(w);
        wr.write_record([
            "mu",
            "controller",
            "verdict",
            "e_vx_pct",
            "e_psi_pct",
            "e_y_pct",
            "e_z2_pct",
            "vx_linf_m_per_s",
            "psi_linf_rad",
            "y_linf_m",
            "vx_rms_m_per_s",
            "psi_rms_rad",
            "y_rms_m",
        ])?;
        for e in &self.entries {
            let r = &e.report;
            let pct = |v: Option<f64>| v.map(|v| v.to_string()).unwrap_or_default();
            let z2 = pct(r.z2.and_then(|c| c.normalized_pct));
            wr.write_record([
                e.mu.to_string(),
                e.controller.to_string(),
                r.verdict.describe(),
                pct(r.vx.normalized_pct),
                pct(r.psi.normalized_pct),
                pct(r.y.normalized_pct),
                z2,
                r.vx.linf.to_string(),
                r.psi.linf.to_string(),
                r.y.linf.to_string(),
                r.vx.rms.to_string(),
                r.psi.rms.to_string(),
                r.y.rms.to_string(),
            ])?;
        }
        wr.flush()?;
        Ok(())
    }
}

/// Named scenarios shipped with the library: every track crossed with every
/// controller, named `<track>_<controller>`.
pub fn builtin_scenarios() -> Vec<Scenario> {
    let tracks: [(&str, TrackKind, SpeedSpec); 5] = [
        ("tracklike", TrackKind::track_like(), SpeedSpec::default()),
        ("circle", TrackKind::circle(50.0), SpeedSpec::default()),
        (
            "lane_change",
            TrackKind::lane_change(),
            SpeedSpec::Constant { vx: 20.0 },
        ),
        ("s_curve", TrackKind::s_curve(), SpeedSpec::default()),
        (
            "straight",
            TrackKind::Straight { length_m: 400.0 },
            SpeedSpec::Constant { vx: 20.0 },
        ),
    ];
    let mut out = Vec::new();
    for (name, track, speed) in tracks {
        for c in ControllerKind::ALL {
            out.push(Scenario {
                name: format!("{name}_{c}"),
                track,
                speed,
                controller: c,
                ..Scenario::default()
            });
        }
    }
    out
}

pub fn builtin_scenario(name: &str) -> Option<Scenario> {
    builtin_scenarios().into_iter().find(|s| s.name == name)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn normalized_error_examples() {
        assert_eq!(
            normalized_error(&[1.0, 2.0, 4.0], &[1.0, 2.0, 4.0]).unwrap(),
            0.0
        );
        assert_eq!(
            normalized_error(&[1.0, 2.0, 5.0], &[1.0, 2.0, 4.0]).unwrap(),
            25.0
        );
        let c = 3.5;
        let a = normalized_error(&[c, 2.0 * c, 5.0 * c], &[c, 2.0 * c, 4.0 * c]).unwrap();
        assert!((a - 25.0).abs() < 1e-12);
        assert_eq!(normalized_error(&[1.0], &[0.0]), Err(Error::ZeroReference));
        assert_eq!(
            normalized_error(&[1.0], &[1.0, 2.0]),
            Err(Error::LengthMismatch(1, 2))
        );
    }

    #[test]
    fn zero_duration_is_empty() {
        let s = Scenario {
            duration_s: Some(0.0),
            ..Scenario::default()
        };
        let t = run_scenario(&s).unwrap();
        assert!(t.rows.is_empty());
        assert!(t.verdict.is_completed());
        let r = t.report().unwrap();
        assert_eq!(r.samples, 0);
    }

    #[test]
    fn builtin_names_unique() {
        let all = builtin_scenarios();
        let mut names: Vec<_> = all.iter().map(|s| s.name.clone()).collect();
        names.sort();
        names.dedup();
        assert_eq!(names.len(), all.len());
        assert!(builtin_scenario("circle_mfc").is_some());
        assert!(builtin_scenario("nope").is_none());
    }

    #[test]
    fn scenario_json_round_trip() {
        let s = Scenario::default();
        let j = serde_json::to_string(&s).unwrap();
        let back: Scenario = serde_json::from_str(&j).unwrap();
        assert_eq!(back, s);
        let err = serde_json::from_str::<Scenario>(r#"{"fs": 100}"#).unwrap_err();
        assert!(err.to_string().contains("fs"));
    }

    #[test]
    fn trace_csv_round_trip() {
        let s = Scenario {
            duration_s: Some(1.0),
            ..builtin_scenario("straight_mfc").unwrap()
        };
        let t = run_scenario(&s).unwrap();
        let mut buf = Vec::new();
        t.write_csv(&mut buf).unwrap();
        let rows = read_trace_rows(buf.as_slice()).unwrap();
        assert_eq!(rows, t.rows);
    }
}
