//! Reference paths.
//!
//! A path is a curvature profile `rho(s)` over arc length, integrated into
//! heading and position with cumulative trapezoidal sums:
//!
//! ```text
//! psi(s) = psi0 + int rho ds,   x(s) = x0 + int cos psi ds,   y(s) = y0 + int sin psi ds
//! ```
//!
//! The lateral deviation of a pose is measured by projecting it onto the
//! path, treating each sample interval as a circular arc.

use std::f64::consts::{PI, TAU};
use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};

pub const DEFAULT_SPACING: f64 = 0.5;
pub const DEFAULT_CORRIDOR: f64 = 20.0;

/// Curvature of the travelled path from lateral acceleration and speed.
pub fn curvature_from_dynamics(ay: f64, vx: f64, vx_min: f64) -> Result<f64> {
    if !(vx >= vx_min) {
        return Err(Error::Singularity { vx, vx_min });
    }
    Ok(ay / (vx * vx))
}

/// Planar pose: position and heading.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Pose {
    pub x: f64,
    pub y: f64,
    pub psi: f64,
}

/// Curvature-scheduled speed profile settings.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SpeedProfile {
    #[serde(rename = "v_max_m_per_s")]
    pub v_max: f64,
    #[serde(rename = "ay_max_m_per_s2")]
    pub ay_max: f64,
    #[serde(rename = "accel_max_m_per_s2")]
    pub accel_max: f64,
    #[serde(rename = "decel_max_m_per_s2")]
    pub decel_max: f64,
    /// Width of the centred moving average applied after rate limiting.
    #[serde(rename = "smoothing_m")]
    pub smoothing: f64,
}

impl Default for SpeedProfile {
    fn default() -> Self {
        Self {
            v_max: 25.0,
            ay_max: 4.0,
            accel_max: 1.0,
            decel_max: 1.5,
            smoothing: 20.0,
        }
    }
}

impl SpeedProfile {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("v_max_m_per_s", self.v_max),
            ("ay_max_m_per_s2", self.ay_max),
            ("accel_max_m_per_s2", self.accel_max),
            ("decel_max_m_per_s2", self.decel_max),
        ] {
            if !(v.is_finite() && v > 0.0) {
                return Err(invalid(name, "must be finite and > 0"));
            }
        }
        if !(self.smoothing.is_finite() && self.smoothing >= 0.0) {
            return Err(invalid("smoothing_m", "must be finite and >= 0"));
        }
        Ok(())
    }

    /// Speed over the grid `s` for curvatures `rho`.
    pub fn evaluate(&self, s: &[f64], rho: &[f64]) -> Vec<f64> {
        let n = s.len();
        let mut v: Vec<f64> = rho
            .iter()
            .map(|r| {
                if r.abs() > 0.0 {
                    self.v_max.min((self.ay_max / r.abs()).sqrt())
                } else {
                    self.v_max
                }
            })
            .collect();
        for i in (0..n.saturating_sub(1)).rev() {
            let ds = s[i + 1] - s[i];
            v[i] = v[i].min((v[i + 1] * v[i + 1] + 2.0 * self.decel_max * ds).sqrt());
        }
        for i in 1..n {
            let ds = s[i] - s[i - 1];
            v[i] = v[i].min((v[i - 1] * v[i - 1] + 2.0 * self.accel_max * ds).sqrt());
        }
        if n > 2 && self.smoothing > 0.0 {
            let h = (s[n - 1] - s[0]) / (n - 1) as f64;
            let half = ((self.smoothing / h) / 2.0).round() as usize;
            if half > 0 {
                let mut prefix = vec![0.0; n + 1];
                for i in 0..n {
                    prefix[i + 1] = prefix[i] + v[i];
                }
                v = (0..n)
                    .map(|i| {
                        // shrink the window near the ends so it stays centred
                        let k = half.min(i).min(n - 1 - i);
                        (prefix[i + k + 1] - prefix[i - k]) / (2 * k + 1) as f64
                    })
                    .collect();
            }
        }
        v
    }
}

/// Reference trajectory sampled over arc length.
#[derive(Debug, Clone, PartialEq)]
pub struct ReferencePath {
    pub s: Vec<f64>,
    pub rho: Vec<f64>,
    pub psi: Vec<f64>,
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    pub vx: Vec<f64>,
    /// d(vx)/ds on the same grid.
    pub dvx_ds: Vec<f64>,
}

/// Interpolated reference quantities at one arc length.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct PathPoint {
    pub s: f64,
    pub x: f64,
    pub y: f64,
    pub psi: f64,
    pub rho: f64,
    pub drho_ds: f64,
    pub vx: f64,
    pub dvx_ds: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
struct CsvRow {
    s: f64,
    x_d: f64,
    y_d: f64,
    psi_d: f64,
    rho_d: f64,
    #[serde(rename = "Vx_d")]
    vx_d: f64,
}

fn check_grid(s: &[f64]) -> Result<()> {
    if s.len() < 2 {
        return Err(invalid("s", "need at least two samples"));
    }
    for i in 1..s.len() {
        if !(s[i] > s[i - 1]) {
            return Err(Error::NonMonotoneGrid(i));
        }
    }
    Ok(())
}

/// Integrates a curvature profile into a path. The speed profile is left at
/// zero; see [`ReferencePath::with_speed_profile`].
pub fn reconstruct_path(s: &[f64], rho: &[f64], start: Pose) -> Result<ReferencePath> {
    check_grid(s)?;
    if rho.len() != s.len() {
        return Err(Error::LengthMismatch(s.len(), rho.len()));
    }
    if rho.iter().any(|r| !r.is_finite()) {
        return Err(Error::NonFinite("curvature profile"));
    }
    let n = s.len();
    let mut psi = vec![start.psi; n];
    let mut x = vec![start.x; n];
    let mut y = vec![start.y; n];
    for i in 1..n {
        let ds = s[i] - s[i - 1];
        psi[i] = psi[i - 1] + 0.5 * ds * (rho[i] + rho[i - 1]);
        x[i] = x[i - 1] + 0.5 * ds * (psi[i].cos() + psi[i - 1].cos());
        y[i] = y[i - 1] + 0.5 * ds * (psi[i].sin() + psi[i - 1].sin());
    }
    Ok(ReferencePath {
        s: s.to_vec(),
        rho: rho.to_vec(),
        psi,
        x,
        y,
        vx: vec![0.0; n],
        dvx_ds: vec![0.0; n],
    })
}

fn gradient(s: &[f64], v: &[f64]) -> Vec<f64> {
    let n = s.len();
    (0..n)
        .map(|i| {
            let (a, b) = if i == 0 {
                (0, 1)
            } else if i == n - 1 {
                (n - 2, n - 1)
            } else {
                (i - 1, i + 1)
            };
            (v[b] - v[a]) / (s[b] - s[a])
        })
        .collect()
}

impl ReferencePath {
    /// Builds a path from already-computed samples (e.g. an analytic curve).
    pub fn from_samples(
        s: Vec<f64>,
        x: Vec<f64>,
        y: Vec<f64>,
        psi: Vec<f64>,
        rho: Vec<f64>,
        vx: Vec<f64>,
    ) -> Result<Self> {
        check_grid(&s)?;
        let n = s.len();
        for len in [x.len(), y.len(), psi.len(), rho.len(), vx.len()] {
            if len != n {
                return Err(Error::LengthMismatch(n, len));
            }
        }
        let dvx_ds = gradient(&s, &vx);
        Ok(Self {
            s,
            rho,
            psi,
            x,
            y,
            vx,
            dvx_ds,
        })
    }

    pub fn with_speed_profile(mut self, profile: &SpeedProfile) -> Result<Self> {
        profile.validate()?;
        self.vx = profile.evaluate(&self.s, &self.rho);
        self.dvx_ds = gradient(&self.s, &self.vx);
        Ok(self)
    }

    pub fn with_constant_speed(mut self, vx: f64) -> Self {
        self.vx = vec![vx; self.s.len()];
        self.dvx_ds = vec![0.0; self.s.len()];
        self
    }

    pub fn len(&self) -> usize {
        self.s.len()
    }

    pub fn is_empty(&self) -> bool {
        self.s.is_empty()
    }

    pub fn length(&self) -> f64 {
        self.s[self.s.len() - 1] - self.s[0]
    }

    pub fn start_pose(&self) -> Pose {
        Pose {
            x: self.x[0],
            y: self.y[0],
            psi: self.psi[0],
        }
    }

    pub fn max_abs_curvature(&self) -> f64 {
        self.rho.iter().fold(0.0, |m, r| m.max(r.abs()))
    }

    /// Linear interpolation of every reference quantity at arc length `s`
    /// (clamped to the path).
    pub fn sample(&self, s: f64) -> PathPoint {
        let n = self.s.len();
        let s = s.clamp(self.s[0], self.s[n - 1]);
        let i = self.s.partition_point(|v| *v <= s).clamp(1, n - 1) - 1;
        let h = self.s[i + 1] - self.s[i];
        let w = (s - self.s[i]) / h;
        let lerp = |v: &[f64]| v[i] + w * (v[i + 1] - v[i]);
        PathPoint {
            s,
            x: lerp(&self.x),
            y: lerp(&self.y),
            psi: lerp(&self.psi),
            rho: lerp(&self.rho),
            drho_ds: (self.rho[i + 1] - self.rho[i]) / h,
            vx: lerp(&self.vx),
            dvx_ds: lerp(&self.dvx_ds),
        }
    }

    /// Writes the path as CSV with header `s,x_d,y_d,psi_d,rho_d,Vx_d`.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wr = csv::WriterBuilder::new()
            .terminator(csv::Terminator::Any(b'\n'))
            .from_writer(w);
        for i in 0..self.len() {
            wr.serialize(CsvRow {
                s: self.s[i],
                x_d: self.x[i],
                y_d: self.y[i],
                psi_d: self.psi[i],
                rho_d: self.rho[i],
                vx_d: self.vx[i],
            })?;
        }
        wr.flush()?;
        Ok(())
    }

    pub fn read_csv<R: Read>(r: R) -> Result<Self> {
        let mut rd = csv::Reader::from_reader(r);
        let mut cols: [Vec<f64>; 6] = Default::default();
        for row in rd.deserialize::<CsvRow>() {
            let row = row?;
            for (c, v) in cols
                .iter_mut()
                .zip([row.s, row.x_d, row.y_d, row.psi_d, row.rho_d, row.vx_d])
            {
                c.push(v);
            }
        }
        let [s, x, y, psi, rho, vx] = cols;
        Self::from_samples(s, x, y, psi, rho, vx)
    }

    /// Projects `pose` onto the interval `[s_i, s_{i+1}]`, modelled as a
    /// circular arc of the mean curvature. Returns the projection and the
    /// Euclidean distance from the pose to the (clamped) interval.
    fn project_on(&self, i: usize, pose: &Pose) -> (Projection, f64) {
        let (px, py, psi_i) = (self.x[i], self.y[i], self.psi[i]);
        let h = self.s[i + 1] - self.s[i];
        let kappa = 0.5 * (self.rho[i] + self.rho[i + 1]);
        let (sin, cos) = psi_i.sin_cos();
        let (dx, dy) = (pose.x - px, pose.y - py);
        let (ds, dn) = if kappa.abs() < 1e-12 {
            (dx * cos + dy * sin, -dx * sin + dy * cos)
        } else {
            let (cx, cy) = (px - sin / kappa, py + cos / kappa);
            let (r0x, r0y) = (px - cx, py - cy);
            let (vx, vy) = (pose.x - cx, pose.y - cy);
            let phi = (r0x * vy - r0y * vx).atan2(r0x * vx + r0y * vy);
            let dist = vx.hypot(vy);
            (phi / kappa, 1.0 / kappa - kappa.signum() * dist)
        };
        let last = i + 2 == self.s.len();
        // beyond either end of the path, extend along the end tangent
        if (i == 0 && ds < 0.0) || (last && ds > h) {
            let (ex, ey, et, base) = if ds < 0.0 {
                (px, py, psi_i, self.s[i])
            } else {
                (
                    self.x[i + 1],
                    self.y[i + 1],
                    psi_i + kappa * h,
                    self.s[i + 1],
                )
            };
            let (sin, cos) = et.sin_cos();
            let (dx, dy) = (pose.x - ex, pose.y - ey);
            let along = dx * cos + dy * sin;
            if (ds < 0.0 && along < 0.0) || (ds > h && along > 0.0) {
                let across = -dx * sin + dy * cos;
                return (
                    Projection {
                        y_err: across,
                        s: base + along,
                        psi_err: wrap_angle(pose.psi - et),
                        path_psi: et,
                        segment: i,
                    },
                    across.abs(),
                );
            }
        }
        let clamped = ds.clamp(0.0, h);
        let distance = if clamped == ds {
            dn.abs()
        } else {
            let (ex, ey) = if ds < 0.0 {
                (px, py)
            } else {
                (self.x[i + 1], self.y[i + 1])
            };
            (pose.x - ex).hypot(pose.y - ey)
        };
        let tangent = psi_i + kappa * clamped;
        (
            Projection {
                y_err: dn,
                s: self.s[i] + clamped,
                psi_err: wrap_angle(pose.psi - tangent),
                path_psi: tangent,
                segment: i,
            },
            distance,
        )
    }

    fn project_range(&self, pose: &Pose, lo: usize, hi: usize) -> (Projection, f64) {
        let mut best: Option<(Projection, f64)> = None;
        for i in lo..hi {
            let cand = self.project_on(i, pose);
            if best.as_ref().is_none_or(|b| cand.1 < b.1) {
                best = Some(cand);
            }
        }
        best.expect("non-empty search range")
    }
}

/// Result of projecting a pose onto a path.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Projection {
    /// Signed offset, positive to the left of the path tangent.
    pub y_err: f64,
    /// Arc length of the projection point.
    pub s: f64,
    /// Pose heading minus path tangent, wrapped to (-pi, pi].
    pub psi_err: f64,
    /// Path tangent at the projection point.
    pub path_psi: f64,
    /// Index of the sample interval holding the projection.
    pub segment: usize,
}

pub fn wrap_angle(a: f64) -> f64 {
    let w = (a + PI).rem_euclid(TAU) - PI;
    if w == -PI {
        PI
    } else {
        w
    }
}

/// Global nearest-point projection of `pose` onto `path`.
pub fn lateral_deviation(pose: &Pose, path: &ReferencePath, corridor: f64) -> Result<Projection> {
    let (p, d) = path.project_range(pose, 0, path.len() - 1);
    if d > corridor {
        return Err(Error::OffCorridor {
            distance: d,
            corridor,
        });
    }
    Ok(p)
}

/// Stateful projector for a run: searches a window around the previous
/// projection and never lets the arc length move backwards.
#[derive(Debug, Clone)]
pub struct PathTracker {
    segment: usize,
    s: f64,
    corridor: f64,
    back: f64,
    ahead: f64,
}

impl PathTracker {
    pub fn new(corridor: f64) -> Self {
        Self {
            segment: 0,
            s: f64::NEG_INFINITY,
            corridor,
            back: 2.0,
            ahead: 30.0,
        }
    }

    pub fn project(&mut self, pose: &Pose, path: &ReferencePath) -> Result<Projection> {
        let base = path.s[self.segment];
        let lo = path
            .s
            .partition_point(|v| *v < base - self.back)
            .min(self.segment);
        let hi = path
            .s
            .partition_point(|v| *v <= base + self.ahead)
            .clamp(lo + 1, path.len() - 1);
        let (mut p, d) = path.project_range(pose, lo, hi);
        if d > self.corridor {
            return Err(Error::OffCorridor {
                distance: d,
                corridor: self.corridor,
            });
        }
        if p.s < self.s {
            p.s = self.s;
        } else {
            self.segment = p.segment;
        }
        self.s = p.s;
        Ok(p)
    }
}

/// One piece of a curvature profile.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum Segment {
    Straight {
        length: f64,
    },
    /// Constant curvature; positive turns left.
    Arc {
        curvature: f64,
        length: f64,
    },
    /// Curvature varying linearly between the two values.
    Clothoid {
        from: f64,
        to: f64,
        length: f64,
    },
    /// One period of `amplitude * sin(2 pi s / length)`; zero net heading change.
    SineDoublet {
        amplitude: f64,
        length: f64,
    },
}

impl Segment {
    fn length(&self) -> f64 {
        match *self {
            Segment::Straight { length }
            | Segment::Arc { length, .. }
            | Segment::Clothoid { length, .. }
            | Segment::SineDoublet { length, .. } => length,
        }
    }

    fn curvature(&self, u: f64) -> f64 {
        match *self {
            Segment::Straight { .. } => 0.0,
            Segment::Arc { curvature, .. } => curvature,
            Segment::Clothoid { from, to, length } => from + (to - from) * u / length,
            Segment::SineDoublet { amplitude, length } => amplitude * (TAU * u / length).sin(),
        }
    }
}

/// Samples a piecewise curvature profile at spacing `h` and integrates it.
pub fn path_from_segments(segments: &[Segment], h: f64) -> Result<ReferencePath> {
    if !(h.is_finite() && h > 0.0) {
        return Err(invalid("spacing_m", "must be finite and > 0"));
    }
    if segments.is_empty() {
        return Err(invalid("segments", "at least one segment required"));
    }
    for seg in segments {
        if !(seg.length().is_finite() && seg.length() > 0.0) {
            return Err(invalid(
                "segments",
                "segment lengths must be finite and > 0",
            ));
        }
    }
    let total: f64 = segments.iter().map(Segment::length).sum();
    let n = (total / h).round() as usize;
    let h = total / n as f64;
    let mut s = Vec::with_capacity(n + 1);
    let mut rho = Vec::with_capacity(n + 1);
    let mut seg = 0;
    let mut seg_start = 0.0;
    for i in 0..=n {
        let si = i as f64 * h;
        while seg + 1 < segments.len() && si > seg_start + segments[seg].length() + 1e-9 {
            seg_start += segments[seg].length();
            seg += 1;
        }
        s.push(si);
        rho.push(segments[seg].curvature((si - seg_start).min(segments[seg].length())));
    }
    reconstruct_path(&s, &rho, Pose::default())
}

/// Synthetic reference tracks.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum TrackKind {
    Straight {
        length_m: f64,
    },
    /// Straight, lane change of `width_m`, straight, change back, straight.
    StraightLaneChange {
        lead_m: f64,
        width_m: f64,
        change_length_m: f64,
        hold_m: f64,
    },
    Circle {
        radius_m: f64,
        length_m: f64,
    },
    /// Left arc then right arc joined by clothoids.
    SCurve {
        radius_m: f64,
        arc_length_m: f64,
        transition_m: f64,
        lead_m: f64,
    },
    /// Straights linked to clothoid-entered curves of radii 30..200 m.
    TrackLike {
        transition_m: f64,
    },
}

impl TrackKind {
    pub fn circle(radius_m: f64) -> Self {
        TrackKind::Circle {
            radius_m,
            length_m: TAU * radius_m,
        }
    }

    pub fn lane_change() -> Self {
        TrackKind::StraightLaneChange {
            lead_m: 60.0,
            width_m: 3.5,
            change_length_m: 80.0,
            hold_m: 60.0,
        }
    }

    pub fn s_curve() -> Self {
        TrackKind::SCurve {
            radius_m: 60.0,
            arc_length_m: 60.0,
            transition_m: 30.0,
            lead_m: 60.0,
        }
    }

    pub fn track_like() -> Self {
        TrackKind::TrackLike { transition_m: 50.0 }
    }

    pub fn segments(&self) -> Result<Vec<Segment>> {
        let positive = |name: &'static str, v: f64| -> Result<f64> {
            if v.is_finite() && v > 0.0 {
                Ok(v)
            } else {
                Err(invalid(name, format!("must be finite and > 0, got {v}")))
            }
        };
        match *self {
            TrackKind::Straight { length_m } => Ok(vec![Segment::Straight {
                length: positive("length_m", length_m)?,
            }]),
            TrackKind::StraightLaneChange {
                lead_m,
                width_m,
                change_length_m,
                hold_m,
            } => {
                let lead = positive("lead_m", lead_m)?;
                let len = positive("change_length_m", change_length_m)?;
                let hold = positive("hold_m", hold_m)?;
                if !width_m.is_finite() || width_m == 0.0 {
                    return Err(invalid("width_m", "must be finite and non-zero"));
                }
                // Small-angle amplitude giving a lateral offset of `width_m`.
                let amp = TAU * width_m / (len * len);
                Ok(vec![
                    Segment::Straight { length: lead },
                    Segment::SineDoublet {
                        amplitude: amp,
                        length: len,
                    },
                    Segment::Straight { length: hold },
                    Segment::SineDoublet {
                        amplitude: -amp,
                        length: len,
                    },
                    Segment::Straight { length: lead },
                ])
            }
            TrackKind::Circle { radius_m, length_m } => Ok(vec![Segment::Arc {
                curvature: 1.0 / positive("radius_m", radius_m)?,
                length: positive("length_m", length_m)?,
            }]),
            TrackKind::SCurve {
                radius_m,
                arc_length_m,
                transition_m,
                lead_m,
            } => {
                let k = 1.0 / positive("radius_m", radius_m)?;
                let arc = positive("arc_length_m", arc_length_m)?;
                let tr = positive("transition_m", transition_m)?;
                let lead = positive("lead_m", lead_m)?;
                Ok(vec![
                    Segment::Straight { length: lead },
                    Segment::Clothoid {
                        from: 0.0,
                        to: k,
                        length: tr,
                    },
                    Segment::Arc {
                        curvature: k,
                        length: arc,
                    },
                    Segment::Clothoid {
                        from: k,
                        to: -k,
                        length: 2.0 * tr,
                    },
                    Segment::Arc {
                        curvature: -k,
                        length: arc,
                    },
                    Segment::Clothoid {
                        from: -k,
                        to: 0.0,
                        length: tr,
                    },
                    Segment::Straight { length: lead },
                ])
            }
            TrackKind::TrackLike { transition_m } => {
                let tr = positive("transition_m", transition_m)?;
                // (signed radius, arc length, following straight)
                let layout: [(f64, f64, f64); 7] = [
                    (200.0, 150.0, 100.0),
                    (-60.0, 80.0, 80.0),
                    (30.0, 50.0, 120.0),
                    (-120.0, 120.0, 60.0),
                    (45.0, 70.0, 0.0),
                    (-90.0, 90.0, 100.0),
                    (150.0, 100.0, 150.0),
                ];
                let mut segs = vec![Segment::Straight { length: 120.0 }];
                let mut prev = 0.0;
                for (radius, arc, straight) in layout {
                    let k = 1.0 / radius;
                    segs.push(Segment::Clothoid {
                        from: prev,
                        to: k,
                        length: tr,
                    });
                    segs.push(Segment::Arc {
                        curvature: k,
                        length: arc,
                    });
                    if straight > 0.0 {
                        segs.push(Segment::Clothoid {
                            from: k,
                            to: 0.0,
                            length: tr,
                        });
                        segs.push(Segment::Straight { length: straight });
                        prev = 0.0;
                    } else {
                        prev = k;
                    }
                }
                Ok(segs)
            }
        }
    }
}

/// Builds a synthetic track at arc-length spacing `h` (speed profile unset).
pub fn synthetic_track(kind: &TrackKind, h: f64) -> Result<ReferencePath> {
    path_from_segments(&kind.segments()?, h)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn straight(len: f64) -> ReferencePath {
        path_from_segments(&[Segment::Straight { length: len }], 0.5).unwrap()
    }

    #[test]
    fn curvature_examples() {
        assert_eq!(curvature_from_dynamics(0.0, 10.0, 0.5).unwrap(), 0.0);
        assert!((curvature_from_dynamics(2.0, 10.0, 0.5).unwrap() - 0.02).abs() < 1e-15);
        assert!(curvature_from_dynamics(2.0, 0.1, 0.5).is_err());
    }

    #[test]
    fn straight_reconstruction() {
        let p = straight(100.0);
        for i in 0..p.len() {
            assert!((p.x[i] - p.s[i]).abs() < 1e-12);
            assert_eq!(p.y[i], 0.0);
            assert_eq!(p.psi[i], 0.0);
        }
    }

    #[test]
    fn non_monotone_grid_rejected() {
        let err = reconstruct_path(&[0.0, 1.0, 1.0], &[0.0; 3], Pose::default()).unwrap_err();
        assert_eq!(err, Error::NonMonotoneGrid(2));
    }

    #[test]
    fn circle_closes() {
        let p = synthetic_track(&TrackKind::circle(50.0), 0.5).unwrap();
        let n = p.len() - 1;
        assert!((p.x[n] - p.x[0]).hypot(p.y[n] - p.y[0]) < 0.05);
        assert!((p.psi[n] - TAU).abs() < 1e-9);
    }

    #[test]
    fn lane_change_shape() {
        let p = synthetic_track(&TrackKind::lane_change(), 0.5).unwrap();
        let last = p.len() - 1;
        assert!(p.psi[last].abs() < 1e-9);
        // offset reached during the hold
        let mid = p.sample(60.0 + 80.0 + 30.0);
        assert!((mid.y - 3.5).abs() < 0.05, "{}", mid.y);
        // two sign changes of curvature with y'' following it: inflections
        let signs: Vec<f64> = p
            .rho
            .iter()
            .filter(|r| r.abs() > 1e-9)
            .map(|r| r.signum())
            .collect();
        let changes = signs.windows(2).filter(|w| w[0] != w[1]).count();
        assert_eq!(changes, 2);
    }

    #[test]
    fn track_like_bounded_and_continuous() {
        let p = synthetic_track(&TrackKind::track_like(), 0.5).unwrap();
        assert!(p.max_abs_curvature() <= 1.0 / 30.0 + 1e-12);
        let h = p.s[1] - p.s[0];
        let max_jump = p
            .rho
            .windows(2)
            .map(|w| (w[1] - w[0]).abs())
            .fold(0.0, f64::max);
        assert!(
            max_jump <= (1.0 / 30.0 + 1.0 / 45.0) * h / 50.0 + 1e-9,
            "{max_jump}"
        );
    }

    #[test]
    fn projection_on_straight() {
        let p = straight(100.0);
        let on = lateral_deviation(
            &Pose {
                x: 40.0,
                y: 0.0,
                psi: 0.0,
            },
            &p,
            20.0,
        )
        .unwrap();
        assert!(on.y_err.abs() < 1e-12 && (on.s - 40.0).abs() < 1e-12);
        let left = lateral_deviation(
            &Pose {
                x: 40.2,
                y: 1.0,
                psi: 0.1,
            },
            &p,
            20.0,
        )
        .unwrap();
        assert!((left.y_err - 1.0).abs() < 1e-12);
        assert!((left.psi_err - 0.1).abs() < 1e-12);
        assert!(matches!(
            lateral_deviation(
                &Pose {
                    x: 40.0,
                    y: 25.0,
                    psi: 0.0
                },
                &p,
                20.0
            ),
            Err(Error::OffCorridor { .. })
        ));
    }

    #[test]
    fn wrap() {
        assert!((wrap_angle(3.0 * PI) - PI).abs() < 1e-12);
        assert!((wrap_angle(-0.5) + 0.5).abs() < 1e-15);
        assert!((wrap_angle(TAU + 0.25) - 0.25).abs() < 1e-12);
    }

    #[test]
    fn tracker_is_monotone() {
        let p = straight(100.0);
        let mut t = PathTracker::new(20.0);
        let a = t
            .project(
                &Pose {
                    x: 10.0,
                    y: 0.5,
                    psi: 0.0,
                },
                &p,
            )
            .unwrap();
        let b = t
            .project(
                &Pose {
                    x: 9.9,
                    y: 0.5,
                    psi: 0.0,
                },
                &p,
            )
            .unwrap();
        assert_eq!(a.s, b.s);
        let c = t
            .project(
                &Pose {
                    x: 12.0,
                    y: 0.5,
                    psi: 0.0,
                },
                &p,
            )
            .unwrap();
        assert!(c.s > b.s);
    }

    #[test]
    fn speed_profile_respects_limits() {
        let p = synthetic_track(&TrackKind::track_like(), 0.5)
            .unwrap()
            .with_speed_profile(&SpeedProfile::default())
            .unwrap();
        assert!(p.vx.iter().all(|v| *v > 10.0 && *v <= 25.0 + 1e-9));
        // lateral acceleration stays near the scheduled limit
        let ay =
            p.vx.iter()
                .zip(&p.rho)
                .map(|(v, r)| v * v * r.abs())
                .fold(0.0, f64::max);
        assert!(ay < 4.4, "{ay}");
    }

    #[test]
    fn csv_round_trip() {
        let p = synthetic_track(&TrackKind::s_curve(), 0.5)
            .unwrap()
            .with_speed_profile(&SpeedProfile::default())
            .unwrap();
        let mut buf = Vec::new();
        p.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("s,x_d,y_d,psi_d,rho_d,Vx_d\n"));
        let q = ReferencePath::read_csv(buf.as_slice()).unwrap();
        assert_eq!(p.s, q.s);
        assert_eq!(p.x, q.x);
        assert_eq!(p.vx, q.vx);
    }

    #[test]
    fn invalid_track_parameters() {
        assert!(synthetic_track(&TrackKind::circle(-5.0), 0.5).is_err());
        assert!(synthetic_track(&TrackKind::TrackLike { transition_m: 0.0 }, 0.5).is_err());
        assert!(synthetic_track(&TrackKind::circle(50.0), 0.0).is_err());
    }
}
