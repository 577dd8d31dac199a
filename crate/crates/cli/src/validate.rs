//! Estimator self-test on synthetic ultra-local data with known `F`.

use std::fmt::Write as _;

use anyhow::Result;
use mfc_core::ultralocal::{AlgebraicEstimator, UltraLocalConfig};
use serde::Serialize;

pub const TOLERANCE: f64 = 1e-3;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ValidationSettings {
    pub tau_s: f64,
    pub fs_hz: f64,
    pub alpha_long: f64,
    pub alpha_lat: f64,
}

impl Default for ValidationSettings {
    fn default() -> Self {
        Self {
            tau_s: 0.25,
            fs_hz: 200.0,
            alpha_long: 1.5,
            alpha_lat: 1.95,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Check {
    pub name: String,
    pub nu: u8,
    /// Largest `|F_est - F| / max(1, |F|)` once the window is full.
    pub error: f64,
    /// `None` for checks that only report.
    pub tolerance: Option<f64>,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ValidationReport {
    pub settings: ValidationSettings,
    pub checks: Vec<Check>,
}

impl ValidationReport {
    pub fn all_pass(&self) -> bool {
        self.checks.iter().all(|c| c.pass)
    }

    pub fn to_text(&self) -> String {
        let s = &self.settings;
        let mut out = format!(
            "estimator validation: tau = {} s, fs = {} Hz, alpha = {} / {}\n",
            s.tau_s, s.fs_hz, s.alpha_long, s.alpha_lat
        );
        for c in &self.checks {
            let verdict = match (c.tolerance, c.pass) {
                (None, _) => "info",
                (Some(_), true) => "PASS",
                (Some(_), false) => "FAIL",
            };
            let tol = c
                .tolerance
                .map_or(String::new(), |t| format!(" (tol {t:e})"));
            let _ = writeln!(
                out,
                "  [{verdict}] nu={} {:<44} max rel err {:.3e}{tol}",
                c.nu, c.name, c.error
            );
        }
        out
    }
}

/// Samples `z^(nu) = F + alpha u(t)` at `fs`. The estimator is fed the input
/// sampled at the start of each interval and held.
fn estimate_error(
    nu: u8,
    alpha: f64,
    s: &ValidationSettings,
    f: f64,
    input: impl Fn(f64) -> f64,
    substeps: usize,
) -> Result<f64> {
    let cfg = UltraLocalConfig::new(nu, alpha, s.tau_s, s.fs_hz)?;
    let mut est = AlgebraicEstimator::new(cfg)?;
    let dt = 1.0 / s.fs_hz;
    let h = dt / substeps as f64;
    let n = cfg.intervals() * 3 + 10;
    let (mut z, mut v) = (0.0, 0.0);
    let mut held = 0.0;
    let mut worst: f64 = 0.0;
    for k in 0..n {
        est.push(z, held);
        if est.is_ready() {
            worst = worst.max((est.estimate()? - f).abs() / f.abs().max(1.0));
        }
        let t0 = k as f64 * dt;
        held = input(t0);
        for j in 0..substeps {
            let a = f + alpha * input(t0 + j as f64 * h);
            if nu == 1 {
                z += a * h;
            } else {
                z += v * h + 0.5 * a * h * h;
                v += a * h;
            }
        }
    }
    Ok(worst)
}

fn held_input(t: f64) -> f64 {
    (3.1 * t).sin() + 0.4 * (11.0 * t).cos()
}

fn continuous_input(t: f64) -> f64 {
    (7.0 * t).sin() + 0.5 * (3.0 * t).cos()
}

fn check(name: &str, nu: u8, error: f64, tolerance: Option<f64>) -> Check {
    Check {
        name: name.to_string(),
        nu,
        error,
        tolerance,
        pass: tolerance.is_none_or(|t| error < t),
    }
}

/// Runs the oracle suite. Invalid settings (e.g. a window shorter than two
/// samples) are an error; failed checks are report content.
pub fn validate_estimators(s: &ValidationSettings) -> Result<ValidationReport> {
    UltraLocalConfig::new(1, s.alpha_long, s.tau_s, s.fs_hz)?;
    UltraLocalConfig::new(2, s.alpha_lat, s.tau_s, s.fs_hz)?;
    let mut checks = Vec::new();
    for (nu, alpha) in [(1u8, s.alpha_long), (2u8, s.alpha_lat)] {
        let mut free: f64 = 0.0;
        let mut forced: f64 = 0.0;
        for fi in -5..=5 {
            let f = fi as f64;
            free = free.max(estimate_error(nu, alpha, s, f, |_| 0.0, 1)?);
            forced = forced.max(estimate_error(nu, alpha, s, f, held_input, 1)?);
        }
        let free_name = if nu == 1 {
            "linear output z = F t, u = 0"
        } else {
            "quadratic output z = F t^2/2, u = 0"
        };
        checks.push(check(free_name, nu, free, Some(TOLERANCE)));
        checks.push(check("constant F, held input", nu, forced, Some(TOLERANCE)));
        let cont = estimate_error(nu, alpha, s, 1.3, continuous_input, 64)?;
        checks.push(check(
            "constant F, continuous input (shrinks with fs)",
            nu,
            cont,
            None,
        ));
    }
    Ok(ValidationReport {
        settings: *s,
        checks,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_suite_passes() {
        let r = validate_estimators(&ValidationSettings::default()).unwrap();
        assert!(r.all_pass(), "{}", r.to_text());
        assert_eq!(r.checks.len(), 6);
    }

    #[test]
    fn short_window_refused() {
        let s = ValidationSettings {
            tau_s: 0.005,
            ..Default::default()
        };
        let err = validate_estimators(&s).unwrap_err().to_string();
        assert!(err.contains("tau_s"), "{err}");
    }
}
