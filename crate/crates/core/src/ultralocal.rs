//! Ultra-local model `z^(nu) = F + alpha u` and the algebraic sliding-window
//! estimators of the lumped term `F`.
//!
//! With `s` the window-local time (`s = 0` is the oldest sample, `s = tau`
//! the newest) the estimators are
//!
//! ```text
//! nu = 1:  F = -(6/tau^3)  int_0^tau [ (tau - 2s) z(s) + alpha s (tau - s) u(s) ] ds
//! nu = 2:  F =  (60/tau^5) int_0^tau (tau^2 + 6s^2 - 6 tau s) z(s) ds
//!             - (30 alpha/tau^5) int_0^tau (tau - s)^2 s^2 u(s) ds
//! ```
//!
//! Both follow from integrating the model against a polynomial that vanishes
//! (with its first `nu - 1` derivatives) at both window ends, so initial
//! conditions drop out and a constant `F` is recovered exactly in continuous
//! time.
//!
//! Discretisation: the output integral uses trapezoidal weights, corrected so
//! that the discrete kernel annihilates polynomials of degree `< nu` and is
//! normalised by its discrete moment against `s^nu / nu!`. Inputs are
//! zero-order held, so the input integral is evaluated exactly over each hold
//! interval.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};

/// Number of samples fitted by [`derivative_estimate`] by default.
pub const DEFAULT_DIFF_SAMPLES: usize = 5;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct UltraLocalConfig {
    /// Derivation order, 1 or 2.
    pub nu: u8,
    /// Input scaling, in units of `z^(nu)` per unit of `u`.
    pub alpha: f64,
    /// Estimation window length.
    #[serde(rename = "tau_s")]
    pub tau: f64,
    /// Sample frequency.
    #[serde(rename = "fs_hz")]
    pub fs: f64,
}

impl UltraLocalConfig {
    pub fn new(nu: u8, alpha: f64, tau: f64, fs: f64) -> Result<Self> {
        let cfg = Self { nu, alpha, tau, fs };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.nu != 1 && self.nu != 2 {
            return Err(invalid("nu", format!("must be 1 or 2, got {}", self.nu)));
        }
        if !(self.alpha.is_finite() && self.alpha != 0.0) {
            return Err(invalid("alpha", "must be finite and non-zero"));
        }
        if !(self.fs.is_finite() && self.fs > 0.0) {
            return Err(invalid("fs_hz", "must be finite and > 0"));
        }
        if !(self.tau.is_finite() && self.tau * self.fs >= 2.0 - 1e-9) {
            return Err(invalid(
                "tau_s",
                format!(
                    "window must span at least 2 sample periods (tau >= {} s), got {} s",
                    2.0 / self.fs,
                    self.tau
                ),
            ));
        }
        Ok(())
    }

    /// Number of sample periods spanned by the window.
    pub fn intervals(&self) -> usize {
        (self.tau * self.fs - 1e-9).ceil().max(1.0) as usize
    }

    /// Effective window length, `intervals / fs`.
    pub fn span(&self) -> f64 {
        self.intervals() as f64 / self.fs
    }
}

/// Sliding window of `(z_k, u_{k-1})` pairs: each output sample together
/// with the input that was held over the interval ending at that sample.
#[derive(Debug, Clone, PartialEq)]
pub struct SignalWindow {
    samples: VecDeque<(f64, f64)>,
    capacity: usize,
}

impl SignalWindow {
    pub fn new(cfg: &UltraLocalConfig) -> Self {
        Self::with_capacity(cfg.intervals() + 1)
    }

    pub fn with_capacity(capacity: usize) -> Self {
        Self {
            samples: VecDeque::with_capacity(capacity),
            capacity,
        }
    }

    pub fn push(&mut self, z: f64, u_held: f64) {
        if self.samples.len() == self.capacity {
            self.samples.pop_front();
        }
        self.samples.push_back((z, u_held));
    }

    pub fn is_full(&self) -> bool {
        self.samples.len() == self.capacity
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn clear(&mut self) {
        self.samples.clear();
    }

    pub fn iter(&self) -> impl Iterator<Item = &(f64, f64)> {
        self.samples.iter()
    }
}

type Kernel2 = fn(f64, f64) -> f64;

/// FIR weights realising one estimator: `F = sum(wz[i] z[i]) + sum(wu[i] u[i])`.
#[derive(Debug, Clone, PartialEq)]
pub struct EstimatorKernel {
    pub z_weights: Vec<f64>,
    /// `u_weights[0]` is always zero: the first sample's held input lies
    /// outside the window.
    pub u_weights: Vec<f64>,
}

impl EstimatorKernel {
    pub fn new(cfg: &UltraLocalConfig) -> Result<Self> {
        cfg.validate()?;
        let n = cfg.intervals();
        let tau = cfg.span();
        let h = tau / n as f64;
        let s: Vec<f64> = (0..=n).map(|i| i as f64 * h).collect();
        let trap: Vec<f64> = (0..=n)
            .map(|i| if i == 0 || i == n { h / 2.0 } else { h })
            .collect();

        let (kz, monomial, u_antideriv, u_norm): (Kernel2, fn(f64) -> f64, Kernel2, f64) =
            match cfg.nu {
                1 => (
                    |s, t| t - 2.0 * s,
                    |s| s,
                    |s, t| t * s * s / 2.0 - s * s * s / 3.0,
                    tau.powi(3) / 6.0,
                ),
                _ => (
                    |s, t| t * t + 6.0 * s * s - 6.0 * t * s,
                    |s| s * s / 2.0,
                    |s, t| t * t * s.powi(3) / 3.0 - t * s.powi(4) / 2.0 + s.powi(5) / 5.0,
                    tau.powi(5) / 30.0,
                ),
            };

        let mut wz: Vec<f64> = s
            .iter()
            .zip(&trap)
            .map(|(&si, &w)| w * kz(si, tau))
            .collect();
        // Remove the discrete moments of order < nu so polynomials the
        // continuous kernel annihilates are annihilated exactly here too.
        let order = cfg.nu as usize;
        let basis: Vec<Vec<f64>> = (0..order)
            .map(|k| {
                s.iter()
                    .zip(&trap)
                    .map(|(&si, &w)| w * si.powi(k as i32))
                    .collect()
            })
            .collect();
        let plain: Vec<Vec<f64>> = (0..order)
            .map(|k| s.iter().map(|&si| si.powi(k as i32)).collect())
            .collect();
        // Solve G c = m with G[j][k] = <plain_j, basis_k>, m[j] = <plain_j, wz>.
        let gram = |j: usize, k: usize| -> f64 {
            plain[j].iter().zip(&basis[k]).map(|(a, b)| a * b).sum()
        };
        let moment =
            |j: usize, w: &[f64]| -> f64 { plain[j].iter().zip(w).map(|(a, b)| a * b).sum() };
        let coeffs: Vec<f64> = match order {
            1 => vec![moment(0, &wz) / gram(0, 0)],
            _ => {
                let (g00, g01, g10, g11) = (gram(0, 0), gram(0, 1), gram(1, 0), gram(1, 1));
                let (m0, m1) = (moment(0, &wz), moment(1, &wz));
                let det = g00 * g11 - g01 * g10;
                vec![(m0 * g11 - g01 * m1) / det, (g00 * m1 - g10 * m0) / det]
            }
        };
        for (k, c) in coeffs.iter().enumerate() {
            for (w, b) in wz.iter_mut().zip(&basis[k]) {
                *w -= c * b;
            }
        }
        let norm: f64 = s.iter().zip(&wz).map(|(&si, w)| w * monomial(si)).sum();
        for w in &mut wz {
            *w /= norm;
        }

        let mut wu = vec![0.0; n + 1];
        for i in 1..=n {
            let hold = u_antideriv(s[i], tau) - u_antideriv(s[i - 1], tau);
            wu[i] = -cfg.alpha * hold / u_norm;
        }
        Ok(Self {
            z_weights: wz,
            u_weights: wu,
        })
    }

    pub fn len(&self) -> usize {
        self.z_weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.z_weights.is_empty()
    }

    pub fn apply(&self, window: &SignalWindow) -> Result<f64> {
        if window.len() != self.len() {
            return Err(Error::WindowNotFull {
                filled: window.len(),
                capacity: self.len(),
            });
        }
        Ok(window
            .iter()
            .zip(self.z_weights.iter().zip(&self.u_weights))
            .map(|(&(z, u), (wz, wu))| wz * z + wu * u)
            .sum())
    }
}

fn estimate_checked(window: &SignalWindow, cfg: &UltraLocalConfig, nu: u8) -> Result<f64> {
    if cfg.nu != nu {
        return Err(invalid(
            "nu",
            format!("estimator expects nu = {nu}, config has {}", cfg.nu),
        ));
    }
    if !window.is_full() || window.capacity() != cfg.intervals() + 1 {
        return Err(Error::WindowNotFull {
            filled: window.len(),
            capacity: cfg.intervals() + 1,
        });
    }
    EstimatorKernel::new(cfg)?.apply(window)
}

/// First-order estimate of `F` over a full window.
pub fn estimate_f_nu1(window: &SignalWindow, cfg: &UltraLocalConfig) -> Result<f64> {
    estimate_checked(window, cfg, 1)
}

/// Second-order estimate of `F` over a full window.
pub fn estimate_f_nu2(window: &SignalWindow, cfg: &UltraLocalConfig) -> Result<f64> {
    estimate_checked(window, cfg, 2)
}

/// Streaming estimator: owns the window and the precomputed kernel.
#[derive(Debug, Clone)]
pub struct AlgebraicEstimator {
    cfg: UltraLocalConfig,
    kernel: EstimatorKernel,
    window: SignalWindow,
}

impl AlgebraicEstimator {
    pub fn new(cfg: UltraLocalConfig) -> Result<Self> {
        let kernel = EstimatorKernel::new(&cfg)?;
        Ok(Self {
            window: SignalWindow::new(&cfg),
            kernel,
            cfg,
        })
    }

    pub fn config(&self) -> &UltraLocalConfig {
        &self.cfg
    }

    /// Records output `z` sampled now and the input held since the previous sample.
    pub fn push(&mut self, z: f64, u_held: f64) {
        self.window.push(z, u_held);
    }

    pub fn is_ready(&self) -> bool {
        self.window.is_full()
    }

    pub fn estimate(&self) -> Result<f64> {
        self.kernel.apply(&self.window)
    }

    pub fn reset(&mut self) {
        self.window.clear();
    }
}

/// Least-squares slope of a straight line fitted to uniformly spaced samples.
/// Exact on affine signals; for smooth signals it estimates the derivative at
/// the centre of the window.
pub fn derivative_estimate(samples: &[f64], fs: f64) -> Result<f64> {
    if samples.len() < DEFAULT_DIFF_SAMPLES {
        return Err(Error::InsufficientSamples {
            needed: DEFAULT_DIFF_SAMPLES,
            got: samples.len(),
        });
    }
    if !(fs.is_finite() && fs > 0.0) {
        return Err(invalid("fs_hz", "must be finite and > 0"));
    }
    Ok(ls_slope(samples.iter().copied(), samples.len()) * fs)
}

fn ls_slope(samples: impl Iterator<Item = f64>, n: usize) -> f64 {
    let centre = (n as f64 - 1.0) / 2.0;
    let mut num = 0.0;
    let mut den = 0.0;
    for (i, v) in samples.enumerate() {
        let k = i as f64 - centre;
        num += k * v;
        den += k * k;
    }
    num / den
}

/// Streaming least-squares differentiator over the last `n` samples.
#[derive(Debug, Clone)]
pub struct Differentiator {
    buf: VecDeque<f64>,
    n: usize,
    fs: f64,
}

impl Differentiator {
    pub fn new(n: usize, fs: f64) -> Result<Self> {
        if n < 2 {
            return Err(invalid("diff_samples", "need at least 2 samples"));
        }
        if !(fs.is_finite() && fs > 0.0) {
            return Err(invalid("fs_hz", "must be finite and > 0"));
        }
        Ok(Self {
            buf: VecDeque::with_capacity(n),
            n,
            fs,
        })
    }

    pub fn push(&mut self, v: f64) {
        if self.buf.len() == self.n {
            self.buf.pop_front();
        }
        self.buf.push_back(v);
    }

    /// Slope over the filled part of the buffer; zero until two samples exist.
    pub fn estimate(&self) -> f64 {
        if self.buf.len() < 2 {
            return 0.0;
        }
        ls_slope(self.buf.iter().copied(), self.buf.len()) * self.fs
    }

    pub fn reset(&mut self) {
        self.buf.clear();
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg(nu: u8, alpha: f64) -> UltraLocalConfig {
        UltraLocalConfig::new(nu, alpha, 0.25, 200.0).unwrap()
    }

    fn fill(
        cfg: &UltraLocalConfig,
        z: impl Fn(f64) -> f64,
        u: impl Fn(f64) -> f64,
    ) -> SignalWindow {
        let mut w = SignalWindow::new(cfg);
        let h = 1.0 / cfg.fs;
        for i in 0..w.capacity() {
            let t = i as f64 * h;
            w.push(z(t), u(t - h / 2.0));
        }
        w
    }

    #[test]
    fn window_sizing() {
        let c = cfg(1, 1.5);
        assert_eq!(c.intervals(), 50);
        assert_eq!(SignalWindow::new(&c).capacity(), 51);
        assert!((c.span() - 0.25).abs() < 1e-15);
    }

    #[test]
    fn invalid_configs() {
        assert!(UltraLocalConfig::new(3, 1.0, 0.25, 200.0).is_err());
        assert!(UltraLocalConfig::new(1, 0.0, 0.25, 200.0).is_err());
        assert!(UltraLocalConfig::new(1, 1.0, 0.005, 200.0).is_err());
        assert!(UltraLocalConfig::new(1, 1.0, 0.01, 200.0).is_ok());
        assert!(UltraLocalConfig::new(1, 1.0, 0.25, 0.0).is_err());
    }

    #[test]
    fn not_full_window_is_an_error() {
        let c = cfg(1, 1.5);
        let mut w = SignalWindow::new(&c);
        w.push(1.0, 0.0);
        assert_eq!(
            estimate_f_nu1(&w, &c).unwrap_err(),
            Error::WindowNotFull {
                filled: 1,
                capacity: 51
            }
        );
    }

    #[test]
    fn wrong_order_rejected() {
        let c = cfg(2, 1.95);
        let w = fill(&c, |_| 0.0, |_| 0.0);
        assert!(estimate_f_nu1(&w, &c).is_err());
    }

    #[test]
    fn nu1_constant_output_gives_zero() {
        let c = cfg(1, 1.5);
        let w = fill(&c, |_| 7.0, |_| 0.0);
        assert!(estimate_f_nu1(&w, &c).unwrap().abs() < 1e-12);
    }

    #[test]
    fn nu1_recovers_constant_f() {
        let c = cfg(1, 1.5);
        let w = fill(&c, |t| 1.0 + 3.7 * t, |_| 0.0);
        assert!((estimate_f_nu1(&w, &c).unwrap() - 3.7).abs() < 1e-10);
    }

    #[test]
    fn nu1_input_contribution_cancels() {
        // dz/dt = 2 + 1.5 * 1
        let c = cfg(1, 1.5);
        let w = fill(&c, |t| 3.5 * t, |_| 1.0);
        assert!((estimate_f_nu1(&w, &c).unwrap() - 2.0).abs() < 1e-10);
    }

    #[test]
    fn nu2_quadratic_pins_sign() {
        let c = cfg(2, 1.95);
        let w = fill(&c, |t| 4.0 * t * t / 2.0, |_| 0.0);
        assert!((estimate_f_nu2(&w, &c).unwrap() - 4.0).abs() < 1e-9);
    }

    #[test]
    fn nu2_linear_annihilated() {
        let c = cfg(2, 1.95);
        let w = fill(&c, |t| -3.0 + 11.0 * t, |_| 0.0);
        assert!(estimate_f_nu2(&w, &c).unwrap().abs() < 1e-9);
    }

    #[test]
    fn nu2_input_contribution_cancels() {
        // d2z/dt2 = 1 + 1.95 * 2
        let c = cfg(2, 1.95);
        let w = fill(&c, |t| 4.9 * t * t / 2.0 + 0.3 * t, |_| 2.0);
        assert!((estimate_f_nu2(&w, &c).unwrap() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn discrete_kernel_moments() {
        for nu in [1u8, 2] {
            let c = cfg(nu, 1.0);
            let k = EstimatorKernel::new(&c).unwrap();
            let h = 1.0 / c.fs;
            for p in 0..nu as i32 {
                let m: f64 = k
                    .z_weights
                    .iter()
                    .enumerate()
                    .map(|(i, w)| w * (i as f64 * h).powi(p))
                    .sum();
                assert!(m.abs() < 1e-9, "nu={nu} moment {p} = {m}");
            }
        }
    }

    #[test]
    fn derivative_of_constant_and_ramp() {
        assert_eq!(derivative_estimate(&[2.0; 5], 200.0).unwrap(), 0.0);
        let ramp: Vec<f64> = (0..5).map(|i| 3.0 * i as f64 / 200.0).collect();
        assert!((derivative_estimate(&ramp, 200.0).unwrap() - 3.0).abs() < 1e-9);
        assert!(matches!(
            derivative_estimate(&[1.0, 2.0], 200.0),
            Err(Error::InsufficientSamples { needed: 5, got: 2 })
        ));
    }

    #[test]
    fn derivative_of_sine() {
        let fs = 200.0;
        let n = 5; // 25 ms of samples
        let two_pi = std::f64::consts::TAU;
        let mut worst: f64 = 0.0;
        for k in 0..200 {
            let t0 = k as f64 * 0.005;
            let s: Vec<f64> = (0..n)
                .map(|i| (two_pi * (t0 + i as f64 / fs)).sin())
                .collect();
            let centre = t0 + (n as f64 - 1.0) / (2.0 * fs);
            let err = derivative_estimate(&s, fs).unwrap() - two_pi * (two_pi * centre).cos();
            worst = worst.max(err.abs());
        }
        assert!(worst < 0.02 * two_pi, "worst {worst}");
    }

    #[test]
    fn streaming_differentiator_matches_batch() {
        let mut d = Differentiator::new(5, 200.0).unwrap();
        let vals: Vec<f64> = (0..9).map(|i| (i as f64 * 0.3).sin()).collect();
        for v in &vals {
            d.push(*v);
        }
        let batch = derivative_estimate(&vals[4..], 200.0).unwrap();
        assert!((d.estimate() - batch).abs() < 1e-12);
    }
}
