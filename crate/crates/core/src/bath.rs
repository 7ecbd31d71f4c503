//! Spectral densities, the thermal bath correlation function and its
//! decomposition into exponentially decaying modes.
//!
//! With `hbar = k_B = 1` the correlation function of a bath with spectral
//! density `S` at temperature `T` is
//!
//! ```text
//! alpha(t) = 1/pi * int_0^inf dw S(w) [coth(w / 2T) cos(w t) - i sin(w t)]
//! ```
//!
//! and HOPS needs it as a finite sum `sum_k d_k exp(-nu_k t)`.

use alloc::vec::Vec;
use core::f64::consts::PI;

use num_traits::Zero;

use crate::quad::{self, Tolerance};
use crate::{Error, Result, C64};

/// One Lorentzian peak of strength `weight` at `center` with half-width `width`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Lorentzian {
    pub weight: f64,
    pub center: f64,
    pub width: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub enum SpectralDensity {
    /// `S(w) = eta * w * gamma / (w^2 + gamma^2)`.
    Debye { eta: f64, gamma: f64 },
    /// Antisymmetrized Lorentzian peaks,
    /// `S(w) = sum_i weight_i * width_i * [1/((w - c_i)^2 + width_i^2) - 1/((w + c_i)^2 + width_i^2)]`.
    LorentzianSum(Vec<Lorentzian>),
}

impl SpectralDensity {
    /// Two broadened peaks, a representative structured environment for the
    /// zero-temperature chain examples. The parameters are a library default,
    /// not fitted to any measured system.
    pub fn two_peak_default() -> Self {
        SpectralDensity::LorentzianSum(alloc::vec![
            Lorentzian { weight: 0.25, center: 1.0, width: 0.1 },
            Lorentzian { weight: 0.15, center: 2.5, width: 0.15 },
        ])
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            SpectralDensity::Debye { eta, gamma } => {
                if !(*eta >= 0.0 && eta.is_finite()) {
                    return Err(Error::InvalidParameter(alloc::format!("Debye eta must be >= 0, got {eta}")));
                }
                if !(*gamma > 0.0 && gamma.is_finite()) {
                    return Err(Error::InvalidParameter(alloc::format!("Debye gamma must be > 0, got {gamma}")));
                }
            }
            SpectralDensity::LorentzianSum(peaks) => {
                if peaks.is_empty() {
                    return Err(Error::InvalidParameter("Lorentzian sum needs at least one peak".into()));
                }
                for p in peaks {
                    if !(p.weight >= 0.0 && p.center > 0.0 && p.width > 0.0)
                        || !(p.weight.is_finite() && p.center.is_finite() && p.width.is_finite())
                    {
                        return Err(Error::InvalidParameter(alloc::format!(
                            "Lorentzian peak needs weight >= 0, center > 0, width > 0, got {p:?}"
                        )));
                    }
                }
            }
        }
        Ok(())
    }

    /// `S(w)`; the formulas are odd in `w`, so negative frequencies give the
    /// odd extension `S(-w) = -S(w)`.
    pub fn evaluate(&self, w: f64) -> f64 {
        match self {
            SpectralDensity::Debye { eta, gamma } => eta * w * gamma / (w * w + gamma * gamma),
            SpectralDensity::LorentzianSum(peaks) => peaks
                .iter()
                .map(|p| {
                    let g2 = p.width * p.width;
                    p.weight * p.width * (1.0 / ((w - p.center).powi(2) + g2) - 1.0 / ((w + p.center).powi(2) + g2))
                })
                .sum(),
        }
    }

    /// `lim_{w -> 0} S(w) / w`.
    pub fn slope_at_zero(&self) -> f64 {
        match self {
            SpectralDensity::Debye { eta, gamma } => eta / gamma,
            SpectralDensity::LorentzianSum(peaks) => peaks
                .iter()
                .map(|p| {
                    let q = p.center * p.center + p.width * p.width;
                    4.0 * p.weight * p.width * p.center / (q * q)
                })
                .sum(),
        }
    }

    /// Upper frequency of the correlation-function quadrature and of the noise
    /// spectrum: 50 times the largest frequency scale of the density.
    pub fn cutoff(&self) -> f64 {
        match self {
            SpectralDensity::Debye { gamma, .. } => 50.0 * gamma,
            SpectralDensity::LorentzianSum(peaks) => {
                50.0 * peaks.iter().map(|p| p.center.max(p.width)).fold(0.0, f64::max)
            }
        }
    }

    /// Smallest intrinsic decay rate of the density (ignores temperature).
    pub fn slowest_rate(&self) -> f64 {
        match self {
            SpectralDensity::Debye { gamma, .. } => *gamma,
            SpectralDensity::LorentzianSum(peaks) => peaks.iter().map(|p| p.width).fold(f64::INFINITY, f64::min),
        }
    }

    pub fn is_zero(&self) -> bool {
        match self {
            SpectralDensity::Debye { eta, .. } => *eta == 0.0,
            SpectralDensity::LorentzianSum(peaks) => peaks.iter().all(|p| p.weight == 0.0),
        }
    }
}

/// A spectral density at a temperature; the bath without its mode table.
#[derive(Debug, Clone, PartialEq)]
pub struct ThermalBath {
    pub sd: SpectralDensity,
    pub temperature: f64,
}

/// One exponential term `d * exp(-nu t)` of the correlation function.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BathMode {
    pub d: C64,
    pub nu: C64,
}

impl BathMode {
    pub fn new(d: C64, nu: C64) -> Self {
        Self { d, nu }
    }

    pub fn eval(&self, t: f64) -> C64 {
        self.d * (-self.nu * t).exp()
    }
}

pub fn evaluate_modes(modes: &[BathMode], t: f64) -> C64 {
    modes.iter().map(|m| m.eval(t)).sum()
}

/// Maximum deviation of a mode sum from the quadrature correlation function
/// on a uniform grid over `[0, t_max]`.
#[derive(Debug, Clone, PartialEq)]
pub struct FitReport {
    pub t_max: f64,
    pub samples: usize,
    pub max_abs_error: f64,
    pub worst_time: f64,
    /// `|alpha(0)|` from quadrature.
    pub alpha0_abs: f64,
    /// `|sum_k d_k - alpha(0)|`.
    pub error_at_zero: f64,
}

impl FitReport {
    pub fn relative_error(&self) -> f64 {
        if self.alpha0_abs > 0.0 {
            self.max_abs_error / self.alpha0_abs
        } else {
            self.max_abs_error
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FitOptions {
    /// Defaults to `10 / min_k Re(nu_k)`.
    pub t_max: Option<f64>,
    pub samples: usize,
    /// Absolute tolerance on the maximum deviation; `None` accepts any fit.
    pub tolerance: Option<f64>,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self { t_max: None, samples: 401, tolerance: None }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Decomposition {
    pub modes: Vec<BathMode>,
    pub report: FitReport,
}

/// A thermal bath together with the modes used to build the hierarchy.
#[derive(Debug, Clone, PartialEq)]
pub struct BathSpec {
    pub thermal: ThermalBath,
    pub modes: Vec<BathMode>,
}

impl BathSpec {
    pub fn new(thermal: ThermalBath, modes: Vec<BathMode>) -> Self {
        Self { thermal, modes }
    }

    /// Decomposes `thermal` into `k` modes and attaches them.
    pub fn decomposed(thermal: ThermalBath, k: usize) -> Result<Self> {
        let modes = thermal.modes(k)?;
        Ok(Self { thermal, modes })
    }
}

impl ThermalBath {
    pub fn new(sd: SpectralDensity, temperature: f64) -> Self {
        Self { sd, temperature }
    }

    pub fn validate(&self) -> Result<()> {
        self.sd.validate()?;
        if !(self.temperature >= 0.0 && self.temperature.is_finite()) {
            return Err(Error::InvalidParameter(alloc::format!(
                "temperature must be >= 0, got {}",
                self.temperature
            )));
        }
        Ok(())
    }

    /// `S(w) coth(w / 2T)`, continuous through `w = 0`. At `T = 0` the
    /// hyperbolic factor is the sign function.
    pub fn thermal_weight(&self, w: f64) -> f64 {
        let s = self.sd.evaluate(w);
        if self.temperature == 0.0 {
            return s.abs();
        }
        let x = 0.5 * w / self.temperature;
        if x.abs() < 1e-8 {
            2.0 * self.temperature * self.sd.slope_at_zero()
        } else {
            s / x.tanh()
        }
    }

    /// Full-line spectrum `W` whose transform `1/pi int dw W(w) e^{-i w t}`
    /// is `alpha(t)`: `W = S (coth(w/2T) + 1) / 2`, and `S(w) 1{w > 0}` at
    /// zero temperature. Zero beyond the quadrature cutoff.
    pub fn noise_spectrum(&self, w: f64) -> f64 {
        if w.abs() > self.sd.cutoff() {
            return 0.0;
        }
        if self.temperature == 0.0 {
            return if w > 0.0 { self.sd.evaluate(w) } else { 0.0 };
        }
        (0.5 * (self.thermal_weight(w) + self.sd.evaluate(w))).max(0.0)
    }

    /// Slowest decay scale of `alpha(t)`, including the first Matsubara rate.
    pub fn slowest_rate(&self) -> f64 {
        let r = self.sd.slowest_rate();
        if self.temperature > 0.0 {
            r.min(2.0 * PI * self.temperature)
        } else {
            r
        }
    }

    /// Bath correlation function by adaptive quadrature over `[0, w_cut]` with
    /// `w_cut` from [`SpectralDensity::cutoff`]. Valid for negative `t` too,
    /// where it returns `alpha(-t) = alpha(t)*`.
    pub fn correlation(&self, t: f64) -> Result<C64> {
        if self.sd.is_zero() {
            return Ok(C64::zero());
        }
        let cut = self.sd.cutoff();
        let panels = 16 + (cut * t.abs() / PI).ceil() as usize;
        let est = quad::integrate(
            |w| {
                let (s, c) = (w * t).sin_cos();
                C64::new(self.thermal_weight(w) * c, -self.sd.evaluate(w) * s)
            },
            0.0,
            cut,
            panels,
            Tolerance { abs: 1e-12, rel: 1e-10, max_intervals: 400_000 },
        )?;
        Ok(est.value / PI)
    }

    /// Analytic exponential decomposition: Debye poles plus `k - 1` Matsubara
    /// terms at `T > 0`, or one pole term per Lorentzian peak at `T = 0`.
    pub fn modes(&self, k: usize) -> Result<Vec<BathMode>> {
        self.validate()?;
        if k == 0 {
            return Err(Error::InvalidParameter("mode count must be >= 1".into()));
        }
        match &self.sd {
            SpectralDensity::Debye { eta, gamma } => {
                if self.temperature == 0.0 {
                    return Err(Error::UnsupportedDecomposition(
                        "Matsubara decomposition of a Debye bath needs T > 0",
                    ));
                }
                let beta = 1.0 / self.temperature;
                let half = 0.5 * beta * gamma;
                let sin = half.sin();
                if sin == 0.0 {
                    return Err(Error::UnsupportedDecomposition("Debye pole coincides with a Matsubara frequency"));
                }
                let cot = half.cos() / sin;
                let mut modes = Vec::with_capacity(k);
                modes.push(BathMode::new(C64::new(0.5 * eta * gamma * cot, -0.5 * eta * gamma), C64::new(*gamma, 0.0)));
                for m in 1..k {
                    let nu = 2.0 * PI * m as f64 / beta;
                    let den = nu * nu - gamma * gamma;
                    if den.abs() <= 1e-12 * gamma * gamma {
                        return Err(Error::UnsupportedDecomposition("Debye pole coincides with a Matsubara frequency"));
                    }
                    let d = 2.0 * eta * gamma / beta * nu / den;
                    modes.push(BathMode::new(C64::new(d, 0.0), C64::new(nu, 0.0)));
                }
                Ok(modes)
            }
            SpectralDensity::LorentzianSum(peaks) => {
                if self.temperature != 0.0 {
                    return Err(Error::UnsupportedDecomposition(
                        "Lorentzian pole decomposition is only provided at T = 0",
                    ));
                }
                if k < peaks.len() {
                    return Err(Error::InvalidParameter(alloc::format!(
                        "a sum of {} Lorentzians needs at least {} modes, got {k}",
                        peaks.len(),
                        peaks.len()
                    )));
                }
                Ok(peaks
                    .iter()
                    .map(|p| BathMode::new(C64::new(p.weight, 0.0), C64::new(p.width, p.center)))
                    .collect())
            }
        }
    }

    /// Mode decomposition together with its deviation from quadrature.
    pub fn decompose(&self, k: usize, opts: FitOptions) -> Result<Decomposition> {
        let modes = self.modes(k)?;
        let report = self.fit_report(&modes, opts)?;
        if let Some(tol) = opts.tolerance {
            if report.max_abs_error > tol {
                return Err(Error::FitTolerance { modes: modes.len(), requested: tol, achieved: report.max_abs_error });
            }
        }
        Ok(Decomposition { modes, report })
    }

    pub fn fit_report(&self, modes: &[BathMode], opts: FitOptions) -> Result<FitReport> {
        let t_max = opts.t_max.unwrap_or_else(|| {
            let slow = modes.iter().map(|m| m.nu.re).fold(f64::INFINITY, f64::min);
            if slow.is_finite() && slow > 0.0 {
                10.0 / slow
            } else {
                10.0
            }
        });
        let samples = opts.samples.max(2);
        let alpha0 = self.correlation(0.0)?;
        let mut worst = 0.0;
        let mut worst_time = 0.0;
        for i in 0..samples {
            let t = t_max * i as f64 / (samples - 1) as f64;
            let exact = if i == 0 { alpha0 } else { self.correlation(t)? };
            let err = (evaluate_modes(modes, t) - exact).norm();
            if err > worst {
                worst = err;
                worst_time = t;
            }
        }
        Ok(FitReport {
            t_max,
            samples,
            max_abs_error: worst,
            worst_time,
            alpha0_abs: alpha0.norm(),
            error_at_zero: (evaluate_modes(modes, 0.0) - alpha0).norm(),
        })
    }
}
