//! Frequency-space synthesis of the complex Gaussian noise `Z_t`.
//!
//! On a grid `w_j = j dw` (`j` wrapping to negative frequencies past `N/2`)
//! the samples `Z_t = sum_j sqrt(W(w_j) dw / pi) xi_j e^{-i w_j t}` have
//! `E[Z_t Z_s*] = 1/pi sum_j W(w_j) e^{-i w_j (t - s)} dw`, a periodic
//! Riemann sum of the bath correlation function.

use std::f64::consts::PI;
use std::io::Write;
use std::path::Path;
use std::sync::Arc;

use homps_core::bath::ThermalBath;
use homps_core::noise::NoisePath;
use homps_core::C64;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use rand_distr::{Distribution, StandardNormal};
use rustfft::{Fft, FftPlanner};

use crate::error::{DriverError, Result};

/// Substream of trajectory `trajectory`, bath `bath` under one master seed.
pub fn stream_id(trajectory: u64, bath: usize) -> u64 {
    (trajectory << 16) | (bath as u64 & 0xffff)
}

/// Reusable generator for one bath on a fixed half-step grid.
pub struct NoiseGenerator {
    dt_half: f64,
    samples: usize,
    bath_id: usize,
    amplitude: Vec<f64>,
    fft: Arc<dyn Fft<f64>>,
}

impl std::fmt::Debug for NoiseGenerator {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("NoiseGenerator")
            .field("dt_half", &self.dt_half)
            .field("samples", &self.samples)
            .field("fft_len", &self.amplitude.len())
            .finish()
    }
}

impl NoiseGenerator {
    /// Period and grid sized for `t_final`: the FFT period is at least
    /// `2 (t_final + 10 / slowest_rate)`, rounded up to a power of two.
    pub fn new(bath: &ThermalBath, t_final: f64, dt_half: f64, bath_id: usize) -> Result<Self> {
        let period = required_period(bath, t_final);
        let n = ((period / dt_half).ceil() as usize).max(2).next_power_of_two();
        Self::with_fft_len(bath, t_final, dt_half, bath_id, n)
    }

    /// Explicit FFT length; fails if the grid aliases the spectrum or the
    /// correlation function.
    pub fn with_fft_len(bath: &ThermalBath, t_final: f64, dt_half: f64, bath_id: usize, n: usize) -> Result<Self> {
        if !(dt_half > 0.0 && dt_half.is_finite()) {
            return Err(DriverError::config("dt", "time step must be positive"));
        }
        if !(t_final >= 0.0 && t_final.is_finite()) {
            return Err(DriverError::config("t_final", "must be non-negative"));
        }
        bath.validate().map_err(|e| crate::error::setup_error("bath", e))?;
        let samples = homps_core::homps::steps_for(t_final, 2.0 * dt_half) * 2 + 1;
        let nyquist = PI / dt_half;
        let cutoff = bath.sd.cutoff();
        if nyquist < cutoff {
            return Err(DriverError::config(
                "dt",
                format!("noise grid aliases: Nyquist frequency {nyquist:.4e} is below the spectral cutoff {cutoff:.4e}"),
            ));
        }
        let period = n as f64 * dt_half;
        let need = required_period(bath, t_final);
        if period < need || n < samples {
            return Err(DriverError::config(
                "t_final",
                format!("noise grid aliases: period {period:.4e} is shorter than the required {need:.4e}"),
            ));
        }
        let dw = 2.0 * PI / period;
        let amplitude = (0..n)
            .map(|j| {
                let k = if j <= n / 2 { j as f64 } else { j as f64 - n as f64 };
                (bath.noise_spectrum(k * dw) * dw / PI).max(0.0).sqrt()
            })
            .collect();
        let fft = FftPlanner::new().plan_fft_forward(n);
        Ok(Self { dt_half, samples, bath_id, amplitude, fft })
    }

    pub fn fft_len(&self) -> usize {
        self.amplitude.len()
    }

    pub fn samples(&self) -> usize {
        self.samples
    }

    pub fn dt_half(&self) -> f64 {
        self.dt_half
    }

    pub fn is_zero(&self) -> bool {
        self.amplitude.iter().all(|&a| a == 0.0)
    }

    /// One path of `Z*_t` for the given trajectory. Bit-reproducible in
    /// `(seed, trajectory, bath_id)`.
    pub fn generate(&self, seed: u64, trajectory: u64) -> NoisePath {
        let stream = stream_id(trajectory, self.bath_id);
        let z = self.sample(seed, stream);
        let values = z[..self.samples].iter().map(|v| v.conj()).collect();
        NoisePath::new(self.dt_half, values, seed, stream, self.bath_id)
    }

    /// The whole periodic sample of `Z_t` (not conjugated).
    pub fn sample(&self, seed: u64, stream: u64) -> Vec<C64> {
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        rng.set_stream(stream);
        let s = std::f64::consts::FRAC_1_SQRT_2;
        let mut buf: Vec<C64> = self
            .amplitude
            .iter()
            .map(|&a| {
                let re: f64 = StandardNormal.sample(&mut rng);
                let im: f64 = StandardNormal.sample(&mut rng);
                C64::new(re * s, im * s) * a
            })
            .collect();
        if !self.is_zero() {
            self.fft.process(&mut buf);
        }
        buf
    }

    /// Correlation `E[Z_t Z_0*]` implied by the discrete grid.
    pub fn grid_correlation(&self, t: f64) -> C64 {
        let n = self.amplitude.len();
        let dw = 2.0 * PI / (n as f64 * self.dt_half);
        self.amplitude
            .iter()
            .enumerate()
            .map(|(j, a)| {
                let k = if j <= n / 2 { j as f64 } else { j as f64 - n as f64 };
                C64::from_polar(a * a, -k * dw * t)
            })
            .sum()
    }
}

fn required_period(bath: &ThermalBath, t_final: f64) -> f64 {
    let rate = bath.slowest_rate();
    let memory = if rate.is_finite() && rate > 0.0 { 10.0 / rate } else { 0.0 };
    2.0 * (t_final + memory)
}

/// Writes `t, Re Z*, Im Z*` rows.
pub fn write_csv(path: &Path, noise: &NoisePath) -> Result<()> {
    let file = std::fs::File::create(path).map_err(|e| DriverError::io(path, e))?;
    let mut w = std::io::BufWriter::new(file);
    let mut rows = || -> std::io::Result<()> {
        writeln!(w, "t,re_zstar,im_zstar")?;
        for (j, z) in noise.values.iter().enumerate() {
            writeln!(w, "{:e},{:e},{:e}", j as f64 * noise.dt_half, z.re, z.im)?;
        }
        w.flush()
    };
    rows().map_err(|e| DriverError::io(path, e))
}

/// Mean and standard error of the real and imaginary parts.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct ComplexEstimate {
    pub mean: C64,
    pub se_re: f64,
    pub se_im: f64,
}

impl ComplexEstimate {
    /// Largest component-wise deviation from `target` in standard errors.
    pub fn z_score(&self, target: C64) -> f64 {
        let z = |d: f64, se: f64| {
            if se > 0.0 {
                d.abs() / se
            } else if d == 0.0 {
                0.0
            } else {
                f64::INFINITY
            }
        };
        z(self.mean.re - target.re, self.se_re).max(z(self.mean.im - target.im, self.se_im))
    }
}

#[derive(Debug, Clone, Default)]
struct Accum {
    n: u64,
    sum: C64,
    sq_re: f64,
    sq_im: f64,
}

impl Accum {
    fn push(&mut self, z: C64) {
        self.n += 1;
        self.sum += z;
        self.sq_re += z.re * z.re;
        self.sq_im += z.im * z.im;
    }

    fn estimate(&self) -> ComplexEstimate {
        let n = self.n as f64;
        let mean = self.sum / n;
        let var = |sq: f64, m: f64| ((sq / n - m * m) * n / (n - 1.0).max(1.0)).max(0.0);
        ComplexEstimate {
            mean,
            se_re: (var(self.sq_re, mean.re) / n).sqrt(),
            se_im: (var(self.sq_im, mean.im) / n).sqrt(),
        }
    }
}

/// Sample statistics at one probe time.
#[derive(Debug, Clone, PartialEq)]
pub struct ProbeStats {
    pub t: f64,
    pub reference: C64,
    /// `E[Z_t]`.
    pub mean: ComplexEstimate,
    /// `E[Z_t Z_0*]`.
    pub correlation: ComplexEstimate,
    /// `E[Z_t Z_0]`.
    pub pseudo: ComplexEstimate,
}

impl ProbeStats {
    pub fn worst_z(&self) -> f64 {
        self.correlation
            .z_score(self.reference)
            .max(self.pseudo.z_score(C64::new(0.0, 0.0)))
            .max(self.mean.z_score(C64::new(0.0, 0.0)))
    }
}

/// Monte-Carlo check of the generated statistics against `reference(t)`.
/// Probe times are rounded to the half-step grid.
pub fn check_statistics(
    generator: &NoiseGenerator,
    seed: u64,
    paths: u64,
    probes: &[f64],
    reference: impl Fn(f64) -> Result<C64>,
) -> Result<Vec<ProbeStats>> {
    let idx: Vec<usize> = probes.iter().map(|t| (t / generator.dt_half).round() as usize).collect();
    if let Some(&bad) = idx.iter().find(|&&i| i >= generator.fft_len()) {
        return Err(DriverError::config("probes", format!("probe index {bad} lies beyond the noise grid")));
    }
    let mut acc = vec![(Accum::default(), Accum::default(), Accum::default()); idx.len()];
    for p in 0..paths {
        let z = generator.sample(seed, stream_id(p, generator.bath_id));
        let z0 = z[0];
        for (a, &i) in acc.iter_mut().zip(&idx) {
            a.0.push(z[i]);
            a.1.push(z[i] * z0.conj());
            a.2.push(z[i] * z0);
        }
    }
    idx.iter()
        .zip(acc)
        .map(|(&i, (m, c, p))| {
            let t = i as f64 * generator.dt_half;
            Ok(ProbeStats { t, reference: reference(t)?, mean: m.estimate(), correlation: c.estimate(), pseudo: p.estimate() })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use homps_core::bath::SpectralDensity;

    fn bath(eta: f64) -> ThermalBath {
        ThermalBath::new(SpectralDensity::Debye { eta, gamma: 0.25 }, 2.0)
    }

    #[test]
    fn deterministic_in_seed_and_stream() {
        let g = NoiseGenerator::new(&bath(0.5), 2.0, 0.05, 0).unwrap();
        let a = g.generate(7, 3);
        let b = g.generate(7, 3);
        assert_eq!(a, b);
        assert_eq!(a.len(), 41);
        assert_ne!(a.values, g.generate(7, 4).values);
        assert_ne!(a.values, g.generate(8, 3).values);
    }

    #[test]
    fn zero_spectrum_gives_zero_noise() {
        let g = NoiseGenerator::new(&bath(0.0), 2.0, 0.05, 0).unwrap();
        assert!(g.generate(1, 0).values.iter().all(|z| *z == C64::new(0.0, 0.0)));
    }

    #[test]
    fn aliasing_is_rejected() {
        // cutoff 12.5 needs dt_half <= pi / 12.5
        assert!(NoiseGenerator::new(&bath(0.5), 2.0, 0.3, 0).is_err());
        assert!(NoiseGenerator::with_fft_len(&bath(0.5), 2.0, 0.05, 0, 256).is_err());
        assert!(NoiseGenerator::with_fft_len(&bath(0.5), 2.0, 0.05, 0, 4096).is_ok());
    }

    #[test]
    fn grid_correlation_matches_quadrature() {
        let b = bath(0.5);
        let g = NoiseGenerator::new(&b, 4.0, 0.05, 0).unwrap();
        for t in [0.0, 1.0, 2.0, 4.0] {
            let want = b.correlation(t).unwrap();
            assert!((g.grid_correlation(t) - want).norm() < 1e-3 * want.norm().max(1.0), "t = {t}");
        }
    }

    #[test]
    fn statistics_of_a_small_ensemble() {
        let b = bath(0.5);
        let g = NoiseGenerator::new(&b, 2.0, 0.05, 0).unwrap();
        let stats = check_statistics(&g, 11, 4000, &[0.0, 1.0], |t| Ok(g.grid_correlation(t))).unwrap();
        for s in &stats {
            assert!(s.worst_z() < 5.0, "{s:?}");
        }
    }

    #[test]
    fn stream_ids_separate_baths() {
        assert_ne!(stream_id(1, 0), stream_id(0, 1));
        assert_eq!(stream_id(2, 3), (2 << 16) | 3);
    }
}
