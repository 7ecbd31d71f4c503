//! Sampled noise paths and the memory shift of the nonlinear equation.
//!
//! Paths are synthesized by the `homps` crate; this module only stores them
//! and provides the deterministic parts of the noise handling.

use alloc::vec::Vec;

use num_traits::Zero;

use crate::bath::BathMode;
use crate::{Error, Result, C64};

/// Samples of `Z*_t` on the half-step grid `t_j = j * dt_half`.
#[derive(Debug, Clone, PartialEq)]
pub struct NoisePath {
    pub dt_half: f64,
    pub values: Vec<C64>,
    /// Master seed of the run that produced the path.
    pub seed: u64,
    /// Counter-based substream within the master seed.
    pub stream: u64,
    pub bath_id: usize,
}

impl NoisePath {
    pub fn new(dt_half: f64, values: Vec<C64>, seed: u64, stream: u64, bath_id: usize) -> Self {
        Self { dt_half, values, seed, stream, bath_id }
    }

    /// Identically zero path covering `n` half steps.
    pub fn zero(dt_half: f64, n: usize, bath_id: usize) -> Self {
        Self::new(dt_half, alloc::vec![C64::zero(); n], 0, 0, bath_id)
    }

    /// Deterministic path `Z*_t = f(t)` sampled on the half-step grid.
    pub fn from_fn(dt_half: f64, n: usize, bath_id: usize, f: impl Fn(f64) -> C64) -> Self {
        Self::new(dt_half, (0..n).map(|j| f(j as f64 * dt_half)).collect(), 0, 0, bath_id)
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn t_final(&self) -> f64 {
        self.dt_half * self.values.len().saturating_sub(1) as f64
    }

    pub fn at(&self, index: usize) -> Result<C64> {
        self.values
            .get(index)
            .copied()
            .ok_or(Error::NoiseTooShort { bath: self.bath_id, index })
    }

    /// Samples at `t`, `t + dt/2` and `t + dt` for integrator step `step`.
    pub fn stage_values(&self, step: usize) -> Result<[C64; 3]> {
        let j = 2 * step;
        Ok([self.at(j)?, self.at(j + 1)?, self.at(j + 2)?])
    }
}

/// Accumulators `s_k` with `sum_k s_k(t) = int_0^t ds alpha*(t - s) <L^dagger>_s`
/// for an exponential correlation function.
#[derive(Debug, Clone, PartialEq)]
pub struct NoiseShift {
    pub s: Vec<C64>,
}

impl NoiseShift {
    pub fn new(modes: usize) -> Self {
        Self { s: alloc::vec![C64::zero(); modes] }
    }

    pub fn total(&self) -> C64 {
        self.s.iter().sum()
    }

    /// `ds_k/dt = -nu_k* s_k + d_k* <L^dagger>_t`.
    pub fn derivative(&self, modes: &[BathMode], l_avg: C64) -> Vec<C64> {
        self.s
            .iter()
            .zip(modes)
            .map(|(s, m)| -m.nu.conj() * s + m.d.conj() * l_avg)
            .collect()
    }

    /// `self + h * ds`.
    pub fn offset(&self, ds: &[C64], h: f64) -> NoiseShift {
        NoiseShift { s: self.s.iter().zip(ds).map(|(s, d)| s + d * h).collect() }
    }

    pub fn max_abs(&self) -> f64 {
        self.s.iter().map(|z| z.norm()).fold(0.0, f64::max)
    }
}

/// One classical RK4 step of the shift, given `<L^dagger>` at the four stages
/// of the surrounding integrator (`t`, `t + dt/2`, `t + dt/2`, `t + dt`).
pub fn advance_shift(shift: &NoiseShift, modes: &[BathMode], l_avg: [C64; 4], dt: f64) -> NoiseShift {
    let k1 = shift.derivative(modes, l_avg[0]);
    let k2 = shift.offset(&k1, 0.5 * dt).derivative(modes, l_avg[1]);
    let k3 = shift.offset(&k2, 0.5 * dt).derivative(modes, l_avg[2]);
    let k4 = shift.offset(&k3, dt).derivative(modes, l_avg[3]);
    combine_rk4(shift, [&k1, &k2, &k3, &k4], dt)
}

pub(crate) fn combine_rk4(shift: &NoiseShift, k: [&[C64]; 4], dt: f64) -> NoiseShift {
    let s = (0..shift.s.len())
        .map(|i| shift.s[i] + (k[0][i] + k[1][i] * 2.0 + k[2][i] * 2.0 + k[3][i]) * (dt / 6.0))
        .collect();
    NoiseShift { s }
}
