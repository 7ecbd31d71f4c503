//! Method-independent single-trajectory driver.

use alloc::vec::Vec;

use crate::linalg::Vector;
use crate::noise::NoisePath;
use crate::Result;

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct StepReport {
    pub max_bond: usize,
    pub trunc_err: f64,
}

/// A single stochastic trajectory of either propagation method.
pub trait Propagator {
    /// Advances by `dt`; step `n` reads noise samples `2n`, `2n + 1`, `2n + 2`.
    fn step(&mut self, noise: &[NoisePath], dt: f64) -> Result<StepReport>;
    /// Top hierarchy vector `psi^0` including any extracted scale factor.
    fn psi0(&self) -> Vector;
    fn time(&self) -> f64;
    /// Norm of the whole hierarchy vector.
    fn norm(&self) -> f64;
    fn max_bond(&self) -> usize;
}

/// Samples recorded on the output grid (every `record_every` steps,
/// starting at `t = 0`).
#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrajectoryRecord {
    pub times: Vec<f64>,
    pub psi0: Vec<Vector>,
    pub norm: Vec<f64>,
    pub max_bond: Vec<usize>,
    /// Truncation error accumulated since the previous record.
    pub trunc_err: Vec<f64>,
}

impl TrajectoryRecord {
    fn push<P: Propagator>(&mut self, p: &P, err: f64, bond: usize) {
        self.times.push(p.time());
        self.psi0.push(p.psi0());
        self.norm.push(p.norm());
        self.max_bond.push(bond);
        self.trunc_err.push(err);
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }
}

/// Propagates `steps` steps of size `dt` and records every `record_every`-th
/// state. The recorded bond dimension is the maximum seen since the previous
/// record.
pub fn run_trajectory<P: Propagator>(
    mut prop: P,
    noise: &[NoisePath],
    dt: f64,
    steps: usize,
    record_every: usize,
) -> Result<TrajectoryRecord> {
    let every = record_every.max(1);
    let mut rec = TrajectoryRecord::default();
    let b0 = prop.max_bond();
    rec.push(&prop, 0.0, b0);
    let mut err = 0.0;
    let mut bond = 0;
    for n in 1..=steps {
        let r = prop.step(noise, dt)?;
        err += r.trunc_err;
        bond = bond.max(r.max_bond);
        if n % every == 0 {
            rec.push(&prop, err, bond);
            err = 0.0;
            bond = 0;
        }
    }
    Ok(rec)
}
