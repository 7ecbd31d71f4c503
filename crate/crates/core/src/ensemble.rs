//! Streaming reduction of trajectories into density matrices and
//! observables.

use alloc::string::String;
use alloc::vec::Vec;

use num_traits::Zero;

use crate::linalg::{identity, kron, Mat, Vector};
use crate::models::sigma_z;
use crate::trajectory::TrajectoryRecord;
use crate::{Error, Result, C64};

/// Norm below which a nonlinear trajectory counts as dead.
pub const ZERO_NORM: f64 = 1e-12;

/// Running mean and variance of a real sample.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct Welford {
    pub n: u64,
    pub mean: f64,
    pub m2: f64,
}

impl Welford {
    pub fn push(&mut self, x: f64) {
        self.n += 1;
        let d = x - self.mean;
        self.mean += d / self.n as f64;
        self.m2 += d * (x - self.mean);
    }

    pub fn merge(&mut self, other: &Welford) {
        if other.n == 0 {
            return;
        }
        if self.n == 0 {
            *self = *other;
            return;
        }
        let n = self.n + other.n;
        let d = other.mean - self.mean;
        self.mean += d * other.n as f64 / n as f64;
        self.m2 += other.m2 + d * d * (self.n as f64 * other.n as f64) / n as f64;
        self.n = n;
    }

    /// Unbiased sample variance; zero below two samples.
    pub fn variance(&self) -> f64 {
        if self.n < 2 {
            0.0
        } else {
            self.m2 / (self.n - 1) as f64
        }
    }

    pub fn std_err(&self) -> f64 {
        if self.n == 0 {
            0.0
        } else {
            (self.variance() / self.n as f64).sqrt()
        }
    }
}

/// Running mean and covariance of a complex sample.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct ComplexWelford {
    pub n: u64,
    pub mean: C64,
    pub m2_re: f64,
    pub m2_im: f64,
    pub c_reim: f64,
}

impl ComplexWelford {
    pub fn push(&mut self, z: C64) {
        self.n += 1;
        let d = z - self.mean;
        self.mean += d / self.n as f64;
        let e = z - self.mean;
        self.m2_re += d.re * e.re;
        self.m2_im += d.im * e.im;
        self.c_reim += d.re * e.im;
    }

    pub fn merge(&mut self, other: &ComplexWelford) {
        if other.n == 0 {
            return;
        }
        if self.n == 0 {
            *self = *other;
            return;
        }
        let n = self.n + other.n;
        let d = other.mean - self.mean;
        let w = (self.n as f64 * other.n as f64) / n as f64;
        self.mean += d * (other.n as f64 / n as f64);
        self.m2_re += other.m2_re + d.re * d.re * w;
        self.m2_im += other.m2_im + d.im * d.im * w;
        self.c_reim += other.c_reim + d.re * d.im * w;
        self.n = n;
    }

    /// Standard error of `|mean|` by linear error propagation.
    pub fn abs_std_err(&self) -> f64 {
        let a = self.mean.norm();
        if self.n < 2 || a == 0.0 {
            return 0.0;
        }
        let k = 1.0 / ((self.n - 1) as f64 * self.n as f64);
        let (x, y) = (self.mean.re / a, self.mean.im / a);
        let v = (x * x * self.m2_re + y * y * self.m2_im + 2.0 * x * y * self.c_reim) * k;
        v.max(0.0).sqrt()
    }

    pub fn re_std_err(&self) -> f64 {
        if self.n < 2 {
            0.0
        } else {
            (self.m2_re / ((self.n - 1) as f64 * self.n as f64)).sqrt()
        }
    }

    pub fn im_std_err(&self) -> f64 {
        if self.n < 2 {
            0.0
        } else {
            (self.m2_im / ((self.n - 1) as f64 * self.n as f64)).sqrt()
        }
    }
}

/// Quantities reported per output time.
#[derive(Debug, Clone, PartialEq)]
pub enum Observable {
    /// `rho_ii` in the product basis.
    Population(usize),
    /// `|0><0| - |1><1|` on one system site.
    SigmaZ(usize),
    /// `a^dag a = |1><1|` on one system site.
    Occupation(usize),
    /// `|rho_ij|`.
    Coherence(usize, usize),
    /// Mean and maximum of the recorded bond dimension.
    BondStats,
}

impl Observable {
    /// Column names; `BondStats` is emitted separately.
    pub fn label(&self) -> Option<String> {
        match *self {
            Observable::Population(i) => Some(alloc::format!("pop_{i}")),
            Observable::SigmaZ(s) => Some(alloc::format!("sigma_z_{s}")),
            Observable::Occupation(s) => Some(alloc::format!("n_{s}")),
            Observable::Coherence(i, j) => Some(alloc::format!("abs_rho_{i}_{j}")),
            Observable::BondStats => None,
        }
    }
}

#[derive(Debug, Clone)]
enum Evaluator {
    Linear(Mat),
    Coherence(usize, usize),
}

/// Per-time accumulators over an ordered stream of trajectories.
#[derive(Debug, Clone)]
pub struct EnsembleAccumulator {
    pub dim: usize,
    pub nonlinear: bool,
    pub times: Vec<f64>,
    pub observables: Vec<Observable>,
    evaluators: Vec<Evaluator>,
    /// Sum of the (normalized in the nonlinear case) outer products.
    rho_sum: Vec<Mat>,
    trace: Vec<Welford>,
    values: Vec<Vec<ComplexWelford>>,
    bond_sum: Vec<u64>,
    bond_max: Vec<usize>,
    pub accepted: u64,
    pub excluded: u64,
    pub failed: u64,
}

impl EnsembleAccumulator {
    pub fn new(site_dims: &[usize], times: Vec<f64>, observables: Vec<Observable>, nonlinear: bool) -> Result<Self> {
        let dim: usize = site_dims.iter().product();
        let embed = |site: usize, op: &Mat| {
            let mut out = Mat::identity(1, 1);
            for (s, &d) in site_dims.iter().enumerate() {
                out = if s == site { kron(&out, op) } else { kron(&out, &identity(d)) };
            }
            out
        };
        let mut evaluators = Vec::new();
        for o in &observables {
            let ev = match *o {
                Observable::Population(i) if i < dim => {
                    let mut m = Mat::zeros(dim, dim);
                    m[(i, i)] = C64::new(1.0, 0.0);
                    Evaluator::Linear(m)
                }
                Observable::SigmaZ(s) if site_dims.get(s) == Some(&2) => Evaluator::Linear(embed(s, &sigma_z())),
                Observable::Occupation(s) if site_dims.get(s) == Some(&2) => {
                    Evaluator::Linear(embed(s, &crate::models::number()))
                }
                Observable::Coherence(i, j) if i < dim && j < dim => Evaluator::Coherence(i, j),
                Observable::BondStats => continue,
                _ => return Err(Error::InvalidParameter(alloc::format!("observable {o:?} does not fit the system"))),
            };
            evaluators.push(ev);
        }
        let n = times.len();
        Ok(Self {
            dim,
            nonlinear,
            evaluators,
            rho_sum: alloc::vec![Mat::zeros(dim, dim); n],
            trace: alloc::vec![Welford::default(); n],
            values: alloc::vec![alloc::vec![ComplexWelford::default(); observables.iter().filter(|o| o.label().is_some()).count()]; n],
            bond_sum: alloc::vec![0; n],
            bond_max: alloc::vec![0; n],
            times,
            observables,
            accepted: 0,
            excluded: 0,
            failed: 0,
        })
    }

    /// Adds one trajectory. Returns `false` if it was excluded for a dead top
    /// vector (nonlinear runs only).
    pub fn push(&mut self, rec: &TrajectoryRecord) -> Result<bool> {
        if rec.len() != self.times.len() {
            return Err(Error::InvalidParameter("trajectory record does not match the output grid".into()));
        }
        if self.nonlinear && rec.psi0.iter().any(|p| p.norm() < ZERO_NORM) {
            self.excluded += 1;
            return Ok(false);
        }
        for (t, psi) in rec.psi0.iter().enumerate() {
            if psi.len() != self.dim {
                return Err(Error::DimensionMismatch { site: 0, detail: "top vector dimension".into() });
            }
            let mut rho = psi * psi.adjoint();
            if self.nonlinear {
                rho /= C64::new(psi.norm_squared(), 0.0);
            }
            let tr: f64 = (0..self.dim).map(|i| rho[(i, i)].re).sum();
            self.trace[t].push(tr);
            for (acc, ev) in self.values[t].iter_mut().zip(&self.evaluators) {
                acc.push(evaluate(ev, &rho));
            }
            self.rho_sum[t] += rho;
            self.bond_sum[t] += rec.max_bond[t] as u64;
            self.bond_max[t] = self.bond_max[t].max(rec.max_bond[t]);
        }
        self.accepted += 1;
        Ok(true)
    }

    pub fn record_failure(&mut self) {
        self.failed += 1;
    }

    /// Trace-normalized ensemble density matrix at output index `t`.
    pub fn rho(&self, t: usize) -> Mat {
        let tr: f64 = (0..self.dim).map(|i| self.rho_sum[t][(i, i)].re).sum();
        if tr == 0.0 {
            return self.rho_sum[t].clone();
        }
        &self.rho_sum[t] / C64::new(tr, 0.0)
    }

    /// Mean trace before normalization.
    pub fn raw_trace(&self, t: usize) -> f64 {
        self.trace[t].mean
    }

    pub fn trace_std_err(&self, t: usize) -> f64 {
        self.trace[t].std_err()
    }

    /// Observable value and standard error. Values are divided by the mean
    /// trace; the error ignores fluctuations of the trace itself, which
    /// vanish in the nonlinear equation.
    pub fn observable(&self, t: usize, index: usize) -> (f64, f64) {
        let tr = self.trace[t].mean;
        let acc = &self.values[t][index];
        let scale = if tr != 0.0 { 1.0 / tr } else { 1.0 };
        match self.evaluators[index] {
            Evaluator::Linear(_) => (acc.mean.re * scale, acc.re_std_err() * scale),
            Evaluator::Coherence(..) => (acc.mean.norm() * scale, acc.abs_std_err() * scale),
        }
    }

    pub fn complex_moments(&self, t: usize, index: usize) -> &ComplexWelford {
        &self.values[t][index]
    }

    pub fn bond_mean(&self, t: usize) -> f64 {
        if self.accepted == 0 {
            0.0
        } else {
            self.bond_sum[t] as f64 / self.accepted as f64
        }
    }

    pub fn bond_max(&self, t: usize) -> usize {
        self.bond_max[t]
    }

    pub fn has_bond_stats(&self) -> bool {
        self.observables.contains(&Observable::BondStats)
    }

    /// Labels of the scalar observables, in column order.
    pub fn labels(&self) -> Vec<String> {
        self.observables.iter().filter_map(Observable::label).collect()
    }
}

fn evaluate(ev: &Evaluator, rho: &Mat) -> C64 {
    match ev {
        Evaluator::Linear(m) => {
            let mut s = C64::zero();
            for i in 0..rho.nrows() {
                for j in 0..rho.ncols() {
                    s += m[(i, j)] * rho[(j, i)];
                }
            }
            s
        }
        Evaluator::Coherence(i, j) => rho[(*i, *j)],
    }
}

/// Single top vector as a density matrix, for quick checks.
pub fn outer(psi: &Vector) -> Mat {
    psi * psi.adjoint()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::vec;

    fn record(psis: Vec<Vector>) -> TrajectoryRecord {
        let n = psis.len();
        TrajectoryRecord {
            times: (0..n).map(|i| i as f64).collect(),
            norm: vec![1.0; n],
            max_bond: vec![2; n],
            trunc_err: vec![0.0; n],
            psi0: psis,
        }
    }

    fn v(a: C64, b: C64) -> Vector {
        Vector::from_vec(vec![a, b])
    }

    #[test]
    fn single_trajectory_gives_pure_state() {
        let psi = v(C64::new(0.6, 0.0), C64::new(0.0, 0.8));
        let mut acc = EnsembleAccumulator::new(&[2], vec![0.0], vec![Observable::SigmaZ(0), Observable::Coherence(0, 1)], false).unwrap();
        acc.push(&record(vec![psi.clone()])).unwrap();
        assert!((acc.rho(0) - outer(&psi)).norm() < 1e-15);
        let (sz, _) = acc.observable(0, 0);
        assert!((sz - (0.36 - 0.64)).abs() < 1e-14);
        let (c, _) = acc.observable(0, 1);
        assert!((c - 0.48).abs() < 1e-14);
    }

    #[test]
    fn linear_mode_normalizes_by_trace() {
        let mut acc = EnsembleAccumulator::new(&[2], vec![0.0], vec![Observable::Population(0)], false).unwrap();
        acc.push(&record(vec![v(C64::new(2.0, 0.0), C64::zero())])).unwrap();
        acc.push(&record(vec![v(C64::zero(), C64::new(1.0, 0.0))])).unwrap();
        assert!((acc.raw_trace(0) - 2.5).abs() < 1e-14);
        assert!((acc.observable(0, 0).0 - 0.8).abs() < 1e-14);
        let rho = acc.rho(0);
        assert!((rho[(0, 0)].re + rho[(1, 1)].re - 1.0).abs() < 1e-14);
    }

    #[test]
    fn nonlinear_mode_excludes_dead_trajectories() {
        let mut acc = EnsembleAccumulator::new(&[2], vec![0.0, 1.0], vec![], true).unwrap();
        let ok = v(C64::new(3.0, 0.0), C64::zero());
        assert!(acc.push(&record(vec![ok.clone(), ok.clone()])).unwrap());
        assert!(!acc.push(&record(vec![ok, v(C64::zero(), C64::new(1e-13, 0.0))])).unwrap());
        assert_eq!((acc.accepted, acc.excluded), (1, 1));
        assert!((acc.raw_trace(1) - 1.0).abs() < 1e-15);
    }

    #[test]
    fn rejects_unfit_observables() {
        assert!(EnsembleAccumulator::new(&[2], vec![0.0], vec![Observable::Population(2)], false).is_err());
        assert!(EnsembleAccumulator::new(&[3], vec![0.0], vec![Observable::SigmaZ(0)], false).is_err());
    }

    #[test]
    fn welford_matches_two_pass() {
        let xs = [1.0, 4.0, -2.0, 3.5, 0.25];
        let mut w = Welford::default();
        xs.iter().for_each(|&x| w.push(x));
        let m = xs.iter().sum::<f64>() / 5.0;
        let var = xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / 4.0;
        assert!((w.mean - m).abs() < 1e-14 && (w.variance() - var).abs() < 1e-13);
    }

    proptest! {
        #[test]
        fn welford_merge_is_concatenation(xs in proptest::collection::vec(-10.0f64..10.0, 1..40), split in 0usize..40) {
            let split = split.min(xs.len());
            let mut all = Welford::default();
            xs.iter().for_each(|&x| all.push(x));
            let (mut a, mut b) = (Welford::default(), Welford::default());
            xs[..split].iter().for_each(|&x| a.push(x));
            xs[split..].iter().for_each(|&x| b.push(x));
            a.merge(&b);
            prop_assert_eq!(a.n, all.n);
            prop_assert!((a.mean - all.mean).abs() < 1e-12);
            prop_assert!((a.m2 - all.m2).abs() < 1e-9 * all.m2.max(1.0));
        }

        #[test]
        fn complex_merge_is_concatenation(zs in proptest::collection::vec((-5.0f64..5.0, -5.0f64..5.0), 2..30), split in 0usize..30) {
            let zs: Vec<C64> = zs.into_iter().map(|(a, b)| C64::new(a, b)).collect();
            let split = split.min(zs.len());
            let mut all = ComplexWelford::default();
            zs.iter().for_each(|&z| all.push(z));
            let (mut a, mut b) = (ComplexWelford::default(), ComplexWelford::default());
            zs[..split].iter().for_each(|&z| a.push(z));
            zs[split..].iter().for_each(|&z| b.push(z));
            a.merge(&b);
            prop_assert!((a.mean - all.mean).norm() < 1e-12);
            prop_assert!((a.c_reim - all.c_reim).abs() < 1e-9 * all.m2_re.max(1.0));
        }

        #[test]
        fn rho_is_hermitian_with_unit_trace(a in proptest::collection::vec((-1.0f64..1.0, -1.0f64..1.0, -1.0f64..1.0, -1.0f64..1.0), 1..10), nonlinear in any::<bool>()) {
            let mut acc = EnsembleAccumulator::new(&[2], vec![0.0], vec![], nonlinear).unwrap();
            for (p, q, r, s) in a {
                let psi = v(C64::new(p, q), C64::new(r, s));
                if psi.norm() > 1e-3 {
                    acc.push(&record(vec![psi])).unwrap();
                }
            }
            if acc.accepted > 0 {
                let rho = acc.rho(0);
                prop_assert!((rho.clone() - rho.adjoint()).norm() < 1e-14);
                prop_assert!((rho[(0, 0)].re + rho[(1, 1)].re - 1.0).abs() < 1e-12);
            }
        }
    }
}
