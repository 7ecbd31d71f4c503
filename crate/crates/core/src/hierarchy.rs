//! Hierarchy multi-indices and the dense HOPS integrator.
//!
//! The dense form stores one system-space vector per retained multi-index and
//! propagates the rescaled hierarchy
//!
//! ```text
//! d/dt psi^n = [-i H + L Z~*_t - sum_k n_k nu_k] psi^n
//!            + L sum_k d_k / sqrt|d_k| sqrt(n_k) psi^{n - e_k}
//!            - L~^dagger sum_k sqrt|d_k| sqrt(n_k + 1) psi^{n + e_k}
//! ```
//!
//! with couplings to indices outside the truncated set dropped. It is small
//! enough to be the reference for the tensor-train propagator.

use alloc::collections::BTreeMap;
use alloc::vec::Vec;

use num_traits::Zero;

use crate::bath::BathMode;
use crate::linalg::{expectation, gemv_acc, Mat, Vector};
use crate::models::DenseSystem;
use crate::noise::{combine_rk4, NoisePath, NoiseShift};
use crate::trajectory::{Propagator, StepReport};
use crate::{Error, Result, C64};

/// Occupation labels `n_{kj}` flattened bath by bath.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct MultiIndex(pub Vec<u16>);

impl MultiIndex {
    pub fn zero(modes: usize) -> Self {
        Self(alloc::vec![0; modes])
    }

    pub fn level(&self) -> usize {
        self.0.iter().map(|&n| n as usize).sum()
    }

    pub fn is_zero(&self) -> bool {
        self.0.iter().all(|&n| n == 0)
    }

    fn shifted(&self, mode: usize, up: bool) -> Option<MultiIndex> {
        let mut v = self.0.clone();
        if up {
            v[mode] = v[mode].checked_add(1)?;
        } else {
            v[mode] = v[mode].checked_sub(1)?;
        }
        Some(MultiIndex(v))
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Truncation {
    /// Total occupation at most `depth`.
    Triangular(usize),
    /// Occupation of flat mode `k` at most `n_max[k]`.
    Cuboid(Vec<usize>),
}

/// `C(n, k)` with overflow detection.
pub fn binomial(n: usize, k: usize) -> Result<usize> {
    let k = k.min(n - k.min(n));
    let mut acc: u128 = 1;
    for i in 0..k {
        acc = acc
            .checked_mul((n - i) as u128)
            .ok_or(Error::HierarchyOverflow)?
            / (i as u128 + 1);
    }
    usize::try_from(acc).map_err(|_| Error::HierarchyOverflow)
}

/// Number of indices with `sum n <= depth` over `modes` modes.
pub fn triangular_count(modes: usize, depth: usize) -> Result<usize> {
    let n = modes.checked_add(depth).ok_or(Error::HierarchyOverflow)?;
    binomial(n, modes)
}

/// Approximate hierarchy size `(1 + N) / (JK) * C(JK + N, 1 + N)`.
pub fn approximate_triangular_count(modes: usize, depth: usize) -> Result<f64> {
    let c = binomial(modes + depth, 1 + depth)?;
    Ok((1 + depth) as f64 / modes as f64 * c as f64)
}

// Graded order: by total level, then larger leading occupations first.
fn push_level(prefix: &mut Vec<u16>, remaining_modes: usize, level: usize, caps: &[usize], out: &mut Vec<MultiIndex>) {
    if remaining_modes == 1 {
        if level <= caps[prefix.len()] {
            prefix.push(level as u16);
            out.push(MultiIndex(prefix.clone()));
            prefix.pop();
        }
        return;
    }
    let cap = caps[prefix.len()].min(level);
    for first in (0..=cap).rev() {
        prefix.push(first as u16);
        push_level(prefix, remaining_modes - 1, level - first, caps, out);
        prefix.pop();
    }
}

fn graded(modes: usize, max_level: usize, caps: &[usize]) -> Vec<MultiIndex> {
    let mut out = Vec::new();
    if modes == 0 {
        out.push(MultiIndex(Vec::new()));
        return out;
    }
    let mut prefix = Vec::with_capacity(modes);
    for level in 0..=max_level {
        push_level(&mut prefix, modes, level, caps, &mut out);
    }
    out
}

/// All indices over `baths * modes` flat modes with total occupation at most
/// `depth`, in graded order (`00, 10, 01, 20, 11, 02, ...`).
pub fn enumerate_triangular(baths: usize, modes: usize, depth: usize) -> Result<Vec<MultiIndex>> {
    if baths == 0 || modes == 0 {
        return Err(Error::InvalidParameter("need at least one bath and one mode".into()));
    }
    let total = baths.checked_mul(modes).ok_or(Error::HierarchyOverflow)?;
    enumerate(&Truncation::Triangular(depth), total)
}

pub fn enumerate(truncation: &Truncation, modes: usize) -> Result<Vec<MultiIndex>> {
    match truncation {
        Truncation::Triangular(depth) => {
            let count = triangular_count(modes, *depth)?;
            if *depth > u16::MAX as usize || count > (isize::MAX as usize) / 64 {
                return Err(Error::HierarchyOverflow);
            }
            Ok(graded(modes, *depth, &alloc::vec![*depth; modes]))
        }
        Truncation::Cuboid(caps) => {
            if caps.len() != modes {
                return Err(Error::InvalidParameter(alloc::format!(
                    "cuboid truncation lists {} modes, hierarchy has {modes}",
                    caps.len()
                )));
            }
            let mut count: usize = 1;
            for &c in caps {
                if c > u16::MAX as usize {
                    return Err(Error::HierarchyOverflow);
                }
                count = count.checked_mul(c + 1).ok_or(Error::HierarchyOverflow)?;
            }
            if count > (isize::MAX as usize) / 64 {
                return Err(Error::HierarchyOverflow);
            }
            Ok(graded(modes, caps.iter().sum(), caps))
        }
    }
}

#[derive(Debug, Clone, Copy)]
struct Link {
    index: usize,
    bath: usize,
    coeff: C64,
}

/// Immutable hierarchy structure shared by all trajectories of a run.
#[derive(Debug, Clone)]
pub struct DenseHierarchy {
    pub system: DenseSystem,
    pub basis: Vec<MultiIndex>,
    pub nonlinear: bool,
    generator: Mat,
    l: Vec<Mat>,
    l_dag: Vec<Mat>,
    decay: Vec<C64>,
    lower: Vec<Vec<Link>>,
    upper: Vec<Vec<Link>>,
}

impl DenseHierarchy {
    pub fn new(system: DenseSystem, truncation: &Truncation, nonlinear: bool) -> Result<Self> {
        let d = system.dim();
        if system.initial.len() != d {
            return Err(Error::InvalidParameter("initial state dimension".into()));
        }
        let mut flat: Vec<(usize, BathMode)> = Vec::new();
        for (j, c) in system.couplings.iter().enumerate() {
            if c.l.shape() != (d, d) {
                return Err(Error::DimensionMismatch { site: j, detail: "coupling operator".into() });
            }
            for m in &c.modes {
                flat.push((j, *m));
            }
        }
        let basis = enumerate(truncation, flat.len())?;
        let lookup: BTreeMap<&MultiIndex, usize> = basis.iter().enumerate().map(|(i, n)| (n, i)).collect();
        let mut decay = Vec::with_capacity(basis.len());
        let mut lower = Vec::with_capacity(basis.len());
        let mut upper = Vec::with_capacity(basis.len());
        for n in &basis {
            decay.push(n.0.iter().zip(&flat).map(|(&nk, (_, m))| m.nu * nk as f64).sum());
            let mut lo = Vec::new();
            let mut up = Vec::new();
            for (k, (j, m)) in flat.iter().enumerate() {
                let ad = m.d.norm();
                if ad == 0.0 {
                    continue;
                }
                let nk = n.0[k] as f64;
                if let Some(nb) = n.shifted(k, false).and_then(|x| lookup.get(&x).copied()) {
                    lo.push(Link { index: nb, bath: *j, coeff: m.d / ad.sqrt() * nk.sqrt() });
                }
                if let Some(nb) = n.shifted(k, true).and_then(|x| lookup.get(&x).copied()) {
                    up.push(Link { index: nb, bath: *j, coeff: C64::new(ad.sqrt() * (nk + 1.0).sqrt(), 0.0) });
                }
            }
            lower.push(lo);
            upper.push(up);
        }
        let generator = &system.h * C64::new(0.0, -1.0);
        let l = system.couplings.iter().map(|c| c.l.clone()).collect();
        let l_dag = system.couplings.iter().map(|c| c.l.adjoint()).collect();
        Ok(Self { system, basis, nonlinear, generator, l, l_dag, decay, lower, upper })
    }

    pub fn dim(&self) -> usize {
        self.system.dim()
    }

    pub fn len(&self) -> usize {
        self.basis.len()
    }

    pub fn is_empty(&self) -> bool {
        self.basis.is_empty()
    }

    pub fn baths(&self) -> usize {
        self.l.len()
    }

    /// `<L_j^dagger>` in the normalized `psi0`.
    pub fn l_dag_expectation(&self, psi0: &[C64]) -> Vec<C64> {
        let v = Vector::from_column_slice(psi0);
        self.l_dag.iter().map(|m| expectation(m, &v)).collect()
    }

    /// Time derivative of the full hierarchy `psi` (index-major storage).
    /// `z_tilde[j]` is the (possibly shifted) noise of bath `j`; `l_avg` holds
    /// `<L_j^dagger>` when the nonlinear replacement is active.
    pub fn rhs(&self, psi: &[C64], z_tilde: &[C64], l_avg: Option<&[C64]>, out: &mut [C64]) {
        let d = self.dim();
        let nb = self.baths();
        let mut low = alloc::vec![C64::zero(); d * nb];
        let mut up = alloc::vec![C64::zero(); d * nb];
        for (i, o) in out.chunks_exact_mut(d).enumerate() {
            o.iter_mut().for_each(|x| *x = C64::zero());
            let me = &psi[i * d..(i + 1) * d];
            gemv_acc(o, C64::new(1.0, 0.0), &self.generator, me);
            let dec = self.decay[i];
            for (x, p) in o.iter_mut().zip(me) {
                *x -= dec * p;
            }
            low.iter_mut().for_each(|x| *x = C64::zero());
            up.iter_mut().for_each(|x| *x = C64::zero());
            for j in 0..nb {
                let z = z_tilde[j];
                for (a, p) in low[j * d..(j + 1) * d].iter_mut().zip(me) {
                    *a = z * p;
                }
            }
            for link in &self.lower[i] {
                let src = &psi[link.index * d..(link.index + 1) * d];
                for (a, p) in low[link.bath * d..(link.bath + 1) * d].iter_mut().zip(src) {
                    *a += link.coeff * p;
                }
            }
            for link in &self.upper[i] {
                let src = &psi[link.index * d..(link.index + 1) * d];
                for (a, p) in up[link.bath * d..(link.bath + 1) * d].iter_mut().zip(src) {
                    *a += link.coeff * p;
                }
            }
            for j in 0..nb {
                gemv_acc(o, C64::new(1.0, 0.0), &self.l[j], &low[j * d..(j + 1) * d]);
                let w = &up[j * d..(j + 1) * d];
                gemv_acc(o, C64::new(-1.0, 0.0), &self.l_dag[j], w);
                if let Some(avg) = l_avg {
                    let a = avg[j];
                    for (x, p) in o.iter_mut().zip(w) {
                        *x += a * p;
                    }
                }
            }
        }
    }

    /// Initial condition `psi^0 = psi_ini`, all other vectors zero.
    pub fn initial_state(&self) -> DenseHopsState {
        let d = self.dim();
        let mut psi = alloc::vec![C64::zero(); d * self.len()];
        psi[..d].copy_from_slice(self.system.initial.as_slice());
        DenseHopsState {
            psi,
            t: 0.0,
            step: 0,
            log_norm: 0.0,
            shifts: self.system.couplings.iter().map(|c| NoiseShift::new(c.modes.len())).collect(),
        }
    }

    fn stage(
        &self,
        psi: &[C64],
        shifts: &[NoiseShift],
        z: &[C64],
        dpsi: &mut [C64],
    ) -> Vec<Vec<C64>> {
        let d = self.dim();
        if self.nonlinear {
            let avg = self.l_dag_expectation(&psi[..d]);
            let zt: Vec<C64> = z.iter().zip(shifts).map(|(z, s)| z + s.total()).collect();
            self.rhs(psi, &zt, Some(&avg), dpsi);
            shifts
                .iter()
                .zip(&self.system.couplings)
                .zip(&avg)
                .map(|((s, c), a)| s.derivative(&c.modes, *a))
                .collect()
        } else {
            self.rhs(psi, z, None, dpsi);
            shifts.iter().map(|s| alloc::vec![C64::zero(); s.s.len()]).collect()
        }
    }

    /// One classical RK4 step with the noise frozen per stage; the nonlinear
    /// variant renormalizes the whole hierarchy afterwards.
    pub fn step_rk4(&self, state: &mut DenseHopsState, noise: &[NoisePath], dt: f64) -> Result<()> {
        check_noise(noise, self.baths(), dt)?;
        let mut zs = [Vec::new(), Vec::new(), Vec::new()];
        for p in noise.iter().take(self.baths()) {
            let v = p.stage_values(state.step)?;
            for s in 0..3 {
                zs[s].push(v[s]);
            }
        }
        let n = state.psi.len();
        let mut k: [Vec<C64>; 4] = core::array::from_fn(|_| alloc::vec![C64::zero(); n]);
        let mut tmp = alloc::vec![C64::zero(); n];
        let ks1 = self.stage(&state.psi, &state.shifts, &zs[0], &mut k[0]);
        axpy(&mut tmp, &state.psi, &k[0], 0.5 * dt);
        let sh2 = offset_all(&state.shifts, &ks1, 0.5 * dt);
        let ks2 = self.stage(&tmp, &sh2, &zs[1], &mut k[1]);
        axpy(&mut tmp, &state.psi, &k[1], 0.5 * dt);
        let sh3 = offset_all(&state.shifts, &ks2, 0.5 * dt);
        let ks3 = self.stage(&tmp, &sh3, &zs[1], &mut k[2]);
        axpy(&mut tmp, &state.psi, &k[2], dt);
        let sh4 = offset_all(&state.shifts, &ks3, dt);
        let ks4 = self.stage(&tmp, &sh4, &zs[2], &mut k[3]);
        let h = dt / 6.0;
        for i in 0..n {
            state.psi[i] += (k[0][i] + (k[1][i] + k[2][i]) * 2.0 + k[3][i]) * h;
        }
        state.shifts = state
            .shifts
            .iter()
            .enumerate()
            .map(|(j, s)| combine_rk4(s, [&ks1[j], &ks2[j], &ks3[j], &ks4[j]], dt))
            .collect();
        state.step += 1;
        state.t = state.step as f64 * dt;
        if state.psi.iter().any(|z| !(z.re.is_finite() && z.im.is_finite())) {
            return Err(Error::NonFinite { t: state.t });
        }
        if self.nonlinear {
            let nrm = state.psi.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
            if nrm == 0.0 {
                return Err(Error::NonFinite { t: state.t });
            }
            state.psi.iter_mut().for_each(|z| *z /= nrm);
            state.log_norm += nrm.ln();
        }
        Ok(())
    }
}

pub(crate) fn check_noise(noise: &[NoisePath], baths: usize, dt: f64) -> Result<()> {
    if noise.len() < baths {
        return Err(Error::InvalidParameter(alloc::format!("{baths} baths but {} noise paths", noise.len())));
    }
    for p in noise.iter().take(baths) {
        if (2.0 * p.dt_half - dt).abs() > 1e-12 * dt {
            return Err(Error::InvalidParameter(alloc::format!(
                "noise grid step {} does not match half of dt = {dt}",
                p.dt_half
            )));
        }
    }
    Ok(())
}

fn axpy(out: &mut [C64], x: &[C64], k: &[C64], h: f64) {
    for ((o, a), b) in out.iter_mut().zip(x).zip(k) {
        *o = a + b * h;
    }
}

fn offset_all(s: &[NoiseShift], ds: &[Vec<C64>], h: f64) -> Vec<NoiseShift> {
    s.iter().zip(ds).map(|(s, d)| s.offset(d, h)).collect()
}

/// Per-trajectory state of the dense hierarchy. The represented hierarchy is
/// `exp(log_norm) * psi`.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseHopsState {
    pub psi: Vec<C64>,
    pub t: f64,
    pub step: usize,
    pub log_norm: f64,
    pub shifts: Vec<NoiseShift>,
}

/// A dense hierarchy bound to one trajectory.
pub struct DenseTrajectory<'a> {
    pub hierarchy: &'a DenseHierarchy,
    pub state: DenseHopsState,
}

impl<'a> DenseTrajectory<'a> {
    pub fn new(hierarchy: &'a DenseHierarchy) -> Self {
        Self { hierarchy, state: hierarchy.initial_state() }
    }
}

impl Propagator for DenseTrajectory<'_> {
    fn step(&mut self, noise: &[NoisePath], dt: f64) -> Result<StepReport> {
        self.hierarchy.step_rk4(&mut self.state, noise, dt)?;
        Ok(StepReport { max_bond: 1, trunc_err: 0.0 })
    }

    fn psi0(&self) -> Vector {
        let d = self.hierarchy.dim();
        Vector::from_column_slice(&self.state.psi[..d]) * C64::new(self.state.log_norm.exp(), 0.0)
    }

    fn time(&self) -> f64 {
        self.state.t
    }

    fn norm(&self) -> f64 {
        self.state.psi.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt() * self.state.log_norm.exp()
    }

    fn max_bond(&self) -> usize {
        1
    }
}
