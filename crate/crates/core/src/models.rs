//! System builders: the spin-boson model and a chain of two-level molecules.

use alloc::string::String;
use alloc::vec::Vec;

use num_traits::{One, Zero};

use crate::bath::{BathMode, BathSpec};
use crate::linalg::{identity, is_hermitian, kron, Mat, Vector};
use crate::{Error, Result, C64};

/// Product of single-site operators with a scalar prefactor. Sites are
/// distinct and sorted.
#[derive(Debug, Clone, PartialEq)]
pub struct ProductTerm {
    pub coeff: C64,
    pub ops: Vec<(usize, Mat)>,
}

impl ProductTerm {
    pub fn local(site: usize, op: Mat) -> Self {
        Self { coeff: C64::one(), ops: alloc::vec![(site, op)] }
    }

    pub fn new(coeff: C64, mut ops: Vec<(usize, Mat)>) -> Self {
        ops.sort_by_key(|(s, _)| *s);
        Self { coeff, ops }
    }
}

/// System operator `L_j` acting on one site, and the bath it couples to.
#[derive(Debug, Clone, PartialEq)]
pub struct Coupling {
    pub site: usize,
    pub l: Mat,
    pub bath: BathSpec,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SystemModel {
    pub site_dims: Vec<usize>,
    pub hamiltonian: Vec<ProductTerm>,
    pub couplings: Vec<Coupling>,
    /// Initial system state over all sites (site 0 is the slowest index).
    pub initial: Vector,
    pub name: String,
}

/// Dense system description consumed by the dense hierarchy.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseSystem {
    pub h: Mat,
    pub couplings: Vec<DenseCoupling>,
    pub initial: Vector,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DenseCoupling {
    pub l: Mat,
    pub modes: Vec<BathMode>,
}

impl DenseSystem {
    pub fn dim(&self) -> usize {
        self.h.nrows()
    }
}

pub fn sigma_z() -> Mat {
    Mat::from_diagonal(&Vector::from_vec(alloc::vec![C64::one(), -C64::one()]))
}

pub fn sigma_x() -> Mat {
    Mat::from_row_slice(2, 2, &[C64::zero(), C64::one(), C64::one(), C64::zero()])
}

/// `a^dagger` of a two-level site with basis `(|0>, |1>)` = (ground, excited).
pub fn raising() -> Mat {
    Mat::from_row_slice(2, 2, &[C64::zero(), C64::zero(), C64::one(), C64::zero()])
}

pub fn lowering() -> Mat {
    raising().adjoint()
}

pub fn number() -> Mat {
    Mat::from_diagonal(&Vector::from_vec(alloc::vec![C64::zero(), C64::one()]))
}

pub fn basis_vector(dim: usize, i: usize) -> Vector {
    let mut v = Vector::zeros(dim);
    v[i] = C64::one();
    v
}

impl SystemModel {
    pub fn dim(&self) -> usize {
        self.site_dims.iter().product()
    }

    pub fn sites(&self) -> usize {
        self.site_dims.len()
    }

    /// `op` on `site`, identity elsewhere.
    pub fn embed(&self, site: usize, op: &Mat) -> Mat {
        let mut out = Mat::identity(1, 1);
        for (s, &d) in self.site_dims.iter().enumerate() {
            out = if s == site { kron(&out, op) } else { kron(&out, &identity(d)) };
        }
        out
    }

    pub fn dense_hamiltonian(&self) -> Mat {
        let n = self.dim();
        let mut h = Mat::zeros(n, n);
        for term in &self.hamiltonian {
            let mut prod = Mat::identity(1, 1);
            for (s, &d) in self.site_dims.iter().enumerate() {
                let op = term.ops.iter().find(|(site, _)| *site == s).map(|(_, m)| m.clone()).unwrap_or_else(|| identity(d));
                prod = kron(&prod, &op);
            }
            h += prod * term.coeff;
        }
        h
    }

    pub fn dense(&self) -> DenseSystem {
        DenseSystem {
            h: self.dense_hamiltonian(),
            couplings: self
                .couplings
                .iter()
                .map(|c| DenseCoupling { l: self.embed(c.site, &c.l), modes: c.bath.modes.clone() })
                .collect(),
            initial: self.initial.clone(),
        }
    }

    pub fn with_initial(mut self, initial: Vector) -> Self {
        self.initial = initial;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.site_dims.is_empty() || self.site_dims.contains(&0) {
            return Err(Error::InvalidParameter("system needs at least one site of nonzero dimension".into()));
        }
        for term in &self.hamiltonian {
            for (s, m) in &term.ops {
                let d = *self.site_dims.get(*s).ok_or_else(|| Error::InvalidParameter(alloc::format!("no site {s}")))?;
                if m.shape() != (d, d) {
                    return Err(Error::DimensionMismatch { site: *s, detail: "Hamiltonian factor".into() });
                }
            }
            if term.ops.windows(2).any(|w| w[0].0 >= w[1].0) {
                return Err(Error::InvalidParameter("product term sites must be distinct and sorted".into()));
            }
        }
        if !is_hermitian(&self.dense_hamiltonian(), 1e-12) {
            return Err(Error::InvalidParameter("system Hamiltonian is not Hermitian".into()));
        }
        for (j, c) in self.couplings.iter().enumerate() {
            let d = *self.site_dims.get(c.site).ok_or_else(|| Error::InvalidParameter(alloc::format!("coupling {j} on missing site")))?;
            if c.l.shape() != (d, d) {
                return Err(Error::DimensionMismatch { site: c.site, detail: alloc::format!("coupling operator {j}") });
            }
            if !is_hermitian(&c.l, 1e-14) {
                return Err(Error::InvalidParameter(alloc::format!("coupling operator {j} is not Hermitian")));
            }
            if c.bath.modes.iter().any(|m| !(m.nu.re > 0.0)) {
                return Err(Error::InvalidParameter(alloc::format!("bath {j} has a non-decaying mode")));
            }
        }
        if self.initial.len() != self.dim() || self.initial.norm() == 0.0 {
            return Err(Error::InvalidParameter("initial state has the wrong dimension or zero norm".into()));
        }
        Ok(())
    }
}

/// `H_S = eps sigma_z + delta sigma_x`, `L = sigma_z`, starting in `|1>`.
pub fn build_sbm(eps: f64, delta: f64, bath: BathSpec) -> SystemModel {
    let h = sigma_z() * C64::new(eps, 0.0) + sigma_x() * C64::new(delta, 0.0);
    SystemModel {
        site_dims: alloc::vec![2],
        hamiltonian: alloc::vec![ProductTerm::local(0, h)],
        couplings: alloc::vec![Coupling { site: 0, l: sigma_z(), bath }],
        initial: basis_vector(2, 0),
        name: "spin-boson".into(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ChainCoupling {
    /// `V` between neighbouring sites only.
    NearestNeighbor(f64),
    /// `V_{jj'} = 1 / |j - j'|^3` between all pairs.
    Dipole,
}

impl ChainCoupling {
    pub fn between(&self, j: usize, k: usize) -> f64 {
        let dist = j.abs_diff(k);
        match *self {
            ChainCoupling::NearestNeighbor(v) => {
                if dist == 1 {
                    v
                } else {
                    0.0
                }
            }
            ChainCoupling::Dipole => {
                if dist == 0 {
                    0.0
                } else {
                    1.0 / (dist * dist * dist) as f64
                }
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChainParams {
    pub energies: Vec<f64>,
    pub coupling: ChainCoupling,
    pub bath: BathSpec,
    pub initial_site: usize,
}

impl ChainParams {
    pub fn sites(&self) -> usize {
        self.energies.len()
    }
}

/// Chain of two-level sites with `H_{S,j} = eps_j a_j^dagger a_j`, hopping
/// `V_{jj'} (a_j^dagger a_j' + h.c.)` and `L_j = a_j^dagger a_j`, every site
/// coupled to its own copy of `bath`. Starts with one excitation on
/// `initial_site`.
pub fn build_chain(params: &ChainParams) -> Result<SystemModel> {
    let n = params.sites();
    if n < 2 {
        return Err(Error::InvalidParameter("a chain needs at least two sites".into()));
    }
    if params.initial_site >= n {
        return Err(Error::InvalidParameter("initial excitation outside the chain".into()));
    }
    let mut hamiltonian = Vec::new();
    for (j, &e) in params.energies.iter().enumerate() {
        if e != 0.0 {
            hamiltonian.push(ProductTerm::new(C64::new(e, 0.0), alloc::vec![(j, number())]));
        }
    }
    for j in 0..n {
        for k in j + 1..n {
            let v = params.coupling.between(j, k);
            if v != 0.0 {
                let c = C64::new(v, 0.0);
                hamiltonian.push(ProductTerm::new(c, alloc::vec![(j, raising()), (k, lowering())]));
                hamiltonian.push(ProductTerm::new(c, alloc::vec![(j, lowering()), (k, raising())]));
            }
        }
    }
    let couplings = (0..n).map(|j| Coupling { site: j, l: number(), bath: params.bath.clone() }).collect();
    let dim = 1usize << n;
    Ok(SystemModel {
        site_dims: alloc::vec![2; n],
        hamiltonian,
        couplings,
        initial: basis_vector(dim, single_exciton_index(n, params.initial_site)),
        name: "chain".into(),
    })
}

/// Index in the `2^n` product basis of the state with only `site` excited.
pub fn single_exciton_index(n: usize, site: usize) -> usize {
    1usize << (n - 1 - site)
}

/// The same chain restricted to its single-excitation subspace, where site
/// `j` is basis state `|j>` and `L_j = |j><j|`.
pub fn chain_single_exciton(params: &ChainParams) -> Result<DenseSystem> {
    let n = params.sites();
    if n < 2 || params.initial_site >= n {
        return Err(Error::InvalidParameter("invalid chain".into()));
    }
    let h = Mat::from_fn(n, n, |i, j| {
        if i == j {
            C64::new(params.energies[i], 0.0)
        } else {
            C64::new(params.coupling.between(i, j), 0.0)
        }
    });
    let couplings = (0..n)
        .map(|j| {
            let mut l = Mat::zeros(n, n);
            l[(j, j)] = C64::one();
            DenseCoupling { l, modes: params.bath.modes.clone() }
        })
        .collect();
    Ok(DenseSystem { h, couplings, initial: basis_vector(n, params.initial_site) })
}

/// Picks the single-excitation amplitudes out of a `2^n` product-basis vector.
pub fn single_exciton_amplitudes(full: &Vector, n: usize) -> Vector {
    Vector::from_iterator(n, (0..n).map(|j| full[single_exciton_index(n, j)]))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bath::{SpectralDensity, ThermalBath};

    fn bath() -> BathSpec {
        BathSpec::decomposed(ThermalBath::new(SpectralDensity::Debye { eta: 0.5, gamma: 0.25 }, 2.0), 1).unwrap()
    }

    #[test]
    fn sbm_operators() {
        let m = build_sbm(1.0, 1.0, bath());
        m.validate().unwrap();
        let h = m.dense_hamiltonian();
        assert_eq!(h[(0, 0)], C64::one());
        assert_eq!(h[(1, 1)], -C64::one());
        assert_eq!(h[(0, 1)], C64::one());
        assert_eq!(m.couplings[0].l, sigma_z());
    }

    #[test]
    fn dipole_couplings() {
        let c = ChainCoupling::Dipole;
        assert_eq!(c.between(0, 2), 1.0 / 8.0);
        assert_eq!(c.between(0, 3), 1.0 / 27.0);
        assert_eq!(c.between(3, 0), 1.0 / 27.0);
        assert_eq!(ChainCoupling::NearestNeighbor(-1.0).between(1, 3), 0.0);
    }

    #[test]
    fn chain_is_hermitian_and_conserves_excitations() {
        let p = ChainParams {
            energies: alloc::vec![0.0, 0.3, -0.2, 0.1],
            coupling: ChainCoupling::Dipole,
            bath: bath(),
            initial_site: 1,
        };
        let m = build_chain(&p).unwrap();
        m.validate().unwrap();
        let h = m.dense_hamiltonian();
        let mut nexc = Mat::zeros(16, 16);
        for j in 0..4 {
            nexc += m.embed(j, &number());
        }
        assert!((&h * &nexc - &nexc * &h).norm() < 1e-14);
        for c in &m.dense().couplings {
            assert!(is_hermitian(&c.l, 1e-14));
        }
    }

    #[test]
    fn single_exciton_block_matches_full_chain() {
        let p = ChainParams {
            energies: alloc::vec![0.2, 0.0, -0.1],
            coupling: ChainCoupling::NearestNeighbor(-1.0),
            bath: bath(),
            initial_site: 0,
        };
        let full = build_chain(&p).unwrap().dense_hamiltonian();
        let sub = chain_single_exciton(&p).unwrap();
        for i in 0..3 {
            for j in 0..3 {
                let a = full[(single_exciton_index(3, i), single_exciton_index(3, j))];
                assert!((a - sub.h[(i, j)]).norm() < 1e-15);
            }
        }
    }

    #[test]
    fn two_site_oscillation_frequency() {
        // Single-excitation 2x2 block [[e1, V], [V, e2]] has eigenvalue
        // splitting sqrt((e1 - e2)^2 + 4 V^2).
        let p = ChainParams {
            energies: alloc::vec![0.5, -0.5],
            coupling: ChainCoupling::NearestNeighbor(0.75),
            bath: bath(),
            initial_site: 0,
        };
        let sub = chain_single_exciton(&p).unwrap();
        let eig = sub.h.clone().symmetric_eigen().eigenvalues;
        let split = (eig[0] - eig[1]).abs();
        assert!((split - (1.0f64 + 4.0 * 0.5625).sqrt()).abs() < 1e-12);
    }

    #[test]
    fn rejects_short_chain() {
        let p = ChainParams { energies: alloc::vec![0.0], coupling: ChainCoupling::Dipole, bath: bath(), initial_site: 0 };
        assert!(build_chain(&p).is_err());
    }
}
