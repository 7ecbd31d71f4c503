//! The hierarchy as a single matrix product state over system and
//! pseudo-Fock sites, propagated with an MPO form of the effective
//! Hamiltonian.
//!
//! The propagator works with the generator `G = -i H_eff`:
//!
//! ```text
//! G = -i H_S + sum_j [ L_j Z_j - sum_k nu_k N_k
//!                      - (L_j^dag - <L_j^dag>) sum_k sqrt|d_k| b_k
//!                      + L_j sum_k (d_k / sqrt|d_k|) b_k^dag ]
//! ```
//!
//! where `Z_j` is the (possibly shifted) noise of bath `j` and `<L_j^dag>`
//! is zero in the linear equation.

use alloc::collections::BTreeMap;
use alloc::vec::Vec;

use num_traits::{One, Zero};

use crate::bath::BathMode;
use crate::hierarchy::check_noise;
use crate::linalg::{identity, Mat, Vector};
use crate::models::SystemModel;
use crate::noise::{combine_rk4, NoisePath, NoiseShift};
use crate::tensor::{OperatorTrain, SparsePattern, Tensor3, Tensor4, TensorTrain};
use crate::trajectory::{Propagator, StepReport};
use crate::{Error, Result, C64};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SiteKind {
    System { site: usize, dim: usize },
    Aux { bath: usize, mode: usize, dim: usize },
}

impl SiteKind {
    pub fn dim(&self) -> usize {
        match *self {
            SiteKind::System { dim, .. } | SiteKind::Aux { dim, .. } => dim,
        }
    }

    pub fn is_aux(&self) -> bool {
        matches!(self, SiteKind::Aux { .. })
    }
}

/// Placement of system sites and pseudo-Fock modes along the train.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SiteOrdering {
    pub sites: Vec<SiteKind>,
}

impl SiteOrdering {
    /// Each system site followed by the modes of the baths coupled to it.
    /// For the spin-boson model this is `[system, mode_1, .., mode_K]`.
    pub fn default_for(model: &SystemModel, n_max: &[Vec<usize>]) -> Result<Self> {
        check_n_max(model, n_max)?;
        let mut sites = Vec::new();
        for (s, &dim) in model.site_dims.iter().enumerate() {
            sites.push(SiteKind::System { site: s, dim });
            for (j, c) in model.couplings.iter().enumerate() {
                if c.site == s {
                    for (k, &n) in n_max[j].iter().enumerate() {
                        sites.push(SiteKind::Aux { bath: j, mode: k, dim: n + 1 });
                    }
                }
            }
        }
        Ok(Self { sites })
    }

    pub fn len(&self) -> usize {
        self.sites.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sites.is_empty()
    }

    pub fn dims(&self) -> Vec<usize> {
        self.sites.iter().map(SiteKind::dim).collect()
    }

    pub fn aux_mask(&self) -> Vec<bool> {
        self.sites.iter().map(SiteKind::is_aux).collect()
    }

    pub fn system_position(&self, site: usize) -> Option<usize> {
        self.sites.iter().position(|s| matches!(*s, SiteKind::System { site: x, .. } if x == site))
    }

    pub fn aux_position(&self, bath: usize, mode: usize) -> Option<usize> {
        self.sites
            .iter()
            .position(|s| matches!(*s, SiteKind::Aux { bath: b, mode: m, .. } if b == bath && m == mode))
    }

    /// Every system site and mode exactly once, system sites in increasing
    /// order, dimensions consistent with the model.
    pub fn validate(&self, model: &SystemModel) -> Result<()> {
        let mut seen_sys = Vec::new();
        let mut seen_aux = Vec::new();
        for s in &self.sites {
            match *s {
                SiteKind::System { site, dim } => {
                    if model.site_dims.get(site) != Some(&dim) {
                        return Err(Error::InvalidParameter(alloc::format!("system site {site} has the wrong dimension")));
                    }
                    seen_sys.push(site);
                }
                SiteKind::Aux { bath, mode, dim } => {
                    let modes = model.couplings.get(bath).map(|c| c.bath.modes.len()).unwrap_or(0);
                    if mode >= modes || dim < 2 {
                        return Err(Error::InvalidParameter(alloc::format!("invalid auxiliary site ({bath}, {mode})")));
                    }
                    seen_aux.push((bath, mode));
                }
            }
        }
        if seen_sys != (0..model.sites()).collect::<Vec<_>>() {
            return Err(Error::InvalidParameter("system sites must appear once each, in increasing order".into()));
        }
        let mut want: Vec<(usize, usize)> = Vec::new();
        for (j, c) in model.couplings.iter().enumerate() {
            want.extend((0..c.bath.modes.len()).map(|k| (j, k)));
        }
        seen_aux.sort_unstable();
        if seen_aux != want {
            return Err(Error::InvalidParameter("every bath mode must appear exactly once".into()));
        }
        Ok(())
    }
}

fn check_n_max(model: &SystemModel, n_max: &[Vec<usize>]) -> Result<()> {
    if n_max.len() != model.couplings.len() {
        return Err(Error::InvalidParameter("n_max needs one list per bath".into()));
    }
    for (j, (c, n)) in model.couplings.iter().zip(n_max).enumerate() {
        if n.len() != c.bath.modes.len() || n.contains(&0) {
            return Err(Error::InvalidParameter(alloc::format!("bath {j}: n_max needs one entry >= 1 per mode")));
        }
    }
    Ok(())
}

/// Propagation parameters of the tensor-train method.
#[derive(Debug, Clone, PartialEq)]
pub struct HompsConfig {
    /// Pseudo-Fock cutoff per bath and mode.
    pub n_max: Vec<Vec<usize>>,
    pub max_bond: usize,
    /// Relative per-bond singular value cutoff.
    pub svd_tol: f64,
    pub dt: f64,
    pub t_final: f64,
    pub nonlinear: bool,
    pub trajectories: usize,
    pub seed: u64,
    /// Largest accepted truncation error of a single step.
    pub trunc_limit: f64,
}

impl HompsConfig {
    /// Same cutoff for every mode of every bath.
    pub fn uniform(model: &SystemModel, n_max: usize) -> Self {
        Self {
            n_max: model.couplings.iter().map(|c| alloc::vec![n_max; c.bath.modes.len()]).collect(),
            max_bond: usize::MAX,
            svd_tol: 1e-12,
            dt: 1e-2,
            t_final: 1.0,
            nonlinear: false,
            trajectories: 1,
            seed: 0,
            trunc_limit: 1e-3,
        }
    }

    pub fn steps(&self) -> usize {
        steps_for(self.t_final, self.dt)
    }

    pub fn validate(&self, model: &SystemModel) -> Result<()> {
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(Error::InvalidParameter("dt must be positive".into()));
        }
        if !(self.t_final >= 0.0 && self.t_final.is_finite()) {
            return Err(Error::InvalidParameter("t_final must be non-negative".into()));
        }
        if self.max_bond == 0 {
            return Err(Error::InvalidParameter("max_bond must be at least 1".into()));
        }
        if !(self.svd_tol >= 0.0) || !(self.trunc_limit > 0.0) {
            return Err(Error::InvalidParameter("svd_tol and trunc_limit must be non-negative".into()));
        }
        check_n_max(model, &self.n_max)
    }
}

/// Number of steps of size `dt` that reach `t_final`, tolerating round-off
/// in the ratio.
pub fn steps_for(t_final: f64, dt: f64) -> usize {
    let r = t_final / dt;
    let n = r.round();
    if (r - n).abs() < 1e-9 * r.max(1.0) {
        n as usize
    } else {
        r.ceil() as usize
    }
}

pub fn annihilation(dim: usize) -> Mat {
    Mat::from_fn(dim, dim, |i, j| if j == i + 1 { C64::new((j as f64).sqrt(), 0.0) } else { C64::zero() })
}

pub fn creation(dim: usize) -> Mat {
    annihilation(dim).transpose()
}

pub fn occupation(dim: usize) -> Mat {
    Mat::from_fn(dim, dim, |i, j| if i == j { C64::new(i as f64, 0.0) } else { C64::zero() })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
enum OpRef {
    Fixed(usize),
    /// `L_j^dag - <L_j^dag>` for bath `j`.
    LTildeDag(usize),
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Coef {
    Fixed(C64),
    /// Shifted noise of bath `j`.
    Noise(usize),
}

struct Term {
    coef: Coef,
    ops: Vec<(usize, OpRef)>,
}

#[derive(Debug, Clone)]
struct Block {
    w_in: usize,
    w_out: usize,
    coef: Coef,
    op: Option<OpRef>,
}

impl Block {
    fn is_dynamic(&self) -> bool {
        matches!(self.coef, Coef::Noise(_)) || matches!(self.op, Some(OpRef::LTildeDag(_)))
    }
}

/// Stage-dependent inputs of the generator.
#[derive(Debug, Clone, PartialEq)]
pub struct Dynamics {
    /// Noise of each bath including the nonlinear shift.
    pub z: Vec<C64>,
    /// `<L_j^dag>`; zero in the linear equation.
    pub l_avg: Vec<C64>,
}

impl Dynamics {
    pub fn zero(baths: usize) -> Self {
        Self { z: alloc::vec![C64::zero(); baths], l_avg: alloc::vec![C64::zero(); baths] }
    }
}

/// Sum-of-products MPO of the generator with the stage-independent parts
/// assembled once.
#[derive(Debug, Clone)]
pub struct GeneratorMpo {
    ops: Vec<Mat>,
    l_dag: Vec<(usize, Mat)>,
    blocks: Vec<Vec<Block>>,
    static_sites: Vec<Tensor4>,
    pattern: SparsePattern,
}

impl GeneratorMpo {
    pub fn new(model: &SystemModel, ordering: &SiteOrdering) -> Result<Self> {
        model.validate()?;
        ordering.validate(model)?;
        let mut ops: Vec<Mat> = Vec::new();
        let mut intern = |m: Mat| -> OpRef {
            if let Some(i) = ops.iter().position(|o| *o == m) {
                return OpRef::Fixed(i);
            }
            ops.push(m);
            OpRef::Fixed(ops.len() - 1)
        };
        let sys = |s: usize| ordering.system_position(s).expect("validated ordering");
        let mut terms = Vec::new();
        for t in &model.hamiltonian {
            let o = t.ops.iter().map(|(s, m)| (sys(*s), intern(m.clone()))).collect();
            terms.push(Term { coef: Coef::Fixed(t.coeff * C64::new(0.0, -1.0)), ops: o });
        }
        let mut l_dag = Vec::new();
        for (j, c) in model.couplings.iter().enumerate() {
            let ps = sys(c.site);
            let l = intern(c.l.clone());
            l_dag.push((ps, c.l.adjoint()));
            terms.push(Term { coef: Coef::Noise(j), ops: alloc::vec![(ps, l)] });
            for (k, m) in c.bath.modes.iter().enumerate() {
                let pa = ordering.aux_position(j, k).expect("validated ordering");
                let dim = ordering.sites[pa].dim();
                terms.push(Term { coef: Coef::Fixed(-m.nu), ops: alloc::vec![(pa, intern(occupation(dim)))] });
                let ad = m.d.norm();
                if ad == 0.0 {
                    continue;
                }
                let down = intern(annihilation(dim));
                let up = intern(creation(dim));
                terms.push(Term {
                    coef: Coef::Fixed(C64::new(-ad.sqrt(), 0.0)),
                    ops: sorted(alloc::vec![(ps, OpRef::LTildeDag(j)), (pa, down)]),
                });
                terms.push(Term { coef: Coef::Fixed(m.d / ad.sqrt()), ops: sorted(alloc::vec![(ps, l), (pa, up)]) });
            }
        }
        let n = ordering.len();
        let dims = ordering.dims();
        let blocks = assemble(&terms, n)?;
        let mut g = Self { ops, l_dag, blocks, static_sites: Vec::new(), pattern: SparsePattern::default() };
        g.static_sites = (0..n)
            .map(|i| {
                let (l, r) = bond_shape(&g.blocks[i], i, n);
                let mut w = Tensor4::zeros(l, dims[i], r);
                for b in g.blocks[i].iter().filter(|b| !b.is_dynamic()) {
                    g.add(&mut w, b, None);
                }
                w
            })
            .collect();
        // two generic stage inputs so no entry cancels in both
        let baths = g.l_dag.len();
        let probe = |a: f64, b: f64| Dynamics { z: alloc::vec![C64::new(a, b); baths], l_avg: alloc::vec![C64::new(b, a); baths] };
        g.pattern = g.build(&probe(0.3711, 0.2293)).pattern().union(&g.build(&probe(-1.618, 0.577)).pattern());
        Ok(g)
    }

    pub fn pattern(&self) -> &SparsePattern {
        &self.pattern
    }

    fn add(&self, w: &mut Tensor4, b: &Block, dynamics: Option<&Dynamics>) {
        let c = match b.coef {
            Coef::Fixed(c) => c,
            Coef::Noise(j) => dynamics.map(|d| d.z[j]).unwrap_or_else(C64::zero),
        };
        match b.op {
            None => w.add_block(b.w_in, b.w_out, c, &identity(w.p)),
            Some(OpRef::Fixed(i)) => w.add_block(b.w_in, b.w_out, c, &self.ops[i]),
            Some(OpRef::LTildeDag(j)) => {
                let a = dynamics.map(|d| d.l_avg[j]).unwrap_or_else(C64::zero);
                let op = &self.l_dag[j].1 - identity(w.p) * a;
                w.add_block(b.w_in, b.w_out, c, &op);
            }
        }
    }

    /// The generator MPO for one integrator stage. Only site tensors carrying
    /// noise or `<L^dag>` are rebuilt.
    pub fn build(&self, dynamics: &Dynamics) -> OperatorTrain {
        let sites = self
            .static_sites
            .iter()
            .zip(&self.blocks)
            .map(|(w, blocks)| {
                let mut w = w.clone();
                for b in blocks.iter().filter(|b| b.is_dynamic()) {
                    self.add(&mut w, b, Some(dynamics));
                }
                w
            })
            .collect();
        OperatorTrain { sites }
    }

    /// `H_eff = i G`.
    pub fn h_eff(&self, dynamics: &Dynamics) -> OperatorTrain {
        let mut h = self.build(dynamics);
        h.sites[0].data.iter_mut().for_each(|z| *z *= C64::new(0.0, 1.0));
        h
    }

    /// The site carrying `L_j^dag` and its local matrix.
    pub fn coupling_site(&self, bath: usize) -> (usize, &Mat) {
        let (p, m) = &self.l_dag[bath];
        (*p, m)
    }

    pub fn bond_dims(&self) -> Vec<usize> {
        self.static_sites.iter().take(self.static_sites.len().saturating_sub(1)).map(|w| w.r).collect()
    }
}

fn sorted(mut ops: Vec<(usize, OpRef)>) -> Vec<(usize, OpRef)> {
    ops.sort_by_key(|(p, _)| *p);
    ops
}

fn bond_shape(blocks: &[Block], i: usize, n: usize) -> (usize, usize) {
    let l = if i == 0 { 1 } else { blocks.iter().map(|b| b.w_in + 1).max().unwrap_or(2).max(2) };
    let r = if i == n - 1 { 1 } else { blocks.iter().map(|b| b.w_out + 1).max().unwrap_or(2).max(2) };
    (l, r)
}

/// Channel layout: on inner bonds channel 0 carries the identity (nothing
/// placed yet), channel 1 the completed terms and every further channel an
/// open prefix shared by all terms that start with it. The left boundary has
/// only the identity channel, the right boundary only the completed one.
fn assemble(terms: &[Term], n: usize) -> Result<Vec<Vec<Block>>> {
    const IDENT: usize = 0;
    const DONE: usize = 1;
    let ident_at = |bond: usize| if bond == n { None } else { Some(IDENT) };
    let done_at = |bond: usize| if bond == 0 { None } else if bond == n { Some(0) } else { Some(DONE) };
    let mut channels: Vec<BTreeMap<Vec<(usize, OpRef)>, usize>> = (0..=n).map(|_| BTreeMap::new()).collect();
    let mut chan = |bond: usize, prefix: Vec<(usize, OpRef)>| -> usize {
        let m = &mut channels[bond];
        let next = 2 + m.len();
        *m.entry(prefix).or_insert(next)
    };
    let mut blocks: Vec<Vec<Block>> = (0..n).map(|_| Vec::new()).collect();
    for i in 0..n {
        if let (Some(a), Some(b)) = (ident_at(i), ident_at(i + 1)) {
            blocks[i].push(Block { w_in: a, w_out: b, coef: Coef::Fixed(C64::one()), op: None });
        }
        if let (Some(a), Some(b)) = (done_at(i), done_at(i + 1)) {
            blocks[i].push(Block { w_in: a, w_out: b, coef: Coef::Fixed(C64::one()), op: None });
        }
    }
    let mut seen = alloc::collections::BTreeSet::new();
    for t in terms {
        let (first, last) = match (t.ops.first(), t.ops.last()) {
            (Some(f), Some(l)) => (f.0, l.0),
            _ => continue,
        };
        if last >= n || t.ops.windows(2).any(|w| w[0].0 >= w[1].0) {
            return Err(Error::InvalidParameter("operator term with repeated or missing sites".into()));
        }
        for i in first..=last {
            let op = t.ops.iter().find(|(p, _)| *p == i).map(|(_, o)| *o);
            let prefix_upto = |site: usize| t.ops.iter().filter(|(p, _)| *p <= site).copied().collect::<Vec<_>>();
            let w_in = if i == first { ident_at(i).expect("inner bond") } else { chan(i, prefix_upto(i - 1)) };
            if i == last {
                let w_out = done_at(i + 1).expect("inner bond");
                blocks[i].push(Block { w_in, w_out, coef: t.coef, op });
            } else {
                let w_out = chan(i + 1, prefix_upto(i));
                if seen.insert((i, w_in, w_out)) {
                    blocks[i].push(Block { w_in, w_out, coef: Coef::Fixed(C64::one()), op });
                }
            }
        }
    }
    Ok(blocks)
}

/// Places the system state on the system sites and the vacuum on every
/// auxiliary site.
pub fn initial_train(model: &SystemModel, ordering: &SiteOrdering) -> Result<TensorTrain> {
    let sys = TensorTrain::from_dense(&model.initial, &model.site_dims)?;
    let mut sites = Vec::with_capacity(ordering.len());
    let mut next_sys = 0;
    let mut bond = 1;
    for s in &ordering.sites {
        match *s {
            SiteKind::System { .. } => {
                let t = sys.sites[next_sys].clone();
                bond = t.r;
                sites.push(t);
                next_sys += 1;
            }
            SiteKind::Aux { dim, .. } => {
                let mut t = Tensor3::zeros(bond, dim, bond);
                for a in 0..bond {
                    let i = t.idx(a, 0, a);
                    t.data[i] = C64::one();
                }
                sites.push(t);
            }
        }
    }
    TensorTrain::new(sites)
}

/// One HOMPS trajectory.
#[derive(Debug, Clone)]
pub struct HompsTrajectory<'a> {
    pub generator: &'a GeneratorMpo,
    pub config: &'a HompsConfig,
    pub modes: Vec<Vec<BathMode>>,
    pub aux: Vec<bool>,
    pub mps: TensorTrain,
    pub shifts: Vec<NoiseShift>,
    pub t: f64,
    pub step: usize,
}

/// Everything shared by the trajectories of one HOMPS run.
#[derive(Debug, Clone)]
pub struct HompsSolver {
    pub model: SystemModel,
    pub ordering: SiteOrdering,
    pub config: HompsConfig,
    pub generator: GeneratorMpo,
    initial: TensorTrain,
}

impl HompsSolver {
    pub fn new(model: SystemModel, config: HompsConfig) -> Result<Self> {
        let ordering = SiteOrdering::default_for(&model, &config.n_max)?;
        Self::with_ordering(model, ordering, config)
    }

    pub fn with_ordering(model: SystemModel, ordering: SiteOrdering, config: HompsConfig) -> Result<Self> {
        config.validate(&model)?;
        for s in &ordering.sites {
            if let SiteKind::Aux { bath, mode, dim } = *s {
                if config.n_max.get(bath).and_then(|n| n.get(mode)).map(|n| n + 1) != Some(dim) {
                    return Err(Error::InvalidParameter(alloc::format!("site ({bath}, {mode}) disagrees with n_max")));
                }
            }
        }
        let generator = GeneratorMpo::new(&model, &ordering)?;
        let initial = initial_train(&model, &ordering)?;
        Ok(Self { model, ordering, config, generator, initial })
    }

    pub fn trajectory(&self) -> HompsTrajectory<'_> {
        HompsTrajectory {
            generator: &self.generator,
            config: &self.config,
            modes: self.model.couplings.iter().map(|c| c.bath.modes.clone()).collect(),
            aux: self.ordering.aux_mask(),
            mps: self.initial.clone(),
            shifts: self.model.couplings.iter().map(|c| NoiseShift::new(c.bath.modes.len())).collect(),
            t: 0.0,
            step: 0,
        }
    }
}

/// Summed bond dimension above which the final RK4 combination is
/// accumulated pairwise.
const PAIRWISE_ABOVE: usize = 16;

impl HompsTrajectory<'_> {
    fn baths(&self) -> usize {
        self.modes.len()
    }

    /// `<L_j^dag>` in the normalized top vector of `mps`.
    pub fn l_dag_expectation(&self, mps: &TensorTrain) -> Result<Vec<C64>> {
        let top = mps.project_zero(&self.aux)?;
        let nrm = top.norm_sq_raw();
        let sys_index = |pos: usize| self.aux[..pos].iter().filter(|a| !**a).count();
        Ok((0..self.baths())
            .map(|j| {
                let (pos, op) = self.generator.coupling_site(j);
                if nrm == 0.0 {
                    C64::zero()
                } else {
                    top.expectation_local_raw(sys_index(pos), op) / nrm
                }
            })
            .collect())
    }

    fn stage(&self, psi: &TensorTrain, shifts: &[NoiseShift], z: &[C64]) -> Result<(TensorTrain, f64, Vec<Vec<C64>>)> {
        let cfg = self.config;
        let (dynamics, ds) = if cfg.nonlinear {
            let avg = self.l_dag_expectation(psi)?;
            let zt = z.iter().zip(shifts).map(|(z, s)| z + s.total()).collect();
            let ds = shifts.iter().zip(&self.modes).zip(&avg).map(|((s, m), a)| s.derivative(m, *a)).collect();
            (Dynamics { z: zt, l_avg: avg }, ds)
        } else {
            let ds = shifts.iter().map(|s| alloc::vec![C64::zero(); s.s.len()]).collect();
            (Dynamics { z: z.to_vec(), l_avg: alloc::vec![C64::zero(); self.baths()] }, ds)
        };
        let g = self.generator.build(&dynamics);
        let mut k = g.apply_sparse(psi, self.generator.pattern())?;
        let err = k.compress(cfg.max_bond, cfg.svd_tol)?;
        Ok((k, err, ds))
    }

    fn shifted(&self, k: &TensorTrain, h: f64) -> Result<(TensorTrain, f64)> {
        let mut s = TensorTrain::linear_combination(&[(C64::one(), &self.mps), (C64::new(h, 0.0), k)])?;
        let err = s.compress(self.config.max_bond, self.config.svd_tol)?;
        Ok((s, err))
    }
}

impl Propagator for HompsTrajectory<'_> {
    fn step(&mut self, noise: &[NoisePath], dt: f64) -> Result<StepReport> {
        check_noise(noise, self.baths(), dt)?;
        let mut zs = [Vec::new(), Vec::new(), Vec::new()];
        for p in noise.iter().take(self.baths()) {
            let v = p.stage_values(self.step)?;
            for s in 0..3 {
                zs[s].push(v[s]);
            }
        }
        let offset = |sh: &[NoiseShift], ds: &[Vec<C64>], h: f64| -> Vec<NoiseShift> {
            sh.iter().zip(ds).map(|(s, d)| s.offset(d, h)).collect()
        };
        let mut err = 0.0;
        let mut bond = self.mps.max_bond();
        let (k1, e, ds1) = self.stage(&self.mps, &self.shifts, &zs[0])?;
        err += e;
        let (p2, e) = self.shifted(&k1, 0.5 * dt)?;
        err += e;
        let (k2, e, ds2) = self.stage(&p2, &offset(&self.shifts, &ds1, 0.5 * dt), &zs[1])?;
        err += e;
        let (p3, e) = self.shifted(&k2, 0.5 * dt)?;
        err += e;
        let (k3, e, ds3) = self.stage(&p3, &offset(&self.shifts, &ds2, 0.5 * dt), &zs[1])?;
        err += e;
        let (p4, e) = self.shifted(&k3, dt)?;
        err += e;
        let (k4, e, ds4) = self.stage(&p4, &offset(&self.shifts, &ds3, dt), &zs[2])?;
        err += e;
        for t in [&k1, &k2, &k3, &k4, &p2, &p3, &p4] {
            bond = bond.max(t.max_bond());
        }
        let (cfg_bond, tol) = (self.config.max_bond, self.config.svd_tol);
        let (one, two, h) = (C64::one(), C64::new(2.0, 0.0), C64::new(dt / 6.0, 0.0));
        let summed: usize = [&self.mps, &k1, &k2, &k3, &k4].iter().map(|t| t.max_bond()).sum();
        let mut next = if summed <= PAIRWISE_ABOVE {
            TensorTrain::linear_combination(&[(one, &self.mps), (h, &k1), (two * h, &k2), (two * h, &k3), (h, &k4)])?
        } else {
            // compressing sums of two trains is far cheaper than one sum of five
            let mut acc = TensorTrain::linear_combination(&[(one, &k1), (two, &k2)])?;
            err += acc.compress(cfg_bond, tol)?;
            for (c, k) in [(two, &k3), (one, &k4)] {
                acc = TensorTrain::linear_combination(&[(one, &acc), (c, k)])?;
                err += acc.compress(cfg_bond, tol)?;
            }
            TensorTrain::linear_combination(&[(one, &self.mps), (h, &acc)])?
        };
        err += next.compress(cfg_bond, tol)?;
        self.shifts = self
            .shifts
            .iter()
            .enumerate()
            .map(|(j, s)| combine_rk4(s, [&ds1[j], &ds2[j], &ds3[j], &ds4[j]], dt))
            .collect();
        self.step += 1;
        self.t = self.step as f64 * dt;
        let n = next.normalize();
        if !(n > 0.0 && n.is_finite()) || !next.log_norm.is_finite() {
            return Err(Error::NonFinite { t: self.t });
        }
        bond = bond.max(next.max_bond());
        self.mps = next;
        if err > self.config.trunc_limit {
            return Err(Error::TruncationLimit { error: err, limit: self.config.trunc_limit, t: self.t });
        }
        Ok(StepReport { max_bond: bond, trunc_err: err })
    }

    fn psi0(&self) -> Vector {
        let top = self.mps.project_zero(&self.aux).expect("aux mask matches the train");
        top.to_dense()
    }

    fn time(&self) -> f64 {
        self.t
    }

    fn norm(&self) -> f64 {
        self.mps.norm()
    }

    fn max_bond(&self) -> usize {
        self.mps.max_bond()
    }
}
