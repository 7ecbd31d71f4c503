use alloc::vec::Vec;

use num_traits::{One, Zero};

use super::mps::{Tensor3, TensorTrain};
use crate::linalg::Mat;
use crate::{Error, Result, C64};

/// Rank-4 operator tensor `W[w, s, t, v]`, square in the physical indices.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor4 {
    pub l: usize,
    pub p: usize,
    pub r: usize,
    pub data: Vec<C64>,
}

impl Tensor4 {
    pub fn zeros(l: usize, p: usize, r: usize) -> Self {
        Self { l, p, r, data: alloc::vec![C64::zero(); l * p * p * r] }
    }

    #[inline]
    pub fn idx(&self, w: usize, s: usize, t: usize, v: usize) -> usize {
        ((w * self.p + s) * self.p + t) * self.r + v
    }

    #[inline]
    pub fn get(&self, w: usize, s: usize, t: usize, v: usize) -> C64 {
        self.data[self.idx(w, s, t, v)]
    }

    /// Adds `c * op` into the `(w, v)` channel block.
    pub fn add_block(&mut self, w: usize, v: usize, c: C64, op: &Mat) {
        for s in 0..self.p {
            for t in 0..self.p {
                let i = self.idx(w, s, t, v);
                self.data[i] += c * op[(s, t)];
            }
        }
    }

    pub fn block(&self, w: usize, v: usize) -> Mat {
        Mat::from_fn(self.p, self.p, |s, t| self.get(w, s, t, v))
    }
}

/// Matrix product operator.
#[derive(Debug, Clone, PartialEq)]
pub struct OperatorTrain {
    pub sites: Vec<Tensor4>,
}

impl OperatorTrain {
    pub fn new(sites: Vec<Tensor4>) -> Result<Self> {
        let n = sites.len();
        if n == 0 {
            return Err(Error::InvalidParameter("operator train needs at least one site".into()));
        }
        if sites[0].l != 1 || sites[n - 1].r != 1 {
            return Err(Error::DimensionMismatch { site: 0, detail: "boundary bonds must have dimension 1".into() });
        }
        for i in 1..n {
            if sites[i - 1].r != sites[i].l {
                return Err(Error::DimensionMismatch { site: i, detail: "operator bond mismatch".into() });
            }
        }
        Ok(Self { sites })
    }

    pub fn identity(dims: &[usize]) -> Self {
        let sites = dims
            .iter()
            .map(|&p| {
                let mut w = Tensor4::zeros(1, p, 1);
                w.add_block(0, 0, C64::one(), &Mat::identity(p, p));
                w
            })
            .collect();
        Self { sites }
    }

    pub fn phys_dims(&self) -> Vec<usize> {
        self.sites.iter().map(|s| s.p).collect()
    }

    pub fn bond_dims(&self) -> Vec<usize> {
        self.sites.iter().take(self.sites.len().saturating_sub(1)).map(|s| s.r).collect()
    }

    pub fn max_bond(&self) -> usize {
        self.bond_dims().into_iter().max().unwrap_or(1)
    }

    /// Dense matrix with the first site as the slowest index.
    pub fn to_dense(&self) -> Mat {
        // cur[(row, col)] blocks per open right channel
        let mut cur: Vec<Mat> = alloc::vec![Mat::identity(1, 1)];
        for site in &self.sites {
            let dim = cur[0].nrows() * site.p;
            let mut next = alloc::vec![Mat::zeros(dim, dim); site.r];
            for (w, m) in cur.iter().enumerate() {
                for (v, out) in next.iter_mut().enumerate() {
                    let b = site.block(w, v);
                    if b.iter().all(|z| *z == C64::zero()) {
                        continue;
                    }
                    *out += crate::linalg::kron(m, &b);
                }
            }
            cur = next;
        }
        cur.swap_remove(0)
    }

    /// Positions of the nonzero entries of every site tensor.
    pub fn pattern(&self) -> SparsePattern {
        SparsePattern {
            sites: self
                .sites
                .iter()
                .map(|w| {
                    let mut nz = Vec::new();
                    for wl in 0..w.l {
                        for s in 0..w.p {
                            for t in 0..w.p {
                                for wr in 0..w.r {
                                    let i = w.idx(wl, s, t, wr);
                                    if w.data[i] != C64::zero() {
                                        nz.push(Entry { index: i as u32, wl: wl as u16, s: s as u16, t: t as u16, wr: wr as u16 });
                                    }
                                }
                            }
                        }
                    }
                    nz
                })
                .collect(),
        }
    }

    /// Exact application; bond dimensions multiply.
    pub fn apply(&self, mps: &TensorTrain) -> Result<TensorTrain> {
        self.apply_sparse(mps, &self.pattern())
    }

    /// [`apply`](Self::apply) visiting only the entries listed in `pattern`,
    /// which must cover every nonzero of the operator.
    pub fn apply_sparse(&self, mps: &TensorTrain, pattern: &SparsePattern) -> Result<TensorTrain> {
        if self.phys_dims() != mps.phys_dims() {
            return Err(Error::DimensionMismatch { site: 0, detail: "operator and state dimensions differ".into() });
        }
        if pattern.sites.len() != self.sites.len() {
            return Err(Error::DimensionMismatch { site: 0, detail: "pattern and operator lengths differ".into() });
        }
        let mut sites = Vec::with_capacity(mps.len());
        for ((w, a), nz) in self.sites.iter().zip(&mps.sites).zip(&pattern.sites) {
            let (l, r, p) = (w.l * a.l, w.r * a.r, a.p);
            let mut out = Tensor3::zeros(l, p, r);
            for e in nz {
                let c = w.data[e.index as usize];
                let (wl, s, t, wr) = (e.wl as usize, e.s as usize, e.t as usize, e.wr as usize);
                for al in 0..a.l {
                    let src = a.idx(al, t, 0);
                    let dst = out.idx(wl * a.l + al, s, wr * a.r);
                    let (from, to) = (&a.data[src..src + a.r], &mut out.data[dst..dst + a.r]);
                    for (o, x) in to.iter_mut().zip(from) {
                        *o += c * x;
                    }
                }
            }
            sites.push(out);
        }
        Ok(TensorTrain { sites, log_norm: mps.log_norm })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Entry {
    index: u32,
    wl: u16,
    s: u16,
    t: u16,
    wr: u16,
}

/// Nonzero structure of an [`OperatorTrain`], reusable across operators
/// with the same support.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct SparsePattern {
    sites: Vec<Vec<Entry>>,
}

impl SparsePattern {
    /// Union of two patterns of the same shape.
    pub fn union(&self, other: &SparsePattern) -> SparsePattern {
        let sites = self
            .sites
            .iter()
            .zip(&other.sites)
            .map(|(a, b)| {
                let mut v: Vec<Entry> = a.iter().chain(b).copied().collect();
                v.sort_by_key(|e| e.index);
                v.dedup();
                v
            })
            .collect();
        SparsePattern { sites }
    }

    pub fn nonzeros(&self) -> usize {
        self.sites.iter().map(Vec::len).sum()
    }
}

/// `W |psi>` compressed to `max_bond` with relative cutoff `svd_tol`. Returns
/// the product and its relative truncation error.
pub fn matvec_contract(mpo: &OperatorTrain, mps: &TensorTrain, max_bond: usize, svd_tol: f64) -> Result<(TensorTrain, f64)> {
    let mut out = mpo.apply(mps)?;
    let err = out.compress(max_bond, svd_tol)?;
    Ok((out, err))
}
