use alloc::vec::Vec;

use num_traits::{One, Zero};

use crate::linalg::{qr_positive, svd, Mat, Vector};
use crate::{Error, Result, C64};

/// Rank-3 site tensor `A[a, s, b]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor3 {
    pub l: usize,
    pub p: usize,
    pub r: usize,
    pub data: Vec<C64>,
}

impl Tensor3 {
    pub fn zeros(l: usize, p: usize, r: usize) -> Self {
        Self { l, p, r, data: alloc::vec![C64::zero(); l * p * r] }
    }

    pub fn from_data(l: usize, p: usize, r: usize, data: Vec<C64>) -> Result<Self> {
        if data.len() != l * p * r {
            return Err(Error::InvalidParameter(alloc::format!(
                "tensor of shape ({l}, {p}, {r}) needs {} entries, got {}",
                l * p * r,
                data.len()
            )));
        }
        Ok(Self { l, p, r, data })
    }

    #[inline]
    pub fn idx(&self, a: usize, s: usize, b: usize) -> usize {
        (a * self.p + s) * self.r + b
    }

    #[inline]
    pub fn get(&self, a: usize, s: usize, b: usize) -> C64 {
        self.data[self.idx(a, s, b)]
    }

    /// `(l * p) x r` matrix view.
    pub fn left_matrix(&self) -> Mat {
        Mat::from_row_slice(self.l * self.p, self.r, &self.data)
    }

    /// `l x (p * r)` matrix view.
    pub fn right_matrix(&self) -> Mat {
        Mat::from_row_slice(self.l, self.p * self.r, &self.data)
    }

    pub fn from_left_matrix(m: &Mat, l: usize, p: usize) -> Self {
        let r = m.ncols();
        let mut data = Vec::with_capacity(l * p * r);
        for i in 0..l * p {
            for j in 0..r {
                data.push(m[(i, j)]);
            }
        }
        Self { l, p, r, data }
    }

    pub fn from_right_matrix(m: &Mat, p: usize) -> Self {
        let l = m.nrows();
        let r = m.ncols() / p;
        let mut data = Vec::with_capacity(l * p * r);
        for i in 0..l {
            for j in 0..p * r {
                data.push(m[(i, j)]);
            }
        }
        Self { l, p, r, data }
    }

    /// `A[a, s, c] m[c, b]`.
    pub fn times_right(&self, m: &Mat) -> Self {
        Self::from_left_matrix(&(self.left_matrix() * m), self.l, self.p)
    }

    /// `m[c, a] A[a, s, b]`.
    pub fn times_left(&self, m: &Mat) -> Self {
        Self::from_right_matrix(&(m * self.right_matrix()), self.p)
    }

    pub fn scale(&mut self, c: C64) {
        self.data.iter_mut().for_each(|z| *z *= c);
    }

    /// `sum_t op[s, t] A[a, t, b]`.
    pub fn apply_local(&self, op: &Mat) -> Self {
        let mut out = Tensor3::zeros(self.l, self.p, self.r);
        for a in 0..self.l {
            for s in 0..self.p {
                for t in 0..self.p {
                    let o = op[(s, t)];
                    if o == C64::zero() {
                        continue;
                    }
                    let src = self.idx(a, t, 0);
                    let dst = out.idx(a, s, 0);
                    for b in 0..self.r {
                        out.data[dst + b] += o * self.data[src + b];
                    }
                }
            }
        }
        out
    }

    fn frobenius(&self) -> f64 {
        self.data.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
    }
}

/// Matrix product state `exp(log_norm) * A_1 A_2 ... A_N`.
#[derive(Debug, Clone, PartialEq)]
pub struct TensorTrain {
    pub sites: Vec<Tensor3>,
    pub log_norm: f64,
}

impl TensorTrain {
    pub fn new(sites: Vec<Tensor3>) -> Result<Self> {
        let tt = Self { sites, log_norm: 0.0 };
        tt.validate()?;
        Ok(tt)
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.sites.len();
        if n == 0 {
            return Err(Error::InvalidParameter("tensor train needs at least one site".into()));
        }
        if self.sites[0].l != 1 || self.sites[n - 1].r != 1 {
            return Err(Error::DimensionMismatch { site: 0, detail: "boundary bonds must have dimension 1".into() });
        }
        for i in 1..n {
            if self.sites[i - 1].r != self.sites[i].l {
                return Err(Error::DimensionMismatch {
                    site: i,
                    detail: alloc::format!("left bond {} != previous right bond {}", self.sites[i].l, self.sites[i - 1].r),
                });
            }
        }
        Ok(())
    }

    pub fn product_state(vectors: &[Vector]) -> Self {
        let sites = vectors
            .iter()
            .map(|v| Tensor3 { l: 1, p: v.len(), r: 1, data: v.iter().copied().collect() })
            .collect();
        Self { sites, log_norm: 0.0 }
    }

    /// Exact decomposition of a dense vector by successive SVDs.
    pub fn from_dense(v: &Vector, dims: &[usize]) -> Result<Self> {
        let total: usize = dims.iter().product();
        if total != v.len() || dims.is_empty() {
            return Err(Error::InvalidParameter("dense vector does not match site dimensions".into()));
        }
        let mut sites = Vec::with_capacity(dims.len());
        // rest: row-major (l * remaining) buffer as an l x remaining matrix
        let mut rest = Mat::from_row_slice(1, total, v.as_slice());
        let mut l = 1;
        for (i, &p) in dims.iter().enumerate() {
            let remaining = rest.ncols() / p;
            if i + 1 == dims.len() {
                sites.push(Tensor3::from_right_matrix(&rest, p));
                break;
            }
            // regroup l x (p * remaining) into (l * p) x remaining
            let mut grouped = Mat::zeros(l * p, remaining);
            for a in 0..l {
                for s in 0..p {
                    for b in 0..remaining {
                        grouped[(a * p + s, b)] = rest[(a, s * remaining + b)];
                    }
                }
            }
            let dec = svd(grouped, i)?;
            let k = dec.s.len();
            sites.push(Tensor3::from_left_matrix(&dec.u, l, p));
            let mut sv = dec.vt;
            for row in 0..k {
                let s = C64::new(dec.s[row], 0.0);
                for c in 0..sv.ncols() {
                    sv[(row, c)] *= s;
                }
            }
            rest = sv;
            l = k;
        }
        Ok(Self { sites, log_norm: 0.0 })
    }

    pub fn len(&self) -> usize {
        self.sites.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sites.is_empty()
    }

    pub fn phys_dims(&self) -> Vec<usize> {
        self.sites.iter().map(|s| s.p).collect()
    }

    /// Internal bond dimensions `M_1 .. M_{N-1}`.
    pub fn bond_dims(&self) -> Vec<usize> {
        self.sites.iter().take(self.sites.len().saturating_sub(1)).map(|s| s.r).collect()
    }

    pub fn max_bond(&self) -> usize {
        self.bond_dims().into_iter().max().unwrap_or(1)
    }

    /// Dense vector including the `exp(log_norm)` factor.
    pub fn to_dense(&self) -> Vector {
        let mut cur: Vec<C64> = alloc::vec![C64::one()];
        let mut rows = 1;
        for site in &self.sites {
            let (l, p, r) = (site.l, site.p, site.r);
            let mut next = alloc::vec![C64::zero(); rows * p * r];
            for x in 0..rows {
                for c in 0..l {
                    let w = cur[x * l + c];
                    if w == C64::zero() {
                        continue;
                    }
                    for s in 0..p {
                        let src = site.idx(c, s, 0);
                        let dst = (x * p + s) * r;
                        for b in 0..r {
                            next[dst + b] += w * site.data[src + b];
                        }
                    }
                }
            }
            cur = next;
            rows *= p;
        }
        Vector::from_vec(cur) * C64::new(self.log_norm.exp(), 0.0)
    }

    pub fn scale(&mut self, c: C64) {
        self.sites[0].scale(c);
    }

    fn transfer(a: &Tensor3, b: &Tensor3, env: &[C64]) -> Vec<C64> {
        // env[(x, y)] with x over a.l, y over b.l -> out over (a.r, b.r)
        let mut tmp = alloc::vec![C64::zero(); a.l * b.p * b.r];
        for x in 0..a.l {
            for y in 0..b.l {
                let e = env[x * b.l + y];
                if e == C64::zero() {
                    continue;
                }
                for s in 0..b.p {
                    let src = b.idx(y, s, 0);
                    let dst = (x * b.p + s) * b.r;
                    for v in 0..b.r {
                        tmp[dst + v] += e * b.data[src + v];
                    }
                }
            }
        }
        let mut out = alloc::vec![C64::zero(); a.r * b.r];
        for x in 0..a.l {
            for s in 0..a.p {
                for u in 0..a.r {
                    let ca = a.get(x, s, u).conj();
                    if ca == C64::zero() {
                        continue;
                    }
                    let src = (x * b.p + s) * b.r;
                    for v in 0..b.r {
                        out[u * b.r + v] += ca * tmp[src + v];
                    }
                }
            }
        }
        out
    }

    /// `<self|other>` without the `exp(log_norm)` factors.
    pub fn overlap_raw(&self, other: &TensorTrain) -> Result<C64> {
        if self.len() != other.len() {
            return Err(Error::DimensionMismatch { site: 0, detail: "train lengths differ".into() });
        }
        let mut env = alloc::vec![C64::one()];
        for (i, (a, b)) in self.sites.iter().zip(&other.sites).enumerate() {
            if a.p != b.p {
                return Err(Error::DimensionMismatch { site: i, detail: "physical dimensions differ".into() });
            }
            env = Self::transfer(a, b, &env);
        }
        Ok(env[0])
    }

    /// `<self|other>`.
    pub fn overlap(&self, other: &TensorTrain) -> Result<C64> {
        Ok(self.overlap_raw(other)? * (self.log_norm + other.log_norm).exp())
    }

    pub fn norm_sq_raw(&self) -> f64 {
        self.overlap_raw(self).map(|z| z.re.max(0.0)).unwrap_or(0.0)
    }

    pub fn norm(&self) -> f64 {
        self.norm_sq_raw().sqrt() * self.log_norm.exp()
    }

    /// `<self| op_site |self>` without the `exp(log_norm)` factor.
    pub fn expectation_local_raw(&self, site: usize, op: &Mat) -> C64 {
        let mut env = alloc::vec![C64::one()];
        for (i, a) in self.sites.iter().enumerate() {
            env = if i == site { Self::transfer(a, &a.apply_local(op), &env) } else { Self::transfer(a, a, &env) };
        }
        env[0]
    }

    /// Normalized local expectation value; zero for a zero state.
    pub fn expectation_local(&self, site: usize, op: &Mat) -> C64 {
        let n = self.norm_sq_raw();
        if n == 0.0 {
            C64::zero()
        } else {
            self.expectation_local_raw(site, op) / n
        }
    }

    /// Moves the raw norm into `log_norm`, leaving unit-norm tensors.
    pub fn normalize(&mut self) -> f64 {
        let n = self.norm_sq_raw().sqrt();
        if n > 0.0 && n.is_finite() {
            let last = self.sites.len() - 1;
            self.sites[last].scale(C64::new(1.0 / n, 0.0));
            self.log_norm += n.ln();
        }
        n
    }

    fn left_orthonormalize(&mut self, i: usize) {
        let site = &self.sites[i];
        let (q, r) = qr_positive(site.left_matrix());
        let (l, p) = (site.l, site.p);
        self.sites[i] = Tensor3::from_left_matrix(&q, l, p);
        self.sites[i + 1] = self.sites[i + 1].times_left(&r);
    }

    fn right_orthonormalize(&mut self, i: usize) {
        let site = &self.sites[i];
        let p = site.p;
        let (q, r) = qr_positive(site.right_matrix().adjoint());
        self.sites[i] = Tensor3::from_right_matrix(&q.adjoint(), p);
        self.sites[i - 1] = self.sites[i - 1].times_right(&r.adjoint());
    }

    /// Mixed canonical form: sites left of `center` are left isometries, sites
    /// right of it right isometries.
    pub fn canonicalize(&mut self, center: usize) {
        let n = self.sites.len();
        let center = center.min(n - 1);
        for i in 0..center {
            self.left_orthonormalize(i);
        }
        for i in (center + 1..n).rev() {
            self.right_orthonormalize(i);
        }
    }

    pub fn is_left_isometry(&self, i: usize, tol: f64) -> bool {
        let m = self.sites[i].left_matrix();
        let g = m.adjoint() * &m;
        (g - Mat::identity(m.ncols(), m.ncols())).iter().all(|z| z.norm() <= tol)
    }

    pub fn is_right_isometry(&self, i: usize, tol: f64) -> bool {
        let m = self.sites[i].right_matrix();
        let g = &m * m.adjoint();
        (g - Mat::identity(m.nrows(), m.nrows())).iter().all(|z| z.norm() <= tol)
    }

    /// SVD compression: right-canonicalize, then sweep left to right keeping
    /// singular values `s > svd_tol * s_max` on each bond, at most `max_bond`
    /// of them. Returns `sqrt(sum discarded s^2) / ||self||`.
    ///
    /// The result is left-canonical with the norm on the last site.
    pub fn compress(&mut self, max_bond: usize, svd_tol: f64) -> Result<f64> {
        let n = self.sites.len();
        if n == 1 {
            return Ok(0.0);
        }
        for i in (1..n).rev() {
            self.right_orthonormalize(i);
        }
        let norm = self.sites[0].frobenius();
        let max_bond = max_bond.max(1);
        let mut discarded = 0.0;
        for i in 0..n - 1 {
            let (l, p) = (self.sites[i].l, self.sites[i].p);
            let dec = svd(self.sites[i].left_matrix(), i)?;
            let smax = dec.s.first().copied().unwrap_or(0.0);
            let cut = svd_tol.max(0.0) * smax;
            let mut keep = dec.s.iter().take_while(|&&s| s > cut && s > 0.0).count();
            keep = keep.clamp(1, max_bond.min(dec.s.len().max(1)));
            discarded += dec.s[keep.min(dec.s.len())..].iter().map(|s| s * s).sum::<f64>();
            let u = dec.u.columns(0, keep).into_owned();
            let mut sv = dec.vt.rows(0, keep).into_owned();
            for row in 0..keep {
                let s = C64::new(dec.s[row], 0.0);
                for c in 0..sv.ncols() {
                    sv[(row, c)] *= s;
                }
            }
            self.sites[i] = Tensor3::from_left_matrix(&u, l, p);
            self.sites[i + 1] = self.sites[i + 1].times_left(&sv);
        }
        Ok(if norm > 0.0 { discarded.sqrt() / norm } else { 0.0 })
    }

    /// `sum_t c_t * train_t` as a block-diagonal tensor train. Bond
    /// dimensions add.
    pub fn linear_combination(terms: &[(C64, &TensorTrain)]) -> Result<TensorTrain> {
        let first = terms.first().ok_or_else(|| Error::InvalidParameter("empty linear combination".into()))?.1;
        let n = first.len();
        for (_, t) in terms {
            if t.phys_dims() != first.phys_dims() {
                return Err(Error::DimensionMismatch { site: 0, detail: "physical dimensions differ".into() });
            }
        }
        let log_ref = terms
            .iter()
            .filter(|(c, _)| *c != C64::zero())
            .map(|(_, t)| t.log_norm)
            .fold(f64::NEG_INFINITY, f64::max);
        let log_ref = if log_ref.is_finite() { log_ref } else { 0.0 };
        let weights: Vec<C64> = terms.iter().map(|(c, t)| c * (t.log_norm - log_ref).exp()).collect();
        if n == 1 {
            let p = first.sites[0].p;
            let mut site = Tensor3::zeros(1, p, 1);
            for ((_, t), w) in terms.iter().zip(&weights) {
                for (o, x) in site.data.iter_mut().zip(&t.sites[0].data) {
                    *o += w * x;
                }
            }
            return Ok(TensorTrain { sites: alloc::vec![site], log_norm: log_ref });
        }
        let mut sites = Vec::with_capacity(n);
        for i in 0..n {
            let p = first.sites[i].p;
            let l: usize = if i == 0 { 1 } else { terms.iter().map(|(_, t)| t.sites[i].l).sum() };
            let r: usize = if i == n - 1 { 1 } else { terms.iter().map(|(_, t)| t.sites[i].r).sum() };
            let mut out = Tensor3::zeros(l, p, r);
            let (mut lo, mut ro) = (0, 0);
            for ((_, t), w) in terms.iter().zip(&weights) {
                let src = &t.sites[i];
                let f = if i == 0 { *w } else { C64::one() };
                for a in 0..src.l {
                    for s in 0..p {
                        for b in 0..src.r {
                            let oa = if i == 0 { 0 } else { lo + a };
                            let ob = if i == n - 1 { 0 } else { ro + b };
                            let idx = out.idx(oa, s, ob);
                            out.data[idx] += f * src.get(a, s, b);
                        }
                    }
                }
                lo += src.l;
                ro += src.r;
            }
            sites.push(out);
        }
        Ok(TensorTrain { sites, log_norm: log_ref })
    }

    /// Contracts every site flagged in `aux` with `<0|`, leaving a train over
    /// the remaining sites. The `log_norm` is carried over.
    pub fn project_zero(&self, aux: &[bool]) -> Result<TensorTrain> {
        if aux.len() != self.len() {
            return Err(Error::InvalidParameter("aux mask length".into()));
        }
        let mut out: Vec<Tensor3> = Vec::new();
        let mut carry = Mat::identity(1, 1);
        for (site, &is_aux) in self.sites.iter().zip(aux) {
            if is_aux {
                let zero = Mat::from_fn(site.l, site.r, |a, b| site.get(a, 0, b));
                carry *= zero;
            } else {
                out.push(site.times_left(&carry));
                carry = Mat::identity(site.r, site.r);
            }
        }
        let last = out.last_mut().ok_or_else(|| Error::InvalidParameter("no system sites".into()))?;
        if carry.nrows() != 1 || carry.ncols() != 1 || carry[(0, 0)] != C64::one() {
            *last = last.times_right(&carry);
        }
        Ok(TensorTrain { sites: out, log_norm: self.log_norm })
    }
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use proptest::prelude::*;

    pub(crate) fn lcg(seed: u64) -> impl FnMut() -> C64 {
        let mut x = seed.wrapping_mul(0x9E37_79B9_7F4A_7C15).wrapping_add(1);
        move || {
            let mut next = || {
                x = x.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
                ((x >> 11) as f64) / ((1u64 << 53) as f64) - 0.5
            };
            C64::new(next(), next())
        }
    }

    pub(crate) fn random_mps(dims: &[usize], bond: usize, seed: u64) -> TensorTrain {
        let mut rng = lcg(seed);
        let n = dims.len();
        let mut sites = Vec::new();
        for (i, &p) in dims.iter().enumerate() {
            let l = if i == 0 { 1 } else { bond };
            let r = if i == n - 1 { 1 } else { bond };
            sites.push(Tensor3 { l, p, r, data: (0..l * p * r).map(|_| rng()).collect() });
        }
        TensorTrain::new(sites).unwrap()
    }

    fn max_diff(a: &Vector, b: &Vector) -> f64 {
        (a - b).iter().map(|z| z.norm()).fold(0.0, f64::max)
    }

    #[test]
    fn canonicalize_preserves_state_and_isometries() {
        let dims = [2, 3, 4, 2, 3, 2];
        let mps = random_mps(&dims, 5, 1);
        let dense = mps.to_dense();
        for center in 0..dims.len() {
            let mut c = mps.clone();
            c.canonicalize(center);
            for i in 0..center {
                assert!(c.is_left_isometry(i, 1e-12));
            }
            for i in center + 1..dims.len() {
                assert!(c.is_right_isometry(i, 1e-12));
            }
            let ov = mps.overlap(&c).unwrap() / (mps.norm() * c.norm());
            assert!((ov - C64::one()).norm() < 1e-12);
            assert!(max_diff(&c.to_dense(), &dense) < 1e-10 * dense.norm());
        }
    }

    #[test]
    fn canonicalize_is_idempotent() {
        let mut a = random_mps(&[2, 3, 2, 4], 3, 2);
        a.canonicalize(1);
        let mut b = a.clone();
        b.canonicalize(1);
        for (x, y) in a.sites.iter().zip(&b.sites) {
            assert_eq!((x.l, x.p, x.r), (y.l, y.p, y.r));
            for (u, v) in x.data.iter().zip(&y.data) {
                assert!((u - v).norm() < 1e-12);
            }
        }
    }

    #[test]
    fn product_state_canonicalizes_to_itself_up_to_phase() {
        let v1 = Vector::from_vec(alloc::vec![C64::new(0.6, 0.0), C64::new(0.0, 0.8)]);
        let v2 = Vector::from_vec(alloc::vec![C64::new(0.0, 1.0), C64::zero(), C64::zero()]);
        let mut p = TensorTrain::product_state(&[v1.clone(), v2.clone()]);
        p.canonicalize(1);
        assert_eq!(p.bond_dims(), alloc::vec![1]);
        let a = p.sites[0].data[0] / v1[0];
        assert!((p.sites[0].data[1] - v1[1] * a).norm() < 1e-14);
        assert!((a.norm() - 1.0).abs() < 1e-14);
    }

    #[test]
    fn exact_compression_is_lossless() {
        let mps = random_mps(&[3, 2, 4, 2, 3, 2], 4, 3);
        let dense = mps.to_dense();
        let mut c = mps.clone();
        let err = c.compress(usize::MAX, 0.0).unwrap();
        assert!(err == 0.0);
        assert!(max_diff(&c.to_dense(), &dense) < 1e-12 * dense.norm().max(1.0));
        let ov = mps.overlap(&c).unwrap() / (mps.norm() * c.norm());
        assert!((ov - C64::one()).norm() < 1e-12);
    }

    #[test]
    fn inflated_product_state_compresses_to_rank_one() {
        let v = Vector::from_vec(alloc::vec![C64::new(0.6, 0.1), C64::new(-0.3, 0.7)]);
        let p = TensorTrain::product_state(&[v.clone(), v.clone(), v.clone(), v.clone()]);
        // p + p + p with block structure gives bond 3 for a rank-one state
        let mut sum = TensorTrain::linear_combination(&[(C64::one(), &p), (C64::one(), &p), (C64::new(-1.0, 0.0), &p)]).unwrap();
        assert_eq!(sum.bond_dims(), alloc::vec![3, 3, 3]);
        let err = sum.compress(16, 1e-14).unwrap();
        assert_eq!(sum.bond_dims(), alloc::vec![1, 1, 1]);
        assert!(err < 1e-14);
        assert!(max_diff(&sum.to_dense(), &p.to_dense()) < 1e-14);
    }

    #[test]
    fn two_product_superposition_has_bond_two() {
        let up = Vector::from_vec(alloc::vec![C64::one(), C64::zero()]);
        let dn = Vector::from_vec(alloc::vec![C64::zero(), C64::one()]);
        let a = TensorTrain::product_state(&[up.clone(), up.clone(), up.clone()]);
        let b = TensorTrain::product_state(&[dn.clone(), dn.clone(), dn.clone()]);
        let mut ghz = TensorTrain::linear_combination(&[(C64::one(), &a), (C64::one(), &b)]).unwrap();
        let err = ghz.compress(8, 1e-12).unwrap();
        assert_eq!(ghz.bond_dims(), alloc::vec![2, 2]);
        assert!(err == 0.0);
    }

    #[test]
    fn truncation_error_is_relative_discarded_weight() {
        let mps = random_mps(&[2, 2, 2, 2, 2, 2], 6, 11);
        let exact = mps.to_dense();
        let mut c = mps.clone();
        let err = c.compress(2, 0.0).unwrap();
        assert_eq!(c.max_bond(), 2);
        let actual = (c.to_dense() - &exact).norm() / exact.norm();
        // sweep errors add in quadrature for a left-to-right SVD sweep
        assert!(err > 0.0 && actual <= err * (1.0 + 1e-9) + 1e-12, "{actual} vs {err}");
    }

    #[test]
    fn from_dense_round_trips() {
        let mut rng = lcg(5);
        let v = Vector::from_iterator(24, (0..24).map(|_| rng()));
        let tt = TensorTrain::from_dense(&v, &[2, 3, 4]).unwrap();
        assert!(max_diff(&tt.to_dense(), &v) < 1e-13);
        assert!(TensorTrain::from_dense(&v, &[5, 5]).is_err());
    }

    #[test]
    fn project_zero_contracts_aux_sites() {
        let mps = random_mps(&[2, 3, 2, 4], 3, 8);
        let dense = mps.to_dense();
        let aux = [false, true, false, true];
        let sys = mps.project_zero(&aux).unwrap().to_dense();
        // dense index (s0, n1, s2, n3) -> (s0 * 3 + n1) * 8 + s2 * 4 + n3
        for s0 in 0..2 {
            for s2 in 0..2 {
                let want = dense[(s0 * 3) * 8 + s2 * 4];
                assert!((sys[s0 * 2 + s2] - want).norm() < 1e-14);
            }
        }
        // leading aux sites too
        let mps = random_mps(&[3, 2, 2], 2, 9);
        let d = mps.to_dense();
        let p = mps.project_zero(&[true, false, true]).unwrap().to_dense();
        for s in 0..2 {
            assert!((p[s] - d[s * 2]).norm() < 1e-14);
        }
    }

    #[test]
    fn expectation_matches_dense() {
        let mps = random_mps(&[2, 3, 2], 3, 4);
        let mut rng = lcg(6);
        let op = Mat::from_fn(3, 3, |_, _| rng());
        let full = crate::linalg::kron(&crate::linalg::kron(&Mat::identity(2, 2), &op), &Mat::identity(2, 2));
        let v = mps.to_dense();
        let want = v.dotc(&(&full * &v)) / v.norm_squared();
        assert!((mps.expectation_local(1, &op) - want).norm() < 1e-12);
    }

    #[test]
    fn normalize_keeps_the_ray() {
        let mps = random_mps(&[2, 3, 2], 3, 12);
        let mut m = mps.clone();
        m.normalize();
        assert!((m.norm_sq_raw() - 1.0).abs() < 1e-12);
        let ov = mps.overlap(&m).unwrap() / (mps.norm() * m.norm());
        assert!((ov - C64::one()).norm() < 1e-12);
        assert!(max_diff(&m.to_dense(), &mps.to_dense()) < 1e-12 * mps.norm());
    }

    #[test]
    fn rejects_inconsistent_bonds() {
        let a = Tensor3::zeros(1, 2, 3);
        let b = Tensor3::zeros(2, 2, 1);
        assert!(matches!(TensorTrain::new(alloc::vec![a, b]), Err(Error::DimensionMismatch { site: 1, .. })));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]
        #[test]
        fn linear_combination_is_linear(seed in 0u64..1000, re in -2.0f64..2.0, im in -2.0f64..2.0, la in -3.0f64..3.0) {
            let mut a = random_mps(&[2, 3, 2], 2, seed);
            a.log_norm = la;
            let b = random_mps(&[2, 3, 2], 3, seed + 1);
            let c = C64::new(re, im);
            let s = TensorTrain::linear_combination(&[(c, &a), (C64::one(), &b)]).unwrap();
            let want = a.to_dense() * c + b.to_dense();
            prop_assert!(max_diff(&s.to_dense(), &want) < 1e-12 * want.norm().max(1.0));
        }

        #[test]
        fn project_zero_is_linear(seed in 0u64..1000, re in -2.0f64..2.0) {
            let a = random_mps(&[2, 3, 3], 2, seed);
            let b = random_mps(&[2, 3, 3], 2, seed + 7);
            let c = C64::new(re, 0.5);
            let aux = [false, true, true];
            let s = TensorTrain::linear_combination(&[(c, &a), (C64::one(), &b)]).unwrap();
            let lhs = s.project_zero(&aux).unwrap().to_dense();
            let rhs = a.project_zero(&aux).unwrap().to_dense() * c + b.project_zero(&aux).unwrap().to_dense();
            prop_assert!(max_diff(&lhs, &rhs) < 1e-12);
        }
    }
}
