//! Small dense linear-algebra helpers shared by the dense and tensor-train
//! code paths.

use alloc::vec::Vec;

use nalgebra::{DMatrix, DVector};
use num_traits::{One, Zero};

use crate::{Error, Result, C64};

pub type Mat = DMatrix<C64>;
pub type Vector = DVector<C64>;

pub fn identity(n: usize) -> Mat {
    Mat::identity(n, n)
}

/// Kronecker product with `a` as the slow (most significant) index.
pub fn kron(a: &Mat, b: &Mat) -> Mat {
    let (ar, ac) = a.shape();
    let (br, bc) = b.shape();
    Mat::from_fn(ar * br, ac * bc, |i, j| a[(i / br, j / bc)] * b[(i % br, j % bc)])
}

pub fn is_hermitian(m: &Mat, tol: f64) -> bool {
    m.is_square() && (m - m.adjoint()).iter().all(|z| z.norm() <= tol)
}

/// Complex matrix-vector product on raw slices, `out += alpha * m * x`.
#[inline]
pub fn gemv_acc(out: &mut [C64], alpha: C64, m: &Mat, x: &[C64]) {
    let (rows, cols) = m.shape();
    debug_assert_eq!(out.len(), rows);
    debug_assert_eq!(x.len(), cols);
    for j in 0..cols {
        let xj = x[j] * alpha;
        if xj == C64::zero() {
            continue;
        }
        let col = m.column(j);
        for i in 0..rows {
            out[i] += col[i] * xj;
        }
    }
}

/// Expectation value `<x|m|x> / <x|x>`. Returns zero for a zero vector.
pub fn expectation(m: &Mat, x: &Vector) -> C64 {
    let nrm = x.norm_squared();
    if nrm == 0.0 {
        return C64::zero();
    }
    x.dotc(&(m * x)) / nrm
}

/// Thin singular value decomposition `m = U diag(s) Vt` with values sorted in
/// descending order and a fixed gauge: the largest-magnitude entry of every
/// left singular vector is real and positive (first such entry on ties).
pub struct Svd {
    pub u: Mat,
    pub s: Vec<f64>,
    pub vt: Mat,
}

pub fn svd(m: Mat, site: usize) -> Result<Svd> {
    let (rows, cols) = m.shape();
    let k = rows.min(cols);
    if k == 0 {
        return Ok(Svd { u: Mat::zeros(rows, 0), s: Vec::new(), vt: Mat::zeros(0, cols) });
    }
    if m.iter().all(|z| *z == C64::zero()) {
        // a zero block has no meaningful gauge; pin it to the first
        // canonical vectors
        let u = Mat::from_fn(rows, k, |i, j| if i == j { C64::one() } else { C64::zero() });
        let vt = Mat::from_fn(k, cols, |i, j| if i == j { C64::one() } else { C64::zero() });
        return Ok(Svd { u, s: alloc::vec![0.0; k], vt });
    }
    if m.iter().any(|z| !(z.re.is_finite() && z.im.is_finite())) {
        return Err(Error::Svd { site });
    }
    let (u0, sv, vt0) = if rows >= cols {
        jacobi_svd(m).ok_or(Error::Svd { site })?
    } else {
        let (u, s, vt) = jacobi_svd(m.adjoint()).ok_or(Error::Svd { site })?;
        (vt.adjoint(), s, u.adjoint())
    };
    let mut order: Vec<usize> = (0..k).collect();
    order.sort_by(|&a, &b| sv[b].partial_cmp(&sv[a]).unwrap_or(core::cmp::Ordering::Equal));
    let mut u = Mat::zeros(rows, k);
    let mut vt = Mat::zeros(k, cols);
    let mut s = Vec::with_capacity(k);
    for (new, &old) in order.iter().enumerate() {
        s.push(sv[old]);
        let col = u0.column(old);
        let mut best = 0;
        let mut best_abs = -1.0;
        for i in 0..rows {
            let a = col[i].norm();
            if a > best_abs * (1.0 + 1e-12) {
                best_abs = a;
                best = i;
            }
        }
        let phase = if best_abs > 0.0 { col[best] / best_abs } else { C64::one() };
        let conj = phase.conj();
        for i in 0..rows {
            u[(i, new)] = col[i] * conj;
        }
        for j in 0..cols {
            vt[(new, j)] = vt0[(old, j)] * phase;
        }
    }
    Ok(Svd { u, s, vt })
}

const TINY: f64 = 1e-150;

/// Thin SVD of a tall matrix. A column-pivoted Householder QR `m P = Q R`
/// is followed by one-sided Jacobi rotations on the rows of `R`, which
/// converge in few sweeps and keep relative accuracy for clustered values.
fn jacobi_svd(m: Mat) -> Option<(Mat, Vec<f64>, Mat)> {
    let n = m.ncols();
    let h = Householder::new(m, true);
    let q = h.q();
    // x = R^H, rotated in place towards orthogonal columns
    let r = h.r();
    let mut x = r.adjoint();
    let mut v = Mat::identity(n, n);
    let tol = 4.0 * f64::EPSILON;
    // columns this far below the largest carry no information in double
    // precision and are treated as exact zeros
    let negligible = {
        let f = x.norm() * TINY;
        f * f
    };
    let mut converged = false;
    for _ in 0..80 {
        let mut rotated = false;
        for p in 0..n {
            for qc in p + 1..n {
                let (xp, xq) = column_pair(&mut x, p, qc);
                let (mut alpha, mut beta, mut gamma) = (0.0, 0.0, C64::zero());
                for (a, b) in xp.iter().zip(xq.iter()) {
                    alpha += a.norm_sqr();
                    beta += b.norm_sqr();
                    gamma += a.conj() * b;
                }
                let g = gamma.norm();
                if alpha <= negligible || beta <= negligible || g <= tol * alpha.sqrt() * beta.sqrt() {
                    continue;
                }
                rotated = true;
                // make the overlap real, then apply a real rotation
                let phase = (gamma / g).conj();
                let zeta = (beta - alpha) / (2.0 * g);
                let t = zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt());
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = c * t;
                rotate(xp, xq, phase, c, s);
                let (vp, vq) = column_pair(&mut v, p, qc);
                rotate(vp, vq, phase, c, s);
            }
        }
        if !rotated {
            converged = true;
            break;
        }
    }
    if !converged {
        return None;
    }
    // x V = W diag(s): R = V diag(s) W^H and m = (Q V) diag(s) (P W)^H
    let mut s = Vec::with_capacity(n);
    let mut w = Mat::zeros(n, n);
    let norms: Vec<f64> = (0..n).map(|j| x.column(j).norm()).collect();
    let cut = norms.iter().copied().fold(0.0, f64::max) * TINY;
    for j in 0..n {
        let nrm = if norms[j] <= cut { 0.0 } else { norms[j] };
        s.push(nrm);
        if nrm > 0.0 {
            for i in 0..n {
                w[(i, j)] = x[(i, j)] / nrm;
            }
        }
    }
    complete_orthonormal(&mut w, &s);
    let mut pw = Mat::zeros(n, n);
    for (row, &col) in h.perm.iter().enumerate() {
        pw.set_row(col, &w.row(row));
    }
    Some((q * v, s, pw.adjoint()))
}

fn column_pair(m: &mut Mat, p: usize, q: usize) -> (&mut [C64], &mut [C64]) {
    debug_assert!(p < q);
    let rows = m.nrows();
    let (head, tail) = m.as_mut_slice().split_at_mut(q * rows);
    (&mut head[p * rows..(p + 1) * rows], &mut tail[..rows])
}

#[inline]
fn rotate(xp: &mut [C64], xq: &mut [C64], phase: C64, c: f64, s: f64) {
    for (a, b) in xp.iter_mut().zip(xq.iter_mut()) {
        let x = *a;
        let y = *b * phase;
        *a = x * c - y * s;
        *b = x * s + y * c;
    }
}

/// Replaces the columns of `u` belonging to zero singular values by an
/// orthonormal completion.
fn complete_orthonormal(u: &mut Mat, s: &[f64]) {
    let n = u.nrows();
    let mut candidate = 0;
    for j in 0..s.len() {
        if s[j] > 0.0 {
            continue;
        }
        while candidate < n {
            let mut e = Vector::zeros(n);
            e[candidate] = C64::one();
            candidate += 1;
            for k in 0..s.len() {
                if s[k] > 0.0 || k < j {
                    let col = u.column(k).into_owned();
                    let p = col.dotc(&e);
                    e -= col * p;
                }
            }
            let nrm = e.norm();
            if nrm > 1e-8 {
                u.set_column(j, &(e / C64::new(nrm, 0.0)));
                break;
            }
        }
    }
}

/// Householder QR of an `m x n` matrix with optional column pivoting,
/// `A P = Q R`. The reflectors are kept below the diagonal of `a`, scaled
/// so that their leading entry is one.
struct Householder {
    a: Mat,
    tau: Vec<f64>,
    diag: Vec<C64>,
    /// column `j` of `Q R` is column `perm[j]` of the input
    perm: Vec<usize>,
}

impl Householder {
    fn new(m: Mat, pivot: bool) -> Self {
        let (rows, cols) = m.shape();
        let k = rows.min(cols);
        let mut a = m;
        let mut tau = alloc::vec![0.0; k];
        let mut diag = alloc::vec![C64::zero(); k];
        let mut perm: Vec<usize> = (0..cols).collect();
        for j in 0..k {
            let data = a.as_mut_slice();
            if pivot {
                let tail = |c: usize| data[c * rows + j..(c + 1) * rows].iter().map(|z| z.norm_sqr()).sum::<f64>();
                let mut best = j;
                let mut best_norm = tail(j);
                for c in j + 1..cols {
                    let nc = tail(c);
                    if nc > best_norm {
                        best = c;
                        best_norm = nc;
                    }
                }
                if best != j {
                    for i in 0..rows {
                        data.swap(j * rows + i, best * rows + i);
                    }
                    perm.swap(j, best);
                }
            }
            let col = &data[j * rows..(j + 1) * rows];
            let x0 = col[j];
            let norm = col[j..].iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
            if norm == 0.0 {
                continue;
            }
            let phase = if x0.norm() > 0.0 { x0 / x0.norm() } else { C64::one() };
            let alpha = -phase * norm;
            // H = 1 - tau v v^H with v = x - alpha e_j scaled to v_j = 1
            let inv = C64::one() / (x0 - alpha);
            for i in j + 1..rows {
                data[j * rows + i] *= inv;
            }
            let vnorm2 = 1.0 + data[j * rows + j + 1..(j + 1) * rows].iter().map(|z| z.norm_sqr()).sum::<f64>();
            let t = 2.0 / vnorm2;
            tau[j] = t;
            diag[j] = alpha;
            for c in j + 1..cols {
                let (head, tail) = data.split_at_mut(c * rows);
                reflect(&head[j * rows..(j + 1) * rows], &mut tail[..rows], j, t);
            }
        }
        Self { a, tau, diag, perm }
    }

    fn r(&self) -> Mat {
        let (k, cols) = (self.tau.len(), self.a.ncols());
        let mut r = Mat::zeros(k, cols);
        for c in 0..cols {
            for i in 0..k.min(c + 1) {
                r[(i, c)] = if i == c { self.diag[i] } else { self.a[(i, c)] };
            }
        }
        r
    }

    fn q(&self) -> Mat {
        let rows = self.a.nrows();
        let k = self.tau.len();
        let mut q = Mat::zeros(rows, k);
        for c in 0..k {
            q[(c, c)] = C64::one();
        }
        for j in (0..k).rev() {
            if self.tau[j] == 0.0 {
                continue;
            }
            let v = &self.a.as_slice()[j * rows..(j + 1) * rows];
            let qd = q.as_mut_slice();
            for c in j..k {
                reflect(v, &mut qd[c * rows..(c + 1) * rows], j, self.tau[j]);
            }
        }
        q
    }
}

/// `y -= tau v (v^H y)` for the reflector stored in `v[j + 1..]` with an
/// implicit unit entry at `j`.
#[inline]
fn reflect(v: &[C64], y: &mut [C64], j: usize, tau: f64) {
    let mut dot = y[j];
    for (a, b) in v[j + 1..].iter().zip(&y[j + 1..]) {
        dot += a.conj() * b;
    }
    let f = dot * tau;
    y[j] -= f;
    for (b, a) in y[j + 1..].iter_mut().zip(&v[j + 1..]) {
        *b -= f * a;
    }
}

/// Thin QR decomposition with a real non-negative diagonal of `R`, which makes
/// the factorization of an isometry return the isometry itself.
pub fn qr_positive(m: Mat) -> (Mat, Mat) {
    let (rows, cols) = m.shape();
    let h = Householder::new(m, false);
    let (mut q, mut r) = (h.q(), h.r());
    for i in 0..rows.min(cols) {
        let d = r[(i, i)];
        let n = d.norm();
        if n > 0.0 {
            let phase = d / n;
            for j in 0..cols {
                r[(i, j)] *= phase.conj();
            }
            for row in 0..rows {
                q[(row, i)] *= phase;
            }
        }
    }
    (q, r)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample(rows: usize, cols: usize, seed: u64) -> Mat {
        let mut x = seed;
        Mat::from_fn(rows, cols, |_, _| {
            x = x.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            let a = ((x >> 11) as f64) / ((1u64 << 53) as f64) - 0.5;
            x = x.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            let b = ((x >> 11) as f64) / ((1u64 << 53) as f64) - 0.5;
            C64::new(a, b)
        })
    }

    #[test]
    fn svd_reconstructs_and_is_gauge_fixed() {
        let m = sample(7, 4, 3);
        let d = svd(m.clone(), 0).unwrap();
        let back = &d.u * Mat::from_diagonal(&DVector::from_iterator(4, d.s.iter().map(|&x| C64::new(x, 0.0)))) * &d.vt;
        assert!((back - &m).norm() < 1e-12);
        assert!(d.s.windows(2).all(|w| w[0] >= w[1]));
        for j in 0..4 {
            let col = d.u.column(j);
            let (i, _) = col.iter().enumerate().fold((0, -1.0), |acc, (i, z)| {
                if z.norm() > acc.1 { (i, z.norm()) } else { acc }
            });
            assert!(col[i].im.abs() < 1e-14 && col[i].re > 0.0);
        }
    }

    fn recompose(d: &Svd) -> Mat {
        let k = d.s.len();
        &d.u * Mat::from_diagonal(&DVector::from_iterator(k, d.s.iter().map(|&x| C64::new(x, 0.0)))) * &d.vt
    }

    #[test]
    fn svd_is_accurate_for_clustered_values_of_wide_matrices() {
        // two nearly equal singular values in a 2 x 4 block
        let a = sample(2, 2, 5);
        let (q, _) = qr_positive(a);
        let w = sample(4, 2, 6);
        let (qw, _) = qr_positive(w);
        let s = Mat::from_diagonal(&DVector::from_vec(alloc::vec![C64::new(0.70719, 0.0), C64::new(0.70628, 0.0)]));
        let m = &q * s * qw.adjoint();
        let d = svd(m.clone(), 0).unwrap();
        assert!((recompose(&d) - &m).norm() < 1e-15 * 8.0);
        assert!((d.s[0] - 0.70719).abs() < 1e-15 && (d.s[1] - 0.70628).abs() < 1e-15);
    }

    #[test]
    fn svd_of_rank_deficient_matrix_has_orthonormal_factors() {
        let a = sample(5, 2, 7);
        let b = sample(2, 4, 8);
        let m = &a * &b;
        let d = svd(m.clone(), 0).unwrap();
        assert!((recompose(&d) - &m).norm() < 1e-13);
        assert!((d.u.adjoint() * &d.u - identity(4)).norm() < 1e-12);
        assert!((&d.vt * d.vt.adjoint() - identity(4)).norm() < 1e-12);
        assert!(d.s[2] < 1e-14 && d.s[3] < 1e-14);
    }

    #[test]
    fn qr_of_isometry_is_identity_r() {
        let m = sample(6, 3, 9);
        let (q, _) = qr_positive(m);
        let (q2, r2) = qr_positive(q.clone());
        assert!((r2 - identity(3)).norm() < 1e-12);
        assert!((q2 - q).norm() < 1e-12);
    }

    #[test]
    fn qr_reconstructs_tall_wide_and_deficient() {
        let mut deficient = sample(5, 3, 4);
        for i in 0..5 {
            deficient[(i, 1)] = C64::zero();
        }
        for m in [sample(7, 3, 1), sample(3, 7, 2), sample(4, 4, 3), deficient] {
            let (q, r) = qr_positive(m.clone());
            let k = m.nrows().min(m.ncols());
            assert_eq!((q.ncols(), r.nrows()), (k, k));
            assert!((&q * &r - &m).norm() < 1e-12 * m.norm().max(1.0));
            for i in 0..k {
                assert!(r[(i, i)].im.abs() < 1e-14 && r[(i, i)].re >= 0.0);
                for j in 0..i {
                    assert!(r[(i, j)].norm() < 1e-14);
                }
            }
        }
    }

    #[test]
    fn kron_orders_slow_index_first() {
        let a = Mat::from_row_slice(2, 2, &[C64::one(), C64::zero(), C64::zero(), -C64::one()]);
        let b = identity(3);
        let k = kron(&a, &b);
        assert_eq!(k[(0, 0)], C64::one());
        assert_eq!(k[(3, 3)], -C64::one());
        assert_eq!(k[(2, 2)], C64::one());
    }
}
