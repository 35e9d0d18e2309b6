//! Dense complex matrix helpers on top of nalgebra.
//!
//! Decompositions go through faer: nalgebra's complex SVD stalls near
//! `1e-9` backward error when singular values cluster.

use faer::{Mat, MatRef, Side};
use nalgebra::DMatrix;
use num_complex::Complex64;

pub type C64 = Complex64;
pub type CMat = DMatrix<C64>;

pub fn c(re: f64, im: f64) -> C64 {
    C64::new(re, im)
}

pub fn identity(n: usize) -> CMat {
    CMat::identity(n, n)
}

/// Singular values, non-increasing.
pub fn singular_values(m: &CMat) -> Vec<f64> {
    if m.nrows() == 0 || m.ncols() == 0 {
        return Vec::new();
    }
    to_faer(m).singular_values().expect("svd converges on finite input")
}

fn to_faer(m: &CMat) -> Mat<C64> {
    Mat::from_fn(m.nrows(), m.ncols(), |i, j| m[(i, j)])
}

fn from_faer(m: MatRef<'_, C64>) -> CMat {
    CMat::from_fn(m.nrows(), m.ncols(), |i, j| m[(i, j)])
}

/// Spectral norm.
pub fn norm2(m: &CMat) -> f64 {
    if m.nrows() == 0 || m.ncols() == 0 {
        return 0.0;
    }
    // Frobenius bounds the spectral norm; skip the SVD when it is already tiny
    let f = m.norm();
    if f <= 1e-14 {
        return f;
    }
    singular_values(m)[0]
}

/// Number of singular values above `eps * max(1, s_max)`.
pub fn rank(m: &CMat, eps: f64) -> usize {
    let s = singular_values(m);
    let cut = eps * s.first().copied().unwrap_or(0.0).max(1.0);
    s.iter().filter(|&&x| x > cut).count()
}

/// Thin SVD with factors sorted by non-increasing singular value.
pub struct Svd {
    pub u: CMat,
    pub s: Vec<f64>,
    pub v: CMat,
}

pub fn svd(m: &CMat) -> Svd {
    let (r, c) = (m.nrows(), m.ncols());
    let k = r.min(c);
    if k == 0 {
        return Svd {
            u: CMat::zeros(r, 0),
            s: Vec::new(),
            v: CMat::zeros(c, 0),
        };
    }
    let d = to_faer(m).thin_svd().expect("svd converges on finite input");
    Svd {
        u: from_faer(d.U()),
        s: d.S().column_vector().iter().map(|x| x.re).collect(),
        v: from_faer(d.V()),
    }
}

/// Unitary polar factor `U V^*` of a square matrix (Procrustes rotation).
pub fn unitary_polar(m: &CMat) -> CMat {
    let d = svd(m);
    &d.u * d.v.adjoint()
}

/// Eigen-decomposition of the Hermitian part, eigenvalues non-increasing.
pub fn hermitian_eigen(m: &CMat) -> (Vec<f64>, CMat) {
    let n = m.nrows();
    if n == 0 {
        return (Vec::new(), CMat::zeros(0, 0));
    }
    let h = (m + m.adjoint()) * c(0.5, 0.0);
    let e = to_faer(&h).self_adjoint_eigen(Side::Lower).expect("eigensolver converges on finite input");
    // faer sorts ascending
    let vals: Vec<f64> = e.S().column_vector().iter().rev().map(|x| x.re).collect();
    let u = e.U();
    let vecs = CMat::from_fn(n, n, |i, j| u[(i, n - 1 - j)]);
    (vals, vecs)
}

/// Orthonormal basis of the range of a projection-like Hermitian matrix
/// (eigenvalues above 1/2) and of its kernel.
pub fn range_and_kernel(p: &CMat) -> (CMat, CMat) {
    let n = p.nrows();
    let (vals, vecs) = hermitian_eigen(p);
    let k = vals.iter().filter(|&&x| x > 0.5).count();
    (vecs.columns(0, k).into_owned(), vecs.columns(k, n - k).into_owned())
}

/// Orthonormal basis of the orthogonal complement of the column span of `b`.
pub fn complement(b: &CMat) -> CMat {
    let n = b.nrows();
    if b.ncols() == 0 {
        return identity(n);
    }
    let p = b * b.adjoint();
    range_and_kernel(&p).1
}

/// `max |B^* B - I|` in spectral norm.
pub fn orthonormality_defect(b: &CMat) -> f64 {
    let k = b.ncols();
    norm2(&(b.adjoint() * b - identity(k)))
}

/// Matrix with the diagonal removed.
pub fn off_diagonal(m: &CMat) -> CMat {
    let mut o = m.clone();
    for i in 0..o.nrows().min(o.ncols()) {
        o[(i, i)] = C64::new(0.0, 0.0);
    }
    o
}

/// Embed `m` as the top-left corner of an `n x n` matrix whose remaining
/// diagonal is `fill`.
pub fn pad(m: &CMat, n: usize, fill: impl Fn(usize) -> C64) -> CMat {
    let k = m.nrows();
    let mut out = CMat::zeros(n, n);
    out.view_mut((0, 0), (k, k)).copy_from(m);
    for i in k..n {
        out[(i, i)] = fill(i);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn svd_sorted_and_reconstructs() {
        let m = CMat::from_fn(5, 3, |i, j| c((i * 3 + j) as f64 * 0.1, (i as f64 - j as f64) * 0.2));
        let d = svd(&m);
        assert!(d.s.windows(2).all(|w| w[0] >= w[1]));
        let sig = CMat::from_diagonal(&nalgebra::DVector::from_iterator(
            3,
            d.s.iter().map(|&x| c(x, 0.0)),
        ));
        let back = &d.u * sig * d.v.adjoint();
        assert!((back - m).norm() < 1e-12);
    }

    #[test]
    fn range_kernel_split() {
        let mut p = CMat::zeros(3, 3);
        p[(0, 0)] = c(1.0, 0.0);
        p[(2, 2)] = c(1.0, 0.0);
        let (r, k) = range_and_kernel(&p);
        assert_eq!((r.ncols(), k.ncols()), (2, 1));
        assert!(k[(1, 0)].norm() > 1.0 - 1e-12);
        assert_eq!(complement(&r).ncols(), 1);
    }

    #[test]
    fn rank_uses_relative_cutoff() {
        let m = CMat::from_diagonal(&nalgebra::DVector::from_vec(vec![
            c(1e3, 0.0),
            c(1e-7, 0.0),
            c(1e-10, 0.0),
        ]));
        assert_eq!(rank(&m, 1e-9), 1);
        let m = CMat::from_diagonal(&nalgebra::DVector::from_vec(vec![c(0.5, 0.0), c(2e-9, 0.0)]));
        assert_eq!(rank(&m, 1e-9), 2);
    }
}
