//! Essential codimension of projection pairs and the unitaries that realize
//! zero-codimension equivalences.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{self, CMat};
use crate::op_core::{op_in_ideal, sub, PartialIsometry, Projection, Tail, TruncOperator};
use crate::seq_ideal::IdealTag;
use crate::tolerances::ToleranceConfig;

/// `[P:Q] = dim(N(Q) n R(P)) - dim(R(Q) n N(P))`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EssCodimResult {
    pub value: i64,
    pub dim_kernel_side: usize,
    pub dim_cokernel_side: usize,
    pub trace_crosscheck: Option<f64>,
}

#[derive(Serialize, Deserialize)]
struct RawCodim {
    value: i64,
    dims: [usize; 2],
    #[serde(default, skip_serializing_if = "Option::is_none")]
    trace: Option<f64>,
}

impl Serialize for EssCodimResult {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        RawCodim {
            value: self.value,
            dims: [self.dim_kernel_side, self.dim_cokernel_side],
            trace: self.trace_crosscheck,
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for EssCodimResult {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let raw = RawCodim::deserialize(d)?;
        Ok(EssCodimResult {
            value: raw.value,
            dim_kernel_side: raw.dims[0],
            dim_cokernel_side: raw.dims[1],
            trace_crosscheck: raw.trace,
        })
    }
}

/// Gram matrix `B_q* B_p` between the two ranges.
fn cross_gram(p: &Projection, q: &Projection) -> CMat {
    q.basis().adjoint() * p.basis()
}

pub fn is_fredholm_pair(p: &Projection, q: &Projection) -> Result<bool> {
    is_fredholm_pair_with(p, q, &ToleranceConfig::default())
}

/// Spectral-gap test on `QP` between the ranges, plus equal tails.
pub fn is_fredholm_pair_with(p: &Projection, q: &Projection, tol: &ToleranceConfig) -> Result<bool> {
    if p.dim() != q.dim() {
        return Err(Error::DimMismatch(p.dim(), q.dim()));
    }
    if p.identity_tail() != q.identity_tail() {
        return Ok(false);
    }
    let s = linalg::singular_values(&cross_gram(p, q));
    Ok(s.iter().all(|&x| x <= tol.gap_lo || x >= tol.gap_hi))
}

pub fn ess_codim(p: &Projection, q: &Projection) -> Result<EssCodimResult> {
    ess_codim_with(p, q, &ToleranceConfig::default())
}

pub fn ess_codim_with(p: &Projection, q: &Projection, tol: &ToleranceConfig) -> Result<EssCodimResult> {
    if p.dim() != q.dim() {
        return Err(Error::DimMismatch(p.dim(), q.dim()));
    }
    if p.identity_tail() != q.identity_tail() {
        return Err(Error::TailMismatch);
    }
    if !is_fredholm_pair_with(p, q, tol)? {
        return Err(Error::NotFredholmPair);
    }
    let r = linalg::rank(&cross_gram(p, q), tol.rank_eps);
    let kernel_side = p.rank() - r;
    let cokernel_side = q.rank() - r;
    // equal tails cancel, so P - Q is a finite block and trace class
    let trace = p.basis().norm_squared() - q.basis().norm_squared();
    Ok(EssCodimResult {
        value: kernel_side as i64 - cokernel_side as i64,
        dim_kernel_side: kernel_side,
        dim_cokernel_side: cokernel_side,
        trace_crosscheck: Some(trace),
    })
}

/// `B_q W B_p*` with `W` the unitary polar factor of `B_q* B_p`; requires
/// equal column counts.
pub(crate) fn align(bq: &CMat, bp: &CMat) -> CMat {
    let n = bp.nrows();
    if bp.ncols() == 0 {
        return CMat::zeros(n, n);
    }
    let w = linalg::unitary_polar(&(bq.adjoint() * bp));
    bq * w * bp.adjoint()
}

/// Block of `sum_n U_n` where `U_n` maps `R(P_n)` onto `R(Q_n)` by the
/// minimal rotation. Ranks must agree pairwise.
pub(crate) fn family_alignment(ps: &[&Projection], qs: &[&Projection]) -> CMat {
    let n = ps.first().map_or(0, |p| p.dim());
    let mut u = CMat::zeros(n, n);
    for (p, q) in ps.iter().zip(qs) {
        debug_assert_eq!(p.rank(), q.rank());
        u += align(q.basis(), p.basis());
    }
    u
}

fn difference_in_ideal(p: &Projection, q: &Projection, j: IdealTag) -> bool {
    match sub(&p.op(), &q.op()) {
        Ok(d) => op_in_ideal(&d, j),
        Err(_) => false,
    }
}

pub fn conjugating_unitary(p: &Projection, q: &Projection, j: IdealTag) -> Result<TruncOperator> {
    conjugating_unitary_with(p, q, j, &ToleranceConfig::default())
}

/// Unitary `U` with `U P U* = Q` and `U - I` in `j`, built by aligning range
/// and kernel bases.
pub fn conjugating_unitary_with(
    p: &Projection,
    q: &Projection,
    j: IdealTag,
    tol: &ToleranceConfig,
) -> Result<TruncOperator> {
    if p.dim() != q.dim() {
        return Err(Error::DimMismatch(p.dim(), q.dim()));
    }
    if !difference_in_ideal(p, q, j) {
        return Err(Error::PreconditionFailed(format!("P - Q is not in {j}")));
    }
    let codim = match ess_codim_with(p, q, tol) {
        Ok(c) => c,
        Err(Error::NotFredholmPair) => {
            return Err(Error::PreconditionFailed("not a Fredholm pair".into()))
        }
        Err(e) => return Err(e),
    };
    if codim.value != 0 {
        return Err(Error::PreconditionFailed(format!("codimension {} is nonzero", codim.value)));
    }
    let (pc, qc) = (p.complement(), q.complement());
    let block = align(q.basis(), p.basis()) + align(qc.basis(), pc.basis());
    Ok(TruncOperator::raw(block, Tail::Identity))
}

/// Unitary `U` with `U V1 = V2` and `U - I` in `j`.
pub fn intertwine_partial_isometries(
    v1: &PartialIsometry,
    v2: &PartialIsometry,
    j: IdealTag,
) -> Result<TruncOperator> {
    let (a, b) = (v1.op(), v2.op());
    if a.dim() != b.dim() {
        return Err(Error::DimMismatch(a.dim(), b.dim()));
    }
    match sub(a, b) {
        Ok(d) if op_in_ideal(&d, j) => {}
        _ => return Err(Error::PreconditionFailed(format!("V1 - V2 is not in {j}"))),
    }
    let (i1, i2) = (v1.initial(), v2.initial());
    if i1.tail() != i2.tail() || linalg::norm2(&(i1.block() - i2.block())) > 1e-9 {
        return Err(Error::KernelMismatch);
    }
    let f1 = Projection::from_op(&v1.final_projection())?;
    let f2 = Projection::from_op(&v2.final_projection())?;
    let (c1, c2) = (f1.complement(), f2.complement());
    if c1.rank() != c2.rank() {
        return Err(Error::PreconditionFailed("final projections have different ranks".into()));
    }
    // V2 V1* on R(V1), minimal rotation R(V1)^perp -> R(V2)^perp elsewhere
    let block = b.block() * a.block().adjoint() + align(c2.basis(), c1.basis());
    Ok(TruncOperator::raw(block, Tail::Identity))
}

pub fn balance_codimensions(
    ps: &[Projection],
    es: &[Projection],
    j: IdealTag,
    fixed: Option<usize>,
) -> Result<Vec<Projection>> {
    balance_codimensions_with(ps, es, j, fixed, &ToleranceConfig::default())
}

/// Moves rank-one subprojections between the `E_n` until every
/// `[P_n : E_n]` vanishes. Transfers go greedily in index order, always from
/// the first surplus part to the first deficit part; `fixed` is never touched.
/// A coordinate vector is moved when the source part is diagonal.
pub fn balance_codimensions_with(
    ps: &[Projection],
    es: &[Projection],
    j: IdealTag,
    fixed: Option<usize>,
    tol: &ToleranceConfig,
) -> Result<Vec<Projection>> {
    if ps.len() != es.len() {
        return Err(Error::InvalidInput(format!(
            "{} projections against {} diagonal parts",
            ps.len(),
            es.len()
        )));
    }
    let mut codims = Vec::with_capacity(ps.len());
    for (n, (p, e)) in ps.iter().zip(es).enumerate() {
        if !difference_in_ideal(p, e, j) {
            return Err(Error::PreconditionFailed(format!("P_{} - E_{} is not in {j}", n + 1, n + 1)));
        }
        codims.push(ess_codim_with(p, e, tol)?.value);
    }
    let total: i64 = codims.iter().sum();
    if total != 0 {
        return Err(Error::TotalCodimNonzero(total));
    }
    if let Some(f) = fixed {
        if codims.get(f).is_some_and(|&c| c != 0) {
            return Err(Error::CodimNonzero(f + 1));
        }
    }
    let mut out: Vec<Projection> = es.to_vec();
    while let Some(n) = codims.iter().position(|&c| c > 0) {
        let m = codims
            .iter()
            .enumerate()
            .position(|(m, &c)| c < 0 && Some(m) != fixed)
            .expect("a surplus part exists while the total is zero");
        let v = transfer_vector(&out[m], &ps[n]);
        out[m] = remove_vector(&out[m], &v);
        out[n] = add_vector(&out[n], &v);
        codims[n] -= 1;
        codims[m] += 1;
    }
    Ok(out)
}

/// Unit vector in `R(E)` best aligned with `R(P)`: a coordinate vector if `E`
/// is diagonal, otherwise the top eigenvector of the compression.
fn transfer_vector(e: &Projection, p: &Projection) -> CMat {
    let n = e.dim();
    let weight = |i: usize| p.basis().row(i).iter().map(|z| z.norm_sqr()).sum::<f64>();
    let coords = e.dominant_coordinates();
    let diagonal = coords.len() == e.rank()
        && linalg::norm2(&linalg::off_diagonal(&e.block())) <= 1e-10;
    if diagonal {
        let best = coords
            .iter()
            .copied()
            .max_by(|&a, &b| weight(a).total_cmp(&weight(b)).then(b.cmp(&a)))
            .expect("surplus part has positive rank");
        let mut v = CMat::zeros(n, 1);
        v[(best, 0)] = linalg::c(1.0, 0.0);
        v
    } else {
        let b = e.basis();
        let m = b.adjoint() * p.block() * b;
        let (_, vecs) = linalg::hermitian_eigen(&m);
        b * vecs.columns(0, 1)
    }
}

fn remove_vector(e: &Projection, v: &CMat) -> Projection {
    let b = e.basis();
    // basis of R(E) minus span(v): complement of v inside the range
    let inner = b.adjoint() * v;
    let rest = linalg::complement(&inner);
    Projection::from_basis_unchecked(b * rest, e.identity_tail())
}

fn add_vector(e: &Projection, v: &CMat) -> Projection {
    let b = e.basis();
    let mut nb = CMat::zeros(e.dim(), b.ncols() + 1);
    nb.columns_mut(0, b.ncols()).copy_from(b);
    nb.set_column(b.ncols(), &v.column(0));
    Projection::from_basis_unchecked(nb, e.identity_tail())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::constructions::rotation2;
    use crate::linalg::c;

    fn rotated(theta: f64) -> (Projection, Projection, CMat) {
        let r = rotation2(theta);
        let p = Projection::coordinate(2, &[0], false);
        let q = p.conjugated(&r);
        (p, q, r)
    }

    #[test]
    fn finite_trace_example() {
        let p = Projection::coordinate(5, &[0, 1, 2], false);
        let q = Projection::coordinate(5, &[0], false);
        let r = ess_codim(&p, &q).unwrap();
        assert_eq!(r.value, 2);
        assert_eq!((r.dim_kernel_side, r.dim_cokernel_side), (2, 0));
        assert!((r.trace_crosscheck.unwrap() - 2.0).abs() < 1e-12);
        assert_eq!(ess_codim(&p, &p).unwrap().value, 0);
    }

    #[test]
    fn orthogonal_rank_one_pair() {
        let p = Projection::coordinate(3, &[0], false);
        let q = Projection::coordinate(3, &[1], false);
        assert!(is_fredholm_pair(&p, &q).unwrap());
        assert_eq!(ess_codim(&p, &q).unwrap().value, 0);
        let u = conjugating_unitary(&p, &q, IdealTag::FiniteRank).unwrap();
        let back = u.block() * p.block() * u.block().adjoint();
        assert!((back - q.block()).norm() < 1e-12);
    }

    #[test]
    fn tiny_rotation_breaks_gap() {
        let (p, q, _) = rotated(1e-8);
        let q = q.complement();
        let p = Projection::from_basis(p.basis().clone(), true).unwrap();
        // cross Gram singular value sin(1e-8) sits inside the gap
        assert!(!is_fredholm_pair(&p, &q).unwrap());
        assert_eq!(ess_codim(&p, &q), Err(Error::NotFredholmPair));
    }

    #[test]
    fn tail_mismatch() {
        let p = Projection::coordinate(2, &[0], true);
        let q = Projection::coordinate(2, &[0], false);
        assert_eq!(ess_codim(&p, &q), Err(Error::TailMismatch));
        assert!(!is_fredholm_pair(&p, &q).unwrap());
    }

    #[test]
    fn rotation_is_recovered() {
        let theta = 0.3;
        let (p, q, r) = rotated(theta);
        let u = conjugating_unitary(&p, &q, IdealTag::FiniteRank).unwrap();
        assert!((u.block() - &r).norm() < 1e-12);
        let s = linalg::singular_values(&(u.block() - linalg::identity(2)));
        let expect = (c(1.0, 0.0) - c(0.0, theta).exp()).norm();
        assert!(s.iter().all(|x| (x - expect).abs() < 1e-12));
    }

    #[test]
    fn codim_one_rejected() {
        let p = Projection::coordinate(3, &[0, 1], false);
        let q = Projection::coordinate(3, &[0], false);
        assert!(matches!(
            conjugating_unitary(&p, &q, IdealTag::FiniteRank),
            Err(Error::PreconditionFailed(_))
        ));
    }

    #[test]
    fn equal_projections_give_identity() {
        let p = Projection::coordinate(4, &[1, 3], true);
        let u = conjugating_unitary(&p, &p, IdealTag::FiniteRank).unwrap();
        assert!((u.block() - linalg::identity(4)).norm() < 1e-12);
        assert_eq!(u.tail(), &Tail::Identity);
    }

    #[test]
    fn intertwine_embeddings() {
        let mut a = CMat::zeros(3, 3);
        a[(0, 0)] = c(1.0, 0.0);
        let mut b = CMat::zeros(3, 3);
        b[(1, 0)] = c(1.0, 0.0);
        let v1 = PartialIsometry::new(TruncOperator::finite(a).unwrap()).unwrap();
        let v2 = PartialIsometry::new(TruncOperator::finite(b).unwrap()).unwrap();
        let u = intertwine_partial_isometries(&v1, &v2, IdealTag::FiniteRank).unwrap();
        assert!((u.block() * v1.op().block() - v2.op().block()).norm() < 1e-12);
        assert!(crate::op_core::is_unitary(&u, 1e-12));
        let same = intertwine_partial_isometries(&v1, &v1, IdealTag::FiniteRank).unwrap();
        assert!((same.block() - linalg::identity(3)).norm() < 1e-12);

        let mut k = CMat::zeros(3, 3);
        k[(0, 1)] = c(1.0, 0.0);
        let v3 = PartialIsometry::new(TruncOperator::finite(k).unwrap()).unwrap();
        assert_eq!(
            intertwine_partial_isometries(&v1, &v3, IdealTag::FiniteRank),
            Err(Error::KernelMismatch)
        );
    }

    #[test]
    fn balance_moves_one_coordinate() {
        let ps = vec![
            Projection::coordinate(4, &[0, 1], false),
            Projection::coordinate(4, &[2, 3], true),
        ];
        let es = vec![
            Projection::coordinate(4, &[0], false),
            Projection::coordinate(4, &[1, 2, 3], true),
        ];
        let out = balance_codimensions(&ps, &es, IdealTag::FiniteRank, None).unwrap();
        for (p, e) in ps.iter().zip(&out) {
            assert_eq!(ess_codim(p, e).unwrap().value, 0);
        }
        assert_eq!(out[0].dominant_coordinates(), vec![0, 1]);
        let same = balance_codimensions(&ps, &ps, IdealTag::FiniteRank, None).unwrap();
        assert_eq!(same, ps);
        let broken = vec![es[0].clone(), Projection::coordinate(4, &[2, 3], true)];
        assert_eq!(
            balance_codimensions(&ps, &broken, IdealTag::FiniteRank, None),
            Err(Error::TotalCodimNonzero(1))
        );
    }
}
