//! Operators on l2 modelled as a dense `N x N` block plus a structured tail.
//!
//! The tail acts on the coordinates beyond `N` and is one of zero, the
//! identity, or a nonnegative diagonal given by a [`SeqProfile`] (entry `i` of
//! the profile sits at coordinate `N + i`).

use std::ops::Deref;

use serde::de::Error as _;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};
use crate::linalg::{self, c, CMat, C64};
use crate::seq_ideal::{in_ideal, IdealTag, SeqProfile, TailModel};
use crate::tolerances::{PROJ_TOL, RANK_EPS};

#[derive(Debug, Clone, PartialEq)]
pub enum Tail {
    Zero,
    Identity,
    Diag(SeqProfile),
}

impl Tail {
    fn name(&self) -> &'static str {
        match self {
            Tail::Zero => "zero",
            Tail::Identity => "identity",
            Tail::Diag(_) => "diag",
        }
    }

    /// Supremum of the tail entries.
    fn sup(&self) -> f64 {
        match self {
            Tail::Zero => 0.0,
            Tail::Identity => 1.0,
            Tail::Diag(p) => p.term(1),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TruncOperator {
    block: CMat,
    tail: Tail,
}

impl TruncOperator {
    pub fn new(block: CMat, tail: Tail) -> Result<Self> {
        if block.nrows() != block.ncols() {
            return Err(Error::InvalidInput(format!(
                "block must be square, got {}x{}",
                block.nrows(),
                block.ncols()
            )));
        }
        if block.iter().any(|z| !(z.re.is_finite() && z.im.is_finite())) {
            return Err(Error::InvalidInput("block has non-finite entries".into()));
        }
        Ok(TruncOperator { block, tail })
    }

    pub(crate) fn raw(block: CMat, tail: Tail) -> Self {
        debug_assert_eq!(block.nrows(), block.ncols());
        TruncOperator { block, tail }
    }

    pub fn identity(n: usize) -> Self {
        Self::raw(linalg::identity(n), Tail::Identity)
    }

    pub fn zero(n: usize) -> Self {
        Self::raw(CMat::zeros(n, n), Tail::Zero)
    }

    /// Finite block with a zero tail.
    pub fn finite(block: CMat) -> Result<Self> {
        Self::new(block, Tail::Zero)
    }

    /// Diagonal operator from real entries and a tail.
    pub fn diagonal(entries: &[f64], tail: Tail) -> Self {
        let d = nalgebra::DVector::from_iterator(entries.len(), entries.iter().map(|&x| c(x, 0.0)));
        Self::raw(CMat::from_diagonal(&d), tail)
    }

    pub fn dim(&self) -> usize {
        self.block.nrows()
    }

    pub fn block(&self) -> &CMat {
        &self.block
    }

    pub fn tail(&self) -> &Tail {
        &self.tail
    }

    pub fn into_parts(self) -> (CMat, Tail) {
        (self.block, self.tail)
    }

    /// Same operator at a larger truncation.
    pub fn embed(&self, n: usize) -> Result<Self> {
        let k = self.dim();
        if n < k {
            return Err(Error::DimMismatch(k, n));
        }
        let (block, tail) = match &self.tail {
            Tail::Zero => (linalg::pad(&self.block, n, |_| c(0.0, 0.0)), Tail::Zero),
            Tail::Identity => (linalg::pad(&self.block, n, |_| c(1.0, 0.0)), Tail::Identity),
            Tail::Diag(p) => (
                linalg::pad(&self.block, n, |i| c(p.term(i - k + 1), 0.0)),
                Tail::Diag(p.dropped(n - k)),
            ),
        };
        Ok(Self::raw(block, tail))
    }

    /// Multiply by a scalar; only tails that stay representable are allowed.
    pub fn scaled(&self, z: C64) -> Result<Self> {
        let tail = match &self.tail {
            Tail::Zero => Tail::Zero,
            Tail::Identity if z == c(1.0, 0.0) => Tail::Identity,
            Tail::Identity if z == c(0.0, 0.0) => Tail::Zero,
            Tail::Diag(p) if z.im == 0.0 && z.re >= 0.0 => {
                if z.re == 0.0 {
                    Tail::Zero
                } else {
                    Tail::Diag(scale_profile(p, z.re)?)
                }
            }
            t => {
                return Err(Error::Unrepresentable(format!("{} tail scaled by {z}", t.name())));
            }
        };
        Ok(Self::raw(&self.block * z, tail))
    }
}

fn scale_profile(p: &SeqProfile, s: f64) -> Result<SeqProfile> {
    let prefix = p.prefix().iter().map(|x| x * s).collect();
    let tail = p.tail().clone();
    let tail = if tail.is_zero() { tail } else { tail.with_scale(tail.scale() * s) };
    SeqProfile::build(prefix, tail, p.shift())
}

fn same_shape(a: &TailModel, b: &TailModel) -> bool {
    use TailModel::*;
    match (a, b) {
        (Power { p: x, .. }, Power { p: y, .. }) => x == y,
        (PowerLog { p: x, k: i, .. }, PowerLog { p: y, k: j, .. }) => x == y && i == j,
        (Geometric { r: x, .. }, Geometric { r: y, .. }) => x == y,
        _ => false,
    }
}

/// Termwise combination of two profiles when the result has an exact tail.
fn combine_profiles(a: &SeqProfile, b: &SeqProfile, product: bool) -> Result<SeqProfile> {
    use TailModel::*;
    let fail = || {
        Err(Error::Unrepresentable(format!(
            "diagonal tails {:?} and {:?} do not combine exactly",
            a.tail(),
            b.tail()
        )))
    };
    let len = a.prefix().len().max(b.prefix().len());
    let op = |x: f64, y: f64| if product { x * y } else { x + y };
    let prefix: Vec<f64> = (1..=len).map(|n| op(a.term(n), b.term(n))).collect();
    let (ta, tb) = (a.tail(), b.tail());
    let (tail, shift) = match (ta.is_zero(), tb.is_zero()) {
        (true, true) => (Zero, 0),
        (true, false) if product => (Zero, 0),
        (false, true) if product => (Zero, 0),
        (true, false) => (tb.clone(), b.shift()),
        (false, true) => (ta.clone(), a.shift()),
        (false, false) => {
            if a.shift() != b.shift() {
                return fail();
            }
            let t = if product {
                match (ta, tb) {
                    (Power { p: x, scale: s }, Power { p: y, scale: t }) => Power { p: x + y, scale: s * t },
                    (Geometric { r: x, scale: s }, Geometric { r: y, scale: t }) => {
                        Geometric { r: x * y, scale: s * t }
                    }
                    _ => return fail(),
                }
            } else if same_shape(ta, tb) {
                ta.with_scale(ta.scale() + tb.scale())
            } else {
                return fail();
            };
            (t, a.shift())
        }
    };
    // a shorter prefix was padded with evaluated tail terms; the tail picks up
    // at the same global index, so the shift is unchanged
    SeqProfile::build(prefix, tail, shift)
}

fn tail_add(a: &Tail, b: &Tail) -> Result<Tail> {
    match (a, b) {
        (Tail::Zero, t) | (t, Tail::Zero) => Ok(t.clone()),
        (Tail::Diag(p), Tail::Diag(q)) => Ok(Tail::Diag(combine_profiles(p, q, false)?)),
        (x, y) => Err(Error::Unrepresentable(format!("{} + {} tail", x.name(), y.name()))),
    }
}

fn tail_sub(a: &Tail, b: &Tail) -> Result<Tail> {
    match (a, b) {
        (t, Tail::Zero) => Ok(t.clone()),
        (Tail::Identity, Tail::Identity) => Ok(Tail::Zero),
        (Tail::Diag(p), Tail::Diag(q)) if p == q => Ok(Tail::Zero),
        (x, y) => Err(Error::Unrepresentable(format!("{} - {} tail", x.name(), y.name()))),
    }
}

fn tail_mul(a: &Tail, b: &Tail) -> Result<Tail> {
    match (a, b) {
        (Tail::Zero, _) | (_, Tail::Zero) => Ok(Tail::Zero),
        (Tail::Identity, t) | (t, Tail::Identity) => Ok(t.clone()),
        (Tail::Diag(p), Tail::Diag(q)) => Ok(Tail::Diag(combine_profiles(p, q, true)?)),
    }
}

fn check_dims(a: &TruncOperator, b: &TruncOperator) -> Result<()> {
    if a.dim() == b.dim() {
        Ok(())
    } else {
        Err(Error::DimMismatch(a.dim(), b.dim()))
    }
}

pub fn adjoint(a: &TruncOperator) -> TruncOperator {
    TruncOperator::raw(a.block.adjoint(), a.tail.clone())
}

pub fn add(a: &TruncOperator, b: &TruncOperator) -> Result<TruncOperator> {
    check_dims(a, b)?;
    Ok(TruncOperator::raw(&a.block + &b.block, tail_add(&a.tail, &b.tail)?))
}

pub fn sub(a: &TruncOperator, b: &TruncOperator) -> Result<TruncOperator> {
    check_dims(a, b)?;
    Ok(TruncOperator::raw(&a.block - &b.block, tail_sub(&a.tail, &b.tail)?))
}

pub fn multiply(a: &TruncOperator, b: &TruncOperator) -> Result<TruncOperator> {
    check_dims(a, b)?;
    Ok(TruncOperator::raw(&a.block * &b.block, tail_mul(&a.tail, &b.tail)?))
}

/// Largest singular value.
pub fn operator_norm(a: &TruncOperator) -> f64 {
    linalg::norm2(&a.block).max(a.tail.sup())
}

/// Schatten `p`-norm; infinite for identity tails and non-summable profiles.
pub fn schatten_norm(a: &TruncOperator, p: f64) -> f64 {
    let tail_sum = match &a.tail {
        Tail::Zero => 0.0,
        Tail::Identity => return f64::INFINITY,
        Tail::Diag(prof) => prof.power_sum(p),
    };
    let block_sum: f64 = linalg::singular_values(&a.block).iter().map(|s| s.powf(p)).sum();
    (block_sum + tail_sum).powf(1.0 / p)
}

/// Off-diagonal block norm within `tol`; every tail model is diagonal.
pub fn is_diagonal(a: &TruncOperator, tol: f64) -> bool {
    linalg::norm2(&linalg::off_diagonal(&a.block)) <= tol
}

pub fn is_unitary(a: &TruncOperator, tol: f64) -> bool {
    if a.tail != Tail::Identity {
        return false;
    }
    let n = a.dim();
    let i = linalg::identity(n);
    linalg::norm2(&(a.block.adjoint() * &a.block - &i)) <= tol
        && linalg::norm2(&(&a.block * a.block.adjoint() - &i)) <= tol
}

/// Unitarity defect `max(|A*A - I|, |AA* - I|)`, infinite without identity tail.
pub fn unitarity_defect(a: &TruncOperator) -> f64 {
    if a.tail != Tail::Identity {
        return f64::INFINITY;
    }
    let i = linalg::identity(a.dim());
    linalg::norm2(&(a.block.adjoint() * &a.block - &i))
        .max(linalg::norm2(&(&a.block * a.block.adjoint() - &i)))
}

/// Singular-value profile.
///
/// Block singular values are merged with the tail profile. With a nonzero
/// tail, numerically zero block values are dropped, and tail terms larger than
/// the smallest kept block value are pulled into the prefix so the result is
/// non-increasing.
pub fn singular_values(a: &TruncOperator) -> Result<SeqProfile> {
    let block = linalg::singular_values(&a.block);
    match &a.tail {
        Tail::Identity => Err(Error::NonCompactTail),
        Tail::Zero => SeqProfile::build(block, TailModel::Zero, 0),
        Tail::Diag(p) => {
            let cut = RANK_EPS * block.first().copied().unwrap_or(0.0).max(1.0);
            let mut vals: Vec<f64> = block.into_iter().filter(|&s| s > cut).collect();
            vals.extend_from_slice(p.prefix());
            // next tail term of p, by its own index
            let mut next = p.prefix().len() + 1;
            let min_kept = vals.iter().copied().fold(f64::INFINITY, f64::min);
            if !p.tail().is_zero() {
                while vals.len() < crate::seq_ideal::MAX_PREFIX {
                    let t = p.term(next);
                    if t <= min_kept {
                        break;
                    }
                    vals.push(t);
                    next += 1;
                }
            }
            let len = vals.len() as i64;
            let shift = next as i64 + p.shift() - len - 1;
            SeqProfile::build(vals, p.tail().clone(), shift)
        }
    }
}

/// Ideal membership through the singular-value profile.
pub fn op_in_ideal(a: &TruncOperator, j: IdealTag) -> bool {
    match &a.tail {
        Tail::Identity => false,
        // the profile of a finite block has a zero tail
        Tail::Zero => true,
        Tail::Diag(p) => in_ideal(p, j),
    }
}

/// Block-diagonal compression `sum_n P_n A P_n`.
pub fn pinch(a: &TruncOperator, p: &IdentityDecomposition) -> Result<TruncOperator> {
    let n = a.dim();
    if p.dim() != n {
        return Err(Error::DimMismatch(n, p.dim()));
    }
    let mut out = CMat::zeros(n, n);
    for part in p.iter() {
        let b = part.basis();
        if b.ncols() == 0 {
            continue;
        }
        let inner = b.adjoint() * &a.block * b;
        out += b * inner * b.adjoint();
    }
    let tail = if p.iter().any(|q| q.identity_tail()) {
        a.tail.clone()
    } else {
        Tail::Zero
    };
    Ok(TruncOperator::raw(out, tail))
}

/// Polar decomposition `a = V |a|`.
pub fn polar(a: &TruncOperator) -> Result<(PartialIsometry, TruncOperator)> {
    if let Tail::Diag(_) = a.tail {
        return Err(Error::Unrepresentable("polar factor of a diagonal tail".into()));
    }
    let d = linalg::svd(&a.block);
    let cut = RANK_EPS * d.s.first().copied().unwrap_or(0.0).max(1.0);
    let r = d.s.iter().filter(|&&s| s > cut).count();
    let n = a.dim();
    let ur = d.u.columns(0, r);
    let vr = d.v.columns(0, r);
    let v = ur * vr.adjoint();
    let sig = CMat::from_diagonal(&nalgebra::DVector::from_iterator(r, d.s[..r].iter().map(|&s| c(s, 0.0))));
    let abs = if r == 0 { CMat::zeros(n, n) } else { vr * sig * vr.adjoint() };
    let tail = a.tail.clone();
    Ok((
        PartialIsometry { op: TruncOperator::raw(v, tail.clone()) },
        TruncOperator::raw(abs, tail),
    ))
}

/// Moore-Penrose inverse with the shared rank threshold.
pub fn pinv(a: &TruncOperator) -> Result<TruncOperator> {
    if let Tail::Diag(_) = a.tail {
        return Err(Error::Unrepresentable("inverse of a decaying diagonal tail".into()));
    }
    let d = linalg::svd(&a.block);
    let n = a.dim();
    let cut = RANK_EPS * d.s.first().copied().unwrap_or(0.0).max(1.0);
    let mut out = CMat::zeros(n, n);
    for (i, &s) in d.s.iter().enumerate() {
        if s > cut {
            out += d.v.column(i) * d.u.column(i).adjoint() * c(1.0 / s, 0.0);
        }
    }
    Ok(TruncOperator::raw(out, a.tail.clone()))
}

/// Orthogonal projection stored by an orthonormal basis of its block range.
#[derive(Debug, Clone, PartialEq)]
pub struct Projection {
    basis: CMat,
    identity_tail: bool,
}

impl Projection {
    /// Validates `|P^2 - P|, |P - P*| <= 1e-10` and a zero or identity tail.
    pub fn from_op(op: &TruncOperator) -> Result<Self> {
        let identity_tail = match op.tail {
            Tail::Zero => false,
            Tail::Identity => true,
            Tail::Diag(_) => return Err(Error::NotProjection("diagonal tail".into())),
        };
        let b = &op.block;
        let idem = linalg::norm2(&(b * b - b));
        let herm = linalg::norm2(&(b - b.adjoint()));
        if idem > PROJ_TOL || herm > PROJ_TOL {
            return Err(Error::NotProjection(format!(
                "idempotence defect {idem:e}, self-adjointness defect {herm:e}"
            )));
        }
        let (range, _) = linalg::range_and_kernel(b);
        Ok(Projection { basis: range, identity_tail })
    }

    /// Projection onto the span of orthonormal columns.
    pub fn from_basis(basis: CMat, identity_tail: bool) -> Result<Self> {
        let defect = linalg::orthonormality_defect(&basis);
        if defect > PROJ_TOL {
            return Err(Error::NotOrthonormal(defect));
        }
        Ok(Projection { basis, identity_tail })
    }

    pub(crate) fn from_basis_unchecked(basis: CMat, identity_tail: bool) -> Self {
        Projection { basis, identity_tail }
    }

    /// Coordinate projection onto `e_i`, `i` in `indices` (0-based).
    pub fn coordinate(dim: usize, indices: &[usize], identity_tail: bool) -> Self {
        let mut idx = indices.to_vec();
        idx.sort_unstable();
        idx.dedup();
        let mut b = CMat::zeros(dim, idx.len());
        for (col, &i) in idx.iter().enumerate() {
            b[(i, col)] = c(1.0, 0.0);
        }
        Projection { basis: b, identity_tail }
    }

    pub fn dim(&self) -> usize {
        self.basis.nrows()
    }

    /// Rank of the block part.
    pub fn rank(&self) -> usize {
        self.basis.ncols()
    }

    pub fn basis(&self) -> &CMat {
        &self.basis
    }

    pub fn identity_tail(&self) -> bool {
        self.identity_tail
    }

    pub fn tail(&self) -> Tail {
        if self.identity_tail {
            Tail::Identity
        } else {
            Tail::Zero
        }
    }

    pub fn block(&self) -> CMat {
        &self.basis * self.basis.adjoint()
    }

    pub fn op(&self) -> TruncOperator {
        TruncOperator::raw(self.block(), self.tail())
    }

    /// `I - P`.
    pub fn complement(&self) -> Projection {
        Projection {
            basis: linalg::complement(&self.basis),
            identity_tail: !self.identity_tail,
        }
    }

    /// Coordinates `i` with `<e_i, P e_i> > 1/2` (0-based).
    pub fn dominant_coordinates(&self) -> Vec<usize> {
        (0..self.dim())
            .filter(|&i| self.basis.row(i).iter().map(|z| z.norm_sqr()).sum::<f64>() > 0.5)
            .collect()
    }

    /// Conjugate by a unitary block: range basis `U b`.
    pub fn conjugated(&self, u: &CMat) -> Projection {
        Projection {
            basis: u * &self.basis,
            identity_tail: self.identity_tail,
        }
    }
}

impl Serialize for Projection {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        self.op().serialize(s)
    }
}

impl<'de> Deserialize<'de> for Projection {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let op = TruncOperator::deserialize(d)?;
        Projection::from_op(&op).map_err(D::Error::custom)
    }
}

/// Mutually orthogonal projections summing to the identity.
#[derive(Debug, Clone, PartialEq)]
pub struct IdentityDecomposition {
    parts: Vec<Projection>,
}

impl IdentityDecomposition {
    pub fn new(parts: Vec<Projection>) -> Result<Self> {
        let first = parts
            .first()
            .ok_or_else(|| Error::NotDecomposition("empty family".into()))?;
        let n = first.dim();
        if let Some(bad) = parts.iter().find(|p| p.dim() != n) {
            return Err(Error::DimMismatch(n, bad.dim()));
        }
        if parts.iter().filter(|p| p.identity_tail).count() > 1 {
            return Err(Error::NotDecomposition("more than one identity tail".into()));
        }
        for (i, p) in parts.iter().enumerate() {
            for (j, q) in parts.iter().enumerate().skip(i + 1) {
                let d = linalg::norm2(&(p.basis.adjoint() * &q.basis));
                if d > PROJ_TOL {
                    return Err(Error::NotDecomposition(format!(
                        "parts {} and {} overlap ({d:e})",
                        i + 1,
                        j + 1
                    )));
                }
            }
        }
        let mut all = CMat::zeros(n, n);
        for p in &parts {
            all += p.block();
        }
        let defect = linalg::norm2(&(all - linalg::identity(n)));
        if defect > PROJ_TOL {
            return Err(Error::NotDecomposition(format!("sum differs from identity by {defect:e}")));
        }
        Ok(IdentityDecomposition { parts })
    }


    /// Coordinate decomposition from disjoint index sets covering `0..dim`.
    pub fn coordinate(dim: usize, sets: &[Vec<usize>], tail_part: Option<usize>) -> Result<Self> {
        let parts = sets
            .iter()
            .enumerate()
            .map(|(i, s)| Projection::coordinate(dim, s, tail_part == Some(i)))
            .collect();
        Self::new(parts)
    }

    pub fn dim(&self) -> usize {
        self.parts[0].dim()
    }

    pub fn parts(&self) -> &[Projection] {
        &self.parts
    }

    pub fn into_parts(self) -> Vec<Projection> {
        self.parts
    }

    /// Index of the part carrying the identity tail.
    pub fn tail_part(&self) -> Option<usize> {
        self.parts.iter().position(|p| p.identity_tail)
    }
}

impl Deref for IdentityDecomposition {
    type Target = [Projection];

    fn deref(&self) -> &[Projection] {
        &self.parts
    }
}

impl Serialize for IdentityDecomposition {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        self.parts.serialize(s)
    }
}

impl<'de> Deserialize<'de> for IdentityDecomposition {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let parts = Vec::<Projection>::deserialize(d)?;
        IdentityDecomposition::new(parts).map_err(D::Error::custom)
    }
}

/// `A = sum_n lambda_n P_n` with distinct eigenvalues.
#[derive(Debug, Clone, PartialEq)]
pub struct DiagonalizableOperator {
    eigenvalues: Vec<C64>,
    spectral: IdentityDecomposition,
}

/// Minimal gap between distinct eigenvalues.
pub const EIGEN_GAP: f64 = 1e-9;

impl DiagonalizableOperator {
    pub fn new(eigenvalues: Vec<C64>, spectral: IdentityDecomposition) -> Result<Self> {
        if eigenvalues.len() != spectral.len() {
            return Err(Error::InvalidInput(format!(
                "{} eigenvalues for {} spectral parts",
                eigenvalues.len(),
                spectral.len()
            )));
        }
        for i in 0..eigenvalues.len() {
            for j in i + 1..eigenvalues.len() {
                if (eigenvalues[i] - eigenvalues[j]).norm() <= EIGEN_GAP {
                    return Err(Error::InvalidInput(format!(
                        "eigenvalues {} and {} coincide",
                        i + 1,
                        j + 1
                    )));
                }
            }
        }
        Ok(DiagonalizableOperator { eigenvalues, spectral })
    }

    pub fn eigenvalues(&self) -> &[C64] {
        &self.eigenvalues
    }

    pub fn spectral(&self) -> &IdentityDecomposition {
        &self.spectral
    }

    pub fn dim(&self) -> usize {
        self.spectral.dim()
    }

    /// Eigenvalue acting on the tail coordinates.
    pub fn tail_eigenvalue(&self) -> Option<C64> {
        self.spectral.tail_part().map(|k| self.eigenvalues[k])
    }

    /// Block of `sum_n lambda_n P_n`.
    pub fn block(&self) -> CMat {
        let n = self.dim();
        let mut out = CMat::zeros(n, n);
        for (lam, p) in self.eigenvalues.iter().zip(self.spectral.iter()) {
            if p.rank() > 0 {
                let b = p.basis();
                out += b * b.adjoint() * *lam;
            }
        }
        out
    }

    /// Distance from a directly supplied block.
    pub fn reconstruction_error(&self, m: &CMat) -> f64 {
        if m.nrows() != self.dim() {
            return f64::INFINITY;
        }
        linalg::norm2(&(self.block() - m))
    }

    /// Off-diagonal norm of `U A U*` for a unitary with identity tail.
    pub fn conjugation_residual(&self, u: &TruncOperator) -> f64 {
        let b = &u.block * self.block() * u.block.adjoint();
        linalg::norm2(&linalg::off_diagonal(&b))
    }
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawDiagonalizable {
    eigenvalues: Vec<[f64; 2]>,
    spectral: IdentityDecomposition,
}

impl Serialize for DiagonalizableOperator {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        RawDiagonalizable {
            eigenvalues: self.eigenvalues.iter().map(|z| [z.re, z.im]).collect(),
            spectral: self.spectral.clone(),
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for DiagonalizableOperator {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let raw = RawDiagonalizable::deserialize(d)?;
        let ev = raw.eigenvalues.iter().map(|z| c(z[0], z[1])).collect();
        DiagonalizableOperator::new(ev, raw.spectral).map_err(D::Error::custom)
    }
}

/// Operator with `V V* V = V`.
#[derive(Debug, Clone, PartialEq)]
pub struct PartialIsometry {
    op: TruncOperator,
}

pub const ISOMETRY_TOL: f64 = 1e-9;

impl PartialIsometry {
    pub fn new(op: TruncOperator) -> Result<Self> {
        if let Tail::Diag(_) = op.tail {
            return Err(Error::InvalidInput("partial isometry with a decaying tail".into()));
        }
        let b = &op.block;
        let d = linalg::norm2(&(b * b.adjoint() * b - b));
        if d > ISOMETRY_TOL {
            return Err(Error::InvalidInput(format!("partial isometry defect {d:e}")));
        }
        Ok(PartialIsometry { op })
    }

    pub fn op(&self) -> &TruncOperator {
        &self.op
    }

    pub fn into_op(self) -> TruncOperator {
        self.op
    }

    /// `V* V`.
    pub fn initial(&self) -> TruncOperator {
        TruncOperator::raw(self.op.block.adjoint() * &self.op.block, self.op.tail.clone())
    }

    /// `V V*`.
    pub fn final_projection(&self) -> TruncOperator {
        TruncOperator::raw(&self.op.block * self.op.block.adjoint(), self.op.tail.clone())
    }
}

#[derive(Serialize, Deserialize)]
#[serde(untagged)]
enum RawTail {
    Name(String),
    Diag { diag: SeqProfile },
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawOperator {
    dim: usize,
    re: Vec<Vec<f64>>,
    im: Vec<Vec<f64>>,
    tail: RawTail,
}

impl Serialize for TruncOperator {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        let n = self.dim();
        let rows = |f: fn(&C64) -> f64| -> Vec<Vec<f64>> {
            (0..n).map(|i| (0..n).map(|j| f(&self.block[(i, j)])).collect()).collect()
        };
        let tail = match &self.tail {
            Tail::Zero => RawTail::Name("zero".into()),
            Tail::Identity => RawTail::Name("identity".into()),
            Tail::Diag(p) => RawTail::Diag { diag: p.clone() },
        };
        RawOperator {
            dim: n,
            re: rows(|z| z.re),
            im: rows(|z| z.im),
            tail,
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for TruncOperator {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let raw = RawOperator::deserialize(d)?;
        let n = raw.dim;
        let shape_ok = |m: &Vec<Vec<f64>>| m.len() == n && m.iter().all(|r| r.len() == n);
        if !shape_ok(&raw.re) || !shape_ok(&raw.im) {
            return Err(D::Error::custom(format!("re/im must be {n}x{n}")));
        }
        let block = CMat::from_fn(n, n, |i, j| c(raw.re[i][j], raw.im[i][j]));
        let tail = match raw.tail {
            RawTail::Name(s) if s == "zero" => Tail::Zero,
            RawTail::Name(s) if s == "identity" => Tail::Identity,
            RawTail::Name(s) => return Err(D::Error::custom(format!("unknown tail '{s}'"))),
            RawTail::Diag { diag } => Tail::Diag(diag),
        };
        TruncOperator::new(block, tail).map_err(D::Error::custom)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn diag(v: &[f64]) -> TruncOperator {
        TruncOperator::diagonal(v, Tail::Zero)
    }

    #[test]
    fn tail_algebra() {
        let i = TruncOperator::identity(2);
        let z = TruncOperator::zero(2);
        assert_eq!(multiply(&i, &i).unwrap().tail(), &Tail::Identity);
        assert_eq!(multiply(&i, &z).unwrap().tail(), &Tail::Zero);
        assert!(add(&i, &i).is_err());
        assert_eq!(sub(&i, &i).unwrap().tail(), &Tail::Zero);
        assert!(sub(&z, &i).is_err());
        let p = SeqProfile::tail_only(TailModel::power(1.0)).unwrap();
        let d = TruncOperator::diagonal(&[1.0, 1.0], Tail::Diag(p.clone()));
        let sq = multiply(&d, &d).unwrap();
        match sq.tail() {
            Tail::Diag(q) => assert!(matches!(q.tail(), TailModel::Power { p, .. } if *p == 2.0)),
            t => panic!("{t:?}"),
        }
        let twice = add(&d, &d).unwrap();
        match twice.tail() {
            Tail::Diag(q) => assert!((q.term(5) - 2.0 * p.term(5)).abs() < 1e-15),
            t => panic!("{t:?}"),
        }
    }

    #[test]
    fn singular_value_examples() {
        let s = singular_values(&TruncOperator::zero(3)).unwrap();
        assert_eq!(s.prefix(), &[0.0, 0.0, 0.0]);
        let s = singular_values(&diag(&[3.0, 1.0, 2.0])).unwrap();
        assert_eq!(s.prefix(), &[3.0, 2.0, 1.0]);
        assert_eq!(singular_values(&TruncOperator::identity(2)), Err(Error::NonCompactTail));
    }

    #[test]
    fn singular_values_merge_tail() {
        let p = SeqProfile::tail_only(TailModel::power(1.0)).unwrap();
        // block entries 1/1..1/4 continue with tail 1/5, 1/6, ...
        let a = TruncOperator::diagonal(&[1.0, 0.5, 0.25, 1.0 / 3.0], Tail::Diag(p.dropped(4)));
        let s = singular_values(&a).unwrap();
        for n in 1..100 {
            assert!((s.term(n) - 1.0 / n as f64).abs() < 1e-14, "term {n}");
        }
        // a small block value is placed after the larger tail terms
        let a = TruncOperator::diagonal(&[1.0, 0.01, 0.0], Tail::Diag(p.clone()));
        let s = singular_values(&a).unwrap();
        let t = s.terms(300);
        assert!(t.windows(2).all(|w| w[1] <= w[0] * (1.0 + 1e-12)));
        assert_eq!(s.prefix().iter().filter(|&&x| x == 0.01).count(), 1);
    }

    #[test]
    fn op_membership() {
        assert!(!op_in_ideal(&TruncOperator::identity(3), IdealTag::Compact));
        assert!(op_in_ideal(&diag(&[1.0, 0.0]), IdealTag::FiniteRank));
        let p = SeqProfile::tail_only(TailModel::power(0.75)).unwrap();
        let a = TruncOperator::diagonal(&[1.0], Tail::Diag(p.dropped(1)));
        assert!(op_in_ideal(&a, IdealTag::Schatten { p: 2.0 }));
        assert!(!op_in_ideal(&a, IdealTag::Schatten { p: 1.0 }));
    }

    #[test]
    fn pinch_two_by_two() {
        let a = TruncOperator::finite(CMat::from_row_slice(
            2,
            2,
            &[c(1.0, 0.0), c(2.0, 0.0), c(3.0, 0.0), c(4.0, 0.0)],
        ))
        .unwrap();
        let p = IdentityDecomposition::coordinate(2, &[vec![0], vec![1]], None).unwrap();
        let out = pinch(&a, &p).unwrap();
        assert_eq!(out.block(), diag(&[1.0, 4.0]).block());
        let q = IdentityDecomposition::coordinate(3, &[vec![0, 1, 2]], None).unwrap();
        assert_eq!(pinch(&a, &q), Err(Error::DimMismatch(2, 3)));
    }

    #[test]
    fn pinv_examples() {
        let i = TruncOperator::identity(3);
        assert_eq!(pinv(&i).unwrap().block(), i.block());
        let d = pinv(&diag(&[2.0, 0.0])).unwrap();
        assert!((d.block() - diag(&[0.5, 0.0]).block()).norm() < 1e-15);
    }

    #[test]
    fn polar_trivial_cases() {
        let (v, abs) = polar(&TruncOperator::zero(2)).unwrap();
        assert_eq!(v.op().block().norm(), 0.0);
        assert_eq!(abs.block().norm(), 0.0);
        let u = TruncOperator::finite(CMat::from_row_slice(
            2,
            2,
            &[c(0.0, 0.0), c(0.0, 1.0), c(1.0, 0.0), c(0.0, 0.0)],
        ))
        .unwrap();
        let (v, abs) = polar(&u).unwrap();
        assert!((v.op().block() - u.block()).norm() < 1e-12);
        assert!((abs.block() - linalg::identity(2)).norm() < 1e-12);
    }

    #[test]
    fn embed_pads_by_tail() {
        let p = SeqProfile::tail_only(TailModel::power(1.0)).unwrap();
        let a = TruncOperator::diagonal(&[1.0], Tail::Diag(p.dropped(1)));
        let b = a.embed(3).unwrap();
        assert!((b.block()[(2, 2)].re - 1.0 / 3.0).abs() < 1e-15);
        match b.tail() {
            Tail::Diag(q) => assert!((q.term(1) - 0.25).abs() < 1e-15),
            t => panic!("{t:?}"),
        }
        let i = TruncOperator::identity(1).embed(2).unwrap();
        assert_eq!(i, TruncOperator::identity(2));
    }

    #[test]
    fn projection_validation() {
        let p = Projection::coordinate(3, &[0, 2], false);
        assert_eq!(p.rank(), 2);
        assert!(Projection::from_op(&p.op()).is_ok());
        assert!(Projection::from_op(&diag(&[0.5, 1.0])).is_err());
        let q = p.complement();
        assert_eq!(q.rank(), 1);
        assert!(q.identity_tail());
        let parts = vec![p.clone(), Projection::coordinate(3, &[1], false)];
        assert!(IdentityDecomposition::new(parts).is_ok());
        let bad = vec![p.clone(), Projection::coordinate(3, &[1, 2], false)];
        assert!(IdentityDecomposition::new(bad).is_err());
        let two_tails = vec![
            Projection::coordinate(2, &[0], true),
            Projection::coordinate(2, &[1], true),
        ];
        assert!(IdentityDecomposition::new(two_tails).is_err());
    }

    #[test]
    fn diagonalizable_distinctness() {
        let d = IdentityDecomposition::coordinate(2, &[vec![0], vec![1]], None).unwrap();
        assert!(DiagonalizableOperator::new(vec![c(1.0, 0.0), c(1.0, 1e-12)], d.clone()).is_err());
        let a = DiagonalizableOperator::new(vec![c(1.0, 0.0), c(2.0, 0.0)], d).unwrap();
        assert!(a.reconstruction_error(diag(&[1.0, 2.0]).block()) < 1e-15);
    }

    #[test]
    fn json_round_trip() {
        let p = SeqProfile::tail_only(TailModel::power(2.0)).unwrap();
        let a = TruncOperator::new(
            CMat::from_fn(2, 2, |i, j| c(i as f64, j as f64)),
            Tail::Diag(p),
        )
        .unwrap();
        let txt = serde_json::to_string(&a).unwrap();
        assert!(txt.contains("\"diag\""));
        let back: TruncOperator = serde_json::from_str(&txt).unwrap();
        assert_eq!(back, a);
        let z: TruncOperator =
            serde_json::from_str(r#"{"dim":1,"re":[[1.0]],"im":[[0.0]],"tail":"identity"}"#).unwrap();
        assert_eq!(z, TruncOperator::identity(1));
        assert!(serde_json::from_str::<TruncOperator>(r#"{"dim":2,"re":[[1.0]],"im":[[0.0]],"tail":"zero"}"#).is_err());
    }
}
