//! The diagonalization pipeline: series conditions on a pair of families,
//! the split indices, the partial isometry on the tail, codimension balancing
//! on the head, and the assembled unitary `U` with `U - I` in the ideal.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{self, c, CMat, C64};
use crate::op_core::{
    is_diagonal, op_in_ideal, polar, singular_values, sub, unitarity_defect, DiagonalizableOperator,
    IdentityDecomposition, PartialIsometry, Projection, Tail, TruncOperator,
};
use crate::projections::{balance_codimensions_with, ess_codim_with, family_alignment};
use crate::seq_ideal::{am_closure_member, ideal_square, in_ideal, IdealTag, SeqProfile};
use crate::tolerances::{ToleranceConfig, PROJ_TOL, SPLIT_MARGIN, UNITARY_TOL};

/// Both series of the pair condition and the pairwise memberships.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConditionReport {
    /// `sum_n (I - E_n) P_n`.
    pub series_one: TruncOperator,
    /// `sum_n E_n (I - P_n)`.
    pub series_two: TruncOperator,
    pub member_one: bool,
    pub member_two: bool,
    /// `P_n - E_n` in the ideal, per part.
    pub per_pair_in_ideal: Vec<bool>,
    /// Membership in the am-closure; reported for the finite-rank tag.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub am_member_one: Option<bool>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub am_member_two: Option<bool>,
}

impl ConditionReport {
    pub fn passes(&self) -> bool {
        self.member_one && self.member_two
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiagonalizationCertificate {
    pub unitary: TruncOperator,
    pub n0: usize,
    pub n1: usize,
    pub diag_residual: f64,
    pub unitarity_defect: f64,
    pub u_minus_i_profile: SeqProfile,
    /// Whether the head family needed rank transfers.
    pub balanced: bool,
}

impl DiagonalizationCertificate {
    /// Re-checks the certificate against `a` without trusting stored fields.
    pub fn recheck(&self, a: &DiagonalizableOperator, j: IdealTag, tol: &ToleranceConfig) -> Result<()> {
        let defect = unitarity_defect(&self.unitary);
        if defect > UNITARY_TOL {
            return Err(Error::PreconditionFailed(format!("unitarity defect {defect:e}")));
        }
        let residual = a.conjugation_residual(&self.unitary);
        if residual > tol.residual_tol {
            return Err(Error::NotDiagonalizing(residual));
        }
        let d = sub(&self.unitary, &TruncOperator::identity(self.unitary.dim()))?;
        if !in_ideal(&singular_values(&d)?, j) {
            return Err(Error::PreconditionFailed(format!("U - I is not in {j}")));
        }
        Ok(())
    }
}

fn check_family(ps: &[Projection], es: &[Projection]) -> Result<()> {
    if ps.len() != es.len() {
        return Err(Error::InvalidInput(format!(
            "families have {} and {} parts",
            ps.len(),
            es.len()
        )));
    }
    let n = ps.first().map_or(0, |p| p.dim());
    for p in ps.iter().chain(es) {
        if p.dim() != n {
            return Err(Error::DimMismatch(n, p.dim()));
        }
    }
    Ok(())
}

/// Block of `(I - E) P` from range bases.
fn defect_product(e: &Projection, p: &Projection) -> CMat {
    let bp = p.basis();
    let be = e.basis();
    (bp - be * (be.adjoint() * bp)) * bp.adjoint()
}

fn pair_conditions(ps: &[Projection], es: &[Projection], j: IdealTag) -> Result<ConditionReport> {
    check_family(ps, es)?;
    let n = ps.first().map_or(0, |p| p.dim());
    let mut one = CMat::zeros(n, n);
    let mut two = CMat::zeros(n, n);
    let (mut tail_one, mut tail_two) = (false, false);
    let mut per_pair = Vec::with_capacity(ps.len());
    for (p, e) in ps.iter().zip(es) {
        if p.rank() > 0 {
            one += defect_product(e, p);
        }
        if e.rank() > 0 {
            // E (I - P) = ((I - P) E)*
            two += defect_product(p, e).adjoint();
        }
        tail_one |= p.identity_tail() && !e.identity_tail();
        tail_two |= e.identity_tail() && !p.identity_tail();
        per_pair.push(match sub(&p.op(), &e.op()) {
            Ok(d) => op_in_ideal(&d, j),
            Err(_) => false,
        });
    }
    let tail = |t: bool| if t { Tail::Identity } else { Tail::Zero };
    let series_one = TruncOperator::raw(one, tail(tail_one));
    let series_two = TruncOperator::raw(two, tail(tail_two));
    let am = |s: &TruncOperator| match s.tail() {
        Tail::Identity => false,
        _ => singular_values(s).map(|p| am_closure_member(&p, j)).unwrap_or(false),
    };
    let (am_one, am_two) = if j == IdealTag::FiniteRank {
        (Some(am(&series_one)), Some(am(&series_two)))
    } else {
        (None, None)
    };
    Ok(ConditionReport {
        member_one: op_in_ideal(&series_one, j),
        member_two: op_in_ideal(&series_two, j),
        series_one,
        series_two,
        per_pair_in_ideal: per_pair,
        am_member_one: am_one,
        am_member_two: am_two,
    })
}

fn is_diagonal_projection(p: &Projection) -> bool {
    p.dominant_coordinates().len() == p.rank() && is_diagonal(&p.op(), 1e-10)
}

/// Series conditions for a spectral family `ps` against diagonal `es`.
pub fn verify_conditions(ps: &[Projection], es: &[Projection], j: IdealTag) -> Result<ConditionReport> {
    if let Some(k) = es.iter().position(|e| !is_diagonal_projection(e)) {
        return Err(Error::InvalidInput(format!("part {} of the diagonal family is not diagonal", k + 1)));
    }
    pair_conditions(ps, es, j)
}

/// `sum_n E_n - I`; a tail count other than one is not compact.
pub fn identity_defect(es: &[Projection]) -> Result<TruncOperator> {
    let n = es.first().map_or(0, |p| p.dim());
    if es.iter().filter(|e| e.identity_tail()).count() != 1 {
        return Err(Error::NotCompactDefect);
    }
    let mut k = -linalg::identity(n);
    for e in es {
        k += e.block();
    }
    Ok(TruncOperator::raw(k, Tail::Zero))
}

/// Least `n0` such that the parts after `n0` are mutually orthogonal
/// (1-based part numbers; 0 when the family is already orthogonal).
pub fn find_n0(es: &[Projection], k: &TruncOperator) -> Result<usize> {
    if !op_in_ideal(k, IdealTag::Compact) {
        return Err(Error::NotCompactDefect);
    }
    let mut n0 = 0;
    for (a, ea) in es.iter().enumerate() {
        for eb in es.iter().skip(a + 1) {
            if ea.identity_tail() && eb.identity_tail() {
                return Err(Error::NotCompactDefect);
            }
            if linalg::norm2(&(ea.basis().adjoint() * eb.basis())) > 1e-9 {
                n0 = n0.max(a + 1);
            }
        }
    }
    Ok(n0)
}

/// `E'_n = E_n - E_n (E'_1 + ... + E'_{n-1})`, re-projected at 1/2.
///
/// Parts after `upto` must not overlap each other.
pub fn orthogonalize(es: &[Projection], upto: usize) -> Result<Vec<Projection>> {
    for (a, ea) in es.iter().enumerate() {
        for (b, eb) in es.iter().enumerate().skip(a + 1) {
            let both_tails = ea.identity_tail() && eb.identity_tail();
            let late = a + 1 > upto && linalg::norm2(&(ea.basis().adjoint() * eb.basis())) > 1e-9;
            if both_tails || late {
                return Err(Error::OverlapNotFiniteRank(a + 1, b + 1));
            }
        }
    }
    let n = es.first().map_or(0, |p| p.dim());
    let mut claimed = CMat::zeros(n, n);
    let mut out = Vec::with_capacity(es.len());
    for e in es {
        let next = if is_diagonal_projection(e) {
            let coords: Vec<usize> = e
                .dominant_coordinates()
                .into_iter()
                .filter(|&i| claimed[(i, i)].re < 0.5)
                .collect();
            Projection::coordinate(n, &coords, e.identity_tail())
        } else {
            let eb = e.block();
            let raw = &eb - &eb * &claimed;
            let herm = (&raw + raw.adjoint()) * c(0.5, 0.0);
            let (range, _) = linalg::range_and_kernel(&herm);
            Projection::from_basis_unchecked(range, e.identity_tail())
        };
        claimed += next.block();
        out.push(next);
    }
    Ok(out)
}

/// Norms of both pinched tail series; entry `n1` covers the parts after `n1`.
fn split_norms(ps: &[Projection], es: &[Projection]) -> Vec<(f64, f64)> {
    let n = ps.first().map_or(0, |p| p.dim());
    let mut one = CMat::zeros(n, n);
    let mut two = CMat::zeros(n, n);
    let mut tails_differ = false;
    let mut norms = vec![(0.0, 0.0); ps.len()];
    for m in (0..ps.len()).rev() {
        let (p, e) = (&ps[m], &es[m]);
        // P (I - E) P and E (I - P) E from range bases
        if p.rank() > 0 {
            one += defect_product(e, p) * p.block();
        }
        if e.rank() > 0 {
            two += defect_product(p, e) * e.block();
        }
        tails_differ |= p.identity_tail() != e.identity_tail();
        norms[m] = if tails_differ {
            (1.0, 1.0)
        } else {
            (linalg::norm2(&one), linalg::norm2(&two))
        };
    }
    norms
}

/// Least `n1 >= max(n0, min)` with both tail series below `1 - margin`.
pub fn find_n1(ps: &[Projection], es: &[Projection], n0: usize) -> Result<usize> {
    find_n1_from(ps, es, n0, 0)
}

fn find_n1_from(ps: &[Projection], es: &[Projection], n0: usize, min: usize) -> Result<usize> {
    check_family(ps, es)?;
    let bound = 1.0 - SPLIT_MARGIN;
    split_norms(ps, es)
        .iter()
        .enumerate()
        .skip(n0.max(min))
        .find(|(_, &(a, b))| a < bound && b < bound)
        .map(|(n1, _)| n1)
        .ok_or(Error::NoValidIndex)
}

/// Direct sum of the parts with index greater than `n1` (1-based).
fn tail_sum(ps: &[Projection], n1: usize) -> Projection {
    let n = ps.first().map_or(0, |p| p.dim());
    let cols: usize = ps[n1..].iter().map(|p| p.rank()).sum();
    let mut b = CMat::zeros(n, cols);
    let mut at = 0;
    for p in &ps[n1..] {
        b.columns_mut(at, p.rank()).copy_from(p.basis());
        at += p.rank();
    }
    Projection::from_basis_unchecked(b, ps[n1..].iter().any(|p| p.identity_tail()))
}

/// `V = S |S|^+` with `S = sum_{n > n1} E_n P_n`, checked against
/// `V P_n V* = E_n`.
pub fn build_partial_isometry(ps: &[Projection], es: &[Projection], n1: usize) -> Result<PartialIsometry> {
    check_family(ps, es)?;
    if n1 > ps.len() {
        return Err(Error::InvalidInput(format!("split index {n1} exceeds {} parts", ps.len())));
    }
    let n = ps.first().map_or(0, |p| p.dim());
    let mut s = CMat::zeros(n, n);
    let mut tail = Tail::Zero;
    for (p, e) in ps[n1..].iter().zip(&es[n1..]) {
        if p.identity_tail() != e.identity_tail() {
            return Err(Error::TailMismatch);
        }
        if p.identity_tail() {
            tail = Tail::Identity;
        }
        if p.rank() > 0 && e.rank() > 0 {
            s += e.basis() * (e.basis().adjoint() * p.basis()) * p.basis().adjoint();
        }
    }
    let (v, _) = polar(&TruncOperator::raw(s, tail))?;
    let vb = v.op().block();
    let mut worst: f64 = 0.0;
    for (p, e) in ps[n1..].iter().zip(&es[n1..]) {
        let img = vb * p.basis();
        worst = worst.max(linalg::norm2(&(&img * img.adjoint() - e.block())));
    }
    let p0 = tail_sum(ps, n1);
    let e0 = tail_sum(es, n1);
    worst = worst
        .max(linalg::norm2(&(vb.adjoint() * vb - p0.block())))
        .max(linalg::norm2(&(vb * vb.adjoint() - e0.block())));
    if worst > 1e-8 {
        return Err(Error::PreconditionFailed(format!(
            "partial isometry misses the tail parts by {worst:e}"
        )));
    }
    Ok(v)
}

/// Unitary `V + U0 (I - P0)` where `U0` aligns the head parts.
fn glue(ps: &[Projection], es: &[Projection], n1: usize, v: &PartialIsometry) -> TruncOperator {
    let head_p: Vec<&Projection> = ps[..n1].iter().collect();
    let head_e: Vec<&Projection> = es[..n1].iter().collect();
    let mut block = v.op().block().clone();
    if n1 > 0 {
        block += family_alignment(&head_p, &head_e);
    }
    TruncOperator::raw(block, Tail::Identity)
}

fn certify(
    a: &DiagonalizableOperator,
    u: TruncOperator,
    n0: usize,
    n1: usize,
    balanced: bool,
    j: IdealTag,
    tol: &ToleranceConfig,
) -> Result<DiagonalizationCertificate> {
    let defect = unitarity_defect(&u);
    if defect > UNITARY_TOL {
        return Err(Error::PreconditionFailed(format!("unitarity defect {defect:e}")));
    }
    let residual = a.conjugation_residual(&u);
    if residual > tol.residual_tol {
        return Err(Error::NotDiagonalizing(residual));
    }
    let profile = singular_values(&sub(&u, &TruncOperator::identity(u.dim()))?)?;
    if !in_ideal(&profile, j) {
        return Err(Error::PreconditionFailed(format!("U - I is not in {j}")));
    }
    Ok(DiagonalizationCertificate {
        unitary: u,
        n0,
        n1,
        diag_residual: residual,
        unitarity_defect: defect,
        u_minus_i_profile: profile,
        balanced,
    })
}

fn covers_identity(es: &[Projection]) -> bool {
    let n = es.first().map_or(0, |p| p.dim());
    let mut sum = CMat::zeros(n, n);
    for e in es {
        sum += e.block();
    }
    es.iter().filter(|e| e.identity_tail()).count() == 1
        && linalg::norm2(&(sum - linalg::identity(n))) <= PROJ_TOL
}

/// `I - sum_{m != k} E_m` for an orthogonal family.
fn remainder(es: &[Projection], k: usize) -> Projection {
    let n = es.first().map_or(0, |p| p.dim());
    let mut others = CMat::zeros(n, n);
    for (m, e) in es.iter().enumerate() {
        if m != k {
            others += e.block();
        }
    }
    let diag = es.iter().enumerate().all(|(m, e)| m == k || is_diagonal_projection(e));
    let tail = !es.iter().enumerate().any(|(m, e)| m != k && e.identity_tail());
    if diag {
        let coords: Vec<usize> = (0..n).filter(|&i| others[(i, i)].re < 0.5).collect();
        Projection::coordinate(n, &coords, tail)
    } else {
        let (_, kernel) = linalg::range_and_kernel(&others);
        Projection::from_basis_unchecked(kernel, tail)
    }
}

pub fn assemble_unitary(
    a: &DiagonalizableOperator,
    es: &[Projection],
    j: IdealTag,
) -> Result<DiagonalizationCertificate> {
    assemble_unitary_with(a, es, j, &ToleranceConfig::default())
}

/// Full pipeline from a spectral family and a diagonal family satisfying the
/// series conditions to a certified unitary in `I + J`.
pub fn assemble_unitary_with(
    a: &DiagonalizableOperator,
    es: &[Projection],
    j: IdealTag,
    tol: &ToleranceConfig,
) -> Result<DiagonalizationCertificate> {
    tol.validate()?;
    let ps = a.spectral().parts();
    let report = verify_conditions(ps, es, j).map_err(Error::at("verify_conditions"))?;
    if !report.passes() {
        return Err(Error::at("verify_conditions")(Error::ConditionsFail(format!(
            "series memberships in {j}: ({}, {})",
            report.member_one, report.member_two
        ))));
    }
    let k = identity_defect(es).map_err(Error::at("find_n0"))?;
    let n0 = find_n0(es, &k).map_err(Error::at("find_n0"))?;
    let mut es1 = orthogonalize(es, n0).map_err(Error::at("orthogonalize"))?;
    let covers = covers_identity(&es1);
    let n1 = find_n1_from(ps, &es1, n0, usize::from(!covers)).map_err(Error::at("find_n1"))?;
    if !covers {
        es1[n1 - 1] = remainder(&es1, n1 - 1);
    }
    let v = build_partial_isometry(ps, &es1, n1).map_err(Error::at("partial_isometry"))?;

    // head: parts 1..=n1 together with the fixed tail sum as part 0
    let mut head_p = vec![tail_sum(ps, n1)];
    head_p.extend_from_slice(&ps[..n1]);
    let mut head_e = vec![tail_sum(&es1, n1)];
    head_e.extend_from_slice(&es1[..n1]);
    let balanced_head = balance_codimensions_with(&head_p, &head_e, j, Some(0), tol).map_err(Error::at("balance"))?;
    let balanced = balanced_head != head_e;
    es1[..n1].clone_from_slice(&balanced_head[1..]);

    let u = glue(ps, &es1, n1, &v);
    certify(a, u, n0, n1, balanced, j, tol).map_err(Error::at("certificate"))
}

/// Finite-spectrum convenience path with the dominant-diagonal family.
/// Heuristic: fails when no coordinate assignment satisfies the conditions.
pub fn assemble_finite(a: &DiagonalizableOperator, j: IdealTag) -> Result<DiagonalizationCertificate> {
    let es = dominant_diagonal_family(a.spectral());
    assemble_unitary(a, &es, j)
}

/// `E_n` spans the coordinates where the diagonal of `P_n` exceeds 1/2.
pub fn dominant_diagonal_family(ps: &[Projection]) -> Vec<Projection> {
    ps.iter()
        .map(|p| Projection::coordinate(p.dim(), &p.dominant_coordinates(), p.identity_tail()))
        .collect()
}

pub fn verify_reverse(a: &DiagonalizableOperator, u: &TruncOperator, j: IdealTag) -> Result<ConditionReport> {
    verify_reverse_with(a, u, j, &ToleranceConfig::default())
}

/// Conditions for `E_n = u P_n u*` when `u` diagonalizes `a`.
pub fn verify_reverse_with(
    a: &DiagonalizableOperator,
    u: &TruncOperator,
    j: IdealTag,
    tol: &ToleranceConfig,
) -> Result<ConditionReport> {
    if u.dim() != a.dim() {
        return Err(Error::DimMismatch(a.dim(), u.dim()));
    }
    let defect = unitarity_defect(u);
    if defect > UNITARY_TOL {
        return Err(Error::PreconditionFailed(format!("unitarity defect {defect:e}")));
    }
    let residual = a.conjugation_residual(u);
    if residual > tol.residual_tol {
        return Err(Error::NotDiagonalizing(residual));
    }
    let es = conjugated_family(a.spectral(), u);
    pair_conditions(a.spectral(), &es, j)
}

/// Diagonal projections `u P_n u*`, rounded at 1/2.
pub fn conjugated_family(ps: &[Projection], u: &TruncOperator) -> Vec<Projection> {
    ps.iter()
        .map(|p| {
            let img = p.conjugated(u.block());
            Projection::coordinate(p.dim(), &img.dominant_coordinates(), p.identity_tail())
        })
        .collect()
}

/// Residual ranks and trace norms of both series along a truncation ladder.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LadderReport {
    pub dims: Vec<usize>,
    pub ranks_one: Vec<usize>,
    pub ranks_two: Vec<usize>,
    pub trace_one: Vec<f64>,
    pub trace_two: Vec<f64>,
    /// Finite-rank membership is refuted: some residual rank grows strictly
    /// with every step of the ladder.
    pub strict_fails: bool,
    /// Trace-class membership is supported: trace norms settle (successive
    /// increments shrink).
    pub trace_class: bool,
}

/// Evaluates the series at each truncation produced by `build`.
pub fn conditions_ladder<F>(dims: &[usize], tol: &ToleranceConfig, mut build: F) -> Result<LadderReport>
where
    F: FnMut(usize) -> Result<(Vec<Projection>, Vec<Projection>)>,
{
    let mut out = LadderReport {
        dims: dims.to_vec(),
        ranks_one: Vec::new(),
        ranks_two: Vec::new(),
        trace_one: Vec::new(),
        trace_two: Vec::new(),
        strict_fails: false,
        trace_class: false,
    };
    for &d in dims {
        let (ps, es) = build(d)?;
        let r = pair_conditions(&ps, &es, IdealTag::FiniteRank)?;
        for (s, ranks, traces) in [
            (&r.series_one, &mut out.ranks_one, &mut out.trace_one),
            (&r.series_two, &mut out.ranks_two, &mut out.trace_two),
        ] {
            if s.tail() != &Tail::Zero {
                return Err(Error::NonCompactTail);
            }
            let sv = linalg::singular_values(s.block());
            let cut = tol.rank_cutoff(sv.first().copied().unwrap_or(0.0));
            ranks.push(sv.iter().filter(|&&x| x > cut).count());
            traces.push(sv.iter().sum());
        }
    }
    let grows = |r: &[usize]| r.len() >= 2 && r.windows(2).all(|w| w[1] > w[0]);
    out.strict_fails = grows(&out.ranks_one) || grows(&out.ranks_two);
    let settles = |t: &[f64]| {
        let inc: Vec<f64> = t.windows(2).map(|w| (w[1] - w[0]).abs()).collect();
        t.iter().all(|x| x.is_finite()) && inc.windows(2).all(|w| w[1] < w[0])
    };
    out.trace_class = settles(&out.trace_one) && settles(&out.trace_two);
    Ok(out)
}

/// `sum_n (P_n - E_n)^2` tested in the square of the ideal.
pub fn j2_condition(ps: &[Projection], es: &[Projection], j: IdealTag) -> Result<bool> {
    check_family(ps, es)?;
    match squares_sum(ps, es) {
        Some(s) => Ok(op_in_ideal(&s, ideal_square(j))),
        None => Ok(false),
    }
}

fn squares_sum(ps: &[Projection], es: &[Projection]) -> Option<TruncOperator> {
    let n = ps.first().map_or(0, |p| p.dim());
    let mut sum = CMat::zeros(n, n);
    for (p, e) in ps.iter().zip(es) {
        if p.identity_tail() != e.identity_tail() {
            return None;
        }
        let d = p.block() - e.block();
        sum += &d * &d;
    }
    Some(TruncOperator::raw(sum, Tail::Zero))
}

/// `sum_n |P_n - E_n|_2^2` and the trace of `sum_n (P_n - E_n)^2`, which
/// agree; infinite on a tail mismatch.
pub fn s2_witness(ps: &[Projection], es: &[Projection]) -> Result<(f64, f64)> {
    check_family(ps, es)?;
    match squares_sum(ps, es) {
        None => Ok((f64::INFINITY, f64::INFINITY)),
        Some(s) => {
            let norms: f64 = ps.iter().zip(es).map(|(p, e)| (p.block() - e.block()).norm_squared()).sum();
            Ok((norms, s.block().trace().re))
        }
    }
}

pub fn conjugate_decompositions(
    ps: &IdentityDecomposition,
    es: &IdentityDecomposition,
    j: IdealTag,
) -> Result<TruncOperator> {
    conjugate_decompositions_with(ps, es, j, &ToleranceConfig::default())
}

/// Unitary `U` in `I + J` with `U P_n U* = E_n` for all `n`.
pub fn conjugate_decompositions_with(
    ps: &IdentityDecomposition,
    es: &IdentityDecomposition,
    j: IdealTag,
    tol: &ToleranceConfig,
) -> Result<TruncOperator> {
    tol.validate()?;
    check_family(ps, es)?;
    for (n, (p, e)) in ps.iter().zip(es.iter()).enumerate() {
        match ess_codim_with(p, e, tol) {
            Ok(r) if r.value == 0 => {}
            Ok(_) => return Err(Error::CodimNonzero(n + 1)),
            Err(Error::NotFredholmPair) | Err(Error::TailMismatch) => {
                return Err(Error::ConditionsFail(format!("pair {} is not a Fredholm pair", n + 1)))
            }
            Err(e) => return Err(e),
        }
    }
    let report = pair_conditions(ps, es, j)?;
    if !report.passes() {
        return Err(Error::ConditionsFail(format!(
            "series memberships in {j}: ({}, {})",
            report.member_one, report.member_two
        )));
    }
    let n1 = find_n1(ps, es, 0).map_err(Error::at("find_n1"))?;
    let v = build_partial_isometry(ps, es, n1).map_err(Error::at("partial_isometry"))?;
    let u = glue(ps, es, n1, &v);
    let worst = ps
        .iter()
        .zip(es.iter())
        .map(|(p, e)| {
            let img = u.block() * p.basis();
            linalg::norm2(&(&img * img.adjoint() - e.block()))
        })
        .fold(0.0, f64::max);
    if worst > tol.residual_tol {
        return Err(Error::NotDiagonalizing(worst));
    }
    Ok(u)
}

fn check_orthonormal(b: &CMat) -> Result<()> {
    let d = linalg::orthonormality_defect(b);
    if d > 1e-9 {
        Err(Error::NotOrthonormal(d))
    } else {
        Ok(())
    }
}

/// Matrix of `T` with `T g_n = e_n - f_n`, domain coordinates taken in the
/// `g` basis: column `n` holds `e_n - f_n`. Bases are given as columns.
pub fn basis_difference_operator(e: &CMat, f: &CMat, g: &CMat) -> Result<TruncOperator> {
    for b in [e, f, g] {
        if b.nrows() != e.nrows() || b.ncols() != e.ncols() {
            return Err(Error::DimMismatch(e.ncols(), b.ncols()));
        }
        check_orthonormal(b)?;
    }
    let n = e.nrows();
    let mut t = CMat::zeros(n, n);
    t.columns_mut(0, e.ncols()).copy_from(&(e - f));
    Ok(TruncOperator::raw(t, Tail::Zero))
}

/// `e` and `f` are equivalent under `I + J` when the difference operator,
/// continued by `tail_gap` beyond the truncation, lies in `j`.
pub fn are_j_equivalent(e: &CMat, f: &CMat, tail_gap: &SeqProfile, j: IdealTag) -> Result<bool> {
    let t = basis_difference_operator(e, f, e)?;
    let (block, _) = t.into_parts();
    let tail = if tail_gap.tail().is_zero() && tail_gap.prefix().iter().all(|&x| x == 0.0) {
        Tail::Zero
    } else {
        Tail::Diag(tail_gap.clone())
    };
    Ok(op_in_ideal(&TruncOperator::raw(block, tail), j))
}

/// `sum_n |e_n - f_n|^2 < infinity` for the declared gaps.
pub fn gap_l2_summable(tail_gap: &SeqProfile) -> bool {
    tail_gap.power_sum(2.0).is_finite()
}

/// Eigenvalue on the block coordinates, for reports.
pub fn diagonal_entries(a: &DiagonalizableOperator, u: &TruncOperator) -> Vec<C64> {
    let d = u.block() * a.block() * u.block().adjoint();
    (0..d.nrows()).map(|i| d[(i, i)]).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::constructions::rotation2;

    fn coord_family(n: usize, sets: &[&[usize]], tail: usize) -> Vec<Projection> {
        sets.iter()
            .enumerate()
            .map(|(k, s)| Projection::coordinate(n, s, k == tail))
            .collect()
    }

    #[test]
    fn identical_families() {
        let es = coord_family(4, &[&[0], &[1, 2], &[3]], 2);
        let r = verify_conditions(&es, &es, IdealTag::FiniteRank).unwrap();
        assert!(r.passes());
        assert_eq!(r.series_one.block().norm(), 0.0);
        assert_eq!(find_n1(&es, &es, 0).unwrap(), 0);
        let k = identity_defect(&es).unwrap();
        assert_eq!(find_n0(&es, &k).unwrap(), 0);
        assert!(j2_condition(&es, &es, IdealTag::Schatten { p: 2.0 }).unwrap());
    }

    #[test]
    fn overlap_and_orthogonalize() {
        let es = coord_family(4, &[&[0, 1], &[1, 2], &[3]], 2);
        let k = identity_defect(&es).unwrap();
        assert_eq!(find_n0(&es, &k).unwrap(), 1);
        let out = orthogonalize(&es, 1).unwrap();
        assert_eq!(out[1].dominant_coordinates(), vec![2]);
        assert_eq!(out[0], es[0]);
        let bad = coord_family(3, &[&[0], &[1], &[2]], 9);
        assert_eq!(identity_defect(&bad), Err(Error::NotCompactDefect));
    }

    #[test]
    fn rotation_partial_isometry() {
        let theta = 0.3;
        let r = rotation2(theta);
        let es = coord_family(2, &[&[0], &[1]], 1);
        let ps: Vec<Projection> = es.iter().map(|e| e.conjugated(&r)).collect();
        let v = build_partial_isometry(&ps, &es, 0).unwrap();
        for (p, e) in ps.iter().zip(&es) {
            let img = v.op().block() * p.basis();
            assert!((&img * img.adjoint() - e.block()).norm() < 1e-10);
        }
        assert!((v.op().block() - r.adjoint()).norm() < 1e-10);
    }

    #[test]
    fn persistent_corner_has_no_split() {
        // every tail part is orthogonal to its diagonal partner
        let es = coord_family(4, &[&[0], &[1], &[2], &[3]], 3);
        let ps = coord_family(4, &[&[1], &[0], &[3], &[2]], 3);
        assert_eq!(find_n1(&ps, &es, 0), Err(Error::NoValidIndex));
    }

    #[test]
    fn diagonal_operator_gives_identity() {
        let es = coord_family(3, &[&[0], &[1], &[2]], 2);
        let d = IdentityDecomposition::new(es.clone()).unwrap();
        let a = DiagonalizableOperator::new(vec![c(1.0, 0.0), c(2.0, 0.0), c(3.0, 0.0)], d).unwrap();
        let cert = assemble_unitary(&a, &es, IdealTag::FiniteRank).unwrap();
        assert!((cert.unitary.block() - linalg::identity(3)).norm() < 1e-12);
        assert!(!cert.balanced);
    }

    #[test]
    fn codim_nonzero_is_reported() {
        let ps = IdentityDecomposition::new(coord_family(3, &[&[0, 1], &[2]], 1)).unwrap();
        let es = IdentityDecomposition::new(coord_family(3, &[&[0], &[1, 2]], 1)).unwrap();
        assert_eq!(
            conjugate_decompositions(&ps, &es, IdealTag::FiniteRank),
            Err(Error::CodimNonzero(1))
        );
    }

    #[test]
    fn basis_difference_rank_one() {
        let e = linalg::identity(3);
        let mut f = e.clone();
        let r = rotation2(0.4);
        f.view_mut((0, 0), (2, 2)).copy_from(&r);
        let t = basis_difference_operator(&e, &e, &e).unwrap();
        assert_eq!(t.block().norm(), 0.0);
        let mut f1 = e.clone();
        f1[(0, 0)] = c(-1.0, 0.0);
        let t = basis_difference_operator(&e, &f1, &e).unwrap();
        assert_eq!(linalg::rank(t.block(), 1e-9), 1);
        let bad = e.clone() * c(2.0, 0.0);
        assert!(matches!(basis_difference_operator(&e, &bad, &e), Err(Error::NotOrthonormal(_))));
    }
}
