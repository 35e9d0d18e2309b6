//! Explicit witnesses: the nonlinearity witness built from 2x2 rotations, the
//! span witness `B = (0, X; X*, 0)`, the rank-one exponential counterexample,
//! and the separation check on orthonormal bases.

use std::f64::consts::FRAC_1_SQRT_2;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{self, c, CMat, C64};
use crate::op_core::{
    is_unitary, op_in_ideal, singular_values, DiagonalizableOperator, IdentityDecomposition, Projection, Tail,
    TruncOperator,
};
use crate::seq_ideal::{ampliate, ideal_square, IdealTag, SeqProfile, TailModel};

/// Separation margin between eigenvalues of the witness.
pub const DISTINCT_MARGIN: f64 = 1e-10;
/// Perturbation rounds before giving up on distinctness.
pub const MAX_ROUNDS: usize = 100;

/// Real rotation by `theta`.
pub fn rotation2(theta: f64) -> CMat {
    let (s, co) = theta.sin_cos();
    CMat::from_row_slice(2, 2, &[c(co, 0.0), c(-s, 0.0), c(s, 0.0), c(co, 0.0)])
}

/// Upper end of the admissible gap range, `sqrt(2 - 2/sqrt 2)`.
pub fn gap_bound() -> f64 {
    (2.0 - 2.0 * FRAC_1_SQRT_2).sqrt()
}

/// `theta` in `(0, pi/4)` with `|1 - e^{i theta}| = t`.
pub fn theta_for_gap(t: f64) -> Result<f64> {
    if !(t > 0.0 && t < gap_bound()) {
        return Err(Error::OutOfRange(t));
    }
    Ok(((2.0 - t * t) / 2.0).acos())
}

/// `X = V A V*` and `Y = W B W*` with `V = (+)U(theta_j)`, `W = (+)U(-theta_j)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NonlinearWitness {
    pub x_op: TruncOperator,
    pub y_op: TruncOperator,
    pub alphas: Vec<f64>,
    pub thetas: Vec<f64>,
    /// Eigenpairs of `X + Y` on the first `2 * blocks` coordinates.
    pub eigen_pairs: Vec<(f64, Vec<f64>)>,
}

fn block_sum(dim: usize, blocks: &[CMat]) -> CMat {
    let mut out = CMat::zeros(dim, dim);
    for (k, b) in blocks.iter().enumerate() {
        out.view_mut((2 * k, 2 * k), (2, 2)).copy_from(b);
    }
    out
}

fn witness_eigenvalues(alphas: &[f64], thetas: &[f64]) -> Vec<f64> {
    alphas
        .iter()
        .zip(thetas)
        .flat_map(|(a, t)| {
            let s = (2.0 * t).sin();
            [a * (1.0 + s), a * (1.0 - s)]
        })
        .collect()
}

fn min_separation(vals: &[f64]) -> f64 {
    let mut v = vals.to_vec();
    v.sort_by(f64::total_cmp);
    v.windows(2).map(|w| w[1] - w[0]).fold(f64::INFINITY, f64::min)
}

/// Any tag is accepted: at truncation every block sequence is finite.
pub fn build_nonlinear_witness(_j: IdealTag, blocks: usize, dim: usize) -> Result<NonlinearWitness> {
    if blocks < 1 {
        return Err(Error::InvalidInput("at least one block is required".into()));
    }
    if 2 * blocks > dim {
        return Err(Error::InvalidInput(format!("{blocks} blocks do not fit in dimension {dim}")));
    }
    let base: Vec<f64> = (0..blocks).map(|k| 0.8 * gap_bound() * 0.5f64.powi(k as i32)).collect();
    let mut alphas = base.clone();
    let mut round = 0;
    let thetas = loop {
        let thetas: Vec<f64> = alphas.iter().map(|&a| theta_for_gap(a)).collect::<Result<_>>()?;
        if min_separation(&witness_eigenvalues(&alphas, &thetas)) > DISTINCT_MARGIN {
            break thetas;
        }
        round += 1;
        if round > MAX_ROUNDS {
            return Err(Error::DistinctnessUnreachable(MAX_ROUNDS));
        }
        alphas = base
            .iter()
            .enumerate()
            .map(|(k, a)| a * (1.0 + 1e-3 * (k + 1) as f64).powi(round as i32))
            .collect();
    };

    let f1 = CMat::from_row_slice(2, 2, &[c(1.0, 0.0), c(0.0, 0.0), c(0.0, 0.0), c(0.0, 0.0)]);
    let f2 = CMat::from_row_slice(2, 2, &[c(0.0, 0.0), c(0.0, 0.0), c(0.0, 0.0), c(1.0, 0.0)]);
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    let mut eigen_pairs = Vec::new();
    for (k, (&a, &t)) in alphas.iter().zip(&thetas).enumerate() {
        let v = rotation2(t);
        let w = rotation2(-t);
        xs.push(&v * &f1 * v.adjoint() * c(a, 0.0));
        ys.push(&w * &f2 * w.adjoint() * c(a, 0.0));
        let s = (2.0 * t).sin();
        for (lam, sign) in [(a * (1.0 + s), 1.0), (a * (1.0 - s), -1.0)] {
            let mut vec = vec![0.0; dim];
            vec[2 * k] = FRAC_1_SQRT_2;
            vec[2 * k + 1] = sign * FRAC_1_SQRT_2;
            eigen_pairs.push((lam, vec));
        }
    }
    Ok(NonlinearWitness {
        x_op: TruncOperator::raw(block_sum(dim, &xs), Tail::Zero),
        y_op: TruncOperator::raw(block_sum(dim, &ys), Tail::Zero),
        alphas,
        thetas,
        eigen_pairs,
    })
}

/// Evidence that each summand is diagonalized by a unitary in `I + J`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WitnessReport {
    pub x_residual: f64,
    pub y_residual: f64,
    pub v_minus_i: SeqProfile,
    pub w_minus_i: SeqProfile,
    pub v_in_ideal: bool,
    pub w_in_ideal: bool,
    pub eigen_residual: f64,
    pub theta_residual: f64,
    pub separated: bool,
}

impl NonlinearWitness {
    pub fn dim(&self) -> usize {
        self.x_op.dim()
    }

    /// `(+)U(sign * theta_j)` padded with the identity.
    pub fn rotation_unitary(&self, sign: f64) -> TruncOperator {
        let blocks: Vec<CMat> = self.thetas.iter().map(|&t| rotation2(sign * t)).collect();
        let mut b = block_sum(self.dim(), &blocks);
        for i in 2 * blocks.len()..self.dim() {
            b[(i, i)] = c(1.0, 0.0);
        }
        TruncOperator::raw(b, Tail::Identity)
    }

    pub fn verify(&self, j: IdealTag) -> Result<WitnessReport> {
        let v = self.rotation_unitary(1.0);
        let w = self.rotation_unitary(-1.0);
        let off = |u: &TruncOperator, x: &TruncOperator| {
            let d = u.block().adjoint() * x.block() * u.block();
            linalg::norm2(&linalg::off_diagonal(&d))
        };
        let minus_i = |u: &TruncOperator| {
            let d = u.block() - linalg::identity(self.dim());
            singular_values(&TruncOperator::raw(d, Tail::Zero))
        };
        let vp = minus_i(&v)?;
        let wp = minus_i(&w)?;
        let sum = self.x_op.block() + self.y_op.block();
        let mut eigen_residual: f64 = 0.0;
        for (lam, vec) in &self.eigen_pairs {
            let x = nalgebra::DVector::from_iterator(vec.len(), vec.iter().map(|&r| c(r, 0.0)));
            eigen_residual = eigen_residual.max((&sum * &x - &x * c(*lam, 0.0)).norm());
        }
        let theta_residual = self
            .alphas
            .iter()
            .zip(&self.thetas)
            .map(|(a, t)| ((c(1.0, 0.0) - c(0.0, *t).exp()).norm() - a).abs())
            .fold(0.0, f64::max);
        let basis: Vec<Vec<C64>> = self
            .eigen_pairs
            .iter()
            .map(|(_, v)| v.iter().map(|&r| c(r, 0.0)).collect())
            .collect();
        Ok(WitnessReport {
            x_residual: off(&v, &self.x_op),
            y_residual: off(&w, &self.y_op),
            v_in_ideal: crate::seq_ideal::in_ideal(&vp, j),
            w_in_ideal: crate::seq_ideal::in_ideal(&wp, j),
            v_minus_i: vp,
            w_minus_i: wp,
            eigen_residual,
            theta_residual,
            separated: check_separation(&basis, FRAC_1_SQRT_2 - 1e-12)?,
        })
    }
}

/// Whether `min_{n,m,|g|=1} |e_n - g f_m| >= delta`, using the closed form
/// `sqrt(2 - 2 |<e_n, f_m>|)`.
pub fn check_separation(f_basis: &[Vec<C64>], delta: f64) -> Result<bool> {
    let defect = orthonormality_defect(f_basis);
    if defect > 1e-9 {
        return Err(Error::NotOrthonormal(defect));
    }
    let worst = f_basis
        .iter()
        .flat_map(|f| f.iter().map(|z| z.norm()))
        .fold(0.0, f64::max);
    Ok((2.0 - 2.0 * worst).max(0.0).sqrt() >= delta)
}

fn orthonormality_defect(vs: &[Vec<C64>]) -> f64 {
    let mut worst: f64 = 0.0;
    for (i, a) in vs.iter().enumerate() {
        for (k, b) in vs.iter().enumerate().skip(i) {
            let ip: C64 = a.iter().zip(b).map(|(x, y)| x.conj() * y).sum();
            let target = if i == k { 1.0 } else { 0.0 };
            worst = worst.max((ip - c(target, 0.0)).norm());
        }
    }
    worst
}

/// `B = (0, X; X*, 0)` in the interleaved basis, with its corner `X`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpanWitness {
    pub b: TruncOperator,
    pub corner: TruncOperator,
    pub x_profile: SeqProfile,
}

/// Decay exponent of `s(X)`: summable to the power `p` but not `p / 2`.
fn span_exponent(j: IdealTag) -> Result<f64> {
    match j {
        IdealTag::Schatten { p } => Ok(1.5 / p),
        IdealTag::FiniteRank | IdealTag::Compact => Err(Error::SquareEqualsIdeal),
    }
}

/// Span witness at even truncation `dim`.
///
/// The block holds `x_k sigma_x` on coordinates `2k, 2k+1`. The infinite
/// remainder is recorded by its singular values (the ampliated profile), which
/// is all the membership tests read.
pub fn build_span_witness(j: IdealTag, dim: usize) -> Result<SpanWitness> {
    let q = span_exponent(j)?;
    if dim < 2 || !dim.is_multiple_of(2) {
        return Err(Error::InvalidInput(format!("dimension {dim} must be even and positive")));
    }
    let m = dim / 2;
    let x_profile = SeqProfile::tail_only(TailModel::power(q))?;
    let mut b = CMat::zeros(dim, dim);
    let mut corner = CMat::zeros(dim, dim);
    for k in 0..m {
        let x = c(x_profile.term(k + 1), 0.0);
        b[(2 * k, 2 * k + 1)] = x;
        b[(2 * k + 1, 2 * k)] = x;
        corner[(2 * k, 2 * k + 1)] = x;
    }
    let b_tail = ampliate(&x_profile, 2).dropped(dim);
    Ok(SpanWitness {
        b: TruncOperator::raw(b, Tail::Diag(b_tail)),
        corner: TruncOperator::raw(corner, Tail::Diag(x_profile.dropped(m))),
        x_profile,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpanReport {
    pub self_adjoint: bool,
    pub b_in_ideal: bool,
    pub corner_in_square: bool,
    /// Largest deviation of `s(B)` from the doubled `s(X)` over the checked terms.
    pub ampliation_error: f64,
}

impl SpanWitness {
    pub fn verify(&self, j: IdealTag, terms: usize) -> Result<SpanReport> {
        let sb = singular_values(&self.b)?;
        let d2 = ampliate(&self.x_profile, 2);
        let ampliation_error = (1..=terms)
            .map(|n| (sb.term(n) - d2.term(n)).abs())
            .fold(0.0, f64::max);
        Ok(SpanReport {
            self_adjoint: linalg::norm2(&(self.b.block() - self.b.block().adjoint())) == 0.0,
            b_in_ideal: op_in_ideal(&self.b, j),
            corner_in_square: op_in_ideal(&self.corner, ideal_square(j)),
            ampliation_error,
        })
    }
}

/// `A = sum_n lambda_n U e_n e_n* U*` with `U = I + (e^i - 1) f f*`.
#[derive(Debug, Clone, PartialEq)]
pub struct AmcCounterexample {
    pub a: DiagonalizableOperator,
    pub u: TruncOperator,
    pub f: Vec<f64>,
}

/// Default eigenvalues `1/n` on the block and `0` on the tail.
pub fn default_lambdas(dim: usize) -> Vec<C64> {
    (1..=dim).map(|n| c(1.0 / n as f64, 0.0)).chain([c(0.0, 0.0)]).collect()
}

/// Coefficients `c_n = 1/n`.
pub fn harmonic_coeffs() -> SeqProfile {
    SeqProfile::tail_only(TailModel::power(1.0)).expect("valid tail")
}

/// `lambdas[n]` sits on `U e_{n+1}` for `n < dim`; `lambdas[dim]` on the tail.
pub fn build_amc_counterexample(f_coeffs: &SeqProfile, lambdas: &[C64], dim: usize) -> Result<AmcCounterexample> {
    if dim == 0 {
        return Err(Error::InvalidInput("dimension must be positive".into()));
    }
    if lambdas.len() != dim + 1 {
        return Err(Error::InvalidInput(format!(
            "{} eigenvalues given, {} needed (block plus tail)",
            lambdas.len(),
            dim + 1
        )));
    }
    let raw: Vec<f64> = (1..=dim).map(|n| f_coeffs.term(n)).collect();
    if let Some(n) = raw.iter().position(|&x| x <= 0.0) {
        return Err(Error::ZeroCoefficient(n + 1));
    }
    let norm = raw.iter().map(|x| x * x).sum::<f64>().sqrt();
    let f: Vec<f64> = raw.iter().map(|x| x / norm).collect();
    let fv = nalgebra::DVector::from_iterator(dim, f.iter().map(|&x| c(x, 0.0)));
    let phase = c(0.0, 1.0).exp() - c(1.0, 0.0);
    let u = linalg::identity(dim) + &fv * fv.adjoint() * phase;
    let mut parts: Vec<Projection> = (0..dim)
        .map(|n| Projection::from_basis_unchecked(u.columns(n, 1).into_owned(), false))
        .collect();
    parts.push(Projection::from_basis_unchecked(CMat::zeros(dim, 0), true));
    let spectral = IdentityDecomposition::new(parts)?;
    let a = DiagonalizableOperator::new(lambdas.to_vec(), spectral)?;
    let u = TruncOperator::raw(u, Tail::Identity);
    debug_assert!(is_unitary(&u, 1e-10));
    Ok(AmcCounterexample { a, u, f })
}

impl AmcCounterexample {
    pub fn dim(&self) -> usize {
        self.f.len()
    }

    /// `X = f f*`.
    pub fn x(&self) -> TruncOperator {
        let n = self.dim();
        let fv = nalgebra::DVector::from_iterator(n, self.f.iter().map(|&x| c(x, 0.0)));
        TruncOperator::raw(&fv * fv.adjoint(), Tail::Zero)
    }

    /// Coordinate family `e_n e_n*` plus the tail part.
    pub fn diagonal_family(&self) -> Vec<Projection> {
        let n = self.dim();
        let mut es: Vec<Projection> = (0..n).map(|i| Projection::coordinate(n, &[i], false)).collect();
        es.push(Projection::from_basis_unchecked(CMat::zeros(n, 0), true));
        es
    }

    /// The diagonalizing unitary `U*`.
    pub fn diagonalizer(&self) -> TruncOperator {
        crate::op_core::adjoint(&self.u)
    }

    /// Singular values of the coordinate pinching of `X`, i.e. `|f_n|^2`.
    pub fn pinched_x_profile(&self) -> Result<SeqProfile> {
        SeqProfile::finite(self.f.iter().map(|x| x * x).collect())
    }

    /// First index past which `|f_n| < 1/2`.
    pub fn forced_threshold(&self) -> usize {
        self.f.iter().rposition(|&x| x >= 0.5).map_or(1, |k| k + 2)
    }

    /// Largest `|P_n - e_n e_n*|` over `n` at or past the threshold; below
    /// 1/2 means the nearby diagonal projection is forced to be `e_n e_n*`.
    pub fn forced_distance(&self) -> f64 {
        let n0 = self.forced_threshold();
        let es = self.diagonal_family();
        self.a.spectral()[n0 - 1..self.dim()]
            .iter()
            .zip(&es[n0 - 1..self.dim()])
            .map(|(p, e)| linalg::norm2(&(p.block() - e.block())))
            .fold(0.0, f64::max)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rotation_cases() {
        assert_eq!(rotation2(0.0), linalg::identity(2));
        let r = rotation2(std::f64::consts::FRAC_PI_2);
        let expect = CMat::from_row_slice(2, 2, &[c(0.0, 0.0), c(-1.0, 0.0), c(1.0, 0.0), c(0.0, 0.0)]);
        assert!((r - expect).norm() < 1e-15);
        let s = linalg::singular_values(&(rotation2(0.3) - linalg::identity(2)));
        for x in s {
            assert!((x - 2.0 * 0.15f64.sin()).abs() < 1e-12);
        }
    }

    #[test]
    fn theta_range() {
        assert_eq!(theta_for_gap(0.0), Err(Error::OutOfRange(0.0)));
        assert!(theta_for_gap(gap_bound()).is_err());
        let t = theta_for_gap(gap_bound() - 1e-9).unwrap();
        assert!((t - std::f64::consts::FRAC_PI_4).abs() < 1e-6);
        assert_eq!(theta_for_gap(0.1).unwrap(), (1.99f64 / 2.0).acos());
    }

    #[test]
    fn single_block_eigenvalues() {
        let w = build_nonlinear_witness(IdealTag::Schatten { p: 1.0 }, 1, 2).unwrap();
        let (a, t) = (w.alphas[0], w.thetas[0]);
        let sum = w.x_op.block() + w.y_op.block();
        let (vals, _) = linalg::hermitian_eigen(&sum);
        assert!((vals[0] - a * (1.0 + (2.0 * t).sin())).abs() < 1e-12);
        assert!((vals[1] - a * (1.0 - (2.0 * t).sin())).abs() < 1e-12);
    }

    #[test]
    fn separation_trivial() {
        let e: Vec<Vec<C64>> = (0..3)
            .map(|i| (0..3).map(|k| c(if i == k { 1.0 } else { 0.0 }, 0.0)).collect())
            .collect();
        assert!(!check_separation(&e, 1e-6).unwrap());
    }

    #[test]
    fn span_rejects_square_closed_tags() {
        assert_eq!(build_span_witness(IdealTag::Compact, 8), Err(Error::SquareEqualsIdeal));
        assert_eq!(build_span_witness(IdealTag::FiniteRank, 8), Err(Error::SquareEqualsIdeal));
    }

    #[test]
    fn amc_unitary_exact() {
        let m = build_amc_counterexample(&harmonic_coeffs(), &default_lambdas(16), 16).unwrap();
        assert!(crate::op_core::unitarity_defect(&m.u) <= 1e-10);
        let zero = SeqProfile::finite(vec![1.0, 0.5]).unwrap();
        assert_eq!(
            build_amc_counterexample(&zero, &default_lambdas(3), 3).unwrap_err(),
            Error::ZeroCoefficient(3)
        );
    }
}
