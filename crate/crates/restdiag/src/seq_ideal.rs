//! Singular-value profiles and symbolic ideal membership.
//!
//! A [`SeqProfile`] is a non-increasing sequence given by an explicit prefix
//! and a symbolic tail. Membership, arithmetic means and O-domination are
//! decided on the tail formula, never on a finite sample.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Longest prefix accepted from callers.
pub const MAX_PREFIX: usize = 1 << 16;

/// Exact terms materialized in front of a derived arithmetic-mean tail.
const MEAN_EXACT: usize = 256;
/// Exact leading terms kept by [`ampliate`].
const AMPLIATE_EXACT: usize = 4096;
/// Upper bound on the evaluation window used for domination constants.
const WINDOW_CAP: u64 = 1 << 20;
const REL_TOL: f64 = 1e-12;

fn one() -> f64 {
    1.0
}

fn is_zero_shift(s: &i64) -> bool {
    *s == 0
}

/// Decay law of a profile beyond its prefix, evaluated at the global index.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum TailModel {
    Zero,
    /// `scale * n^-p`
    Power {
        p: f64,
        #[serde(default = "one")]
        scale: f64,
    },
    /// `scale * n^-p * ln(n + e^(k/p))^k`; the shift inside the logarithm
    /// keeps the terms non-increasing from `n = 1` without changing the class.
    PowerLog {
        p: f64,
        k: u32,
        #[serde(default = "one")]
        scale: f64,
    },
    /// `scale * r^n`
    Geometric {
        r: f64,
        #[serde(default = "one")]
        scale: f64,
    },
}

impl TailModel {
    pub fn power(p: f64) -> Self {
        TailModel::Power { p, scale: 1.0 }
    }

    pub fn power_log(p: f64, k: u32) -> Self {
        TailModel::PowerLog { p, k, scale: 1.0 }
    }

    pub fn geometric(r: f64) -> Self {
        TailModel::Geometric { r, scale: 1.0 }
    }

    pub fn is_zero(&self) -> bool {
        matches!(self, TailModel::Zero)
    }

    pub fn scale(&self) -> f64 {
        match *self {
            TailModel::Zero => 0.0,
            TailModel::Power { scale, .. }
            | TailModel::PowerLog { scale, .. }
            | TailModel::Geometric { scale, .. } => scale,
        }
    }

    pub(crate) fn with_scale(&self, s: f64) -> Self {
        match *self {
            TailModel::Zero => TailModel::Zero,
            TailModel::Power { p, .. } => TailModel::Power { p, scale: s },
            TailModel::PowerLog { p, k, .. } => TailModel::PowerLog { p, k, scale: s },
            TailModel::Geometric { r, .. } => TailModel::Geometric { r, scale: s },
        }
    }

    pub fn validate(&self) -> Result<()> {
        let ok = match *self {
            TailModel::Zero => true,
            TailModel::Power { p, scale } => p > 0.0 && p.is_finite() && scale > 0.0 && scale.is_finite(),
            TailModel::PowerLog { p, scale, .. } => {
                p > 0.0 && p.is_finite() && scale > 0.0 && scale.is_finite()
            }
            TailModel::Geometric { r, scale } => {
                r > 0.0 && r < 1.0 && scale > 0.0 && scale.is_finite()
            }
        };
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidInput(format!("invalid tail {self:?}")))
        }
    }

    /// Term at (possibly fractional) global index `n >= 1`.
    pub fn eval(&self, n: f64) -> f64 {
        match *self {
            TailModel::Zero => 0.0,
            TailModel::Power { p, scale } => scale * n.powf(-p),
            TailModel::PowerLog { p, k, scale } => {
                let c = (k as f64 / p).exp();
                scale * n.powf(-p) * (n + c).ln().powi(k as i32)
            }
            TailModel::Geometric { r, scale } => scale * r.powf(n),
        }
    }

    /// `ln eval(x)` from `ln x`, for polynomial tails at huge `x`.
    fn ln_eval(&self, lx: f64) -> f64 {
        match *self {
            TailModel::Power { p, scale } => scale.ln() - p * lx,
            TailModel::PowerLog { p, k, scale } => {
                let c = (k as f64 / p).exp();
                let ln_xc = lx + (c * (-lx).exp()).ln_1p();
                scale.ln() - p * lx + k as f64 * ln_xc.ln()
            }
            _ => self.eval(lx.exp()).ln(),
        }
    }

    /// Polynomial exponent and log power, `None` for Zero and Geometric.
    fn power_shape(&self) -> Option<(f64, u32)> {
        match *self {
            TailModel::Power { p, .. } => Some((p, 0)),
            TailModel::PowerLog { p, k, .. } => Some((p, k)),
            _ => None,
        }
    }
}

/// Non-increasing nonnegative sequence: `prefix` then `tail.eval(n + shift)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawProfile")]
pub struct SeqProfile {
    prefix: Vec<f64>,
    tail: TailModel,
    #[serde(default, skip_serializing_if = "is_zero_shift")]
    shift: i64,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawProfile {
    prefix: Vec<f64>,
    tail: TailModel,
    #[serde(default)]
    shift: i64,
}

impl TryFrom<RawProfile> for SeqProfile {
    type Error = Error;

    fn try_from(raw: RawProfile) -> Result<Self> {
        SeqProfile::with_shift(raw.prefix, raw.tail, raw.shift)
    }
}

impl SeqProfile {
    /// Validating constructor. The prefix is sorted non-increasing; with a
    /// nonzero tail, zero entries are dropped and the tail scale is lowered
    /// if its first term would exceed the last prefix entry.
    pub fn new(prefix: Vec<f64>, tail: TailModel) -> Result<Self> {
        Self::with_shift(prefix, tail, 0)
    }

    pub fn with_shift(prefix: Vec<f64>, tail: TailModel, shift: i64) -> Result<Self> {
        if prefix.len() > MAX_PREFIX {
            return Err(Error::InvalidInput(format!(
                "prefix length {} exceeds {MAX_PREFIX}",
                prefix.len()
            )));
        }
        if let Some(bad) = prefix.iter().find(|x| !(x.is_finite() && **x >= 0.0)) {
            return Err(Error::InvalidInput(format!("prefix entry {bad} is not a finite nonnegative real")));
        }
        tail.validate()?;
        Self::build(prefix, tail, shift)
    }

    /// Finitely supported profile.
    pub fn finite(prefix: Vec<f64>) -> Result<Self> {
        Self::new(prefix, TailModel::Zero)
    }

    /// Pure tail starting at index 1.
    pub fn tail_only(tail: TailModel) -> Result<Self> {
        Self::new(Vec::new(), tail)
    }

    pub fn zero() -> Self {
        SeqProfile {
            prefix: Vec::new(),
            tail: TailModel::Zero,
            shift: 0,
        }
    }

    /// Unchecked length; used for derived profiles.
    pub(crate) fn build(mut prefix: Vec<f64>, mut tail: TailModel, shift: i64) -> Result<Self> {
        prefix.sort_by(|a, b| b.total_cmp(a));
        if !tail.is_zero() {
            while prefix.last() == Some(&0.0) {
                prefix.pop();
            }
        }
        let start = prefix.len() as i64 + 1 + shift;
        if start < 1 {
            return Err(Error::InvalidInput(format!(
                "tail would be evaluated at index {start}"
            )));
        }
        if let Some(&last) = prefix.last() {
            let first = tail.eval(start as f64);
            if first > last * (1.0 + REL_TOL) {
                tail = tail.with_scale(tail.scale() * last / first);
            }
        }
        Ok(SeqProfile { prefix, tail, shift })
    }

    pub fn prefix(&self) -> &[f64] {
        &self.prefix
    }

    pub fn tail(&self) -> &TailModel {
        &self.tail
    }

    pub fn shift(&self) -> i64 {
        self.shift
    }

    pub fn tail_start(&self) -> usize {
        self.prefix.len() + 1
    }

    /// Term `n` (1-based).
    pub fn term(&self, n: usize) -> f64 {
        assert!(n >= 1, "profile terms are 1-based");
        if n <= self.prefix.len() {
            self.prefix[n - 1]
        } else {
            self.tail.eval((n as i64 + self.shift) as f64)
        }
    }

    pub fn terms(&self, count: usize) -> Vec<f64> {
        (1..=count).map(|n| self.term(n)).collect()
    }

    /// Profile of the sequence with its first `k` terms removed.
    pub fn dropped(&self, k: usize) -> SeqProfile {
        let len = self.prefix.len();
        if k <= len {
            SeqProfile {
                prefix: self.prefix[k..].to_vec(),
                tail: self.tail.clone(),
                shift: self.shift + k as i64,
            }
        } else {
            SeqProfile {
                prefix: Vec::new(),
                tail: self.tail.clone(),
                shift: self.shift + k as i64,
            }
        }
    }

    /// `sum_n s_n^p`, infinite when the tail is not p-summable.
    pub fn power_sum(&self, p: f64) -> f64 {
        let head: f64 = self.prefix.iter().map(|x| x.powf(p)).sum();
        let a = self.prefix.len() as i64 + 1 + self.shift;
        head + tail_power_sum(&self.tail, p, a as f64)
    }
}

/// `sum_{n >= a} tail(n)^p` for integer `a >= 1`.
fn tail_power_sum(tail: &TailModel, p: f64, a: f64) -> f64 {
    const DIRECT: usize = 20_000;
    match *tail {
        TailModel::Zero => 0.0,
        TailModel::Geometric { r, scale } => {
            let rp = r.powf(p);
            scale.powf(p) * rp.powf(a) / (1.0 - rp)
        }
        TailModel::Power { p: q, .. } | TailModel::PowerLog { p: q, .. } => {
            if q * p <= 1.0 {
                return f64::INFINITY;
            }
            let f = |x: f64| tail.eval(x).powf(p);
            let ln_f = |lx: f64| p * tail.ln_eval(lx);
            let mut sum = 0.0;
            for i in 0..DIRECT {
                sum += f(a + i as f64);
            }
            let b = a + DIRECT as f64;
            sum + euler_maclaurin_remainder(f, ln_f, b)
        }
    }
}

/// `sum_{n >= b} f(n)` for a smooth decreasing integrable `f` with
/// `ln_f(ln x) = ln f(x)`.
fn euler_maclaurin_remainder(f: impl Fn(f64) -> f64, ln_f: impl Fn(f64) -> f64, b: f64) -> f64 {
    // integral over [b, inf) via x = b e^u, composite Simpson in u; the
    // integrand f(x) x is evaluated in log space so slow decay cannot overflow
    let lb = b.ln();
    let g = |u: f64| (ln_f(lb + u) + lb + u).exp();
    let (mut lo, mut integral) = (0.0, 0.0);
    let mut width = 0.5;
    loop {
        let hi = lo + width;
        let steps = 64;
        let h = (hi - lo) / steps as f64;
        let mut s = g(lo) + g(hi);
        for i in 1..steps {
            let w = if i % 2 == 1 { 4.0 } else { 2.0 };
            s += w * g(lo + i as f64 * h);
        }
        let piece = s * h / 3.0;
        integral += piece;
        lo = hi;
        width *= 1.5;
        if piece.abs() <= 1e-17 * integral.abs().max(1e-300) || lo > 1e6 {
            break;
        }
    }
    let d = 1e-3 * b;
    let deriv = (f(b + d) - f(b - d)) / (2.0 * d);
    integral + f(b) / 2.0 - deriv / 12.0
}

/// Symbolic ideal of compact operators.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "ideal", rename_all = "snake_case", deny_unknown_fields)]
pub enum IdealTag {
    FiniteRank,
    /// Schatten class `S_p`. Values `p < 1` only arise from [`ideal_square`].
    Schatten { p: f64 },
    Compact,
}

impl IdealTag {
    pub fn schatten(p: f64) -> Result<Self> {
        if p >= 1.0 && p.is_finite() {
            Ok(IdealTag::Schatten { p })
        } else {
            Err(Error::InvalidInput(format!("Schatten exponent {p} must be >= 1")))
        }
    }

    /// Square of a Schatten ideal with `p < 2`, below the trace class.
    pub fn is_sub_schatten(&self) -> bool {
        matches!(self, IdealTag::Schatten { p } if *p < 1.0)
    }

    /// Schatten classes and the compacts are arithmetic-mean closed.
    pub fn is_am_closed(&self) -> bool {
        !matches!(self, IdealTag::FiniteRank)
    }
}

impl fmt::Display for IdealTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            IdealTag::FiniteRank => write!(f, "finite-rank"),
            IdealTag::Schatten { p } => write!(f, "schatten:{p}"),
            IdealTag::Compact => write!(f, "compact"),
        }
    }
}

impl FromStr for IdealTag {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "finite-rank" => Ok(IdealTag::FiniteRank),
            "compact" => Ok(IdealTag::Compact),
            _ => {
                let p = s
                    .strip_prefix("schatten:")
                    .and_then(|v| v.parse::<f64>().ok())
                    .ok_or_else(|| Error::InvalidInput(format!("unknown ideal '{s}'")))?;
                IdealTag::schatten(p)
            }
        }
    }
}

/// `m`-fold ampliation: every term repeated `m` times.
pub fn ampliate(s: &SeqProfile, m: usize) -> SeqProfile {
    assert!(m >= 1, "ampliation factor must be positive");
    if m == 1 {
        return s.clone();
    }
    // exact steps first; the symbolic tail only smooths the far repetitions
    let exact = if s.tail.is_zero() {
        s.prefix.len() * m
    } else {
        (s.prefix.len() * m).max(AMPLIATE_EXACT)
    };
    let prefix: Vec<f64> = (1..=exact).map(|n| s.term(n.div_ceil(m))).collect();
    let mf = m as f64;
    let tail = match s.tail {
        TailModel::Zero => TailModel::Zero,
        TailModel::Power { p, scale } => TailModel::Power {
            p,
            scale: scale * mf.powf(p),
        },
        TailModel::PowerLog { p, k, scale } => TailModel::PowerLog {
            p,
            k,
            scale: scale * mf.powf(p),
        },
        TailModel::Geometric { r, scale } => TailModel::Geometric {
            r: r.powf(1.0 / mf),
            scale,
        },
    };
    SeqProfile::build(prefix, tail, s.shift * m as i64).expect("ampliation keeps indices positive")
}

/// Running averages `(s_1 + ... + s_n) / n`.
///
/// The first `max(len, 256)` means are exact (only `len` for a zero tail);
/// the tail follows the symbolic rules and is matched to the exact mean at
/// the junction.
pub fn arith_mean(s: &SeqProfile) -> SeqProfile {
    let len = s.prefix.len();
    let exact = if s.tail.is_zero() { len } else { len.max(MEAN_EXACT) };
    let mut prefix = Vec::with_capacity(exact);
    let mut sum = 0.0;
    for n in 1..=exact {
        sum += s.term(n);
        prefix.push(sum / n as f64);
    }
    let next = exact + 1;
    let next_mean = (sum + s.term(next)) / next as f64;
    let shape = match s.tail {
        TailModel::Zero => {
            if sum == 0.0 {
                return SeqProfile::build(prefix, TailModel::Zero, 0).expect("valid");
            }
            TailModel::power(1.0)
        }
        TailModel::Geometric { .. } => TailModel::power(1.0),
        TailModel::Power { p, .. } => {
            if p > 1.0 {
                TailModel::power(1.0)
            } else if p == 1.0 {
                TailModel::power_log(1.0, 1)
            } else {
                TailModel::power(p)
            }
        }
        TailModel::PowerLog { p, k, .. } => {
            if p > 1.0 {
                TailModel::power(1.0)
            } else if p == 1.0 {
                TailModel::power_log(1.0, k + 1)
            } else {
                TailModel::power_log(p, k)
            }
        }
    };
    let scale = if s.tail.is_zero() {
        sum
    } else {
        next_mean / shape.eval(next as f64)
    };
    SeqProfile::build(prefix, shape.with_scale(scale), 0).expect("valid")
}

/// Asymptotic comparison of tails: `Some(true)` when `a = O(b)`.
fn tail_dominated(a: &TailModel, b: &TailModel) -> bool {
    use TailModel::*;
    match (a, b) {
        (Zero, _) => true,
        (_, Zero) => false,
        (Geometric { r: ra, .. }, Geometric { r: rb, .. }) => ra <= rb,
        (Geometric { .. }, _) => true,
        (_, Geometric { .. }) => false,
        _ => {
            let (pa, ka) = a.power_shape().expect("power tail");
            let (pb, kb) = b.power_shape().expect("power tail");
            if (pa - pb).abs() <= REL_TOL * pa.max(pb) {
                ka <= kb
            } else {
                pa > pb
            }
        }
    }
}

/// Indices past the prefixes over which the ratio `a_n / b_n` can still grow.
fn growth_window(a: &TailModel, b: &TailModel) -> u64 {
    let est = match (a.power_shape(), b.power_shape(), a) {
        (_, _, TailModel::Zero) => 0.0,
        (None, Some((pb, kb)), TailModel::Geometric { r, .. }) => (pb + kb as f64) / -r.ln(),
        (Some((pa, ka)), Some((pb, kb)), _) => {
            if pa > pb * (1.0 + REL_TOL) {
                (ka as f64 / (pa - pb)).exp()
            } else {
                (kb.max(ka) as f64 / pb).exp()
            }
        }
        _ => 0.0,
    };
    if est.is_finite() {
        (est.ceil() as u64).saturating_add(16).min(WINDOW_CAP)
    } else {
        WINDOW_CAP
    }
}

/// Witnessing constant `M` with `a_n <= M b_n` for all `n`, if `a = O(b)`.
///
/// Ratios are taken over the prefixes and the window where the tail ratio can
/// still increase; an index with `b_n = 0 < a_n` refutes domination.
pub fn big_o_constant(a: &SeqProfile, b: &SeqProfile) -> Option<f64> {
    if !tail_dominated(&a.tail, &b.tail) {
        return None;
    }
    let reach = a.prefix.len().max(b.prefix.len()) as u64 + 1;
    let shifts = a.shift.unsigned_abs() + b.shift.unsigned_abs();
    let window = (reach + shifts + growth_window(&a.tail, &b.tail)).min(reach + WINDOW_CAP);
    let mut best: f64 = 0.0;
    for n in 1..=window as usize {
        let (x, y) = (a.term(n), b.term(n));
        if y > 0.0 {
            best = best.max(x / y);
        } else if x > 0.0 {
            return None;
        }
    }
    Some(best)
}

/// `a = O(b)`.
pub fn big_o_dominates(a: &SeqProfile, b: &SeqProfile) -> bool {
    big_o_constant(a, b).is_some()
}

/// Membership of the profile in the characteristic set of `j`.
pub fn in_ideal(s: &SeqProfile, j: IdealTag) -> bool {
    match j {
        IdealTag::FiniteRank => s.tail.is_zero(),
        IdealTag::Compact => true,
        IdealTag::Schatten { p } => match s.tail {
            TailModel::Zero | TailModel::Geometric { .. } => true,
            TailModel::Power { p: q, .. } | TailModel::PowerLog { p: q, .. } => q * p > 1.0,
        },
    }
}

/// Membership in the arithmetic-mean closure of `j`.
pub fn am_closure_member(s: &SeqProfile, j: IdealTag) -> bool {
    match j {
        IdealTag::FiniteRank => in_ideal(s, IdealTag::Schatten { p: 1.0 }),
        _ => in_ideal(s, j),
    }
}

/// Span of products of two members.
pub fn ideal_square(j: IdealTag) -> IdealTag {
    match j {
        IdealTag::Schatten { p } => IdealTag::Schatten { p: p / 2.0 },
        other => other,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn power(p: f64) -> SeqProfile {
        SeqProfile::tail_only(TailModel::power(p)).unwrap()
    }

    #[test]
    fn constructor_sorts_and_clamps() {
        let s = SeqProfile::new(vec![0.25, 1.0, 0.5], TailModel::Zero).unwrap();
        assert_eq!(s.prefix(), &[1.0, 0.5, 0.25]);
        assert_eq!(s.tail_start(), 4);
        let s = SeqProfile::new(vec![1e-3, 0.0], TailModel::power(1.0)).unwrap();
        assert_eq!(s.prefix(), &[1e-3]);
        assert!(s.term(2) <= 1e-3 * (1.0 + 1e-12));
        assert!(SeqProfile::new(vec![-1.0], TailModel::Zero).is_err());
        assert!(SeqProfile::new(vec![0.0; MAX_PREFIX + 1], TailModel::Zero).is_err());
        assert!(SeqProfile::tail_only(TailModel::geometric(1.5)).is_err());
    }

    #[test]
    fn ampliate_finite() {
        let s = SeqProfile::finite(vec![1.0, 0.5, 0.25]).unwrap();
        let a = ampliate(&s, 2);
        assert_eq!(a.prefix(), &[1.0, 1.0, 0.5, 0.5, 0.25, 0.25]);
        assert!(a.tail().is_zero());
        assert_eq!(ampliate(&s, 1), s);
    }

    #[test]
    fn ampliate_power_tail_scales() {
        let s = power(1.5);
        let a = ampliate(&s, 2);
        for n in 1..=AMPLIATE_EXACT {
            assert_eq!(a.term(n), s.term(n.div_ceil(2)));
        }
        for n in [10_000usize, 100_000] {
            let exact = s.term(n.div_ceil(2));
            assert!((a.term(n) / exact - 1.0).abs() < 1e-3);
        }
        match a.tail() {
            TailModel::Power { scale, .. } => assert!((scale - 2f64.powf(1.5)).abs() < 1e-12),
            t => panic!("unexpected tail {t:?}"),
        }
    }

    #[test]
    fn arith_mean_rules() {
        let fin = SeqProfile::finite(vec![1.0]).unwrap();
        let m = arith_mean(&fin);
        for n in 1..50 {
            assert!((m.term(n) - 1.0 / n as f64).abs() < 1e-15);
        }
        let cases = [
            (TailModel::power(2.0), "power", 1.0, 0),
            (TailModel::power(1.0), "power_log", 1.0, 1),
            (TailModel::power(0.5), "power", 0.5, 0),
            (TailModel::geometric(0.5), "power", 1.0, 0),
            (TailModel::power_log(1.0, 2), "power_log", 1.0, 3),
            (TailModel::power_log(0.5, 2), "power_log", 0.5, 2),
            (TailModel::power_log(3.0, 2), "power", 1.0, 0),
        ];
        for (tail, kind, p, k) in cases {
            let m = arith_mean(&SeqProfile::tail_only(tail.clone()).unwrap());
            let got = match *m.tail() {
                TailModel::Power { p, .. } => ("power", p, 0),
                TailModel::PowerLog { p, k, .. } => ("power_log", p, k),
                _ => ("other", 0.0, 0),
            };
            assert_eq!(got, (kind, p, k), "rule for {tail:?}");
        }
        let zero = arith_mean(&SeqProfile::zero());
        assert!(zero.tail().is_zero());
    }

    #[test]
    fn arith_mean_junction_is_monotone() {
        for tail in [TailModel::power(1.0), TailModel::power(0.3), TailModel::power_log(1.0, 3)] {
            let m = arith_mean(&SeqProfile::new(vec![5.0, 2.0], tail).unwrap());
            let t = m.terms(2_000);
            assert!(t.windows(2).all(|w| w[1] <= w[0] * (1.0 + 1e-12)));
        }
    }

    #[test]
    fn domination_examples() {
        assert!(big_o_dominates(&power(2.0), &power(1.0)));
        assert!(!big_o_dominates(&power(1.0), &power(2.0)));
        let pl = SeqProfile::tail_only(TailModel::power_log(1.0, 1)).unwrap();
        assert!(!big_o_dominates(&pl, &power(1.0)));
        assert!(big_o_dominates(&power(1.0), &pl));
        let c = big_o_constant(&power(2.0), &power(1.0)).unwrap();
        assert!((c - 1.0).abs() < 1e-12);
    }

    #[test]
    fn domination_zero_dominator() {
        let a = SeqProfile::finite(vec![1.0, 1.0]).unwrap();
        let b = SeqProfile::finite(vec![1.0]).unwrap();
        assert!(!big_o_dominates(&a, &b));
        assert_eq!(big_o_constant(&b, &a), Some(1.0));
        assert!(big_o_dominates(&SeqProfile::zero(), &SeqProfile::zero()));
    }

    #[test]
    fn membership_examples() {
        let s = power(0.75);
        assert!(in_ideal(&s, IdealTag::Schatten { p: 2.0 }));
        assert!(!in_ideal(&s, IdealTag::Schatten { p: 1.0 }));
        let z = SeqProfile::finite(vec![3.0, 1.0]).unwrap();
        for j in [IdealTag::FiniteRank, IdealTag::Schatten { p: 1.0 }, IdealTag::Compact] {
            assert!(in_ideal(&z, j));
        }
        let g = SeqProfile::tail_only(TailModel::geometric(0.5)).unwrap();
        assert!(in_ideal(&g, IdealTag::Schatten { p: 1.0 }));
        assert!(!in_ideal(&power(0.5), IdealTag::Schatten { p: 2.0 }));
    }

    #[test]
    fn am_closure_examples() {
        assert!(am_closure_member(&power(2.0), IdealTag::FiniteRank));
        assert!(!am_closure_member(&power(1.0), IdealTag::FiniteRank));
        assert!(!in_ideal(&power(2.0), IdealTag::FiniteRank));
    }

    #[test]
    fn squares() {
        assert_eq!(ideal_square(IdealTag::Schatten { p: 2.0 }), IdealTag::Schatten { p: 1.0 });
        assert_eq!(ideal_square(IdealTag::FiniteRank), IdealTag::FiniteRank);
        assert_eq!(ideal_square(IdealTag::Compact), IdealTag::Compact);
        assert!(ideal_square(IdealTag::Schatten { p: 1.0 }).is_sub_schatten());
    }

    #[test]
    fn power_sums() {
        // sum n^-2 = pi^2 / 6
        let s = power(1.0).power_sum(2.0);
        assert!((s - std::f64::consts::PI.powi(2) / 6.0).abs() < 1e-10, "{s}");
        assert!(power(1.0).power_sum(1.0).is_infinite());
        let g = SeqProfile::tail_only(TailModel::geometric(0.5)).unwrap();
        assert!((g.power_sum(1.0) - 1.0).abs() < 1e-14);
        let f = SeqProfile::finite(vec![3.0, 4.0]).unwrap();
        assert_eq!(f.power_sum(2.0), 25.0);
        // slow decay near the threshold: zeta(1.02)
        let z = power(0.51).power_sum(2.0);
        assert!((z - 50.578_67).abs() < 1e-3, "{z}");
    }

    #[test]
    fn json_round_trip() {
        let txt = r#"{"prefix":[1.0,0.5],"tail":{"kind":"power","p":2.0,"scale":1.0}}"#;
        let s: SeqProfile = serde_json::from_str(txt).unwrap();
        assert_eq!(s.prefix(), &[1.0, 0.5]);
        let back: SeqProfile = serde_json::from_str(&serde_json::to_string(&s).unwrap()).unwrap();
        assert_eq!(back, s);
        let tag: IdealTag = serde_json::from_str(r#"{"ideal":"schatten","p":2.0}"#).unwrap();
        assert_eq!(tag, IdealTag::Schatten { p: 2.0 });
        assert!(serde_json::from_str::<SeqProfile>(r#"{"prefix":[-1],"tail":{"kind":"zero"}}"#).is_err());
    }

    #[test]
    fn tag_parsing() {
        assert_eq!("finite-rank".parse::<IdealTag>().unwrap(), IdealTag::FiniteRank);
        assert_eq!("schatten:2".parse::<IdealTag>().unwrap(), IdealTag::Schatten { p: 2.0 });
        assert!("schatten:0.5".parse::<IdealTag>().is_err());
        assert!("trace".parse::<IdealTag>().is_err());
        let t = IdealTag::Schatten { p: 1.5 };
        assert_eq!(t.to_string().parse::<IdealTag>().unwrap(), t);
    }
}
