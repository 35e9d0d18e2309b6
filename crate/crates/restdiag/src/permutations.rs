//! Finite permutations matching a permutation's action on a partition.
//!
//! Indices are 1-based. A permutation is stored in one-line form on `1..=N`
//! and acts as the identity beyond `N`.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{self, c, CMat};
use crate::op_core::{op_in_ideal, sub, DiagonalizableOperator, Projection, Tail, TruncOperator};
use crate::seq_ideal::IdealTag;

/// Default cap on the mismatch set handled by [`align_finite`].
pub const DEFAULT_MISMATCH_BOUND: usize = 1 << 12;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PartitionOfIndices {
    blocks: Vec<Vec<usize>>,
    tail_block: Option<usize>,
    owner: Vec<usize>,
}

#[derive(Serialize, Deserialize)]
#[serde(untagged)]
enum RawPartition {
    Plain(Vec<Vec<usize>>),
    Full {
        blocks: Vec<Vec<usize>>,
        #[serde(default)]
        tail_block: Option<usize>,
    },
}

impl Serialize for PartitionOfIndices {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self.tail_block {
            None => RawPartition::Plain(self.blocks.clone()),
            Some(t) => RawPartition::Full {
                blocks: self.blocks.clone(),
                tail_block: Some(t),
            },
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for PartitionOfIndices {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let (blocks, tail) = match RawPartition::deserialize(d)? {
            RawPartition::Plain(b) => (b, None),
            RawPartition::Full { blocks, tail_block } => (blocks, tail_block),
        };
        PartitionOfIndices::new(blocks, tail).map_err(serde::de::Error::custom)
    }
}

impl PartitionOfIndices {
    /// Blocks must partition `1..=N`; `tail_block` (0-based) receives `n > N`.
    pub fn new(blocks: Vec<Vec<usize>>, tail_block: Option<usize>) -> Result<Self> {
        let n: usize = blocks.iter().map(Vec::len).sum();
        let mut owner = vec![usize::MAX; n];
        for (b, block) in blocks.iter().enumerate() {
            for &i in block {
                if i == 0 || i > n {
                    return Err(Error::InvalidInput(format!("index {i} outside 1..={n}")));
                }
                if owner[i - 1] != usize::MAX {
                    return Err(Error::InvalidInput(format!("index {i} appears twice")));
                }
                owner[i - 1] = b;
            }
        }
        if let Some(t) = tail_block {
            if t >= blocks.len() {
                return Err(Error::InvalidInput(format!("tail block {t} does not exist")));
            }
        }
        let mut blocks = blocks;
        for b in &mut blocks {
            b.sort_unstable();
        }
        Ok(PartitionOfIndices {
            blocks,
            tail_block,
            owner,
        })
    }

    pub fn len(&self) -> usize {
        self.owner.len()
    }

    pub fn is_empty(&self) -> bool {
        self.owner.is_empty()
    }

    pub fn blocks(&self) -> &[Vec<usize>] {
        &self.blocks
    }

    pub fn tail_block(&self) -> Option<usize> {
        self.tail_block
    }

    /// Block containing `i`; indices beyond `N` belong to the tail block.
    pub fn block_of(&self, i: usize) -> Option<usize> {
        if i >= 1 && i <= self.owner.len() {
            Some(self.owner[i - 1])
        } else {
            self.tail_block
        }
    }
}

/// Bijection of `1..=N` in one-line form.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "Vec<usize>", into = "Vec<usize>")]
pub struct IndexPermutation {
    mapping: Vec<usize>,
}

impl TryFrom<Vec<usize>> for IndexPermutation {
    type Error = Error;

    fn try_from(v: Vec<usize>) -> Result<Self> {
        IndexPermutation::new(v)
    }
}

impl From<IndexPermutation> for Vec<usize> {
    fn from(p: IndexPermutation) -> Vec<usize> {
        p.mapping
    }
}

impl IndexPermutation {
    pub fn new(mapping: Vec<usize>) -> Result<Self> {
        let n = mapping.len();
        let mut seen = vec![false; n];
        for &v in &mapping {
            if v == 0 || v > n || seen[v - 1] {
                return Err(Error::InvalidInput(format!("one-line form is not a bijection of 1..={n}")));
            }
            seen[v - 1] = true;
        }
        Ok(IndexPermutation { mapping })
    }

    pub fn identity(n: usize) -> Self {
        IndexPermutation {
            mapping: (1..=n).collect(),
        }
    }

    /// Transposition `(a b)` on `1..=n`.
    pub fn transposition(n: usize, a: usize, b: usize) -> Result<Self> {
        let mut m: Vec<usize> = (1..=n).collect();
        if a == 0 || b == 0 || a > n || b > n {
            return Err(Error::InvalidInput(format!("({a} {b}) outside 1..={n}")));
        }
        m.swap(a - 1, b - 1);
        Ok(IndexPermutation { mapping: m })
    }

    pub fn len(&self) -> usize {
        self.mapping.len()
    }

    pub fn is_empty(&self) -> bool {
        self.mapping.is_empty()
    }

    pub fn mapping(&self) -> &[usize] {
        &self.mapping
    }

    pub fn apply(&self, i: usize) -> usize {
        if i >= 1 && i <= self.mapping.len() {
            self.mapping[i - 1]
        } else {
            i
        }
    }

    pub fn inverse(&self) -> Self {
        let mut inv = vec![0; self.mapping.len()];
        for (i, &v) in self.mapping.iter().enumerate() {
            inv[v - 1] = i + 1;
        }
        IndexPermutation { mapping: inv }
    }

    /// `self . other` (apply `other` first).
    pub fn compose(&self, other: &Self) -> Self {
        let n = self.len().max(other.len());
        IndexPermutation {
            mapping: (1..=n).map(|i| self.apply(other.apply(i))).collect(),
        }
    }

    /// Points moved.
    pub fn support(&self) -> Vec<usize> {
        (1..=self.len()).filter(|&i| self.apply(i) != i).collect()
    }

    /// Same permutation on `1..=n`, `n >= len`.
    pub fn extended(&self, n: usize) -> Self {
        IndexPermutation {
            mapping: (1..=n.max(self.len())).map(|i| self.apply(i)).collect(),
        }
    }

    /// Image of a set of indices.
    pub fn image(&self, set: &[usize]) -> BTreeSet<usize> {
        set.iter().map(|&i| self.apply(i)).collect()
    }
}

/// Indices whose image leaves their block.
pub fn mismatch_set(tau: &IndexPermutation, part: &PartitionOfIndices) -> BTreeSet<usize> {
    (1..=tau.len().max(part.len()))
        .filter(|&i| part.block_of(i) != part.block_of(tau.apply(i)))
        .collect()
}

/// `sigma(I_n) == tau(I_n)` for every block.
pub fn same_block_images(sigma: &IndexPermutation, tau: &IndexPermutation, part: &PartitionOfIndices) -> bool {
    part.blocks().iter().all(|b| sigma.image(b) == tau.image(b))
}

/// Sizes of the mismatch set after each erased cycle.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AlignTrace {
    pub sigma: IndexPermutation,
    pub mismatch_sizes: Vec<usize>,
}

pub fn align_finite(tau: &IndexPermutation, part: &PartitionOfIndices, bound: usize) -> Result<IndexPermutation> {
    align_finite_traced(tau, part, bound).map(|t| t.sigma)
}

/// Finite `sigma` with `sigma(I_n) = tau(I_n)` for all blocks.
///
/// Each round takes the least mismatch point `i` of the current permutation
/// `rho`, erases the `rho`-cycle `mu` through `i` by `rho <- mu^-1 rho`, and
/// multiplies `mu` into `sigma`. When no mismatch is left `rho` preserves
/// every block, so `sigma = tau rho^-1` has the required block images. On a
/// bijection of `1..=N` every orbit closes, so the open-orbit surgery of
/// [`close_chain`] is never needed here.
pub fn align_finite_traced(tau: &IndexPermutation, part: &PartitionOfIndices, bound: usize) -> Result<AlignTrace> {
    let n = tau.len().max(part.len());
    let m0 = mismatch_set(tau, part);
    if m0.len() > bound {
        return Err(Error::UnboundedMismatch(m0.len(), bound));
    }
    let mut rho = tau.extended(n);
    let mut sigma = IndexPermutation::identity(n);
    let mut sizes = vec![m0.len()];
    let mut m = m0;
    while let Some(&i) = m.iter().next() {
        let mut cycle = vec![i];
        let mut x = rho.apply(i);
        while x != i {
            cycle.push(x);
            x = rho.apply(x);
        }
        let mu = cycle_permutation(n, &cycle);
        rho = mu.inverse().compose(&rho);
        sigma = sigma.compose(&mu);
        let next = mismatch_set(&rho, part);
        // a cycle leaving its block must jump back, so two mismatches go
        assert!(next.len() + 2 <= m.len(), "cycle erasure must remove at least two mismatches");
        sizes.push(next.len());
        m = next;
    }
    Ok(AlignTrace {
        sigma,
        mismatch_sizes: sizes,
    })
}

/// Cycle `c_0 -> c_1 -> ... -> c_last -> c_0` on `1..=n`.
fn cycle_permutation(n: usize, cycle: &[usize]) -> IndexPermutation {
    let mut m: Vec<usize> = (1..=n).collect();
    for (k, &x) in cycle.iter().enumerate() {
        m[x - 1] = cycle[(k + 1) % cycle.len()];
    }
    IndexPermutation { mapping: m }
}

/// Surgery on an open orbit segment `c_0 -> ... -> c_L` whose preimage of
/// `c_0` and image of `c_L` lie beyond the truncation, in the tail block.
///
/// Closing the segment into the cycle `mu` (`c_L -> c_0`) keeps every image
/// in its original block, so `mu^-1 tau` loses the segment's mismatch points.
/// Returns `mu` on `1..=n`.
pub fn close_chain(chain: &[usize], part: &PartitionOfIndices, n: usize) -> Result<IndexPermutation> {
    let t = part
        .tail_block()
        .ok_or_else(|| Error::PreconditionFailed("open orbits need a tail block".into()))?;
    let (first, last) = match (chain.first(), chain.last()) {
        (Some(&a), Some(&b)) => (a, b),
        _ => return Err(Error::InvalidInput("empty chain".into())),
    };
    if part.block_of(first) != Some(t) || part.block_of(last) != Some(t) {
        return Err(Error::PreconditionFailed(
            "chain ends must lie in the tail block".into(),
        ));
    }
    let mu = cycle_permutation(n, chain);
    let mut x = first;
    for _ in 0..chain.len() {
        x = mu.apply(x);
    }
    assert_eq!(x, first, "closed chain must return after its length");
    Ok(mu)
}

/// Permutation matrix `U e_i = e_{sigma(i)}` with identity tail.
pub fn permutation_unitary(sigma: &IndexPermutation, dim: usize) -> Result<TruncOperator> {
    if let Some(&far) = sigma.support().last() {
        if far > dim {
            return Err(Error::SupportExceedsDim(far, dim));
        }
    }
    let mut u = CMat::zeros(dim, dim);
    for i in 1..=dim {
        u[(sigma.apply(i) - 1, i - 1)] = c(1.0, 0.0);
    }
    Ok(TruncOperator::raw(u, Tail::Identity))
}

fn coordinates(p: &Projection) -> Option<Vec<usize>> {
    let coords = p.dominant_coordinates();
    let diag = coords.len() == p.rank() && linalg::norm2(&linalg::off_diagonal(&p.block())) <= 1e-10;
    diag.then(|| coords.into_iter().map(|i| i + 1).collect())
}

const EIGEN_MATCH: f64 = 1e-9;

/// Finite permutation `sigma` with `U_sigma b U_sigma* = b'`, if any.
pub fn orbit_diag_equal(
    b: &DiagonalizableOperator,
    b_prime: &DiagonalizableOperator,
    j: IdealTag,
) -> Result<Option<IndexPermutation>> {
    let n = b.dim();
    if b_prime.dim() != n {
        return Err(Error::DimMismatch(n, b_prime.dim()));
    }
    let sets = |a: &DiagonalizableOperator| -> Result<Vec<Vec<usize>>> {
        a.spectral()
            .iter()
            .enumerate()
            .map(|(k, p)| {
                coordinates(p).ok_or_else(|| Error::InvalidInput(format!("spectral part {} is not diagonal", k + 1)))
            })
            .collect()
    };
    let (src, dst) = (sets(b)?, sets(b_prime)?);
    // match eigenvalues
    let mut partner = Vec::with_capacity(src.len());
    for lam in b.eigenvalues() {
        let k = b_prime
            .eigenvalues()
            .iter()
            .position(|mu| (mu - lam).norm() <= EIGEN_MATCH)
            .ok_or_else(|| Error::SpectrumMismatch(format!("eigenvalue {lam} has no partner")))?;
        partner.push(k);
    }
    if b.eigenvalues().len() != b_prime.eigenvalues().len() {
        return Err(Error::SpectrumMismatch("eigenvalue counts differ".into()));
    }
    let tail_src = b.spectral().tail_part();
    let tail_dst = b_prime.spectral().tail_part();
    if tail_src.map(|k| partner[k]) != tail_dst {
        return Ok(None);
    }
    if src.iter().zip(&partner).any(|(s, &k)| s.len() != dst[k].len()) {
        return Ok(None);
    }
    // tau sends block k onto its partner block in increasing order
    let mut map = vec![0; n];
    for (s, &k) in src.iter().zip(&partner) {
        for (&i, &v) in s.iter().zip(&dst[k]) {
            map[i - 1] = v;
        }
    }
    let tau = IndexPermutation::new(map)?;
    let part = PartitionOfIndices::new(src, tail_src)?;
    let sigma = align_finite(&tau, &part, DEFAULT_MISMATCH_BOUND)?;
    let u = permutation_unitary(&sigma, n)?;
    let conj = u.block() * b.block() * u.block().adjoint();
    let residual = linalg::norm2(&(conj - b_prime.block()));
    if residual > 1e-12 {
        return Err(Error::NotDiagonalizing(residual));
    }
    debug_assert!(op_in_ideal(&sub(&u, &TruncOperator::identity(n))?, j));
    Ok(Some(sigma))
}
