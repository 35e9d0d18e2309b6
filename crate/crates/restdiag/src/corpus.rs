//! Seeded random instances shared by the CLI fixtures and the test suites.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::Result;
use crate::linalg::{self, c, CMat, C64};
use crate::op_core::{DiagonalizableOperator, IdentityDecomposition, Projection};
use crate::permutations::{IndexPermutation, PartitionOfIndices};

pub type CorpusRng = ChaCha8Rng;

pub fn rng(seed: u64) -> CorpusRng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Matrix with independent standard complex Gaussian entries.
pub fn gaussian(rng: &mut CorpusRng, rows: usize, cols: usize) -> CMat {
    CMat::from_fn(rows, cols, |_, _| {
        let re: f64 = rng.sample(StandardNormal);
        let im: f64 = rng.sample(StandardNormal);
        c(re, im) * std::f64::consts::FRAC_1_SQRT_2
    })
}

pub fn random_unitary(rng: &mut CorpusRng, n: usize) -> CMat {
    linalg::unitary_polar(&gaussian(rng, n, n))
}

/// `A` with rank at most `rank`.
pub fn low_rank(rng: &mut CorpusRng, n: usize, rank: usize) -> CMat {
    gaussian(rng, n, rank) * gaussian(rng, rank, n)
}

/// Projection onto a random `k`-dimensional subspace.
pub fn random_projection(rng: &mut CorpusRng, n: usize, k: usize, identity_tail: bool) -> Projection {
    let u = random_unitary(rng, n);
    Projection::from_basis_unchecked(u.columns(0, k).into_owned(), identity_tail)
}

/// Random split of `0..n` into `parts` nonempty sets (`parts <= n`).
pub fn random_partition(rng: &mut CorpusRng, n: usize, parts: usize) -> Vec<Vec<usize>> {
    assert!(parts >= 1 && parts <= n);
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(rng);
    let mut cuts: Vec<usize> = (1..n).collect();
    cuts.shuffle(rng);
    let mut cuts: Vec<usize> = cuts.into_iter().take(parts - 1).collect();
    cuts.sort_unstable();
    let mut out = Vec::with_capacity(parts);
    let mut start = 0;
    for end in cuts.into_iter().chain([n]) {
        let mut s = idx[start..end].to_vec();
        s.sort_unstable();
        out.push(s);
        start = end;
    }
    out
}

/// Coordinate partition rotated by `u`; the last part carries the tail.
pub fn rotated_family(u: &CMat, sets: &[Vec<usize>]) -> Vec<Projection> {
    let n = u.nrows();
    let k = sets.len();
    sets.iter()
        .enumerate()
        .map(|(i, s)| Projection::coordinate(n, s, i + 1 == k).conjugated(u))
        .collect()
}

pub fn random_decomposition(rng: &mut CorpusRng, n: usize, parts: usize) -> IdentityDecomposition {
    let sets = random_partition(rng, n, parts);
    let u = random_unitary(rng, n);
    IdentityDecomposition::new(rotated_family(&u, &sets)).expect("rotated partition is a decomposition")
}

/// Unitary polar factor of `I + K`, `K` with geometric singular values
/// `scale * ratio^i`, `i < rank`.
pub fn perturbed_unitary(rng: &mut CorpusRng, n: usize, scale: f64, ratio: f64, rank: usize) -> CMat {
    let rank = rank.min(n);
    let u = random_unitary(rng, n);
    let v = random_unitary(rng, n);
    let mut k = CMat::zeros(n, n);
    for i in 0..rank {
        let s = scale * ratio.powi(i as i32);
        k += u.column(i) * v.column(i).adjoint() * c(s, 0.0);
    }
    linalg::unitary_polar(&(linalg::identity(n) + k))
}

/// `A = W D W*` with its diagonal family and `W`.
#[derive(Debug, Clone)]
pub struct RoundTrip {
    pub a: DiagonalizableOperator,
    pub es: Vec<Projection>,
    pub w: CMat,
}

/// Distinct eigenvalues `1, 2, ...` jittered by less than 1/2.
pub fn distinct_eigenvalues(rng: &mut CorpusRng, k: usize) -> Vec<C64> {
    (0..k)
        .map(|i| c(1.0 + i as f64 + rng.random_range(-0.4..0.4), rng.random_range(-0.4..0.4)))
        .collect()
}

pub fn round_trip(rng: &mut CorpusRng, dim: usize, parts: usize, scale: f64) -> Result<RoundTrip> {
    let sets = random_partition(rng, dim, parts);
    let rank = rng.random_range(1..=dim.min(12));
    let w = perturbed_unitary(rng, dim, scale, 0.5, rank);
    let es: Vec<Projection> = rotated_family(&linalg::identity(dim), &sets);
    let ps = IdentityDecomposition::new(rotated_family(&w, &sets))?;
    let a = DiagonalizableOperator::new(distinct_eigenvalues(rng, parts), ps)?;
    Ok(RoundTrip { a, es, w })
}

/// Random partition of `1..=n` with `τ` having at most `max_mismatch`
/// mismatch points.
pub fn permutation_instance(
    rng: &mut CorpusRng,
    n: usize,
    blocks: usize,
    max_mismatch: usize,
) -> (IndexPermutation, PartitionOfIndices) {
    let sets = random_partition(rng, n, blocks);
    let part = PartitionOfIndices::new(
        sets.iter().map(|s| s.iter().map(|i| i + 1).collect()).collect(),
        Some(blocks - 1),
    )
    .expect("random partition is valid");
    loop {
        let mut map: Vec<usize> = (1..=n).collect();
        // block-preserving shuffles plus a few crossing transpositions
        for s in &sets {
            let mut imgs: Vec<usize> = s.iter().map(|i| i + 1).collect();
            imgs.shuffle(rng);
            for (i, v) in s.iter().zip(imgs) {
                map[*i] = v;
            }
        }
        let swaps = rng.random_range(0..=max_mismatch / 2);
        for _ in 0..swaps {
            let a = rng.random_range(0..n);
            let b = rng.random_range(0..n);
            map.swap(a, b);
        }
        let tau = IndexPermutation::new(map).expect("shuffles give a bijection");
        if crate::permutations::mismatch_set(&tau, &part).len() <= max_mismatch {
            return (tau, part);
        }
    }
}
