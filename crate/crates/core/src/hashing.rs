//! Word to signature hashing.
//!
//! A word is sliced into the union of its character n-grams for every length in
//! `charlens`. Each n-gram is digested with FNV-1a and pushed through a
//! 2-universal hash into the universe `U`. One-permutation hashing splits `U`
//! into `m` equal bins and keeps the minimum per bin; empty bins borrow the
//! nearest occupied neighbour in a direction fixed per (seed, repetition, bin).
//! The dense bin array is then folded into one value of `U'` by
//! `o_i = h'(s_i + o_{i-1})`, with `o_0 = 0`.

use std::collections::BTreeSet;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::params::{Coefficients, HashCoeffs, LshParams};

pub const FNV_OFFSET_BASIS: u64 = 14695981039346656037;
pub const FNV_PRIME: u64 = 1099511628211;

#[inline]
pub fn fnv1a64(bytes: &[u8]) -> u64 {
    bytes.iter().fold(FNV_OFFSET_BASIS, |h, &b| {
        (h ^ b as u64).wrapping_mul(FNV_PRIME)
    })
}

/// The set `S(w)` of character n-grams of a word.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SubstringSet {
    pub word: String,
    pub members: BTreeSet<String>,
}

impl SubstringSet {
    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }
}

/// Byte offsets of every char boundary of `word`, including `word.len()`.
fn char_boundaries(word: &str) -> Vec<usize> {
    word.char_indices()
        .map(|(i, _)| i)
        .chain(std::iter::once(word.len()))
        .collect()
}

/// Calls `f` with every contiguous substring of `k` chars for each `k` in `charlens`.
/// Lengths exceeding the word contribute nothing.
fn for_each_ngram<'a>(word: &'a str, charlens: &[usize], mut f: impl FnMut(&'a str)) {
    let bounds = char_boundaries(word);
    let chars = bounds.len() - 1;
    for &k in charlens {
        if k == 0 || k > chars {
            continue;
        }
        for start in 0..=chars - k {
            f(&word[bounds[start]..bounds[start + k]]);
        }
    }
}

pub fn slice_word(word: &str, charlens: &[usize]) -> SubstringSet {
    let mut members = BTreeSet::new();
    for_each_ngram(word, charlens, |g| {
        members.insert(g.to_owned());
    });
    SubstringSet {
        word: word.to_owned(),
        members,
    }
}

/// FNV-1a digests of every n-gram of `word`, sorted and deduplicated.
///
/// These do not depend on the repetition, so callers hashing a word `T` times
/// compute them once.
pub fn substring_digests(word: &str, charlens: &[usize]) -> Vec<u64> {
    let mut out = Vec::new();
    for_each_ngram(word, charlens, |g| out.push(fnv1a64(g.as_bytes())));
    out.sort_unstable();
    out.dedup();
    out
}

pub fn string_to_universe(s: &str, coeffs: &HashCoeffs, prime: u64, universe: u64) -> u64 {
    coeffs.apply(fnv1a64(s.as_bytes()), prime, universe)
}

/// Per-bin minima of one-permutation hashing. `None` marks an empty bin.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BinSignature {
    pub values: Vec<Option<u64>>,
}

impl BinSignature {
    pub fn is_dense(&self) -> bool {
        self.values.iter().all(Option::is_some)
    }

    pub fn is_vacant(&self) -> bool {
        self.values.iter().all(Option::is_none)
    }
}

/// Keeps the smallest hash in each of `bins` equal slices of `[0, universe)`.
pub fn bin_minima(hashes: impl IntoIterator<Item = u64>, bins: usize, universe: u64) -> BinSignature {
    let width = universe / bins as u64;
    let mut values = vec![None; bins];
    for h in hashes {
        let slot = &mut values[(h / width) as usize];
        match slot {
            Some(v) if *v <= h => {}
            _ => *slot = Some(h),
        }
    }
    BinSignature { values }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    Left,
    Right,
}

/// Borrowing direction for an empty bin; shared by every word hashed under the
/// same seed and repetition so that borrowed values stay comparable.
pub fn densify_direction(seed: u64, repetition: usize, bin: usize) -> Direction {
    let mut key = [0u8; 24];
    key[..8].copy_from_slice(&seed.to_le_bytes());
    key[8..16].copy_from_slice(&(repetition as u64).to_le_bytes());
    key[16..].copy_from_slice(&(bin as u64).to_le_bytes());
    if fnv1a64(&key) & 1 == 0 {
        Direction::Left
    } else {
        Direction::Right
    }
}

/// Fills empty bins by scanning circularly to the nearest occupied bin in the
/// direction picked by `pick(bin)`.
pub fn densify_with(sig: &BinSignature, mut pick: impl FnMut(usize) -> Direction) -> Result<Vec<u64>> {
    if sig.is_vacant() {
        return Err(Error::EmptySignature);
    }
    let m = sig.values.len();
    let out = (0..m)
        .map(|i| match sig.values[i] {
            Some(v) => v,
            None => {
                let step = match pick(i) {
                    Direction::Left => m - 1,
                    Direction::Right => 1,
                };
                let mut j = i;
                loop {
                    j = (j + step) % m;
                    if let Some(v) = sig.values[j] {
                        break v;
                    }
                }
            }
        })
        .collect();
    Ok(out)
}

pub fn densify(sig: &BinSignature, repetition: usize, seed: u64) -> Result<Vec<u64>> {
    densify_with(sig, |bin| densify_direction(seed, repetition, bin))
}

/// Value of `U'` identifying a word in one repetition.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct FoldedSignature(pub u64);

impl fmt::Display for FoldedSignature {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.0.fmt(f)
    }
}

pub fn fold_signature(dense: &[u64], coeffs: &HashCoeffs, prime: u64, folded_universe: u64) -> FoldedSignature {
    let folded = dense.iter().fold(0u64, |prev, &s| {
        let x = s as u128 + prev as u128;
        let v = (coeffs.a as u128 * x + coeffs.b as u128) % prime as u128;
        (v % folded_universe as u128) as u64
    });
    FoldedSignature(folded)
}

/// Densified bins of a word for one repetition, given its precomputed digests.
/// `None` when the word has no n-grams.
pub fn dense_bins_from_digests(
    digests: &[u64],
    repetition: usize,
    params: &LshParams,
    coeffs: &Coefficients,
) -> Option<Vec<u64>> {
    if digests.is_empty() {
        return None;
    }
    let h = coeffs.substring(repetition);
    let hashes = digests
        .iter()
        .map(|&x| h.apply(x, params.prime, params.universe_size));
    let bins = bin_minima(hashes, params.num_bins, params.universe_size);
    densify(&bins, repetition, params.seed).ok()
}

pub fn dense_bins(word: &str, repetition: usize, params: &LshParams, coeffs: &Coefficients) -> Option<Vec<u64>> {
    dense_bins_from_digests(&substring_digests(word, &params.charlens), repetition, params, coeffs)
}

pub fn signature_from_digests(
    digests: &[u64],
    repetition: usize,
    params: &LshParams,
    coeffs: &Coefficients,
) -> Option<FoldedSignature> {
    let dense = dense_bins_from_digests(digests, repetition, params, coeffs)?;
    Some(fold_signature(
        &dense,
        coeffs.fold(repetition),
        params.prime,
        params.folded_universe_size,
    ))
}

/// Folded signature of `word` in repetition `repetition`, or `None` when every
/// n-gram length exceeds the word.
pub fn word_signature(
    word: &str,
    repetition: usize,
    params: &LshParams,
    coeffs: &Coefficients,
) -> Option<FoldedSignature> {
    signature_from_digests(&substring_digests(word, &params.charlens), repetition, params, coeffs)
}

/// Signatures for every repetition, `None` for unhashable words.
pub fn all_signatures(word: &str, params: &LshParams, coeffs: &Coefficients) -> Option<Vec<FoldedSignature>> {
    let digests = substring_digests(word, &params.charlens);
    if digests.is_empty() {
        return None;
    }
    (0..params.num_repetitions)
        .map(|t| signature_from_digests(&digests, t, params, coeffs))
        .collect()
}

/// Exact Jaccard index of two substring sets, kept as a ratio.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Jaccard {
    pub shared: usize,
    pub total: usize,
}

impl Jaccard {
    pub fn value(&self) -> f64 {
        self.shared as f64 / self.total as f64
    }
}

pub fn jaccard_exact(w1: &str, w2: &str, charlens: &[usize]) -> Result<Jaccard> {
    let a = slice_word(w1, charlens);
    let b = slice_word(w2, charlens);
    let total = a.members.union(&b.members).count();
    if total == 0 {
        return Err(Error::EmptyUnion);
    }
    let shared = a.members.intersection(&b.members).count();
    Ok(Jaccard { shared, total })
}
