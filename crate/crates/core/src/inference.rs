//! Placing unseen words onto an existing index.
//!
//! A query word is hashed with the index's own coefficients; every indexed word
//! sharing its bucket in a repetition gains one unit of weight. A candidate is
//! accepted only when its weight is strictly greater than `alpha * T`, while
//! indexing keeps edges with `weight >= alpha * T`. The inclusive option
//! switches inference to the indexing rule.

use std::collections::HashMap;

use rayon::prelude::*;

use crate::error::Result;
use crate::graph::{with_workers, WordId};
use crate::hashing::{signature_from_digests, substring_digests};
use crate::index_store::Index;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct InferenceMatch {
    pub word: WordId,
    pub weight: u32,
    pub representative: WordId,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct InferenceOptions {
    /// Accept `weight >= alpha * T` instead of `weight > alpha * T`.
    pub inclusive: bool,
}

/// Collision counts of `word` against every indexed word it ever shares a bucket with.
pub fn candidate_weights(word: &str, index: &Index) -> HashMap<WordId, u32> {
    let params = &index.manifest.params;
    let coeffs = &index.manifest.coefficients;
    let digests = substring_digests(word, &params.charlens);
    let mut weights = HashMap::new();
    if digests.is_empty() {
        return weights;
    }
    for (t, buckets) in index.buckets.repetitions.iter().enumerate() {
        let Some(sig) = signature_from_digests(&digests, t, params, coeffs) else {
            continue;
        };
        for &id in buckets.get(sig) {
            *weights.entry(id).or_insert(0) += 1;
        }
    }
    weights
}

pub fn infer_word(word: &str, index: &Index, opts: &InferenceOptions) -> Option<InferenceMatch> {
    let threshold = index.manifest.params.threshold();
    let passes = |w: u32| {
        if opts.inclusive {
            w as f64 >= threshold
        } else {
            w as f64 > threshold
        }
    };
    let words = &index.words;
    let (id, weight) = candidate_weights(word, index)
        .into_iter()
        .filter(|&(_, w)| passes(w))
        .min_by(|&(a, wa), &(b, wb)| {
            wb.cmp(&wa)
                .then_with(|| words.frequency(b).cmp(&words.frequency(a)))
                .then_with(|| words.token(a).cmp(words.token(b)))
        })?;
    Some(InferenceMatch {
        word: id,
        weight,
        representative: index.vocabulary.representative(id),
    })
}

/// Element-wise [`infer_word`], order preserving, on `workers` threads.
pub fn infer_batch<S: AsRef<str> + Sync>(
    words: &[S],
    index: &Index,
    opts: &InferenceOptions,
    workers: usize,
) -> Result<Vec<Option<InferenceMatch>>> {
    with_workers(workers, || {
        words
            .par_iter()
            .map(|w| infer_word(w.as_ref(), index, opts))
            .collect()
    })
}
