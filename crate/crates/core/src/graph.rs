//! Collision graph over the word table, threshold pruning and component vocabularies.

use std::collections::HashMap;

use log::warn;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::hashing::{signature_from_digests, substring_digests, FoldedSignature};
use crate::params::{Coefficients, LshParams};

pub type WordId = u32;

pub const DEFAULT_WARN_BUCKET_SIZE: usize = 10_000;

/// Distinct tokens with their corpus frequencies.
///
/// Ids are assigned in lexicographic (byte) order of the tokens, so a table is a
/// pure function of its `(token, frequency)` content.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct WordTable {
    words: Vec<(String, u64)>,
    ids: HashMap<String, WordId>,
}

impl WordTable {
    pub fn from_counts(counts: impl IntoIterator<Item = (String, u64)>) -> Result<Self> {
        let mut words: Vec<(String, u64)> = counts.into_iter().collect();
        words.sort_unstable_by(|a, b| a.0.cmp(&b.0));
        if let Some(w) = words.windows(2).find(|w| w[0].0 == w[1].0) {
            return Err(Error::InvalidParams(format!("duplicate token {:?}", w[0].0)));
        }
        if words.len() > WordId::MAX as usize {
            return Err(Error::InvalidParams("too many distinct tokens".into()));
        }
        let ids = words
            .iter()
            .enumerate()
            .map(|(i, (t, _))| (t.clone(), i as WordId))
            .collect();
        Ok(WordTable { words, ids })
    }

    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }

    pub fn id(&self, token: &str) -> Option<WordId> {
        self.ids.get(token).copied()
    }

    pub fn token(&self, id: WordId) -> &str {
        &self.words[id as usize].0
    }

    pub fn frequency(&self, id: WordId) -> u64 {
        self.words[id as usize].1
    }

    pub fn iter(&self) -> impl Iterator<Item = (WordId, &str, u64)> {
        self.words
            .iter()
            .enumerate()
            .map(|(i, (t, f))| (i as WordId, t.as_str(), *f))
    }
}

#[inline]
fn edge_key(a: WordId, b: WordId) -> u64 {
    let (lo, hi) = if a < b { (a, b) } else { (b, a) };
    (lo as u64) << 32 | hi as u64
}

/// Word-to-word graph whose edge weight counts the repetitions in which the two
/// words shared a signature.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct CollisionGraph {
    edges: HashMap<u64, u32>,
}

impl CollisionGraph {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.edges.len()
    }

    pub fn is_empty(&self) -> bool {
        self.edges.is_empty()
    }

    pub fn weight(&self, a: WordId, b: WordId) -> u32 {
        self.edges.get(&edge_key(a, b)).copied().unwrap_or(0)
    }

    /// Adds `weight` to edge `(a, b)`. Self-loops are ignored.
    pub fn add(&mut self, a: WordId, b: WordId, weight: u32) {
        if a != b && weight > 0 {
            *self.edges.entry(edge_key(a, b)).or_insert(0) += weight;
        }
    }

    /// Every edge as `(lo, hi, weight)` with `lo < hi`, in ascending order.
    pub fn edges(&self) -> Vec<(WordId, WordId, u32)> {
        let mut out: Vec<_> = self
            .edges
            .iter()
            .map(|(&k, &w)| ((k >> 32) as WordId, k as WordId, w))
            .collect();
        out.sort_unstable();
        out
    }

    pub fn max_weight(&self) -> u32 {
        self.edges.values().copied().max().unwrap_or(0)
    }

    /// Sums edge weights of `other` into `self`.
    pub fn merge(&mut self, other: CollisionGraph) {
        if other.edges.len() > self.edges.len() {
            let mine = std::mem::replace(&mut self.edges, other.edges);
            for (k, w) in mine {
                *self.edges.entry(k).or_insert(0) += w;
            }
        } else {
            for (k, w) in other.edges {
                *self.edges.entry(k).or_insert(0) += w;
            }
        }
    }
}

/// Signature to word-id buckets of one repetition, sorted by signature; ids in
/// each bucket are sorted ascending.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct RepetitionBuckets {
    entries: Vec<(FoldedSignature, Vec<WordId>)>,
}

impl RepetitionBuckets {
    /// Groups `(signature, id)` pairs; each id must appear at most once.
    pub fn from_pairs(mut pairs: Vec<(FoldedSignature, WordId)>) -> Self {
        pairs.sort_unstable();
        let mut entries: Vec<(FoldedSignature, Vec<WordId>)> = Vec::new();
        for (sig, id) in pairs {
            match entries.last_mut() {
                Some((last, ids)) if *last == sig => ids.push(id),
                _ => entries.push((sig, vec![id])),
            }
        }
        RepetitionBuckets { entries }
    }

    /// Builds from already grouped entries, checking canonical order.
    pub fn from_entries(entries: Vec<(FoldedSignature, Vec<WordId>)>) -> Result<Self> {
        if entries.windows(2).any(|w| w[0].0 >= w[1].0) {
            return Err(Error::InvalidParams("bucket signatures not strictly ascending".into()));
        }
        if entries.iter().any(|(_, ids)| ids.is_empty() || ids.windows(2).any(|w| w[0] >= w[1])) {
            return Err(Error::InvalidParams("bucket ids empty or not strictly ascending".into()));
        }
        Ok(RepetitionBuckets { entries })
    }

    pub fn get(&self, sig: FoldedSignature) -> &[WordId] {
        match self.entries.binary_search_by_key(&sig, |(s, _)| *s) {
            Ok(i) => &self.entries[i].1,
            Err(_) => &[],
        }
    }

    pub fn entries(&self) -> &[(FoldedSignature, Vec<WordId>)] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

/// Per-repetition bucket tables, needed to place unseen words at inference time.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct BucketIndex {
    pub repetitions: Vec<RepetitionBuckets>,
}

impl BucketIndex {
    pub fn empty(repetitions: usize) -> Self {
        BucketIndex {
            repetitions: vec![RepetitionBuckets::default(); repetitions],
        }
    }
}

/// Adds one to every pair inside each bucket.
///
/// Buckets larger than `warn_bucket_size` are still processed in full; they
/// only produce a warning since their cost is quadratic.
pub fn accumulate_repetition(buckets: &RepetitionBuckets, graph: &mut CollisionGraph, warn_bucket_size: usize) {
    for (sig, ids) in buckets.entries() {
        if ids.len() > warn_bucket_size {
            warn!(
                "bucket {sig} holds {} words (warn threshold {warn_bucket_size}); adding {} edges",
                ids.len(),
                ids.len() * (ids.len() - 1) / 2
            );
        }
        for (i, &a) in ids.iter().enumerate() {
            for &b in &ids[i + 1..] {
                graph.add(a, b, 1);
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BuildOptions {
    pub workers: usize,
    pub warn_bucket_size: usize,
}

impl Default for BuildOptions {
    fn default() -> Self {
        BuildOptions {
            workers: 1,
            warn_bucket_size: DEFAULT_WARN_BUCKET_SIZE,
        }
    }
}

pub(crate) fn with_workers<R: Send>(workers: usize, job: impl FnOnce() -> R + Send) -> Result<R> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()?;
    Ok(pool.install(job))
}

/// Hashes every word `T` times and accumulates the per-repetition cliques.
///
/// Words without n-grams are left out of both the graph and the index.
pub fn build_graph(
    table: &WordTable,
    params: &LshParams,
    coeffs: &Coefficients,
    opts: &BuildOptions,
) -> Result<(CollisionGraph, BucketIndex)> {
    params.validate()?;
    let reps = params.num_repetitions;
    with_workers(opts.workers, || {
        // word-major signature matrix: row per word, `reps` columns
        let rows: Vec<Option<Vec<FoldedSignature>>> = table
            .words
            .par_iter()
            .map(|(token, _)| {
                let digests = substring_digests(token, &params.charlens);
                if digests.is_empty() {
                    return None;
                }
                (0..reps)
                    .map(|t| signature_from_digests(&digests, t, params, coeffs))
                    .collect()
            })
            .collect();

        let repetitions: Vec<RepetitionBuckets> = (0..reps)
            .into_par_iter()
            .map(|t| {
                let pairs = rows
                    .iter()
                    .enumerate()
                    .filter_map(|(id, row)| row.as_ref().map(|sigs| (sigs[t], id as WordId)))
                    .collect();
                RepetitionBuckets::from_pairs(pairs)
            })
            .collect();

        let graph = repetitions
            .par_iter()
            .fold(CollisionGraph::new, |mut g, buckets| {
                accumulate_repetition(buckets, &mut g, opts.warn_bucket_size);
                g
            })
            .reduce(CollisionGraph::new, |mut a, b| {
                a.merge(b);
                a
            });
        (graph, BucketIndex { repetitions })
    })
}

/// Keeps exactly the edges with `weight >= alpha * T`.
pub fn prune(graph: &CollisionGraph, alpha: f64, repetitions: usize) -> CollisionGraph {
    let threshold = alpha * repetitions as f64;
    CollisionGraph {
        edges: graph
            .edges
            .iter()
            .filter(|(_, &w)| w as f64 >= threshold)
            .map(|(&k, &w)| (k, w))
            .collect(),
    }
}

struct DisjointSet {
    parent: Vec<u32>,
    rank: Vec<u8>,
}

impl DisjointSet {
    fn new(n: usize) -> Self {
        DisjointSet {
            parent: (0..n as u32).collect(),
            rank: vec![0; n],
        }
    }

    fn find(&mut self, mut x: u32) -> u32 {
        while self.parent[x as usize] != x {
            let grand = self.parent[self.parent[x as usize] as usize];
            self.parent[x as usize] = grand;
            x = grand;
        }
        x
    }

    fn union(&mut self, a: u32, b: u32) {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra == rb {
            return;
        }
        match self.rank[ra as usize].cmp(&self.rank[rb as usize]) {
            std::cmp::Ordering::Less => self.parent[ra as usize] = rb,
            std::cmp::Ordering::Greater => self.parent[rb as usize] = ra,
            std::cmp::Ordering::Equal => {
                self.parent[rb as usize] = ra;
                self.rank[ra as usize] += 1;
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Component {
    pub id: usize,
    /// Sorted ascending.
    pub members: Vec<WordId>,
    pub representative: WordId,
}

impl Component {
    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }
}

/// Most frequent member; equal frequencies go to the lexicographically smallest token.
pub fn elect_representative(members: &[WordId], table: &WordTable) -> WordId {
    *members
        .iter()
        .min_by(|&&a, &&b| {
            table
                .frequency(b)
                .cmp(&table.frequency(a))
                .then_with(|| table.token(a).cmp(table.token(b)))
        })
        .expect("component has at least one member")
}

/// Connected components of `graph` over every word of `table`; words without
/// edges become singletons. Components are numbered by their smallest member id.
pub fn connected_components(graph: &CollisionGraph, table: &WordTable) -> Vec<Component> {
    let n = table.len();
    let mut sets = DisjointSet::new(n);
    for &k in graph.edges.keys() {
        sets.union((k >> 32) as u32, k as u32);
    }
    let mut slot_of_root: HashMap<u32, usize> = HashMap::new();
    let mut groups: Vec<Vec<WordId>> = Vec::new();
    for id in 0..n as u32 {
        let root = sets.find(id);
        let slot = *slot_of_root.entry(root).or_insert_with(|| {
            groups.push(Vec::new());
            groups.len() - 1
        });
        groups[slot].push(id);
    }
    groups
        .into_iter()
        .enumerate()
        .map(|(id, members)| {
            let representative = elect_representative(&members, table);
            Component {
                id,
                members,
                representative,
            }
        })
        .collect()
}

/// Word to representative mapping plus the components it came from.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Vocabulary {
    mapping: Vec<WordId>,
    component_of: Vec<usize>,
    components: Vec<Component>,
}

impl Vocabulary {
    pub fn representative(&self, id: WordId) -> WordId {
        self.mapping[id as usize]
    }

    pub fn component_of(&self, id: WordId) -> &Component {
        &self.components[self.component_of[id as usize]]
    }

    pub fn components(&self) -> &[Component] {
        &self.components
    }

    pub fn len(&self) -> usize {
        self.mapping.len()
    }

    pub fn is_empty(&self) -> bool {
        self.mapping.is_empty()
    }
}

/// Points every member at its component's representative.
pub fn build_vocabulary(components: Vec<Component>, table: &WordTable) -> Result<Vocabulary> {
    const UNSET: usize = usize::MAX;
    let mut component_of = vec![UNSET; table.len()];
    let mut mapping = vec![0; table.len()];
    for (slot, c) in components.iter().enumerate() {
        if !c.members.contains(&c.representative) {
            return Err(Error::InvalidParams(format!(
                "component {} does not contain its representative",
                c.id
            )));
        }
        for &m in &c.members {
            let entry = component_of.get_mut(m as usize).ok_or_else(|| {
                Error::InvalidParams(format!("component {} names unknown word id {m}", c.id))
            })?;
            if *entry != UNSET {
                return Err(Error::InvalidParams(format!(
                    "word {:?} appears in more than one component",
                    table.token(m)
                )));
            }
            *entry = slot;
            mapping[m as usize] = c.representative;
        }
    }
    if let Some(id) = component_of.iter().position(|&c| c == UNSET) {
        return Err(Error::InvalidParams(format!(
            "word {:?} is not in any component",
            table.token(id as WordId)
        )));
    }
    Ok(Vocabulary {
        mapping,
        component_of,
        components,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn table(words: &[(&str, u64)]) -> WordTable {
        WordTable::from_counts(words.iter().map(|(t, f)| (t.to_string(), *f))).unwrap()
    }

    fn buckets(groups: &[&[WordId]]) -> RepetitionBuckets {
        let pairs = groups
            .iter()
            .enumerate()
            .flat_map(|(s, ids)| ids.iter().map(move |&id| (FoldedSignature(s as u64), id)))
            .collect();
        RepetitionBuckets::from_pairs(pairs)
    }

    fn member_tokens(c: &Component, t: &WordTable) -> Vec<String> {
        c.members.iter().map(|&m| t.token(m).to_string()).collect()
    }

    #[test]
    fn clique_accumulation() {
        let mut g = CollisionGraph::new();
        accumulate_repetition(&buckets(&[&[0, 1, 2]]), &mut g, 10);
        assert_eq!(g.edges(), vec![(0, 1, 1), (0, 2, 1), (1, 2, 1)]);
        accumulate_repetition(&buckets(&[&[0, 1, 2]]), &mut g, 10);
        assert_eq!(g.edges(), vec![(0, 1, 2), (0, 2, 2), (1, 2, 2)]);

        let mut g = CollisionGraph::new();
        accumulate_repetition(&buckets(&[&[0, 1], &[2]]), &mut g, 10);
        assert_eq!(g.edges(), vec![(0, 1, 1)]);
    }

    #[test]
    fn oversized_buckets_are_still_processed() {
        let mut g = CollisionGraph::new();
        accumulate_repetition(&buckets(&[&[0, 1, 2, 3]]), &mut g, 2);
        assert_eq!(g.len(), 6);
    }

    #[test]
    fn self_loops_ignored() {
        let mut g = CollisionGraph::new();
        g.add(3, 3, 1);
        assert!(g.is_empty());
        g.add(4, 2, 1);
        assert_eq!(g.weight(2, 4), 1);
        assert_eq!(g.weight(4, 2), 1);
    }

    #[test]
    fn pruning_threshold() {
        let mut g = CollisionGraph::new();
        g.add(0, 1, 3);
        g.add(1, 2, 1);
        assert_eq!(prune(&g, 0.5, 4).edges(), vec![(0, 1, 3)]);
        assert_eq!(prune(&g, 0.0, 4), g);

        let mut g = CollisionGraph::new();
        g.add(0, 1, 10);
        g.add(1, 2, 9);
        assert_eq!(prune(&g, 1.0, 10).edges(), vec![(0, 1, 10)]);
    }

    #[test]
    fn components_and_representatives() {
        let t = table(&[("a", 10), ("b", 2)]);
        let mut g = CollisionGraph::new();
        g.add(0, 1, 1);
        let cs = connected_components(&g, &t);
        assert_eq!(cs.len(), 1);
        assert_eq!(t.token(cs[0].representative), "a");

        let t = table(&[("b", 5), ("a", 5)]);
        let cs = connected_components(&g, &t);
        assert_eq!(t.token(cs[0].representative), "a");

        let t = table(&[("a", 1), ("b", 1), ("c", 1), ("d", 1)]);
        let mut g = CollisionGraph::new();
        g.add(0, 1, 1);
        g.add(1, 2, 1);
        let cs = connected_components(&g, &t);
        assert_eq!(cs.len(), 2);
        assert_eq!(member_tokens(&cs[0], &t), ["a", "b", "c"]);
        assert_eq!(member_tokens(&cs[1], &t), ["d"]);
    }

    #[test]
    fn vocabulary_mapping() {
        let t = table(&[("amazing", 9000), ("amazingg", 4), ("amazinggg", 2), ("solo", 1)]);
        let mut g = CollisionGraph::new();
        g.add(0, 1, 5);
        g.add(1, 2, 5);
        let v = build_vocabulary(connected_components(&g, &t), &t).unwrap();
        for id in 0..3 {
            assert_eq!(t.token(v.representative(id)), "amazing");
        }
        assert_eq!(v.representative(3), 3);
        for id in 0..4 {
            assert_eq!(v.representative(v.representative(id)), v.representative(id));
        }
    }

    #[test]
    fn vocabulary_rejects_bad_partitions() {
        let t = table(&[("a", 1), ("b", 1)]);
        let only_a = vec![Component { id: 0, members: vec![0], representative: 0 }];
        assert!(build_vocabulary(only_a, &t).is_err());
        let twice = vec![
            Component { id: 0, members: vec![0, 1], representative: 0 },
            Component { id: 1, members: vec![1], representative: 1 },
        ];
        assert!(build_vocabulary(twice, &t).is_err());
        let foreign_rep = vec![Component { id: 0, members: vec![0, 1], representative: 5 }];
        assert!(build_vocabulary(foreign_rep, &t).is_err());
    }

    #[test]
    fn word_table_is_canonical() {
        let a = table(&[("b", 1), ("a", 2)]);
        let b = table(&[("a", 2), ("b", 1)]);
        assert_eq!(a, b);
        assert_eq!(a.id("a"), Some(0));
        assert!(WordTable::from_counts(vec![("x".into(), 1), ("x".into(), 2)]).is_err());
    }

    #[test]
    fn single_word_graph() {
        let t = table(&[("hello", 3)]);
        let params = LshParams::default();
        let coeffs = Coefficients::draw(&params);
        let (g, idx) = build_graph(&t, &params, &coeffs, &BuildOptions::default()).unwrap();
        assert!(g.is_empty());
        assert_eq!(idx.repetitions.len(), 20);
        assert!(idx.repetitions.iter().all(|r| r.entries().len() == 1));
    }

    #[test]
    fn unhashable_words_are_not_indexed() {
        let t = table(&[("ab", 3), ("hello", 1)]);
        let params = LshParams::default();
        let coeffs = Coefficients::draw(&params);
        let (_, idx) = build_graph(&t, &params, &coeffs, &BuildOptions::default()).unwrap();
        for rep in &idx.repetitions {
            let ids: Vec<WordId> = rep.entries().iter().flat_map(|(_, ids)| ids.clone()).collect();
            assert_eq!(ids, vec![1]);
        }
    }
}
