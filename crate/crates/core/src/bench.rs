//! Synthetic corpora and the indexing/inference timing harness.

use std::collections::HashSet;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::Result;
use crate::graph::{BuildOptions, WordTable};
use crate::index_store::Manifest;
use crate::inference::{infer_batch, InferenceOptions};
use crate::params::LshParams;
use crate::pipeline::build_index;

const LETTERS: &[u8] = b"abcdefghijklmnopqrstuvwxyz";

fn random_word(rng: &mut ChaCha8Rng) -> String {
    let len = rng.random_range(5..=12);
    (0..len)
        .map(|_| LETTERS[rng.random_range(0..LETTERS.len())] as char)
        .collect()
}

/// A single random edit of `word`: doubled letter, dropped letter or substituted letter.
pub fn misspell(word: &str, rng: &mut impl Rng) -> String {
    let mut chars: Vec<char> = word.chars().collect();
    let i = rng.random_range(0..chars.len());
    match rng.random_range(0..3) {
        0 => chars.insert(i, chars[i]),
        1 if chars.len() > 1 => {
            chars.remove(i);
        }
        _ => chars[i] = LETTERS[rng.random_range(0..LETTERS.len())] as char,
    }
    chars.into_iter().collect()
}

/// `n` distinct lowercase words; roughly a third are one-edit variants of earlier words.
pub fn synthetic_words(n: usize, seed: u64) -> Vec<String> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut seen = HashSet::with_capacity(n);
    let mut out: Vec<String> = Vec::with_capacity(n);
    while out.len() < n {
        let w = if !out.is_empty() && rng.random_bool(0.3) {
            let base = &out[rng.random_range(0..out.len())];
            misspell(base, &mut rng)
        } else {
            random_word(&mut rng)
        };
        if seen.insert(w.clone()) {
            out.push(w);
        }
    }
    out
}

/// Word table over `synthetic_words` with heavy-tailed frequencies.
pub fn synthetic_table(n: usize, seed: u64) -> WordTable {
    let words = synthetic_words(n, seed);
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
    WordTable::from_counts(words.into_iter().map(|w| {
        let u: f64 = rng.random_range(f64::EPSILON..1.0);
        (w, (1.0 / u).floor() as u64)
    }))
    .expect("synthetic words are distinct")
}

/// `lines` lines of `words_per_line` tokens drawn with a power-law skew from a
/// vocabulary of `vocab` synthetic words.
pub fn synthetic_corpus(lines: usize, words_per_line: usize, vocab: usize, seed: u64) -> String {
    let words = synthetic_words(vocab, seed);
    let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(1));
    let mut out = String::with_capacity(lines * words_per_line * 9);
    for _ in 0..lines {
        for k in 0..words_per_line {
            if k > 0 {
                out.push(' ');
            }
            let r: f64 = rng.random();
            out.push_str(&words[((vocab as f64) * r.powf(2.5)) as usize % vocab]);
        }
        out.push('\n');
    }
    out
}

/// Fastest of `rounds` in-memory indexing runs, in seconds.
pub fn time_indexing(table: &WordTable, params: &LshParams, workers: usize, rounds: usize) -> Result<f64> {
    let manifest = Manifest::new(params.clone())?;
    let opts = BuildOptions { workers, ..Default::default() };
    let mut best = f64::INFINITY;
    for _ in 0..rounds.max(1) {
        let (table, manifest) = (table.clone(), manifest.clone());
        let start = Instant::now();
        let index = build_index(table, manifest, &opts)?;
        best = best.min(start.elapsed().as_secs_f64());
        drop(index);
    }
    Ok(best)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BenchConfig {
    /// Distinct word counts to sweep.
    pub sizes: Vec<usize>,
    /// Repetition counts to sweep.
    pub repetitions: Vec<usize>,
    pub workers: Vec<usize>,
    pub rounds: usize,
    pub inference_queries: usize,
    pub seed: u64,
    pub params: LshParams,
}

impl Default for BenchConfig {
    fn default() -> Self {
        BenchConfig {
            sizes: vec![100_000, 200_000],
            repetitions: vec![10, 20],
            workers: vec![1, 4],
            rounds: 3,
            inference_queries: 10_000,
            seed: 7,
            params: LshParams::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BenchCell {
    pub words: usize,
    pub repetitions: usize,
    pub workers: usize,
    pub index_seconds: f64,
    pub infer_seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScalingCheck {
    pub name: String,
    pub ratio: f64,
    pub low: f64,
    pub high: Option<f64>,
    /// `None` when the machine cannot run the check meaningfully.
    pub passed: Option<bool>,
    pub note: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BenchReport {
    pub config: BenchConfig,
    pub available_cores: usize,
    pub cells: Vec<BenchCell>,
    pub checks: Vec<ScalingCheck>,
}

/// Accepted time ratio when the work doubles.
pub const DOUBLING_RATIO: (f64, f64) = (1.6, 2.6);
/// Minimum speedup going from 1 to 4 workers.
pub const FOUR_WORKER_SPEEDUP: f64 = 2.0;

fn ratio_check(name: String, ratio: f64, low: f64, high: Option<f64>) -> ScalingCheck {
    let passed = ratio >= low && high.is_none_or(|h| ratio <= h);
    ScalingCheck { name, ratio, low, high, passed: Some(passed), note: None }
}

pub fn run_bench(cfg: &BenchConfig) -> Result<BenchReport> {
    let mut cells = Vec::new();
    for &n in &cfg.sizes {
        let table = synthetic_table(n, cfg.seed);
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ n as u64);
        let queries: Vec<String> = (0..cfg.inference_queries)
            .map(|_| {
                let id = rng.random_range(0..table.len()) as u32;
                misspell(table.token(id), &mut rng)
            })
            .collect();
        for &t in &cfg.repetitions {
            let params = LshParams { num_repetitions: t, ..cfg.params.clone() };
            for &workers in &cfg.workers {
                let index_seconds = time_indexing(&table, &params, workers, cfg.rounds)?;
                let index = build_index(
                    table.clone(),
                    Manifest::new(params.clone())?,
                    &BuildOptions { workers, ..Default::default() },
                )?;
                let start = Instant::now();
                infer_batch(&queries, &index, &InferenceOptions::default(), workers)?;
                let infer_seconds = start.elapsed().as_secs_f64();
                cells.push(BenchCell { words: n, repetitions: t, workers, index_seconds, infer_seconds });
            }
        }
    }

    let find = |n: usize, t: usize, w: usize| {
        cells
            .iter()
            .find(|c| c.words == n && c.repetitions == t && c.workers == w)
            .map(|c| c.index_seconds)
    };
    let cores = std::thread::available_parallelism().map_or(1, |n| n.get());
    let mut checks = Vec::new();
    let (low, high) = DOUBLING_RATIO;
    let w0 = cfg.workers.first().copied().unwrap_or(1);
    for &n in &cfg.sizes {
        for &t in &cfg.repetitions {
            if let (Some(a), Some(b)) = (find(n, t, w0), find(2 * n, t, w0)) {
                checks.push(ratio_check(format!("N {n}->{} at T={t}", 2 * n), b / a, low, Some(high)));
            }
            if let (Some(a), Some(b)) = (find(n, t, w0), find(n, 2 * t, w0)) {
                checks.push(ratio_check(format!("T {t}->{} at N={n}", 2 * t), b / a, low, Some(high)));
            }
            if let (Some(a), Some(b)) = (find(n, t, 1), find(n, t, 4)) {
                let mut check = ratio_check(
                    format!("workers 1->4 at N={n}, T={t}"),
                    a / b,
                    FOUR_WORKER_SPEEDUP,
                    None,
                );
                if cores < 4 {
                    check.passed = None;
                    check.note = Some(format!("skipped: only {cores} core(s) available"));
                }
                checks.push(check);
            }
        }
    }
    Ok(BenchReport { config: cfg.clone(), available_cores: cores, cells, checks })
}
