//! Corpus level driver: tokenizing, frequency counting, indexing, normalization
//! and component statistics.
//!
//! Corpora are UTF-8 text with one document per line and are streamed in
//! chunks of lines, so only the word table and the graph have to fit in memory.

use std::collections::{BTreeMap, HashMap};
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::ops::Range;
use std::path::Path;

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::graph::{
    build_graph, build_vocabulary, connected_components, prune, with_workers, BuildOptions, WordTable,
    DEFAULT_WARN_BUCKET_SIZE,
};
use crate::index_store::{load_index, save_index, CorpusCounts, Index, Manifest};
use crate::inference::{infer_word, InferenceOptions};
use crate::params::LshParams;

const CHUNK_LINES: usize = 8192;

/// Splits a line into tokens, reported as byte ranges into the line.
pub trait Tokenizer: Sync {
    /// `Err` carries the offending character.
    fn spans(&self, line: &str) -> std::result::Result<Vec<Range<usize>>, char>;
}

/// Splits on Unicode whitespace and keeps punctuation attached to tokens.
/// Non-whitespace control characters are rejected.
#[derive(Debug, Clone, Copy, Default)]
pub struct WhitespaceTokenizer;

impl Tokenizer for WhitespaceTokenizer {
    fn spans(&self, line: &str) -> std::result::Result<Vec<Range<usize>>, char> {
        let mut spans = Vec::new();
        let mut start = None;
        for (i, c) in line.char_indices() {
            if c.is_whitespace() {
                if let Some(s) = start.take() {
                    spans.push(s..i);
                }
            } else if c.is_control() {
                return Err(c);
            } else if start.is_none() {
                start = Some(i);
            }
        }
        if let Some(s) = start {
            spans.push(s..line.len());
        }
        Ok(spans)
    }
}

fn tokens_of(
    tokenizer: &dyn Tokenizer,
    line: &str,
    line_no: usize,
    lowercase: bool,
) -> Result<Vec<String>> {
    let spans = tokenizer.spans(line).map_err(|c| Error::ControlCharacter {
        line: line_no,
        code: c as u32,
    })?;
    Ok(spans
        .into_iter()
        .map(|r| {
            let t = &line[r];
            if lowercase {
                t.to_lowercase()
            } else {
                t.to_owned()
            }
        })
        .collect())
}

/// Whitespace tokenization of a single line.
pub fn tokenize(line: &str, lowercase: bool) -> Result<Vec<String>> {
    tokens_of(&WhitespaceTokenizer, line, 1, lowercase)
}

/// Reads up to `CHUNK_LINES` lines, terminators included.
fn read_chunk(reader: &mut impl BufRead, file: &str, line_no: &mut usize) -> Result<Vec<String>> {
    let mut lines = Vec::new();
    while lines.len() < CHUNK_LINES {
        let mut buf = String::new();
        match reader.read_line(&mut buf) {
            Ok(0) => break,
            Ok(_) => {
                *line_no += 1;
                lines.push(buf);
            }
            Err(e) if e.kind() == std::io::ErrorKind::InvalidData => {
                return Err(Error::format(file, format!("line {}", *line_no + 1), "invalid UTF-8"));
            }
            Err(e) => return Err(Error::io(file, e)),
        }
    }
    Ok(lines)
}

fn split_terminator(line: &str) -> (&str, &str) {
    let body = line.strip_suffix('\n').unwrap_or(line);
    let body = body.strip_suffix('\r').unwrap_or(body);
    (body, &line[body.len()..])
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct FrequencyCount {
    pub counts: HashMap<String, u64>,
    pub lines: u64,
    pub tokens: u64,
}

impl FrequencyCount {
    pub fn merge(&mut self, other: FrequencyCount) {
        self.lines += other.lines;
        self.tokens += other.tokens;
        for (t, c) in other.counts {
            *self.counts.entry(t).or_insert(0) += c;
        }
    }

    /// Tokens seen at least `min_freq` times. Rarer tokens stay out of the index
    /// and pass through normalization untouched.
    pub fn word_table(&self, min_freq: u64) -> Result<WordTable> {
        WordTable::from_counts(
            self.counts
                .iter()
                .filter(|(_, &c)| c >= min_freq)
                .map(|(t, &c)| (t.clone(), c)),
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CountOptions {
    pub lowercase: bool,
    pub workers: usize,
}

impl Default for CountOptions {
    fn default() -> Self {
        CountOptions { lowercase: false, workers: 1 }
    }
}

pub fn count_tokens<S: AsRef<str>>(tokens: impl IntoIterator<Item = S>) -> FrequencyCount {
    let mut out = FrequencyCount::default();
    for t in tokens {
        out.tokens += 1;
        *out.counts.entry(t.as_ref().to_owned()).or_insert(0) += 1;
    }
    out
}

/// Streams `reader` and counts every token; shards of lines are counted in
/// parallel and merged.
pub fn count_frequencies_with(
    reader: impl BufRead + Send,
    tokenizer: &dyn Tokenizer,
    file: &str,
    opts: &CountOptions,
) -> Result<FrequencyCount> {
    let mut reader = reader;
    with_workers(opts.workers, || {
        let mut total = FrequencyCount::default();
        let mut line_no = 0;
        loop {
            let first = line_no + 1;
            let chunk = read_chunk(&mut reader, file, &mut line_no)?;
            if chunk.is_empty() {
                return Ok(total);
            }
            let tokenized: Vec<Result<Vec<String>>> = chunk
                .par_iter()
                .enumerate()
                .map(|(i, line)| tokens_of(tokenizer, split_terminator(line).0, first + i, opts.lowercase))
                .collect();
            let mut lines = Vec::with_capacity(tokenized.len());
            for t in tokenized {
                lines.push(t?);
            }
            let part = lines
                .par_iter()
                .fold(FrequencyCount::default, |mut acc, tokens| {
                    acc.lines += 1;
                    acc.merge(count_tokens(tokens));
                    acc
                })
                .reduce(FrequencyCount::default, |mut a, b| {
                    a.merge(b);
                    a
                });
            total.merge(part);
        }
    })?
}

pub fn count_frequencies(reader: impl BufRead + Send, opts: &CountOptions) -> Result<FrequencyCount> {
    count_frequencies_with(reader, &WhitespaceTokenizer, "<input>", opts)
}

/// Hashes, prunes and groups `table` into a complete in-memory index.
pub fn build_index(table: WordTable, mut manifest: Manifest, opts: &BuildOptions) -> Result<Index> {
    let params = &manifest.params;
    let (graph, buckets) = build_graph(&table, params, &manifest.coefficients, opts)?;
    let pruned = prune(&graph, params.alpha, params.num_repetitions);
    let vocabulary = build_vocabulary(connected_components(&pruned, &table), &table)?;
    manifest.word_count = table.len();
    Ok(Index {
        manifest,
        words: table,
        vocabulary,
        buckets,
    })
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct CorpusStats {
    pub lines: u64,
    pub tokens: u64,
    pub distinct_tokens: u64,
    pub indexed_words: u64,
    pub components: u64,
    /// Component size to number of components of that size.
    pub component_histogram: BTreeMap<usize, u64>,
}

pub fn corpus_stats(index: &Index) -> CorpusStats {
    let mut component_histogram = BTreeMap::new();
    for c in index.vocabulary.components() {
        *component_histogram.entry(c.len()).or_insert(0) += 1;
    }
    let counts = index.manifest.corpus;
    CorpusStats {
        lines: counts.lines,
        tokens: counts.tokens,
        distinct_tokens: counts.distinct_tokens,
        indexed_words: index.words.len() as u64,
        components: index.vocabulary.components().len() as u64,
        component_histogram,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct IndexOptions {
    pub lowercase: bool,
    pub min_freq: u64,
    pub workers: usize,
    pub warn_bucket_size: usize,
    /// Recorded verbatim in the manifest.
    pub created_at: u64,
}

impl Default for IndexOptions {
    fn default() -> Self {
        IndexOptions {
            lowercase: false,
            min_freq: 1,
            workers: 1,
            warn_bucket_size: DEFAULT_WARN_BUCKET_SIZE,
            created_at: 0,
        }
    }
}

fn open(path: &Path) -> Result<BufReader<File>> {
    Ok(BufReader::new(File::open(path).map_err(|e| Error::io(path, e))?))
}

/// Indexes a corpus stream in memory.
pub fn index_reader_with(
    reader: impl BufRead + Send,
    tokenizer: &dyn Tokenizer,
    file: &str,
    params: LshParams,
    opts: &IndexOptions,
) -> Result<Index> {
    let mut manifest = Manifest::new(params)?;
    let counts = count_frequencies_with(
        reader,
        tokenizer,
        file,
        &CountOptions { lowercase: opts.lowercase, workers: opts.workers },
    )?;
    manifest.lowercase = opts.lowercase;
    manifest.min_freq = opts.min_freq;
    manifest.created_at = opts.created_at;
    manifest.corpus = CorpusCounts {
        lines: counts.lines,
        tokens: counts.tokens,
        distinct_tokens: counts.counts.len() as u64,
    };
    let table = counts.word_table(opts.min_freq)?;
    build_index(
        table,
        manifest,
        &BuildOptions { workers: opts.workers, warn_bucket_size: opts.warn_bucket_size },
    )
}

/// Tokenize, count, hash, prune, group and save to `out_dir`.
pub fn index_corpus(input: &Path, params: LshParams, out_dir: &Path, opts: &IndexOptions) -> Result<CorpusStats> {
    let index = index_reader_with(
        open(input)?,
        &WhitespaceTokenizer,
        &input.display().to_string(),
        params,
        opts,
    )?;
    save_index(&index, out_dir)?;
    Ok(corpus_stats(&index))
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct NormalizeOptions {
    pub infer_unseen: bool,
    pub inference: InferenceOptions,
    pub workers: usize,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct NormalizeSummary {
    pub lines: u64,
    pub tokens: u64,
    /// Indexed tokens rewritten to a different representative.
    pub replaced: u64,
    /// Indexed tokens that already were their own representative.
    pub kept: u64,
    /// Unseen tokens rewritten through inference.
    pub inferred: u64,
    /// Unseen tokens left as they were.
    pub passed: u64,
}

impl NormalizeSummary {
    fn merge(&mut self, o: &NormalizeSummary) {
        self.lines += o.lines;
        self.tokens += o.tokens;
        self.replaced += o.replaced;
        self.kept += o.kept;
        self.inferred += o.inferred;
        self.passed += o.passed;
    }
}

/// Rewrites one line, leaving whitespace and line terminator untouched.
pub fn normalize_line(
    line: &str,
    line_no: usize,
    index: &Index,
    tokenizer: &dyn Tokenizer,
    opts: &NormalizeOptions,
) -> Result<(String, NormalizeSummary)> {
    let (body, terminator) = split_terminator(line);
    let spans = tokenizer.spans(body).map_err(|c| Error::ControlCharacter {
        line: line_no,
        code: c as u32,
    })?;
    let mut summary = NormalizeSummary { lines: 1, ..Default::default() };
    let mut out = String::with_capacity(line.len());
    let mut last = 0;
    for span in spans {
        out.push_str(&body[last..span.start]);
        let original = &body[span.clone()];
        last = span.end;
        summary.tokens += 1;
        let key = if index.manifest.lowercase {
            std::borrow::Cow::Owned(original.to_lowercase())
        } else {
            std::borrow::Cow::Borrowed(original)
        };
        let words = &index.words;
        if let Some(id) = words.id(&key) {
            let rep = words.token(index.vocabulary.representative(id));
            if rep == original {
                summary.kept += 1;
            } else {
                summary.replaced += 1;
            }
            out.push_str(rep);
        } else if let Some(m) = opts
            .infer_unseen
            .then(|| infer_word(&key, index, &opts.inference))
            .flatten()
        {
            summary.inferred += 1;
            out.push_str(words.token(m.representative));
        } else {
            summary.passed += 1;
            out.push_str(original);
        }
    }
    out.push_str(&body[last..]);
    out.push_str(terminator);
    Ok((out, summary))
}

/// Streams `reader` through [`normalize_line`] into `writer`, preserving line order.
pub fn normalize_stream(
    reader: impl BufRead + Send,
    writer: &mut (impl Write + Send),
    index: &Index,
    tokenizer: &dyn Tokenizer,
    file: &str,
    opts: &NormalizeOptions,
) -> Result<NormalizeSummary> {
    let mut reader = reader;
    with_workers(opts.workers, || {
        let mut total = NormalizeSummary::default();
        let mut line_no = 0;
        loop {
            let first = line_no + 1;
            let chunk = read_chunk(&mut reader, file, &mut line_no)?;
            if chunk.is_empty() {
                return Ok(total);
            }
            let done: Vec<Result<(String, NormalizeSummary)>> = chunk
                .par_iter()
                .enumerate()
                .map(|(i, line)| normalize_line(line, first + i, index, tokenizer, opts))
                .collect();
            for r in done {
                let (line, s) = r?;
                writer
                    .write_all(line.as_bytes())
                    .map_err(|e| Error::io("<output>", e))?;
                total.merge(&s);
            }
        }
    })?
}

pub fn normalize_corpus(
    input: &Path,
    index_dir: &Path,
    output: &Path,
    opts: &NormalizeOptions,
) -> Result<NormalizeSummary> {
    let index = load_index(index_dir)?;
    let reader = open(input)?;
    let file = File::create(output).map_err(|e| Error::io(output, e))?;
    let mut writer = BufWriter::new(file);
    let summary = normalize_stream(
        reader,
        &mut writer,
        &index,
        &WhitespaceTokenizer,
        &input.display().to_string(),
        opts,
    )
    .map_err(|e| match e {
        Error::Io { path, source } if path.as_os_str() == "<output>" => Error::io(output, source),
        e => e,
    })?;
    writer.flush().map_err(|e| Error::io(output, e))?;
    Ok(summary)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ComponentSummary {
    pub id: usize,
    pub size: usize,
    pub representative: String,
    /// Members by descending frequency, then token.
    pub members: Vec<(String, u64)>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ComponentReport {
    pub stats: CorpusStats,
    pub largest: Vec<ComponentSummary>,
}

pub fn component_report(index: &Index, top_k: usize) -> ComponentReport {
    let mut order: Vec<_> = index.vocabulary.components().iter().collect();
    order.sort_by(|a, b| b.len().cmp(&a.len()).then(a.id.cmp(&b.id)));
    let words = &index.words;
    let largest = order
        .into_iter()
        .take(top_k)
        .map(|c| {
            let mut members: Vec<(String, u64)> = c
                .members
                .iter()
                .map(|&m| (words.token(m).to_owned(), words.frequency(m)))
                .collect();
            members.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
            ComponentSummary {
                id: c.id,
                size: c.len(),
                representative: words.token(c.representative).to_owned(),
                members,
            }
        })
        .collect();
    ComponentReport {
        stats: corpus_stats(index),
        largest,
    }
}

pub fn component_stats(index_dir: &Path, top_k: usize) -> Result<ComponentReport> {
    Ok(component_report(&load_index(index_dir)?, top_k))
}
