//! On-disk index: `manifest.json`, `vocab.tsv` and `buckets.bin`.
//!
//! * `manifest.json` is pretty-printed JSON with keys sorted at every level.
//! * `vocab.tsv` has one `token<TAB>representative<TAB>frequency<TAB>component_id`
//!   line per word, sorted by token.
//! * `buckets.bin` holds, for each repetition in order, a `u32` bucket count
//!   followed by `(u64 signature, u32 id count, u32 ids...)` records. All
//!   integers are little-endian; buckets ascend by signature, ids ascend.

use std::collections::BTreeMap;
use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{
    build_vocabulary, BucketIndex, Component, RepetitionBuckets, Vocabulary, WordId, WordTable,
};
use crate::hashing::FoldedSignature;
use crate::params::{Coefficients, HashCoeffs, LshParams};

pub const FORMAT_VERSION: u64 = 1;
pub const MANIFEST_FILE: &str = "manifest.json";
pub const VOCAB_FILE: &str = "vocab.tsv";
pub const BUCKETS_FILE: &str = "buckets.bin";

/// Corpus-level counts recorded at indexing time.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CorpusCounts {
    pub lines: u64,
    pub tokens: u64,
    pub distinct_tokens: u64,
}

/// Everything needed to re-hash words exactly as they were hashed at indexing time.
#[derive(Debug, Clone, PartialEq)]
pub struct Manifest {
    pub params: LshParams,
    pub coefficients: Coefficients,
    pub word_count: usize,
    /// Seconds since the Unix epoch. Supplied by the caller so that indexing stays reproducible.
    pub created_at: u64,
    pub lowercase: bool,
    pub min_freq: u64,
    pub corpus: CorpusCounts,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ManifestFile {
    format_version: u64,
    params: LshParams,
    coefficients: Vec<HashCoeffs>,
    word_count: usize,
    created_at: u64,
    lowercase: bool,
    min_freq: u64,
    corpus: CorpusCounts,
}

impl Manifest {
    pub fn new(params: LshParams) -> Result<Self> {
        params.validate()?;
        let coefficients = Coefficients::draw(&params);
        Ok(Manifest {
            params,
            coefficients,
            word_count: 0,
            created_at: 0,
            lowercase: false,
            min_freq: 1,
            corpus: CorpusCounts::default(),
        })
    }

    /// Canonical serialization: sorted keys, two-space indent, trailing newline.
    pub fn to_json(&self) -> String {
        let file = ManifestFile {
            format_version: FORMAT_VERSION,
            params: self.params.clone(),
            coefficients: self.coefficients.to_list(),
            word_count: self.word_count,
            created_at: self.created_at,
            lowercase: self.lowercase,
            min_freq: self.min_freq,
            corpus: self.corpus,
        };
        // serde_json::Value keeps object keys in a BTreeMap, hence sorted output
        let value = serde_json::to_value(file).expect("manifest is always representable");
        let mut out = serde_json::to_string_pretty(&value).expect("value serializes");
        out.push('\n');
        out
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let json_err = |e: serde_json::Error| {
            Error::format(MANIFEST_FILE, format!("line {} column {}", e.line(), e.column()), e.to_string())
        };
        let value: serde_json::Value = serde_json::from_str(text).map_err(json_err)?;
        let found = value
            .get("format_version")
            .and_then(|v| v.as_u64())
            .ok_or_else(|| Error::format(MANIFEST_FILE, "format_version", "missing or not an integer"))?;
        if found != FORMAT_VERSION {
            return Err(Error::VersionMismatch {
                file: MANIFEST_FILE.into(),
                found,
                expected: FORMAT_VERSION,
            });
        }
        let file: ManifestFile = serde_json::from_value(value)
            .map_err(|e| Error::format(MANIFEST_FILE, "document", e.to_string()))?;
        file.params.validate()?;
        let coefficients = Coefficients::from_list(&file.coefficients, file.params.num_repetitions)?;
        Ok(Manifest {
            params: file.params,
            coefficients,
            word_count: file.word_count,
            created_at: file.created_at,
            lowercase: file.lowercase,
            min_freq: file.min_freq,
            corpus: file.corpus,
        })
    }
}

/// A complete index, either freshly built or loaded from disk.
#[derive(Debug, Clone, PartialEq)]
pub struct Index {
    pub manifest: Manifest,
    pub words: WordTable,
    pub vocabulary: Vocabulary,
    pub buckets: BucketIndex,
}

fn check_token(token: &str) -> Result<()> {
    if token.is_empty() || token.contains(['\t', '\n', '\r']) {
        return Err(Error::InvalidParams(format!(
            "token {token:?} cannot be stored in {VOCAB_FILE}"
        )));
    }
    Ok(())
}

pub fn vocab_tsv(index: &Index) -> Result<Vec<u8>> {
    let mut out = Vec::new();
    for (id, token, freq) in index.words.iter() {
        check_token(token)?;
        let rep = index.words.token(index.vocabulary.representative(id));
        let component = index.vocabulary.component_of(id).id;
        writeln!(out, "{token}\t{rep}\t{freq}\t{component}").expect("write to Vec");
    }
    Ok(out)
}

pub fn buckets_bin(buckets: &BucketIndex) -> Vec<u8> {
    let mut out = Vec::new();
    for rep in &buckets.repetitions {
        out.extend_from_slice(&(rep.len() as u32).to_le_bytes());
        for (sig, ids) in rep.entries() {
            out.extend_from_slice(&sig.0.to_le_bytes());
            out.extend_from_slice(&(ids.len() as u32).to_le_bytes());
            for id in ids {
                out.extend_from_slice(&id.to_le_bytes());
            }
        }
    }
    out
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    w.write_all(bytes).map_err(|e| Error::io(path, e))?;
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn save_index(index: &Index, dir: &Path) -> Result<()> {
    if index.manifest.word_count != index.words.len() {
        return Err(Error::InvalidParams(format!(
            "manifest word count {} does not match table size {}",
            index.manifest.word_count,
            index.words.len()
        )));
    }
    if index.buckets.repetitions.len() != index.manifest.params.num_repetitions {
        return Err(Error::InvalidParams(format!(
            "bucket index has {} repetitions, manifest expects {}",
            index.buckets.repetitions.len(),
            index.manifest.params.num_repetitions
        )));
    }
    let vocab = vocab_tsv(index)?;
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    write_file(&dir.join(MANIFEST_FILE), index.manifest.to_json().as_bytes())?;
    write_file(&dir.join(VOCAB_FILE), &vocab)?;
    write_file(&dir.join(BUCKETS_FILE), &buckets_bin(&index.buckets))
}

fn read_file(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|e| Error::io(path, e))
}

struct VocabRow<'a> {
    token: &'a str,
    representative: &'a str,
    frequency: u64,
    component: usize,
}

pub fn parse_vocab(text: &str) -> Result<(WordTable, Vocabulary)> {
    let bad = |line: usize, msg: String| Error::format(VOCAB_FILE, format!("line {line}"), msg);
    let mut rows = Vec::new();
    for (i, line) in text.split_terminator('\n').enumerate() {
        let n = i + 1;
        let fields: Vec<&str> = line.split('\t').collect();
        let [token, representative, frequency, component] = fields[..] else {
            return Err(bad(n, format!("expected 4 tab-separated fields, found {}", fields.len())));
        };
        if token.is_empty() || representative.is_empty() {
            return Err(bad(n, "empty token".into()));
        }
        let frequency = frequency
            .parse()
            .map_err(|_| bad(n, format!("bad frequency {frequency:?}")))?;
        let component = component
            .parse()
            .map_err(|_| bad(n, format!("bad component id {component:?}")))?;
        if let Some(prev) = rows.last().map(|r: &VocabRow| r.token) {
            if prev >= token {
                return Err(bad(n, format!("token {token:?} out of order")));
            }
        }
        rows.push(VocabRow { token, representative, frequency, component });
    }
    if !text.is_empty() && !text.ends_with('\n') {
        return Err(bad(rows.len(), "missing trailing newline".into()));
    }

    let table = WordTable::from_counts(rows.iter().map(|r| (r.token.to_owned(), r.frequency)))?;
    let mut groups: BTreeMap<usize, (Vec<WordId>, &str, usize)> = BTreeMap::new();
    for (i, r) in rows.iter().enumerate() {
        let entry = groups
            .entry(r.component)
            .or_insert_with(|| (Vec::new(), r.representative, i + 1));
        if entry.1 != r.representative {
            return Err(bad(
                i + 1,
                format!("component {} has two representatives", r.component),
            ));
        }
        entry.0.push(i as WordId);
    }
    let mut components = Vec::with_capacity(groups.len());
    for (expected, (id, (members, rep, line))) in groups.into_iter().enumerate() {
        if id != expected {
            return Err(bad(line, format!("component ids not dense: found {id}, expected {expected}")));
        }
        let representative = table
            .id(rep)
            .filter(|r| members.contains(r))
            .ok_or_else(|| bad(line, format!("representative {rep:?} is not a member of component {id}")))?;
        components.push(Component { id, members, representative });
    }
    let vocabulary = build_vocabulary(components, &table)?;
    Ok((table, vocabulary))
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl Cursor<'_> {
    fn take<const N: usize>(&mut self, what: &str) -> Result<[u8; N]> {
        let end = self.pos + N;
        let chunk = self.bytes.get(self.pos..end).ok_or_else(|| {
            Error::format(BUCKETS_FILE, format!("offset {}", self.pos), format!("truncated while reading {what}"))
        })?;
        self.pos = end;
        Ok(chunk.try_into().expect("slice has length N"))
    }

    fn u32(&mut self, what: &str) -> Result<u32> {
        self.take::<4>(what).map(u32::from_le_bytes)
    }

    fn u64(&mut self, what: &str) -> Result<u64> {
        self.take::<8>(what).map(u64::from_le_bytes)
    }
}

pub fn parse_buckets(bytes: &[u8], repetitions: usize, word_count: usize) -> Result<BucketIndex> {
    let mut cur = Cursor { bytes, pos: 0 };
    let mut out = Vec::with_capacity(repetitions);
    for t in 0..repetitions {
        let start = cur.pos;
        let count = cur.u32("bucket count")?;
        let mut entries = Vec::with_capacity(count.min(1 << 20) as usize);
        for _ in 0..count {
            let sig = FoldedSignature(cur.u64("signature")?);
            let len = cur.u32("id count")?;
            let mut ids = Vec::with_capacity(len.min(1 << 20) as usize);
            for _ in 0..len {
                let at = cur.pos;
                let id = cur.u32("word id")?;
                if id as usize >= word_count {
                    return Err(Error::format(
                        BUCKETS_FILE,
                        format!("offset {at}"),
                        format!("word id {id} out of range ({word_count} words)"),
                    ));
                }
                ids.push(id);
            }
            entries.push((sig, ids));
        }
        let rep = RepetitionBuckets::from_entries(entries).map_err(|e| {
            Error::format(BUCKETS_FILE, format!("offset {start}"), format!("repetition {t}: {e}"))
        })?;
        out.push(rep);
    }
    if cur.pos != bytes.len() {
        return Err(Error::format(
            BUCKETS_FILE,
            format!("offset {}", cur.pos),
            format!("{} trailing bytes", bytes.len() - cur.pos),
        ));
    }
    Ok(BucketIndex { repetitions: out })
}

pub fn load_index(dir: &Path) -> Result<Index> {
    let manifest_path = dir.join(MANIFEST_FILE);
    let manifest_bytes = read_file(&manifest_path)?;
    let manifest_text = String::from_utf8(manifest_bytes)
        .map_err(|e| Error::format(MANIFEST_FILE, format!("byte {}", e.utf8_error().valid_up_to()), "invalid UTF-8"))?;
    let manifest = Manifest::from_json(&manifest_text)?;

    let vocab_bytes = read_file(&dir.join(VOCAB_FILE))?;
    let vocab_text = String::from_utf8(vocab_bytes)
        .map_err(|e| Error::format(VOCAB_FILE, format!("byte {}", e.utf8_error().valid_up_to()), "invalid UTF-8"))?;
    let (words, vocabulary) = parse_vocab(&vocab_text)?;
    if words.len() != manifest.word_count {
        return Err(Error::format(
            VOCAB_FILE,
            "end of file",
            format!("{} words, manifest records {}", words.len(), manifest.word_count),
        ));
    }

    let buckets = parse_buckets(
        &read_file(&dir.join(BUCKETS_FILE))?,
        manifest.params.num_repetitions,
        words.len(),
    )?;
    Ok(Index { manifest, words, vocabulary, buckets })
}
