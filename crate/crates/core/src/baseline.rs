//! Frequency-argmax spell corrector over deletions, insertions and replacements.
//!
//! Used as the comparison point for normalization quality and runtime. There is
//! no transposition edit and no phonetic scoring.

use std::collections::{HashMap, HashSet};

use crate::error::{Error, Result};

/// Lowercase ASCII letters and the apostrophe.
pub const DEFAULT_ALPHABET: &str = "abcdefghijklmnopqrstuvwxyz'";

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Dictionary {
    freq: HashMap<String, u64>,
}

impl Dictionary {
    pub fn new(entries: impl IntoIterator<Item = (String, u64)>) -> Result<Self> {
        let mut freq = HashMap::new();
        for (word, f) in entries {
            if f == 0 {
                return Err(Error::InvalidParams(format!("dictionary word {word:?} has zero frequency")));
            }
            freq.insert(word, f);
        }
        Ok(Dictionary { freq })
    }

    pub fn frequency(&self, word: &str) -> Option<u64> {
        self.freq.get(word).copied()
    }

    pub fn len(&self) -> usize {
        self.freq.len()
    }

    pub fn is_empty(&self) -> bool {
        self.freq.is_empty()
    }
}

/// Every string one deletion, insertion or replacement away from `word`.
pub fn edits1(word: &str, alphabet: &[char]) -> HashSet<String> {
    let chars: Vec<char> = word.chars().collect();
    let n = chars.len();
    let mut out = HashSet::with_capacity(n + (n + 1 + n) * alphabet.len());
    let build = |prefix: &[char], mid: Option<char>, suffix: &[char]| -> String {
        prefix.iter().copied().chain(mid).chain(suffix.iter().copied()).collect()
    };
    for i in 0..n {
        out.insert(build(&chars[..i], None, &chars[i + 1..]));
        for &c in alphabet {
            if c != chars[i] {
                out.insert(build(&chars[..i], Some(c), &chars[i + 1..]));
            }
        }
    }
    for i in 0..=n {
        for &c in alphabet {
            out.insert(build(&chars[..i], Some(c), &chars[i..]));
        }
    }
    out
}

/// Strings reachable with at most two edits, excluding `word` itself.
pub fn edits2(word: &str, alphabet: &[char]) -> HashSet<String> {
    let first = edits1(word, alphabet);
    let mut out = first.clone();
    for w in &first {
        out.extend(edits1(w, alphabet));
    }
    out.remove(word);
    out
}

fn best<'a>(candidates: impl IntoIterator<Item = &'a String>, dict: &Dictionary) -> Option<&'a String> {
    candidates
        .into_iter()
        .filter_map(|c| dict.frequency(c).map(|f| (c, f)))
        .min_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(b.0)))
        .map(|(c, _)| c)
}

/// Returns `word` if known, else the most frequent known word one edit away,
/// else (with `max_edits = 2`) two edits away, else `word` unchanged.
pub fn correct(word: &str, dict: &Dictionary, max_edits: u8, alphabet: &[char]) -> String {
    if dict.frequency(word).is_some() || word.is_empty() {
        return word.to_owned();
    }
    let one = edits1(word, alphabet);
    if let Some(hit) = best(&one, dict) {
        return hit.clone();
    }
    if max_edits >= 2 {
        let known: Vec<String> = one
            .iter()
            .flat_map(|w| edits1(w, alphabet))
            .filter(|w| dict.frequency(w).is_some())
            .collect();
        if let Some(hit) = best(&known, dict) {
            return hit.clone();
        }
    }
    word.to_owned()
}
