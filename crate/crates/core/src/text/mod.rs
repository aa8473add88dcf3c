//! Tokenization, vocabularies and corpus handling.

mod corpus;
mod encode;
mod synthetic;

use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use corpus::{load_hearthstone, read_corpus, write_corpus, CardFields, Corpus, Record, HEARTHSTONE_SPLITS};
pub use encode::{build_vocabs, encode_sample, EncodedSample, EncodedText, Vocabs, VocabSettings};
pub use synthetic::{generate_synthetic_corpus, SyntheticProgram};

/// Default per-token character cap.
pub const S_MAX: usize = 16;

pub const PAD: usize = 0;
pub const UNK: usize = 1;
pub const COPY: usize = 2;
const RESERVED: [&str; 3] = ["<pad>", "<unk>", "<copy>"];

#[derive(Debug, Error)]
pub enum TextError {
    #[error("cannot build a vocabulary from an empty corpus")]
    EmptyCorpus,
    #[error("min_freq must be at least 1")]
    BadMinFreq,
    #[error("split `{0}` is missing")]
    MissingSplit(String),
    #[error("split `{split}`: {descriptions} descriptions but {codes} programs")]
    CountMismatch { split: String, descriptions: usize, codes: usize },
    #[error("split `{split}` has {found} records, expected {expected}")]
    UnexpectedSize { split: String, found: usize, expected: usize },
    #[error("reference program of `{id}` does not parse: {error}")]
    UnparseableReference { id: String, error: String },
    #[error("synthetic corpus size must be at least 1")]
    EmptyRequest,
    #[error("corpus line {line}: {message}")]
    BadRecord { line: usize, message: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Tokens of a text plus their (capped) character lists.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct TokenizedText {
    /// Lowercased tokens.
    pub tokens: Vec<String>,
    /// The same tokens with their original casing.
    pub surface: Vec<String>,
    pub chars: Vec<Vec<char>>,
    pub s_max: usize,
}

impl TokenizedText {
    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }
}

/// Splits on whitespace and isolates every character that is not
/// alphanumeric or `_`. Casing is kept.
pub fn split_tokens(text: &str) -> Vec<String> {
    let mut out = Vec::new();
    let mut cur = String::new();
    for c in text.chars() {
        if c.is_alphanumeric() || c == '_' {
            cur.push(c);
            continue;
        }
        if !cur.is_empty() {
            out.push(std::mem::take(&mut cur));
        }
        if !c.is_whitespace() {
            out.push(c.to_string());
        }
    }
    if !cur.is_empty() {
        out.push(cur);
    }
    out
}

/// Lowercased tokens with per-token characters capped at [`S_MAX`].
pub fn tokenize(text: &str) -> TokenizedText {
    tokenize_capped(text, S_MAX)
}

pub fn tokenize_capped(text: &str, s_max: usize) -> TokenizedText {
    let surface = split_tokens(text);
    let tokens: Vec<String> = surface.iter().map(|t| t.to_lowercase()).collect();
    let chars = tokens.iter().map(|t| split_chars(t, s_max)).collect();
    TokenizedText { tokens, surface, chars, s_max }
}

/// Characters of a token, truncated to `s_max`.
pub fn split_chars(token: &str, s_max: usize) -> Vec<char> {
    token.chars().take(s_max).collect()
}

/// Token to id map with reserved PAD, UNK and COPY entries.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Vocab {
    tokens: Vec<String>,
    #[serde(skip)]
    index: HashMap<String, usize>,
}

impl Vocab {
    /// Builds a vocabulary from token streams. Entries are ordered by
    /// descending frequency, then lexicographically.
    pub fn build<'a, I, S>(streams: I, min_freq: usize) -> Result<Vocab, TextError>
    where
        I: IntoIterator<Item = S>,
        S: IntoIterator<Item = &'a str>,
    {
        if min_freq == 0 {
            return Err(TextError::BadMinFreq);
        }
        let mut counts: BTreeMap<&str, usize> = BTreeMap::new();
        for stream in streams {
            for t in stream {
                *counts.entry(t).or_default() += 1;
            }
        }
        if counts.is_empty() {
            return Err(TextError::EmptyCorpus);
        }
        let mut kept: Vec<(&str, usize)> = counts
            .into_iter()
            .filter(|(t, c)| *c >= min_freq && !RESERVED.contains(t))
            .collect();
        kept.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(b.0)));
        let tokens = RESERVED.iter().map(|s| s.to_string()).chain(kept.into_iter().map(|(t, _)| t.to_string()));
        Ok(Vocab::from_tokens(tokens.collect()))
    }

    fn from_tokens(tokens: Vec<String>) -> Vocab {
        let index = tokens.iter().enumerate().map(|(i, t)| (t.clone(), i)).collect();
        Vocab { tokens, index }
    }

    /// Restores the lookup index after deserialization.
    pub fn reindex(&mut self) {
        self.index = self.tokens.iter().enumerate().map(|(i, t)| (t.clone(), i)).collect();
    }

    pub fn id(&self, token: &str) -> usize {
        self.index.get(token).copied().unwrap_or(UNK)
    }

    pub fn get(&self, token: &str) -> Option<usize> {
        self.index.get(token).copied()
    }

    pub fn token(&self, id: usize) -> &str {
        self.tokens.get(id).map(String::as_str).unwrap_or(RESERVED[UNK])
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }
}

/// Builds a vocabulary where one character is one token.
pub fn char_vocab<'a>(texts: impl IntoIterator<Item = &'a TokenizedText>) -> Result<Vocab, TextError> {
    let streams: Vec<Vec<String>> =
        texts.into_iter().map(|t| t.chars.iter().flatten().map(|c| c.to_string()).collect()).collect();
    Vocab::build(streams.iter().map(|s| s.iter().map(String::as_str)), 1)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn assertion_message_splits_punctuation() {
        let t = tokenize("assertionerror: 3 != 1");
        assert_eq!(t.tokens, ["assertionerror", ":", "3", "!", "=", "1"]);
        assert_eq!(t.chars[0].len(), 14);
        assert_eq!(t.chars[0][..3], ['a', 's', 's']);
    }

    #[test]
    fn empty_text_has_no_tokens() {
        assert_eq!(tokenize("").len(), 0);
        assert_eq!(tokenize("  \n\t ").len(), 0);
    }

    #[test]
    fn chars_are_capped() {
        assert_eq!(split_chars("x", S_MAX), ['x']);
        let long = "abcdefghijklmnopqrstuvwxyz";
        assert_eq!(split_chars(long, S_MAX).len(), 16);
        assert_eq!(split_chars("héllo", S_MAX).len(), 5);
    }

    #[test]
    fn surface_keeps_case() {
        let t = tokenize("Stonetusk Boar(1)");
        assert_eq!(t.tokens, ["stonetusk", "boar", "(", "1", ")"]);
        assert_eq!(t.surface, ["Stonetusk", "Boar", "(", "1", ")"]);
    }

    #[test]
    fn vocab_counts_and_unk() {
        let v = Vocab::build([vec!["a"; 5]], 1).unwrap();
        assert_eq!(v.len(), 1 + RESERVED.len());
        assert_eq!(v.id("a"), 3);
        assert_eq!(v.id("zzz"), UNK);
        let none = Vocab::build([vec!["a", "b", "b"]], 1_000_000_000).unwrap();
        assert_eq!(none.len(), RESERVED.len());
        assert_eq!(none.id("b"), UNK);
        assert!(matches!(Vocab::build(Vec::<Vec<&str>>::new(), 1), Err(TextError::EmptyCorpus)));
    }

    #[test]
    fn vocab_order_is_frequency_then_lexicographic() {
        let v = Vocab::build([vec!["b", "c", "a", "c"]], 1).unwrap();
        assert_eq!(&v.tokens()[3..], ["c", "a", "b"]);
    }

    #[test]
    fn vocab_survives_serde() {
        let v = Vocab::build([vec!["x", "y"]], 1).unwrap();
        let mut back: Vocab = serde_json::from_str(&serde_json::to_string(&v).unwrap()).unwrap();
        back.reindex();
        assert_eq!(back, v);
        assert_eq!(back.id("y"), v.id("y"));
    }
}
