//! Tokenization, stopword removal and bag-of-words construction.

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;
use unicode_normalization::UnicodeNormalization;

use crate::annotate::DaySegment;

/// English stoplist shipped with the crate (one token per line).
pub const ENGLISH_STOPWORDS: &str = include_str!("../../../data/stopwords_en.txt");

#[derive(Debug, Error)]
pub enum TextError {
    #[error("cannot read stoplist {path}: {source}")]
    Stoplist {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Stoplist(HashSet<String>);

impl Stoplist {
    pub fn parse(text: &str) -> Self {
        Stoplist(
            text.lines()
                .map(|l| l.trim())
                .filter(|l| !l.is_empty() && !l.starts_with('#'))
                .map(|l| l.nfc().collect::<String>().to_lowercase())
                .collect(),
        )
    }

    pub fn load(path: &Path) -> Result<Self, TextError> {
        std::fs::read_to_string(path)
            .map(|t| Self::parse(&t))
            .map_err(|source| TextError::Stoplist { path: path.display().to_string(), source })
    }

    pub fn english() -> Self {
        Self::parse(ENGLISH_STOPWORDS)
    }

    pub fn contains(&self, token: &str) -> bool {
        self.0.contains(token)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

impl<S: Into<String>> FromIterator<S> for Stoplist {
    fn from_iter<I: IntoIterator<Item = S>>(iter: I) -> Self {
        Stoplist(iter.into_iter().map(Into::into).collect())
    }
}

/// NFC-normalize, lowercase, split on anything that is not alphanumeric, and
/// drop one-character tokens unless they are digits.
pub fn tokenize(text: &str) -> Vec<String> {
    let normalized: String = text.nfc().collect::<String>().to_lowercase();
    normalized
        .split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .filter(|t| {
            let mut chars = t.chars();
            let first = chars.next().unwrap();
            chars.next().is_some() || first.is_ascii_digit()
        })
        .map(str::to_string)
        .collect()
}

pub fn remove_stopwords(tokens: Vec<String>, stoplist: &Stoplist) -> Vec<String> {
    tokens.into_iter().filter(|t| !stoplist.contains(t)).collect()
}

pub fn prepare(text: &str, stoplist: &Stoplist) -> Vec<String> {
    remove_stopwords(tokenize(text), stoplist)
}

/// Token-to-id map; ids are dense and follow lexicographic token order.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Vocabulary {
    pub tokens: Vec<String>,
    pub doc_freq: Vec<u32>,
    #[serde(skip)]
    index: BTreeMap<String, u32>,
}

impl Vocabulary {
    pub fn new(tokens: Vec<String>, doc_freq: Vec<u32>) -> Self {
        let index = tokens.iter().enumerate().map(|(i, t)| (t.clone(), i as u32)).collect();
        Vocabulary { tokens, doc_freq, index }
    }

    pub fn id(&self, token: &str) -> Option<u32> {
        self.index.get(token).copied()
    }

    pub fn token(&self, id: u32) -> &str {
        &self.tokens[id as usize]
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    /// Rebuild the lookup index after deserializing.
    pub fn reindex(&mut self) {
        self.index = self.tokens.iter().enumerate().map(|(i, t)| (t.clone(), i as u32)).collect();
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BagOfWords {
    /// Index of the source segment in the segment list.
    pub segment: usize,
    /// `(token id, count)` sorted by token id; counts are positive.
    pub counts: Vec<(u32, u32)>,
}

impl BagOfWords {
    pub fn len(&self) -> u64 {
        self.counts.iter().map(|&(_, c)| c as u64).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.counts.is_empty()
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Corpus {
    pub vocabulary: Vocabulary,
    pub bags: Vec<BagOfWords>,
    /// Segments whose bag was empty after stopword removal.
    pub dropped_segments: usize,
}

impl Corpus {
    pub fn total_tokens(&self) -> u64 {
        self.bags.iter().map(BagOfWords::len).sum()
    }

    pub fn from_json(text: &str) -> serde_json::Result<Self> {
        let mut corpus: Corpus = serde_json::from_str(text)?;
        corpus.vocabulary.reindex();
        Ok(corpus)
    }
}

pub fn build_corpus(segments: &[DaySegment], stoplist: &Stoplist) -> Corpus {
    let token_lists: Vec<Vec<String>> = segments.iter().map(|s| prepare(&s.text, stoplist)).collect();
    let mut doc_freq: BTreeMap<&str, u32> = BTreeMap::new();
    for tokens in &token_lists {
        let distinct: BTreeSet<&str> = tokens.iter().map(String::as_str).collect();
        for t in distinct {
            *doc_freq.entry(t).or_default() += 1;
        }
    }
    let vocabulary = Vocabulary::new(
        doc_freq.keys().map(|t| t.to_string()).collect(),
        doc_freq.values().copied().collect(),
    );
    let mut bags = Vec::new();
    let mut dropped = 0;
    for (segment, tokens) in token_lists.iter().enumerate() {
        if tokens.is_empty() {
            dropped += 1;
            continue;
        }
        let mut counts: BTreeMap<u32, u32> = BTreeMap::new();
        for t in tokens {
            *counts.entry(vocabulary.id(t).unwrap()).or_default() += 1;
        }
        bags.push(BagOfWords { segment, counts: counts.into_iter().collect() });
    }
    Corpus { vocabulary, bags, dropped_segments: dropped }
}
