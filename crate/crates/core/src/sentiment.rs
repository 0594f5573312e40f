//! Word-emotion lexicon scoring over the ten NRC categories.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::annotate::DaySegment;
use crate::text::Corpus;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Emotion {
    Anger,
    Anticipation,
    Disgust,
    Fear,
    Joy,
    Negative,
    Positive,
    Sadness,
    Surprise,
    Trust,
}

pub const EMOTIONS: [Emotion; 10] = [
    Emotion::Anger,
    Emotion::Anticipation,
    Emotion::Disgust,
    Emotion::Fear,
    Emotion::Joy,
    Emotion::Negative,
    Emotion::Positive,
    Emotion::Sadness,
    Emotion::Surprise,
    Emotion::Trust,
];

impl Emotion {
    pub fn name(self) -> &'static str {
        match self {
            Emotion::Anger => "anger",
            Emotion::Anticipation => "anticipation",
            Emotion::Disgust => "disgust",
            Emotion::Fear => "fear",
            Emotion::Joy => "joy",
            Emotion::Negative => "negative",
            Emotion::Positive => "positive",
            Emotion::Sadness => "sadness",
            Emotion::Surprise => "surprise",
            Emotion::Trust => "trust",
        }
    }

    pub fn index(self) -> usize {
        self as usize
    }
}

impl fmt::Display for Emotion {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Emotion {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        EMOTIONS.into_iter().find(|e| e.name() == s).ok_or_else(|| format!("unknown emotion category {s:?}"))
    }
}

/// Terms removed from the lexicon unless configured otherwise.
pub const DEFAULT_EXCLUSIONS: [&str; 3] = ["feeling", "positive", "negative"];

pub fn default_exclusions() -> BTreeSet<String> {
    DEFAULT_EXCLUSIONS.iter().map(|s| s.to_string()).collect()
}

#[derive(Debug, Error)]
pub enum LexiconError {
    #[error("cannot read lexicon {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("lexicon line {line}: {message}")]
    Parse { line: usize, message: String },
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SentimentLexicon {
    terms: BTreeMap<String, BTreeSet<Emotion>>,
    exclusions: BTreeSet<String>,
}

impl SentimentLexicon {
    /// Parse `term<TAB>category<TAB>0|1` lines; blank lines are ignored.
    pub fn parse(text: &str, exclusions: &BTreeSet<String>) -> Result<Self, LexiconError> {
        let exclusions: BTreeSet<String> = exclusions.iter().map(|t| t.to_lowercase()).collect();
        let mut terms: BTreeMap<String, BTreeSet<Emotion>> = BTreeMap::new();
        for (i, raw) in text.lines().enumerate() {
            let line = i + 1;
            let raw = raw.trim_end_matches('\r');
            if raw.trim().is_empty() {
                continue;
            }
            let fields: Vec<&str> = raw.split('\t').collect();
            let [term, category, flag] = fields[..] else {
                return Err(LexiconError::Parse { line, message: format!("expected 3 tab-separated fields, found {}", fields.len()) });
            };
            let term = term.trim().to_lowercase();
            if term.is_empty() {
                return Err(LexiconError::Parse { line, message: "empty term".into() });
            }
            let emotion: Emotion = category.trim().parse().map_err(|message| LexiconError::Parse { line, message })?;
            let associated = match flag.trim() {
                "1" => true,
                "0" => false,
                other => return Err(LexiconError::Parse { line, message: format!("flag must be 0 or 1, got {other:?}") }),
            };
            if associated && !exclusions.contains(&term) {
                terms.entry(term).or_default().insert(emotion);
            }
        }
        Ok(SentimentLexicon { terms, exclusions })
    }

    pub fn load(path: &Path, exclusions: &BTreeSet<String>) -> Result<Self, LexiconError> {
        let text = std::fs::read_to_string(path)
            .map_err(|source| LexiconError::Io { path: path.display().to_string(), source })?;
        Self::parse(&text, exclusions)
    }

    /// Categories of `token`; empty for unknown and excluded terms.
    pub fn categories(&self, token: &str) -> impl Iterator<Item = Emotion> + '_ {
        self.terms.get(token).into_iter().flatten().copied()
    }

    pub fn exclusions(&self) -> &BTreeSet<String> {
        &self.exclusions
    }

    /// Number of terms with at least one category.
    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }
}

/// What the per-category counts are divided by.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Denominator {
    /// Sum of the category counts, so proportions form a distribution.
    #[default]
    Memberships,
    /// Number of emotion-carrying token occurrences.
    Occurrences,
}

impl FromStr for Denominator {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "memberships" => Ok(Denominator::Memberships),
            "occurrences" => Ok(Denominator::Occurrences),
            _ => Err(format!("denominator must be memberships or occurrences, got {s:?}")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct EmotionCounts {
    pub day: u32,
    /// Indexed like [`EMOTIONS`].
    pub counts: [u64; 10],
    /// Token occurrences with at least one category.
    pub emotion_carrying_total: u64,
}

impl EmotionCounts {
    pub fn memberships(&self) -> u64 {
        self.counts.iter().sum()
    }

    /// `None` when the denominator is zero.
    pub fn proportions(&self, denominator: Denominator) -> Option<[f64; 10]> {
        let total = match denominator {
            Denominator::Memberships => self.memberships(),
            Denominator::Occurrences => self.emotion_carrying_total,
        };
        (total > 0).then(|| self.counts.map(|c| c as f64 / total as f64))
    }
}

/// Count category memberships of `tokens` (with multiplicities).
pub fn score_day<'a>(day: u32, tokens: impl IntoIterator<Item = (&'a str, u64)>, lexicon: &SentimentLexicon) -> EmotionCounts {
    let mut counts = EmotionCounts { day, ..Default::default() };
    for (token, times) in tokens {
        let mut carries = false;
        for emotion in lexicon.categories(token) {
            counts.counts[emotion.index()] += times;
            carries = true;
        }
        if carries {
            counts.emotion_carrying_total += times;
        }
    }
    counts
}

/// Score every day that has at least one dated segment, in day order.
/// Tokens come from the corpus bags; segments without a bag score nothing.
pub fn score_corpus(corpus: &Corpus, segments: &[DaySegment], lexicon: &SentimentLexicon) -> Vec<EmotionCounts> {
    let mut days: BTreeMap<u32, Vec<(&str, u64)>> = BTreeMap::new();
    for seg in segments {
        if let Some(day) = seg.day {
            days.entry(day).or_default();
        }
    }
    for bag in &corpus.bags {
        if let Some(day) = segments.get(bag.segment).and_then(|s| s.day) {
            let tokens = days.entry(day).or_default();
            tokens.extend(bag.counts.iter().map(|&(id, c)| (corpus.vocabulary.token(id), c as u64)));
        }
    }
    days.into_iter().map(|(day, tokens)| score_day(day, tokens, lexicon)).collect()
}
