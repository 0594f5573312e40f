//! Topics are the word blocks of one hierarchy level.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::graph::{BipartiteGraph, Side};
use super::state::BlockState;
use super::HsbmError;

/// Largest topic count the automatic level choice accepts.
pub const MAX_AUTO_TOPICS: usize = 50;

/// Serialized as `"auto"` or a level number.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum LevelChoice {
    #[default]
    Auto,
    Fixed(usize),
}

impl FromStr for LevelChoice {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        if s.eq_ignore_ascii_case("auto") {
            return Ok(LevelChoice::Auto);
        }
        s.parse().map(LevelChoice::Fixed).map_err(|_| format!("level must be a number or \"auto\", got {s:?}"))
    }
}

impl fmt::Display for LevelChoice {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            LevelChoice::Auto => f.write_str("auto"),
            LevelChoice::Fixed(l) => write!(f, "{l}"),
        }
    }
}

impl Serialize for LevelChoice {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        match self {
            LevelChoice::Auto => serializer.serialize_str("auto"),
            LevelChoice::Fixed(l) => serializer.serialize_u64(*l as u64),
        }
    }
}

impl<'de> Deserialize<'de> for LevelChoice {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Repr {
            Number(usize),
            Text(String),
        }
        match Repr::deserialize(deserializer)? {
            Repr::Number(n) => Ok(LevelChoice::Fixed(n)),
            Repr::Text(s) => s.parse().map_err(serde::de::Error::custom),
        }
    }
}

/// Finest level with between 2 and 50 word blocks, or level 0 if none has.
pub fn select_level(state: &BlockState, choice: LevelChoice) -> Result<usize, HsbmError> {
    match choice {
        LevelChoice::Fixed(level) if level < state.num_levels() => Ok(level),
        LevelChoice::Fixed(level) => Err(HsbmError::LevelOutOfRange { level, levels: state.num_levels() }),
        LevelChoice::Auto => Ok(state
            .levels
            .iter()
            .position(|l| (2..=MAX_AUTO_TOPICS).contains(&l.block_counts().1))
            .unwrap_or(0)),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TopicModel {
    pub level: usize,
    /// Block id (at `level`) of each topic; topics are ordered by token mass,
    /// largest first, ties by smallest member word id.
    pub topic_blocks: Vec<u32>,
    /// Tokens assigned to each topic.
    pub topic_mass: Vec<u64>,
    /// Topic of each word; `None` for words that never occur.
    pub word_topic: Vec<Option<u32>>,
    /// `K x V`; row `k` is p(word | topic k).
    pub word_given_topic: Vec<Vec<f64>>,
    /// `D x K`; row `d` is p(topic | document d).
    pub topic_given_doc: Vec<Vec<f64>>,
}

impl TopicModel {
    pub fn num_topics(&self) -> usize {
        self.topic_blocks.len()
    }

    /// Highest-probability words of topic `k`, ties by word id.
    pub fn top_words(&self, k: usize, n: usize) -> Vec<(u32, f64)> {
        let mut words: Vec<(u32, f64)> = self.word_given_topic[k]
            .iter()
            .enumerate()
            .filter(|(_, &p)| p > 0.0)
            .map(|(w, &p)| (w as u32, p))
            .collect();
        words.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
        words.truncate(n);
        words
    }
}

pub fn extract_topics(graph: &BipartiteGraph, state: &BlockState, level: usize) -> Result<TopicModel, HsbmError> {
    if level >= state.num_levels() {
        return Err(HsbmError::LevelOutOfRange { level, levels: state.num_levels() });
    }
    if state.levels[0].assignment.len() != graph.num_nodes() {
        return Err(HsbmError::InconsistentState("state does not match graph".into()));
    }
    let blocks = state.node_blocks(level);
    let num_docs = graph.num_docs();
    let num_words = graph.num_words();

    // block -> (mass, smallest word id)
    let mut stats: BTreeMap<u32, (u64, u32)> = BTreeMap::new();
    for w in 0..num_words {
        let node = graph.word_node(w);
        let degree = graph.degree(node);
        if degree == 0 {
            continue;
        }
        let entry = stats.entry(blocks[node]).or_insert((0, w as u32));
        entry.0 += degree;
    }
    let mut order: Vec<(u32, u64, u32)> = stats.into_iter().map(|(b, (m, w))| (b, m, w)).collect();
    order.sort_by(|a, b| b.1.cmp(&a.1).then(a.2.cmp(&b.2)));
    let topic_of_block: BTreeMap<u32, u32> = order.iter().enumerate().map(|(k, &(b, _, _))| (b, k as u32)).collect();
    let k_total = order.len();

    let word_topic: Vec<Option<u32>> = (0..num_words)
        .map(|w| {
            let node = graph.word_node(w);
            (graph.degree(node) > 0).then(|| topic_of_block[&blocks[node]])
        })
        .collect();

    let mut word_given_topic = vec![vec![0.0; num_words]; k_total];
    for (w, topic) in word_topic.iter().enumerate() {
        if let Some(k) = topic {
            let mass = order[*k as usize].1 as f64;
            word_given_topic[*k as usize][w] = graph.degree(graph.word_node(w)) as f64 / mass;
        }
    }

    let mut topic_given_doc = Vec::with_capacity(num_docs);
    for d in 0..num_docs {
        debug_assert_eq!(graph.side(d), Side::Document);
        let length = graph.degree(d);
        let mut row = vec![0.0; k_total];
        if length == 0 {
            row.fill(1.0 / k_total as f64);
        } else {
            for &(word, m) in graph.neighbors(d) {
                row[topic_of_block[&blocks[word as usize]] as usize] += m as f64;
            }
            for p in &mut row {
                *p /= length as f64;
            }
        }
        topic_given_doc.push(row);
    }

    Ok(TopicModel {
        level,
        topic_blocks: order.iter().map(|&(b, _, _)| b).collect(),
        topic_mass: order.iter().map(|&(_, m, _)| m).collect(),
        word_topic,
        word_given_topic,
        topic_given_doc,
    })
}
