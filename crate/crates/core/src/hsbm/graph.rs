use serde::{Deserialize, Serialize};

use crate::text::BagOfWords;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Side {
    Document,
    Word,
}

impl Side {
    pub fn index(self) -> usize {
        match self {
            Side::Document => 0,
            Side::Word => 1,
        }
    }
}

/// Document–word multigraph. Nodes `0..D` are documents, `D..D+V` are words;
/// an edge's multiplicity is the count of the word in the document.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BipartiteGraph {
    num_docs: usize,
    num_words: usize,
    adjacency: Vec<Vec<(u32, u64)>>,
    degrees: Vec<u64>,
    num_edges: u64,
}

impl BipartiteGraph {
    /// `num_words` is the vocabulary size; words that never occur become isolated nodes.
    pub fn from_bags(bags: &[BagOfWords], num_words: usize) -> Self {
        let num_docs = bags.len();
        let mut adjacency = vec![Vec::new(); num_docs + num_words];
        for (d, bag) in bags.iter().enumerate() {
            for &(w, count) in &bag.counts {
                assert!((w as usize) < num_words, "token id {w} outside vocabulary of {num_words}");
                let word = num_docs + w as usize;
                adjacency[d].push((word as u32, count as u64));
                adjacency[word].push((d as u32, count as u64));
            }
        }
        for list in &mut adjacency {
            list.sort_unstable();
        }
        let degrees: Vec<u64> = adjacency.iter().map(|l| l.iter().map(|&(_, m)| m).sum()).collect();
        let num_edges = degrees[..num_docs].iter().sum();
        BipartiteGraph { num_docs, num_words, adjacency, degrees, num_edges }
    }

    pub fn num_docs(&self) -> usize {
        self.num_docs
    }

    pub fn num_words(&self) -> usize {
        self.num_words
    }

    pub fn num_nodes(&self) -> usize {
        self.num_docs + self.num_words
    }

    /// Total edge multiplicity (token count).
    pub fn num_edges(&self) -> u64 {
        self.num_edges
    }

    pub fn side(&self, node: usize) -> Side {
        if node < self.num_docs {
            Side::Document
        } else {
            Side::Word
        }
    }

    pub fn word_node(&self, word: usize) -> usize {
        self.num_docs + word
    }

    pub fn neighbors(&self, node: usize) -> &[(u32, u64)] {
        &self.adjacency[node]
    }

    pub fn degree(&self, node: usize) -> u64 {
        self.degrees[node]
    }

    pub fn degrees(&self) -> &[u64] {
        &self.degrees
    }

    /// Number of connected components, counting isolated nodes.
    pub fn component_count(&self) -> usize {
        let n = self.num_nodes();
        let mut seen = vec![false; n];
        let mut components = 0;
        let mut stack = Vec::new();
        for start in 0..n {
            if seen[start] {
                continue;
            }
            components += 1;
            seen[start] = true;
            stack.push(start);
            while let Some(v) = stack.pop() {
                for &(u, _) in &self.adjacency[v] {
                    if !seen[u as usize] {
                        seen[u as usize] = true;
                        stack.push(u as usize);
                    }
                }
            }
        }
        components
    }
}
