//! Nested block partitions and their description length.
//!
//! Level 0 assigns graph nodes to blocks, level `l + 1` assigns the blocks of
//! level `l` to coarser blocks. The last level always holds exactly one
//! document block and one word block. No block ever mixes documents and words.
//!
//! The description length (nats) of a state is the sum of
//!
//! * the microcanonical degree-corrected multigraph entropy at level 0,
//!   `Σ_r ln e_r! − Σ_{r<s} ln e_rs! − Σ_i ln k_i! + Σ_{i<j} ln A_ij!`;
//! * the degree-sequence cost at level 0, per block
//!   `ln n_r! − Σ_k ln η_k^r! + ln q(e_r, n_r)`;
//! * for every level `l ≥ 1`, the cost of the level-`(l−1)` edge counts given
//!   the level-`l` counts, `Σ_{r<s} ln ((n_r n_s, e_rs))`;
//! * for every level, the partition cost per side
//!   `ln C(N−1, B−1) + ln N! − Σ_r ln n_r! + ln N`.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::graph::{BipartiteGraph, Side};
use super::special::{ln_binom, ln_fact, ln_multiset, ln_partitions};
use super::HsbmError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BlockEdge {
    pub doc_block: u32,
    pub word_block: u32,
    pub count: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LevelState {
    /// Item (node at level 0, lower block otherwise) to block.
    pub assignment: Vec<u32>,
    pub block_sides: Vec<Side>,
    /// Non-zero block edge counts, sorted by `(doc_block, word_block)`.
    pub edge_counts: Vec<BlockEdge>,
}

impl LevelState {
    pub fn num_blocks(&self) -> usize {
        self.block_sides.len()
    }

    /// `(document blocks, word blocks)`
    pub fn block_counts(&self) -> (usize, usize) {
        let docs = self.block_sides.iter().filter(|&&s| s == Side::Document).count();
        (docs, self.block_sides.len() - docs)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlockState {
    pub levels: Vec<LevelState>,
    /// Description length in nats.
    pub description_length: f64,
}

impl BlockState {
    /// Validate a hierarchy of assignments and evaluate it. A closing level
    /// with one block per side is appended when the last level has more.
    pub fn from_partitions(graph: &BipartiteGraph, mut partitions: Vec<Vec<u32>>) -> Result<Self, HsbmError> {
        let mut sides = check_partitions(graph, &partitions)?;
        let last = sides.last().cloned().unwrap_or_default();
        let closed = last.iter().filter(|&&s| s == Side::Document).count() <= 1
            && last.iter().filter(|&&s| s == Side::Word).count() <= 1;
        if partitions.is_empty() || !closed {
            let items: Vec<Side> = match sides.last() {
                Some(s) => s.clone(),
                None => (0..graph.num_nodes()).map(|n| graph.side(n)).collect(),
            };
            let top: Vec<u32> = items.iter().map(|&s| s.index() as u32).collect();
            let mut top_sides = vec![Side::Document, Side::Word];
            // a side with no items gets no block; keep ids compact
            if !items.contains(&Side::Document) {
                top_sides.remove(0);
            }
            let top = if items.contains(&Side::Document) { top } else { vec![0; items.len()] };
            partitions.push(top);
            sides.push(top_sides);
        }
        let levels = build_levels(graph, &partitions, &sides);
        let description_length = evaluate(graph, &levels)?;
        Ok(BlockState { levels, description_length })
    }

    pub fn num_levels(&self) -> usize {
        self.levels.len()
    }

    pub fn partitions(&self) -> Vec<Vec<u32>> {
        self.levels.iter().map(|l| l.assignment.clone()).collect()
    }

    /// Block of every graph node at `level`.
    pub fn node_blocks(&self, level: usize) -> Vec<u32> {
        let mut blocks = self.levels[0].assignment.clone();
        for l in 1..=level {
            let up = &self.levels[l].assignment;
            for b in &mut blocks {
                *b = up[*b as usize];
            }
        }
        blocks
    }
}

/// Check shapes, compactness and one-sidedness; returns block sides per level.
pub(crate) fn check_partitions(graph: &BipartiteGraph, partitions: &[Vec<u32>]) -> Result<Vec<Vec<Side>>, HsbmError> {
    let mut item_sides: Vec<Side> = (0..graph.num_nodes()).map(|n| graph.side(n)).collect();
    let mut all = Vec::with_capacity(partitions.len());
    for (l, assignment) in partitions.iter().enumerate() {
        if assignment.len() != item_sides.len() {
            return Err(HsbmError::InconsistentState(format!(
                "level {l} assigns {} items but the level below has {}",
                assignment.len(),
                item_sides.len()
            )));
        }
        let num_blocks = assignment.iter().map(|&b| b as usize + 1).max().unwrap_or(0);
        let mut block_sides: Vec<Option<Side>> = vec![None; num_blocks];
        for (item, &b) in assignment.iter().enumerate() {
            let side = item_sides[item];
            match block_sides[b as usize] {
                None => block_sides[b as usize] = Some(side),
                Some(s) if s != side => {
                    return Err(HsbmError::InconsistentState(format!(
                        "level {l} block {b} mixes documents and words"
                    )))
                }
                _ => {}
            }
        }
        let sides: Vec<Side> = block_sides
            .into_iter()
            .enumerate()
            .map(|(b, s)| s.ok_or_else(|| HsbmError::InconsistentState(format!("level {l} block {b} is empty"))))
            .collect::<Result<_, _>>()?;
        item_sides = sides.clone();
        all.push(sides);
    }
    Ok(all)
}

fn build_levels(graph: &BipartiteGraph, partitions: &[Vec<u32>], sides: &[Vec<Side>]) -> Vec<LevelState> {
    let mut levels = Vec::with_capacity(partitions.len());
    let mut node_block: Vec<u32> = (0..graph.num_nodes() as u32).collect();
    for (assignment, block_sides) in partitions.iter().zip(sides) {
        for b in &mut node_block {
            *b = assignment[*b as usize];
        }
        let mut counts: BTreeMap<(u32, u32), u64> = BTreeMap::new();
        for d in 0..graph.num_docs() {
            for &(w, m) in graph.neighbors(d) {
                *counts.entry((node_block[d], node_block[w as usize])).or_default() += m;
            }
        }
        levels.push(LevelState {
            assignment: assignment.clone(),
            block_sides: block_sides.clone(),
            edge_counts: counts
                .into_iter()
                .map(|((doc_block, word_block), count)| BlockEdge { doc_block, word_block, count })
                .collect(),
        });
    }
    levels
}

fn partition_cost(assignment: &[u32], item_sides: &[Side], num_blocks: usize) -> f64 {
    let mut sizes = vec![0u64; num_blocks];
    let mut items = [0u64; 2];
    for (item, &b) in assignment.iter().enumerate() {
        sizes[b as usize] += 1;
        items[item_sides[item].index()] += 1;
    }
    let mut blocks = [0u64; 2];
    // a block's side is that of its items
    let mut block_side = vec![0usize; num_blocks];
    for (item, &b) in assignment.iter().enumerate() {
        block_side[b as usize] = item_sides[item].index();
    }
    for &s in &block_side {
        blocks[s] += 1;
    }
    let mut cost = 0.0;
    for side in 0..2 {
        let (n, b) = (items[side], blocks[side]);
        if n == 0 {
            continue;
        }
        cost += ln_binom(n - 1, b - 1) + ln_fact(n) + (n as f64).ln();
    }
    cost - sizes.iter().map(|&s| ln_fact(s)).sum::<f64>()
}

fn evaluate(graph: &BipartiteGraph, levels: &[LevelState]) -> Result<f64, HsbmError> {
    if graph.num_edges() == 0 {
        return Err(HsbmError::EmptyGraph);
    }
    let base = &levels[0];
    let num_blocks = base.num_blocks();
    let mut block_degree = vec![0u64; num_blocks];
    let mut block_size = vec![0u64; num_blocks];
    let mut degree_hist: Vec<BTreeMap<u64, u64>> = vec![BTreeMap::new(); num_blocks];
    for (node, &b) in base.assignment.iter().enumerate() {
        let k = graph.degree(node);
        block_degree[b as usize] += k;
        block_size[b as usize] += 1;
        *degree_hist[b as usize].entry(k).or_default() += 1;
    }

    // multigraph entropy
    let mut sigma = 0.0;
    for node in 0..graph.num_nodes() {
        sigma -= ln_fact(graph.degree(node));
    }
    for d in 0..graph.num_docs() {
        for &(_, m) in graph.neighbors(d) {
            sigma += ln_fact(m);
        }
    }
    sigma += block_degree.iter().map(|&e| ln_fact(e)).sum::<f64>();
    sigma -= base.edge_counts.iter().map(|e| ln_fact(e.count)).sum::<f64>();

    // degree sequence
    for b in 0..num_blocks {
        sigma += ln_fact(block_size[b]) + ln_partitions(block_degree[b], block_size[b]);
        sigma -= degree_hist[b].values().map(|&c| ln_fact(c)).sum::<f64>();
    }

    // partitions
    let mut item_sides: Vec<Side> = (0..graph.num_nodes()).map(|n| graph.side(n)).collect();
    for level in levels {
        sigma += partition_cost(&level.assignment, &item_sides, level.num_blocks());
        item_sides = level.block_sides.clone();
    }

    // edge counts of level l-1 given level l
    for l in 1..levels.len() {
        let mut sizes = vec![0u64; levels[l].num_blocks()];
        for &b in &levels[l].assignment {
            sizes[b as usize] += 1;
        }
        for e in &levels[l].edge_counts {
            sigma += ln_multiset(sizes[e.doc_block as usize] * sizes[e.word_block as usize], e.count);
        }
    }
    if !sigma.is_finite() {
        return Err(HsbmError::InconsistentState("description length is not finite".into()));
    }
    Ok(sigma)
}

/// Re-evaluate a state's description length from its partitions.
pub fn description_length(graph: &BipartiteGraph, state: &BlockState) -> Result<f64, HsbmError> {
    let sides = check_partitions(graph, &state.partitions())?;
    if let Some(top) = sides.last() {
        if top.len() > 2 {
            return Err(HsbmError::InconsistentState("top level must hold one block per side".into()));
        }
    }
    if sides.is_empty() {
        return Err(HsbmError::InconsistentState("state has no levels".into()));
    }
    let levels = build_levels(graph, &state.partitions(), &sides);
    evaluate(graph, &levels)
}
