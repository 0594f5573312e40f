//! Mutable nested block state with incremental description-length updates.
//!
//! Block ids are slots that stay fixed while the engine runs; a block that
//! loses its last item is dead (size 0) and, as an item of the level above,
//! stops counting towards that level. Moving an item back into a dead block
//! revives it, which is what makes every move exactly reversible.

use std::collections::{BTreeMap, BTreeSet};

use rand::seq::SliceRandom;
use rand::Rng;

use super::graph::{BipartiteGraph, Side};
use super::special::{ln_binom, ln_fact, ln_multiset, ln_partitions};

/// Probability of a uniform (rather than neighbourhood-guided) block proposal.
const UNIFORM_PROPOSAL: f64 = 0.1;
/// Merge candidates are enumerated exhaustively up to this many blocks per side.
const EXHAUSTIVE_MERGE: usize = 64;
const SAMPLED_MERGE: usize = 16;

#[derive(Debug, Clone)]
struct Level {
    assign: Vec<u32>,
    item_side: Vec<Side>,
    item_alive: Vec<bool>,
    side: Vec<Side>,
    size: Vec<u32>,
    members: Vec<BTreeSet<u32>>,
    edges: Vec<BTreeMap<u32, u64>>,
    degree: Vec<u64>,
    /// Level 0 only: node degree -> number of nodes in the block.
    degree_hist: Vec<BTreeMap<u64, u32>>,
    items: [u64; 2],
    blocks: [u64; 2],
}

fn dec(map: &mut BTreeMap<u32, u64>, key: u32, by: u64) {
    let entry = map.get_mut(&key).expect("edge count present");
    *entry -= by;
    if *entry == 0 {
        map.remove(&key);
    }
}

fn inc(map: &mut BTreeMap<u32, u64>, key: u32, by: u64) {
    *map.entry(key).or_default() += by;
}

pub(crate) struct Engine<'g> {
    graph: &'g BipartiteGraph,
    levels: Vec<Level>,
    constant: f64,
    pub sigma: f64,
}

impl<'g> Engine<'g> {
    /// `partitions` must be compact, one-sided and closed (validated by the caller).
    pub fn new(graph: &'g BipartiteGraph, partitions: &[Vec<u32>]) -> Self {
        let mut levels: Vec<Level> = Vec::with_capacity(partitions.len());
        let mut item_side: Vec<Side> = (0..graph.num_nodes()).map(|n| graph.side(n)).collect();
        for (l, assign) in partitions.iter().enumerate() {
            let num_blocks = assign.iter().map(|&b| b as usize + 1).max().unwrap_or(0);
            let mut side = vec![Side::Document; num_blocks];
            let mut size = vec![0u32; num_blocks];
            let mut members = vec![BTreeSet::new(); num_blocks];
            let mut items = [0u64; 2];
            for (x, &b) in assign.iter().enumerate() {
                side[b as usize] = item_side[x];
                size[b as usize] += 1;
                members[b as usize].insert(x as u32);
                items[item_side[x].index()] += 1;
            }
            let mut blocks = [0u64; 2];
            for s in &side {
                blocks[s.index()] += 1;
            }
            let mut edges = vec![BTreeMap::new(); num_blocks];
            let mut degree = vec![0u64; num_blocks];
            let mut degree_hist = Vec::new();
            if l == 0 {
                degree_hist = vec![BTreeMap::new(); num_blocks];
                for (x, &b) in assign.iter().enumerate() {
                    let k = graph.degree(x);
                    degree[b as usize] += k;
                    *degree_hist[b as usize].entry(k).or_default() += 1;
                    for &(y, m) in graph.neighbors(x) {
                        inc(&mut edges[b as usize], assign[y as usize], m);
                    }
                }
            } else {
                let below: &Level = &levels[l - 1];
                for (x, &b) in assign.iter().enumerate() {
                    degree[b as usize] += below.degree[x];
                    for (&y, &m) in &below.edges[x] {
                        inc(&mut edges[b as usize], assign[y as usize], m);
                    }
                }
            }
            levels.push(Level {
                assign: assign.clone(),
                item_alive: vec![true; assign.len()],
                item_side: item_side.clone(),
                side: side.clone(),
                size,
                members,
                edges,
                degree,
                degree_hist,
                items,
                blocks,
            });
            item_side = side;
        }
        let mut constant = 0.0;
        for node in 0..graph.num_nodes() {
            constant -= ln_fact(graph.degree(node));
        }
        for d in 0..graph.num_docs() {
            for &(_, m) in graph.neighbors(d) {
                constant += ln_fact(m);
            }
        }
        let mut engine = Engine { graph, levels, constant, sigma: 0.0 };
        engine.sigma = engine.full_sigma();
        engine
    }

    pub fn num_levels(&self) -> usize {
        self.levels.len()
    }

    pub fn alive_blocks(&self, level: usize, side: Side) -> Vec<u32> {
        let lv = &self.levels[level];
        (0..lv.size.len() as u32)
            .filter(|&b| lv.size[b as usize] > 0 && lv.side[b as usize] == side)
            .collect()
    }

    pub fn block_counts(&self, level: usize) -> [u64; 2] {
        self.levels[level].blocks
    }

    /// Compact partitions: alive blocks renumbered in slot order.
    pub fn export(&self) -> Vec<Vec<u32>> {
        let mut out = Vec::with_capacity(self.levels.len());
        let mut item_ids: Option<Vec<u32>> = None; // alive items of this level, in order
        for lv in &self.levels {
            let mut remap = vec![u32::MAX; lv.size.len()];
            let mut next = 0u32;
            for (b, &s) in lv.size.iter().enumerate() {
                if s > 0 {
                    remap[b] = next;
                    next += 1;
                }
            }
            let assignment: Vec<u32> = match &item_ids {
                None => lv.assign.iter().map(|&b| remap[b as usize]).collect(),
                Some(items) => items.iter().map(|&x| remap[lv.assign[x as usize] as usize]).collect(),
            };
            out.push(assignment);
            item_ids = Some((0..lv.size.len() as u32).filter(|&b| lv.size[b as usize] > 0).collect());
        }
        out
    }

    fn block_term(&self, l: usize, r: u32) -> f64 {
        let lv = &self.levels[l];
        let n = lv.size[r as usize];
        if n == 0 {
            return 0.0;
        }
        if l == 0 {
            let e = lv.degree[r as usize];
            ln_fact(e) + ln_partitions(e, n as u64)
                - lv.degree_hist[r as usize].values().map(|&c| ln_fact(c as u64)).sum::<f64>()
        } else {
            -ln_fact(n as u64)
        }
    }

    fn pair_terms(&self, l: usize, r: u32) -> f64 {
        let lv = &self.levels[l];
        let n_r = lv.size[r as usize] as u64;
        lv.edges[r as usize]
            .iter()
            .map(|(&t, &m)| {
                if l == 0 {
                    -ln_fact(m)
                } else {
                    ln_multiset(n_r * lv.size[t as usize] as u64, m)
                }
            })
            .sum()
    }

    fn global_term(&self, l: usize) -> f64 {
        let lv = &self.levels[l];
        let mut cost = 0.0;
        for side in 0..2 {
            let (n, b) = (lv.items[side], lv.blocks[side]);
            if n > 0 {
                cost += ln_binom(n - 1, b - 1) + ln_fact(n) + (n as f64).ln();
            }
        }
        cost
    }

    pub fn full_sigma(&self) -> f64 {
        let mut sigma = self.constant;
        for l in 0..self.levels.len() {
            let lv = &self.levels[l];
            for r in 0..lv.size.len() as u32 {
                sigma += self.block_term(l, r);
                if lv.side[r as usize] == Side::Document {
                    sigma += self.pair_terms(l, r);
                }
            }
            sigma += self.global_term(l);
        }
        sigma
    }

    fn touched(&self, l: usize, x: u32, s: u32) -> Vec<Vec<u32>> {
        let nlev = self.levels.len();
        let r = self.levels[l].assign[x as usize];
        let mut touched = vec![Vec::new(); nlev];
        touched[l] = vec![r, s];
        let (mut a, mut b) = (r, s);
        for (lv, set) in touched.iter_mut().enumerate().skip(l + 1) {
            a = self.levels[lv].assign[a as usize];
            b = self.levels[lv].assign[b as usize];
            if a == b {
                break;
            }
            set.extend([a, b]);
        }
        // size changes propagate up through deaths and revivals
        let chain = |mut block: u32, dying: bool, touched: &mut Vec<Vec<u32>>| {
            for lv in l..nlev - 1 {
                let size = self.levels[lv].size[block as usize];
                let changes = if dying { size == 1 } else { size == 0 };
                if !changes {
                    break;
                }
                block = self.levels[lv + 1].assign[block as usize];
                if !touched[lv + 1].contains(&block) {
                    touched[lv + 1].push(block);
                }
            }
        };
        chain(r, true, &mut touched);
        chain(s, false, &mut touched);
        touched
    }

    fn local_cost(&self, l: usize, touched: &[Vec<u32>]) -> f64 {
        let mut cost = 0.0;
        for (lv, set) in touched.iter().enumerate() {
            for &z in set {
                cost += self.block_term(lv, z) + self.pair_terms(lv, z);
            }
            if lv >= l {
                cost += self.global_term(lv);
            }
        }
        cost
    }

    fn item_neighbors(&self, l: usize, x: u32) -> Vec<(u32, u64)> {
        if l == 0 {
            self.graph.neighbors(x as usize).to_vec()
        } else {
            self.levels[l - 1].edges[x as usize].iter().map(|(&y, &m)| (y, m)).collect()
        }
    }

    fn item_degree(&self, l: usize, x: u32) -> u64 {
        if l == 0 {
            self.graph.degree(x as usize)
        } else {
            self.levels[l - 1].degree[x as usize]
        }
    }

    /// Edge weight from item `x` to each level-`l` block on the other side.
    fn item_block_weights(&self, l: usize, x: u32) -> Vec<(u32, u64)> {
        let assign = &self.levels[l].assign;
        let mut by_block: BTreeMap<u32, u64> = BTreeMap::new();
        for (y, w) in self.item_neighbors(l, x) {
            *by_block.entry(assign[y as usize]).or_default() += w;
        }
        by_block.into_iter().collect()
    }

    /// Move item `x` of level `l` into block `s` and return the change in
    /// description length.
    pub fn move_item(&mut self, l: usize, x: u32, s: u32) -> f64 {
        let r = self.levels[l].assign[x as usize];
        if r == s {
            return 0.0;
        }
        let touched = self.touched(l, x, s);
        let before = self.local_cost(l, &touched);
        self.apply(l, x, s);
        let after = self.local_cost(l, &touched);
        let delta = after - before;
        self.sigma += delta;
        delta
    }

    fn apply(&mut self, l: usize, x: u32, s: u32) {
        let r = self.levels[l].assign[x as usize];
        debug_assert_eq!(self.levels[l].side[s as usize], self.levels[l].item_side[x as usize]);
        let k = self.item_degree(l, x);
        let mut contrib = self.item_block_weights(l, x);
        let (mut a, mut b) = (r, s);
        for lv in l..self.levels.len() {
            if a == b {
                break;
            }
            {
                let level = &mut self.levels[lv];
                for &(t, w) in &contrib {
                    dec(&mut level.edges[a as usize], t, w);
                    dec(&mut level.edges[t as usize], a, w);
                    inc(&mut level.edges[b as usize], t, w);
                    inc(&mut level.edges[t as usize], b, w);
                }
                level.degree[a as usize] -= k;
                level.degree[b as usize] += k;
            }
            if lv + 1 < self.levels.len() {
                let up = &self.levels[lv + 1].assign;
                a = up[a as usize];
                b = up[b as usize];
                let mut merged: BTreeMap<u32, u64> = BTreeMap::new();
                for &(t, w) in &contrib {
                    *merged.entry(up[t as usize]).or_default() += w;
                }
                contrib = merged.into_iter().collect();
            }
        }
        let level = &mut self.levels[l];
        level.assign[x as usize] = s;
        level.members[r as usize].remove(&x);
        level.members[s as usize].insert(x);
        level.size[r as usize] -= 1;
        level.size[s as usize] += 1;
        if l == 0 {
            let hist = &mut level.degree_hist[r as usize];
            let c = hist.get_mut(&k).expect("degree present");
            *c -= 1;
            if *c == 0 {
                hist.remove(&k);
            }
            *level.degree_hist[s as usize].entry(k).or_default() += 1;
        }
        let (r_dead, s_born) = (level.size[r as usize] == 0, level.size[s as usize] == 1);
        if r_dead {
            self.kill(l, r);
        }
        if s_born {
            self.revive(l, s);
        }
    }

    fn kill(&mut self, l: usize, r: u32) {
        let side = self.levels[l].side[r as usize].index();
        self.levels[l].blocks[side] -= 1;
        if l + 1 < self.levels.len() {
            let up = &mut self.levels[l + 1];
            up.item_alive[r as usize] = false;
            up.items[side] -= 1;
            let parent = up.assign[r as usize];
            up.members[parent as usize].remove(&r);
            up.size[parent as usize] -= 1;
            if up.size[parent as usize] == 0 {
                self.kill(l + 1, parent);
            }
        }
    }

    fn revive(&mut self, l: usize, s: u32) {
        let side = self.levels[l].side[s as usize].index();
        self.levels[l].blocks[side] += 1;
        if l + 1 < self.levels.len() {
            let up = &mut self.levels[l + 1];
            up.item_alive[s as usize] = true;
            up.items[side] += 1;
            let parent = up.assign[s as usize];
            up.members[parent as usize].insert(s);
            up.size[parent as usize] += 1;
            if up.size[parent as usize] == 1 {
                self.revive(l + 1, parent);
            }
        }
    }

    /// Move every item of block `r` into `s`; returns the summed delta and
    /// the moved items so the merge can be undone.
    fn merge(&mut self, l: usize, r: u32, s: u32) -> (f64, Vec<u32>) {
        let items: Vec<u32> = self.levels[l].members[r as usize].iter().copied().collect();
        let delta = items.iter().map(|&x| self.move_item(l, x, s)).sum();
        (delta, items)
    }

    fn unmerge(&mut self, l: usize, r: u32, items: &[u32], delta: f64) {
        for &x in items.iter().rev() {
            self.apply(l, x, r);
        }
        self.sigma -= delta;
    }

    fn sample_weighted<R: Rng>(rng: &mut R, weights: impl Iterator<Item = (u32, u64)> + Clone, total: u64) -> Option<u32> {
        if total == 0 {
            return None;
        }
        let mut pick = rng.random_range(0..total);
        for (key, w) in weights {
            if pick < w {
                return Some(key);
            }
            pick -= w;
        }
        None
    }

    /// Neighbourhood-guided draw: random edge of the block to a block on the
    /// other side, then a random edge back.
    fn guided_block<R: Rng>(&self, rng: &mut R, l: usize, r: u32) -> Option<u32> {
        let lv = &self.levels[l];
        let t = Self::sample_weighted(
            rng,
            lv.edges[r as usize].iter().map(|(&k, &v)| (k, v)),
            lv.degree[r as usize],
        )?;
        Self::sample_weighted(rng, lv.edges[t as usize].iter().map(|(&k, &v)| (k, v)), lv.degree[t as usize])
    }

    /// One round of greedy merges at level `l`: every block proposes its best
    /// merge partner, and merges are applied in order of increasing Σ change
    /// (ties by block ids) until each side is down to `targets` blocks.
    /// Returns the number of merges applied.
    pub fn merge_round<R: Rng>(&mut self, rng: &mut R, l: usize, targets: [usize; 2]) -> usize {
        let mut proposals: Vec<(f64, u32, u32)> = Vec::new();
        for side in [Side::Document, Side::Word] {
            let alive = self.alive_blocks(l, side);
            if alive.len() <= targets[side.index()].max(1) {
                continue;
            }
            for &r in &alive {
                let candidates: BTreeSet<u32> = if alive.len() <= EXHAUSTIVE_MERGE {
                    alive.iter().copied().filter(|&s| s != r).collect()
                } else {
                    let mut c = BTreeSet::new();
                    for i in 0..SAMPLED_MERGE {
                        let s = if i % 4 == 3 {
                            Some(alive[rng.random_range(0..alive.len())])
                        } else {
                            self.guided_block(rng, l, r)
                        };
                        if let Some(s) = s.filter(|&s| s != r) {
                            c.insert(s);
                        }
                    }
                    c
                };
                let mut best: Option<(f64, u32)> = None;
                for s in candidates {
                    let (delta, items) = self.merge(l, r, s);
                    self.unmerge(l, r, &items, delta);
                    if best.is_none_or(|(d, _)| delta < d) {
                        best = Some((delta, s));
                    }
                }
                if let Some((d, s)) = best {
                    proposals.push((d, r, s));
                }
            }
        }
        proposals.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));
        let mut merged_into: Vec<Option<u32>> = vec![None; self.levels[l].size.len()];
        let mut applied = 0;
        for (_, r, mut s) in proposals {
            let side = self.levels[l].side[r as usize].index();
            if self.levels[l].blocks[side] as usize <= targets[side].max(1) || self.levels[l].size[r as usize] == 0 {
                continue;
            }
            while let Some(next) = merged_into[s as usize] {
                s = next;
            }
            if s == r {
                continue;
            }
            self.merge(l, r, s);
            merged_into[r as usize] = Some(s);
            applied += 1;
        }
        applied
    }

    fn proposal_probability(&self, l: usize, weights: &[(u32, u64)], k: u64, s: u32, num_blocks: usize) -> f64 {
        let uniform = 1.0 / num_blocks as f64;
        if k == 0 {
            return uniform;
        }
        let lv = &self.levels[l];
        let guided: f64 = weights
            .iter()
            .map(|&(t, w)| {
                let m_ts = lv.edges[t as usize].get(&s).copied().unwrap_or(0);
                (w as f64 / k as f64) * (m_ts as f64 / lv.degree[t as usize] as f64)
            })
            .sum();
        UNIFORM_PROPOSAL * uniform + (1.0 - UNIFORM_PROPOSAL) * guided
    }

    /// One Metropolis–Hastings pass over the alive items of level `l`.
    /// Returns the number of accepted moves.
    pub fn mcmc_pass<R: Rng>(&mut self, rng: &mut R, l: usize, beta: f64) -> usize {
        let mut alive_by_side = [self.alive_blocks(l, Side::Document), self.alive_blocks(l, Side::Word)];
        let mut order: Vec<u32> = (0..self.levels[l].assign.len() as u32)
            .filter(|&x| self.levels[l].item_alive[x as usize])
            .collect();
        order.shuffle(rng);
        let mut accepted = 0;
        for x in order {
            if !self.levels[l].item_alive[x as usize] {
                continue;
            }
            let side = self.levels[l].item_side[x as usize].index();
            let num_blocks = alive_by_side[side].len();
            if num_blocks < 2 {
                continue;
            }
            let r = self.levels[l].assign[x as usize];
            let weights = self.item_block_weights(l, x);
            let k: u64 = weights.iter().map(|&(_, w)| w).sum();
            let s = if k == 0 || rng.random::<f64>() < UNIFORM_PROPOSAL {
                alive_by_side[side][rng.random_range(0..num_blocks)]
            } else {
                let t = Self::sample_weighted(rng, weights.iter().copied(), k).expect("positive weight");
                let lv = &self.levels[l];
                Self::sample_weighted(rng, lv.edges[t as usize].iter().map(|(&a, &b)| (a, b)), lv.degree[t as usize])
                    .expect("neighbour block has edges")
            };
            if s == r {
                continue;
            }
            let forward = self.proposal_probability(l, &weights, k, s, num_blocks);
            let delta = self.move_item(l, x, s);
            let r_died = self.levels[l].size[r as usize] == 0;
            let backward = self.proposal_probability(l, &weights, k, r, num_blocks);
            let ratio = (-beta * delta).exp() * backward / forward;
            if ratio >= 1.0 || rng.random::<f64>() < ratio {
                accepted += 1;
                debug_assert_eq!(self.levels[l].side[s as usize].index(), side);
                if r_died {
                    alive_by_side[side].retain(|&b| b != r);
                }
            } else {
                self.apply(l, x, r);
                self.sigma -= delta;
            }
        }
        accepted
    }
}
