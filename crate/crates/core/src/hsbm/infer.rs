//! Agglomerative initialization followed by Metropolis–Hastings sweeps.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::engine::Engine;
use super::graph::BipartiteGraph;
use super::state::BlockState;
use super::HsbmError;

const MAX_LEVELS: usize = 64;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InferConfig {
    pub seed: u64,
    pub sweeps: usize,
    /// Merge rounds per hierarchy level.
    pub merge_passes: usize,
    /// Inverse temperature of the acceptance rule.
    pub beta: f64,
}

impl Default for InferConfig {
    fn default() -> Self {
        InferConfig { seed: 42, sweeps: 1000, merge_passes: 10, beta: 1.0 }
    }
}

impl InferConfig {
    pub fn validate(&self) -> Result<(), HsbmError> {
        if self.sweeps == 0 {
            return Err(HsbmError::InvalidConfig("sweeps must be at least 1".into()));
        }
        if !(self.beta.is_finite() && self.beta > 0.0) {
            return Err(HsbmError::InvalidConfig(format!("beta must be positive, got {}", self.beta)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InferenceRun {
    pub state: BlockState,
    /// Best description length after initialization and after every sweep.
    pub trace: Vec<f64>,
    pub accepted_moves: u64,
}

struct Best {
    sigma: f64,
    partitions: Vec<Vec<u32>>,
    trace: Vec<f64>,
}

impl Best {
    fn offer(&mut self, engine: &Engine) {
        if engine.sigma < self.sigma {
            self.sigma = engine.sigma;
            self.partitions = engine.export();
        }
    }

    fn record(&mut self) {
        self.trace.push(self.sigma);
    }
}

fn identity(n: usize) -> Vec<u32> {
    (0..n as u32).collect()
}

/// Collapse level `level` towards one block per side over `rounds` merge
/// rounds on a geometric schedule, relaxing with one sweep after each, and
/// keep the best state seen. Returns the engine and the number of blocks
/// removed at that level.
fn merge_level<'g>(
    graph: &'g BipartiteGraph,
    mut engine: Engine<'g>,
    rng: &mut ChaCha8Rng,
    level: usize,
    config: &InferConfig,
) -> (Engine<'g>, u64) {
    let start = engine.block_counts(level);
    let mut best = (engine.sigma, engine.export(), start);
    let rounds = config.merge_passes.max(1);
    for round in 1..=rounds {
        let keep = 1.0 - round as f64 / rounds as f64;
        let targets = start.map(|b| ((b as f64).powf(keep).ceil() as usize).max(1));
        engine.merge_round(rng, level, targets);
        engine.mcmc_pass(rng, level, config.beta);
        engine.sigma = engine.full_sigma();
        let counts = engine.block_counts(level);
        if engine.sigma < best.0 {
            best = (engine.sigma, engine.export(), counts);
        }
        if counts.iter().all(|&b| b <= 1) {
            break;
        }
    }
    let removed = start.iter().sum::<u64>() - best.2.iter().sum::<u64>();
    (Engine::new(graph, &best.1), removed)
}

/// Build the hierarchy bottom-up: collapse singletons at level 0, then
/// repeatedly stack an identity level under the top and collapse its blocks,
/// until a level keeps no merge or reaches one block per side.
fn agglomerate<'g>(graph: &'g BipartiteGraph, rng: &mut ChaCha8Rng, config: &InferConfig) -> Result<Engine<'g>, HsbmError> {
    let base = BlockState::from_partitions(graph, vec![identity(graph.num_nodes())])?;
    let (mut engine, _) = merge_level(graph, Engine::new(graph, &base.partitions()), rng, 0, config);
    while engine.num_levels() < MAX_LEVELS {
        let mut parts = engine.export();
        if parts.len() < 2 {
            break;
        }
        let below = parts.len() - 2;
        let [docs, words] = engine.block_counts(below);
        if docs <= 1 && words <= 1 {
            // level below the top already closed: drop the redundant top
            parts.pop();
            engine = Engine::new(graph, &parts);
            break;
        }
        let blocks = (docs + words) as usize;
        parts.insert(below + 1, identity(blocks));
        let (next, merged) = merge_level(graph, Engine::new(graph, &parts), rng, below + 1, config);
        if merged == 0 {
            break;
        }
        let [docs, words] = next.block_counts(below + 1);
        engine = next;
        if docs <= 1 && words <= 1 {
            let mut parts = engine.export();
            parts.pop();
            engine = Engine::new(graph, &parts);
            break;
        }
    }
    Ok(engine)
}

/// Drop levels above the first one that already has one block per side.
fn trim_closed_levels(mut partitions: Vec<Vec<u32>>) -> Vec<Vec<u32>> {
    // with both sides present, at most two blocks means one per side
    let closed = |assignment: &Vec<u32>| assignment.iter().max().is_none_or(|&b| b <= 1);
    if let Some(first) = partitions.iter().position(closed) {
        partitions.truncate(first + 1);
    }
    partitions
}

/// Minimize the description length of a nested block state; deterministic
/// for a fixed graph and config. Returns the best state observed.
pub fn infer(graph: &BipartiteGraph, config: &InferConfig) -> Result<InferenceRun, HsbmError> {
    config.validate()?;
    if graph.num_edges() == 0 {
        return Err(HsbmError::EmptyGraph);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut engine = agglomerate(graph, &mut rng, config)?;
    let mut best = Best { sigma: engine.sigma, partitions: engine.export(), trace: Vec::new() };
    best.record();
    let mut accepted_moves = 0u64;
    for _ in 0..config.sweeps {
        for level in 0..engine.num_levels() - 1 {
            accepted_moves += engine.mcmc_pass(&mut rng, level, config.beta) as u64;
        }
        // drop accumulated rounding from the incremental updates
        engine.sigma = engine.full_sigma();
        best.offer(&engine);
        best.record();
    }
    let state = BlockState::from_partitions(graph, trim_closed_levels(best.partitions))?;
    log::debug!(
        "inference: {} levels, description length {:.6} nats, {} accepted moves",
        state.num_levels(),
        state.description_length,
        accepted_moves
    );
    Ok(InferenceRun { state, trace: best.trace, accepted_moves })
}
