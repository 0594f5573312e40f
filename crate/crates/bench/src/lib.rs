//! Synthetic workloads shared by the benchmarks.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use timeline_core::correlate::to_dissimilarity;
use timeline_core::text::BagOfWords;

/// Documents drawn from `topics` disjoint word ranges; each token stays in
/// its document's range with probability `purity`, otherwise it is uniform.
pub fn mixture_corpus(docs: usize, words: u32, topics: u32, tokens: usize, purity: f64, seed: u64) -> Vec<BagOfWords> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let per = words / topics;
    (0..docs)
        .map(|d| {
            let topic = d as u32 % topics;
            let mut counts: BTreeMap<u32, u32> = BTreeMap::new();
            for _ in 0..tokens {
                let w = if rng.random::<f64>() < purity {
                    topic * per + rng.random_range(0..per)
                } else {
                    rng.random_range(0..words)
                };
                *counts.entry(w).or_default() += 1;
            }
            BagOfWords { segment: d, counts: counts.into_iter().collect() }
        })
        .collect()
}

/// `1 − ρ` dissimilarities between `n` random walks of length `days`.
pub fn random_dissimilarities(n: usize, days: usize, seed: u64) -> Vec<Vec<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let series: Vec<Vec<Option<f64>>> = (0..n)
        .map(|_| {
            let mut x = 0.0;
            (0..days)
                .map(|_| {
                    x += rng.random_range(-1.0..1.0);
                    Some(x)
                })
                .collect()
        })
        .collect();
    (0..n)
        .map(|i| {
            (0..n)
                .map(|j| {
                    if i == j {
                        0.0
                    } else {
                        timeline_core::correlate::pearson(&series[i], &series[j]).map_or(1.0, to_dissimilarity)
                    }
                })
                .collect()
        })
        .collect()
}
