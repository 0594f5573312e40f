//! Per-day series over the collective timeline and their LOESS smoothing.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::annotate::DaySegment;
use crate::text::Corpus;

pub const DEFAULT_T_MAX: u32 = 14;

#[derive(Debug, Error, PartialEq)]
pub enum SeriesError {
    #[error("t_max must be at least 1")]
    InvalidHorizon,
    #[error("span must lie in (0, 1], got {0}")]
    InvalidSpan(f64),
    #[error("local fit of degree {degree} needs at least {needed} points, got {got}")]
    TooFewPoints { degree: usize, needed: usize, got: usize },
    #[error("non-finite input value")]
    NonFinite,
    #[error("document {doc} refers to segment {segment}, but there are only {segments} segments")]
    UnknownSegment { doc: usize, segment: usize, segments: usize },
}

/// How documents of one day are combined into the day's topic row.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Weighting {
    #[default]
    Unweighted,
    /// Weight each document by its token count.
    Length,
}

impl std::str::FromStr for Weighting {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "unweighted" => Ok(Weighting::Unweighted),
            "length" => Ok(Weighting::Length),
            _ => Err(format!("weighting must be unweighted or length, got {s:?}")),
        }
    }
}

/// A modelled document: its source segment and token count.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct DocumentRef {
    pub segment: usize,
    pub tokens: u64,
}

impl DocumentRef {
    pub fn from_corpus(corpus: &Corpus) -> Vec<DocumentRef> {
        corpus.bags.iter().map(|b| DocumentRef { segment: b.segment, tokens: b.len() }).collect()
    }
}

/// Rows are days `1..=t_max`; `None` marks a day without data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DailySeries {
    pub t_max: u32,
    pub num_topics: usize,
    /// Modelled documents per day.
    pub documents: Vec<usize>,
    pub topics: Vec<Option<Vec<f64>>>,
    pub sentiments: Vec<Option<[f64; 10]>>,
}

impl DailySeries {
    pub fn days(&self) -> impl Iterator<Item = u32> {
        1..=self.t_max
    }

    /// `(day, value)` for the days where topic `k` is present.
    pub fn topic_points(&self, k: usize) -> Vec<(f64, f64)> {
        self.topics
            .iter()
            .enumerate()
            .filter_map(|(i, row)| row.as_ref().map(|r| ((i + 1) as f64, r[k])))
            .collect()
    }

    pub fn sentiment_points(&self, e: usize) -> Vec<(f64, f64)> {
        self.sentiments
            .iter()
            .enumerate()
            .filter_map(|(i, row)| row.map(|r| ((i + 1) as f64, r[e])))
            .collect()
    }
}

/// Average p(topic | document) per day and attach the per-day emotion
/// proportions (`None` where undefined). Documents without a day and days
/// beyond `t_max` are ignored.
pub fn build_series(
    topic_given_doc: &[Vec<f64>],
    documents: &[DocumentRef],
    segments: &[DaySegment],
    emotions: &[(u32, Option<[f64; 10]>)],
    t_max: u32,
    weighting: Weighting,
) -> Result<DailySeries, SeriesError> {
    if t_max == 0 {
        return Err(SeriesError::InvalidHorizon);
    }
    let k = topic_given_doc.first().map_or(0, Vec::len);
    let days = t_max as usize;
    let mut sums = vec![vec![0.0; k]; days];
    let mut weights = vec![0.0; days];
    let mut counts = vec![0usize; days];
    for (doc, (r, row)) in documents.iter().zip(topic_given_doc).enumerate() {
        let segment = segments.get(r.segment).ok_or(SeriesError::UnknownSegment {
            doc,
            segment: r.segment,
            segments: segments.len(),
        })?;
        let Some(day) = segment.day.filter(|&d| d >= 1 && d <= t_max) else {
            continue;
        };
        let i = day as usize - 1;
        let w = match weighting {
            Weighting::Unweighted => 1.0,
            Weighting::Length => r.tokens as f64,
        };
        for (s, p) in sums[i].iter_mut().zip(row) {
            *s += w * p;
        }
        weights[i] += w;
        counts[i] += 1;
    }
    let topics = sums
        .into_iter()
        .zip(&weights)
        .map(|(row, &w)| (w > 0.0).then(|| row.into_iter().map(|s| s / w).collect()))
        .collect();
    let mut sentiments = vec![None; days];
    for &(day, proportions) in emotions {
        if day >= 1 && day <= t_max {
            sentiments[day as usize - 1] = proportions;
        }
    }
    Ok(DailySeries { t_max, num_topics: k, documents: counts, topics, sentiments })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LoessConfig {
    pub span: f64,
    pub degree: usize,
    pub grid_points: usize,
}

impl Default for LoessConfig {
    fn default() -> Self {
        LoessConfig { span: 0.75, degree: 2, grid_points: 200 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SmoothedCurve {
    pub grid: Vec<f64>,
    pub fitted: Vec<f64>,
    pub span: f64,
    pub degree: usize,
    /// Grid indices where the local fit was singular and the weighted mean was used.
    pub fallback: Vec<usize>,
}

/// `n` evenly spaced points over `[lo, hi]`; a single point when `lo == hi`.
pub fn even_grid(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    if n <= 1 || lo == hi {
        return vec![lo];
    }
    (0..n).map(|i| if i == n - 1 { hi } else { lo + (hi - lo) * i as f64 / (n - 1) as f64 }).collect()
}

/// Grid over the observed x range of `points`.
pub fn data_grid(points: &[(f64, f64)], n: usize) -> Vec<f64> {
    let lo = points.iter().map(|p| p.0).fold(f64::INFINITY, f64::min);
    let hi = points.iter().map(|p| p.0).fold(f64::NEG_INFINITY, f64::max);
    even_grid(lo, hi, n)
}

fn tricube(u: f64) -> f64 {
    if u >= 1.0 {
        0.0
    } else {
        let t = 1.0 - u * u * u;
        t * t * t
    }
}

/// Weighted least squares of `degree` around `x0`; `None` when rank deficient.
fn local_fit(points: &[(f64, f64)], weights: &[f64], x0: f64, scale: f64, degree: usize) -> Option<f64> {
    let rows: Vec<usize> = (0..points.len()).filter(|&i| weights[i] > 0.0).collect();
    if rows.len() <= degree {
        return None;
    }
    let cols = degree + 1;
    let mut design = DMatrix::zeros(rows.len(), cols);
    let mut target = DVector::zeros(rows.len());
    for (r, &i) in rows.iter().enumerate() {
        let sw = weights[i].sqrt();
        let u = (points[i].0 - x0) / scale;
        let mut power = 1.0;
        for c in 0..cols {
            design[(r, c)] = sw * power;
            power *= u;
        }
        target[r] = sw * points[i].1;
    }
    let qr = design.qr();
    let r = qr.r();
    let diag: Vec<f64> = (0..cols).map(|i| r[(i, i)].abs()).collect();
    let largest = diag.iter().cloned().fold(0.0, f64::max);
    if largest == 0.0 || diag.iter().any(|&d| d <= largest * 1e-10) {
        return None;
    }
    let rhs = qr.q().transpose() * target;
    let beta = r.solve_upper_triangular(&rhs)?;
    Some(beta[0])
}

/// Local polynomial regression with tricube weights over the `ceil(span·n)`
/// nearest points (at least `degree + 2` so the farthest, zero-weight
/// neighbour does not leave the fit underdetermined).
pub fn loess(points: &[(f64, f64)], span: f64, degree: usize, grid: &[f64]) -> Result<SmoothedCurve, SeriesError> {
    if !(span > 0.0 && span <= 1.0) {
        return Err(SeriesError::InvalidSpan(span));
    }
    let n = points.len();
    if n < degree + 1 {
        return Err(SeriesError::TooFewPoints { degree, needed: degree + 1, got: n });
    }
    if points.iter().any(|p| !p.0.is_finite() || !p.1.is_finite()) || grid.iter().any(|x| !x.is_finite()) {
        return Err(SeriesError::NonFinite);
    }
    let q = ((span * n as f64).ceil() as usize).max(degree + 2).min(n);
    let mut fitted = Vec::with_capacity(grid.len());
    let mut fallback = Vec::new();
    let mut distances: Vec<(f64, usize)> = Vec::with_capacity(n);
    for (g, &x0) in grid.iter().enumerate() {
        distances.clear();
        distances.extend(points.iter().enumerate().map(|(i, p)| ((p.0 - x0).abs(), i)));
        distances.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        let h = distances[q - 1].0;
        let mut weights = vec![0.0; n];
        for &(d, i) in &distances[..q] {
            weights[i] = if h > 0.0 { tricube(d / h) } else { 1.0 };
        }
        let scale = if h > 0.0 { h } else { 1.0 };
        let value = match local_fit(points, &weights, x0, scale, degree) {
            Some(v) => v,
            None => {
                fallback.push(g);
                let total: f64 = weights.iter().sum();
                if total > 0.0 {
                    points.iter().zip(&weights).map(|(p, w)| p.1 * w).sum::<f64>() / total
                } else {
                    distances[..q].iter().map(|&(_, i)| points[i].1).sum::<f64>() / q as f64
                }
            }
        };
        fitted.push(value);
    }
    Ok(SmoothedCurve { grid: grid.to_vec(), fitted, span, degree, fallback })
}
