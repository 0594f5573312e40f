//! Pearson correlation between per-day series, hierarchical clustering of the
//! labels and a two-dimensional metric MDS embedding with `d = 1 − ρ`.

use std::collections::BTreeMap;

use nalgebra::{DMatrix, Matrix2, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const MDS_MAX_ITERATIONS: usize = 1000;
pub const MDS_TOLERANCE: f64 = 1e-9;
const SYMMETRY_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Error, PartialEq)]
pub enum CorrelateError {
    #[error("clustering needs at least 2 labels, got {0}")]
    TooFewLabels(usize),
    #[error("dissimilarity matrix is {rows}x{cols}, expected {labels}x{labels}")]
    Shape { rows: usize, cols: usize, labels: usize },
    #[error("dissimilarity matrix is not symmetric at ({0}, {1})")]
    NotSymmetric(usize, usize),
    #[error("dissimilarity matrix has non-zero diagonal at {0}")]
    NonZeroDiagonal(usize),
    #[error("dissimilarity ({0}, {1}) is negative or not finite")]
    InvalidEntry(usize, usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LabelKind {
    Topic,
    Sentiment,
}

impl LabelKind {
    pub fn name(self) -> &'static str {
        match self {
            LabelKind::Topic => "topic",
            LabelKind::Sentiment => "sentiment",
        }
    }
}

/// Product-moment correlation over the positions where both series are
/// present. `None` with fewer than two such positions or a constant series.
pub fn pearson(x: &[Option<f64>], y: &[Option<f64>]) -> Option<f64> {
    let pairs: Vec<(f64, f64)> = x.iter().zip(y).filter_map(|(a, b)| Some(((*a)?, (*b)?))).collect();
    if pairs.len() < 2 {
        return None;
    }
    let n = pairs.len() as f64;
    let mx = pairs.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pairs.iter().map(|p| p.1).sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for &(a, b) in &pairs {
        let (dx, dy) = (a - mx, b - my);
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if sxx == 0.0 || syy == 0.0 {
        return None;
    }
    Some((sxy / (sxx * syy).sqrt()).clamp(-1.0, 1.0))
}

pub fn to_dissimilarity(rho: f64) -> f64 {
    1.0 - rho
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrelationMatrix {
    pub labels: Vec<String>,
    pub kinds: Vec<LabelKind>,
    /// `None` where the correlation is undefined; the diagonal is 1 for
    /// non-constant series.
    pub values: Vec<Vec<Option<f64>>>,
}

impl CorrelationMatrix {
    pub fn from_series(labels: Vec<String>, kinds: Vec<LabelKind>, series: &[Vec<Option<f64>>]) -> Self {
        let n = labels.len();
        let mut values = vec![vec![None; n]; n];
        for i in 0..n {
            for j in i..n {
                let rho = if i == j { pearson(&series[i], &series[i]).map(|_| 1.0) } else { pearson(&series[i], &series[j]) };
                values[i][j] = rho;
                values[j][i] = rho;
            }
        }
        CorrelationMatrix { labels, kinds, values }
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    /// Drop labels until every correlation is defined: repeatedly remove the
    /// label with the most undefined entries (ties: the lexicographically
    /// largest label). Returns the complete matrix and the dropped labels.
    pub fn complete(&self) -> (CorrelationMatrix, Vec<String>) {
        let mut keep: Vec<usize> = (0..self.len()).collect();
        let mut dropped = Vec::new();
        loop {
            let missing = |i: usize| keep.iter().filter(|&&j| self.values[i][j].is_none()).count();
            let worst = keep
                .iter()
                .copied()
                .map(|i| (missing(i), i))
                .filter(|&(m, _)| m > 0)
                .max_by(|a, b| a.0.cmp(&b.0).then(self.labels[a.1].cmp(&self.labels[b.1])));
            match worst {
                Some((_, i)) => {
                    dropped.push(self.labels[i].clone());
                    keep.retain(|&j| j != i);
                }
                None => break,
            }
        }
        let sub = CorrelationMatrix {
            labels: keep.iter().map(|&i| self.labels[i].clone()).collect(),
            kinds: keep.iter().map(|&i| self.kinds[i]).collect(),
            values: keep.iter().map(|&i| keep.iter().map(|&j| self.values[i][j]).collect()).collect(),
        };
        (sub, dropped)
    }

    /// `1 − ρ`; undefined entries become NaN.
    pub fn dissimilarities(&self) -> Vec<Vec<f64>> {
        self.values
            .iter()
            .enumerate()
            .map(|(i, row)| {
                row.iter()
                    .enumerate()
                    .map(|(j, v)| if i == j { 0.0 } else { v.map_or(f64::NAN, to_dissimilarity) })
                    .collect()
            })
            .collect()
    }
}

fn check_dissimilarities(d: &[Vec<f64>], labels: usize) -> Result<(), CorrelateError> {
    if d.len() != labels || d.iter().any(|r| r.len() != labels) {
        return Err(CorrelateError::Shape { rows: d.len(), cols: d.first().map_or(0, Vec::len), labels });
    }
    for i in 0..labels {
        if d[i][i] != 0.0 {
            return Err(CorrelateError::NonZeroDiagonal(i));
        }
        for j in 0..labels {
            if !(d[i][j].is_finite() && d[i][j] >= 0.0) {
                return Err(CorrelateError::InvalidEntry(i, j));
            }
            if (d[i][j] - d[j][i]).abs() > SYMMETRY_TOLERANCE {
                return Err(CorrelateError::NotSymmetric(i, j));
            }
        }
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Linkage {
    #[default]
    Average,
    Complete,
}

impl std::str::FromStr for Linkage {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "average" => Ok(Linkage::Average),
            "complete" => Ok(Linkage::Complete),
            _ => Err(format!("linkage must be average or complete, got {s:?}")),
        }
    }
}

/// One agglomeration step. Node ids below the number of labels are leaves;
/// id `n + i` is the cluster formed by merge `i`. The tighter child comes first.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Merge {
    pub left: usize,
    pub right: usize,
    pub height: f64,
    pub size: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterTree {
    pub labels: Vec<String>,
    pub linkage: Linkage,
    pub merges: Vec<Merge>,
    /// Label indices in dendrogram order.
    pub leaf_order: Vec<usize>,
}

impl ClusterTree {
    pub fn leaf_labels(&self) -> Vec<&str> {
        self.leaf_order.iter().map(|&i| self.labels[i].as_str()).collect()
    }
}

struct Cluster {
    members: Vec<usize>,
    height: f64,
    min_label: String,
}

pub fn cluster(labels: &[String], d: &[Vec<f64>], linkage: Linkage) -> Result<ClusterTree, CorrelateError> {
    let n = labels.len();
    if n < 2 {
        return Err(CorrelateError::TooFewLabels(n));
    }
    check_dissimilarities(d, n)?;
    let mut nodes: BTreeMap<usize, Cluster> = (0..n)
        .map(|i| (i, Cluster { members: vec![i], height: 0.0, min_label: labels[i].clone() }))
        .collect();
    let distance = |a: &Cluster, b: &Cluster| -> f64 {
        let pairs = a.members.iter().flat_map(|&i| b.members.iter().map(move |&j| d[i][j]));
        match linkage {
            Linkage::Average => pairs.sum::<f64>() / (a.members.len() * b.members.len()) as f64,
            Linkage::Complete => pairs.fold(0.0, f64::max),
        }
    };
    let mut merges = Vec::with_capacity(n - 1);
    while nodes.len() > 1 {
        let ids: Vec<usize> = nodes.keys().copied().collect();
        let mut best: Option<(f64, &str, &str, usize, usize)> = None;
        for (x, &a) in ids.iter().enumerate() {
            for &b in &ids[x + 1..] {
                let (ca, cb) = (&nodes[&a], &nodes[&b]);
                let (first, second) = if ca.min_label <= cb.min_label { (a, b) } else { (b, a) };
                let key = (distance(ca, cb), nodes[&first].min_label.as_str(), nodes[&second].min_label.as_str());
                let better = match &best {
                    None => true,
                    Some(cur) => key.0.total_cmp(&cur.0).then(key.1.cmp(cur.1)).then(key.2.cmp(cur.2)).is_lt(),
                };
                if better {
                    best = Some((key.0, key.1, key.2, first, second));
                }
            }
        }
        let (height, _, _, a, b) = best.expect("at least two clusters");
        let ca = nodes.remove(&a).unwrap();
        let cb = nodes.remove(&b).unwrap();
        let a_first = ca.height.total_cmp(&cb.height).then(ca.min_label.cmp(&cb.min_label)).is_le();
        let ((left, cl), (right, cr)) = if a_first { ((a, ca), (b, cb)) } else { ((b, cb), (a, ca)) };
        let mut members = cl.members;
        members.extend(cr.members);
        let min_label = cl.min_label.min(cr.min_label);
        merges.push(Merge { left, right, height, size: members.len() });
        nodes.insert(n + merges.len() - 1, Cluster { members, height, min_label });
    }
    let root = nodes.into_values().next().unwrap();
    Ok(ClusterTree { labels: labels.to_vec(), linkage, merges, leaf_order: root.members })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MdsEmbedding {
    pub labels: Vec<String>,
    pub coords: Vec<[f64; 2]>,
    /// Raw stress `Σ_{i<j} (d_ij − ‖x_i − x_j‖)²` of `coords`.
    pub stress: f64,
    pub iterations: usize,
    /// Stress of the start and of every accepted iteration.
    pub stress_history: Vec<f64>,
}

fn stress(d: &[Vec<f64>], x: &[[f64; 2]]) -> f64 {
    let mut s = 0.0;
    for i in 0..x.len() {
        for j in i + 1..x.len() {
            let r = d[i][j] - dist(x[i], x[j]);
            s += r * r;
        }
    }
    s
}

fn dist(a: [f64; 2], b: [f64; 2]) -> f64 {
    ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)).sqrt()
}

/// Torgerson scaling: top two eigenvectors of the double-centred squared
/// dissimilarities, scaled by the square roots of their (non-negative) eigenvalues.
fn classical_scaling(d: &[Vec<f64>]) -> Vec<[f64; 2]> {
    let n = d.len();
    let sq = DMatrix::from_fn(n, n, |i, j| d[i][j] * d[i][j]);
    let row_means: Vec<f64> = (0..n).map(|i| sq.row(i).sum() / n as f64).collect();
    let grand = row_means.iter().sum::<f64>() / n as f64;
    let b = DMatrix::from_fn(n, n, |i, j| -0.5 * (sq[(i, j)] - row_means[i] - row_means[j] + grand));
    let eig = SymmetricEigen::new(b);
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &c| eig.eigenvalues[c].total_cmp(&eig.eigenvalues[a]).then(a.cmp(&c)));
    let mut x = vec![[0.0; 2]; n];
    for (axis, &k) in order.iter().take(2).enumerate() {
        let scale = eig.eigenvalues[k].max(0.0).sqrt();
        for i in 0..n {
            x[i][axis] = eig.eigenvectors[(i, k)] * scale;
        }
    }
    x
}

fn guttman(d: &[Vec<f64>], x: &[[f64; 2]]) -> Vec<[f64; 2]> {
    let n = x.len();
    let mut out = vec![[0.0; 2]; n];
    for i in 0..n {
        let mut diag = 0.0;
        for j in 0..n {
            if i == j {
                continue;
            }
            let delta = dist(x[i], x[j]);
            let bij = if delta > 0.0 { -d[i][j] / delta } else { 0.0 };
            diag -= bij;
            out[i][0] += bij * x[j][0];
            out[i][1] += bij * x[j][1];
        }
        out[i][0] += diag * x[i][0];
        out[i][1] += diag * x[i][1];
    }
    for p in &mut out {
        p[0] /= n as f64;
        p[1] /= n as f64;
    }
    out
}

/// Center, rotate onto the principal axes and reflect so the first point
/// lies in the closed positive quadrant.
fn orient(x: &mut [[f64; 2]]) {
    let n = x.len() as f64;
    let mean = [x.iter().map(|p| p[0]).sum::<f64>() / n, x.iter().map(|p| p[1]).sum::<f64>() / n];
    for p in x.iter_mut() {
        p[0] -= mean[0];
        p[1] -= mean[1];
    }
    let mut cov = Matrix2::<f64>::zeros();
    for p in x.iter() {
        cov[(0, 0)] += p[0] * p[0];
        cov[(0, 1)] += p[0] * p[1];
        cov[(1, 1)] += p[1] * p[1];
    }
    cov[(1, 0)] = cov[(0, 1)];
    let eig = SymmetricEigen::new(cov);
    let (major, minor) = if eig.eigenvalues[0] >= eig.eigenvalues[1] { (0, 1) } else { (1, 0) };
    let axes = [eig.eigenvectors.column(major).into_owned(), eig.eigenvectors.column(minor).into_owned()];
    for p in x.iter_mut() {
        let q = [p[0] * axes[0][0] + p[1] * axes[0][1], p[0] * axes[1][0] + p[1] * axes[1][1]];
        *p = q;
    }
    if let Some(first) = x.first().copied() {
        for axis in 0..2 {
            if first[axis] < 0.0 {
                for p in x.iter_mut() {
                    p[axis] = -p[axis];
                }
            }
        }
    }
    for p in x.iter_mut() {
        for v in p.iter_mut() {
            if *v == 0.0 {
                *v = 0.0; // normalise -0.0
            }
        }
    }
}

/// Metric MDS by stress majorization from a classical-scaling start. The
/// seed only matters when the classical start collapses to a single point.
pub fn mds(labels: &[String], d: &[Vec<f64>], seed: u64) -> Result<MdsEmbedding, CorrelateError> {
    let n = labels.len();
    check_dissimilarities(d, n)?;
    if n <= 1 {
        return Ok(MdsEmbedding {
            labels: labels.to_vec(),
            coords: vec![[0.0; 2]; n],
            stress: 0.0,
            iterations: 0,
            stress_history: vec![0.0],
        });
    }
    let mut x = classical_scaling(d);
    let collapsed = (0..n).all(|i| (0..n).all(|j| dist(x[i], x[j]) == 0.0));
    if collapsed && d.iter().flatten().any(|&v| v > 0.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for p in &mut x {
            *p = [rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)];
        }
    }
    let mut current = stress(d, &x);
    let mut history = vec![current];
    let mut iterations = 0;
    while iterations < MDS_MAX_ITERATIONS && current > 0.0 {
        let next = guttman(d, &x);
        let s = stress(d, &next);
        if s > current {
            break;
        }
        iterations += 1;
        history.push(s);
        x = next;
        let relative = (current - s) / current;
        current = s;
        if relative < MDS_TOLERANCE {
            break;
        }
    }
    orient(&mut x);
    let final_stress = stress(d, &x);
    Ok(MdsEmbedding { labels: labels.to_vec(), coords: x, stress: final_stress, iterations, stress_history: history })
}

/// For each topic label, the sentiment label closest in the embedding;
/// ties go to the lexicographically smallest sentiment.
pub fn nearest_sentiment_coloring(embedding: &MdsEmbedding, kinds: &[LabelKind]) -> BTreeMap<String, String> {
    let sentiments: Vec<usize> = (0..kinds.len()).filter(|&i| kinds[i] == LabelKind::Sentiment).collect();
    let mut out = BTreeMap::new();
    for (i, kind) in kinds.iter().enumerate() {
        if *kind != LabelKind::Topic {
            continue;
        }
        let nearest = sentiments.iter().min_by(|&&a, &&b| {
            dist(embedding.coords[i], embedding.coords[a])
                .total_cmp(&dist(embedding.coords[i], embedding.coords[b]))
                .then(embedding.labels[a].cmp(&embedding.labels[b]))
        });
        if let Some(&s) = nearest {
            out.insert(embedding.labels[i].clone(), embedding.labels[s].clone());
        }
    }
    out
}
