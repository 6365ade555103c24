//! Cross-modal derived features.
//!
//! From the standardized single-modal vectors (viewed as scalar sequences)
//! two features are built: a relation graph whose edge weights are pairwise
//! DTW distances, and an attention feature that, for each benchmark modality,
//! adds a distance-weighted sum of path-aligned partner values to the
//! benchmark vector and concatenates the results.

use serde::{Deserialize, Serialize};

use crate::dtw::dtw;
use crate::error::{Error, Result};

/// Sign applied to distances inside the attention softmax.
///
/// `Negative` (default) gives closer features larger weight; `Positive` is
/// the literal softmax over raw distances.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SoftmaxSign {
    Negative,
    Positive,
}

impl Default for SoftmaxSign {
    fn default() -> Self {
        SoftmaxSign::Negative
    }
}

impl SoftmaxSign {
    fn factor(self) -> f64 {
        match self {
            SoftmaxSign::Negative => -1.0,
            SoftmaxSign::Positive => 1.0,
        }
    }
}

/// Weighted undirected graph over the single-modal features.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RelationGraph {
    /// Symmetric, zero-diagonal, non-negative; node order follows the input.
    pub adjacency: Vec<Vec<f64>>,
}

impl RelationGraph {
    pub fn order(&self) -> usize {
        self.adjacency.len()
    }

    /// Row-major flattening, the form fed to the fusion model.
    pub fn flatten(&self) -> Vec<f64> {
        self.adjacency.iter().flatten().copied().collect()
    }
}

/// Concatenation of per-benchmark attended vectors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttentionFeature {
    pub vector: Vec<f64>,
    /// Benchmark block lengths, in input order.
    pub dims: Vec<usize>,
}

/// Pairwise DTW distance matrix over the feature vectors.
pub fn relation_graph(feats: &[Vec<f64>]) -> Result<RelationGraph> {
    if feats.is_empty() {
        return Err(Error::Data("relation_graph requires at least one feature".into()));
    }
    let q = feats.len();
    let mut adjacency = vec![vec![0.0; q]; q];
    for i in 0..q {
        for j in (i + 1)..q {
            let d = dtw(&feats[i], &feats[j])?.distance;
            adjacency[i][j] = d;
            adjacency[j][i] = d;
        }
    }
    Ok(RelationGraph { adjacency })
}

/// Softmax weights over a distance set (self-distance included at its index).
pub fn attention_weights(distances: &[f64], sign: SoftmaxSign) -> Vec<f64> {
    let s = sign.factor();
    let scaled: Vec<f64> = distances.iter().map(|d| s * d).collect();
    let max = scaled.iter().fold(f64::NEG_INFINITY, |m, &v| m.max(v));
    let exps: Vec<f64> = scaled.iter().map(|v| (v - max).exp()).collect();
    let total: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / total).collect()
}

/// Partner values aligned to each benchmark index along the optimal warping
/// path; values mapped to the same index are averaged.
fn aligned_means(benchmark: &[f64], partner: &[f64]) -> Result<(f64, Vec<f64>)> {
    let result = dtw(benchmark, partner)?;
    let mut sums = vec![0.0; benchmark.len()];
    let mut counts = vec![0usize; benchmark.len()];
    for &(e, f) in &result.path.pairs {
        sums[e - 1] += partner[f - 1];
        counts[e - 1] += 1;
    }
    let means = sums
        .into_iter()
        .zip(counts)
        .map(|(s, c)| s / c as f64)
        .collect();
    Ok((result.distance, means))
}

/// One benchmark's attended vector: the benchmark plus the weighted sum of
/// path-aligned partner means.
pub fn attended_vector(
    benchmark_index: usize,
    feats: &[Vec<f64>],
    sign: SoftmaxSign,
) -> Result<Vec<f64>> {
    let benchmark = &feats[benchmark_index];
    let mut distances = Vec::with_capacity(feats.len());
    let mut aligned = Vec::with_capacity(feats.len());
    for partner in feats {
        let (d, means) = aligned_means(benchmark, partner)?;
        distances.push(d);
        aligned.push(means);
    }
    let weights = attention_weights(&distances, sign);

    let mut out = benchmark.clone();
    for (w, means) in weights.iter().zip(&aligned) {
        for (o, m) in out.iter_mut().zip(means) {
            *o += w * m;
        }
    }
    Ok(out)
}

/// The full attention feature: attended vectors for every benchmark,
/// concatenated in input order.
pub fn attention_feature(feats: &[Vec<f64>], sign: SoftmaxSign) -> Result<AttentionFeature> {
    if feats.is_empty() {
        return Err(Error::Data("attention_feature requires at least one feature".into()));
    }
    let mut vector = Vec::new();
    let mut dims = Vec::with_capacity(feats.len());
    for k in 0..feats.len() {
        let block = attended_vector(k, feats, sign)?;
        dims.push(block.len());
        vector.extend(block);
    }
    Ok(AttentionFeature { vector, dims })
}
