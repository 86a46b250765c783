//! Objective metrics: Fréchet distance between Gaussian fits of embedding
//! sets, KL divergence between label distributions, cosine similarity and
//! rank-based cross-modal alignment scoring.

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Tolerance on `|A - Aᵀ|` accepted as symmetric.
pub const SYMMETRY_TOLERANCE: f64 = 1e-9;
/// Probability mass added to every label before renormalizing.
pub const KL_EPSILON: f64 = 1e-10;
pub const DISTRIBUTION_TOLERANCE: f64 = 1e-6;
const NEGATIVE_EIGEN_TOLERANCE: f64 = -1e-9;
const REGULARIZATION: f64 = 1e-10;

#[derive(Debug, Clone, Error, PartialEq)]
pub enum MetricError {
    #[error("dimension mismatch: {left} vs {right}")]
    DimensionMismatch { left: usize, right: usize },
    #[error("need at least {needed} samples, got {got}")]
    InsufficientSamples { needed: usize, got: usize },
    #[error("matrix is not symmetric (max asymmetry {0:e})")]
    NotSymmetric(f64),
    #[error("matrix is not square ({rows}x{cols})")]
    NotSquare { rows: usize, cols: usize },
    #[error("label sets differ")]
    LabelMismatch,
    #[error("zero vector has no direction")]
    ZeroVector,
    #[error("item {item} has no similarity for system `{system}`")]
    MissingSimilarity { item: usize, system: String },
    #[error("need at least 2 systems to rank, got {0}")]
    TooFewSystems(usize),
    #[error("invalid value: {0}")]
    InvalidValue(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct EmbeddingVector(Vec<f64>);

impl EmbeddingVector {
    pub fn new(values: Vec<f64>) -> Result<Self, MetricError> {
        if values.is_empty() {
            return Err(MetricError::InvalidValue("embedding is empty".to_string()));
        }
        if let Some(v) = values.iter().find(|v| !v.is_finite()) {
            return Err(MetricError::InvalidValue(format!("embedding contains {v}")));
        }
        Ok(Self(values))
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    fn norm(&self) -> f64 {
        self.0.iter().map(|v| v * v).sum::<f64>().sqrt()
    }
}

impl TryFrom<Vec<f64>> for EmbeddingVector {
    type Error = MetricError;

    fn try_from(values: Vec<f64>) -> Result<Self, Self::Error> {
        Self::new(values)
    }
}

impl From<EmbeddingVector> for Vec<f64> {
    fn from(v: EmbeddingVector) -> Self {
        v.0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabelDistribution {
    probs: Vec<f64>,
    labels: Vec<String>,
}

impl LabelDistribution {
    pub fn new(probs: Vec<f64>, labels: Vec<String>) -> Result<Self, MetricError> {
        if probs.is_empty() {
            return Err(MetricError::InvalidValue("distribution is empty".to_string()));
        }
        if probs.len() != labels.len() {
            return Err(MetricError::InvalidValue(format!(
                "{} probabilities for {} labels",
                probs.len(),
                labels.len()
            )));
        }
        if let Some(p) = probs.iter().find(|p| !(p.is_finite() && **p >= 0.0)) {
            return Err(MetricError::InvalidValue(format!(
                "probability {p} is not a finite non-negative number"
            )));
        }
        let total: f64 = probs.iter().sum();
        if (total - 1.0).abs() > DISTRIBUTION_TOLERANCE {
            return Err(MetricError::InvalidValue(format!(
                "probabilities sum to {total}, not 1"
            )));
        }
        Ok(Self { probs, labels })
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }
}

/// Mean and covariance of a set of embeddings.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianStats {
    pub mean: DVector<f64>,
    pub covariance: DMatrix<f64>,
    pub sample_count: usize,
}

impl GaussianStats {
    /// Stats with the given moments, for closed-form comparisons.
    pub fn from_moments(mean: DVector<f64>, covariance: DMatrix<f64>) -> Result<Self, MetricError> {
        if covariance.nrows() != mean.len() || covariance.ncols() != mean.len() {
            return Err(MetricError::DimensionMismatch {
                left: mean.len(),
                right: covariance.nrows(),
            });
        }
        check_symmetric(&covariance)?;
        Ok(Self {
            mean,
            covariance,
            sample_count: 0,
        })
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }
}

/// Arithmetic mean and unbiased (n − 1) sample covariance, symmetrized.
pub fn fit_gaussian(embeddings: &[EmbeddingVector]) -> Result<GaussianStats, MetricError> {
    let n = embeddings.len();
    if n < 2 {
        return Err(MetricError::InsufficientSamples { needed: 2, got: n });
    }
    let dim = embeddings[0].dim();
    if let Some(bad) = embeddings.iter().find(|e| e.dim() != dim) {
        return Err(MetricError::DimensionMismatch {
            left: dim,
            right: bad.dim(),
        });
    }
    let data = DMatrix::from_fn(n, dim, |r, c| embeddings[r].values()[c]);
    let mean = DVector::from_fn(dim, |c, _| data.column(c).mean());
    let mut centered = data;
    for mut row in centered.row_iter_mut() {
        row -= mean.transpose();
    }
    let cov = centered.tr_mul(&centered) / (n as f64 - 1.0);
    let covariance = (&cov + cov.transpose()) * 0.5;
    Ok(GaussianStats {
        mean,
        covariance,
        sample_count: n,
    })
}

fn check_symmetric(m: &DMatrix<f64>) -> Result<(), MetricError> {
    if !m.is_square() {
        return Err(MetricError::NotSquare {
            rows: m.nrows(),
            cols: m.ncols(),
        });
    }
    if let Some(v) = m.iter().find(|v| !v.is_finite()) {
        return Err(MetricError::InvalidValue(format!("matrix contains {v}")));
    }
    let asym = (m - m.transpose()).amax();
    if asym > SYMMETRY_TOLERANCE {
        return Err(MetricError::NotSymmetric(asym));
    }
    Ok(())
}

/// Eigenvalues of a symmetric matrix with negatives clamped to zero, and
/// the eigenvectors.
fn clamped_eigen(m: &DMatrix<f64>) -> (DVector<f64>, DMatrix<f64>) {
    let sym = (m + m.transpose()) * 0.5;
    let eigen = sym.symmetric_eigen();
    (eigen.eigenvalues.map(|l| l.max(0.0)), eigen.eigenvectors)
}

/// Principal square root of a symmetric positive semi-definite matrix,
/// `U·diag(√λ)·Uᵀ` with negative eigenvalues clamped to zero.
pub fn matrix_sqrt_psd(m: &DMatrix<f64>) -> Result<DMatrix<f64>, MetricError> {
    check_symmetric(m)?;
    let (values, vectors) = clamped_eigen(m);
    let root = &vectors * DMatrix::from_diagonal(&values.map(f64::sqrt)) * vectors.transpose();
    Ok((&root + root.transpose()) * 0.5)
}

/// `‖μa − μb‖² + tr Σa + tr Σb − 2·tr((Σa^½ Σb Σa^½)^½)`, clamped at zero.
pub fn frechet_distance(a: &GaussianStats, b: &GaussianStats) -> Result<f64, MetricError> {
    if a.dim() != b.dim() {
        return Err(MetricError::DimensionMismatch {
            left: a.dim(),
            right: b.dim(),
        });
    }
    let mean_term = (&a.mean - &b.mean).norm_squared();
    let root_a = matrix_sqrt_psd(&a.covariance)?;
    let product = &root_a * &b.covariance * &root_a;
    let mut product = (&product + product.transpose()) * 0.5;
    let min_eigen = product.clone().symmetric_eigenvalues().min();
    if min_eigen < NEGATIVE_EIGEN_TOLERANCE {
        let dim = product.nrows();
        product += DMatrix::identity(dim, dim) * REGULARIZATION;
    }
    let (values, _) = clamped_eigen(&product);
    let cross = values.iter().map(|l| l.sqrt()).sum::<f64>();
    let distance = mean_term + a.covariance.trace() + b.covariance.trace() - 2.0 * cross;
    Ok(distance.max(0.0))
}

fn smoothed(probs: &[f64]) -> Vec<f64> {
    let total: f64 = probs.iter().map(|p| p + KL_EPSILON).sum();
    probs.iter().map(|p| (p + KL_EPSILON) / total).collect()
}

/// `KL(p ‖ q)` in nats after ε-smoothing both sides. `p` is the reference.
pub fn kl_divergence(p: &LabelDistribution, q: &LabelDistribution) -> Result<f64, MetricError> {
    if p.labels != q.labels {
        return Err(MetricError::LabelMismatch);
    }
    let ps = smoothed(&p.probs);
    let qs = smoothed(&q.probs);
    let kl = ps.iter().zip(&qs).map(|(p, q)| p * (p / q).ln()).sum::<f64>();
    Ok(kl.max(0.0))
}

pub fn cosine_similarity(a: &EmbeddingVector, b: &EmbeddingVector) -> Result<f64, MetricError> {
    if a.dim() != b.dim() {
        return Err(MetricError::DimensionMismatch {
            left: a.dim(),
            right: b.dim(),
        });
    }
    let (na, nb) = (a.norm(), b.norm());
    if na == 0.0 || nb == 0.0 {
        return Err(MetricError::ZeroVector);
    }
    let dot: f64 = a.values().iter().zip(b.values()).map(|(x, y)| x * y).sum();
    Ok((dot / (na * nb)).clamp(-1.0, 1.0))
}

/// Ranks (1-based, best first) with tied values sharing their average rank.
pub fn average_ranks_descending(values: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&i, &j| values[j].total_cmp(&values[i]));
    let mut ranks = vec![0.0; values.len()];
    let mut start = 0;
    while start < order.len() {
        let mut end = start + 1;
        while end < order.len() && values[order[end]] == values[order[start]] {
            end += 1;
        }
        // positions start..end hold ranks start+1..=end
        let rank = (start + 1 + end) as f64 / 2.0;
        for &i in &order[start..end] {
            ranks[i] = rank;
        }
        start = end;
    }
    ranks
}

/// Per-item scores `(K − rank) / (K − 1)` averaged over items.
///
/// `items[i]` maps each system name to its similarity on item `i`.
pub fn ib_rank(systems: &[String], items: &[BTreeMap<String, f64>]) -> Result<BTreeMap<String, f64>, MetricError> {
    let k = systems.len();
    if k < 2 {
        return Err(MetricError::TooFewSystems(k));
    }
    if items.is_empty() {
        return Err(MetricError::InsufficientSamples { needed: 1, got: 0 });
    }
    let mut totals = vec![0.0; k];
    for (item, sims) in items.iter().enumerate() {
        let values = systems
            .iter()
            .map(|s| match sims.get(s) {
                Some(v) if v.is_finite() => Ok(*v),
                Some(v) => Err(MetricError::InvalidValue(format!(
                    "item {item} system `{s}`: similarity {v}"
                ))),
                None => Err(MetricError::MissingSimilarity {
                    item,
                    system: s.clone(),
                }),
            })
            .collect::<Result<Vec<f64>, _>>()?;
        for (total, rank) in totals.iter_mut().zip(average_ranks_descending(&values)) {
            *total += (k as f64 - rank) / (k as f64 - 1.0);
        }
    }
    Ok(systems
        .iter()
        .cloned()
        .zip(totals.into_iter().map(|t| t / items.len() as f64))
        .collect())
}
