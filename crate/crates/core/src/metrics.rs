//! Feature capacity, neuron similarity and the statistics used to compare variants.

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::error::{FpeError, Result};
use crate::math::{dot, matmul_at, Matrix};
use crate::net::MlpModel;

/// `G = Wᵀ W` over the columns (input features) of `w`.
pub fn gram_matrix(w: &Matrix) -> Matrix {
    matmul_at(w, w).expect("WᵀW is always conformable")
}

/// Per-feature capacity `C_i = G_ii² / Σ_j G_ij²`; a feature with zero column gets 0.
pub fn feature_capacity(w: &Matrix) -> Vec<f64> {
    let g = gram_matrix(w);
    (0..g.rows())
        .map(|i| {
            let row = g.row(i);
            let denom: f64 = row.iter().map(|v| v * v).sum();
            if denom == 0.0 {
                0.0
            } else {
                row[i] * row[i] / denom
            }
        })
        .collect()
}

pub fn total_capacity(w: &Matrix) -> f64 {
    feature_capacity(w).iter().sum()
}

/// Capacity summed over each block of `k` consecutive features.
pub fn clause_capacity(w: &Matrix, k: usize) -> Result<Vec<f64>> {
    if k == 0 || !w.cols().is_multiple_of(k) {
        return Err(FpeError::input(format!("block size {k} must divide width {}", w.cols())));
    }
    Ok(feature_capacity(w).chunks(k).map(|c| c.iter().sum()).collect())
}

/// Mean cosine similarity over all unordered pairs of rows; pairs with a zero row count as 0.
pub fn mean_pairwise_cosine(w: &Matrix) -> f64 {
    let h = w.rows();
    if h < 2 {
        return 0.0;
    }
    let norms: Vec<f64> = (0..h).map(|i| dot(w.row(i), w.row(i)).sqrt()).collect();
    let mut sum = 0.0;
    for i in 0..h {
        for j in i + 1..h {
            if norms[i] > 0.0 && norms[j] > 0.0 {
                sum += dot(w.row(i), w.row(j)) / (norms[i] * norms[j]);
            }
        }
    }
    sum / (h * (h - 1) / 2) as f64
}

/// `(variant − dense) / dense`.
pub fn relative_improvement(variant: f64, dense: f64) -> Result<f64> {
    if dense == 0.0 {
        return Err(FpeError::input("relative improvement over a zero baseline"));
    }
    Ok((variant - dense) / dense)
}

/// Test accuracy divided by the number of non-zero weights and biases.
pub fn accuracy_per_parameter(accuracy: f64, nonzero_params: usize) -> f64 {
    if nonzero_params == 0 {
        return 0.0;
    }
    accuracy / nonzero_params as f64
}

pub fn mean(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        return f64::NAN;
    }
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Unbiased sample variance.
pub fn sample_variance(xs: &[f64]) -> f64 {
    if xs.len() < 2 {
        return 0.0;
    }
    let mu = mean(xs);
    xs.iter().map(|x| (x - mu).powi(2)).sum::<f64>() / (xs.len() - 1) as f64
}

/// Standard error of the mean; 0 for fewer than two samples.
pub fn std_error(xs: &[f64]) -> f64 {
    if xs.len() < 2 {
        return 0.0;
    }
    (sample_variance(xs) / xs.len() as f64).sqrt()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WelchResult {
    pub t: f64,
    pub df: f64,
    pub p_two_sided: f64,
}

/// Welch's unequal-variance t-test of `mean(a) − mean(b)`.
pub fn welch_t_test(a: &[f64], b: &[f64]) -> Result<WelchResult> {
    if a.len() < 2 || b.len() < 2 {
        return Err(FpeError::input("t-test needs at least two samples per group"));
    }
    let (va, vb) = (sample_variance(a) / a.len() as f64, sample_variance(b) / b.len() as f64);
    let se2 = va + vb;
    if se2 == 0.0 {
        return Err(FpeError::input("t-test on two zero-variance samples"));
    }
    let t = (mean(a) - mean(b)) / se2.sqrt();
    let df = se2 * se2 / (va * va / (a.len() - 1) as f64 + vb * vb / (b.len() - 1) as f64);
    let dist = StudentsT::new(0.0, 1.0, df).map_err(|e| FpeError::Numeric(e.to_string()))?;
    let p = 2.0 * (1.0 - dist.cdf(t.abs()));
    Ok(WelchResult {
        t,
        df,
        p_two_sided: p.clamp(0.0, 1.0),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub dims: Vec<usize>,
    pub weight_nnz: usize,
    pub nonzero_params: usize,
    pub feature_capacity: Vec<f64>,
    pub total_capacity: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub clause_capacity: Option<Vec<f64>>,
    pub mean_pairwise_cosine: f64,
    pub gram: Matrix,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub accuracy: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub accuracy_per_parameter: Option<f64>,
    /// First-layer mask, one string of 0/1 characters per neuron.
    pub mask_map: Vec<String>,
}

impl MetricsReport {
    /// Computes the first-layer metrics of `model`; `k` enables the per-block breakdown.
    pub fn of(model: &MlpModel, k: Option<usize>, accuracy: Option<f64>) -> Result<Self> {
        let first = &model.layers[0];
        let w = &first.weights;
        let clause_capacity = k.map(|k| clause_capacity(w, k)).transpose()?;
        let mask_map: Vec<String> = (0..first.mask.rows())
            .map(|r| first.mask.row(r).iter().map(|&m| if m != 0.0 { '1' } else { '0' }).collect())
            .collect();
        Ok(MetricsReport {
            dims: model.dims(),
            weight_nnz: model.weight_nnz(),
            nonzero_params: model.nonzero_param_count(),
            feature_capacity: feature_capacity(w),
            total_capacity: total_capacity(w),
            clause_capacity,
            mean_pairwise_cosine: mean_pairwise_cosine(w),
            gram: gram_matrix(w),
            accuracy,
            accuracy_per_parameter: accuracy.map(|a| accuracy_per_parameter(a, model.nonzero_param_count())),
            mask_map,
        })
    }
}
