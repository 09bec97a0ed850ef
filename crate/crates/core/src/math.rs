//! Dense row-major matrices and the numeric primitives the networks are built from.
//!
//! Layout is batch-first: a batch of `n` inputs of width `d` is an `n × d` matrix and a
//! layer with `out` neurons and `in` inputs stores its weights as `out × in`.

use serde::{Deserialize, Serialize};

use crate::error::{FpeError, Result};

/// Probabilities are clamped to `[EPS_CLAMP, 1 - EPS_CLAMP]` before taking logs.
pub const EPS_CLAMP: f64 = 1e-7;
/// Added to the per-row variance inside layer normalization.
pub const EPS_LN: f64 = 1e-5;
/// Central-difference step used by [`grad_check`].
pub const GRAD_CHECK_DELTA: f64 = 1e-4;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Matrix {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn filled(rows: usize, cols: usize, value: f64) -> Self {
        Matrix {
            rows,
            cols,
            data: vec![value; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Matrix::zeros(n, n);
        for i in 0..n {
            m.data[i * n + i] = 1.0;
        }
        m
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(FpeError::shape(format!(
                "{} values cannot fill a {rows}x{cols} matrix",
                data.len()
            )));
        }
        Ok(Matrix { rows, cols, data })
    }

    /// Builds a matrix from equal-length rows. Panics on ragged input; intended for
    /// literals in tests and small fixtures.
    pub fn from_rows(rows: &[Vec<f64>]) -> Self {
        let cols = rows.first().map_or(0, Vec::len);
        assert!(rows.iter().all(|r| r.len() == cols), "ragged rows");
        Matrix {
            rows: rows.len(),
            cols,
            data: rows.iter().flatten().copied().collect(),
        }
    }

    #[inline]
    pub fn rows(&self) -> usize {
        self.rows
    }

    #[inline]
    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    #[inline]
    pub fn data(&self) -> &[f64] {
        &self.data
    }

    #[inline]
    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    #[inline]
    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    #[inline]
    pub fn set(&mut self, r: usize, c: usize, v: f64) {
        self.data[r * self.cols + c] = v;
    }

    #[inline]
    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    #[inline]
    pub fn row_mut(&mut self, r: usize) -> &mut [f64] {
        &mut self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn column(&self, c: usize) -> Vec<f64> {
        (0..self.rows).map(|r| self.get(r, c)).collect()
    }

    pub fn transpose(&self) -> Matrix {
        let mut t = Matrix::zeros(self.cols, self.rows);
        for r in 0..self.rows {
            for c in 0..self.cols {
                t.data[c * self.rows + r] = self.data[r * self.cols + c];
            }
        }
        t
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Matrix {
        Matrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    /// Copies the listed rows, in order, into a new matrix.
    pub fn select_rows(&self, idx: &[usize]) -> Matrix {
        let mut out = Matrix::zeros(idx.len(), self.cols);
        for (dst, &src) in idx.iter().enumerate() {
            out.row_mut(dst).copy_from_slice(self.row(src));
        }
        out
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn frobenius_norm_sq(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum()
    }

    pub fn sub(&self, other: &Matrix) -> Result<Matrix> {
        if self.shape() != other.shape() {
            return Err(FpeError::shape(format!(
                "cannot subtract {:?} from {:?}",
                other.shape(),
                self.shape()
            )));
        }
        Ok(Matrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().zip(&other.data).map(|(a, b)| a - b).collect(),
        })
    }
}

#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len().min(b.len());
    let (a, b) = (&a[..n], &b[..n]);
    // four independent accumulators let the loop vectorize
    let mut acc = [0.0f64; 4];
    let (ca, cb) = (a.chunks_exact(4), b.chunks_exact(4));
    let (ra, rb) = (ca.remainder(), cb.remainder());
    for (x, y) in ca.zip(cb) {
        for l in 0..4 {
            acc[l] += x[l] * y[l];
        }
    }
    let tail: f64 = ra.iter().zip(rb).map(|(x, y)| x * y).sum();
    (acc[0] + acc[1]) + (acc[2] + acc[3]) + tail
}

#[inline]
fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

/// `a · b`.
pub fn matmul(a: &Matrix, b: &Matrix) -> Result<Matrix> {
    if a.cols != b.rows {
        return Err(FpeError::shape(format!(
            "matmul inner dimensions differ: {:?} x {:?}",
            a.shape(),
            b.shape()
        )));
    }
    let mut out = Matrix::zeros(a.rows, b.cols);
    for i in 0..a.rows {
        let out_row = &mut out.data[i * b.cols..(i + 1) * b.cols];
        for (k, &aik) in a.row(i).iter().enumerate() {
            if aik != 0.0 {
                axpy(aik, b.row(k), out_row);
            }
        }
    }
    Ok(out)
}

/// `a · bᵀ` without materializing the transpose.
pub fn matmul_bt(a: &Matrix, b: &Matrix) -> Result<Matrix> {
    if a.cols != b.cols {
        return Err(FpeError::shape(format!(
            "matmul_bt widths differ: {:?} x {:?}ᵀ",
            a.shape(),
            b.shape()
        )));
    }
    let mut out = Matrix::zeros(a.rows, b.rows);
    for i in 0..a.rows {
        let ar = a.row(i);
        for j in 0..b.rows {
            out.data[i * b.rows + j] = dot(ar, b.row(j));
        }
    }
    Ok(out)
}

/// `aᵀ · b` without materializing the transpose.
pub fn matmul_at(a: &Matrix, b: &Matrix) -> Result<Matrix> {
    if a.rows != b.rows {
        return Err(FpeError::shape(format!(
            "matmul_at heights differ: {:?}ᵀ x {:?}",
            a.shape(),
            b.shape()
        )));
    }
    let mut out = Matrix::zeros(a.cols, b.cols);
    for r in 0..a.rows {
        let br = b.row(r);
        for (i, &ari) in a.row(r).iter().enumerate() {
            if ari != 0.0 {
                axpy(ari, br, &mut out.data[i * b.cols..(i + 1) * b.cols]);
            }
        }
    }
    Ok(out)
}

pub fn relu(x: &Matrix) -> Matrix {
    x.map(|v| v.max(0.0))
}

#[inline]
pub fn sigmoid_scalar(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

pub fn sigmoid(x: &Matrix) -> Matrix {
    x.map(sigmoid_scalar)
}

/// Row-wise softmax after subtracting each row's maximum.
pub fn stable_softmax(z: &Matrix) -> Matrix {
    let mut out = z.clone();
    for r in 0..out.rows {
        let row = out.row_mut(r);
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mut sum = 0.0;
        for v in row.iter_mut() {
            *v = (*v - max).exp();
            sum += *v;
        }
        for v in row.iter_mut() {
            *v /= sum;
        }
    }
    out
}

/// `ln Σ exp(row)` computed around the row maximum.
fn log_sum_exp(row: &[f64]) -> f64 {
    let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    max + row.iter().map(|v| (v - max).exp()).sum::<f64>().ln()
}

/// Mean binary cross-entropy of probabilities against 0/1 targets.
pub fn bce_loss(p: &[f64], y: &[f64]) -> f64 {
    debug_assert_eq!(p.len(), y.len());
    if p.is_empty() {
        return 0.0;
    }
    let total: f64 = p
        .iter()
        .zip(y)
        .map(|(&p, &y)| {
            let pc = p.clamp(EPS_CLAMP, 1.0 - EPS_CLAMP);
            -(y * pc.ln() + (1.0 - y) * (1.0 - pc).ln())
        })
        .sum();
    total / p.len() as f64
}

/// Mean BCE of `sigmoid(z)` evaluated directly from logits, with its gradient
/// `(sigmoid(z) - y) / n` with respect to each logit.
///
/// Equal to `bce_loss(sigmoid(z), y)` wherever the probability is inside the clamp
/// range; past it the logit form keeps a non-vanishing gradient.
pub fn bce_with_logits(z: &[f64], y: &[f64]) -> (f64, Vec<f64>) {
    debug_assert_eq!(z.len(), y.len());
    let n = z.len().max(1) as f64;
    let mut loss = 0.0;
    let mut grad = Vec::with_capacity(z.len());
    for (&z, &y) in z.iter().zip(y) {
        // softplus(z) - y z, stable for both signs
        loss += z.max(0.0) + (-z.abs()).exp().ln_1p() - y * z;
        grad.push((sigmoid_scalar(z) - y) / n);
    }
    (loss / n, grad)
}

/// Mean cross-entropy of row logits against class indices, computed in log space.
pub fn ce_loss(logits: &Matrix, y: &[usize]) -> Result<f64> {
    Ok(ce_loss_with_grad(logits, y)?.0)
}

/// Cross-entropy together with its gradient `(softmax - onehot) / n`.
pub fn ce_loss_with_grad(logits: &Matrix, y: &[usize]) -> Result<(f64, Matrix)> {
    if logits.rows != y.len() {
        return Err(FpeError::shape(format!(
            "{} label(s) for {} logit row(s)",
            y.len(),
            logits.rows
        )));
    }
    let classes = logits.cols;
    if let Some(&bad) = y.iter().find(|&&c| c >= classes) {
        return Err(FpeError::input(format!(
            "label {bad} out of range for {classes} classes"
        )));
    }
    let n = logits.rows.max(1) as f64;
    let mut grad = stable_softmax(logits);
    let mut loss = 0.0;
    for (r, &label) in y.iter().enumerate() {
        let row = logits.row(r);
        loss += log_sum_exp(row) - row[label];
        let g = grad.row_mut(r);
        g[label] -= 1.0;
        for v in g.iter_mut() {
            *v /= n;
        }
    }
    Ok((loss / n, grad))
}

/// Intermediate values of a layer-normalization forward pass needed for its backward.
#[derive(Debug, Clone)]
pub struct LayerNormCache {
    pub normalized: Matrix,
    pub inv_std: Vec<f64>,
}

/// Per-row normalization to zero mean and unit variance, then `gain ⊙ x̂ + shift`.
pub fn layer_norm(x: &Matrix, gain: &[f64], shift: &[f64]) -> Matrix {
    layer_norm_forward(x, gain, shift).0
}

pub fn layer_norm_forward(x: &Matrix, gain: &[f64], shift: &[f64]) -> (Matrix, LayerNormCache) {
    assert_eq!(gain.len(), x.cols, "layer norm gain width");
    assert_eq!(shift.len(), x.cols, "layer norm shift width");
    let width = x.cols as f64;
    let mut normalized = x.clone();
    let mut out = Matrix::zeros(x.rows, x.cols);
    let mut inv_std = Vec::with_capacity(x.rows);
    for r in 0..x.rows {
        let row = normalized.row_mut(r);
        let mean = row.iter().sum::<f64>() / width;
        let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / width;
        let istd = 1.0 / (var + EPS_LN).sqrt();
        for v in row.iter_mut() {
            *v = (*v - mean) * istd;
        }
        inv_std.push(istd);
        let (nrow, orow) = (normalized.row(r), out.row_mut(r));
        for c in 0..nrow.len() {
            orow[c] = gain[c] * nrow[c] + shift[c];
        }
    }
    (out, LayerNormCache { normalized, inv_std })
}

/// Back-propagates `grad_out` through layer normalization.
///
/// Returns `(grad_input, grad_gain, grad_shift)`.
pub fn layer_norm_backward(
    grad_out: &Matrix,
    gain: &[f64],
    cache: &LayerNormCache,
) -> (Matrix, Vec<f64>, Vec<f64>) {
    let (rows, cols) = grad_out.shape();
    let width = cols as f64;
    let mut grad_in = Matrix::zeros(rows, cols);
    let mut grad_gain = vec![0.0; cols];
    let mut grad_shift = vec![0.0; cols];
    let mut dn = vec![0.0; cols];
    for r in 0..rows {
        let go = grad_out.row(r);
        let nrow = cache.normalized.row(r);
        for c in 0..cols {
            grad_gain[c] += go[c] * nrow[c];
            grad_shift[c] += go[c];
            dn[c] = go[c] * gain[c];
        }
        let mean_dn = dn.iter().sum::<f64>() / width;
        let mean_dn_n = dot(&dn, nrow) / width;
        let istd = cache.inv_std[r];
        let gi = grad_in.row_mut(r);
        for c in 0..cols {
            gi[c] = istd * (dn[c] - mean_dn - nrow[c] * mean_dn_n);
        }
    }
    (grad_in, grad_gain, grad_shift)
}

/// Compares an analytic gradient to central finite differences.
///
/// Returns the maximum over coordinates of `|g_fd - g_an| / max(1e-8, |g_fd| + |g_an|)`.
pub fn grad_check<F>(f: F, theta: &[f64], analytic: &[f64]) -> Result<f64>
where
    F: FnMut(&[f64]) -> f64,
{
    grad_check_with_step(f, theta, analytic, GRAD_CHECK_DELTA)
}

/// [`grad_check`] with step `delta`.
pub fn grad_check_with_step<F>(mut f: F, theta: &[f64], analytic: &[f64], delta: f64) -> Result<f64>
where
    F: FnMut(&[f64]) -> f64,
{
    if theta.len() != analytic.len() {
        return Err(FpeError::shape(format!(
            "{} parameters but {} gradient entries",
            theta.len(),
            analytic.len()
        )));
    }
    let mut probe = theta.to_vec();
    let mut worst = 0.0f64;
    for i in 0..theta.len() {
        probe[i] = theta[i] + delta;
        let plus = f(&probe);
        probe[i] = theta[i] - delta;
        let minus = f(&probe);
        probe[i] = theta[i];
        if !plus.is_finite() || !minus.is_finite() {
            return Err(FpeError::Numeric(format!(
                "non-finite objective while perturbing coordinate {i}"
            )));
        }
        let fd = (plus - minus) / (2.0 * delta);
        let err = (fd - analytic[i]).abs() / (fd.abs() + analytic[i].abs()).max(1e-8);
        worst = worst.max(err);
    }
    Ok(worst)
}
