//! Masked multilayer perceptrons.
//!
//! A model is a chain of [`MaskedLayer`]s. Every hidden layer is followed by ReLU,
//! optionally preceded by layer normalization; the last layer is the head, producing
//! either a single sigmoid probability (binary) or raw class logits (multiclass).

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{FpeError, Result};
use crate::math::{
    bce_with_logits, ce_loss_with_grad, layer_norm_backward, layer_norm_forward, matmul,
    matmul_at, matmul_bt, sigmoid, LayerNormCache, Matrix,
};

/// Weight matrix, optional bias and a 0/1 mask of the same shape as the weights.
#[derive(Debug, Clone, PartialEq)]
pub struct MaskedLayer {
    pub weights: Matrix,
    pub bias: Option<Vec<f64>>,
    pub mask: Matrix,
}

impl MaskedLayer {
    /// Fully connected layer (all-ones mask).
    pub fn dense(weights: Matrix, bias: Option<Vec<f64>>) -> Result<Self> {
        let mask = Matrix::filled(weights.rows(), weights.cols(), 1.0);
        MaskedLayer::new(weights, bias, mask)
    }

    pub fn new(weights: Matrix, bias: Option<Vec<f64>>, mask: Matrix) -> Result<Self> {
        if weights.shape() != mask.shape() {
            return Err(FpeError::shape(format!(
                "weights {:?} vs mask {:?}",
                weights.shape(),
                mask.shape()
            )));
        }
        if let Some(b) = &bias {
            if b.len() != weights.rows() {
                return Err(FpeError::shape(format!(
                    "bias of length {} for {} neurons",
                    b.len(),
                    weights.rows()
                )));
            }
        }
        if mask.data().iter().any(|&m| m != 0.0 && m != 1.0) {
            return Err(FpeError::input("mask entries must be 0 or 1"));
        }
        let mut layer = MaskedLayer { weights, bias, mask };
        layer.apply_mask();
        Ok(layer)
    }

    #[inline]
    pub fn out_dim(&self) -> usize {
        self.weights.rows()
    }

    #[inline]
    pub fn in_dim(&self) -> usize {
        self.weights.cols()
    }

    /// Number of active (mask = 1) weight positions.
    pub fn weight_nnz(&self) -> usize {
        self.mask.data().iter().filter(|&&m| m != 0.0).count()
    }

    pub fn bias_count(&self) -> usize {
        self.bias.as_ref().map_or(0, Vec::len)
    }

    #[inline]
    pub fn is_active(&self, r: usize, c: usize) -> bool {
        self.mask.get(r, c) != 0.0
    }

    pub fn apply_mask(&mut self) {
        for (w, &m) in self.weights.data_mut().iter_mut().zip(self.mask.data()) {
            if m == 0.0 {
                *w = 0.0;
            }
        }
    }

    /// `mask = 0 ⟹ weight = 0` holds everywhere.
    pub fn mask_consistent(&self) -> bool {
        self.weights
            .data()
            .iter()
            .zip(self.mask.data())
            .all(|(&w, &m)| m != 0.0 || w == 0.0)
    }
}

/// Learnable affine parameters of a layer normalization.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerNormParams {
    pub gain: Vec<f64>,
    pub shift: Vec<f64>,
}

impl LayerNormParams {
    pub fn identity(width: usize) -> Self {
        LayerNormParams {
            gain: vec![1.0; width],
            shift: vec![0.0; width],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OutputKind {
    /// One output unit passed through a sigmoid, trained with binary cross-entropy.
    BinarySigmoid,
    /// Raw logits trained with softmax cross-entropy.
    MulticlassLogits,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelOptions {
    pub bias: bool,
    pub layer_norm: bool,
    /// Inferred from the output width when absent: width 1 means binary.
    pub output_kind: Option<OutputKind>,
}

impl Default for ModelOptions {
    fn default() -> Self {
        ModelOptions {
            bias: true,
            layer_norm: false,
            output_kind: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MlpModel {
    pub layers: Vec<MaskedLayer>,
    /// One entry per hidden layer.
    pub norms: Vec<Option<LayerNormParams>>,
    pub output_kind: OutputKind,
    pub seed: u64,
}

/// Per-layer intermediates recorded by [`MlpModel::forward`].
#[derive(Debug, Clone)]
pub struct ForwardCache {
    pub input: Matrix,
    /// Affine outputs `a W^T + b`, one per layer (the last is the head's logits).
    pub pre: Vec<Matrix>,
    pub norm: Vec<Option<LayerNormCache>>,
    /// ReLU outputs, one per hidden layer.
    pub post: Vec<Matrix>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LayerGrad {
    pub weights: Matrix,
    pub bias: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct NormGrad {
    pub gain: Vec<f64>,
    pub shift: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub layers: Vec<LayerGrad>,
    pub norms: Vec<Option<NormGrad>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParamCounts {
    pub weights: usize,
    pub biases: usize,
    pub norm: usize,
}

impl ParamCounts {
    /// Weights plus biases; normalization parameters are reported separately.
    pub fn nonzero(&self) -> usize {
        self.weights + self.biases
    }
}

/// Builds a fully connected model with `dims = [input, hidden..., output]`.
///
/// Weights are drawn from `U(-1/√fan_in, 1/√fan_in)` with a ChaCha8 stream seeded
/// by `seed`; biases start at zero and layer-norm gains at one.
pub fn init_model(dims: &[usize], seed: u64, opts: &ModelOptions) -> Result<MlpModel> {
    if dims.len() < 3 {
        return Err(FpeError::input(format!(
            "need input, at least one hidden and an output width, got {dims:?}"
        )));
    }
    if dims.contains(&0) {
        return Err(FpeError::input(format!("zero width in {dims:?}")));
    }
    let output_kind = opts.output_kind.unwrap_or(if dims[dims.len() - 1] == 1 {
        OutputKind::BinarySigmoid
    } else {
        OutputKind::MulticlassLogits
    });
    if output_kind == OutputKind::BinarySigmoid && dims[dims.len() - 1] != 1 {
        return Err(FpeError::input("binary head must have exactly one output"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut layers = Vec::with_capacity(dims.len() - 1);
    for pair in dims.windows(2) {
        let (fan_in, fan_out) = (pair[0], pair[1]);
        let bound = 1.0 / (fan_in as f64).sqrt();
        let data = (0..fan_in * fan_out)
            .map(|_| rng.gen_range(-bound..bound))
            .collect();
        let weights = Matrix::from_vec(fan_out, fan_in, data)?;
        let bias = opts.bias.then(|| vec![0.0; fan_out]);
        layers.push(MaskedLayer::dense(weights, bias)?);
    }
    let norms = dims[1..dims.len() - 1]
        .iter()
        .map(|&w| opts.layer_norm.then(|| LayerNormParams::identity(w)))
        .collect();
    Ok(MlpModel {
        layers,
        norms,
        output_kind,
        seed,
    })
}

impl MlpModel {
    pub fn input_dim(&self) -> usize {
        self.layers[0].in_dim()
    }

    pub fn output_dim(&self) -> usize {
        self.layers[self.layers.len() - 1].out_dim()
    }

    pub fn hidden_count(&self) -> usize {
        self.layers.len() - 1
    }

    /// `[input, hidden..., output]`.
    pub fn dims(&self) -> Vec<usize> {
        std::iter::once(self.input_dim())
            .chain(self.layers.iter().map(MaskedLayer::out_dim))
            .collect()
    }

    pub fn has_bias(&self) -> bool {
        self.layers.iter().any(|l| l.bias.is_some())
    }

    /// Checks the chaining invariants; every constructor path upholds them.
    pub fn validate(&self) -> Result<()> {
        if self.layers.len() < 2 {
            return Err(FpeError::input("a model needs at least one hidden layer"));
        }
        if self.norms.len() != self.hidden_count() {
            return Err(FpeError::shape("one normalization slot per hidden layer"));
        }
        for (i, pair) in self.layers.windows(2).enumerate() {
            if pair[0].out_dim() != pair[1].in_dim() {
                return Err(FpeError::shape(format!(
                    "layer {i} emits {} values but layer {} expects {}",
                    pair[0].out_dim(),
                    i + 1,
                    pair[1].in_dim()
                )));
            }
        }
        for (i, norm) in self.norms.iter().enumerate() {
            if let Some(n) = norm {
                let w = self.layers[i].out_dim();
                if n.gain.len() != w || n.shift.len() != w {
                    return Err(FpeError::shape(format!("norm {i} width")));
                }
            }
        }
        if self.output_kind == OutputKind::BinarySigmoid && self.output_dim() != 1 {
            return Err(FpeError::shape("binary head must have one output"));
        }
        Ok(())
    }

    pub fn param_counts(&self) -> ParamCounts {
        ParamCounts {
            weights: self.layers.iter().map(MaskedLayer::weight_nnz).sum(),
            biases: self.layers.iter().map(MaskedLayer::bias_count).sum(),
            norm: self.norms.iter().flatten().map(|n| 2 * n.gain.len()).sum(),
        }
    }

    /// Active weights plus biases.
    pub fn nonzero_param_count(&self) -> usize {
        self.param_counts().nonzero()
    }

    pub fn weight_nnz(&self) -> usize {
        self.param_counts().weights
    }

    pub fn apply_masks(&mut self) {
        for layer in &mut self.layers {
            layer.apply_mask();
        }
    }

    pub fn masks_consistent(&self) -> bool {
        self.layers.iter().all(MaskedLayer::mask_consistent)
    }

    /// Output probabilities (binary) or logits (multiclass) plus the backward cache.
    pub fn forward(&self, x: &Matrix) -> Result<(Matrix, ForwardCache)> {
        if x.cols() != self.input_dim() {
            return Err(FpeError::shape(format!(
                "input width {} but model expects {}",
                x.cols(),
                self.input_dim()
            )));
        }
        let last = self.layers.len() - 1;
        let mut pre = Vec::with_capacity(self.layers.len());
        let mut norm = Vec::with_capacity(last);
        let mut post = Vec::with_capacity(last);
        for (i, layer) in self.layers.iter().enumerate() {
            let src = if i == 0 { x } else { &post[i - 1] };
            let mut z = matmul_bt(src, &layer.weights)?;
            if let Some(b) = &layer.bias {
                for r in 0..z.rows() {
                    for (v, bj) in z.row_mut(r).iter_mut().zip(b) {
                        *v += bj;
                    }
                }
            }
            if i < last {
                let activated = match &self.norms[i] {
                    Some(ln) => {
                        let (y, cache) = layer_norm_forward(&z, &ln.gain, &ln.shift);
                        norm.push(Some(cache));
                        y.map(|v| v.max(0.0))
                    }
                    None => {
                        norm.push(None);
                        z.map(|v| v.max(0.0))
                    }
                };
                pre.push(z);
                post.push(activated);
            } else {
                pre.push(z);
            }
        }
        let logits = &pre[last];
        let output = match self.output_kind {
            OutputKind::BinarySigmoid => sigmoid(logits),
            OutputKind::MulticlassLogits => logits.clone(),
        };
        Ok((
            output,
            ForwardCache {
                input: x.clone(),
                pre,
                norm,
                post,
            },
        ))
    }

    /// Outputs only.
    pub fn predict(&self, x: &Matrix) -> Result<Matrix> {
        Ok(self.forward(x)?.0)
    }

    /// Mean task loss over the batch and its gradients. Gradient entries at masked
    /// weight positions are exactly zero.
    pub fn backward(&self, cache: &ForwardCache, labels: &[usize]) -> Result<(f64, Gradients)> {
        let n_layers = self.layers.len();
        if cache.pre.len() != n_layers || cache.post.len() != n_layers - 1 {
            return Err(FpeError::State(format!(
                "cache holds {} layer(s) but the model has {n_layers}",
                cache.pre.len()
            )));
        }
        for (z, layer) in cache.pre.iter().zip(&self.layers) {
            if z.cols() != layer.out_dim() {
                return Err(FpeError::State("cache does not match model widths".into()));
            }
        }
        let logits = &cache.pre[n_layers - 1];
        if logits.rows() != labels.len() {
            return Err(FpeError::shape(format!(
                "{} labels for a batch of {}",
                labels.len(),
                logits.rows()
            )));
        }
        let (loss, mut delta) = match self.output_kind {
            OutputKind::BinarySigmoid => {
                let y: Vec<f64> = labels
                    .iter()
                    .map(|&c| match c {
                        0 => Ok(0.0),
                        1 => Ok(1.0),
                        _ => Err(FpeError::input(format!("binary label {c}"))),
                    })
                    .collect::<Result<_>>()?;
                let (l, g) = bce_with_logits(logits.data(), &y);
                (l, Matrix::from_vec(logits.rows(), 1, g)?)
            }
            OutputKind::MulticlassLogits => ce_loss_with_grad(logits, labels)?,
        };

        let mut layer_grads: Vec<Option<LayerGrad>> = vec![None; n_layers];
        let mut norm_grads: Vec<Option<NormGrad>> = vec![None; n_layers - 1];
        for i in (0..n_layers).rev() {
            let layer = &self.layers[i];
            let input = if i == 0 { &cache.input } else { &cache.post[i - 1] };
            let mut gw = matmul_at(&delta, input)?;
            for (g, &m) in gw.data_mut().iter_mut().zip(layer.mask.data()) {
                if m == 0.0 {
                    *g = 0.0;
                }
            }
            let gb = layer.bias.as_ref().map(|_| {
                let mut s = vec![0.0; delta.cols()];
                for r in 0..delta.rows() {
                    for (acc, v) in s.iter_mut().zip(delta.row(r)) {
                        *acc += v;
                    }
                }
                s
            });
            layer_grads[i] = Some(LayerGrad {
                weights: gw,
                bias: gb,
            });
            if i == 0 {
                break;
            }
            // gradient w.r.t. the previous hidden layer's ReLU output
            let mut upstream = matmul(&delta, &layer.weights)?;
            let h = i - 1;
            match (&self.norms[h], &cache.norm[h]) {
                (Some(ln), Some(ln_cache)) => {
                    // ReLU was applied to the normalized values
                    for (g, &a) in upstream.data_mut().iter_mut().zip(cache.post[h].data()) {
                        if a <= 0.0 {
                            *g = 0.0;
                        }
                    }
                    let (gz, gg, gs) = layer_norm_backward(&upstream, &ln.gain, ln_cache);
                    norm_grads[h] = Some(NormGrad {
                        gain: gg,
                        shift: gs,
                    });
                    delta = gz;
                }
                (None, None) => {
                    for (g, &z) in upstream.data_mut().iter_mut().zip(cache.pre[h].data()) {
                        if z <= 0.0 {
                            *g = 0.0;
                        }
                    }
                    delta = upstream;
                }
                _ => {
                    return Err(FpeError::State(
                        "normalization in cache does not match the model".into(),
                    ))
                }
            }
        }
        Ok((
            loss,
            Gradients {
                layers: layer_grads.into_iter().map(Option::unwrap).collect(),
                norms: norm_grads,
            },
        ))
    }

    /// Mutable views of every parameter tensor in canonical order: per layer the
    /// weights then the bias, followed by the normalization gain and shift of that
    /// layer when it is a normalized hidden layer.
    pub fn param_slices_mut(&mut self) -> Vec<&mut [f64]> {
        let mut out = Vec::new();
        let mut norms = self.norms.iter_mut();
        for layer in self.layers.iter_mut() {
            out.push(layer.weights.data_mut());
            if let Some(b) = layer.bias.as_mut() {
                out.push(b.as_mut_slice());
            }
            if let Some(Some(n)) = norms.next() {
                out.push(n.gain.as_mut_slice());
                out.push(n.shift.as_mut_slice());
            }
        }
        out
    }

    pub fn params_flat(&self) -> Vec<f64> {
        let mut copy = self.clone();
        copy.param_slices_mut().into_iter().flatten().map(|v| *v).collect()
    }

    pub fn set_params_flat(&mut self, flat: &[f64]) -> Result<()> {
        let mut slices = self.param_slices_mut();
        let total: usize = slices.iter().map(|s| s.len()).sum();
        if total != flat.len() {
            return Err(FpeError::shape(format!(
                "{} values for {total} parameters",
                flat.len()
            )));
        }
        let mut offset = 0;
        for s in slices.iter_mut() {
            s.copy_from_slice(&flat[offset..offset + s.len()]);
            offset += s.len();
        }
        Ok(())
    }
}

impl Gradients {
    /// Views in the same order as [`MlpModel::param_slices_mut`].
    pub fn slices(&self) -> Vec<&[f64]> {
        let mut out = Vec::new();
        let mut norms = self.norms.iter();
        for layer in &self.layers {
            out.push(layer.weights.data());
            if let Some(b) = &layer.bias {
                out.push(b.as_slice());
            }
            if let Some(Some(n)) = norms.next() {
                out.push(n.gain.as_slice());
                out.push(n.shift.as_slice());
            }
        }
        out
    }

    pub fn flat(&self) -> Vec<f64> {
        self.slices().into_iter().flatten().copied().collect()
    }

    pub fn norm(&self) -> f64 {
        self.slices()
            .into_iter()
            .flatten()
            .map(|v| v * v)
            .sum::<f64>()
            .sqrt()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::math::{grad_check, sigmoid_scalar};

    fn random_batch(rows: usize, cols: usize, seed: u64) -> Matrix {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let data = (0..rows * cols).map(|_| rng.gen_range(-2.0..2.0)).collect();
        Matrix::from_vec(rows, cols, data).unwrap()
    }

    #[test]
    fn init_shapes_and_counts() {
        let m = init_model(&[32, 8, 1], 3, &ModelOptions::default()).unwrap();
        assert_eq!(m.layers.len(), 2);
        assert_eq!(m.weight_nnz(), 32 * 8 + 8);
        assert_eq!(m.nonzero_param_count(), 32 * 8 + 8 + 8 + 1);
        assert_eq!(m.output_kind, OutputKind::BinarySigmoid);

        let deep = init_model(&[512, 8, 8, 8, 8, 100], 1, &ModelOptions::default()).unwrap();
        assert_eq!(deep.layers.len(), 5);
        assert_eq!(deep.output_kind, OutputKind::MulticlassLogits);
        assert!(init_model(&[4, 0, 1], 0, &ModelOptions::default()).is_err());
    }

    #[test]
    fn init_is_deterministic() {
        let opts = ModelOptions::default();
        let a = init_model(&[16, 4, 3], 42, &opts).unwrap();
        let b = init_model(&[16, 4, 3], 42, &opts).unwrap();
        assert_eq!(a.params_flat(), b.params_flat());
        let c = init_model(&[16, 4, 3], 43, &opts).unwrap();
        assert_ne!(a.params_flat(), c.params_flat());
    }

    #[test]
    fn half_masked_layer_count() {
        let mut mask = Matrix::zeros(8, 8);
        for r in 0..8 {
            for c in 0..4 {
                mask.set(r, c, 1.0);
            }
        }
        let l = MaskedLayer::new(Matrix::filled(8, 8, 1.0), None, mask).unwrap();
        assert_eq!(l.weight_nnz(), 32);
        assert!(l.mask_consistent());
    }

    #[test]
    fn zero_model_outputs_half() {
        let mut m = init_model(&[3, 2, 1], 0, &ModelOptions::default()).unwrap();
        let zeros = vec![0.0; m.params_flat().len()];
        m.set_params_flat(&zeros).unwrap();
        let out = m.predict(&random_batch(4, 3, 9)).unwrap();
        assert!(out.data().iter().all(|&p| p == 0.5));
    }

    #[test]
    fn single_neuron_hand_evaluation() {
        let l1 = MaskedLayer::dense(Matrix::from_rows(&[vec![1.0, 0.0]]), Some(vec![0.0])).unwrap();
        let l2 = MaskedLayer::dense(Matrix::from_rows(&[vec![1.0]]), Some(vec![0.0])).unwrap();
        let m = MlpModel {
            layers: vec![l1, l2],
            norms: vec![None],
            output_kind: OutputKind::BinarySigmoid,
            seed: 0,
        };
        let out = m.predict(&Matrix::from_rows(&[vec![2.0, 5.0]])).unwrap();
        assert_eq!(out.get(0, 0), sigmoid_scalar(2.0));
    }

    #[test]
    fn apply_masks_zeroes_and_is_idempotent() {
        let mut m = init_model(&[4, 3, 1], 5, &ModelOptions::default()).unwrap();
        m.layers[0].mask.set(1, 2, 0.0);
        m.layers[0].weights.set(1, 2, 3.2);
        assert!(!m.masks_consistent());
        let nnz = m.nonzero_param_count();
        m.apply_masks();
        assert_eq!(m.layers[0].weights.get(1, 2), 0.0);
        assert!(m.masks_consistent());
        let once = m.clone();
        m.apply_masks();
        assert_eq!(m, once);
        assert_eq!(m.nonzero_param_count(), nnz);
    }

    #[test]
    fn forward_masked_storage_equals_on_the_fly_masking() {
        let mut stored = init_model(&[6, 5, 2], 8, &ModelOptions::default()).unwrap();
        for (r, c) in [(0, 0), (2, 3), (4, 5)] {
            stored.layers[0].mask.set(r, c, 0.0);
        }
        stored.layers[1].mask.set(1, 4, 0.0);
        let mut on_the_fly = stored.clone();
        stored.apply_masks();
        for layer in &mut on_the_fly.layers {
            let masked: Vec<f64> = layer
                .weights
                .data()
                .iter()
                .zip(layer.mask.data())
                .map(|(w, m)| w * m)
                .collect();
            layer.weights.data_mut().copy_from_slice(&masked);
        }
        let x = random_batch(7, 6, 1);
        assert_eq!(stored.predict(&x).unwrap(), on_the_fly.predict(&x).unwrap());
    }

    #[test]
    fn masked_gradients_are_exactly_zero() {
        let mut m = init_model(&[5, 4, 1], 2, &ModelOptions::default()).unwrap();
        m.layers[0].mask.set(0, 1, 0.0);
        m.layers[1].mask.set(0, 3, 0.0);
        m.apply_masks();
        let x = random_batch(6, 5, 3);
        let (_, cache) = m.forward(&x).unwrap();
        let (_, g) = m.backward(&cache, &[0, 1, 1, 0, 1, 0]).unwrap();
        assert_eq!(g.layers[0].weights.get(0, 1), 0.0);
        assert_eq!(g.layers[1].weights.get(0, 3), 0.0);
    }

    fn check_model_gradient(model: &MlpModel, x: &Matrix, labels: &[usize]) -> f64 {
        let (_, cache) = model.forward(x).unwrap();
        let (_, grads) = model.backward(&cache, labels).unwrap();
        let mut probe = model.clone();
        let theta = model.params_flat();
        grad_check(
            |t| {
                probe.set_params_flat(t).unwrap();
                let (_, c) = probe.forward(x).unwrap();
                probe.backward(&c, labels).unwrap().0
            },
            &theta,
            &grads.flat(),
        )
        .unwrap()
    }

    #[test]
    fn backward_matches_finite_differences_binary() {
        let m = init_model(&[16, 4, 1], 11, &ModelOptions::default()).unwrap();
        let x = random_batch(8, 16, 12);
        let labels = [0, 1, 1, 0, 1, 0, 0, 1];
        assert!(check_model_gradient(&m, &x, &labels) < 1e-4);
    }

    #[test]
    fn backward_matches_finite_differences_deep_layer_norm() {
        let opts = ModelOptions {
            layer_norm: true,
            ..ModelOptions::default()
        };
        let mut m = init_model(&[10, 6, 5, 6, 4, 3], 21, &opts).unwrap();
        // perturb normalization parameters away from the identity
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for n in m.norms.iter_mut().flatten() {
            for g in n.gain.iter_mut() {
                *g += rng.gen_range(-0.3..0.3);
            }
            for s in n.shift.iter_mut() {
                *s += rng.gen_range(-0.3..0.3);
            }
        }
        let x = random_batch(9, 10, 22);
        let labels = [0, 2, 1, 1, 0, 2, 2, 1, 0];
        assert!(check_model_gradient(&m, &x, &labels) < 1e-4);
    }

    #[test]
    fn backward_rejects_mismatched_cache() {
        let a = init_model(&[4, 3, 1], 0, &ModelOptions::default()).unwrap();
        let b = init_model(&[4, 3, 3, 1], 0, &ModelOptions::default()).unwrap();
        let (_, cache) = b.forward(&random_batch(2, 4, 0)).unwrap();
        assert!(matches!(a.backward(&cache, &[0, 1]), Err(FpeError::State(_))));
    }
}
