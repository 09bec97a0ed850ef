//! Mini-batch Adam training with L1/L2/orthogonality penalties, evaluation, multi-trial
//! selection and the dynamic-rewiring variant.

use std::io::Write;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data_io::Dataset;
use crate::error::{FpeError, Result};
use crate::expand::{rewire_masks, RewireEvent};
use crate::math::{matmul, matmul_bt, Matrix};
use crate::net::{Gradients, MlpModel, OutputKind};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamParams {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamParams {
    fn default() -> Self {
        AdamParams {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// What the linear warm-up factor `min(1, epoch / warmup)` multiplies, if anything.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum RampMode {
    #[default]
    Off,
    Regularizers,
    LearningRate,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RewireConfig {
    pub period: usize,
    pub fraction: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub lr: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub warmup: usize,
    /// L1 penalty on the first layer's weights.
    pub l1: f64,
    /// Squared-L2 penalty on every parameter.
    pub l2: f64,
    /// `‖W1 W1ᵀ − I‖²_F` penalty on the first layer.
    pub orth: f64,
    pub trials: usize,
    pub rewire: Option<RewireConfig>,
    pub ramp: RampMode,
    /// Record test accuracy every this many epochs when a test set is supplied.
    pub eval_every: Option<usize>,
    pub adam: AdamParams,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            lr: 1e-3,
            batch_size: 500,
            epochs: 1000,
            warmup: 1000,
            l1: 1e-7,
            l2: 1e-5,
            orth: 0.0,
            trials: 5,
            rewire: None,
            ramp: RampMode::Off,
            eval_every: None,
            adam: AdamParams::default(),
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let reals = [("lr", self.lr), ("l1", self.l1), ("l2", self.l2), ("orth", self.orth)];
        if let Some((name, v)) = reals.iter().find(|(_, v)| !(v.is_finite() && *v >= 0.0)) {
            return Err(FpeError::input(format!("{name} must be a non-negative number, got {v}")));
        }
        if self.batch_size == 0 {
            return Err(FpeError::input("batch size must be at least 1"));
        }
        if let Some(r) = &self.rewire {
            if r.period == 0 || !(0.0..1.0).contains(&r.fraction) {
                return Err(FpeError::input("rewire needs period >= 1 and fraction in [0, 1)"));
            }
        }
        Ok(())
    }
}

/// Penalty weights applied on top of the task loss.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Penalties {
    pub l1: f64,
    pub l2: f64,
    pub orth: f64,
}

impl Penalties {
    pub fn from_config(cfg: &TrainConfig) -> Self {
        Penalties {
            l1: cfg.l1,
            l2: cfg.l2,
            orth: cfg.orth,
        }
    }

    fn scaled(self, s: f64) -> Self {
        Penalties {
            l1: self.l1 * s,
            l2: self.l2 * s,
            orth: self.orth * s,
        }
    }
}

/// Adds the penalty values to `grads` and returns the penalty loss.
pub fn add_penalties(model: &MlpModel, pen: Penalties, grads: &mut Gradients) -> Result<f64> {
    let mut loss = 0.0;
    let first = &model.layers[0];
    if pen.l1 > 0.0 {
        let g = grads.layers[0].weights.data_mut();
        for (gi, &w) in g.iter_mut().zip(first.weights.data()) {
            loss += pen.l1 * w.abs();
            // subgradient 0 at w = 0
            if w != 0.0 {
                *gi += pen.l1 * w.signum();
            }
        }
    }
    if pen.l2 > 0.0 {
        let mut params = model.clone();
        for (p, g) in params.param_slices_mut().into_iter().zip(grad_slices_mut(grads)) {
            for (gi, &pi) in g.iter_mut().zip(p.iter()) {
                loss += pen.l2 * pi * pi;
                *gi += 2.0 * pen.l2 * pi;
            }
        }
    }
    if pen.orth > 0.0 {
        let w = &first.weights;
        let mut a = matmul_bt(w, w)?;
        for i in 0..a.rows() {
            a.set(i, i, a.get(i, i) - 1.0);
        }
        loss += pen.orth * a.frobenius_norm_sq();
        let ga: Matrix = matmul(&a, w)?;
        let g = grads.layers[0].weights.data_mut();
        for ((gi, &v), &m) in g.iter_mut().zip(ga.data()).zip(first.mask.data()) {
            if m != 0.0 {
                *gi += 4.0 * pen.orth * v;
            }
        }
    }
    Ok(loss)
}

fn grad_slices_mut(g: &mut Gradients) -> Vec<&mut [f64]> {
    let mut out = Vec::new();
    let mut norms = g.norms.iter_mut();
    for layer in g.layers.iter_mut() {
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

/// Task loss plus penalties on one batch, with gradients.
pub fn objective(model: &MlpModel, x: &Matrix, labels: &[usize], pen: Penalties) -> Result<(f64, Gradients)> {
    let (_, cache) = model.forward(x)?;
    let (task, mut grads) = model.backward(&cache, labels)?;
    let reg = add_penalties(model, pen, &mut grads)?;
    Ok((task + reg, grads))
}

/// First and second moment estimates, one buffer per parameter tensor.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub m: Vec<Vec<f64>>,
    pub v: Vec<Vec<f64>>,
    pub t: u64,
}

impl AdamState {
    pub fn for_model(model: &MlpModel) -> Self {
        let shapes: Vec<usize> = model.clone().param_slices_mut().iter().map(|s| s.len()).collect();
        AdamState {
            m: shapes.iter().map(|&n| vec![0.0; n]).collect(),
            v: shapes.iter().map(|&n| vec![0.0; n]).collect(),
            t: 0,
        }
    }
}

/// One bias-corrected Adam update.
pub fn adam_step(params: &mut [&mut [f64]], grads: &[&[f64]], state: &mut AdamState, lr: f64, hp: &AdamParams) {
    state.t += 1;
    let t = state.t as i32;
    let c1 = 1.0 - hp.beta1.powi(t);
    let c2 = 1.0 - hp.beta2.powi(t);
    for (k, (p, g)) in params.iter_mut().zip(grads).enumerate() {
        let (m, v) = (&mut state.m[k], &mut state.v[k]);
        for i in 0..p.len() {
            let gi = g[i];
            m[i] = hp.beta1 * m[i] + (1.0 - hp.beta1) * gi;
            v[i] = hp.beta2 * v[i] + (1.0 - hp.beta2) * gi * gi;
            let m_hat = m[i] / c1;
            let v_hat = v[i] / c2;
            p[i] -= lr * m_hat / (v_hat.sqrt() + hp.eps);
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "event", rename_all = "snake_case")]
pub enum TrainEvent {
    Epoch {
        epoch: usize,
        loss: f64,
        weight_nnz: usize,
        #[serde(skip_serializing_if = "Option::is_none")]
        test_accuracy: Option<f64>,
    },
    Rewire {
        epoch: usize,
        #[serde(flatten)]
        detail: RewireEvent,
    },
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct TrainHistory {
    pub epoch_loss: Vec<f64>,
    pub weight_nnz: Vec<usize>,
    pub test_accuracy: Vec<(usize, f64)>,
    pub rewire_events: Vec<(usize, RewireEvent)>,
}

impl TrainHistory {
    pub fn events(&self, first_epoch: usize) -> Vec<TrainEvent> {
        let mut out = Vec::new();
        let mut rewires = self.rewire_events.iter().peekable();
        for (i, (&loss, &nnz)) in self.epoch_loss.iter().zip(&self.weight_nnz).enumerate() {
            let epoch = first_epoch + i;
            let test_accuracy = self
                .test_accuracy
                .iter()
                .find(|(e, _)| *e == epoch)
                .map(|&(_, a)| a);
            out.push(TrainEvent::Epoch {
                epoch,
                loss,
                weight_nnz: nnz,
                test_accuracy,
            });
            while let Some((e, ev)) = rewires.next_if(|(e, _)| *e == epoch) {
                out.push(TrainEvent::Rewire {
                    epoch: *e,
                    detail: ev.clone(),
                });
            }
        }
        out
    }

    /// Writes one JSON object per line.
    pub fn write_jsonl(&self, first_epoch: usize, w: &mut impl Write) -> Result<()> {
        for ev in self.events(first_epoch) {
            serde_json::to_writer(&mut *w, &ev)?;
            w.write_all(b"\n")?;
        }
        Ok(())
    }
}

/// Stateful training loop; lets a run be continued (e.g. pre-training, then more epochs).
#[derive(Debug, Clone)]
pub struct Trainer {
    pub model: MlpModel,
    pub cfg: TrainConfig,
    pub adam: AdamState,
    pub history: TrainHistory,
    rng: ChaCha8Rng,
    epoch: usize,
}

impl Trainer {
    pub fn new(model: MlpModel, cfg: TrainConfig) -> Result<Self> {
        cfg.validate()?;
        model.validate()?;
        Ok(Trainer {
            adam: AdamState::for_model(&model),
            rng: ChaCha8Rng::seed_from_u64(cfg.seed),
            model,
            cfg,
            history: TrainHistory::default(),
            epoch: 0,
        })
    }

    /// Epochs completed so far.
    pub fn epoch(&self) -> usize {
        self.epoch
    }

    pub fn run(&mut self, data: &Dataset, epochs: usize, test: Option<&Dataset>) -> Result<()> {
        if data.dim() != self.model.input_dim() {
            return Err(FpeError::shape(format!(
                "dataset width {} but model input {}",
                data.dim(),
                self.model.input_dim()
            )));
        }
        let n = data.len();
        let mut order: Vec<usize> = (0..n).collect();
        let pen = Penalties::from_config(&self.cfg);
        let weight_tensors = weight_tensor_indices(&self.model);
        for _ in 0..epochs {
            self.epoch += 1;
            let e = self.epoch;
            let ramp = if self.cfg.warmup == 0 {
                1.0
            } else {
                (e as f64 / self.cfg.warmup as f64).min(1.0)
            };
            let (pen_e, lr) = match self.cfg.ramp {
                RampMode::Off => (pen, self.cfg.lr),
                RampMode::Regularizers => (pen.scaled(ramp), self.cfg.lr),
                RampMode::LearningRate => (pen, self.cfg.lr * ramp),
            };
            order.shuffle(&mut self.rng);
            let mut total = 0.0;
            for (b, batch) in order.chunks(self.cfg.batch_size).enumerate() {
                let x = data.x.select_rows(batch);
                let labels: Vec<usize> = batch.iter().map(|&i| data.y[i]).collect();
                let (loss, grads) = objective(&self.model, &x, &labels, pen_e)?;
                if !loss.is_finite() {
                    return Err(FpeError::Numeric(format!(
                        "non-finite loss at epoch {e}, batch {b}"
                    )));
                }
                total += loss * batch.len() as f64;
                let g = grads.slices();
                adam_step(&mut self.model.param_slices_mut(), &g, &mut self.adam, lr, &self.cfg.adam);
                self.model.apply_masks();
            }
            if let Some(rw) = self.cfg.rewire {
                if e.is_multiple_of(rw.period) {
                    let ev = rewire_masks(&mut self.model, rw.fraction, &mut self.rng)?;
                    self.reset_pruned_moments(&weight_tensors);
                    self.history.rewire_events.push((e, ev));
                }
            }
            self.history.epoch_loss.push(total / n.max(1) as f64);
            self.history.weight_nnz.push(self.model.weight_nnz());
            if let (Some(every), Some(test)) = (self.cfg.eval_every, test) {
                if every > 0 && e.is_multiple_of(every) {
                    let acc = evaluate(&self.model, test)?;
                    self.history.test_accuracy.push((e, acc));
                }
            }
        }
        Ok(())
    }

    fn reset_pruned_moments(&mut self, weight_tensors: &[usize]) {
        for (layer, &k) in self.model.layers.iter().zip(weight_tensors) {
            for (i, &m) in layer.mask.data().iter().enumerate() {
                if m == 0.0 {
                    self.adam.m[k][i] = 0.0;
                    self.adam.v[k][i] = 0.0;
                }
            }
        }
    }

    pub fn into_parts(self) -> (MlpModel, TrainHistory) {
        (self.model, self.history)
    }
}

/// Index of each layer's weight tensor in the canonical parameter order.
fn weight_tensor_indices(model: &MlpModel) -> Vec<usize> {
    let mut out = Vec::with_capacity(model.layers.len());
    let mut k = 0;
    for (i, layer) in model.layers.iter().enumerate() {
        out.push(k);
        k += 1 + usize::from(layer.bias.is_some());
        if matches!(model.norms.get(i), Some(Some(_))) {
            k += 2;
        }
    }
    out
}

/// Trains for `cfg.epochs` epochs.
pub fn train(model: MlpModel, data: &Dataset, cfg: &TrainConfig) -> Result<(MlpModel, TrainHistory)> {
    let mut t = Trainer::new(model, cfg.clone())?;
    t.run(data, cfg.epochs, None)?;
    Ok(t.into_parts())
}

/// Like [`train`], with the mask rewired every `cfg.rewire.period` epochs.
pub fn train_with_rewiring(model: MlpModel, data: &Dataset, cfg: &TrainConfig) -> Result<(MlpModel, TrainHistory)> {
    if cfg.rewire.is_none() {
        return Err(FpeError::input("train_with_rewiring needs a rewire configuration"));
    }
    train(model, data, cfg)
}

const EVAL_CHUNK: usize = 2048;

/// Fraction of rows classified correctly: binary heads predict 1 iff `p > 0.5`,
/// multiclass heads take the arg-max logit (lowest index on ties).
pub fn evaluate(model: &MlpModel, data: &Dataset) -> Result<f64> {
    if data.is_empty() {
        return Ok(0.0);
    }
    let mut correct = 0usize;
    let idx: Vec<usize> = (0..data.len()).collect();
    for chunk in idx.chunks(EVAL_CHUNK) {
        let out = model.predict(&data.x.select_rows(chunk))?;
        for (r, &i) in chunk.iter().enumerate() {
            let predicted = match model.output_kind {
                OutputKind::BinarySigmoid => usize::from(out.get(r, 0) > 0.5),
                OutputKind::MulticlassLogits => argmax(out.row(r)),
            };
            correct += usize::from(predicted == data.y[i]);
        }
    }
    Ok(correct as f64 / data.len() as f64)
}

fn argmax(row: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in row.iter().enumerate().skip(1) {
        if v > row[best] {
            best = i;
        }
    }
    best
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialRecord {
    pub trial: usize,
    pub seed: u64,
    pub accuracy: f64,
    pub weight_nnz: usize,
    pub nonzero_params: usize,
}

#[derive(Debug, Clone)]
pub struct TrialsOutcome {
    pub best_model: MlpModel,
    pub best_accuracy: f64,
    pub best_trial: usize,
    pub trials: Vec<TrialRecord>,
}

/// Runs `cfg.trials` independent trials with seeds `cfg.seed + t`, each building its
/// model with `make_model(seed)`, and keeps the most accurate one (first on ties).
pub fn run_trials<F>(make_model: F, train_set: &Dataset, test_set: &Dataset, cfg: &TrainConfig) -> Result<TrialsOutcome>
where
    F: Fn(u64) -> Result<MlpModel> + Sync,
{
    if cfg.trials == 0 {
        return Err(FpeError::input("at least one trial is required"));
    }
    let results: Vec<(MlpModel, TrialRecord)> = (0..cfg.trials)
        .into_par_iter()
        .map(|t| {
            let seed = cfg.seed.wrapping_add(t as u64);
            let trial_cfg = TrainConfig {
                seed,
                ..cfg.clone()
            };
            let (model, _) = train(make_model(seed)?, train_set, &trial_cfg)?;
            let accuracy = evaluate(&model, test_set)?;
            let record = TrialRecord {
                trial: t,
                seed,
                accuracy,
                weight_nnz: model.weight_nnz(),
                nonzero_params: model.nonzero_param_count(),
            };
            Ok((model, record))
        })
        .collect::<Result<_>>()?;
    let mut best: Option<usize> = None;
    for (i, (_, rec)) in results.iter().enumerate() {
        if best.is_none_or(|b| rec.accuracy > results[b].1.accuracy) {
            best = Some(i);
        }
    }
    let best = best.expect("at least one trial");
    let best_accuracy = results[best].1.accuracy;
    let trials = results.iter().map(|(_, r)| r.clone()).collect();
    let best_model = results.into_iter().nth(best).unwrap().0;
    Ok(TrialsOutcome {
        best_model,
        best_accuracy,
        best_trial: best,
        trials,
    })
}
