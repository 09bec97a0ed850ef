//! Pre-train, expand, continue training, evaluate, report.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use fpe_core::metrics::{accuracy_per_parameter, mean, relative_improvement, std_error, welch_t_test};
use fpe_core::{
    evaluate, fpe_expand_model, init_model, save_model, Dataset, ExpansionPlan, FpeError, MlpModel,
    PartitionStrategy, Result, SplitKind, TrainConfig, Trainer,
};
use log::info;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::{load_task, ExperimentConfig, Variant, VariantSeeding, SCHEMA_VERSION};
use crate::output::write_atomic;

pub const TRIALS_FILE: &str = "trials.csv";
pub const AGGREGATE_FILE: &str = "aggregate.json";
pub const EVENTS_FILE: &str = "events.jsonl";

/// One row of the per-trial CSV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialRow {
    pub schema_version: u32,
    pub variant: Variant,
    pub trial: usize,
    pub seed: u64,
    pub accuracy: f64,
    pub weight_nnz: usize,
    pub nonzero_params: usize,
    pub total_capacity: f64,
    pub mean_cosine: f64,
    pub acc_per_param: f64,
    pub best: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VariantAggregate {
    pub variant: Variant,
    pub trials: usize,
    pub mean_accuracy: f64,
    pub stderr_accuracy: f64,
    pub mean_total_capacity: f64,
    pub stderr_total_capacity: f64,
    pub mean_cosine: f64,
    pub stderr_cosine: f64,
    pub mean_acc_per_param: f64,
    pub mean_weight_nnz: f64,
    pub best_trial: usize,
    /// `(variant − dense) / dense` on mean accuracy; absent for the baseline itself.
    pub relative_improvement: Option<f64>,
    /// Two-sided Welch p-value against the dense rows, when defined.
    pub p_value: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    pub schema_version: u32,
    pub variants: Vec<VariantAggregate>,
}

#[derive(Debug, Clone)]
pub struct ExperimentResult {
    pub rows: Vec<TrialRow>,
    pub aggregate: Aggregate,
    pub best_models: Vec<(Variant, MlpModel)>,
}

impl ExperimentResult {
    pub fn variant(&self, v: Variant) -> Option<&VariantAggregate> {
        self.aggregate.variants.iter().find(|a| a.variant == v)
    }

    pub fn rows_of(&self, v: Variant) -> impl Iterator<Item = &TrialRow> {
        self.rows.iter().filter(move |r| r.variant == v)
    }
}

/// Variants in output order: the dense baseline first, then the configured splits.
pub fn variants_of(cfg: &ExperimentConfig) -> Vec<Variant> {
    let mut out = vec![Variant::Dense];
    if let Some(exp) = &cfg.expansion {
        out.extend(exp.variants.iter().copied().filter(|&v| v != Variant::Dense));
    }
    out
}

fn split_kind(v: Variant, cfg: &ExperimentConfig) -> Result<SplitKind> {
    let exp = cfg.expansion.as_ref().expect("split variants imply an expansion section");
    Ok(match v {
        Variant::Dense => unreachable!("dense is never expanded"),
        Variant::RandomSplit => SplitKind::Random,
        Variant::ClauseSplit => SplitKind::ClauseAware {
            k: cfg
                .clause_size()
                .ok_or_else(|| FpeError::Input("clause_split needs a DNF task".into()))?,
        },
        Variant::GramSplit => SplitKind::GramCluster(exp.gram.clone()),
        Variant::StructuredSplit => SplitKind::Structured2of4,
    })
}

fn variant_salt(v: Variant) -> u64 {
    match v {
        Variant::Dense => 0,
        Variant::ClauseSplit => 1,
        Variant::RandomSplit => 2,
        Variant::GramSplit => 3,
        Variant::StructuredSplit => 4,
    }
}

struct TrialOutput {
    rows: Vec<TrialRow>,
    models: Vec<MlpModel>,
    events: Vec<u8>,
}

#[derive(Serialize)]
struct EventLine<'a, E: Serialize> {
    schema_version: u32,
    variant: &'a str,
    trial: usize,
    phase: &'a str,
    #[serde(flatten)]
    event: E,
}

fn push_events(buf: &mut Vec<u8>, trainer: &Trainer, first_epoch: usize, variant: Variant, trial: usize, phase: &str) -> Result<()> {
    for event in trainer.history.events(first_epoch) {
        serde_json::to_writer(
            &mut *buf,
            &EventLine {
                schema_version: SCHEMA_VERSION,
                variant: variant.name(),
                trial,
                phase,
                event,
            },
        )?;
        buf.push(b'\n');
    }
    Ok(())
}

struct Ctx<'a> {
    cfg: &'a ExperimentConfig,
    dims: Vec<usize>,
    variants: Vec<Variant>,
    train: &'a Dataset,
    test: &'a Dataset,
}

impl Ctx<'_> {
    fn train_cfg(&self, seed: u64) -> TrainConfig {
        TrainConfig {
            seed,
            ..self.cfg.train.clone()
        }
    }

    fn pretrain(&self, init_seed: u64) -> Result<Trainer> {
        let model = init_model(&self.dims, init_seed, &self.cfg.model_options())?;
        let mut trainer = Trainer::new(model, self.train_cfg(init_seed))?;
        trainer.run(self.train, self.cfg.pretrain_epochs, Some(self.test))?;
        Ok(trainer)
    }

    fn row(&self, variant: Variant, trial: usize, seed: u64, model: &MlpModel) -> Result<TrialRow> {
        let accuracy = evaluate(model, self.test)?;
        let w = &model.layers[0].weights;
        let nonzero_params = model.nonzero_param_count();
        Ok(TrialRow {
            schema_version: SCHEMA_VERSION,
            variant,
            trial,
            seed,
            accuracy,
            weight_nnz: model.weight_nnz(),
            nonzero_params,
            total_capacity: fpe_core::metrics::total_capacity(w),
            mean_cosine: fpe_core::metrics::mean_pairwise_cosine(w),
            acc_per_param: accuracy_per_parameter(accuracy, nonzero_params),
            best: false,
        })
    }

    fn trial(&self, t: usize) -> Result<TrialOutput> {
        let seed = self.cfg.seed.wrapping_add(t as u64);
        let epochs = self.cfg.train.epochs;
        let pre = self.cfg.pretrain_epochs;
        let mut out = TrialOutput {
            rows: Vec::new(),
            models: Vec::new(),
            events: Vec::new(),
        };
        let shared = self.pretrain(seed)?;
        for &v in &self.variants {
            let init_seed = match self.cfg.variant_seeding {
                VariantSeeding::Shared => seed,
                VariantSeeding::Decoupled => seed ^ (variant_salt(v) << 48),
            };
            let pretrained = if init_seed == seed {
                shared.clone()
            } else {
                self.pretrain(init_seed)?
            };
            if init_seed != seed || v == Variant::Dense {
                push_events(&mut out.events, &pretrained, 1, v, t, "pretrain")?;
            }
            let model = if v == Variant::Dense {
                let mut trainer = pretrained;
                let before = trainer.history.epoch_loss.len();
                trainer.run(self.train, epochs, Some(self.test))?;
                trainer.history.epoch_loss.drain(..before);
                trainer.history.weight_nnz.drain(..before);
                trainer.history.test_accuracy.retain(|&(e, _)| e > pre);
                trainer.history.rewire_events.retain(|&(e, _)| e > pre);
                push_events(&mut out.events, &trainer, pre + 1, v, t, "continue")?;
                trainer.model
            } else {
                let exp = self.cfg.expansion.as_ref().expect("split variant without expansion");
                let strategy = PartitionStrategy::new(split_kind(v, self.cfg)?, seed);
                let plan = ExpansionPlan::alternating(exp.alpha, self.cfg.hidden.len(), strategy);
                let expanded = fpe_expand_model(&pretrained.model, &plan)?;
                let mut trainer = Trainer::new(expanded, self.train_cfg(seed ^ 0x5eed))?;
                trainer.run(self.train, epochs, Some(self.test))?;
                push_events(&mut out.events, &trainer, pre + 1, v, t, "continue")?;
                trainer.model
            };
            out.rows.push(self.row(v, t, seed, &model)?);
            out.models.push(model);
        }
        Ok(out)
    }
}

/// Summary statistics of the rows; a pure function of the per-trial CSV.
pub fn aggregate(rows: &[TrialRow]) -> Result<Aggregate> {
    let mut order: Vec<Variant> = Vec::new();
    for r in rows {
        if !order.contains(&r.variant) {
            order.push(r.variant);
        }
    }
    let dense_acc: Vec<f64> = rows
        .iter()
        .filter(|r| r.variant == Variant::Dense)
        .map(|r| r.accuracy)
        .collect();
    let dense_mean = (!dense_acc.is_empty()).then(|| mean(&dense_acc));
    let mut variants = Vec::new();
    for v in order {
        let sel: Vec<&TrialRow> = rows.iter().filter(|r| r.variant == v).collect();
        let col = |f: fn(&TrialRow) -> f64| sel.iter().map(|r| f(r)).collect::<Vec<f64>>();
        let acc = col(|r| r.accuracy);
        let cap = col(|r| r.total_capacity);
        let cos = col(|r| r.mean_cosine);
        let mut best = 0;
        for (i, r) in sel.iter().enumerate() {
            if r.accuracy > sel[best].accuracy {
                best = i;
            }
        }
        let mean_accuracy = mean(&acc);
        let (relative_improvement, p_value) = if v == Variant::Dense {
            (None, None)
        } else {
            (
                dense_mean.and_then(|d| relative_improvement(mean_accuracy, d).ok()),
                welch_t_test(&acc, &dense_acc).ok().map(|w| w.p_two_sided),
            )
        };
        variants.push(VariantAggregate {
            variant: v,
            trials: sel.len(),
            mean_accuracy,
            stderr_accuracy: std_error(&acc),
            mean_total_capacity: mean(&cap),
            stderr_total_capacity: std_error(&cap),
            mean_cosine: mean(&cos),
            stderr_cosine: std_error(&cos),
            mean_acc_per_param: mean(&col(|r| r.acc_per_param)),
            mean_weight_nnz: mean(&col(|r| r.weight_nnz as f64)),
            best_trial: sel[best].trial,
            relative_improvement,
            p_value,
        });
    }
    Ok(Aggregate {
        schema_version: SCHEMA_VERSION,
        variants,
    })
}

/// Runs every variant and trial in memory.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentResult> {
    cfg.validate()?;
    let (train, test) = load_task(&cfg.task, cfg.seed)?;
    run_on(cfg, &train, &test).map(|(res, _)| res)
}

/// As [`run_experiment`] on already loaded data; also returns the JSON-lines event log.
pub fn run_on(cfg: &ExperimentConfig, train: &Dataset, test: &Dataset) -> Result<(ExperimentResult, Vec<u8>)> {
    let out_dim = if train.class_count <= 2 { 1 } else { train.class_count };
    let mut dims = vec![train.dim()];
    dims.extend(&cfg.hidden);
    dims.push(out_dim);
    let ctx = Ctx {
        cfg,
        dims,
        variants: variants_of(cfg),
        train,
        test,
    };
    info!(
        "running {} trials of {:?} on {} training rows",
        cfg.train.trials,
        ctx.variants.iter().map(|v| v.name()).collect::<Vec<_>>(),
        train.len()
    );
    let trials: Vec<TrialOutput> = (0..cfg.train.trials)
        .into_par_iter()
        .map(|t| ctx.trial(t))
        .collect::<Result<_>>()?;

    let mut rows = Vec::new();
    let mut events = Vec::new();
    for t in &trials {
        events.extend_from_slice(&t.events);
    }
    for vi in 0..ctx.variants.len() {
        for t in &trials {
            rows.push(t.rows[vi].clone());
        }
    }
    let aggregate = aggregate(&rows)?;
    let mut best_models = Vec::new();
    for (vi, agg) in aggregate.variants.iter().enumerate() {
        best_models.push((agg.variant, trials[agg.best_trial].models[vi].clone()));
        for r in rows.iter_mut() {
            if r.variant == agg.variant && r.trial == agg.best_trial {
                r.best = true;
            }
        }
    }
    Ok((
        ExperimentResult {
            rows,
            aggregate,
            best_models,
        },
        events,
    ))
}

pub fn trials_csv(rows: &[TrialRow]) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in rows {
        w.serialize(r).map_err(|e| FpeError::Input(format!("csv: {e}")))?;
    }
    w.into_inner().map_err(|e| FpeError::Input(format!("csv: {e}")))
}

pub fn read_trials_csv(path: impl AsRef<Path>) -> Result<Vec<TrialRow>> {
    let path = path.as_ref();
    let mut r = csv::Reader::from_path(path).map_err(|e| FpeError::Format {
        offset: 0,
        msg: format!("{}: {e}", path.display()),
    })?;
    r.deserialize()
        .map(|row| {
            row.map_err(|e| FpeError::Format {
                offset: e.position().map_or(0, |p| p.byte()),
                msg: format!("{}: {e}", path.display()),
            })
        })
        .collect()
}

/// Runs an experiment and writes its files into `out_dir`.
pub fn cmd_run(cfg: &ExperimentConfig, out_dir: &Path) -> Result<ExperimentResult> {
    cfg.validate()?;
    let (train, test) = load_task(&cfg.task, cfg.seed)?;
    let (res, events) = run_on(cfg, &train, &test)?;
    fs::create_dir_all(out_dir)?;
    write_atomic(&out_dir.join("config.json"), cfg.to_json().as_bytes())?;
    write_atomic(&out_dir.join(TRIALS_FILE), &trials_csv(&res.rows)?)?;
    write_atomic(&out_dir.join(EVENTS_FILE), &events)?;
    let best_dir = out_dir.join("best");
    fs::create_dir_all(&best_dir)?;
    for (v, model) in &res.best_models {
        let path: PathBuf = best_dir.join(format!("{}.fpec", v.name()));
        save_model(model, &path)?;
    }
    let mut agg = serde_json::to_vec_pretty(&res.aggregate)?;
    agg.write_all(b"\n")?;
    // Written last: its presence marks a finished run.
    write_atomic(&out_dir.join(AGGREGATE_FILE), &agg)?;
    for a in &res.aggregate.variants {
        info!(
            "{:<16} acc {:.4} ± {:.4}  capacity {:.3}  cosine {:.3}",
            a.variant.name(),
            a.mean_accuracy,
            a.stderr_accuracy,
            a.mean_total_capacity,
            a.mean_cosine
        );
    }
    Ok(res)
}
