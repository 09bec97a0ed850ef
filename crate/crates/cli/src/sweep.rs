//! Cartesian sweeps over hidden width, clause count and expansion factor.

use std::collections::BTreeSet;
use std::fs;
use std::path::{Path, PathBuf};

use fpe_core::{FpeError, Result};
use log::info;
use serde::{Deserialize, Serialize};

use crate::config::{ExperimentConfig, TaskConfig, Variant};
use crate::output::write_atomic;
use crate::run::{cmd_run, Aggregate, AGGREGATE_FILE};

pub const LONG_FILE: &str = "sweep_long.csv";
pub const PIVOT_FILE: &str = "sweep_pivot.csv";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Cell {
    pub neurons: usize,
    pub clauses: usize,
    pub alpha: usize,
}

impl Cell {
    pub fn dir_name(&self) -> String {
        format!("h{}_c{}_a{}", self.neurons, self.clauses, self.alpha)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LongRow {
    pub schema_version: u32,
    pub neurons: usize,
    pub clauses: usize,
    pub alpha: usize,
    pub variant: Variant,
    pub trials: usize,
    pub mean_accuracy: f64,
    pub stderr_accuracy: f64,
    pub mean_acc_per_param: f64,
    pub mean_total_capacity: f64,
    pub mean_cosine: f64,
    pub relative_improvement: Option<f64>,
    pub p_value: Option<f64>,
}

/// The cells of the sweep with the configuration of each. Empty axes keep the base value.
pub fn cells(base: &ExperimentConfig) -> Result<Vec<(Cell, ExperimentConfig)>> {
    let axes = base
        .sweep
        .as_ref()
        .ok_or_else(|| FpeError::Input("config has no sweep section".into()))?;
    let (base_clauses, k) = match base.task {
        TaskConfig::Dnf { m, k, .. } => (m / k, k),
        _ => (0, 0),
    };
    let base_alpha = base.expansion.as_ref().map_or(0, |e| e.alpha);
    let or = |axis: &[usize], v: usize| if axis.is_empty() { vec![v] } else { axis.to_vec() };
    let mut out = Vec::new();
    for &alpha in &or(&axes.alpha, base_alpha) {
        for &neurons in &or(&axes.neurons, base.hidden[0]) {
            for &clauses in &or(&axes.clauses, base_clauses) {
                let mut cfg = base.clone();
                cfg.sweep = None;
                cfg.hidden = vec![neurons; base.hidden.len()];
                if let TaskConfig::Dnf { m, .. } = &mut cfg.task {
                    *m = clauses * k;
                }
                if let Some(exp) = &mut cfg.expansion {
                    exp.alpha = alpha;
                }
                cfg.validate()?;
                out.push((Cell { neurons, clauses, alpha }, cfg));
            }
        }
    }
    Ok(out)
}

/// Runs each cell not yet finished, then rebuilds the long and pivot tables from every
/// cell's aggregate file.
pub fn cmd_sweep(base: &ExperimentConfig, out_dir: &Path) -> Result<Vec<LongRow>> {
    base.validate()?;
    let cells = cells(base)?;
    fs::create_dir_all(out_dir)?;
    let mut long = Vec::new();
    for (cell, cfg) in &cells {
        let dir: PathBuf = out_dir.join(cell.dir_name());
        let agg_path = dir.join(AGGREGATE_FILE);
        if agg_path.exists() {
            info!("skipping finished cell {}", cell.dir_name());
        } else {
            info!("running cell {}", cell.dir_name());
            cmd_run(cfg, &dir)?;
        }
        let agg: Aggregate = serde_json::from_slice(&fs::read(&agg_path)?)?;
        for a in agg.variants {
            long.push(LongRow {
                schema_version: agg.schema_version,
                neurons: cell.neurons,
                clauses: cell.clauses,
                alpha: cell.alpha,
                variant: a.variant,
                trials: a.trials,
                mean_accuracy: a.mean_accuracy,
                stderr_accuracy: a.stderr_accuracy,
                mean_acc_per_param: a.mean_acc_per_param,
                mean_total_capacity: a.mean_total_capacity,
                mean_cosine: a.mean_cosine,
                relative_improvement: a.relative_improvement,
                p_value: a.p_value,
            });
        }
    }
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in &long {
        w.serialize(r).map_err(|e| FpeError::Input(format!("csv: {e}")))?;
    }
    let bytes = w.into_inner().map_err(|e| FpeError::Input(format!("csv: {e}")))?;
    write_atomic(&out_dir.join(LONG_FILE), &bytes)?;
    write_atomic(&out_dir.join(PIVOT_FILE), pivot(&long).as_bytes())?;
    Ok(long)
}

/// Relative improvement with one row per (alpha, variant, neurons) and one column per
/// clause count. Missing cells are left empty.
pub fn pivot(long: &[LongRow]) -> String {
    let clauses: BTreeSet<usize> = long.iter().map(|r| r.clauses).collect();
    let mut keys: Vec<(usize, Variant, usize)> = Vec::new();
    for r in long.iter().filter(|r| r.variant != Variant::Dense) {
        let key = (r.alpha, r.variant, r.neurons);
        if !keys.contains(&key) {
            keys.push(key);
        }
    }
    let mut out = String::from("alpha,variant,neurons");
    for c in &clauses {
        out.push_str(&format!(",clauses_{c}"));
    }
    out.push('\n');
    for (alpha, variant, neurons) in keys {
        out.push_str(&format!("{alpha},{},{neurons}", variant.name()));
        for &c in &clauses {
            out.push(',');
            let hit = long.iter().find(|r| {
                r.alpha == alpha && r.variant == variant && r.neurons == neurons && r.clauses == c
            });
            if let Some(v) = hit.and_then(|r| r.relative_improvement) {
                out.push_str(&v.to_string());
            }
        }
        out.push('\n');
    }
    out
}
