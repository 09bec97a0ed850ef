//! JSON experiment configuration.

use std::fs;
use std::path::{Path, PathBuf};

use fpe_core::data_io::{load_fpee, load_idx};
use fpe_core::{generate, Dataset, DnfSpec, FpeError, GramClusterParams, ModelOptions, Result, TrainConfig};
use serde::{Deserialize, Serialize};

pub const SCHEMA_VERSION: u32 = 1;

fn schema_version() -> u32 {
    SCHEMA_VERSION
}

fn yes() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum TaskConfig {
    /// Generated DNF data; train and test sets come from independent seeds.
    Dnf {
        m: usize,
        k: usize,
        n_train: usize,
        n_test: usize,
        #[serde(default = "yes")]
        jitter: bool,
    },
    Idx {
        train_images: PathBuf,
        train_labels: PathBuf,
        test_images: PathBuf,
        test_labels: PathBuf,
        #[serde(default)]
        limit_train: Option<usize>,
        #[serde(default)]
        limit_test: Option<usize>,
    },
    Fpee {
        train: PathBuf,
        test: PathBuf,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    Dense,
    ClauseSplit,
    RandomSplit,
    GramSplit,
    StructuredSplit,
}

impl Variant {
    pub fn name(self) -> &'static str {
        match self {
            Variant::Dense => "dense",
            Variant::ClauseSplit => "clause_split",
            Variant::RandomSplit => "random_split",
            Variant::GramSplit => "gram_split",
            Variant::StructuredSplit => "structured_split",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExpansionConfig {
    pub alpha: usize,
    pub variants: Vec<Variant>,
    #[serde(default)]
    pub gram: GramClusterParams,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum VariantSeeding {
    /// Every variant of a trial starts from the same dense initialization.
    #[default]
    Shared,
    Decoupled,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepAxes {
    #[serde(default)]
    pub neurons: Vec<usize>,
    #[serde(default)]
    pub clauses: Vec<usize>,
    #[serde(default)]
    pub alpha: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default = "schema_version")]
    pub schema_version: u32,
    pub task: TaskConfig,
    /// Hidden-layer widths before expansion.
    pub hidden: Vec<usize>,
    #[serde(default)]
    pub layer_norm: bool,
    #[serde(default = "yes")]
    pub bias: bool,
    /// Optimizer settings; `epochs` is the post-expansion training length.
    #[serde(default)]
    pub train: TrainConfig,
    #[serde(default)]
    pub pretrain_epochs: usize,
    #[serde(default)]
    pub expansion: Option<ExpansionConfig>,
    #[serde(default)]
    pub variant_seeding: VariantSeeding,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub output_dir: Option<PathBuf>,
    #[serde(default)]
    pub sweep: Option<SweepAxes>,
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: ExperimentConfig =
            serde_json::from_str(text).map_err(|e| FpeError::Input(format!("config: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path)
            .map_err(|e| FpeError::Input(format!("cannot read config {}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    /// Checks everything that can be checked before any compute.
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(FpeError::Input(msg));
        if self.schema_version != SCHEMA_VERSION {
            return bad(format!("unsupported config schema version {}", self.schema_version));
        }
        if self.hidden.is_empty() || self.hidden.contains(&0) {
            return bad(format!("hidden widths must be non-empty and positive, got {:?}", self.hidden));
        }
        self.train.validate()?;
        if self.train.trials == 0 {
            return bad("at least one trial is required".into());
        }
        match &self.task {
            TaskConfig::Dnf { m, k, n_train, n_test, .. } => {
                DnfSpec::new(*m, *k)?;
                if n_train % 2 != 0 || n_test % 2 != 0 || *n_train == 0 || *n_test == 0 {
                    return bad("DNF sample counts must be even and positive".into());
                }
            }
            TaskConfig::Idx {
                train_images,
                train_labels,
                test_images,
                test_labels,
                ..
            } => {
                for p in [train_images, train_labels, test_images, test_labels] {
                    if !p.exists() {
                        return bad(format!("missing data file {}", p.display()));
                    }
                }
            }
            TaskConfig::Fpee { train, test } => {
                for p in [train, test] {
                    if !p.exists() {
                        return bad(format!("missing data file {}", p.display()));
                    }
                }
            }
        }
        if let Some(exp) = &self.expansion {
            if exp.alpha < 2 {
                return bad(format!("expansion factor must be >= 2, got {}", exp.alpha));
            }
            if exp.variants.is_empty() {
                return bad("expansion lists no variants".into());
            }
            for (i, v) in exp.variants.iter().enumerate() {
                if exp.variants[..i].contains(v) {
                    return bad(format!("variant {} listed twice", v.name()));
                }
            }
            if exp.variants.contains(&Variant::ClauseSplit) && !matches!(self.task, TaskConfig::Dnf { .. }) {
                return bad("clause_split needs a DNF task".into());
            }
            if exp.variants.contains(&Variant::StructuredSplit) && exp.alpha != 2 {
                return bad("structured_split needs alpha = 2".into());
            }
        }
        if let Some(axes) = &self.sweep {
            if axes.neurons.is_empty() && axes.clauses.is_empty() && axes.alpha.is_empty() {
                return bad("sweep axes are all empty".into());
            }
            if !axes.clauses.is_empty() && !matches!(self.task, TaskConfig::Dnf { .. }) {
                return bad("the clause axis needs a DNF task".into());
            }
            if !axes.alpha.is_empty() && self.expansion.is_none() {
                return bad("the alpha axis needs an expansion section".into());
            }
        }
        Ok(())
    }

    pub fn model_options(&self) -> ModelOptions {
        ModelOptions {
            bias: self.bias,
            layer_norm: self.layer_norm,
            output_kind: None,
        }
    }

    /// Clause size, when the task has one.
    pub fn clause_size(&self) -> Option<usize> {
        match self.task {
            TaskConfig::Dnf { k, .. } => Some(k),
            _ => None,
        }
    }
}

/// Loads (or generates) the train and test sets of a task.
pub fn load_task(task: &TaskConfig, seed: u64) -> Result<(Dataset, Dataset)> {
    match task {
        TaskConfig::Dnf {
            m,
            k,
            n_train,
            n_test,
            jitter,
        } => {
            let spec = DnfSpec::new(*m, *k)?;
            let (train_seed, test_seed) = (seed, seed ^ 0x7e57_7e57);
            let train = generate(*n_train, &spec, train_seed)?;
            let test = generate(*n_test, &spec, test_seed)?;
            Ok(if *jitter {
                (train.to_jittered(train_seed ^ 0x1), test.to_jittered(test_seed ^ 0x1))
            } else {
                (train.to_labeled(), test.to_labeled())
            })
        }
        TaskConfig::Idx {
            train_images,
            train_labels,
            test_images,
            test_labels,
            limit_train,
            limit_test,
        } => {
            let mut train = load_idx(train_images, train_labels)?;
            let mut test = load_idx(test_images, test_labels)?;
            if let Some(n) = limit_train {
                train = train.head(*n);
            }
            if let Some(n) = limit_test {
                test = test.head(*n);
            }
            Ok((train, test))
        }
        TaskConfig::Fpee { train, test } => {
            let train = load_fpee(train)?;
            let test = load_fpee(test)?;
            if train.dim() != test.dim() {
                return Err(FpeError::Input(format!(
                    "train width {} differs from test width {}",
                    train.dim(),
                    test.dim()
                )));
            }
            Ok((train, test))
        }
    }
}
