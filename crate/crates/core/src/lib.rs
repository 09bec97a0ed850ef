//! Fixed parameter expansion (FPE): splitting each neuron of a trained sparse MLP into
//! several sub-neurons with disjoint input masks, while holding the number of non-zero
//! weights fixed.
//!
//! Modules, bottom-up: [`math`] (dense kernels), [`net`] (masked MLP), [`expand`]
//! (partitioning, expansion, re-sparsification, rewiring), [`dnf`] and [`data_io`]
//! (datasets), [`training`], [`metrics`] and [`theory`].

pub mod checkpoint;
pub mod data_io;
pub mod dnf;
pub mod error;
pub mod expand;
pub mod math;
pub mod metrics;
pub mod net;
pub mod theory;
pub mod training;

pub use checkpoint::{decode_model, encode_model, load_model, save_model};
pub use data_io::{Dataset, LabeledMatrixDataset};
pub use dnf::{generate, BooleanDataset, DnfSpec};
pub use error::{FpeError, Result};
pub use expand::{
    fpe_expand_model, partition_masks, rewire_masks, ExpansionPlan, GramClusterParams, Linkage, Partition,
    PartitionStrategy, RewireEvent, SplitKind,
};
pub use math::Matrix;
pub use metrics::{MetricsReport, WelchResult};
pub use net::{init_model, MaskedLayer, MlpModel, ModelOptions, OutputKind};
pub use theory::{TheoryParams, TheoryReport};
pub use training::{evaluate, run_trials, train, RampMode, RewireConfig, TrainConfig, Trainer};
