//! NP, ANP, and ANP-RNN model assemblies.

pub mod batch;
pub mod checkpoint;
pub mod config;
pub mod forward;
pub mod lstm_baseline;

pub use batch::{kl_diag_gaussians, ContextTargetBatch, GaussianParams, InputSet};
pub use checkpoint::{load_checkpoint, save_checkpoint};
pub use config::{ModelConfig, VariantKind};
pub use forward::{standard_normal_vec, BatchStats, ElboNodes, GaussNodes, Model, Prediction, ZMode};
pub use lstm_baseline::{LstmRegressor, LstmRegressorConfig};
