//! Supervised metric learning for tensor-valued samples, with CP/Tucker,
//! PCA and t-SNE baselines and the clustering metrics used to compare them.
//!
//! Samples are stacked along the first tensor axis and flattened to rows of
//! a [`Matrix`]. The encoder maps rows to unit-norm embeddings; baselines
//! produce per-sample features of their own; [`metrics::evaluate`] scores any
//! of them against the labels.

pub mod baselines;
pub mod data;
pub mod decomp;
pub mod encoder;
pub mod error;
pub mod io;
pub mod linalg;
pub mod losses;
pub mod metrics;
pub mod mining;
pub mod tensor;
pub mod trainer;

pub use data::{vectorize_samples, DatasetKind, LabeledDataset};
pub use decomp::{CpModel, DecompDiagnostics, TuckerModel};
pub use encoder::{EncoderGrads, EncoderParams};
pub use error::{Error, Result};
pub use losses::{LossBreakdown, LossConfig};
pub use metrics::MetricsReport;
pub use mining::{MiningStrategy, Triplet, TripletBatch};
pub use tensor::{DenseTensor, Matrix};
pub use trainer::{TrainConfig, TrainLog};
