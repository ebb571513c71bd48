//! Dataset ingestion, colorized-variant synthesis, pairing and corruption.

pub mod colorize;
pub mod idx;
pub mod registry;
pub mod store;
pub mod transform;
mod types;

pub use colorize::{colorize, colorize_dataset, BackgroundCorpus, CorpusSplit};
pub use idx::load_idx_dataset;
pub use registry::{DataRoot, DatasetId, Family, Split};
pub use transform::{
    blacken_augment, corrupt_for_test, make_pair_set, subsample, CorruptionPlan, Rect,
};
pub use types::{DualDomainPairSet, ImageTensor, LabeledDataset, NoiseModel, NoiseSpec};
