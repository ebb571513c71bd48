//! Metrics, baselines, noise-grid sweeps and the label-similarity diagnostic.

pub mod fusion;
pub mod grid;
pub mod report;
pub mod similarity;

pub use fusion::{fuse_probabilities, naive_fusion_predict, NaiveFusion};
pub use grid::{noise_grid_eval, NoiseGridResult, DEFAULT_LEVELS};
pub use report::{argmax, evaluate, evaluate_dual, DualPredictor, EvalReport, Predictor};
pub use similarity::{semantic_similarity, EmbeddingTable};
