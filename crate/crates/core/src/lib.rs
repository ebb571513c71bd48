//! Zero-shot deep domain adaptation from task-irrelevant dual-domain pairs.

pub mod datasets;
pub mod error;
pub mod eval;
pub mod experiment;
pub mod model;
pub mod pipeline;
pub mod seed;

pub use error::{Result, ZddaError};
