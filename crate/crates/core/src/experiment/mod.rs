//! Config-driven experiment runs, result tables and heatmaps.

pub mod config;
pub mod heatmap;
pub mod runner;
pub mod table;

pub use config::{Evaluation, ExperimentConfig};
pub use heatmap::{emit_heatmap, heatmap_set, HeatmapLayout, HeatmapSet};
pub use runner::{check_record, run_experiment, Overrides, RunRecord};
pub use table::{emit_table, ResultTable, TableLayout};
