//! Experiment orchestration: settings, splits, the ablation grid, reports
//! and the synthetic corpus.

pub mod config;
pub mod grid;
pub mod report;
pub mod split;
pub mod svg;
pub mod synth;

pub use config::RunConfig;
pub use grid::{compute_stats, run_ablation, run_baseline, run_grid, GridRun, RunRecord};
pub use report::emit_reports;
pub use split::{make_kfold, make_split, SplitManifest};
pub use synth::{generate, SynthCorpus, SynthParams};
