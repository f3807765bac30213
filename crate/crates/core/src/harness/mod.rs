//! Configuration, experiment orchestration, output files and comparison.

pub mod compare;
pub mod config;
pub mod curve_csv;
pub mod experiment;
pub mod manifest;

pub use compare::{compare_outputs, compare_rows, Comparison, Deviation};
pub use config::{EnsembleConfig, ExperimentConfig, HistogramConfig, Method, NuGrid};
pub use curve_csv::CurveRow;
pub use experiment::{run_experiment, write_outputs, ExperimentResults, RunStatus};
pub use manifest::Manifest;
