//! Experiment harness: simulated data, metrics, the coverage / error-curve /
//! equivalence studies, dataset loading, configuration files and reports.

pub mod config;
pub mod dataset;
pub mod experiments;
pub mod metrics;
pub mod report;
pub mod simulate;

pub use dataset::{load_dataset, ClipPolicy, DatasetSpec, LoadedDataset};
pub use experiments::{
    coverage_experiment, equivalence_experiment, error_curve_experiment, ExperimentConfig,
};
pub use metrics::{relative_l2_error, relative_mse};
pub use report::ExperimentReport;
pub use simulate::{simulate_dataset, SimulatedData, SimulationConfig};
