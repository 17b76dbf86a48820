//! Dataset files, run configuration and result documents.

mod config;
mod dataset;
mod report;

pub use config::{AlphaSpec, DataSpec, Dataset, RunConfig, Split, CONFIG_VERSION};
pub use dataset::{load_csv, parse_csv, save_csv, to_csv_string};
pub use report::{
    comparison_csv, comparison_seeds_csv, sweep_csv, sweep_positions, sweep_seeds_csv, ComparisonDocument,
    ComparisonRow, FitDocument, PredictionDocument, SweepDocument, COMPARISON_FORMAT, FIT_FORMAT,
    PREDICTION_FORMAT, SWEEP_FORMAT,
};
