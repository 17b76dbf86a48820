//! Prediction, error metrics, fractional-order pre-estimation and the
//! experiment harnesses.

mod dfa;
mod harness;
mod metrics;
mod predict;
pub mod systems;

pub use harness::{
    child_seed, rolling_origin, DATA_STREAM, INIT_STREAM, run_latent_comparison, run_reveal_sweep, ComparisonConfig, ComparisonTable,
    DataSource, Method, MethodOutcome, PredictionReport, SeedOutcome, SweepSpec, SweepTable,
};
pub use dfa::{estimate_fractional_orders, OrderEstimate};
pub use metrics::{mean_defined, median, relative_error};
pub use predict::{forecast, predict_k_steps, Forecast};
