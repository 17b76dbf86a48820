//! Identification of discrete-time fractional-order networks with latent
//! nodes and sparse unknown inputs.
//!
//! The crate is generic over the scalar type (`f32` or `f64`); the aliases at
//! the crate root fix it to `f64`.

pub mod em;
pub mod error;
pub mod eval;
pub mod fracops;
pub mod inputs;
pub mod io;
pub mod kalman;
pub mod linalg;
pub mod model;
pub mod scalar;

pub use error::{Error, ErrorKind, Result};
pub use fracops::{frac_diff, gl_coeff, GLKernel};
pub use scalar::Scalar;

pub type Params = model::ModelParams<f64>;
pub type Series = model::TimeSeriesMatrix<f64>;
pub type Inputs = model::InputSequence<f64>;
pub type Kernel = fracops::GLKernel<f64>;
pub type Filtered = kalman::FilterResult<f64>;
pub type Report = em::FitReport<f64>;
