//! Expectation-maximization for the partially observed fractional network.

mod fit;
mod mstep;

pub use fit::{fit, fit_from, normalize_latent_scale, EMConfig, FitReport, InitStrategy};
pub use mstep::{
    latent_block, m_step, m_step_from_stats, observed_block, q_value, q_value_from_stats, EStepQuantities,
    MStepOptions, MStepOutput, SigmaUpdate, SufficientStats, COVARIANCE_FLOOR,
};
