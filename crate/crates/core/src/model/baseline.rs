//! Comparison model without latent nodes: fractional-difference least squares
//! on the observed channels, optionally alternated with the sparse input step.

use nalgebra::DMatrix;

use super::{InputSequence, ModelParams, TimeSeriesMatrix};
use crate::em::{m_step, EStepQuantities, MStepOptions, SigmaUpdate};
use crate::error::{Error, Result};
use crate::fracops::GLKernel;
use crate::inputs::{estimate_all_inputs, resolve_penalty, Penalty, SolverOptions};
use crate::linalg::SingularPolicy;
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy)]
pub struct BaselineOptions {
    /// Regression/input alternations when `p > 0`.
    pub rounds: usize,
    pub solver: SolverOptions,
    pub singular: SingularPolicy,
    pub memory: Option<usize>,
}

impl Default for BaselineOptions {
    fn default() -> Self {
        Self {
            rounds: 20,
            solver: SolverOptions::default(),
            singular: SingularPolicy::Fail,
            memory: None,
        }
    }
}

#[derive(Debug, Clone)]
pub struct BaselineFit<T: Scalar> {
    /// Fitted model with no latent block (`m = 0`).
    pub params: ModelParams<T>,
    pub inputs: InputSequence<T>,
}

impl<T: Scalar> BaselineFit<T> {
    pub fn a(&self) -> &DMatrix<T> {
        &self.params.a11
    }
}

/// Regress `x̊_{t+1}` on `(x_t, u_t)`. With `p = 0` this is one ordinary least
/// squares solve; otherwise the regression alternates with per-transition
/// input estimation, starting from `B1 = [I; 0]`-style unit columns.
pub fn baseline_fit_no_latent<T: Scalar>(
    observed: &TimeSeriesMatrix<T>,
    alpha_obs: &[T],
    p: usize,
    penalty: Penalty,
    opts: BaselineOptions,
) -> Result<BaselineFit<T>> {
    let n = observed.channels();
    let len = observed.len();
    if alpha_obs.len() != n {
        return Err(Error::dims("alpha_obs", n, alpha_obs.len()));
    }
    if len < n + p + 1 {
        return Err(Error::singular(format!(
            "baseline regression needs at least {} samples, got {len}",
            n + p + 1
        )));
    }
    let x = observed.values();
    let kernel_obs = GLKernel::with_memory(alpha_obs, len, opts.memory);
    let kernel_lat = GLKernel::new(&[], 0);
    let mstep_opts = MStepOptions {
        singular: opts.singular,
        sigma: SigmaUpdate::FullResidual,
        ..MStepOptions::default()
    };
    let fit_with = |inputs: &DMatrix<T>| -> Result<ModelParams<T>> {
        let e = EStepQuantities::new(
            x.clone(),
            DMatrix::zeros(0, len - 1),
            vec![DMatrix::zeros(0, 0); len - 1],
            inputs.clone(),
            kernel_obs.clone(),
            kernel_lat.clone(),
        )?;
        Ok(m_step(&e, mstep_opts)?.params)
    };

    let mut params = fit_with(&DMatrix::zeros(0, len - 1))?;
    if p == 0 {
        return Ok(BaselineFit {
            params,
            inputs: InputSequence::zeros(0, len - 1),
        });
    }

    let mut b1 = DMatrix::zeros(n, p);
    for i in 0..n.min(p) {
        b1[(i, i)] = T::one();
    }
    params.b1 = b1;
    let z_empty = DMatrix::zeros(0, len - 1);
    let lambda = resolve_penalty(penalty, &params, x, &z_empty, opts.memory)?;
    let mut inputs = InputSequence::zeros(p, len - 1);
    for _ in 0..opts.rounds.max(1) {
        inputs = estimate_all_inputs(&params, x, &z_empty, lambda, opts.solver, opts.memory)?;
        let active: Vec<usize> = (0..p)
            .filter(|&i| inputs.values().row(i).iter().any(|v| *v != T::zero()))
            .collect();
        let refit = fit_with(&inputs.values().select_rows(&active))?;
        let mut b1 = params.b1.clone();
        for (k, &i) in active.iter().enumerate() {
            b1.set_column(i, &refit.b1.column(k));
        }
        params = ModelParams { b1, ..refit };
    }
    Ok(BaselineFit { params, inputs })
}
