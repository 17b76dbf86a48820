use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::mstep::{m_step, q_value, EStepQuantities, MStepOptions, SigmaUpdate};
use crate::error::{Error, Result, ResultExt};
use crate::fracops::GLKernel;
use crate::inputs::{estimate_all_inputs, resolve_penalty, Penalty, SolverOptions};
use crate::kalman::run_filter_with_memory;
use crate::linalg::SingularPolicy;
use crate::model::{baseline_fit_no_latent, BaselineOptions, InputSequence, ModelParams, TimeSeriesMatrix};
use crate::scalar::Scalar;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EMConfig {
    pub lambda: Penalty,
    pub max_iter: usize,
    /// Relative threshold on successive Q changes.
    pub tol: f64,
    /// Consecutive below-threshold changes required to declare convergence.
    pub patience: usize,
    pub seed: u64,
    pub init_range: f64,
    pub input_tol: f64,
    pub input_max_iter: usize,
    /// Fractional memory truncation; `None` keeps the full history.
    pub memory: Option<usize>,
    /// Rescale latent channels to unit noise variance after every M-step.
    /// The latent scale is not identifiable from the observations; without
    /// a fixed gauge the iteration drifts along equivalent models.
    pub unit_latent_noise: bool,
    /// Eigenvalue floor on `Σ1`, as a fraction of the mean residual variance
    /// of a no-latent least-squares fit. Without it the latent block can
    /// absorb observation noise along `A12`, driving `Σ1` singular while Q
    /// grows without bound. Zero disables the floor.
    pub noise_floor_ratio: f64,
    /// Latent prior covariance is `prior_variance · I` (mean zero).
    pub prior_variance: f64,
    pub init: InitStrategy,
}

/// Starting point of [`fit`].
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InitStrategy {
    /// Every coupling and input-map entry uniform in `±init_range`, `Σ = I`.
    #[default]
    Uniform,
    /// `A11` and `Σ1` from the no-latent least-squares fit; the remaining
    /// blocks as in `Uniform`.
    Baseline,
}

impl Default for EMConfig {
    fn default() -> Self {
        Self {
            lambda: Penalty::Auto,
            max_iter: 200,
            tol: 1e-6,
            patience: 1,
            seed: 0,
            init_range: 1.0,
            input_tol: SolverOptions::default().tol,
            input_max_iter: SolverOptions::default().max_iter,
            memory: None,
            unit_latent_noise: true,
            noise_floor_ratio: 0.3,
            prior_variance: 1.0,
            init: InitStrategy::Uniform,
        }
    }
}

impl EMConfig {
    pub fn validate(&self) -> Result<()> {
        if self.max_iter == 0 {
            return Err(Error::InvalidArgument("max_iter must be at least 1".into()));
        }
        if !(self.tol > 0.0) || !(self.init_range > 0.0) || !(self.input_tol > 0.0)
            || !(self.prior_variance > 0.0 && self.prior_variance.is_finite())
        {
            return Err(Error::InvalidArgument(
                "tol, init_range, input_tol and prior_variance must be positive".into(),
            ));
        }
        if self.patience == 0 || self.input_max_iter == 0 {
            return Err(Error::InvalidArgument("patience and input_max_iter must be at least 1".into()));
        }
        if !(self.noise_floor_ratio >= 0.0 && self.noise_floor_ratio < 1.0) {
            return Err(Error::InvalidArgument("noise_floor_ratio must lie in [0, 1)".into()));
        }
        if let Penalty::Fixed(l) = self.lambda {
            if !(l >= 0.0) {
                return Err(Error::InvalidArgument("lambda must be non-negative".into()));
            }
        }
        Ok(())
    }

    pub fn solver(&self) -> SolverOptions {
        SolverOptions {
            tol: self.input_tol,
            max_iter: self.input_max_iter,
            accelerate: true,
        }
    }
}

#[derive(Debug, Clone)]
pub struct FitReport<T: Scalar> {
    pub theta_final: ModelParams<T>,
    /// Parameters after each M-step.
    pub theta_trace: Vec<ModelParams<T>>,
    /// Expected complete-data log-likelihood after each M-step.
    pub q_trace: Vec<T>,
    /// Latent means and covariances filtered under `theta_final`.
    pub z_hat_final: DMatrix<T>,
    pub p_hat_final: Vec<DMatrix<T>>,
    pub inputs_final: InputSequence<T>,
    pub lambda: T,
    pub iterations: usize,
    pub converged: bool,
    /// Some M-step needed a ridge on a singular Gram matrix.
    pub regularized: bool,
}

/// Alternate filtering, input estimation and the closed-form M-step.
///
/// Initial couplings and input maps are uniform in `±init_range` from a
/// ChaCha8 stream seeded by `config.seed`; noise covariances start at `I`,
/// inputs at zero and the latent prior at `(0, I)`.
pub fn fit<T: Scalar>(
    observed: &TimeSeriesMatrix<T>,
    alpha_obs: &[T],
    alpha_lat: &[T],
    p: usize,
    config: &EMConfig,
) -> Result<FitReport<T>> {
    config.validate()?;
    if alpha_obs.len() != observed.channels() {
        return Err(Error::dims("alpha_obs", observed.channels(), alpha_obs.len()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut theta = ModelParams::random(alpha_obs.to_vec(), alpha_lat.to_vec(), p, config.init_range, &mut rng);
    if config.init == InitStrategy::Baseline {
        let opts = BaselineOptions {
            singular: SingularPolicy::Ridge,
            memory: config.memory,
            ..BaselineOptions::default()
        };
        let base = baseline_fit_no_latent(observed, alpha_obs, 0, Penalty::Fixed(0.0), opts)
            .with_context(|| "baseline initialization".to_string())?;
        theta.a11 = base.params.a11;
        theta.sigma1 = base.params.sigma1;
    }
    fit_from(observed, theta, config)
}

/// Run EM from a given starting point (orders and dimensions are taken from
/// `initial`).
pub fn fit_from<T: Scalar>(
    observed: &TimeSeriesMatrix<T>,
    initial: ModelParams<T>,
    config: &EMConfig,
) -> Result<FitReport<T>> {
    config.validate()?;
    initial.validate()?;
    let (n, m, p) = (initial.n(), initial.m(), initial.p());
    let len = observed.len();
    if observed.channels() != n {
        return Err(Error::dims("observed channels", n, observed.channels()));
    }
    let needed = (n + m + p + 2).max(3);
    if len < needed {
        return Err(Error::TooShort { needed, got: len });
    }
    let x = observed.values();
    let mut theta = initial;
    let z0 = DVector::zeros(m);
    let p0 = DMatrix::identity(m, m) * T::lit(config.prior_variance);
    let kernel_obs = GLKernel::with_memory(&theta.alpha_obs, len, config.memory);
    let kernel_lat = GLKernel::with_memory(&theta.alpha_lat, len, config.memory);
    let mstep_opts = MStepOptions {
        singular: SingularPolicy::Ridge,
        sigma: SigmaUpdate::FullResidual,
        obs_noise_floor: if m > 0 && config.noise_floor_ratio > 0.0 {
            config.noise_floor_ratio * reference_noise(x, &kernel_obs)?
        } else {
            super::mstep::COVARIANCE_FLOOR
        },
    };

    let mut inputs = InputSequence::zeros(p, len - 1);
    let mut lambda = None;
    let mut q_trace = Vec::new();
    let mut theta_trace = Vec::new();
    let mut regularized = false;
    let mut quiet = 0usize;
    let mut converged = false;

    for iter in 1..=config.max_iter {
        let mut step = || -> Result<(ModelParams<T>, T, bool)> {
            let filtered = run_filter_with_memory(&theta, x, inputs.values(), &z0, &p0, config.memory)?;
            if p > 0 {
                let l = match lambda {
                    Some(l) => l,
                    None => {
                        let l = resolve_penalty(config.lambda, &theta, x, &filtered.z_hat, config.memory)?;
                        lambda = Some(l);
                        l
                    }
                };
                inputs = estimate_all_inputs(&theta, x, &filtered.z_hat, l, config.solver(), config.memory)?;
            }
            let e = EStepQuantities::new(
                x.clone(),
                filtered.z_hat,
                filtered.p_hat,
                inputs.values().clone(),
                kernel_obs.clone(),
                kernel_lat.clone(),
            )?;
            let out = m_step(&e, mstep_opts)?;
            let q = q_value(&out.params, &e)?;
            Ok((out.params, q, out.regularized))
        };
        let (mut next, q, ridge) = step().with_context(|| format!("EM iteration {iter}"))?;
        if config.unit_latent_noise {
            normalize_latent_scale(&mut next);
        }
        theta = next;
        regularized |= ridge;
        theta_trace.push(theta.clone());
        if let Some(&prev) = q_trace.last() {
            let prev: T = prev;
            if (q - prev).abs() < T::lit(config.tol) * q.abs() {
                quiet += 1;
            } else {
                quiet = 0;
            }
        }
        q_trace.push(q);
        if !q.is_finite() {
            return Err(Error::singular(format!("non-finite Q value at EM iteration {iter}")));
        }
        if m == 0 && p == 0 {
            // a single least-squares solve is already the fixed point
            converged = true;
            break;
        }
        if quiet >= config.patience {
            converged = true;
            break;
        }
    }

    let filtered = run_filter_with_memory(&theta, x, inputs.values(), &z0, &p0, config.memory)
        .with_context(|| "filtering under the final parameters".to_string())?;
    Ok(FitReport {
        iterations: q_trace.len(),
        theta_final: theta,
        theta_trace,
        q_trace,
        z_hat_final: filtered.z_hat,
        p_hat_final: filtered.p_hat,
        inputs_final: inputs,
        lambda: lambda.unwrap_or_else(T::zero),
        converged,
        regularized,
    })
}

/// Apply the diagonal change of latent coordinates `z' = D z` with
/// `D = diag(Σ2)^{-1/2}`. The fractional operator acts channelwise, so this is
/// an exact symmetry of the model; it leaves `diag(Σ2) = 1`.
pub fn normalize_latent_scale<T: Scalar>(theta: &mut ModelParams<T>) {
    let m = theta.m();
    let floor = T::lit(super::mstep::COVARIANCE_FLOOR * 10.0);
    let d: Vec<T> = (0..m)
        .map(|i| {
            let v = theta.sigma2[(i, i)];
            if v > floor {
                T::one() / v.sqrt()
            } else {
                T::one()
            }
        })
        .collect();
    for i in 0..m {
        theta.a12.column_mut(i).scale_mut(T::one() / d[i]);
        theta.a21.row_mut(i).scale_mut(d[i]);
        theta.b2.row_mut(i).scale_mut(d[i]);
        for j in 0..m {
            theta.a22[(i, j)] *= d[i] / d[j];
            theta.sigma2[(i, j)] *= d[i] * d[j];
        }
    }
}

/// Mean residual variance of the observed channels regressed on their own
/// past alone.
fn reference_noise<T: Scalar>(x: &DMatrix<T>, kernel: &GLKernel<T>) -> Result<f64> {
    let len = x.ncols();
    let e = EStepQuantities::new(
        x.clone(),
        DMatrix::zeros(0, len - 1),
        vec![DMatrix::zeros(0, 0); len - 1],
        DMatrix::zeros(0, len - 1),
        kernel.clone(),
        GLKernel::new(&[], 0),
    )?;
    let sigma = m_step(&e, MStepOptions::default())?.params.sigma1;
    Ok(sigma.trace().as_f64() / x.nrows().max(1) as f64)
}
