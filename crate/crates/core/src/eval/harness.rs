//! Experiment harnesses: with/without-latent comparison over seeds and the
//! reveal sweep over a hidden pool.

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::metrics::{mean_defined, median, relative_error};
use super::predict::forecast;
use crate::em::{fit, EMConfig};
use crate::error::{Error, Result, ResultExt};
use crate::kalman::run_filter_with_memory;
use crate::model::{baseline_fit_no_latent, BaselineOptions, ModelParams, TimeSeriesMatrix};
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    /// EM fit with the hidden channels modelled as latent nodes.
    WithLatent,
    /// Fractional least squares on the observed channels only.
    WithoutLatent,
}

impl Method {
    pub fn label(self) -> &'static str {
        match self {
            Method::WithLatent => "with_latent",
            Method::WithoutLatent => "without_latent",
        }
    }
}

/// Rolling-origin k-step evaluation of a fitted model.
#[derive(Debug, Clone)]
pub struct PredictionReport<T: Scalar> {
    pub horizon: usize,
    pub per_node_error: Vec<Option<f64>>,
    /// Mean over the designated channels (all channels unless narrowed).
    pub mean_error: Option<f64>,
    /// `horizon`-step-ahead predictions of samples `first_target..N`.
    pub predictions: TimeSeriesMatrix<T>,
    pub first_target: usize,
}

/// Predict every sample from `train_len + horizon − 1` on, each from the
/// history ending `horizon` samples earlier.
///
/// `z_hat` (m × (N−1)) and `inputs` (p × ≥ train transitions) come from a
/// single causal pass over the full record; `ẑ_t` depends on data up to
/// `x_{t+1}` only, so each origin sees nothing past its own history. Inputs
/// beyond the supplied columns are zero.
pub fn rolling_origin<T: Scalar>(
    params: &ModelParams<T>,
    observed: &DMatrix<T>,
    z_hat: &DMatrix<T>,
    inputs: &DMatrix<T>,
    train_len: usize,
    horizon: usize,
    memory: Option<usize>,
) -> Result<PredictionReport<T>> {
    let len = observed.ncols();
    if horizon == 0 {
        return Err(Error::InvalidArgument("horizon must be at least 1".into()));
    }
    if train_len < 1 || train_len + horizon > len {
        return Err(Error::InvalidArgument(format!(
            "no test targets: train length {train_len}, horizon {horizon}, record {len}"
        )));
    }
    let first_target = train_len + horizon - 1;
    let mut predictions = DMatrix::zeros(params.n(), len - first_target);
    let mut padded = DMatrix::zeros(params.p(), len - 1);
    let keep = inputs.ncols().min(len - 1);
    padded.columns_mut(0, keep).copy_from(&inputs.columns(0, keep));
    for origin in train_len..=len - horizon {
        let f = forecast(
            params,
            &observed.columns(0, origin).into_owned(),
            &z_hat.columns(0, origin - 1).into_owned(),
            &padded.columns(0, origin - 1).into_owned(),
            horizon,
            memory,
        )?;
        predictions.set_column(origin + horizon - 1 - first_target, &f.observed.column(horizon - 1));
    }
    let truth = observed.columns(first_target, len - first_target).into_owned();
    let per_node_error = relative_error(&truth, &predictions)?;
    Ok(PredictionReport {
        horizon,
        mean_error: mean_defined(&per_node_error),
        per_node_error,
        predictions: TimeSeriesMatrix::new(predictions)?,
        first_target,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ComparisonConfig {
    pub em: EMConfig,
    /// Input dimension for both methods.
    pub p: usize,
    pub horizon: usize,
    /// Fraction of each record used for fitting; the rest is predicted.
    pub train_fraction: f64,
    pub n_seeds: usize,
    /// Base seed; per-seed data and initialization streams derive from it
    /// through [`child_seed`].
    pub seed: u64,
    /// Column order of the comparison table.
    pub methods: Vec<Method>,
    pub baseline_rounds: usize,
}

impl Default for ComparisonConfig {
    fn default() -> Self {
        Self {
            em: EMConfig::default(),
            p: 0,
            horizon: 5,
            train_fraction: 0.8,
            n_seeds: 1,
            seed: 0,
            methods: vec![Method::WithoutLatent, Method::WithLatent],
            baseline_rounds: BaselineOptions::default().rounds,
        }
    }
}

impl ComparisonConfig {
    pub fn validate(&self) -> Result<()> {
        self.em.validate()?;
        if self.horizon == 0 || self.n_seeds == 0 || self.methods.is_empty() {
            return Err(Error::InvalidArgument(
                "horizon, n_seeds and the method list must be non-empty".into(),
            ));
        }
        if !(self.train_fraction > 0.0 && self.train_fraction < 1.0) {
            return Err(Error::InvalidArgument("train_fraction must lie in (0, 1)".into()));
        }
        Ok(())
    }

    fn train_len(&self, len: usize) -> usize {
        ((len as f64) * self.train_fraction).round() as usize
    }
}

/// Where each seed's record comes from.
#[derive(Clone, Copy)]
pub enum DataSource<'a, T: Scalar> {
    /// One record shared by all seeds (seeds only vary the EM start).
    Fixed(&'a TimeSeriesMatrix<T>),
    /// A fresh record per seed.
    PerSeed(&'a (dyn Fn(u64) -> Result<TimeSeriesMatrix<T>> + Sync)),
}

impl<T: Scalar> DataSource<'_, T> {
    fn get(&self, seed: u64) -> Result<TimeSeriesMatrix<T>> {
        match self {
            DataSource::Fixed(d) => Ok((*d).clone()),
            DataSource::PerSeed(f) => f(seed),
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct MethodOutcome {
    pub method: Method,
    /// Per observed channel, in the order of the observed ids.
    pub errors: Vec<Option<f64>>,
    /// Mean over the designated channels.
    pub mean_error: Option<f64>,
    pub iterations: usize,
    /// `None` for the closed-form baseline.
    pub converged: Option<bool>,
    pub q_trace: Vec<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct SeedOutcome {
    pub seed: u64,
    /// One entry per configured method, in column order.
    pub methods: Vec<MethodOutcome>,
}

#[derive(Debug, Clone, Serialize)]
pub struct ComparisonTable {
    pub observed_ids: Vec<usize>,
    pub hidden_ids: Vec<usize>,
    pub methods: Vec<Method>,
    pub horizon: usize,
    pub seeds: Vec<SeedOutcome>,
}

impl ComparisonTable {
    fn column(&self, method: Method) -> Option<usize> {
        self.methods.iter().position(|&m| m == method)
    }

    /// Per-seed mean error of one method.
    pub fn mean_errors(&self, method: Method) -> Vec<Option<f64>> {
        match self.column(method) {
            Some(c) => self.seeds.iter().map(|s| s.methods[c].mean_error).collect(),
            None => Vec::new(),
        }
    }

    /// Per-channel median over seeds.
    pub fn median_errors(&self, method: Method) -> Vec<Option<f64>> {
        let Some(c) = self.column(method) else {
            return Vec::new();
        };
        (0..self.observed_ids.len())
            .map(|i| {
                let v: Vec<f64> = self.seeds.iter().filter_map(|s| s.methods[c].errors[i]).collect();
                median(&v)
            })
            .collect()
    }

    /// Median over seeds of the per-seed mean error.
    pub fn median_mean_error(&self, method: Method) -> Option<f64> {
        let v: Vec<f64> = self.mean_errors(method).into_iter().flatten().collect();
        median(&v)
    }

    /// Fraction of seeds where the with-latent mean error is strictly lower.
    pub fn win_rate(&self) -> Option<f64> {
        self.fraction_where(|latent, base| latent < base)
    }

    /// Fraction of seeds (with both errors defined) satisfying `pred(latent,
    /// baseline)`.
    pub fn fraction_where(&self, pred: impl Fn(f64, f64) -> bool) -> Option<f64> {
        let latent = self.mean_errors(Method::WithLatent);
        let base = self.mean_errors(Method::WithoutLatent);
        if latent.is_empty() || base.is_empty() {
            return None;
        }
        let pairs: Vec<(f64, f64)> = latent
            .iter()
            .zip(&base)
            .filter_map(|(a, b)| Some(((*a)?, (*b)?)))
            .collect();
        if pairs.is_empty() {
            return None;
        }
        Some(pairs.iter().filter(|(a, b)| pred(*a, *b)).count() as f64 / pairs.len() as f64)
    }

    /// Fraction of seeds whose EM fit converged.
    pub fn convergence_rate(&self) -> Option<f64> {
        let c = self.column(Method::WithLatent)?;
        let flags: Vec<bool> = self.seeds.iter().filter_map(|s| s.methods[c].converged).collect();
        (!flags.is_empty()).then(|| flags.iter().filter(|&&f| f).count() as f64 / flags.len() as f64)
    }
}

/// Child seed for stream `stream` of run `index`, by counter offset.
pub fn child_seed(base: u64, index: u64, stream: u64) -> u64 {
    base.wrapping_add(index).wrapping_add(stream << 32)
}

/// Stream index of per-seed data in [`child_seed`].
pub const DATA_STREAM: u64 = 0;
/// Stream index of per-seed EM initialization in [`child_seed`].
pub const INIT_STREAM: u64 = 1;

/// Fit both methods on the training prefix of each seed's record and score
/// rolling-origin predictions on the remainder.
pub fn run_latent_comparison<T: Scalar>(
    data: DataSource<'_, T>,
    observed_ids: &[usize],
    hidden_ids: &[usize],
    alpha_obs: &[T],
    alpha_lat: &[T],
    config: &ComparisonConfig,
) -> Result<ComparisonTable> {
    compare(data, observed_ids, hidden_ids, alpha_obs, alpha_lat, config, observed_ids.len())
}

/// As [`run_latent_comparison`], averaging only the first `focus` observed
/// channels into the mean error.
fn compare<T: Scalar>(
    data: DataSource<'_, T>,
    observed_ids: &[usize],
    hidden_ids: &[usize],
    alpha_obs: &[T],
    alpha_lat: &[T],
    config: &ComparisonConfig,
    focus: usize,
) -> Result<ComparisonTable> {
    config.validate()?;
    if alpha_obs.len() != observed_ids.len() {
        return Err(Error::dims("alpha_obs", observed_ids.len(), alpha_obs.len()));
    }
    if alpha_lat.len() != hidden_ids.len() {
        return Err(Error::dims("alpha_lat", hidden_ids.len(), alpha_lat.len()));
    }
    if observed_ids.is_empty() || observed_ids.iter().any(|i| hidden_ids.contains(i)) {
        return Err(Error::InvalidArgument(
            "observed ids must be non-empty and disjoint from hidden ids".into(),
        ));
    }
    let seeds: Vec<Result<SeedOutcome>> = (0..config.n_seeds as u64)
        .into_par_iter()
        .map(|i| {
            let run = || -> Result<SeedOutcome> {
                let record = data.get(child_seed(config.seed, i, DATA_STREAM))?;
                let total = record.channels();
                if let Some(&bad) = observed_ids.iter().chain(hidden_ids).find(|&&c| c >= total) {
                    return Err(Error::InvalidArgument(format!(
                        "channel {bad} out of range for a {total}-channel record"
                    )));
                }
                let observed = record.select_channels(observed_ids)?;
                let mut em = config.em.clone();
                em.seed = child_seed(config.seed, i, INIT_STREAM);
                let methods = config
                    .methods
                    .iter()
                    .map(|&method| evaluate_method(method, &observed, alpha_obs, alpha_lat, &em, config, focus))
                    .collect::<Result<Vec<_>>>()?;
                Ok(SeedOutcome {
                    seed: config.seed.wrapping_add(i),
                    methods,
                })
            };
            run().with_context(|| format!("seed {}", config.seed.wrapping_add(i)))
        })
        .collect();
    Ok(ComparisonTable {
        observed_ids: observed_ids.to_vec(),
        hidden_ids: hidden_ids.to_vec(),
        methods: config.methods.clone(),
        horizon: config.horizon,
        seeds: seeds.into_iter().collect::<Result<_>>()?,
    })
}

fn evaluate_method<T: Scalar>(
    method: Method,
    observed: &TimeSeriesMatrix<T>,
    alpha_obs: &[T],
    alpha_lat: &[T],
    em: &EMConfig,
    config: &ComparisonConfig,
    focus: usize,
) -> Result<MethodOutcome> {
    let len = observed.len();
    let train_len = config.train_len(len);
    let train = observed.prefix(train_len);
    let x = observed.values();
    let (report, iterations, converged, q_trace) = match method {
        Method::WithLatent => {
            let fitted = fit(&train, alpha_obs, alpha_lat, config.p, em)?;
            let m = alpha_lat.len();
            let mut inputs = DMatrix::zeros(config.p, len - 1);
            let trained = fitted.inputs_final.values();
            inputs.columns_mut(0, trained.ncols()).copy_from(trained);
            let filtered = run_filter_with_memory(
                &fitted.theta_final,
                x,
                &inputs,
                &nalgebra::DVector::zeros(m),
                &(DMatrix::identity(m, m) * T::lit(em.prior_variance)),
                em.memory,
            )?;
            let report = rolling_origin(
                &fitted.theta_final,
                x,
                &filtered.z_hat,
                &inputs,
                train_len,
                config.horizon,
                em.memory,
            )?;
            let trace = fitted.q_trace.iter().map(|q| q.as_f64()).collect();
            (report, fitted.iterations, Some(fitted.converged), trace)
        }
        Method::WithoutLatent => {
            let opts = BaselineOptions {
                rounds: config.baseline_rounds,
                solver: em.solver(),
                memory: em.memory,
                ..BaselineOptions::default()
            };
            let base = baseline_fit_no_latent(&train, alpha_obs, config.p, em.lambda, opts)?;
            let report = rolling_origin(
                &base.params,
                x,
                &DMatrix::zeros(0, len - 1),
                base.inputs.values(),
                train_len,
                config.horizon,
                em.memory,
            )?;
            (report, 1, None, Vec::new())
        }
    };
    let focus = focus.min(report.per_node_error.len());
    Ok(MethodOutcome {
        method,
        mean_error: mean_defined(&report.per_node_error[..focus]),
        errors: report.per_node_error,
        iterations,
        converged,
        q_trace,
    })
}

/// Channels moved from a hidden pool into the observed set one at a time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSpec {
    pub fixed_observed: Vec<usize>,
    pub reveal_order: Vec<usize>,
    pub hidden_pool: Vec<usize>,
}

impl SweepSpec {
    pub fn validate(&self, channels: usize) -> Result<()> {
        let mut seen = vec![false; channels];
        for &c in self.fixed_observed.iter().chain(&self.hidden_pool) {
            if c >= channels || std::mem::replace(&mut seen[c], true) {
                return Err(Error::InvalidArgument(format!(
                    "sweep channel {c} is out of range or listed twice"
                )));
            }
        }
        let mut revealed = vec![false; channels];
        for &c in &self.reveal_order {
            if !self.hidden_pool.contains(&c) || std::mem::replace(&mut revealed[c], true) {
                return Err(Error::InvalidArgument(format!(
                    "revealed channel {c} must appear once in the hidden pool"
                )));
            }
        }
        if self.fixed_observed.is_empty() {
            return Err(Error::InvalidArgument("sweep needs at least one fixed channel".into()));
        }
        Ok(())
    }

    /// Observed and hidden ids at sweep position `step` (0 = nothing
    /// revealed).
    pub fn split(&self, step: usize) -> (Vec<usize>, Vec<usize>) {
        let revealed = &self.reveal_order[..step];
        let observed = self.fixed_observed.iter().chain(revealed).copied().collect();
        let hidden = self.hidden_pool.iter().filter(|c| !revealed.contains(c)).copied().collect();
        (observed, hidden)
    }

    pub fn positions(&self) -> usize {
        self.reveal_order.len() + 1
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct SweepTable {
    pub spec: SweepSpec,
    /// One comparison per sweep position; mean errors cover the fixed
    /// channels only.
    pub columns: Vec<ComparisonTable>,
}

impl SweepTable {
    /// Median over seeds of the fixed-channel mean error, per position.
    pub fn row(&self, method: Method) -> Vec<Option<f64>> {
        self.columns.iter().map(|c| c.median_mean_error(method)).collect()
    }
}

/// Re-fit both methods at every sweep position. `alphas` covers every
/// channel of the record.
pub fn run_reveal_sweep<T: Scalar>(
    data: DataSource<'_, T>,
    spec: &SweepSpec,
    alphas: &[T],
    config: &ComparisonConfig,
) -> Result<SweepTable> {
    spec.validate(alphas.len())?;
    let columns: Vec<Result<ComparisonTable>> = (0..spec.positions())
        .into_par_iter()
        .map(|step| {
            let (observed, hidden) = spec.split(step);
            let pick = |ids: &[usize]| ids.iter().map(|&i| alphas[i]).collect::<Vec<_>>();
            compare(
                data,
                &observed,
                &hidden,
                &pick(&observed),
                &pick(&hidden),
                config,
                spec.fixed_observed.len(),
            )
            .with_context(|| format!("sweep position {step}"))
        })
        .collect();
    Ok(SweepTable {
        spec: spec.clone(),
        columns: columns.into_iter().collect::<Result<_>>()?,
    })
}
