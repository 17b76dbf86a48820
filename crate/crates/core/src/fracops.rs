//! Grünwald–Letnikov fractional-difference coefficients and the channelwise
//! fractional-difference transform.
//!
//! For an order `α` the coefficients are
//! `ψ(α, j) = Γ(j − α) / (Γ(−α) Γ(j + 1))`, evaluated here through the
//! recurrence `ψ(α, 0) = 1`, `ψ(α, j) = ψ(α, j − 1) · (j − 1 − α) / j`, which
//! never touches the poles of Γ at non-positive integers.
//!
//! History before the first sample is taken to be zero, so
//! `Δ^α x[k] = Σ_{j=0}^{k} Ψ_j x[k − j]` with `Ψ_j = diag(ψ(α_i, j))`.

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::model::TimeSeriesMatrix;
use crate::scalar::Scalar;

/// `ψ(α, j)` by the multiplicative recurrence.
pub fn gl_coeff<T: Scalar>(alpha: T, j: usize) -> T {
    let mut c = T::one();
    for i in 1..=j {
        let fi = T::from_usize_lossy(i);
        c = c * (fi - T::one() - alpha) / fi;
    }
    c
}

/// Per-channel coefficient table `ψ(α_i, j)` for `0 ≤ j ≤ horizon`.
#[derive(Debug, Clone, PartialEq)]
pub struct GLKernel<T: Scalar> {
    alphas: Vec<T>,
    horizon: usize,
    truncated: bool,
    // lag-major: coeffs[j * channels + i] = ψ(α_i, j)
    coeffs: Vec<T>,
}

impl<T: Scalar> GLKernel<T> {
    /// Full-memory kernel. Sums that need lags beyond `horizon` are rejected.
    pub fn new(alphas: &[T], horizon: usize) -> Self {
        let c = alphas.len();
        let mut coeffs = vec![T::zero(); (horizon + 1) * c];
        for (i, &a) in alphas.iter().enumerate() {
            coeffs[i] = T::one();
            for j in 1..=horizon {
                let fj = T::from_usize_lossy(j);
                coeffs[j * c + i] = coeffs[(j - 1) * c + i] * (fj - T::one() - a) / fj;
            }
        }
        Self {
            alphas: alphas.to_vec(),
            horizon,
            truncated: false,
            coeffs,
        }
    }

    /// Kernel that silently drops lags beyond `max_lag` (finite-memory
    /// approximation for long records).
    pub fn truncated(alphas: &[T], max_lag: usize) -> Self {
        Self {
            truncated: true,
            ..Self::new(alphas, max_lag)
        }
    }

    /// Full memory when `memory` is `None`, truncated at `Some(j)` otherwise.
    pub fn with_memory(alphas: &[T], len: usize, memory: Option<usize>) -> Self {
        match memory {
            Some(j) if j + 1 < len => Self::truncated(alphas, j),
            _ => Self::new(alphas, len.saturating_sub(1)),
        }
    }

    pub fn alphas(&self) -> &[T] {
        &self.alphas
    }

    pub fn channels(&self) -> usize {
        self.alphas.len()
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    pub fn is_truncated(&self) -> bool {
        self.truncated
    }

    /// Diagonal of `Ψ_j`.
    #[inline]
    pub fn lag(&self, j: usize) -> &[T] {
        let c = self.alphas.len();
        &self.coeffs[j * c..(j + 1) * c]
    }

    #[inline]
    pub fn coeff(&self, channel: usize, j: usize) -> T {
        self.coeffs[j * self.alphas.len() + channel]
    }

    /// Coefficients of one channel for lags `0..=horizon`.
    pub fn channel(&self, channel: usize) -> Vec<T> {
        (0..=self.horizon).map(|j| self.coeff(channel, j)).collect()
    }

    /// Largest lag used when evaluating a sum at time index `k`.
    #[inline]
    pub fn max_lag(&self, k: usize) -> usize {
        k.min(self.horizon)
    }

    /// Check that sums up to time index `last` are representable.
    pub fn check_covers(&self, last: usize) -> Result<()> {
        if !self.truncated && last > self.horizon {
            return Err(Error::InvalidArgument(format!(
                "kernel horizon {} shorter than required lag {last}; build a longer or truncated kernel",
                self.horizon
            )));
        }
        Ok(())
    }
}

/// Channelwise fractional difference of a channels × time matrix.
pub fn frac_diff_matrix<T: Scalar>(series: &DMatrix<T>, kernel: &GLKernel<T>) -> Result<DMatrix<T>> {
    let (c, n) = series.shape();
    if kernel.channels() != c {
        return Err(Error::dims("frac_diff channels", kernel.channels(), c));
    }
    if n == 0 {
        return Ok(series.clone());
    }
    kernel.check_covers(n - 1)?;
    let mut out = DMatrix::zeros(c, n);
    for k in 0..n {
        for j in 0..=kernel.max_lag(k) {
            let psi = kernel.lag(j);
            let src = series.column(k - j);
            let mut dst = out.column_mut(k);
            for i in 0..c {
                dst[i] += psi[i] * src[i];
            }
        }
    }
    Ok(out)
}

/// `output[k] = Σ_{j=0}^{min(k, J)} Ψ_j · series[k − j]`.
pub fn frac_diff<T: Scalar>(
    series: &TimeSeriesMatrix<T>,
    kernel: &GLKernel<T>,
) -> Result<TimeSeriesMatrix<T>> {
    let values = frac_diff_matrix(series.values(), kernel)?;
    Ok(series.with_values(values))
}
