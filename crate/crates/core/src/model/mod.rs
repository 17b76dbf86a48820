//! Parameter container, time-series types, forward simulator and the
//! no-latent baseline identifier.
//!
//! Stacking `s = (x, z)` with observed block `x ∈ Rⁿ` and latent block
//! `z ∈ Rᵐ`, the network obeys
//!
//! ```text
//! Δ^α s[k+1] = A s[k] + B u[k] + e[k],   A = [A11 A12; A21 A22],  B = [B1; B2]
//! ```
//!
//! with `e = (e1, e2)`, `e1 ~ N(0, Σ1)`, `e2 ~ N(0, Σ2)` independent. Peeling
//! the `j = 0` term of the fractional difference gives the forward recursion
//! used everywhere in the crate:
//!
//! ```text
//! s[k+1] = A s[k] + B u[k] + e[k] − Σ_{j=1}^{k+1} Ψ_j s[k+1−j]
//! ```
//!
//! Time index `0` is the initial sample; a record of `N` samples has `N − 1`
//! transitions and therefore `N − 1` input columns.

mod baseline;
mod document;
mod simulate;

pub use baseline::{baseline_fit_no_latent, BaselineFit, BaselineOptions};
pub use document::{MatrixDoc, ParamsDocument, PARAMS_FORMAT};
pub use simulate::{simulate, Noise, Simulation};

use nalgebra::{DMatrix, DVector};
use rand::Rng;

use crate::error::{Error, Result};
use crate::linalg;
use crate::scalar::Scalar;

/// Channels × time trajectory.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeSeriesMatrix<T: Scalar> {
    values: DMatrix<T>,
    pub channel_labels: Option<Vec<String>>,
    pub sample_rate: Option<f64>,
}

impl<T: Scalar> TimeSeriesMatrix<T> {
    /// Wrap a channels × time matrix. Values must be finite and the record
    /// must hold at least one sample.
    pub fn new(values: DMatrix<T>) -> Result<Self> {
        if values.ncols() == 0 {
            return Err(Error::TooShort { needed: 1, got: 0 });
        }
        if let Some(pos) = values.iter().position(|v| !v.is_finite()) {
            let (c, t) = (pos % values.nrows().max(1), pos / values.nrows().max(1));
            return Err(Error::Format(format!("non-finite value at channel {c}, time {t}")));
        }
        Ok(Self {
            values,
            channel_labels: None,
            sample_rate: None,
        })
    }

    /// Matrix with no channels but a time axis (placeholder for `m = 0`).
    pub fn empty(len: usize) -> Self {
        Self {
            values: DMatrix::zeros(0, len),
            channel_labels: None,
            sample_rate: None,
        }
    }

    pub fn with_labels(mut self, labels: Vec<String>) -> Result<Self> {
        if labels.len() != self.channels() {
            return Err(Error::dims("channel labels", self.channels(), labels.len()));
        }
        self.channel_labels = Some(labels);
        Ok(self)
    }

    pub fn values(&self) -> &DMatrix<T> {
        &self.values
    }

    pub fn into_values(self) -> DMatrix<T> {
        self.values
    }

    pub fn channels(&self) -> usize {
        self.values.nrows()
    }

    pub fn len(&self) -> usize {
        self.values.ncols()
    }

    pub fn is_empty(&self) -> bool {
        self.values.ncols() == 0
    }

    /// Same metadata, new values.
    pub fn with_values(&self, values: DMatrix<T>) -> Self {
        Self {
            values,
            channel_labels: self.channel_labels.clone(),
            sample_rate: self.sample_rate,
        }
    }

    /// Rows `ids` in the given order.
    pub fn select_channels(&self, ids: &[usize]) -> Result<Self> {
        if let Some(&bad) = ids.iter().find(|&&i| i >= self.channels()) {
            return Err(Error::InvalidArgument(format!(
                "channel {bad} out of range (have {})",
                self.channels()
            )));
        }
        let values = self.values.select_rows(ids);
        Ok(Self {
            values,
            channel_labels: self
                .channel_labels
                .as_ref()
                .map(|l| ids.iter().map(|&i| l[i].clone()).collect()),
            sample_rate: self.sample_rate,
        })
    }

    /// First `len` samples.
    pub fn prefix(&self, len: usize) -> Self {
        self.with_values(self.values.columns(0, len.min(self.len())).into_owned())
    }

    pub fn label(&self, channel: usize) -> String {
        self.channel_labels
            .as_ref()
            .and_then(|l| l.get(channel).cloned())
            .unwrap_or_else(|| format!("ch{channel}"))
    }

    pub fn cast<U: Scalar>(&self) -> TimeSeriesMatrix<U> {
        TimeSeriesMatrix {
            values: self.values.map(|v| U::lit(v.as_f64())),
            channel_labels: self.channel_labels.clone(),
            sample_rate: self.sample_rate,
        }
    }
}

/// Unknown inputs `u_0 … u_{N−2}`, one column per transition.
#[derive(Debug, Clone, PartialEq)]
pub struct InputSequence<T: Scalar> {
    values: DMatrix<T>,
}

impl<T: Scalar> InputSequence<T> {
    pub fn new(values: DMatrix<T>) -> Result<Self> {
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::Format("non-finite input value".into()));
        }
        Ok(Self { values })
    }

    pub fn zeros(p: usize, transitions: usize) -> Self {
        Self {
            values: DMatrix::zeros(p, transitions),
        }
    }

    pub fn values(&self) -> &DMatrix<T> {
        &self.values
    }

    pub fn dim(&self) -> usize {
        self.values.nrows()
    }

    pub fn transitions(&self) -> usize {
        self.values.ncols()
    }

    /// Fraction of nonzero entries (0 for an empty sequence).
    pub fn sparsity(&self) -> f64 {
        let total = self.values.len();
        if total == 0 {
            return 0.0;
        }
        let nz = self.values.iter().filter(|v| **v != T::zero()).count();
        nz as f64 / total as f64
    }

    /// Input at transition `t`, zero beyond the stored range.
    pub fn column_or_zero(&self, t: usize) -> DVector<T> {
        if t < self.values.ncols() {
            self.values.column(t).into_owned()
        } else {
            DVector::zeros(self.values.nrows())
        }
    }
}

/// Full parameter set `Θ = (A11, A12, A21, A22, B1, B2, Σ1, Σ2)` plus the
/// fractional orders of observed and latent channels.
#[allow(non_snake_case)]
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams<T: Scalar> {
    pub a11: DMatrix<T>,
    pub a12: DMatrix<T>,
    pub a21: DMatrix<T>,
    pub a22: DMatrix<T>,
    pub b1: DMatrix<T>,
    pub b2: DMatrix<T>,
    pub sigma1: DMatrix<T>,
    pub sigma2: DMatrix<T>,
    pub alpha_obs: Vec<T>,
    pub alpha_lat: Vec<T>,
}

impl<T: Scalar> ModelParams<T> {
    /// All couplings zero, identity noise covariances.
    pub fn zeros(alpha_obs: Vec<T>, alpha_lat: Vec<T>, p: usize) -> Self {
        let (n, m) = (alpha_obs.len(), alpha_lat.len());
        Self {
            a11: DMatrix::zeros(n, n),
            a12: DMatrix::zeros(n, m),
            a21: DMatrix::zeros(m, n),
            a22: DMatrix::zeros(m, m),
            b1: DMatrix::zeros(n, p),
            b2: DMatrix::zeros(m, p),
            sigma1: DMatrix::identity(n, n),
            sigma2: DMatrix::identity(m, m),
            alpha_obs,
            alpha_lat,
        }
    }

    /// Coupling and input entries uniform in `[-range, range]`, identity
    /// noise covariances.
    pub fn random<R: Rng + ?Sized>(
        alpha_obs: Vec<T>,
        alpha_lat: Vec<T>,
        p: usize,
        range: f64,
        rng: &mut R,
    ) -> Self {
        let mut params = Self::zeros(alpha_obs, alpha_lat, p);
        for m in [
            &mut params.a11,
            &mut params.a12,
            &mut params.a21,
            &mut params.a22,
            &mut params.b1,
            &mut params.b2,
        ] {
            for v in m.iter_mut() {
                *v = T::lit(rng.random_range(-range..=range));
            }
        }
        params
    }

    /// Build a fully observed model (`m = 0`) from a stacked coupling matrix.
    pub fn observed_only(a: DMatrix<T>, b: DMatrix<T>, sigma: DMatrix<T>, alpha: Vec<T>) -> Result<Self> {
        let mut params = Self::zeros(alpha, Vec::new(), b.ncols());
        params.a11 = a;
        params.b1 = b;
        params.sigma1 = sigma;
        params.validate()?;
        Ok(params)
    }

    /// Split a stacked `(n+m)`-node model into observed/latent blocks.
    ///
    /// `observed` and `hidden` index into the stacked state and must
    /// partition it.
    pub fn partition(
        a: &DMatrix<T>,
        b: &DMatrix<T>,
        sigma: &DMatrix<T>,
        alpha: &[T],
        observed: &[usize],
        hidden: &[usize],
    ) -> Result<Self> {
        let total = a.nrows();
        let mut seen = vec![false; total];
        for &i in observed.iter().chain(hidden) {
            if i >= total || seen[i] {
                return Err(Error::InvalidArgument(format!(
                    "observed/hidden ids must partition 0..{total}"
                )));
            }
            seen[i] = true;
        }
        if seen.iter().any(|s| !s) {
            return Err(Error::InvalidArgument(format!(
                "observed/hidden ids must partition 0..{total}"
            )));
        }
        let sub = |rows: &[usize], cols: &[usize]| a.select_rows(rows).select_columns(cols);
        let params = Self {
            a11: sub(observed, observed),
            a12: sub(observed, hidden),
            a21: sub(hidden, observed),
            a22: sub(hidden, hidden),
            b1: b.select_rows(observed),
            b2: b.select_rows(hidden),
            sigma1: sigma.select_rows(observed).select_columns(observed),
            sigma2: sigma.select_rows(hidden).select_columns(hidden),
            alpha_obs: observed.iter().map(|&i| alpha[i]).collect(),
            alpha_lat: hidden.iter().map(|&i| alpha[i]).collect(),
        };
        params.validate()?;
        Ok(params)
    }

    pub fn n(&self) -> usize {
        self.alpha_obs.len()
    }

    pub fn m(&self) -> usize {
        self.alpha_lat.len()
    }

    pub fn p(&self) -> usize {
        self.b1.ncols()
    }

    /// Stacked coupling matrix `[A11 A12; A21 A22]`.
    pub fn stacked_a(&self) -> DMatrix<T> {
        let (n, m) = (self.n(), self.m());
        let mut a = DMatrix::zeros(n + m, n + m);
        a.view_mut((0, 0), (n, n)).copy_from(&self.a11);
        a.view_mut((0, n), (n, m)).copy_from(&self.a12);
        a.view_mut((n, 0), (m, n)).copy_from(&self.a21);
        a.view_mut((n, n), (m, m)).copy_from(&self.a22);
        a
    }

    pub fn stacked_b(&self) -> DMatrix<T> {
        let (n, m, p) = (self.n(), self.m(), self.p());
        let mut b = DMatrix::zeros(n + m, p);
        b.view_mut((0, 0), (n, p)).copy_from(&self.b1);
        b.view_mut((n, 0), (m, p)).copy_from(&self.b2);
        b
    }

    /// Block-diagonal noise covariance `diag(Σ1, Σ2)`.
    pub fn stacked_sigma(&self) -> DMatrix<T> {
        let (n, m) = (self.n(), self.m());
        let mut s = DMatrix::zeros(n + m, n + m);
        s.view_mut((0, 0), (n, n)).copy_from(&self.sigma1);
        s.view_mut((n, n), (m, m)).copy_from(&self.sigma2);
        s
    }

    pub fn stacked_alpha(&self) -> Vec<T> {
        self.alpha_obs.iter().chain(&self.alpha_lat).copied().collect()
    }

    /// Dimensions consistent, entries finite, covariances symmetric PSD.
    pub fn validate(&self) -> Result<()> {
        let (n, m, p) = (self.n(), self.m(), self.p());
        let shapes = [
            ("A11", &self.a11, (n, n)),
            ("A12", &self.a12, (n, m)),
            ("A21", &self.a21, (m, n)),
            ("A22", &self.a22, (m, m)),
            ("B1", &self.b1, (n, p)),
            ("B2", &self.b2, (m, p)),
            ("Sigma1", &self.sigma1, (n, n)),
            ("Sigma2", &self.sigma2, (m, m)),
        ];
        for (name, mat, want) in shapes {
            if mat.shape() != want {
                return Err(Error::dims(
                    name,
                    format!("{}x{}", want.0, want.1),
                    format!("{}x{}", mat.nrows(), mat.ncols()),
                ));
            }
            if mat.iter().any(|v| !v.is_finite()) {
                return Err(Error::Format(format!("{name} has non-finite entries")));
            }
        }
        if self.alpha_obs.iter().chain(&self.alpha_lat).any(|a| !a.is_finite()) {
            return Err(Error::Format("non-finite fractional order".into()));
        }
        for (name, s) in [("Sigma1", &self.sigma1), ("Sigma2", &self.sigma2)] {
            if !linalg::is_psd(s, 1e-12, 1e-10) {
                return Err(Error::NotPsd { what: name.into() });
            }
        }
        Ok(())
    }

    pub fn cast<U: Scalar>(&self) -> ModelParams<U> {
        let c = |m: &DMatrix<T>| m.map(|v| U::lit(v.as_f64()));
        ModelParams {
            a11: c(&self.a11),
            a12: c(&self.a12),
            a21: c(&self.a21),
            a22: c(&self.a22),
            b1: c(&self.b1),
            b2: c(&self.b2),
            sigma1: c(&self.sigma1),
            sigma2: c(&self.sigma2),
            alpha_obs: self.alpha_obs.iter().map(|v| U::lit(v.as_f64())).collect(),
            alpha_lat: self.alpha_lat.iter().map(|v| U::lit(v.as_f64())).collect(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn validate_rejects_bad_shapes_and_covariances() {
        let mut p = ModelParams::<f64>::zeros(vec![0.5, 0.5], vec![0.3], 1);
        assert!(p.validate().is_ok());
        p.a12 = DMatrix::zeros(1, 1);
        assert!(matches!(p.validate(), Err(Error::DimensionMismatch { .. })));
        let mut p = ModelParams::<f64>::zeros(vec![0.5], vec![], 0);
        p.sigma1[(0, 0)] = -1.0;
        assert!(matches!(p.validate(), Err(Error::NotPsd { .. })));
    }

    #[test]
    fn partition_roundtrips_stacked_matrix() {
        let a = DMatrix::from_fn(3, 3, |i, j| (i * 3 + j) as f64);
        let b = DMatrix::zeros(3, 0);
        let s = DMatrix::identity(3, 3);
        let p = ModelParams::partition(&a, &b, &s, &[0.1, 0.2, 0.3], &[0, 1], &[2]).unwrap();
        assert_eq!(p.stacked_a(), a);
        assert_eq!(p.alpha_lat, vec![0.3]);
        let p = ModelParams::partition(&a, &b, &s, &[0.1, 0.2, 0.3], &[2, 0], &[1]).unwrap();
        assert_eq!(p.a11, DMatrix::from_row_slice(2, 2, &[8.0, 6.0, 2.0, 0.0]));
        assert!(ModelParams::partition(&a, &b, &s, &[0.1, 0.2, 0.3], &[0, 0], &[2]).is_err());
    }

    #[test]
    fn series_rejects_non_finite_and_empty() {
        assert!(TimeSeriesMatrix::new(DMatrix::<f64>::zeros(2, 0)).is_err());
        let mut v = DMatrix::<f64>::zeros(2, 3);
        v[(1, 2)] = f64::NAN;
        assert!(TimeSeriesMatrix::new(v).is_err());
    }

    #[test]
    fn sparsity_counts_nonzeros() {
        let u = InputSequence::new(DMatrix::from_row_slice(1, 4, &[0.0, 1.0, 0.0, 0.0])).unwrap();
        assert_eq!(u.sparsity(), 0.25);
        assert_eq!(InputSequence::<f64>::zeros(0, 5).sparsity(), 0.0);
    }
}
