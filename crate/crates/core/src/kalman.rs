//! Fractional Kalman filter for the latent block.
//!
//! The filtered estimate `ẑ_k` conditions on observations up to `x_{k+1}`
//! because the latent state at time `k` first shows up in the observed
//! transition `k → k+1`. Errors at distinct times are treated as uncorrelated,
//! which keeps the long-memory prediction covariance a plain sum over past
//! filtered covariances:
//!
//! ```text
//! z̃_k = A22 ẑ_{k−1} + A21 x_{k−1} + B2 u_{k−1} − Σ_{j=1}^{k} Ψ_j ẑ_{k−j}
//! P̃_k = (A22 − Ψ_1) P̂_{k−1} (A22 − Ψ_1)ᵀ + Σ_{j=2}^{k} Ψ_j P̂_{k−j} Ψ_jᵀ + Σ2
//! y_k = x̊_{k+1} − A11 x_k − B1 u_k
//! K_k = P̃_k A12ᵀ (Σ1 + A12 P̃_k A12ᵀ)⁻¹
//! ẑ_k = z̃_k + K_k (y_k − A12 z̃_k)
//! P̂_k = (A12ᵀ Σ1⁻¹ A12 + P̃_k⁻¹)⁻¹
//! ```
//!
//! The prior `(z0, P0)` plays the role of `(z̃_0, P̃_0)`; the first update uses
//! `y_0`. A record of N samples yields `ẑ_0 … ẑ_{N−2}`.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::fracops::{frac_diff_matrix, GLKernel};
use crate::linalg::{self, SpdFactor};
use crate::model::{InputSequence, ModelParams, TimeSeriesMatrix};
use crate::scalar::Scalar;

#[derive(Debug, Clone)]
pub struct FilterResult<T: Scalar> {
    /// m × (N−1) filtered means.
    pub z_hat: DMatrix<T>,
    pub p_hat: Vec<DMatrix<T>>,
    /// m × (N−1) one-step predictions.
    pub z_tilde: DMatrix<T>,
    pub p_tilde: Vec<DMatrix<T>>,
    /// m × n gains.
    pub gains: Vec<DMatrix<T>>,
    /// n × (N−1) residuals `y_k − A12 z̃_k`.
    pub innovations: DMatrix<T>,
}

impl<T: Scalar> FilterResult<T> {
    pub fn steps(&self) -> usize {
        self.z_hat.ncols()
    }
}

/// Run the filter over the full record with unbounded memory.
pub fn run_filter<T: Scalar>(
    params: &ModelParams<T>,
    observed: &TimeSeriesMatrix<T>,
    inputs: &InputSequence<T>,
    z0: &DVector<T>,
    p0: &DMatrix<T>,
) -> Result<FilterResult<T>> {
    run_filter_with_memory(params, observed.values(), inputs.values(), z0, p0, None)
}

/// As [`run_filter`], optionally truncating the fractional memory at
/// `memory` lags.
pub fn run_filter_with_memory<T: Scalar>(
    params: &ModelParams<T>,
    observed: &DMatrix<T>,
    inputs: &DMatrix<T>,
    z0: &DVector<T>,
    p0: &DMatrix<T>,
    memory: Option<usize>,
) -> Result<FilterResult<T>> {
    let (n, m, p) = (params.n(), params.m(), params.p());
    let len = observed.ncols();
    if len < 2 {
        return Err(Error::TooShort { needed: 2, got: len });
    }
    if observed.nrows() != n {
        return Err(Error::dims("observed channels", n, observed.nrows()));
    }
    if inputs.shape() != (p, len - 1) {
        return Err(Error::dims(
            "inputs",
            format!("{p}x{}", len - 1),
            format!("{}x{}", inputs.nrows(), inputs.ncols()),
        ));
    }
    if z0.len() != m || p0.shape() != (m, m) {
        return Err(Error::dims("latent prior", m, z0.len()));
    }
    if !linalg::is_psd(p0, 1e-12, 1e-10) {
        return Err(Error::NotPsd {
            what: "initial latent covariance".into(),
        });
    }

    let kernel_obs = GLKernel::with_memory(&params.alpha_obs, len, memory);
    let kernel_lat = GLKernel::with_memory(&params.alpha_lat, len, memory);
    let x_ring = frac_diff_matrix(observed, &kernel_obs)?;

    let steps = len - 1;
    let mut out = FilterResult {
        z_hat: DMatrix::zeros(m, steps),
        p_hat: Vec::with_capacity(steps),
        z_tilde: DMatrix::zeros(m, steps),
        p_tilde: Vec::with_capacity(steps),
        gains: Vec::with_capacity(steps),
        innovations: DMatrix::zeros(n, steps),
    };

    let sigma1_inv = SpdFactor::new(&params.sigma1).map(|f| f.inverse());
    let info_gain = sigma1_inv
        .as_ref()
        .map(|w| params.a12.transpose() * w * &params.a12);
    let psi1 = if kernel_lat.horizon() >= 1 && m > 0 {
        DMatrix::from_diagonal(&DVector::from_row_slice(kernel_lat.lag(1)))
    } else {
        DMatrix::zeros(m, m)
    };
    let transition = &params.a22 - &psi1;

    for k in 0..steps {
        let (z_pred, p_pred) = if k == 0 {
            (z0.clone(), linalg::symmetrized(p0.clone()))
        } else {
            predict(params, observed, inputs, &out, &kernel_lat, &transition, k)
        };

        let mut y = x_ring.column(k + 1) - &params.a11 * observed.column(k);
        if p > 0 {
            y -= &params.b1 * inputs.column(k);
        }
        let innovation = &y - &params.a12 * &z_pred;

        let (z_filt, p_filt, gain) = if m == 0 {
            (z_pred.clone(), p_pred.clone(), DMatrix::zeros(0, n))
        } else {
            let a12_p = &params.a12 * &p_pred;
            let s = &params.sigma1 + &a12_p * params.a12.transpose();
            let s_factor = SpdFactor::new(&s).ok_or_else(|| {
                Error::singular(format!("innovation covariance not invertible at timestep {k}"))
            })?;
            let gain = s_factor.solve(&a12_p).transpose();
            let z_filt = &z_pred + &gain * &innovation;
            let p_filt = match (&info_gain, SpdFactor::new(&p_pred)) {
                (Some(info), Some(pf)) => SpdFactor::new(&(info + pf.inverse()))
                    .map(|f| f.inverse())
                    .unwrap_or_else(|| joseph(&p_pred, &gain, params)),
                _ => joseph(&p_pred, &gain, params),
            };
            (z_filt, linalg::symmetrized(p_filt), gain)
        };

        out.z_tilde.set_column(k, &z_pred);
        out.z_hat.set_column(k, &z_filt);
        out.innovations.set_column(k, &innovation);
        out.p_tilde.push(p_pred);
        out.p_hat.push(p_filt);
        out.gains.push(gain);
    }
    Ok(out)
}

fn predict<T: Scalar>(
    params: &ModelParams<T>,
    observed: &DMatrix<T>,
    inputs: &DMatrix<T>,
    out: &FilterResult<T>,
    kernel: &GLKernel<T>,
    transition: &DMatrix<T>,
    k: usize,
) -> (DVector<T>, DMatrix<T>) {
    let m = params.m();
    let mut z = &params.a22 * out.z_hat.column(k - 1) + &params.a21 * observed.column(k - 1);
    if params.p() > 0 {
        z += &params.b2 * inputs.column(k - 1);
    }
    for j in 1..=kernel.max_lag(k) {
        let psi = kernel.lag(j);
        let prev = out.z_hat.column(k - j);
        for i in 0..m {
            z[i] -= psi[i] * prev[i];
        }
    }

    let mut cov = transition * &out.p_hat[k - 1] * transition.transpose() + &params.sigma2;
    {
        let acc = cov.as_mut_slice();
        for j in 2..=kernel.max_lag(k) {
            let psi = kernel.lag(j);
            let past = out.p_hat[k - j].as_slice();
            // column-major m×m
            for b in 0..m {
                let pb = psi[b];
                for a in 0..m {
                    acc[b * m + a] += psi[a] * pb * past[b * m + a];
                }
            }
        }
    }
    linalg::symmetrize(&mut cov);
    (z, cov)
}

/// `(I − K A12) P̃ (I − K A12)ᵀ + K Σ1 Kᵀ`.
fn joseph<T: Scalar>(p_pred: &DMatrix<T>, gain: &DMatrix<T>, params: &ModelParams<T>) -> DMatrix<T> {
    let m = p_pred.nrows();
    let i_kh = DMatrix::identity(m, m) - gain * &params.a12;
    &i_kh * p_pred * i_kh.transpose() + gain * &params.sigma1 * gain.transpose()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn small_params() -> ModelParams<f64> {
        let mut p = ModelParams::zeros(vec![0.6, 0.9], vec![0.4], 0);
        p.a11 = DMatrix::from_row_slice(2, 2, &[0.1, 0.05, -0.02, 0.2]);
        p.a12 = DMatrix::from_row_slice(2, 1, &[0.5, -0.3]);
        p.a21 = DMatrix::from_row_slice(1, 2, &[0.1, 0.1]);
        p.a22 = DMatrix::from_row_slice(1, 1, &[0.2]);
        p.sigma1 *= 0.1;
        p.sigma2 *= 0.05;
        p
    }

    fn series(len: usize) -> TimeSeriesMatrix<f64> {
        TimeSeriesMatrix::new(DMatrix::from_fn(2, len, |i, t| ((t * (i + 2)) as f64 * 0.7).sin())).unwrap()
    }

    #[test]
    fn zero_coupling_gives_zero_gain() {
        let mut p = small_params();
        p.a12.fill(0.0);
        let x = series(12);
        let f = run_filter(&p, &x, &InputSequence::zeros(0, 11), &DVector::zeros(1), &DMatrix::identity(1, 1))
            .unwrap();
        for k in 0..f.steps() {
            assert!(f.gains[k].iter().all(|&g| g == 0.0));
            assert_eq!(f.z_hat.column(k), f.z_tilde.column(k));
            assert_relative_eq!(f.p_hat[k], f.p_tilde[k], epsilon = 1e-12);
        }
    }

    #[test]
    fn singular_innovation_names_timestep() {
        let mut p = small_params();
        p.sigma1.fill(0.0);
        let err = run_filter(&p, &series(5), &InputSequence::zeros(0, 4), &DVector::zeros(1), &DMatrix::zeros(1, 1))
            .unwrap_err();
        assert!(err.to_string().contains("timestep 0"), "{err}");
    }

    #[test]
    fn rejects_indefinite_prior_and_short_records() {
        let p = small_params();
        let bad = DMatrix::from_row_slice(1, 1, &[-1.0]);
        assert!(matches!(
            run_filter(&p, &series(5), &InputSequence::zeros(0, 4), &DVector::zeros(1), &bad),
            Err(Error::NotPsd { .. })
        ));
        assert!(run_filter(&p, &series(1), &InputSequence::zeros(0, 0), &DVector::zeros(1), &DMatrix::identity(1, 1))
            .is_err());
    }

    #[test]
    fn covariances_stay_psd_and_shrink() {
        let p = small_params();
        let f = run_filter(&p, &series(40), &InputSequence::zeros(0, 39), &DVector::zeros(1), &DMatrix::identity(1, 1))
            .unwrap();
        for k in 0..f.steps() {
            assert!(linalg::is_psd(&f.p_hat[k], 1e-12, 1e-8));
            assert!(linalg::is_psd(&(&f.p_tilde[k] - &f.p_hat[k]), 1e-12, 1e-10));
        }
    }

    #[test]
    fn truncated_memory_matches_full_when_long_enough() {
        let p = small_params();
        let x = series(15);
        let u = DMatrix::zeros(0, 14);
        let z0 = DVector::zeros(1);
        let p0 = DMatrix::identity(1, 1);
        let full = run_filter_with_memory(&p, x.values(), &u, &z0, &p0, None).unwrap();
        let wide = run_filter_with_memory(&p, x.values(), &u, &z0, &p0, Some(100)).unwrap();
        let short = run_filter_with_memory(&p, x.values(), &u, &z0, &p0, Some(3)).unwrap();
        assert_eq!(full.z_hat, wide.z_hat);
        assert!(full.z_hat != short.z_hat);
    }
}
