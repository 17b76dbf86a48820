use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::fracops::GLKernel;
use crate::model::ModelParams;
use crate::scalar::Scalar;

/// Noiseless forecast from the end of a history.
#[derive(Debug, Clone)]
pub struct Forecast<T: Scalar> {
    /// n × h predictions of `x_L … x_{L+h−1}`.
    pub observed: DMatrix<T>,
    /// m × h latent values `z_{L−1} … z_{L+h−2}`, aligned with the filtered
    /// history so a forecast can be appended to it and continued.
    pub latent: DMatrix<T>,
}

/// Predict the observed block `horizon` steps past the end of `observed`
/// (n × L). `z_hat` holds the filtered latents `ẑ_0 … ẑ_{L−2}` and `inputs`
/// at least the `L − 1` historical input columns; future inputs are zero.
pub fn predict_k_steps<T: Scalar>(
    params: &ModelParams<T>,
    observed: &DMatrix<T>,
    z_hat: &DMatrix<T>,
    inputs: &DMatrix<T>,
    horizon: usize,
) -> Result<DMatrix<T>> {
    forecast(params, observed, z_hat, inputs, horizon, None).map(|f| f.observed)
}

/// Full forecast, optionally truncating the fractional memory.
pub fn forecast<T: Scalar>(
    params: &ModelParams<T>,
    observed: &DMatrix<T>,
    z_hat: &DMatrix<T>,
    inputs: &DMatrix<T>,
    horizon: usize,
    memory: Option<usize>,
) -> Result<Forecast<T>> {
    let (n, m, p) = (params.n(), params.m(), params.p());
    let hist = observed.ncols();
    if horizon == 0 {
        return Err(Error::InvalidArgument("horizon must be at least 1".into()));
    }
    if hist == 0 {
        return Err(Error::TooShort { needed: 1, got: 0 });
    }
    if observed.nrows() != n {
        return Err(Error::dims("observed history channels", n, observed.nrows()));
    }
    if z_hat.shape() != (m, hist - 1) {
        return Err(Error::dims(
            "latent history",
            format!("{m}x{}", hist - 1),
            format!("{}x{}", z_hat.nrows(), z_hat.ncols()),
        ));
    }
    if inputs.nrows() != p || inputs.ncols() + 1 < hist {
        return Err(Error::dims("input history", format!("{p}x{}", hist - 1), format!("{}x{}", inputs.nrows(), inputs.ncols())));
    }

    let d = n + m;
    let total = hist + horizon;
    let a = params.stacked_a();
    let b = params.stacked_b();
    let kernel = GLKernel::with_memory(&params.stacked_alpha(), total, memory);

    let mut state = DMatrix::<T>::zeros(d, total);
    state.view_mut((0, 0), (n, hist)).copy_from(observed);
    state.view_mut((n, 0), (m, hist - 1)).copy_from(z_hat);
    let input_at = |t: usize| -> DVector<T> {
        if t < inputs.ncols() {
            inputs.column(t).into_owned()
        } else {
            DVector::zeros(p)
        }
    };

    // the newest latent value is not filtered yet: propagate it from ẑ_{L−2}
    if hist >= 2 && m > 0 {
        let next = step(&a, &b, &kernel, &state, hist - 2, &input_at(hist - 2));
        state.view_mut((n, hist - 1), (m, 1)).copy_from(&next.rows(n, m));
    }
    for t in hist - 1..total - 1 {
        let next = step(&a, &b, &kernel, &state, t, &input_at(t));
        state.set_column(t + 1, &next);
    }
    Ok(Forecast {
        observed: state.view((0, hist), (n, horizon)).into_owned(),
        latent: state.view((n, hist - 1), (m, horizon)).into_owned(),
    })
}

/// `s[t+1] = A s[t] + B u[t] − Σ_{j=1}^{t+1} Ψ_j s[t+1−j]`.
fn step<T: Scalar>(
    a: &DMatrix<T>,
    b: &DMatrix<T>,
    kernel: &GLKernel<T>,
    state: &DMatrix<T>,
    t: usize,
    u: &DVector<T>,
) -> DVector<T> {
    let mut next = a * state.column(t);
    if !u.is_empty() {
        next += b * u;
    }
    let k = t + 1;
    for j in 1..=kernel.max_lag(k) {
        let psi = kernel.lag(j);
        let prev = state.column(k - j);
        for i in 0..next.len() {
            next[i] -= psi[i] * prev[i];
        }
    }
    next
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_model_predicts_zero() {
        let params = ModelParams::<f64>::zeros(vec![0.0; 2], vec![], 0);
        let x = DMatrix::from_element(2, 4, 3.0);
        let out = predict_k_steps(&params, &x, &DMatrix::zeros(0, 3), &DMatrix::zeros(0, 3), 1).unwrap();
        assert_eq!(out, DMatrix::zeros(2, 1));
    }

    #[test]
    fn rejects_misaligned_latent_history() {
        let params = ModelParams::<f64>::zeros(vec![0.5], vec![0.5], 0);
        let x = DMatrix::zeros(1, 4);
        assert!(predict_k_steps(&params, &x, &DMatrix::zeros(1, 4), &DMatrix::zeros(0, 3), 2).is_err());
        assert!(predict_k_steps(&params, &x, &DMatrix::zeros(1, 3), &DMatrix::zeros(0, 3), 0).is_err());
    }
}
