//! Closed-form maximization step and the expected complete-data
//! log-likelihood it maximizes.
//!
//! Each observed transition `t → t+1` (t = 0 … N−2) contributes the
//! regression `x̊_{t+1} = [A11 A12 B1] r_t + e1`, and each latent transition
//! with a filtered successor (t = 0 … N−3) contributes
//! `z̊_{t+1} = [A21 A22 B2] r_t + e2`, where `r_t = (x_t, z_t, u_t)`. Latent
//! quantities enter through their filtered first and second moments, with
//! errors at distinct times treated as uncorrelated.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::fracops::{frac_diff_matrix, GLKernel};
use crate::linalg::{self, SingularPolicy, SpdFactor};
use crate::model::ModelParams;
use crate::scalar::Scalar;

/// Eigenvalue floor applied to updated noise covariances.
pub const COVARIANCE_FLOOR: f64 = 1e-10;

/// Everything the M-step consumes: observations, filtered latent moments and
/// the current input estimates.
#[derive(Debug, Clone)]
pub struct EStepQuantities<T: Scalar> {
    /// n × N observed record.
    pub observed: DMatrix<T>,
    /// m × (N−1) filtered latent means `ẑ_0 … ẑ_{N−2}`.
    pub z_hat: DMatrix<T>,
    /// Filtered latent covariances, one per column of `z_hat`.
    pub p_hat: Vec<DMatrix<T>>,
    /// p × (N−1) inputs.
    pub inputs: DMatrix<T>,
    pub kernel_obs: GLKernel<T>,
    pub kernel_lat: GLKernel<T>,
}

impl<T: Scalar> EStepQuantities<T> {
    pub fn new(
        observed: DMatrix<T>,
        z_hat: DMatrix<T>,
        p_hat: Vec<DMatrix<T>>,
        inputs: DMatrix<T>,
        kernel_obs: GLKernel<T>,
        kernel_lat: GLKernel<T>,
    ) -> Result<Self> {
        let (n, len) = observed.shape();
        let m = z_hat.nrows();
        if len < 2 {
            return Err(Error::TooShort { needed: 2, got: len });
        }
        if kernel_obs.channels() != n {
            return Err(Error::dims("observed kernel channels", n, kernel_obs.channels()));
        }
        if kernel_lat.channels() != m {
            return Err(Error::dims("latent kernel channels", m, kernel_lat.channels()));
        }
        if z_hat.ncols() != len - 1 {
            return Err(Error::dims("z_hat columns", len - 1, z_hat.ncols()));
        }
        if p_hat.len() != len - 1 || p_hat.iter().any(|p| p.shape() != (m, m)) {
            return Err(Error::dims("P_hat sequence", format!("{} of {m}x{m}", len - 1), p_hat.len()));
        }
        if inputs.ncols() != len - 1 {
            return Err(Error::dims("input columns", len - 1, inputs.ncols()));
        }
        kernel_obs.check_covers(len - 1)?;
        if m > 0 {
            kernel_lat.check_covers(len - 2)?;
        }
        Ok(Self {
            observed,
            z_hat,
            p_hat,
            inputs,
            kernel_obs,
            kernel_lat,
        })
    }

    pub fn n(&self) -> usize {
        self.observed.nrows()
    }

    pub fn m(&self) -> usize {
        self.z_hat.nrows()
    }

    pub fn p(&self) -> usize {
        self.inputs.nrows()
    }

    pub fn len(&self) -> usize {
        self.observed.ncols()
    }

    pub fn is_empty(&self) -> bool {
        self.observed.ncols() == 0
    }

    fn regressor(&self, t: usize) -> DVector<T> {
        let (n, m, p) = (self.n(), self.m(), self.p());
        let mut r = DVector::zeros(n + m + p);
        r.rows_mut(0, n).copy_from(&self.observed.column(t));
        r.rows_mut(n, m).copy_from(&self.z_hat.column(t));
        r.rows_mut(n + m, p).copy_from(&self.inputs.column(t));
        r
    }
}

/// Summed first/second moments of the two block regressions.
#[derive(Debug, Clone)]
pub struct SufficientStats<T: Scalar> {
    pub n: usize,
    pub m: usize,
    pub p: usize,
    /// Number of observed transitions (N − 1).
    pub t_obs: usize,
    /// Number of latent transitions (N − 2, or 0 without latents).
    pub t_lat: usize,
    /// Σ E[r rᵀ] over observed transitions.
    pub gram_obs: DMatrix<T>,
    /// Σ E[r x̊ᵀ].
    pub cross_obs: DMatrix<T>,
    /// Σ x̊ x̊ᵀ.
    pub target_obs: DMatrix<T>,
    pub gram_lat: DMatrix<T>,
    /// Σ E[r z̊ᵀ], including the `P̂_t Ψ₁ᵀ` term in the latent block.
    pub cross_lat: DMatrix<T>,
    /// Σ E[z̊ z̊ᵀ] = Σ (z̊ z̊ᵀ + Σ_j Ψ_j P̂ Ψ_jᵀ).
    pub target_lat: DMatrix<T>,
}

impl<T: Scalar> SufficientStats<T> {
    pub fn from_estep(e: &EStepQuantities<T>) -> Result<Self> {
        let (n, m, p) = (e.n(), e.m(), e.p());
        let len = e.len();
        let d = n + m + p;
        let x_ring = frac_diff_matrix(&e.observed, &e.kernel_obs)?;

        let mut gram_obs = DMatrix::zeros(d, d);
        let mut cross_obs = DMatrix::zeros(d, n);
        let mut target_obs = DMatrix::zeros(n, n);
        let mut gram_lat = DMatrix::zeros(d, d);
        let mut cross_lat = DMatrix::zeros(d, m);
        let mut target_lat = DMatrix::zeros(m, m);
        let t_lat = if m > 0 { len - 2 } else { 0 };

        let z_ring = if m > 0 {
            frac_diff_matrix(&e.z_hat, &e.kernel_lat)?
        } else {
            DMatrix::zeros(0, len - 1)
        };
        let psi1 = if m > 0 && e.kernel_lat.horizon() >= 1 {
            e.kernel_lat.lag(1).to_vec()
        } else {
            vec![T::zero(); m]
        };

        for t in 0..len - 1 {
            let r = e.regressor(t);
            let xr = x_ring.column(t + 1);
            let mut rr = &r * r.transpose();
            {
                let mut block = rr.view_mut((n, n), (m, m));
                block += &e.p_hat[t];
            }
            gram_obs += &rr;
            cross_obs.ger(T::one(), &r, &xr, T::one());
            target_obs.ger(T::one(), &xr, &xr, T::one());

            if m > 0 && t + 1 < len - 1 {
                let zr = z_ring.column(t + 1);
                gram_lat += &rr;
                cross_lat.ger(T::one(), &r, &zr, T::one());
                let mut block = cross_lat.view_mut((n, 0), (m, m));
                for a in 0..m {
                    for b in 0..m {
                        block[(a, b)] += e.p_hat[t][(a, b)] * psi1[b];
                    }
                }
                target_lat.ger(T::one(), &zr, &zr, T::one());
            }
        }

        if t_lat > 0 {
            target_lat += lagged_covariance_sum(&e.p_hat, &e.kernel_lat, t_lat);
        }
        linalg::symmetrize(&mut gram_obs);
        linalg::symmetrize(&mut gram_lat);
        linalg::symmetrize(&mut target_obs);
        linalg::symmetrize(&mut target_lat);

        Ok(Self {
            n,
            m,
            p,
            t_obs: len - 1,
            t_lat,
            gram_obs,
            cross_obs,
            target_obs,
            gram_lat,
            cross_lat,
            target_lat,
        })
    }

    /// Σ_t E[e1 e1ᵀ] for the observed coefficient block `w = [A11 A12 B1]`.
    pub fn residual_obs(&self, w: &DMatrix<T>) -> DMatrix<T> {
        residual_moment(&self.target_obs, &self.cross_obs, &self.gram_obs, w)
    }

    /// Σ_t E[e2 e2ᵀ] for `w = [A21 A22 B2]`.
    pub fn residual_lat(&self, w: &DMatrix<T>) -> DMatrix<T> {
        residual_moment(&self.target_lat, &self.cross_lat, &self.gram_lat, w)
    }
}

fn residual_moment<T: Scalar>(
    target: &DMatrix<T>,
    cross: &DMatrix<T>,
    gram: &DMatrix<T>,
    w: &DMatrix<T>,
) -> DMatrix<T> {
    let wc = w * cross;
    let mut s = target - &wc - wc.transpose() + w * gram * w.transpose();
    linalg::symmetrize(&mut s);
    s
}

/// `Σ_{k=1}^{K} Σ_{j=0}^{k} Ψ_j P̂_{k−j} Ψ_jᵀ`, computed through cumulative
/// sums of `ψ_j ψ_jᵀ` so the cost stays linear in K.
fn lagged_covariance_sum<T: Scalar>(p_hat: &[DMatrix<T>], kernel: &GLKernel<T>, last: usize) -> DMatrix<T> {
    let m = kernel.channels();
    // cumulative[l][(a, b)] = Σ_{j=0}^{l} ψ_j,a ψ_j,b
    let reach = kernel.max_lag(last);
    let mut cumulative = Vec::with_capacity(reach + 1);
    let mut acc = DMatrix::<T>::zeros(m, m);
    for j in 0..=reach {
        let psi = kernel.lag(j);
        for a in 0..m {
            for b in 0..m {
                acc[(a, b)] += psi[a] * psi[b];
            }
        }
        cumulative.push(acc.clone());
    }
    let mut out = DMatrix::zeros(m, m);
    for (i, p) in p_hat.iter().enumerate().take(last + 1) {
        let c = &cumulative[kernel.max_lag(last - i)];
        out += p.component_mul(c);
    }
    // the k = 0 term (P̂_0) is not part of the sum
    out -= &p_hat[0];
    out
}

/// How the noise covariances are updated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum SigmaUpdate {
    /// Symmetrized expected residual second moment at the new coefficients.
    #[default]
    FullResidual,
    /// Residual-times-target form `Σ (target − W r) targetᵀ / T`, symmetrized.
    /// Coincides with the full form at the regression optimum.
    ResidualTarget,
}

#[derive(Debug, Clone, Copy)]
pub struct MStepOptions {
    pub singular: SingularPolicy,
    pub sigma: SigmaUpdate,
    /// Lower bound on the eigenvalues of `Σ1` (never below
    /// [`COVARIANCE_FLOOR`]). Clipping the eigenvalues of the residual moment
    /// is the exact maximizer over `{Σ1 ⪰ floor·I}`.
    pub obs_noise_floor: f64,
}

impl Default for MStepOptions {
    fn default() -> Self {
        Self {
            singular: SingularPolicy::Ridge,
            sigma: SigmaUpdate::FullResidual,
            obs_noise_floor: COVARIANCE_FLOOR,
        }
    }
}

#[derive(Debug, Clone)]
pub struct MStepOutput<T: Scalar> {
    pub params: ModelParams<T>,
    /// A Gram matrix needed a ridge to be solved.
    pub regularized: bool,
}

/// Closed-form update of every block of Θ from E-step quantities.
pub fn m_step<T: Scalar>(e: &EStepQuantities<T>, options: MStepOptions) -> Result<MStepOutput<T>> {
    let stats = SufficientStats::from_estep(e)?;
    m_step_from_stats(
        &stats,
        e.kernel_obs.alphas().to_vec(),
        e.kernel_lat.alphas().to_vec(),
        options,
    )
}

pub fn m_step_from_stats<T: Scalar>(
    stats: &SufficientStats<T>,
    alpha_obs: Vec<T>,
    alpha_lat: Vec<T>,
    options: MStepOptions,
) -> Result<MStepOutput<T>> {
    let (n, m, p) = (stats.n, stats.m, stats.p);
    let mut params = ModelParams::zeros(alpha_obs, alpha_lat, p);
    let floor = T::lit(COVARIANCE_FLOOR);

    let (w1t, ridge1) = linalg::solve_gram(&stats.gram_obs, &stats.cross_obs, options.singular, || {
        "observed-block Gram matrix".to_string()
    })?;
    let w1 = w1t.transpose();
    params.a11 = w1.columns(0, n).into_owned();
    params.a12 = w1.columns(n, m).into_owned();
    params.b1 = w1.columns(n + m, p).into_owned();
    let s1 = match options.sigma {
        SigmaUpdate::FullResidual => stats.residual_obs(&w1),
        SigmaUpdate::ResidualTarget => &stats.target_obs - &w1 * &stats.cross_obs,
    };
    let floor1 = T::lit(options.obs_noise_floor.max(COVARIANCE_FLOOR));
    params.sigma1 = linalg::floor_eigenvalues(&(s1 / T::from_usize_lossy(stats.t_obs)), floor1);

    let mut ridge2 = false;
    if m > 0 {
        if stats.t_lat == 0 {
            return Err(Error::TooShort { needed: 3, got: stats.t_obs + 1 });
        }
        let (w2t, r) = linalg::solve_gram(&stats.gram_lat, &stats.cross_lat, options.singular, || {
            "latent-block Gram matrix".to_string()
        })?;
        ridge2 = r;
        let w2 = w2t.transpose();
        params.a21 = w2.columns(0, n).into_owned();
        params.a22 = w2.columns(n, m).into_owned();
        params.b2 = w2.columns(n + m, p).into_owned();
        let s2 = match options.sigma {
            SigmaUpdate::FullResidual => stats.residual_lat(&w2),
            SigmaUpdate::ResidualTarget => &stats.target_lat - &w2 * &stats.cross_lat,
        };
        params.sigma2 = linalg::floor_eigenvalues(&(s2 / T::from_usize_lossy(stats.t_lat)), floor);
    }

    Ok(MStepOutput {
        params,
        regularized: ridge1 || ridge2,
    })
}

/// Observed coefficient block `[A11 A12 B1]`.
pub fn observed_block<T: Scalar>(params: &ModelParams<T>) -> DMatrix<T> {
    let (n, m, p) = (params.n(), params.m(), params.p());
    let mut w = DMatrix::zeros(n, n + m + p);
    w.columns_mut(0, n).copy_from(&params.a11);
    w.columns_mut(n, m).copy_from(&params.a12);
    w.columns_mut(n + m, p).copy_from(&params.b1);
    w
}

/// Latent coefficient block `[A21 A22 B2]`.
pub fn latent_block<T: Scalar>(params: &ModelParams<T>) -> DMatrix<T> {
    let (n, m, p) = (params.n(), params.m(), params.p());
    let mut w = DMatrix::zeros(m, n + m + p);
    w.columns_mut(0, n).copy_from(&params.a21);
    w.columns_mut(n, m).copy_from(&params.a22);
    w.columns_mut(n + m, p).copy_from(&params.b2);
    w
}

/// Expected complete-data log-likelihood with additive constants dropped:
///
/// `Q = −(T₁/2) ln|Σ1| − ½ tr(Σ1⁻¹ S1) − (T₂/2) ln|Σ2| − ½ tr(Σ2⁻¹ S2)`
///
/// where `S1`, `S2` are the summed expected residual second moments, `T₁` the
/// number of observed transitions and `T₂` the number of latent transitions.
pub fn q_value<T: Scalar>(theta: &ModelParams<T>, e: &EStepQuantities<T>) -> Result<T> {
    let stats = SufficientStats::from_estep(e)?;
    q_value_from_stats(theta, &stats)
}

pub fn q_value_from_stats<T: Scalar>(theta: &ModelParams<T>, stats: &SufficientStats<T>) -> Result<T> {
    if (theta.n(), theta.m(), theta.p()) != (stats.n, stats.m, stats.p) {
        return Err(Error::dims(
            "Q-value parameter dimensions",
            format!("{:?}", (stats.n, stats.m, stats.p)),
            format!("{:?}", (theta.n(), theta.m(), theta.p())),
        ));
    }
    let half = T::lit(0.5);
    let term = |sigma: &DMatrix<T>, s: DMatrix<T>, count: usize, what: &str| -> Result<T> {
        if sigma.nrows() == 0 || count == 0 {
            return Ok(T::zero());
        }
        let f = SpdFactor::new(sigma).ok_or_else(|| Error::NotPsd {
            what: format!("{what} (must be positive definite)"),
        })?;
        let tr = f.solve(&s).trace();
        Ok(-half * T::from_usize_lossy(count) * f.ln_det() - half * tr)
    };
    let q1 = term(&theta.sigma1, stats.residual_obs(&observed_block(theta)), stats.t_obs, "Sigma1")?;
    let q2 = term(&theta.sigma2, stats.residual_lat(&latent_block(theta)), stats.t_lat, "Sigma2")?;
    Ok(q1 + q2)
}
