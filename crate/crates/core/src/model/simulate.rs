use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use super::{InputSequence, ModelParams, TimeSeriesMatrix};
use crate::error::{Error, Result};
use crate::fracops::GLKernel;
use crate::linalg;
use crate::scalar::Scalar;

/// Process-noise mode for [`simulate`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Noise {
    /// Deterministic trajectory, `e ≡ 0`.
    None,
    /// Gaussian noise from a ChaCha8 stream seeded with this value. Standard
    /// normals come from `rand_distr`'s ziggurat sampler and are coloured by
    /// the Cholesky factor of each covariance block.
    Seeded(u64),
}

#[derive(Debug, Clone)]
pub struct Simulation<T: Scalar> {
    pub observed: TimeSeriesMatrix<T>,
    pub latent: TimeSeriesMatrix<T>,
}

/// Run the forward recursion for `steps` samples (index 0 holds the initial
/// state). Initial states default to zero.
pub fn simulate<T: Scalar>(
    params: &ModelParams<T>,
    x0: Option<&DVector<T>>,
    z0: Option<&DVector<T>>,
    inputs: &InputSequence<T>,
    steps: usize,
    noise: Noise,
) -> Result<Simulation<T>> {
    params.validate()?;
    let (n, m, p) = (params.n(), params.m(), params.p());
    if steps == 0 {
        return Err(Error::InvalidArgument("steps must be at least 1".into()));
    }
    if inputs.dim() != p {
        return Err(Error::dims("input dimension", p, inputs.dim()));
    }
    if p > 0 && inputs.transitions() < steps - 1 {
        return Err(Error::dims("input transitions", steps - 1, inputs.transitions()));
    }
    let d = n + m;
    let a = params.stacked_a();
    let b = params.stacked_b();
    let kernel = GLKernel::new(&params.stacked_alpha(), steps - 1);

    let mut state = DMatrix::<T>::zeros(d, steps);
    if let Some(x0) = x0 {
        if x0.len() != n {
            return Err(Error::dims("x0", n, x0.len()));
        }
        state.view_mut((0, 0), (n, 1)).copy_from(x0);
    }
    if let Some(z0) = z0 {
        if z0.len() != m {
            return Err(Error::dims("z0", m, z0.len()));
        }
        state.view_mut((n, 0), (m, 1)).copy_from(z0);
    }

    let mut sampler = match noise {
        Noise::None => None,
        Noise::Seeded(seed) => Some((
            ChaCha8Rng::seed_from_u64(seed),
            linalg::psd_sqrt(&params.sigma1),
            linalg::psd_sqrt(&params.sigma2),
        )),
    };

    let mut noise_vec = vec![T::zero(); d];
    let mut memory = vec![T::zero(); d];
    for k in 0..steps - 1 {
        if let Some((rng, l1, l2)) = sampler.as_mut() {
            let xi1: Vec<T> = (0..n).map(|_| T::lit(StandardNormal.sample(rng))).collect();
            let xi2: Vec<T> = (0..m).map(|_| T::lit(StandardNormal.sample(rng))).collect();
            for i in 0..n {
                noise_vec[i] = (0..n).fold(T::zero(), |acc, j| acc + l1[(i, j)] * xi1[j]);
            }
            for i in 0..m {
                noise_vec[n + i] = (0..m).fold(T::zero(), |acc, j| acc + l2[(i, j)] * xi2[j]);
            }
        }

        // Σ_{j=1}^{k+1} Ψ_j s[k+1−j]
        memory.iter_mut().for_each(|v| *v = T::zero());
        for j in 1..=k + 1 {
            let psi = kernel.lag(j);
            let col = state.column(k + 1 - j);
            for i in 0..d {
                memory[i] += psi[i] * col[i];
            }
        }

        for i in 0..d {
            let mut acc = T::zero();
            for j in 0..d {
                acc += a[(i, j)] * state[(j, k)];
            }
            for q in 0..p {
                acc += b[(i, q)] * inputs.values()[(q, k)];
            }
            acc += noise_vec[i];
            state[(i, k + 1)] = acc - memory[i];
        }
    }

    let observed = TimeSeriesMatrix::new(state.rows(0, n).into_owned())?;
    let latent = if m > 0 {
        TimeSeriesMatrix::new(state.rows(n, m).into_owned())?
    } else {
        TimeSeriesMatrix::empty(steps)
    };
    Ok(Simulation { observed, latent })
}
