//! Reference implementations shared by the test targets.
#![allow(dead_code)]

use fracnet::em::EStepQuantities;
use fracnet::fracops::{gl_coeff, GLKernel};
use fracnet::model::ModelParams;
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// ψ(α, j) = Γ(j − α) / (Γ(−α) Γ(j + 1)) through signed log-gamma.
pub fn gamma_ratio(alpha: f64, j: usize) -> f64 {
    let (ln_num, s_num) = libm::lgamma_r(j as f64 - alpha);
    let (ln_den, s_den) = libm::lgamma_r(-alpha);
    let ln_fact = libm::lgamma(j as f64 + 1.0);
    (s_num * s_den) as f64 * (ln_num - ln_den - ln_fact).exp()
}

/// Plain first-order recursion `s_{k+1} = A s_k + B u_k + s_k`, i.e. transition
/// `A + I`, evaluated row by row.
pub fn lti(a: &DMatrix<f64>, b: &DMatrix<f64>, s0: &DVector<f64>, u: &DMatrix<f64>, steps: usize) -> DMatrix<f64> {
    let d = s0.len();
    let mut s = DMatrix::zeros(d, steps);
    s.set_column(0, s0);
    for k in 0..steps - 1 {
        for i in 0..d {
            let mut acc = 0.0;
            for j in 0..d {
                acc += a[(i, j)] * s[(j, k)];
            }
            for q in 0..b.ncols() {
                acc += b[(i, q)] * u[(q, k)];
            }
            s[(i, k + 1)] = acc + s[(i, k)];
        }
    }
    s
}

pub struct Classical {
    pub z: Vec<DVector<f64>>,
    pub p: Vec<DMatrix<f64>>,
}

/// Textbook Kalman filter for `z_{k+1} = A22 z_k + A21 x_k + B2 u_k + w`,
/// `x_{k+1} − A11 x_k − B1 u_k = A12 z_k + v`, covariance update in the
/// `(I − K H) P` form.
pub fn classical_filter(
    th: &ModelParams<f64>,
    x: &DMatrix<f64>,
    u: &DMatrix<f64>,
    z0: &DVector<f64>,
    p0: &DMatrix<f64>,
) -> Classical {
    let m = th.m();
    let h = &th.a12;
    let mut out = Classical { z: vec![], p: vec![] };
    let (mut z_pred, mut p_pred) = (z0.clone(), p0.clone());
    for k in 0..x.ncols() - 1 {
        if k > 0 {
            z_pred = &th.a22 * &out.z[k - 1] + &th.a21 * x.column(k - 1) + &th.b2 * u.column(k - 1);
            p_pred = &th.a22 * &out.p[k - 1] * th.a22.transpose() + &th.sigma2;
        }
        let y = x.column(k + 1) - &th.a11 * x.column(k) - &th.b1 * u.column(k);
        let s = h * &p_pred * h.transpose() + &th.sigma1;
        let gain = &p_pred * h.transpose() * s.try_inverse().unwrap();
        out.z.push(&z_pred + &gain * (y - h * &z_pred));
        out.p.push((DMatrix::identity(m, m) - &gain * h) * &p_pred);
    }
    out
}

pub fn small_spd(d: usize, rng: &mut ChaCha8Rng) -> DMatrix<f64> {
    let l = DMatrix::from_fn(d, d, |_, _| rng.random_range(-0.5..0.5));
    &l * l.transpose() + DMatrix::identity(d, d) * 0.2
}

pub fn psi(alphas: &[f64], j: usize) -> DMatrix<f64> {
    DMatrix::from_diagonal(&DVector::from_iterator(alphas.len(), alphas.iter().map(|&a| gl_coeff(a, j))))
}

/// Δ^α of column `k` with zero pre-history.
pub fn frac_column(s: &DMatrix<f64>, alphas: &[f64], k: usize) -> DVector<f64> {
    (0..=k).fold(DVector::zeros(s.nrows()), |acc, j| acc + psi(alphas, j) * s.column(k - j))
}

pub fn gaussian_term(sigma: &DMatrix<f64>, second_moment: &DMatrix<f64>) -> f64 {
    let Some(chol) = sigma.clone().cholesky() else {
        return f64::NEG_INFINITY;
    };
    let ln_det = 2.0 * chol.l().diagonal().iter().map(|v| v.ln()).sum::<f64>();
    -0.5 * ln_det - 0.5 * chol.solve(second_moment).trace()
}

/// Expected complete-data log-likelihood with latent states independent
/// across time, `z_t ~ N(ẑ_t, P̂_t)`.
pub fn q_oracle(th: &ModelParams<f64>, e: &EStepQuantities<f64>) -> f64 {
    let (x, zh, u) = (&e.observed, &e.z_hat, &e.inputs);
    let len = x.ncols();
    let m = th.m();
    let mut q = 0.0;
    for t in 0..len - 1 {
        let mean = frac_column(x, &th.alpha_obs, t + 1) - &th.a11 * x.column(t) - &th.a12 * zh.column(t)
            - &th.b1 * u.column(t);
        let second = &mean * mean.transpose() + &th.a12 * &e.p_hat[t] * th.a12.transpose();
        q += gaussian_term(&th.sigma1, &second);
    }
    if m == 0 {
        return q;
    }
    for t in 0..len - 2 {
        let mean = frac_column(zh, &th.alpha_lat, t + 1) - &th.a21 * x.column(t) - &th.a22 * zh.column(t)
            - &th.b2 * u.column(t);
        // z̊_{t+1} − A22 z_t = Σ_s C_s z_s
        let mut second = &mean * mean.transpose();
        for j in 0..=t + 1 {
            let s = t + 1 - j;
            let mut c = psi(&th.alpha_lat, j);
            if s == t {
                c -= &th.a22;
            }
            second += &c * &e.p_hat[s] * c.transpose();
        }
        q += gaussian_term(&th.sigma2, &second);
    }
    q
}

pub fn random_spd(d: usize, scale: f64, rng: &mut ChaCha8Rng) -> DMatrix<f64> {
    let l = DMatrix::from_fn(d, d, |_, _| rng.random_range(-1.0..1.0));
    (&l * l.transpose() + DMatrix::identity(d, d)) * scale
}

pub fn random_estep(n: usize, m: usize, p: usize, len: usize, rng: &mut ChaCha8Rng) -> EStepQuantities<f64> {
    let alpha_obs: Vec<f64> = (0..n).map(|_| rng.random_range(0.2..1.5)).collect();
    let alpha_lat: Vec<f64> = (0..m).map(|_| rng.random_range(0.2..1.5)).collect();
    EStepQuantities::new(
        DMatrix::from_fn(n, len, |_, _| rng.random_range(-2.0..2.0)),
        DMatrix::from_fn(m, len - 1, |_, _| rng.random_range(-2.0..2.0)),
        (0..len - 1).map(|_| random_spd(m, 0.1, rng)).collect(),
        DMatrix::from_fn(p, len - 1, |_, _| rng.random_range(-1.0..1.0)),
        GLKernel::new(&alpha_obs, len - 1),
        GLKernel::new(&alpha_lat, len - 1),
    )
    .unwrap()
}

/// Every free scalar of Θ; symmetric entries of Σ move as a pair.
#[derive(Clone, Copy, Debug)]
pub enum Coord {
    Entry(usize, usize, usize),
    Sym(usize, usize, usize),
}

pub fn coords(th: &ModelParams<f64>) -> Vec<Coord> {
    let mut out = Vec::new();
    let blocks = [&th.a11, &th.a12, &th.a21, &th.a22, &th.b1, &th.b2];
    for (b, mat) in blocks.iter().enumerate() {
        for i in 0..mat.nrows() {
            for j in 0..mat.ncols() {
                out.push(Coord::Entry(b, i, j));
            }
        }
    }
    for (b, mat) in [&th.sigma1, &th.sigma2].iter().enumerate() {
        for i in 0..mat.nrows() {
            for j in i..mat.ncols() {
                out.push(Coord::Sym(b, i, j));
            }
        }
    }
    out
}

pub fn get(th: &ModelParams<f64>, c: Coord) -> f64 {
    match c {
        Coord::Entry(b, i, j) => [&th.a11, &th.a12, &th.a21, &th.a22, &th.b1, &th.b2][b][(i, j)],
        Coord::Sym(b, i, j) => [&th.sigma1, &th.sigma2][b][(i, j)],
    }
}

pub fn set(th: &ModelParams<f64>, c: Coord, v: f64) -> ModelParams<f64> {
    let mut out = th.clone();
    match c {
        Coord::Entry(b, i, j) => {
            [&mut out.a11, &mut out.a12, &mut out.a21, &mut out.a22, &mut out.b1, &mut out.b2][b][(i, j)] = v
        }
        Coord::Sym(b, i, j) => {
            let s = [&mut out.sigma1, &mut out.sigma2];
            s[b][(i, j)] = v;
            s[b][(j, i)] = v;
        }
    }
    out
}

/// Golden-section maximization of a unimodal function on `[lo, hi]`.
pub fn golden_max(f: impl Fn(f64) -> f64, mut lo: f64, mut hi: f64) -> f64 {
    let r = (5f64.sqrt() - 1.0) / 2.0;
    let mut a = hi - r * (hi - lo);
    let mut b = lo + r * (hi - lo);
    let (mut fa, mut fb) = (f(a), f(b));
    while hi - lo > 1e-10 {
        if fa < fb {
            lo = a;
            a = b;
            fa = fb;
            b = lo + r * (hi - lo);
            fb = f(b);
        } else {
            hi = b;
            b = a;
            fb = fa;
            a = hi - r * (hi - lo);
            fa = f(a);
        }
    }
    0.5 * (lo + hi)
}

pub fn instances() -> Vec<EStepQuantities<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(2718);
    (0..10)
        .map(|i| {
            let (n, m, p) = (1 + i % 3, 1 + i % 2, i % 2);
            random_estep(n, m, p, 12 + (i % 9), &mut rng)
        })
        .collect()
}

