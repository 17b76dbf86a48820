//! Per-transition estimation of sparse unknown inputs.
//!
//! For each transition the input is the minimizer of
//!
//! ```text
//! f(u) = v1ᵀ W1 v1 + v2ᵀ W2 v2 + λ ‖u‖₁,   v1 = a1 − B1 u,  v2 = a2 − B2 u
//! ```
//!
//! where `a1`, `a2` are the observed and latent fractional-difference targets
//! with the state-driven part removed and `W1`, `W2` the noise precisions. The
//! input's conditional law is collapsed onto this minimizer; no input
//! uncertainty is carried forward.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fracops::{frac_diff_matrix, GLKernel};
use crate::linalg;
use crate::model::{InputSequence, ModelParams};
use crate::scalar::Scalar;

#[derive(Debug, Clone)]
pub struct InputProblem<T: Scalar> {
    pub a1: DVector<T>,
    pub a2: DVector<T>,
    pub b1: DMatrix<T>,
    pub b2: DMatrix<T>,
    pub w1: DMatrix<T>,
    pub w2: DMatrix<T>,
    pub lambda: T,
}

#[derive(Debug, Clone, Copy)]
pub struct SolverOptions {
    /// Stationarity tolerance on the soft-threshold optimality condition.
    pub tol: f64,
    pub max_iter: usize,
    /// Monotone FISTA momentum; plain proximal gradient when false.
    pub accelerate: bool,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            tol: 1e-9,
            max_iter: 5000,
            accelerate: true,
        }
    }
}

#[derive(Debug, Clone)]
pub struct InputSolution<T: Scalar> {
    pub u: DVector<T>,
    pub objective: T,
    pub iterations: usize,
    pub converged: bool,
    /// Objective at the accepted iterate after each iteration (starting at
    /// `u = 0`).
    pub objective_trace: Vec<T>,
}

pub fn soft_threshold<T: Scalar>(v: T, threshold: T) -> T {
    if v > threshold {
        v - threshold
    } else if v < -threshold {
        v + threshold
    } else {
        T::zero()
    }
}

impl<T: Scalar> InputProblem<T> {
    pub fn dim(&self) -> usize {
        self.b1.ncols()
    }

    fn validate(&self) -> Result<()> {
        let p = self.dim();
        if self.b1.nrows() != self.a1.len() || self.w1.shape() != (self.a1.len(), self.a1.len()) {
            return Err(Error::dims("observed input block", self.a1.len(), self.b1.nrows()));
        }
        if self.b2.shape() != (self.a2.len(), p) || self.w2.shape() != (self.a2.len(), self.a2.len()) {
            return Err(Error::dims("latent input block", self.a2.len(), self.b2.nrows()));
        }
        if !(self.lambda >= T::zero()) {
            return Err(Error::InvalidArgument("L1 weight must be non-negative".into()));
        }
        Ok(())
    }

    /// Curvature `H = 2(B1ᵀW1B1 + B2ᵀW2B2)` and linear term
    /// `c = 2(B1ᵀW1a1 + B2ᵀW2a2)`, so that the smooth part has gradient
    /// `H u − c`.
    fn quadratic(&self) -> (DMatrix<T>, DVector<T>) {
        let two = T::lit(2.0);
        let b1w = self.b1.transpose() * &self.w1;
        let b2w = self.b2.transpose() * &self.w2;
        let h = (&b1w * &self.b1 + &b2w * &self.b2) * two;
        let c = (&b1w * &self.a1 + &b2w * &self.a2) * two;
        (linalg::symmetrized(h), c)
    }

    /// Smallest L1 weight for which `u = 0` is optimal.
    pub fn lambda_max(&self) -> T {
        let (_, c) = self.quadratic();
        c.iter().fold(T::zero(), |m, v| m.max(v.abs()))
    }

    pub fn objective(&self, u: &DVector<T>) -> T {
        let v1 = &self.a1 - &self.b1 * u;
        let v2 = &self.a2 - &self.b2 * u;
        let l1 = u.iter().fold(T::zero(), |s, v| s + v.abs());
        (v1.transpose() * &self.w1 * &v1)[0] + (v2.transpose() * &self.w2 * &v2)[0] + self.lambda * l1
    }
}

fn stationary<T: Scalar>(u: &DVector<T>, grad: &DVector<T>, lambda: T, tol: T) -> bool {
    u.iter().zip(grad.iter()).all(|(&ui, &gi)| {
        if ui > T::zero() {
            (gi + lambda).abs() <= tol
        } else if ui < T::zero() {
            (gi - lambda).abs() <= tol
        } else {
            gi.abs() <= lambda + tol
        }
    })
}

/// Proximal gradient with step `1/L`, `L = λ_max(H)`.
pub fn solve_input<T: Scalar>(problem: &InputProblem<T>, opts: SolverOptions) -> Result<InputSolution<T>> {
    problem.validate()?;
    if !(opts.tol > 0.0) || opts.max_iter == 0 {
        return Err(Error::InvalidArgument("solver needs tol > 0 and max_iter >= 1".into()));
    }
    let p = problem.dim();
    let tol = T::lit(opts.tol);
    let lambda = problem.lambda;
    let (h, c) = problem.quadratic();
    let lipschitz = linalg::max_eigenvalue(&h).unwrap_or(T::zero());

    let mut u = DVector::<T>::zeros(p);
    let mut f_u = problem.objective(&u);
    let mut trace = vec![f_u];
    if p == 0 {
        return Ok(InputSolution {
            u,
            objective: f_u,
            iterations: 0,
            converged: true,
            objective_trace: trace,
        });
    }
    if !(lipschitz > T::lit(1e-300_f64.max(f64::MIN_POSITIVE))) {
        if lambda == T::zero() {
            return Err(Error::UnidentifiableInput);
        }
        return Ok(InputSolution {
            u,
            objective: f_u,
            iterations: 0,
            converged: true,
            objective_trace: trace,
        });
    }

    let step = T::one() / lipschitz;
    let threshold = lambda * step;
    let mut y = u.clone();
    let mut theta = T::one();
    let mut grad_u = &h * &u - &c;
    if stationary(&u, &grad_u, lambda, tol) {
        return Ok(InputSolution {
            u,
            objective: f_u,
            iterations: 0,
            converged: true,
            objective_trace: trace,
        });
    }

    for iter in 1..=opts.max_iter {
        let grad_y = &h * &y - &c;
        let cand = (&y - grad_y * step).map(|v| soft_threshold(v, threshold));
        // objective change measured directly from the quadratic model, which
        // stays accurate where differencing two objective values would not
        let d = &cand - &u;
        let l1_change = cand.iter().zip(u.iter()).fold(T::zero(), |s, (a, b)| s + a.abs() - b.abs());
        let delta = grad_u.dot(&d) + d.dot(&(&h * &d)) * T::lit(0.5) + lambda * l1_change;
        let prev = u.clone();
        if delta <= T::zero() {
            u = cand.clone();
            f_u += delta;
        }
        trace.push(f_u);

        if opts.accelerate {
            let theta_next = (T::one() + (T::one() + T::lit(4.0) * theta * theta).sqrt()) * T::lit(0.5);
            y = &u + (&cand - &u) * (theta / theta_next) + (&u - &prev) * ((theta - T::one()) / theta_next);
            theta = theta_next;
        } else {
            y = u.clone();
        }

        grad_u = &h * &u - &c;
        if stationary(&u, &grad_u, lambda, tol) {
            return Ok(InputSolution {
                objective: problem.objective(&u),
                u,
                iterations: iter,
                converged: true,
                objective_trace: trace,
            });
        }
    }
    Ok(InputSolution {
        objective: problem.objective(&u),
        u,
        iterations: opts.max_iter,
        converged: false,
        objective_trace: trace,
    })
}

/// L1 weight used for input estimation. Serializes as a number or `"auto"`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "PenaltyRepr", into = "PenaltyRepr")]
pub enum Penalty {
    Fixed(f64),
    /// `0.1 · λ_max` of the first transition with a nonzero `λ_max`.
    Auto,
}

#[derive(Serialize, Deserialize)]
#[serde(untagged)]
enum PenaltyRepr {
    Value(f64),
    Word(String),
}

impl TryFrom<PenaltyRepr> for Penalty {
    type Error = String;

    fn try_from(r: PenaltyRepr) -> std::result::Result<Self, String> {
        match r {
            PenaltyRepr::Value(v) => Ok(Penalty::Fixed(v)),
            PenaltyRepr::Word(w) if w == "auto" => Ok(Penalty::Auto),
            PenaltyRepr::Word(w) => Err(format!("expected a number or \"auto\", got {w:?}")),
        }
    }
}

impl From<Penalty> for PenaltyRepr {
    fn from(p: Penalty) -> Self {
        match p {
            Penalty::Fixed(v) => PenaltyRepr::Value(v),
            Penalty::Auto => PenaltyRepr::Word("auto".into()),
        }
    }
}

/// Builds the per-transition problems for a parameter set and filtered
/// latent trajectory.
pub struct InputProblems<T: Scalar> {
    x_ring: DMatrix<T>,
    z_ring: DMatrix<T>,
    w1: DMatrix<T>,
    w2: DMatrix<T>,
}

impl<T: Scalar> InputProblems<T> {
    pub fn new(
        params: &ModelParams<T>,
        observed: &DMatrix<T>,
        z_hat: &DMatrix<T>,
        memory: Option<usize>,
    ) -> Result<Self> {
        let len = observed.ncols();
        if len < 2 {
            return Err(Error::TooShort { needed: 2, got: len });
        }
        if observed.nrows() != params.n() {
            return Err(Error::dims("observed channels", params.n(), observed.nrows()));
        }
        if z_hat.shape() != (params.m(), len - 1) {
            return Err(Error::dims("z_hat", format!("{}x{}", params.m(), len - 1), z_hat.ncols()));
        }
        let kernel_obs = GLKernel::with_memory(&params.alpha_obs, len, memory);
        let kernel_lat = GLKernel::with_memory(&params.alpha_lat, len, memory);
        let w1 = linalg::spd_inverse(&params.sigma1, || "Sigma1 in input estimation".into())?;
        let w2 = linalg::spd_inverse(&params.sigma2, || "Sigma2 in input estimation".into())?;
        Ok(Self {
            x_ring: frac_diff_matrix(observed, &kernel_obs)?,
            z_ring: frac_diff_matrix(z_hat, &kernel_lat)?,
            w1,
            w2,
        })
    }

    pub fn transitions(&self) -> usize {
        self.x_ring.ncols() - 1
    }

    /// Problem for transition `t → t+1`. The latent term is included only
    /// when a filtered `ẑ_{t+1}` exists.
    pub fn problem(
        &self,
        params: &ModelParams<T>,
        observed: &DMatrix<T>,
        z_hat: &DMatrix<T>,
        t: usize,
        lambda: T,
    ) -> InputProblem<T> {
        let (m, p) = (params.m(), params.p());
        let a1 = self.x_ring.column(t + 1) - &params.a11 * observed.column(t) - &params.a12 * z_hat.column(t);
        let with_latent = m > 0 && t + 1 < z_hat.ncols();
        let (a2, b2, w2) = if with_latent {
            (
                self.z_ring.column(t + 1) - &params.a21 * observed.column(t) - &params.a22 * z_hat.column(t),
                params.b2.clone(),
                self.w2.clone(),
            )
        } else {
            (DVector::zeros(0), DMatrix::zeros(0, p), DMatrix::zeros(0, 0))
        };
        InputProblem {
            a1,
            a2,
            b1: params.b1.clone(),
            b2,
            w1: self.w1.clone(),
            w2,
            lambda,
        }
    }
}

/// Resolve [`Penalty::Auto`] against the current model.
pub fn resolve_penalty<T: Scalar>(
    penalty: Penalty,
    params: &ModelParams<T>,
    observed: &DMatrix<T>,
    z_hat: &DMatrix<T>,
    memory: Option<usize>,
) -> Result<T> {
    match penalty {
        Penalty::Fixed(v) if v >= 0.0 => Ok(T::lit(v)),
        Penalty::Fixed(_) => Err(Error::InvalidArgument("L1 weight must be non-negative".into())),
        Penalty::Auto => {
            if params.p() == 0 {
                return Ok(T::zero());
            }
            let problems = InputProblems::new(params, observed, z_hat, memory)?;
            for t in 0..problems.transitions() {
                let lm = problems.problem(params, observed, z_hat, t, T::zero()).lambda_max();
                if lm > T::zero() {
                    return Ok(lm * T::lit(0.1));
                }
            }
            Ok(T::zero())
        }
    }
}

/// Solve every transition independently.
pub fn estimate_all_inputs<T: Scalar>(
    params: &ModelParams<T>,
    observed: &DMatrix<T>,
    z_hat: &DMatrix<T>,
    lambda: T,
    opts: SolverOptions,
    memory: Option<usize>,
) -> Result<InputSequence<T>> {
    let len = observed.ncols();
    let p = params.p();
    if p == 0 {
        return Ok(InputSequence::zeros(0, len.saturating_sub(1)));
    }
    let problems = InputProblems::new(params, observed, z_hat, memory)?;
    let solutions: Vec<Result<InputSolution<T>>> = (0..problems.transitions())
        .into_par_iter()
        .map(|t| {
            solve_input(&problems.problem(params, observed, z_hat, t, lambda), opts)
                .map_err(|e| e.context(format!("input estimation at transition {t}")))
        })
        .collect();
    let mut values = DMatrix::zeros(p, problems.transitions());
    let mut stalled = 0usize;
    for (t, sol) in solutions.into_iter().enumerate() {
        let sol = sol?;
        stalled += usize::from(!sol.converged);
        values.set_column(t, &sol.u);
    }
    if stalled > 0 {
        log::warn!("input solver hit its iteration cap on {stalled} transitions");
    }
    InputSequence::new(values)
}
