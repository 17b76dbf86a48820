//! Small dense linear-algebra helpers on top of nalgebra.

use nalgebra::{Cholesky, DMatrix, Dyn, SymmetricEigen};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Smallest admissible Cholesky pivot (squared diagonal of the factor).
pub const PIVOT_THRESHOLD: f64 = 1e-12;

/// Replace `m` by `(m + mᵀ) / 2` in place.
pub fn symmetrize<T: Scalar>(m: &mut DMatrix<T>) {
    let n = m.nrows();
    debug_assert_eq!(n, m.ncols());
    let half = T::lit(0.5);
    for i in 0..n {
        for j in (i + 1)..n {
            let v = (m[(i, j)] + m[(j, i)]) * half;
            m[(i, j)] = v;
            m[(j, i)] = v;
        }
    }
}

pub fn symmetrized<T: Scalar>(mut m: DMatrix<T>) -> DMatrix<T> {
    symmetrize(&mut m);
    m
}

/// Cholesky factorization of a symmetric positive-definite matrix with an
/// explicit pivot threshold.
pub struct SpdFactor<T: Scalar> {
    chol: Cholesky<T, Dyn>,
}

impl<T: Scalar> SpdFactor<T> {
    pub fn new(m: &DMatrix<T>) -> Option<Self> {
        if m.nrows() != m.ncols() {
            return None;
        }
        let chol = Cholesky::new(symmetrized(m.clone()))?;
        let threshold = T::lit(PIVOT_THRESHOLD);
        let l = chol.l_dirty();
        for i in 0..l.nrows() {
            let d = l[(i, i)];
            if !(d * d > threshold) {
                return None;
            }
        }
        Some(Self { chol })
    }

    pub fn solve(&self, b: &DMatrix<T>) -> DMatrix<T> {
        self.chol.solve(b)
    }

    pub fn inverse(&self) -> DMatrix<T> {
        symmetrized(self.chol.inverse())
    }

    pub fn ln_det(&self) -> T {
        let l = self.chol.l_dirty();
        let mut acc = T::zero();
        for i in 0..l.nrows() {
            acc += l[(i, i)].ln();
        }
        acc * T::lit(2.0)
    }
}

pub fn spd_inverse<T: Scalar>(m: &DMatrix<T>, what: impl FnOnce() -> String) -> Result<DMatrix<T>> {
    if m.nrows() == 0 {
        return Ok(m.clone());
    }
    SpdFactor::new(m)
        .map(|f| f.inverse())
        .ok_or_else(|| Error::singular(what()))
}

pub fn eigenvalues<T: Scalar>(m: &DMatrix<T>) -> Vec<T> {
    if m.nrows() == 0 {
        return Vec::new();
    }
    SymmetricEigen::new(symmetrized(m.clone()))
        .eigenvalues
        .iter()
        .copied()
        .collect()
}

pub fn min_eigenvalue<T: Scalar>(m: &DMatrix<T>) -> Option<T> {
    eigenvalues(m).into_iter().reduce(|a, b| a.min(b))
}

pub fn max_eigenvalue<T: Scalar>(m: &DMatrix<T>) -> Option<T> {
    eigenvalues(m).into_iter().reduce(|a, b| a.max(b))
}

pub fn max_abs_asymmetry<T: Scalar>(m: &DMatrix<T>) -> T {
    let mut worst = T::zero();
    for i in 0..m.nrows() {
        for j in 0..m.ncols().min(m.nrows()) {
            worst = worst.max((m[(i, j)] - m[(j, i)]).abs());
        }
    }
    worst
}

/// Symmetric to `sym_tol` with every eigenvalue at least `-eig_tol`.
pub fn is_psd<T: Scalar>(m: &DMatrix<T>, sym_tol: f64, eig_tol: f64) -> bool {
    if m.nrows() != m.ncols() {
        return false;
    }
    if m.iter().any(|v| !v.is_finite()) {
        return false;
    }
    if max_abs_asymmetry(m) > T::lit(sym_tol) {
        return false;
    }
    min_eigenvalue(m).is_none_or(|v| v >= -T::lit(eig_tol))
}

/// Symmetrize and clamp the spectrum from below at `floor`.
pub fn floor_eigenvalues<T: Scalar>(m: &DMatrix<T>, floor: T) -> DMatrix<T> {
    if m.nrows() == 0 {
        return m.clone();
    }
    let eig = SymmetricEigen::new(symmetrized(m.clone()));
    if eig.eigenvalues.iter().all(|&v| v >= floor) {
        return symmetrized(m.clone());
    }
    let clamped = eig.eigenvalues.map(|v| v.max(floor));
    let v = &eig.eigenvectors;
    symmetrized(v * DMatrix::from_diagonal(&clamped) * v.transpose())
}

/// Square-root factor `S` with `S Sᵀ = m` for a PSD matrix (tiny negative
/// eigenvalues are clamped to zero).
pub fn psd_sqrt<T: Scalar>(m: &DMatrix<T>) -> DMatrix<T> {
    if m.nrows() == 0 {
        return m.clone();
    }
    if let Some(chol) = Cholesky::new(symmetrized(m.clone())) {
        return chol.l();
    }
    let eig = SymmetricEigen::new(symmetrized(m.clone()));
    let roots = eig.eigenvalues.map(|v| v.max(T::zero()).sqrt());
    &eig.eigenvectors * DMatrix::from_diagonal(&roots)
}

/// What to do when a Gram matrix is (numerically) singular.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SingularPolicy {
    /// Fail with [`Error::Singular`].
    Fail,
    /// Add a trace-scaled ridge `1e-8 · tr(G)/d · I` and retry.
    Ridge,
}

/// Solve `G X = R` for a symmetric PSD `G`. Returns the solution and whether a
/// ridge was applied.
pub fn solve_gram<T: Scalar>(
    gram: &DMatrix<T>,
    rhs: &DMatrix<T>,
    policy: SingularPolicy,
    context: impl FnOnce() -> String,
) -> Result<(DMatrix<T>, bool)> {
    let d = gram.nrows();
    if d == 0 {
        return Ok((DMatrix::zeros(0, rhs.ncols()), false));
    }
    if let Some(f) = well_conditioned_factor(gram) {
        return Ok((f.solve(rhs), false));
    }
    match policy {
        SingularPolicy::Fail => Err(Error::singular(context())),
        SingularPolicy::Ridge => {
            let trace = gram.trace();
            let scale = if trace > T::zero() {
                trace / T::from_usize_lossy(d)
            } else {
                T::one()
            };
            let mut g = gram.clone();
            let ridge = T::lit(1e-8) * scale;
            for i in 0..d {
                g[(i, i)] += ridge;
            }
            let f = SpdFactor::new(&g).ok_or_else(|| Error::singular(context()))?;
            Ok((f.solve(rhs), true))
        }
    }
}

/// Cholesky factor of a Gram matrix, rejected when its pivots are tiny relative
/// to the largest diagonal entry (rank deficiency shows up that way).
fn well_conditioned_factor<T: Scalar>(gram: &DMatrix<T>) -> Option<SpdFactor<T>> {
    let f = SpdFactor::new(gram)?;
    let max_diag = (0..gram.nrows()).map(|i| gram[(i, i)]).fold(T::zero(), |a, b| a.max(b));
    let rel = T::lit(1e-13) * max_diag;
    let l = f.chol.l_dirty();
    for i in 0..l.nrows() {
        if l[(i, i)] * l[(i, i)] <= rel {
            return None;
        }
    }
    Some(f)
}
