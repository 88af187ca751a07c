//! Dense matrix utilities, Stein (discrete Lyapunov) solvers and the Riccati
//! oracle.
//!
//! Everything here works on `nalgebra::DMatrix<f64>` at desk scale
//! (`n + m` up to about 20). Stein equations are solved by vectorization, so
//! the cost is cubic in `(n + m)^2`.

mod block;
mod model;
mod riccati;
mod stein;

pub use block::BlockSym;
pub use model::{CostSpec, ExcitationSpec, Gain, SystemModel};
pub use riccati::{dare_oracle, riccati_residual, RiccatiSolution};
pub use stein::{
    apply_covariance_operator, closed_loop, solve_stein, solve_stein_covariance, solve_stein_value,
    ClosedLoop,
};

use nalgebra::{DMatrix, DVector, Schur};

use crate::error::{Error, Result};

/// Margin below one that a discounted spectral radius must clear to count as
/// stabilizing.
pub const STABILITY_MARGIN: f64 = 1e-9;

/// Relative PSD tolerance; multiplied by `max(1, trace)` of the matrix tested.
pub const PSD_TOLERANCE: f64 = 1e-9;

/// Largest eigenvalue modulus of a square matrix.
pub fn spectral_radius(m: &DMatrix<f64>) -> Result<f64> {
    if !m.is_square() {
        return Err(Error::dim("spectral_radius input", (m.nrows(), m.nrows()), m.shape()));
    }
    if m.nrows() == 0 {
        return Ok(0.0);
    }
    if m.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numerical("spectral radius of a non-finite matrix".into()));
    }
    let schur = Schur::try_new(m.clone(), f64::EPSILON, 100_000)
        .ok_or_else(|| Error::Numerical("Schur iteration did not converge".into()))?;
    Ok(schur
        .complex_eigenvalues()
        .iter()
        .map(|z| z.norm())
        .fold(0.0, f64::max))
}

pub fn symmetrize(m: &DMatrix<f64>) -> DMatrix<f64> {
    (m + m.transpose()) * 0.5
}

/// Smallest eigenvalue of the symmetric part of `m`.
pub fn min_eigenvalue(m: &DMatrix<f64>) -> f64 {
    if m.nrows() == 0 {
        return f64::INFINITY;
    }
    symmetrize(m).symmetric_eigenvalues().min()
}

/// Largest eigenvalue of the symmetric part of `m`.
pub fn max_eigenvalue(m: &DMatrix<f64>) -> f64 {
    if m.nrows() == 0 {
        return f64::NEG_INFINITY;
    }
    symmetrize(m).symmetric_eigenvalues().max()
}

pub fn psd_tolerance(m: &DMatrix<f64>) -> f64 {
    PSD_TOLERANCE * m.trace().abs().max(1.0)
}

pub fn is_psd(m: &DMatrix<f64>) -> bool {
    min_eigenvalue(m) >= -psd_tolerance(m)
}

pub fn block_diag(a: &DMatrix<f64>, b: &DMatrix<f64>) -> DMatrix<f64> {
    let (ra, ca) = a.shape();
    let (rb, cb) = b.shape();
    let mut out = DMatrix::zeros(ra + rb, ca + cb);
    out.view_mut((0, 0), (ra, ca)).copy_from(a);
    out.view_mut((ra, ca), (rb, cb)).copy_from(b);
    out
}

/// Sum of outer products `Σ v vᵀ`.
pub fn gram(vectors: &[DVector<f64>]) -> Result<DMatrix<f64>> {
    let dim = vectors
        .first()
        .map(|v| v.len())
        .ok_or_else(|| Error::InvalidArgument("empty vector set".into()))?;
    let mut out = DMatrix::zeros(dim, dim);
    for v in vectors {
        if v.len() != dim {
            return Err(Error::dim("seed vector", (dim, 1), (v.len(), 1)));
        }
        out.ger(1.0, v, v, 1.0);
    }
    Ok(out)
}

/// Columns `c_i` with `Σ c_i c_iᵀ = m` for a symmetric PSD `m`.
///
/// Uses the Cholesky factor when `m` is positive definite and falls back to
/// a clipped eigendecomposition otherwise (zero columns are dropped).
pub fn factor_columns(m: &DMatrix<f64>) -> Vec<DVector<f64>> {
    let sym = symmetrize(m);
    if let Some(chol) = sym.clone().cholesky() {
        let l = chol.l();
        return l.column_iter().map(|c| c.into_owned()).collect();
    }
    let eig = sym.symmetric_eigen();
    let tol = psd_tolerance(m);
    eig.eigenvalues
        .iter()
        .zip(eig.eigenvectors.column_iter())
        .filter(|(&l, _)| l > tol)
        .map(|(&l, v)| v.into_owned() * l.sqrt())
        .collect()
}

/// Symmetric square root of a PSD matrix.
pub fn sqrt_psd(m: &DMatrix<f64>) -> DMatrix<f64> {
    let eig = symmetrize(m).symmetric_eigen();
    let roots = eig.eigenvalues.map(|l| l.max(0.0).sqrt());
    &eig.eigenvectors * DMatrix::from_diagonal(&roots) * eig.eigenvectors.transpose()
}

/// `[I; F]`, the map from a state to the augmented state-input vector.
pub fn state_input_map(f: &DMatrix<f64>) -> DMatrix<f64> {
    let (m, n) = f.shape();
    let mut out = DMatrix::zeros(n + m, n);
    out.view_mut((0, 0), (n, n)).fill_with_identity();
    out.view_mut((n, 0), (m, n)).copy_from(f);
    out
}

pub(crate) fn check_shape(what: &str, m: &DMatrix<f64>, rows: usize, cols: usize) -> Result<()> {
    if m.shape() != (rows, cols) {
        return Err(Error::dim(what, (rows, cols), m.shape()));
    }
    Ok(())
}

pub(crate) fn check_finite(what: &str, m: &DMatrix<f64>) -> Result<()> {
    if m.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::InvalidArgument(format!("{what} has non-finite entries")))
    }
}
