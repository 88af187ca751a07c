use nalgebra::{DMatrix, DVector};

use super::{check_shape, symmetrize, BlockSym, Gain, SystemModel, STABILITY_MARGIN};
use crate::error::{Error, Result};

/// Augmented closed-loop map `A_F = [[A, B], [F A, F B]]` acting on `v = [x; u]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ClosedLoop {
    augmented: DMatrix<f64>,
    state: DMatrix<f64>,
}

impl ClosedLoop {
    /// The `(n+m)×(n+m)` augmented map.
    pub fn augmented(&self) -> &DMatrix<f64> {
        &self.augmented
    }

    /// The `n×n` state map `A + B F`.
    pub fn state_map(&self) -> &DMatrix<f64> {
        &self.state
    }
}

pub fn closed_loop(model: &SystemModel, f: &DMatrix<f64>) -> Result<ClosedLoop> {
    let (n, m) = (model.n(), model.m());
    check_shape("gain F", f, m, n)?;
    let ab = model.ab();
    let mut augmented = DMatrix::zeros(n + m, n + m);
    augmented.view_mut((0, 0), (n, n + m)).copy_from(&ab);
    augmented.view_mut((n, 0), (m, n + m)).copy_from(&(f * &ab));
    Ok(ClosedLoop {
        augmented,
        state: model.state_map(f)?,
    })
}

/// Solves `X = M X Mᵀ + N` by vectorization.
///
/// No stability check is made; the linear system `(I − M⊗M) vec X = vec N`
/// is singular exactly when `M` has a pair of eigenvalues with product one.
pub fn solve_stein(m: &DMatrix<f64>, n: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let k = m.nrows();
    check_shape("Stein coefficient", m, k, k)?;
    check_shape("Stein injection", n, k, k)?;
    let system = DMatrix::identity(k * k, k * k) - m.kronecker(m);
    let rhs = DVector::from_column_slice(n.as_slice());
    let lu = system.clone().lu();
    let mut x = lu
        .solve(&rhs)
        .ok_or_else(|| Error::Numerical("singular Stein system".into()))?;
    // one step of iterative refinement
    let r = &rhs - &system * &x;
    if let Some(dx) = lu.solve(&r) {
        x += dx;
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numerical("Stein solution is not finite".into()));
    }
    let sol = symmetrize(&DMatrix::from_column_slice(k, k, x.as_slice()));
    let residual = (m * &sol * m.transpose() - &sol + n).norm();
    if residual > 1e-6 * (1.0 + n.norm()) * (1.0 + sol.norm()) {
        return Err(Error::Numerical(format!(
            "Stein residual {residual:.3e} too large"
        )));
    }
    Ok(sol)
}

fn require_stabilizing(model: &SystemModel, gain: &Gain) -> Result<()> {
    // recomputed from the model rather than read from the certificate
    let radius = model.discounted_radius(gain.matrix())?;
    if radius >= 1.0 - STABILITY_MARGIN {
        return Err(Error::Unstable { radius });
    }
    Ok(())
}

/// Value matrix: solves `α A_Fᵀ P A_F − P + Λ = 0`.
pub fn solve_stein_value(model: &SystemModel, gain: &Gain, lambda: &DMatrix<f64>) -> Result<BlockSym> {
    let dim = model.n() + model.m();
    check_shape("Lambda", lambda, dim, dim)?;
    require_stabilizing(model, gain)?;
    let af = closed_loop(model, gain.matrix())?;
    let coeff = af.augmented().transpose() * model.alpha().sqrt();
    BlockSym::new(solve_stein(&coeff, lambda)?, model.n())
}

/// Covariance matrix: solves `S = α A_F S A_Fᵀ + N`.
pub fn solve_stein_covariance(model: &SystemModel, gain: &Gain, injection: &DMatrix<f64>) -> Result<BlockSym> {
    let dim = model.n() + model.m();
    check_shape("injection N", injection, dim, dim)?;
    require_stabilizing(model, gain)?;
    let af = closed_loop(model, gain.matrix())?;
    let coeff = af.augmented() * model.alpha().sqrt();
    BlockSym::new(solve_stein(&coeff, injection)?, model.n())
}

/// One application of `ℋ(S) = α A_F S A_Fᵀ + N`.
pub fn apply_covariance_operator(
    model: &SystemModel,
    f: &DMatrix<f64>,
    injection: &DMatrix<f64>,
    s: &DMatrix<f64>,
) -> Result<DMatrix<f64>> {
    let dim = model.n() + model.m();
    check_shape("injection N", injection, dim, dim)?;
    check_shape("S", s, dim, dim)?;
    let af = closed_loop(model, f)?;
    let a = af.augmented();
    Ok(symmetrize(&(a * s * a.transpose() * model.alpha() + injection)))
}
