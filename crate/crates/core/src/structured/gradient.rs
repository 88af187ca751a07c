use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::linalg::{
    check_shape, gram, solve_stein_covariance, solve_stein_value, state_input_map, BlockSym,
    CostSpec, Gain, SystemModel,
};

/// `2 (P₁₂ᵀ + P₂₂ F) H`, the common shape of both policy gradients.
///
/// `H = S₁₁` for the state-excited cost and `H = S₁₁ − Γ₁₁` for the
/// augmented-excitation cost.
pub(crate) fn gradient_from_blocks(p: &BlockSym, f: &DMatrix<f64>, h: &DMatrix<f64>) -> DMatrix<f64> {
    (p.m12().transpose() + p.m22() * f) * h * 2.0
}

fn check_state_gram(model: &SystemModel, z_gram: &DMatrix<f64>) -> Result<()> {
    check_shape("Z", z_gram, model.n(), model.n())
}

/// `[I; F] Z [I; F]ᵀ`, the augmented injection for a state excitation `Z`.
pub fn lifted_injection(f: &DMatrix<f64>, z_gram: &DMatrix<f64>) -> DMatrix<f64> {
    let lift = state_input_map(f);
    &lift * z_gram * lift.transpose()
}

/// Exact `J_α(F, Z) = tr(Λ S)` with `S = α A_F S A_Fᵀ + [I;F] Z [I;F]ᵀ`.
pub fn z_cost(model: &SystemModel, gain: &Gain, cost: &CostSpec, z_gram: &DMatrix<f64>) -> Result<f64> {
    cost.check_against(model)?;
    check_state_gram(model, z_gram)?;
    let s = solve_stein_covariance(model, gain, &lifted_injection(gain.matrix(), z_gram))?;
    Ok(s.trace_with(cost.lambda()))
}

/// Exact gradient of [`z_cost`] for a state Gram matrix `Z = Σ z_i z_iᵀ`.
pub fn gradient_state_gram(model: &SystemModel, gain: &Gain, cost: &CostSpec, z_gram: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    cost.check_against(model)?;
    check_state_gram(model, z_gram)?;
    let p = solve_stein_value(model, gain, cost.lambda())?;
    let s = solve_stein_covariance(model, gain, &lifted_injection(gain.matrix(), z_gram))?;
    Ok(gradient_from_blocks(&p, gain.matrix(), &s.m11().into_owned()))
}

/// `∇_F J_α(F, z) = 2 (P₁₂ᵀ + P₂₂ F) S₁₁` from exact Stein solves.
pub fn gradient_model_based(model: &SystemModel, gain: &Gain, cost: &CostSpec, z: &DVector<f64>) -> Result<DMatrix<f64>> {
    if z.len() != model.n() {
        return Err(Error::dim("initial state z", (model.n(), 1), (z.len(), 1)));
    }
    gradient_state_gram(model, gain, cost, &gram(std::slice::from_ref(z))?)
}

fn check_gamma(model: &SystemModel, gamma: &DMatrix<f64>) -> Result<()> {
    let dim = model.n() + model.m();
    check_shape("Gamma", gamma, dim, dim)
}

/// Exact `J_α(F, Γ) = tr(Λ S)` with `S = α A_F S A_Fᵀ + Γ`.
pub fn excitation_cost(model: &SystemModel, gain: &Gain, cost: &CostSpec, gamma: &DMatrix<f64>) -> Result<f64> {
    cost.check_against(model)?;
    check_gamma(model, gamma)?;
    Ok(solve_stein_covariance(model, gain, gamma)?.trace_with(cost.lambda()))
}

/// `∇_F J_α(F, Γ) = 2 (P₁₂ᵀ + P₂₂ F)(S₁₁ − Γ₁₁)` from exact Stein solves.
pub fn gradient_excitation_cost(model: &SystemModel, gain: &Gain, cost: &CostSpec, gamma: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    cost.check_against(model)?;
    check_gamma(model, gamma)?;
    let n = model.n();
    let p = solve_stein_value(model, gain, cost.lambda())?;
    let s = solve_stein_covariance(model, gain, gamma)?;
    let h = s.m11() - gamma.view((0, 0), (n, n));
    Ok(gradient_from_blocks(&p, gain.matrix(), &h))
}
