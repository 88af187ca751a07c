use nalgebra::DMatrix;

use super::{symmetrize, CostSpec, Gain, SystemModel};
use crate::error::{Error, Result};

const MAX_ITERATIONS: usize = 100_000;
const RELATIVE_STEP_TOL: f64 = 1e-12;

/// Stabilizing solution of the discounted Riccati equation and its gain.
#[derive(Debug, Clone)]
pub struct RiccatiSolution {
    pub p: DMatrix<f64>,
    pub gain: Gain,
    pub iterations: usize,
}

/// `(R + α BᵀPB)⁻¹ BᵀPA`, shared by the update and the gain formula.
fn feedback_term(model: &SystemModel, cost: &CostSpec, p: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let (a, b, alpha) = (model.a(), model.b(), model.alpha());
    let bt_p = b.transpose() * p;
    let lhs = cost.r() + &bt_p * b * alpha;
    let rhs = bt_p * a;
    lhs.cholesky()
        .map(|c| c.solve(&rhs))
        .ok_or_else(|| Error::Numerical("R + αBᵀPB is not positive definite".into()))
}

fn riccati_map(model: &SystemModel, cost: &CostSpec, p: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let (a, b, alpha) = (model.a(), model.b(), model.alpha());
    let k = feedback_term(model, cost, p)?;
    let at_p = a.transpose() * p;
    let next = cost.q() + &at_p * a * alpha - at_p * b * k * (alpha * alpha);
    Ok(symmetrize(&next))
}

/// Frobenius norm of `Q + αAᵀPA − α²AᵀPB(R+αBᵀPB)⁻¹BᵀPA − P`.
pub fn riccati_residual(model: &SystemModel, cost: &CostSpec, p: &DMatrix<f64>) -> Result<f64> {
    Ok((riccati_map(model, cost, p)? - p).norm())
}

/// Riccati value iteration, used as independent ground truth for every
/// optimizer in the crate.
///
/// Iterates `P ← Q + αAᵀPA − α²AᵀPB(R+αBᵀPB)⁻¹BᵀPA` from `P = Q` until
/// `‖ΔP‖_F ≤ 1e-12 (1 + ‖P‖_F)`, then returns `F = −α(R+αBᵀPB)⁻¹BᵀPA`.
pub fn dare_oracle(model: &SystemModel, cost: &CostSpec) -> Result<RiccatiSolution> {
    cost.check_against(model)?;
    let mut p = cost.q().clone();
    for iteration in 1..=MAX_ITERATIONS {
        let next = riccati_map(model, cost, &p)?;
        let step = (&next - &p).norm();
        if !step.is_finite() || next.norm() > 1e15 {
            return Err(Error::NoConvergence { iterations: iteration });
        }
        let done = step <= RELATIVE_STEP_TOL * (1.0 + p.norm());
        p = next;
        if done {
            let f = feedback_term(model, cost, &p)? * -model.alpha();
            let gain = Gain::new(model, f)?;
            if !gain.is_stabilizing() {
                return Err(Error::Unstable {
                    radius: gain.radius(),
                });
            }
            return Ok(RiccatiSolution {
                p,
                gain,
                iterations: iteration,
            });
        }
    }
    Err(Error::NoConvergence {
        iterations: MAX_ITERATIONS,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::dmatrix;

    #[test]
    fn no_dynamics_gives_q_and_zero_gain() {
        let sys = SystemModel::undiscounted(DMatrix::zeros(2, 2), dmatrix![1.0; 0.5]).unwrap();
        let cost = CostSpec::new(dmatrix![2.0, 0.1; 0.1, 1.0], dmatrix![0.3]).unwrap();
        let sol = dare_oracle(&sys, &cost).unwrap();
        assert!((&sol.p - cost.q()).norm() < 1e-14);
        assert!(sol.gain.matrix().norm() < 1e-14);
    }

    #[test]
    fn scalar_case_matches_closed_form_root() {
        // p = 1 + 0.25p − 0.25p²/(1+p)  ⇔  p² − 0.25p − 1 = 0
        let sys = SystemModel::undiscounted(dmatrix![0.5], dmatrix![1.0]).unwrap();
        let cost = CostSpec::new(dmatrix![1.0], dmatrix![1.0]).unwrap();
        let sol = dare_oracle(&sys, &cost).unwrap();
        let expected = (0.25 + (0.0625f64 + 4.0).sqrt()) / 2.0;
        assert!((sol.p[(0, 0)] - expected).abs() < 1e-12);
        let f = -0.5 * expected / (1.0 + expected);
        assert!((sol.gain.matrix()[(0, 0)] - f).abs() < 1e-12);
    }

    #[test]
    fn double_integrator_reference_values() {
        let sys = SystemModel::undiscounted(dmatrix![1.0, 1.0; 0.0, 1.0], dmatrix![0.0; 1.0]).unwrap();
        let cost = CostSpec::new(DMatrix::identity(2, 2), dmatrix![0.1]).unwrap();
        let sol = dare_oracle(&sys, &cost).unwrap();
        assert!((sol.p.trace() - 5.5499).abs() < 1e-3);
        assert!((sol.gain.matrix()[(0, 0)] + 0.5792).abs() < 1e-3);
        assert!((sol.gain.matrix()[(0, 1)] + 1.5456).abs() < 1e-3);
        assert!(riccati_residual(&sys, &cost, &sol.p).unwrap() <= 1e-10);
    }

    #[test]
    fn unstabilizable_model_does_not_converge() {
        // unstable mode with no input authority
        let sys = SystemModel::undiscounted(dmatrix![2.0, 0.0; 0.0, 0.5], dmatrix![0.0; 1.0]).unwrap();
        let cost = CostSpec::new(DMatrix::identity(2, 2), dmatrix![1.0]).unwrap();
        assert!(matches!(
            dare_oracle(&sys, &cost),
            Err(Error::NoConvergence { .. })
        ));
    }
}
