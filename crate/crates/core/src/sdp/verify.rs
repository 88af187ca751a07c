use nalgebra::DMatrix;

use super::design::ConstraintSpec;
use crate::linalg::{
    max_eigenvalue, solve_stein_covariance, CostSpec, Gain, SystemModel, STABILITY_MARGIN,
};
use crate::structured::lifted_injection;

/// Slack allowed on every constraint check.
pub const VERIFY_TOLERANCE: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq)]
pub struct EnergyCheck {
    pub index: usize,
    /// `e_iᵀ S e_i` of the true closed-loop covariance.
    pub energy: f64,
    pub bound: f64,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct InputCheck {
    /// `λ_max(FᵀF)`.
    pub lambda_max: f64,
    pub rho: f64,
    pub pass: bool,
}

/// A gain re-checked against exact closed-loop quantities.
#[derive(Debug, Clone, PartialEq)]
pub struct DesignReport {
    /// `√α · ρ(A + BF)`, recomputed from the model.
    pub radius: f64,
    pub stabilizing: bool,
    /// `tr(Λ S)` with `S = α A_F S A_Fᵀ + [I;F] Z [I;F]ᵀ`; `None` (infinite
    /// cost) for a non-stabilizing gain.
    pub cost: Option<f64>,
    pub covariance: Option<DMatrix<f64>>,
    /// Present only when a [`ConstraintSpec`] was supplied.
    pub energies: Option<Vec<EnergyCheck>>,
    pub input: Option<InputCheck>,
    /// Set when a check could not be evaluated.
    pub note: Option<String>,
}

impl DesignReport {
    /// Stabilizing and every requested constraint satisfied.
    pub fn passed(&self) -> bool {
        self.stabilizing
            && self.cost.is_some()
            && self.energies.iter().flatten().all(|e| e.pass)
            && self.input.as_ref().is_none_or(|i| i.pass)
    }
}

/// Never fails: problems are recorded in the report.
pub fn verify_design(
    model: &SystemModel,
    gain: &Gain,
    cost: &CostSpec,
    z: &DMatrix<f64>,
    spec: Option<&ConstraintSpec>,
) -> DesignReport {
    let f = gain.matrix();
    let mut report = DesignReport {
        radius: f64::NAN,
        stabilizing: false,
        cost: None,
        covariance: None,
        energies: None,
        input: None,
        note: None,
    };
    match model.discounted_radius(f) {
        Ok(r) => {
            report.radius = r;
            report.stabilizing = r < 1.0 - STABILITY_MARGIN;
        }
        Err(e) => {
            report.note = Some(e.to_string());
            return report;
        }
    }
    if let Some(spec) = spec {
        let lambda_max = max_eigenvalue(&(f.transpose() * f));
        report.input = Some(InputCheck {
            lambda_max,
            rho: spec.rho(),
            pass: lambda_max <= spec.rho() + VERIFY_TOLERANCE,
        });
    }
    if !report.stabilizing {
        if spec.is_some() {
            report.energies = Some(Vec::new());
        }
        return report;
    }
    let covariance = cost
        .check_against(model)
        .and_then(|_| solve_stein_covariance(model, gain, &lifted_injection(f, z)));
    let s = match covariance {
        Ok(s) => s.into_inner(),
        Err(e) => {
            report.note = Some(e.to_string());
            return report;
        }
    };
    report.cost = Some(cost.lambda().dot(&s));
    if let Some(spec) = spec {
        report.energies = Some(
            spec.gammas()
                .iter()
                .enumerate()
                .map(|(i, &bound)| {
                    let energy = s[(i, i)];
                    EnergyCheck {
                        index: i,
                        energy,
                        bound,
                        pass: energy <= bound + VERIFY_TOLERANCE,
                    }
                })
                .collect(),
        );
    }
    report.covariance = Some(s);
    report
}
