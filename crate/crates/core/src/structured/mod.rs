//! Model-based projected gradient descent over structured feedback gains.
//!
//! The feasible set is the subspace `𝒦` of gains matching a
//! [`StructureMask`]. Each iteration takes `F ← Π_𝒦(F − γ ∇J(F))` with the
//! step `γ` chosen by a [`StepRule`]; gains leaving the stabilizing set are
//! never accepted.

mod gradient;
mod mask;
mod pgd;

pub use gradient::{
    excitation_cost, gradient_excitation_cost, gradient_model_based, gradient_state_gram,
    lifted_injection, z_cost,
};
pub(crate) use gradient::gradient_from_blocks;
pub use mask::{project_structure, StructureMask};
pub(crate) use pgd::{descend, Objective};
pub use pgd::{pgd_run, GradientMode, Horizon, Iterate, PgdConfig, PgdRun, StepRule, Termination};
