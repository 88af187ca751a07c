//! Linear-quadratic regulator synthesis by projected gradient descent and
//! semidefinite programming.
//!
//! The crate is organised bottom-up:
//!
//! - [`linalg`]: system/cost types, Stein equation solvers and the Riccati
//!   oracle that every other algorithm is checked against.
//! - [`trajectory`]: closed-loop, adjoint and augmented rollouts producing
//!   truncated discounted aggregates.
//! - [`structured`]: model-based projected gradient descent over gains with
//!   a prescribed sparsity pattern.
//! - [`modelfree`]: the same descent driven only by trajectory data.
//! - [`sdp`]: LMI formulations (design, energy/input constrained design,
//!   explicit dual), a dense interior-point backend and post-solve checks.
//!
//! ```
//! use lqrsynth::linalg::{dare_oracle, CostSpec, SystemModel};
//! use nalgebra::{dmatrix, DMatrix};
//!
//! let model = SystemModel::undiscounted(dmatrix![1.0, 1.0; 0.0, 1.0], dmatrix![0.0; 1.0])?;
//! let cost = CostSpec::new(DMatrix::identity(2, 2), dmatrix![0.1])?;
//! let sol = dare_oracle(&model, &cost)?;
//! assert!((sol.p.trace() - 5.5499).abs() < 1e-3);
//! # Ok::<(), lqrsynth::Error>(())
//! ```

pub mod error;
pub mod fixtures;
pub mod linalg;
pub mod modelfree;
pub mod sdp;
pub mod structured;
pub mod trajectory;

pub use error::{Error, Result};

// Book chapters are compiled as doc-tests so the guide cannot drift from the API.
#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/stein.md")]
    mod stein {}
    #[doc = include_str!("../../../book/src/trajectories.md")]
    mod trajectories {}
    #[doc = include_str!("../../../book/src/structured.md")]
    mod structured {}
    #[doc = include_str!("../../../book/src/model_free.md")]
    mod model_free {}
    #[doc = include_str!("../../../book/src/sdp.md")]
    mod sdp {}
    #[doc = include_str!("../../../book/src/cli.md")]
    mod cli {}
}
