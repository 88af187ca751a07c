//! Semidefinite-programming synthesis.
//!
//! Problems are assembled from [`AffineExpr`] blocks into an [`SdpProblem`]
//! and handed to [`solve_sdp`], which lowers them to a conic program for the
//! built-in interior-point backend. The builders in this module cover the
//! state-feedback design LMI, its energy- and input-constrained variant and
//! the explicit dual; [`recover_gain`] and [`verify_design`] close the loop
//! by extracting `F = K(Gᵀ)⁻¹` and re-checking it against exact Stein
//! solves.
//!
//! ```
//! use lqrsynth::sdp::{solve_sdp, AffineExpr, SdpProblem, SdpStatus, Sense};
//! use nalgebra::DMatrix;
//!
//! // minimize tr(S) subject to S ⪰ I
//! let mut p = SdpProblem::new();
//! let s = p.symmetric("S", 3)?;
//! p.set_objective(Sense::Minimize, s.trace())?;
//! p.add_psd("lower", &s - &AffineExpr::constant(DMatrix::identity(3, 3)))?;
//! let sol = solve_sdp(&p);
//! assert_eq!(sol.status, SdpStatus::Optimal);
//! assert!((sol.objective - 3.0).abs() < 1e-6);
//! # Ok::<(), lqrsynth::Error>(())
//! ```

mod design;
mod expr;
mod ipm;
mod problem;
mod verify;

use std::collections::BTreeMap;
use std::fmt;

use nalgebra::{DMatrix, DVector};

pub use design::{
    build_dual_sdp, build_sdp_constrained, build_sdp_design, constrained_sweep, extended_schur_block,
    recover_gain,
    rho_grid, ConstraintSpec, SweepPoint, RECOVERY_CONDITION_LIMIT,
};
pub use expr::AffineExpr;
pub use ipm::SolverSettings;
pub use problem::{Constraint, SdpProblem, Sense, VarShape, Variable};
pub use verify::{verify_design, DesignReport, EnergyCheck, InputCheck, VERIFY_TOLERANCE};

use crate::linalg::min_eigenvalue;
use ipm::{smat, solve_cone, svec_into, svec_len, ConeProgram, ConeStatus};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SdpStatus {
    Optimal,
    Infeasible,
    /// The objective is unbounded in the optimization direction.
    Unbounded,
    /// The solver stopped without meeting the accepted tolerance.
    Inaccurate,
    Error,
}

impl fmt::Display for SdpStatus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SdpStatus::Optimal => "optimal",
            SdpStatus::Infeasible => "infeasible",
            SdpStatus::Unbounded => "unbounded",
            SdpStatus::Inaccurate => "inaccurate",
            SdpStatus::Error => "error",
        })
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct SolverStats {
    pub iterations: usize,
    pub primal_residual: f64,
    pub dual_residual: f64,
    pub gap: f64,
    /// Smallest eigenvalue over all constraint blocks at the returned point.
    pub min_constraint_eigenvalue: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SdpSolution {
    pub status: SdpStatus,
    /// Objective in the problem's own sense; `NaN` without a primal point.
    pub objective: f64,
    pub values: BTreeMap<String, DMatrix<f64>>,
    /// Dual multiplier of each constraint (a certificate when infeasible).
    pub duals: BTreeMap<String, DMatrix<f64>>,
    pub stats: SolverStats,
    pub message: String,
}

impl SdpSolution {
    pub fn value(&self, name: &str) -> Option<&DMatrix<f64>> {
        self.values.get(name)
    }

    pub fn dual(&self, name: &str) -> Option<&DMatrix<f64>> {
        self.duals.get(name)
    }
}

fn lower(problem: &SdpProblem) -> ConeProgram {
    let p = problem.num_scalars();
    let blocks: Vec<usize> = problem.constraints().iter().map(|c| c.expr.shape().0).collect();
    let rows: usize = blocks.iter().map(|&d| svec_len(d)).sum();
    let mut g = DMatrix::zeros(rows, p);
    let mut h = DVector::zeros(rows);
    let mut offset = 0;
    let mut buf = Vec::new();
    for c in problem.constraints() {
        let d = c.expr.shape().0;
        let len = svec_len(d);
        svec_into(c.expr.constant_part(), &mut h.as_mut_slice()[offset..offset + len]);
        buf.resize(len, 0.0);
        for (k, coeff) in c.expr.terms() {
            svec_into(coeff, &mut buf);
            for (i, v) in buf.iter().enumerate() {
                g[(offset + i, k)] = -v;
            }
        }
        offset += len;
    }
    let sign = match problem.sense() {
        Sense::Minimize => 1.0,
        Sense::Maximize => -1.0,
    };
    let mut c = DVector::zeros(p);
    for (k, coeff) in problem.objective().terms() {
        c[k] = sign * coeff[(0, 0)];
    }
    ConeProgram { c, g, h, blocks }
}

pub fn solve_sdp(problem: &SdpProblem) -> SdpSolution {
    solve_sdp_with(problem, &SolverSettings::default())
}

pub fn solve_sdp_with(problem: &SdpProblem, settings: &SolverSettings) -> SdpSolution {
    if problem.constraints().is_empty() {
        return SdpSolution {
            status: SdpStatus::Error,
            objective: f64::NAN,
            values: BTreeMap::new(),
            duals: BTreeMap::new(),
            stats: SolverStats::default(),
            message: "problem has no constraints".into(),
        };
    }
    let prog = lower(problem);
    let res = solve_cone(&prog, settings);
    let status = match res.status {
        ConeStatus::Optimal => SdpStatus::Optimal,
        ConeStatus::PrimalInfeasible => SdpStatus::Infeasible,
        ConeStatus::DualInfeasible => SdpStatus::Unbounded,
        ConeStatus::Inaccurate => SdpStatus::Inaccurate,
        ConeStatus::Failed => SdpStatus::Error,
    };
    let has_point = matches!(status, SdpStatus::Optimal | SdpStatus::Inaccurate);
    let x = res.x.as_slice();
    let mut values = BTreeMap::new();
    let mut objective = f64::NAN;
    let mut min_eig = f64::NAN;
    if has_point {
        for var in problem.variables() {
            values.insert(var.name.clone(), problem.variable_value(var, x));
        }
        objective = problem.objective().evaluate(x)[(0, 0)];
        min_eig = problem
            .constraints()
            .iter()
            .map(|c| min_eigenvalue(&c.expr.evaluate(x)))
            .fold(f64::INFINITY, f64::min);
    }
    let mut duals = BTreeMap::new();
    if status != SdpStatus::Error {
        let mut offset = 0;
        for c in problem.constraints() {
            let d = c.expr.shape().0;
            let len = svec_len(d);
            duals.insert(c.name.clone(), smat(&res.z.as_slice()[offset..offset + len], d));
            offset += len;
        }
    }
    SdpSolution {
        status,
        objective,
        values,
        duals,
        stats: SolverStats {
            iterations: res.iterations,
            primal_residual: res.primal_residual,
            dual_residual: res.dual_residual,
            gap: res.gap,
            min_constraint_eigenvalue: min_eig,
        },
        message: res.message,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn trace_minimization_hits_dimension() {
        let mut p = SdpProblem::new();
        let s = p.symmetric("S", 4).unwrap();
        p.set_objective(Sense::Minimize, s.trace()).unwrap();
        p.add_psd("lower", &s - &AffineExpr::constant(DMatrix::identity(4, 4))).unwrap();
        let sol = solve_sdp(&p);
        assert_eq!(sol.status, SdpStatus::Optimal, "{}", sol.message);
        assert!((sol.objective - 4.0).abs() < 1e-7);
        assert!((sol.value("S").unwrap() - DMatrix::identity(4, 4)).norm() < 1e-6);
        // stationarity: the multiplier of S ⪰ I is the objective weight
        assert!((sol.dual("lower").unwrap() - DMatrix::identity(4, 4)).norm() < 1e-6);
    }

    #[test]
    fn contradictory_trace_bound_is_infeasible() {
        let mut p = SdpProblem::new();
        let s = p.symmetric("S", 2).unwrap();
        p.set_objective(Sense::Minimize, s.trace()).unwrap();
        p.add_psd("lower", &s - &AffineExpr::constant(DMatrix::identity(2, 2))).unwrap();
        p.add_scalar_le("trace", s.trace(), 0.0).unwrap();
        assert_eq!(solve_sdp(&p).status, SdpStatus::Infeasible);
    }

    #[test]
    fn maximization_flips_sign() {
        // maximize x subject to [[1, x], [x, 1]] ⪰ 0  →  x = 1
        let mut p = SdpProblem::new();
        let x = p.matrix("x", 1, 1).unwrap();
        p.set_objective(Sense::Maximize, x.clone()).unwrap();
        let one = AffineExpr::scalar(1.0);
        p.add_psd("box", AffineExpr::block(&[vec![one.clone(), x.clone()], vec![x, one]])).unwrap();
        let sol = solve_sdp(&p);
        assert_eq!(sol.status, SdpStatus::Optimal, "{}", sol.message);
        assert!((sol.objective - 1.0).abs() < 1e-6);
    }

    #[test]
    fn unconstrained_problem_is_an_error() {
        let mut p = SdpProblem::new();
        let x = p.matrix("x", 1, 1).unwrap();
        p.set_objective(Sense::Minimize, x).unwrap();
        assert_eq!(solve_sdp(&p).status, SdpStatus::Error);
    }

    #[test]
    fn unbounded_direction_is_reported() {
        let mut p = SdpProblem::new();
        let x = p.matrix("x", 1, 1).unwrap();
        p.set_objective(Sense::Minimize, x.clone()).unwrap();
        p.add_scalar_le("upper", x, 1.0).unwrap();
        assert_eq!(solve_sdp(&p).status, SdpStatus::Unbounded);
    }
}
