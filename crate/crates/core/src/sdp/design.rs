use nalgebra::{DMatrix, DVector};

use super::expr::AffineExpr;
use super::problem::{SdpProblem, Sense};
use super::{solve_sdp, SdpSolution, SdpStatus};
use crate::error::{Error, Result};
use crate::linalg::{check_shape, CostSpec, ExcitationSpec, Gain, SystemModel};

/// Largest condition number of `G` accepted by [`recover_gain`].
pub const RECOVERY_CONDITION_LIMIT: f64 = 1e10;

/// Relative margin realizing strict inequalities as `X ⪰ ε I`.
const STRICT_MARGIN: f64 = 1e-8;

/// Energy bounds `e_iᵀ S e_i ≤ γ_i` and the input bound `FᵀF ⪯ ρ I`.
#[derive(Debug, Clone, PartialEq)]
pub struct ConstraintSpec {
    gammas: DVector<f64>,
    rho: f64,
}

impl ConstraintSpec {
    pub fn new(gammas: DVector<f64>, rho: f64) -> Result<Self> {
        if gammas.is_empty() || gammas.iter().any(|&g| !(g > 0.0) || !g.is_finite()) {
            return Err(Error::InvalidArgument("energy bounds gamma_i must be positive and finite".into()));
        }
        if !(rho > 0.0) || !rho.is_finite() {
            return Err(Error::InvalidArgument(format!("input bound rho must be positive, got {rho}")));
        }
        Ok(Self { gammas, rho })
    }

    /// The same bound `γ` on each of `dim` coordinates.
    pub fn uniform(dim: usize, gamma: f64, rho: f64) -> Result<Self> {
        Self::new(DVector::from_element(dim, gamma), rho)
    }

    pub fn gammas(&self) -> &DVector<f64> {
        &self.gammas
    }

    pub fn rho(&self) -> f64 {
        self.rho
    }

    pub fn with_rho(&self, rho: f64) -> Result<Self> {
        Self::new(self.gammas.clone(), rho)
    }
}

fn check_design_inputs(model: &SystemModel, cost: &CostSpec, z: &DMatrix<f64>) -> Result<()> {
    if model.alpha() != 1.0 {
        return Err(Error::InvalidArgument(format!(
            "SDP synthesis is undiscounted; got alpha = {}",
            model.alpha()
        )));
    }
    cost.check_against(model)?;
    check_shape("Z", z, model.n(), model.n())?;
    ExcitationSpec::from_state_gram(z.clone())?;
    Ok(())
}

fn identity(d: usize) -> AffineExpr {
    AffineExpr::constant(DMatrix::identity(d, d))
}

/// The slack-variable form of `AᵀPA − P′ ⪯ 0`:
///
/// ```text
/// ⎡ P′    AᵀGᵀ      ⎤
/// ⎣ GA    G + Gᵀ − P ⎦ ⪰ 0
/// ```
///
/// Feasible for some `G` and `P ≻ 0` exactly when the plain inequality is
/// (take `G = P`); the slack `G` decouples `A` from `P`, which is what makes
/// the change of variables `K = FGᵀ` linear.
pub fn extended_schur_block(a: &DMatrix<f64>, p_prime: &AffineExpr, g: &AffineExpr, p: &AffineExpr) -> AffineExpr {
    let n = a.nrows();
    assert_eq!(a.shape(), (n, n), "A must be square");
    let ga = g * a;
    let corner = &(g + &g.transpose()) - p;
    AffineExpr::block(&[vec![p_prime.clone(), ga.transpose()], vec![ga, corner]])
}

/// Minimize `tr(ΛS)` subject to `S ≻ 0` and
///
/// ```text
/// ⎡ S          [Gᵀ; K]                    ⎤
/// ⎣ [G, Kᵀ]    G + Gᵀ − [A B] S [A B]ᵀ − Z ⎦ ⪰ 0
/// ```
///
/// over `S` (symmetric, `n+m`), `G` (`n×n`) and `K` (`m×n`).
pub fn build_sdp_design(model: &SystemModel, cost: &CostSpec, z: &DMatrix<f64>) -> Result<SdpProblem> {
    check_design_inputs(model, cost, z)?;
    let (n, m) = (model.n(), model.m());
    let mut p = SdpProblem::new();
    let s = p.symmetric("S", n + m)?;
    let g = p.matrix("G", n, n)?;
    let k = p.matrix("K", m, n)?;
    p.set_objective(Sense::Minimize, s.inner(cost.lambda()))?;

    let eps = STRICT_MARGIN * z.trace().max(1.0);
    p.add_psd("S_strict", &s - &identity(n + m).scale(eps))?;

    let ab = model.ab();
    let upper_right = AffineExpr::block(&[vec![g.transpose()], vec![k.clone()]]);
    let lower_left = upper_right.transpose();
    let corner = &(&g + &g.transpose()) - &(&(&ab * &s) * &ab.transpose());
    let corner = &corner - &AffineExpr::constant(z.clone());
    p.add_psd(
        "design_lmi",
        AffineExpr::block(&[vec![s, upper_right], vec![lower_left, corner]]),
    )?;
    Ok(p)
}

/// [`build_sdp_design`] plus `S_ii ≤ γ_i` and
/// `[[ρ I, K], [Kᵀ, G + Gᵀ − I]] ⪰ 0`.
///
/// The optimal value upper-bounds the constrained optimum: the same `G`
/// serves both the cost and the input inequality.
pub fn build_sdp_constrained(model: &SystemModel, cost: &CostSpec, z: &DMatrix<f64>, spec: &ConstraintSpec) -> Result<SdpProblem> {
    let (n, m) = (model.n(), model.m());
    if spec.gammas().len() != n + m {
        return Err(Error::dim("gammas", (n + m, 1), (spec.gammas().len(), 1)));
    }
    let mut p = build_sdp_design(model, cost, z)?;
    let var = |name: &str| p.variable_expr(name).expect("declared by build_sdp_design");
    let (s, g, k) = (var("S"), var("G"), var("K"));
    let corner = &(&g + &g.transpose()) - &identity(n);
    p.add_psd(
        "input_lmi",
        AffineExpr::block(&[
            vec![identity(m).scale(spec.rho()), k.clone()],
            vec![k.transpose(), corner],
        ]),
    )?;
    for i in 0..n + m {
        p.add_scalar_le(&format!("energy_{i}"), s.entry(i, i), spec.gammas()[i])?;
    }
    Ok(p)
}

/// Maximize `tr(Z M)` over symmetric `P` (`n+m`) and `M` (`n`) subject to
///
/// ```text
/// [[P₁₁ − M, P₁₂], [P₁₂ᵀ, P₂₂]] ⪰ 0
/// [[[A B]ᵀP₁₁[A B] − P + Λ, [A B]ᵀP₁₂], [P₁₂ᵀ[A B], P₂₂]] ⪰ 0
/// P ⪰ 0,  P₂₂ ≻ 0
/// ```
///
/// The first block bounds `M ⪯ P₁₁ − P₁₂P₂₂⁻¹P₁₂ᵀ`, so `tr(ZM)` is the
/// epigraph form of the concave dual objective.
pub fn build_dual_sdp(model: &SystemModel, cost: &CostSpec, z: &DMatrix<f64>) -> Result<SdpProblem> {
    check_design_inputs(model, cost, z)?;
    let (n, m) = (model.n(), model.m());
    let mut p = SdpProblem::new();
    let pv = p.symmetric("P", n + m)?;
    let mv = p.symmetric("M", n)?;
    p.set_objective(Sense::Maximize, mv.inner(z))?;

    let p11 = pv.view((0, 0), (n, n));
    let p12 = pv.view((0, n), (n, m));
    let p22 = pv.view((n, n), (m, m));
    let pad = AffineExpr::block(&[
        vec![mv, AffineExpr::zeros(n, m)],
        vec![AffineExpr::zeros(m, n), AffineExpr::zeros(m, m)],
    ]);
    p.add_psd("epigraph", &pv - &pad)?;

    let ab = model.ab();
    let abt = ab.transpose();
    let top_left = &(&(&abt * &p11) * &ab) - &pv;
    let top_left = &top_left + &AffineExpr::constant(cost.lambda().clone());
    let top_right = &abt * &p12;
    p.add_psd(
        "bellman",
        AffineExpr::block(&[
            vec![top_left, top_right.clone()],
            vec![top_right.transpose(), p22.clone()],
        ]),
    )?;
    p.add_psd("P_psd", pv)?;
    let eps = STRICT_MARGIN * cost.lambda().trace().max(1.0);
    p.add_psd("P22_strict", &p22 - &identity(m).scale(eps))?;
    Ok(p)
}

/// `F = K (Gᵀ)⁻¹`, certified against `model`.
pub fn recover_gain(solution: &SdpSolution, model: &SystemModel) -> Result<Gain> {
    if solution.status != SdpStatus::Optimal {
        return Err(Error::InvalidArgument(format!(
            "cannot recover a gain from a {} solution",
            solution.status
        )));
    }
    let missing = |name: &str| Error::InvalidArgument(format!("solution has no variable {name}"));
    let g = solution.value("G").ok_or_else(|| missing("G"))?;
    let k = solution.value("K").ok_or_else(|| missing("K"))?;
    let (n, m) = (model.n(), model.m());
    check_shape("G", g, n, n)?;
    check_shape("K", k, m, n)?;
    let sv = g.clone().singular_values();
    let condition = sv.max() / sv.min();
    if !(condition <= RECOVERY_CONDITION_LIMIT) {
        return Err(Error::Recovery { condition });
    }
    // F Gᵀ = K  ⇔  G Fᵀ = Kᵀ
    let ft = g
        .clone()
        .lu()
        .solve(&k.transpose())
        .ok_or(Error::Recovery { condition })?;
    Gain::new(model, ft.transpose())
}

/// `count` evenly spaced values from `lo` to `hi` inclusive.
pub fn rho_grid(lo: f64, hi: f64, count: usize) -> Result<Vec<f64>> {
    if count == 0 || !(lo > 0.0) || !(hi >= lo) {
        return Err(Error::InvalidArgument(format!(
            "rho grid needs 0 < lo <= hi and count >= 1, got [{lo}, {hi}] x {count}"
        )));
    }
    if count == 1 {
        return Ok(vec![lo]);
    }
    let step = (hi - lo) / (count - 1) as f64;
    Ok((0..count).map(|i| if i + 1 == count { hi } else { lo + step * i as f64 }).collect())
}

#[derive(Debug, Clone)]
pub struct SweepPoint {
    pub rho: f64,
    pub status: SdpStatus,
    /// `NaN` unless the solve returned a point.
    pub objective: f64,
    pub gain: Option<Gain>,
}

/// Solves the constrained design for every `ρ`, in parallel, returning the
/// points in input order.
pub fn constrained_sweep(
    model: &SystemModel,
    cost: &CostSpec,
    z: &DMatrix<f64>,
    gammas: &DVector<f64>,
    rhos: &[f64],
) -> Result<Vec<SweepPoint>> {
    let problems = rhos
        .iter()
        .map(|&rho| {
            let spec = ConstraintSpec::new(gammas.clone(), rho)?;
            build_sdp_constrained(model, cost, z, &spec)
        })
        .collect::<Result<Vec<_>>>()?;
    let solutions: Vec<SdpSolution> = std::thread::scope(|scope| {
        let handles: Vec<_> = problems.iter().map(|p| scope.spawn(move || solve_sdp(p))).collect();
        handles
            .into_iter()
            .map(|h| h.join().expect("solver thread panicked"))
            .collect()
    });
    Ok(rhos
        .iter()
        .zip(solutions)
        .map(|(&rho, sol)| SweepPoint {
            rho,
            status: sol.status,
            objective: sol.objective,
            gain: recover_gain(&sol, model).ok(),
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures::{double_integrator, double_integrator_cost};
    use crate::sdp::SolverStats;
    use nalgebra::dmatrix;
    use std::collections::BTreeMap;

    fn solution_with(g: DMatrix<f64>, k: DMatrix<f64>) -> SdpSolution {
        SdpSolution {
            status: SdpStatus::Optimal,
            objective: 0.0,
            values: BTreeMap::from([("G".to_string(), g), ("K".to_string(), k)]),
            duals: BTreeMap::new(),
            stats: SolverStats::default(),
            message: String::new(),
        }
    }

    #[test]
    fn recovery_with_identity_g_returns_k() {
        let sys = double_integrator(1.0);
        let k = dmatrix![-0.5, -1.5];
        let f = recover_gain(&solution_with(DMatrix::identity(2, 2), k.clone()), &sys).unwrap();
        assert_eq!(f.matrix(), &k);
        let f = recover_gain(&solution_with(dmatrix![2.0, 1.0; 0.0, 3.0], DMatrix::zeros(1, 2)), &sys).unwrap();
        assert_eq!(f.matrix(), &DMatrix::zeros(1, 2));
    }

    #[test]
    fn recovery_rejects_singular_g() {
        let sys = double_integrator(1.0);
        let err = recover_gain(&solution_with(dmatrix![1.0, 1.0; 1.0, 1.0], DMatrix::zeros(1, 2)), &sys);
        assert!(matches!(err, Err(Error::Recovery { .. })));
    }

    #[test]
    fn builders_refuse_discount() {
        let sys = double_integrator(0.9);
        let z = DMatrix::identity(2, 2);
        assert!(build_sdp_design(&sys, &double_integrator_cost(), &z).is_err());
        assert!(build_dual_sdp(&sys, &double_integrator_cost(), &z).is_err());
    }

    #[test]
    fn design_constraints_are_named() {
        let sys = double_integrator(1.0);
        let spec = ConstraintSpec::uniform(3, 5.0, 2.0).unwrap();
        let p = build_sdp_constrained(&sys, &double_integrator_cost(), &DMatrix::identity(2, 2), &spec).unwrap();
        for name in ["S_strict", "design_lmi", "input_lmi", "energy_0", "energy_2"] {
            assert!(p.constraint(name).is_some(), "{name}");
        }
        assert_eq!(p.constraint("design_lmi").unwrap().expr.shape(), (5, 5));
    }

    #[test]
    fn schur_block_with_witness_g() {
        let a = dmatrix![0.5, 0.2; 0.0, 0.3];
        let p = dmatrix![2.0, 0.1; 0.1, 1.0];
        let p_prime = a.transpose() * &p * &a + DMatrix::identity(2, 2) * 0.1;
        let c = |m: &DMatrix<f64>| AffineExpr::constant(m.clone());
        let blk = extended_schur_block(&a, &c(&p_prime), &c(&p), &c(&p)).evaluate(&[]);
        assert!(crate::linalg::min_eigenvalue(&blk) > -1e-12);
    }

    #[test]
    fn rho_grid_endpoints() {
        let g = rho_grid(1.2, 5.0, 20).unwrap();
        assert_eq!(g.len(), 20);
        assert_eq!(g[0], 1.2);
        assert_eq!(g[19], 5.0);
        assert!(rho_grid(1.0, 0.5, 3).is_err());
    }

    #[test]
    fn constraint_spec_validation() {
        assert!(ConstraintSpec::uniform(3, 0.0, 1.0).is_err());
        assert!(ConstraintSpec::uniform(3, 1.0, -1.0).is_err());
    }

    fn example() -> (SystemModel, CostSpec, DMatrix<f64>) {
        (double_integrator(1.0), double_integrator_cost(), DMatrix::identity(2, 2))
    }

    #[test]
    fn example_design_matches_riccati() {
        let (sys, cost, z) = example();
        let sol = solve_sdp(&build_sdp_design(&sys, &cost, &z).unwrap());
        assert_eq!(sol.status, SdpStatus::Optimal, "{}", sol.message);
        assert!((sol.objective - 5.5499).abs() < 1e-3, "objective {}", sol.objective);
        let f = recover_gain(&sol, &sys).unwrap();
        let oracle = crate::linalg::dare_oracle(&sys, &cost).unwrap();
        assert!((f.matrix() - oracle.gain.matrix()).amax() < 1e-3, "{}", f.matrix());
        assert!((sol.objective - oracle.p.trace()).abs() < 1e-5);
    }

    #[test]
    fn dual_matches_primal() {
        let (sys, cost, z) = example();
        let primal = solve_sdp(&build_sdp_design(&sys, &cost, &z).unwrap());
        let dual = solve_sdp(&build_dual_sdp(&sys, &cost, &z).unwrap());
        assert_eq!(dual.status, SdpStatus::Optimal, "{} {:?} {}", dual.message, dual.stats, dual.objective);
        assert!((primal.objective - dual.objective).abs() < 1e-5, "{} vs {}", primal.objective, dual.objective);
    }

    #[test]
    fn zero_dynamics_need_no_feedback() {
        let sys = SystemModel::undiscounted(DMatrix::zeros(2, 2), dmatrix![1.0; 0.5]).unwrap();
        let cost = double_integrator_cost();
        let sol = solve_sdp(&build_sdp_design(&sys, &cost, &DMatrix::identity(2, 2)).unwrap());
        assert_eq!(sol.status, SdpStatus::Optimal, "{}", sol.message);
        // with A = 0 the optimal input is zero and the cost is tr(Q Z)
        assert!((sol.objective - 2.0).abs() < 1e-5, "objective {}", sol.objective);
        assert!(recover_gain(&sol, &sys).unwrap().matrix().amax() < 1e-4);
    }

    #[test]
    fn loose_constraints_leave_the_optimum_unchanged() {
        let (sys, cost, z) = example();
        let spec = ConstraintSpec::uniform(3, 1e3, 1e3).unwrap();
        let sol = solve_sdp(&build_sdp_constrained(&sys, &cost, &z, &spec).unwrap());
        assert_eq!(sol.status, SdpStatus::Optimal, "{}", sol.message);
        assert!((sol.objective - 5.549857952529116).abs() < 1e-4, "objective {}", sol.objective);
    }

    #[test]
    fn input_bound_is_respected() {
        let (sys, cost, z) = example();
        let spec = ConstraintSpec::uniform(3, 100.0, 1.5).unwrap();
        let sol = solve_sdp(&build_sdp_constrained(&sys, &cost, &z, &spec).unwrap());
        assert_eq!(sol.status, SdpStatus::Optimal, "{}", sol.message);
        let f = recover_gain(&sol, &sys).unwrap();
        let report = crate::sdp::verify_design(&sys, &f, &cost, &z, Some(&spec));
        assert!(report.passed(), "{report:?}");
        // the unconstrained gain violates this bound, so the cost must rise
        assert!(sol.objective > 5.549857952529116 + 1e-3);
    }

    #[test]
    fn sweep_is_monotone_in_rho() {
        let (sys, cost, z) = example();
        let rhos = rho_grid(1.2, 5.0, 5).unwrap();
        let pts = constrained_sweep(&sys, &cost, &z, &DVector::from_element(3, 5.0), &rhos).unwrap();
        for w in pts.windows(2) {
            assert!(w[1].objective <= w[0].objective + 1e-6, "{} then {}", w[0].objective, w[1].objective);
        }
        assert!(pts.iter().all(|p| p.gain.is_some()));
    }
}
