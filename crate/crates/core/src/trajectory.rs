//! Simulated rollouts and their truncated discounted aggregates.
//!
//! Three systems are simulated:
//!
//! - the closed loop `x(k+1) = (A+BF) x(k)`, aggregated as
//!   `S̃ = Σ_{k≤M} α^k [x; Fx][x; Fx]ᵀ`;
//! - the adjoint `ξ(k+1) = A_Fᵀ ξ(k)`, aggregated as `P̃ = Σ_i Σ_{k≤M} α^k ξξᵀ`;
//! - the augmented system `v(k+1) = A_F v(k)` from seeds `v_i` whose input
//!   block is chosen freely, aggregated as `S̃` and the one-step
//!   cross-correlation `W = Σ_i Σ_{k≤M} α^k v(k+1) v(k)ᵀ`.
//!
//! All rollouts are deterministic. Aggregates are reduced in seed order.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::linalg::{
    check_shape, closed_loop, factor_columns, gram, sqrt_psd, BlockSym, CostSpec, Gain,
    SystemModel, STABILITY_MARGIN,
};

/// Default tail tolerance for [`auto_horizon`].
pub const DEFAULT_TAIL_EPS: f64 = 1e-8;

const MAX_AUTO_HORIZON: usize = 1_000_000;

/// Initial states `ξ_i` of the adjoint system with `Σ ξ_i ξ_iᵀ = Λ`.
#[derive(Debug, Clone)]
pub struct AdjointSeeds {
    seeds: Vec<DVector<f64>>,
}

impl AdjointSeeds {
    /// Columns of a factor of `Λ` (Cholesky when `Λ ≻ 0`).
    pub fn from_cost(cost: &CostSpec) -> Self {
        Self {
            seeds: factor_columns(cost.lambda()),
        }
    }

    /// Checks that the supplied seeds reproduce `Λ` to `1e-10 (1 + ‖Λ‖_F)`.
    pub fn new(seeds: Vec<DVector<f64>>, cost: &CostSpec) -> Result<Self> {
        let lambda = cost.lambda();
        let g = if seeds.is_empty() {
            DMatrix::zeros(lambda.nrows(), lambda.ncols())
        } else {
            gram(&seeds)?
        };
        if g.shape() != lambda.shape() {
            return Err(Error::dim("adjoint seed Gram", lambda.shape(), g.shape()));
        }
        let mismatch = (&g - lambda).norm();
        if mismatch > 1e-10 * (1.0 + lambda.norm()) {
            return Err(Error::Consistency { mismatch });
        }
        Ok(Self { seeds })
    }

    pub fn seeds(&self) -> &[DVector<f64>] {
        &self.seeds
    }
}

/// Columns of `Γ^{1/2}`, the default augmented seed set.
pub fn default_augmented_seeds(gamma: &DMatrix<f64>) -> Vec<DVector<f64>> {
    let root = sqrt_psd(gamma);
    root.column_iter().map(|c| c.into_owned()).collect()
}

/// Smallest horizon `M` with `β^M/(1−β) ≤ eps` (a bound on the neglected tail),
/// for a decay factor `β = α ρ²`.
pub fn horizon_for_decay(beta: f64, eps: f64, min_horizon: usize) -> Result<usize> {
    if !(eps > 0.0) {
        return Err(Error::InvalidArgument(format!("tail tolerance must be positive, got {eps}")));
    }
    if !(beta < 1.0 - STABILITY_MARGIN) || beta.is_nan() {
        return Err(Error::Unstable {
            radius: beta.max(0.0).sqrt(),
        });
    }
    if beta <= f64::MIN_POSITIVE {
        return Ok(min_horizon.max(1));
    }
    let m = ((eps * (1.0 - beta)).ln() / beta.ln()).ceil();
    if !m.is_finite() || m > MAX_AUTO_HORIZON as f64 {
        return Err(Error::InvalidArgument(format!(
            "decay factor {beta} needs a horizon beyond {MAX_AUTO_HORIZON}"
        )));
    }
    Ok((m.max(0.0) as usize).max(min_horizon).max(1))
}

/// `M = ⌈log(ε(1−β)) / log β⌉` with `β = α ρ(A+BF)²`.
///
/// The bound ignores transient growth of non-normal closed loops, so it is
/// floored at `n + m` steps.
pub fn auto_horizon(model: &SystemModel, gain: &Gain, eps: f64) -> Result<usize> {
    let radius = model.discounted_radius(gain.matrix())?;
    horizon_for_decay(radius * radius, eps, model.n() + model.m())
}

fn warn_if_unstable(model: &SystemModel, gain: &Gain) {
    if let Ok(radius) = model.discounted_radius(gain.matrix()) {
        if radius >= 1.0 - STABILITY_MARGIN {
            log::warn!("rollout under a non-stabilizing gain (radius {radius:.6}); sums are finite but grow with M");
        }
    }
}

/// `Σ_{k=0}^{M} α^k [x; Fx][x; Fx]ᵀ` along `x(k+1) = (A+BF) x(k)`, `x(0) = z`.
pub fn rollout_state_aggregate(model: &SystemModel, gain: &Gain, z: &DVector<f64>, horizon: usize) -> Result<BlockSym> {
    let (n, m) = (model.n(), model.m());
    if z.len() != n {
        return Err(Error::dim("initial state z", (n, 1), (z.len(), 1)));
    }
    check_shape("gain F", gain.matrix(), m, n)?;
    warn_if_unstable(model, gain);
    let f = gain.matrix();
    let state_map = model.state_map(f)?;
    let mut acc = DMatrix::zeros(n + m, n + m);
    let mut x = z.clone();
    let mut weight = 1.0;
    let mut v = DVector::zeros(n + m);
    for _ in 0..=horizon {
        v.rows_mut(0, n).copy_from(&x);
        v.rows_mut(n, m).copy_from(&(f * &x));
        acc.ger(weight, &v, &v, 1.0);
        x = &state_map * x;
        weight *= model.alpha();
    }
    BlockSym::new(acc, n)
}

/// `Σ_i Σ_{k=0}^{M} α^k ξ_i(k) ξ_i(k)ᵀ` along the adjoint `ξ(k+1) = A_Fᵀ ξ(k)`.
pub fn rollout_adjoint_aggregate(model: &SystemModel, gain: &Gain, seeds: &AdjointSeeds, horizon: usize) -> Result<BlockSym> {
    let dim = model.n() + model.m();
    warn_if_unstable(model, gain);
    let af = closed_loop(model, gain.matrix())?;
    let adjoint = af.augmented().transpose();
    let mut acc = DMatrix::zeros(dim, dim);
    for seed in seeds.seeds() {
        if seed.len() != dim {
            return Err(Error::dim("adjoint seed", (dim, 1), (seed.len(), 1)));
        }
        let mut xi = seed.clone();
        let mut weight = 1.0;
        for _ in 0..=horizon {
            acc.ger(weight, &xi, &xi, 1.0);
            xi = &adjoint * xi;
            weight *= model.alpha();
        }
    }
    BlockSym::new(acc, model.n())
}

/// Source of augmented-state trajectories under a feedback gain.
///
/// This is the only access a model-free algorithm has to the plant: it can
/// ask for a trajectory from a seed under a gain, but never for `A` or `B`.
pub trait TrajectorySource {
    fn state_dim(&self) -> usize;
    fn input_dim(&self) -> usize;
    fn discount(&self) -> f64;

    /// Returns `v(0), …, v(steps)` with `v(0) = seed` and `u(k) = F x(k)` for `k ≥ 1`.
    fn simulate(&self, gain: &DMatrix<f64>, seed: &DVector<f64>, steps: usize) -> Result<Vec<DVector<f64>>>;
}

/// A [`TrajectorySource`] backed by exact simulation of a known model.
#[derive(Debug, Clone)]
pub struct SimulatedPlant {
    model: SystemModel,
}

impl SimulatedPlant {
    pub fn new(model: SystemModel) -> Self {
        Self { model }
    }
}

impl TrajectorySource for SimulatedPlant {
    fn state_dim(&self) -> usize {
        self.model.n()
    }

    fn input_dim(&self) -> usize {
        self.model.m()
    }

    fn discount(&self) -> f64 {
        self.model.alpha()
    }

    fn simulate(&self, gain: &DMatrix<f64>, seed: &DVector<f64>, steps: usize) -> Result<Vec<DVector<f64>>> {
        let dim = self.model.n() + self.model.m();
        if seed.len() != dim {
            return Err(Error::dim("augmented seed", (dim, 1), (seed.len(), 1)));
        }
        let af = closed_loop(&self.model, gain)?;
        let mut out = Vec::with_capacity(steps + 1);
        out.push(seed.clone());
        for k in 0..steps {
            let next = af.augmented() * &out[k];
            out.push(next);
        }
        Ok(out)
    }
}

/// Augmented trajectories and the aggregates computed from them.
#[derive(Debug, Clone)]
pub struct TrajectoryBatch {
    pub horizon: usize,
    pub alpha: f64,
    /// One trajectory `v(0..=M+1)` per seed, in seed order.
    pub trajectories: Vec<Vec<DVector<f64>>>,
    /// `S̃ = Σ_i Σ_{k≤M} α^k v(k) v(k)ᵀ`.
    pub aggregate: BlockSym,
    /// `W = Σ_i Σ_{k≤M} α^k v(k+1) v(k)ᵀ`.
    pub cross: DMatrix<f64>,
}

/// Simulates every seed for `M + 1` steps and reduces the aggregates.
pub fn collect_batch<T: TrajectorySource + ?Sized>(
    source: &T,
    gain: &DMatrix<f64>,
    seeds: &[DVector<f64>],
    horizon: usize,
) -> Result<TrajectoryBatch> {
    if seeds.is_empty() {
        return Err(Error::InvalidArgument("at least one augmented seed is required".into()));
    }
    let (n, m) = (source.state_dim(), source.input_dim());
    check_shape("gain F", gain, m, n)?;
    let alpha = source.discount();
    let trajectories = seeds
        .iter()
        .map(|seed| source.simulate(gain, seed, horizon + 1))
        .collect::<Result<Vec<_>>>()?;
    let dim = n + m;
    let mut s = DMatrix::zeros(dim, dim);
    let mut w = DMatrix::zeros(dim, dim);
    for traj in &trajectories {
        if traj.len() != horizon + 2 {
            return Err(Error::InvalidArgument(format!(
                "trajectory source returned {} states, expected {}",
                traj.len(),
                horizon + 2
            )));
        }
        let mut weight = 1.0;
        for k in 0..=horizon {
            s.ger(weight, &traj[k], &traj[k], 1.0);
            w.ger(weight, &traj[k + 1], &traj[k], 1.0);
            weight *= alpha;
        }
    }
    if s.iter().chain(w.iter()).any(|v| !v.is_finite()) {
        return Err(Error::Numerical("trajectory aggregates overflowed".into()));
    }
    Ok(TrajectoryBatch {
        horizon,
        alpha,
        trajectories,
        aggregate: BlockSym::new(s, n)?,
        cross: w,
    })
}

/// `S̃` and `W` for the augmented system of a known model.
pub fn rollout_augmented(
    model: &SystemModel,
    gain: &Gain,
    seeds: &[DVector<f64>],
    horizon: usize,
) -> Result<(BlockSym, DMatrix<f64>)> {
    warn_if_unstable(model, gain);
    let batch = collect_batch(&SimulatedPlant::new(model.clone()), gain.matrix(), seeds, horizon)?;
    Ok((batch.aggregate, batch.cross))
}

/// Truncated discounted cost `Σ_{k≤M} α^k [x; Fx]ᵀ Λ [x; Fx]`, computed as
/// `tr(Λ S̃)` on the state aggregate.
pub fn discounted_cost(model: &SystemModel, gain: &Gain, z: &DVector<f64>, cost: &CostSpec, horizon: usize) -> Result<f64> {
    cost.check_against(model)?;
    let s = rollout_state_aggregate(model, gain, z, horizon)?;
    Ok(s.trace_with(cost.lambda()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{dare_oracle, solve_stein_covariance, solve_stein_value};
    use nalgebra::{dmatrix, dvector};

    fn double_integrator(alpha: f64) -> SystemModel {
        SystemModel::new(dmatrix![1.0, 1.0; 0.0, 1.0], dmatrix![0.0; 1.0], alpha).unwrap()
    }

    fn cost() -> CostSpec {
        CostSpec::new(DMatrix::identity(2, 2), dmatrix![0.1]).unwrap()
    }

    #[test]
    fn zero_state_gives_zero_aggregate() {
        let sys = double_integrator(0.9);
        let g = Gain::new(&sys, dmatrix![-0.3, -0.8]).unwrap();
        let s = rollout_state_aggregate(&sys, &g, &dvector![0.0, 0.0], 10).unwrap();
        assert_eq!(s.full().norm(), 0.0);
    }

    #[test]
    fn single_term_aggregate() {
        let sys = double_integrator(0.9);
        let g = Gain::new(&sys, dmatrix![-0.3, -0.8]).unwrap();
        let z = dvector![1.0, -2.0];
        let s = rollout_state_aggregate(&sys, &g, &z, 0).unwrap();
        let v = dvector![1.0, -2.0, -0.3 + 1.6];
        assert!((s.full() - &v * v.transpose()).norm() < 1e-15);
        let j = discounted_cost(&sys, &g, &z, &cost(), 0).unwrap();
        let expected = 1.0 + 4.0 + 0.1 * 1.3f64.powi(2);
        assert!((j - expected).abs() < 1e-12);
    }

    #[test]
    fn horizon_doubling_changes_little() {
        let sys = double_integrator(0.9);
        let g = Gain::new(&sys, dmatrix![-0.3, -0.8]).unwrap();
        let z = dvector![1.0, -1.0];
        let a = rollout_state_aggregate(&sys, &g, &z, 200).unwrap();
        let b = rollout_state_aggregate(&sys, &g, &z, 400).unwrap();
        assert!((a.full() - b.full()).norm() <= 1e-6);
    }

    #[test]
    fn adjoint_aggregate_limits() {
        let sys = SystemModel::undiscounted(DMatrix::zeros(2, 2), DMatrix::zeros(2, 1)).unwrap();
        let g = Gain::zeros(&sys);
        let seeds = AdjointSeeds::from_cost(&cost());
        let p = rollout_adjoint_aggregate(&sys, &g, &seeds, 3).unwrap();
        assert!((p.full() - cost().lambda()).norm() < 1e-14);

        let zero = CostSpec::new(DMatrix::zeros(2, 2), dmatrix![1.0]).unwrap();
        let seeds = AdjointSeeds::new(vec![dvector![0.0, 0.0, 0.0]], &zero);
        assert!(matches!(seeds, Err(Error::Consistency { .. })));
    }

    #[test]
    fn adjoint_aggregate_converges_to_value_matrix() {
        let sys = double_integrator(0.9);
        let g = Gain::new(&sys, dmatrix![-0.3, -0.8]).unwrap();
        let seeds = AdjointSeeds::from_cost(&cost());
        let p = rollout_adjoint_aggregate(&sys, &g, &seeds, 300).unwrap();
        let exact = solve_stein_value(&sys, &g, cost().lambda()).unwrap();
        assert!((p.full() - exact.full()).norm() <= 1e-5 * exact.full().norm());
    }

    #[test]
    fn augmented_single_seed_one_term() {
        let sys = double_integrator(0.9);
        let g = Gain::new(&sys, dmatrix![-0.3, -0.8]).unwrap();
        let v = dvector![1.0, 0.5, -2.0];
        let (s, w) = rollout_augmented(&sys, &g, std::slice::from_ref(&v), 0).unwrap();
        let af = closed_loop(&sys, g.matrix()).unwrap();
        assert!((s.full() - &v * v.transpose()).norm() < 1e-15);
        assert!((w - af.augmented() * &v * v.transpose()).norm() < 1e-14);
    }

    #[test]
    fn augmented_identity_seeds_converge_to_stein_covariance() {
        let sys = double_integrator(0.9);
        let g = Gain::new(&sys, dmatrix![-0.3, -0.8]).unwrap();
        let seeds = default_augmented_seeds(&DMatrix::identity(3, 3));
        let m = auto_horizon(&sys, &g, 1e-12).unwrap();
        let (s, w) = rollout_augmented(&sys, &g, &seeds, m).unwrap();
        let exact = solve_stein_covariance(&sys, &g, &DMatrix::identity(3, 3)).unwrap();
        assert!((s.full() - exact.full()).norm() <= 1e-8 * exact.full().norm());
        let af = closed_loop(&sys, g.matrix()).unwrap();
        assert!((w - af.augmented() * s.full()).norm() <= 1e-10 * (1.0 + s.full().norm()));
    }

    #[test]
    fn oracle_value_matches_long_rollout_cost() {
        let sys = double_integrator(1.0);
        let sol = dare_oracle(&sys, &cost()).unwrap();
        let z = dvector![1.0, 0.0];
        let j = discounted_cost(&sys, &sol.gain, &z, &cost(), 500).unwrap();
        assert!((j - sol.p[(0, 0)]).abs() < 1e-6);
    }

    #[test]
    fn auto_horizon_meets_tail_bound() {
        let beta: f64 = 0.81;
        let m = horizon_for_decay(beta, 1e-8, 0).unwrap();
        assert!(beta.powi(m as i32) / (1.0 - beta) <= 1e-8);
        assert!(beta.powi(m as i32 - 1) / (1.0 - beta) > 1e-8);
        assert!(horizon_for_decay(1.0, 1e-8, 0).is_err());
    }

    #[test]
    fn empty_seed_batch_is_rejected() {
        let sys = double_integrator(0.9);
        let g = Gain::new(&sys, dmatrix![-0.3, -0.8]).unwrap();
        assert!(rollout_augmented(&sys, &g, &[], 5).is_err());
    }
}
