//! Model-free projected gradient descent.
//!
//! Every quantity here is computed from augmented trajectories supplied by a
//! [`TrajectorySource`]; nothing in this module can read `A` or `B`.
//!
//! For a gain `F` the rollouts give `S̃ = Σ α^k v(k)v(k)ᵀ` and
//! `W = Σ α^k v(k+1)v(k)ᵀ`. Because `v(k+1) = A_F v(k)`, `W = A_F S̃` holds
//! at every horizon, so the value matrix solves the data equation
//! `α WᵀPW + S̃(Λ − P)S̃ = 0` whenever `S̃ ≻ 0`. The same identity at
//! horizon zero gives `A_F ≈ W₀ Γ⁻¹`, which decides stability and the
//! truncation horizon without a model.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::linalg::{
    gram, min_eigenvalue, spectral_radius, BlockSym, CostSpec, ExcitationSpec, Gain,
    PSD_TOLERANCE,
};
use crate::structured::{descend, gradient_from_blocks, Horizon, Objective, PgdConfig, PgdRun, StructureMask};
use crate::trajectory::{collect_batch, horizon_for_decay, TrajectorySource};

/// Index pairs `(i, j)`, `i ≤ j`, of the half-vectorization.
fn half_indices(dim: usize) -> Vec<(usize, usize)> {
    (0..dim).flat_map(|j| (0..=j).map(move |i| (i, j))).collect()
}

/// Solves `α WᵀPW + S̃(Λ − P)S̃ = 0` for symmetric `P`.
///
/// `P` is parameterized by its upper triangle and the equation solved in
/// the least-squares sense. `S̃` and `W` are first divided by `‖S̃‖_F`
/// (the equation is homogeneous of degree two in them), and the residual
/// gate `1e-8 (1 + ‖Λ‖_F)` applies in those normalized units.
pub fn solve_value_from_data(s_tilde: &BlockSym, w: &DMatrix<f64>, cost: &CostSpec, alpha: f64) -> Result<BlockSym> {
    let dim = s_tilde.dim();
    let lambda = cost.lambda();
    if lambda.nrows() != dim {
        return Err(Error::dim("Lambda", (dim, dim), lambda.shape()));
    }
    if w.shape() != (dim, dim) {
        return Err(Error::dim("W", (dim, dim), w.shape()));
    }
    if !(0.0..=1.0).contains(&alpha) {
        return Err(Error::InvalidArgument(format!("discount alpha must lie in [0, 1], got {alpha}")));
    }
    let s = s_tilde.full();
    let min_eig = min_eigenvalue(s);
    if min_eig <= PSD_TOLERANCE * s.trace().abs() {
        return Err(Error::Excitation { min_eigenvalue: min_eig });
    }
    let scale = s.norm();
    let s = s / scale;
    let w = w / scale;

    let idx = half_indices(dim);
    let mut system = DMatrix::zeros(dim * dim, idx.len());
    for (col, &(i, j)) in idx.iter().enumerate() {
        let mut e = DMatrix::zeros(dim, dim);
        e[(i, j)] = 1.0;
        e[(j, i)] = 1.0;
        let image = w.transpose() * &e * &w * alpha - &s * &e * &s;
        system.column_mut(col).copy_from_slice(image.as_slice());
    }
    let rhs_m = -(&s * lambda * &s);
    let rhs = DVector::from_column_slice(rhs_m.as_slice());

    let svd = system.clone().svd(true, true);
    let sv = &svd.singular_values;
    let (smax, smin) = (sv.max(), sv.min());
    if !(smin > 1e-13 * smax) {
        return Err(Error::Degenerate(format!(
            "data equation for P is rank deficient (singular values {smin:.3e} / {smax:.3e})"
        )));
    }
    let theta = svd
        .solve(&rhs, 0.0)
        .map_err(|e| Error::Numerical(e.to_string()))?;
    let mut p = DMatrix::zeros(dim, dim);
    for (k, &(i, j)) in idx.iter().enumerate() {
        p[(i, j)] = theta[k];
        p[(j, i)] = theta[k];
    }
    let residual = (w.transpose() * &p * &w * alpha + &s * (lambda - &p) * &s).norm();
    if residual > 1e-8 * (1.0 + lambda.norm()) {
        return Err(Error::Numerical(format!(
            "data equation residual {residual:.3e} exceeds gate"
        )));
    }
    BlockSym::new(p, s_tilde.split())
}

/// `2 P₁₂ᵀ(S̃₁₁ − Γ₁₁) + 2 P₂₂ F (S̃₁₁ − Γ₁₁)`.
pub fn gradient_model_free(p: &BlockSym, s_tilde: &BlockSym, f: &Gain, excitation: &ExcitationSpec) -> Result<DMatrix<f64>> {
    let n = s_tilde.split();
    let dim = s_tilde.dim();
    if p.dim() != dim || p.split() != n {
        return Err(Error::dim("P", (dim, dim), (p.dim(), p.dim())));
    }
    if f.matrix().shape() != (dim - n, n) {
        return Err(Error::dim("gain F", (dim - n, n), f.matrix().shape()));
    }
    let gamma11 = excitation
        .gamma11()
        .ok_or_else(|| Error::InvalidArgument("model-free gradient needs an augmented excitation Gamma".into()))?;
    if gamma11.nrows() != n {
        return Err(Error::dim("Gamma11", (n, n), gamma11.shape()));
    }
    let h = s_tilde.m11() - gamma11;
    Ok(gradient_from_blocks(p, f.matrix(), &h))
}

/// `Â_F = W₀ Γ⁻¹` from one step of every seed.
pub fn estimate_closed_loop<T: TrajectorySource + ?Sized>(source: &T, f: &DMatrix<f64>, seeds: &[DVector<f64>]) -> Result<DMatrix<f64>> {
    let batch = collect_batch(source, f, seeds, 0)?;
    let gamma = batch.aggregate.full();
    let chol = gamma.clone().cholesky().ok_or(Error::Excitation {
        min_eigenvalue: min_eigenvalue(gamma),
    })?;
    // Â Γ = W₀  ⇔  Γ Âᵀ = W₀ᵀ
    Ok(chol.solve(&batch.cross.transpose()).transpose())
}

/// Trajectory-driven objective `J_α(F, Γ) = tr(Λ S̃)`.
struct DataObjective<'a, T: ?Sized> {
    source: &'a T,
    cost: &'a CostSpec,
    seeds: &'a [DVector<f64>],
    excitation: ExcitationSpec,
    horizon: Horizon,
}

impl<T: TrajectorySource + ?Sized> DataObjective<'_, T> {
    fn horizon_for(&self, gain: &Gain) -> Result<usize> {
        match self.horizon {
            Horizon::Fixed(m) => Ok(m),
            Horizon::Auto { eps } => {
                let n = self.source.state_dim() + self.source.input_dim();
                horizon_for_decay(gain.radius().powi(2), eps, n)
            }
        }
    }

    fn evaluate(&self, gain: &Gain, with_gradient: bool) -> Result<(f64, Option<DMatrix<f64>>)> {
        let m = self.horizon_for(gain)?;
        let batch = collect_batch(self.source, gain.matrix(), self.seeds, m)?;
        let j = batch.aggregate.trace_with(self.cost.lambda());
        if !with_gradient {
            return Ok((j, None));
        }
        let p = solve_value_from_data(&batch.aggregate, &batch.cross, self.cost, batch.alpha)?;
        let g = gradient_model_free(&p, &batch.aggregate, gain, &self.excitation)?;
        Ok((j, Some(g)))
    }
}

impl<T: TrajectorySource + ?Sized> Objective for DataObjective<'_, T> {
    fn certify(&self, f: &DMatrix<f64>) -> Result<Gain> {
        let a_hat = estimate_closed_loop(self.source, f, self.seeds)?;
        let radius = self.source.discount().sqrt() * spectral_radius(&a_hat)?;
        Ok(Gain::from_estimate(f.clone(), radius))
    }

    fn cost(&self, gain: &Gain) -> Result<f64> {
        Ok(self.evaluate(gain, false)?.0)
    }

    fn cost_and_gradient(&self, gain: &Gain) -> Result<(f64, DMatrix<f64>)> {
        let (j, g) = self.evaluate(gain, true)?;
        Ok((j, g.expect("gradient requested")))
    }
}

fn data_objective<'a, T: TrajectorySource + ?Sized>(
    source: &'a T,
    cost: &'a CostSpec,
    seeds: &'a [DVector<f64>],
    horizon: Horizon,
) -> Result<DataObjective<'a, T>> {
    let (n, m) = (source.state_dim(), source.input_dim());
    if cost.n() != n || cost.m() != m {
        return Err(Error::dim("cost (Q, R)", (n, m), (cost.n(), cost.m())));
    }
    if seeds.is_empty() {
        return Err(Error::InvalidArgument("at least one augmented seed is required".into()));
    }
    if let Some(bad) = seeds.iter().find(|v| v.len() != n + m) {
        return Err(Error::dim("augmented seed", (n + m, 1), (bad.len(), 1)));
    }
    let gamma = gram(seeds)?;
    let excitation = ExcitationSpec::from_augmented_gram(gamma.clone(), n).map_err(|_| Error::Excitation {
        min_eigenvalue: min_eigenvalue(&gamma),
    })?;
    Ok(DataObjective {
        source,
        cost,
        seeds,
        excitation,
        horizon,
    })
}

/// Cost, data-driven gradient and certified gain at a single `F`.
pub fn data_gradient<T: TrajectorySource + ?Sized>(
    source: &T,
    cost: &CostSpec,
    f: &DMatrix<f64>,
    seeds: &[DVector<f64>],
    horizon: Horizon,
) -> Result<(f64, DMatrix<f64>, Gain)> {
    let objective = data_objective(source, cost, seeds, horizon)?;
    let gain = objective.certify(f)?;
    if !gain.is_stabilizing() {
        return Err(Error::Unstable { radius: gain.radius() });
    }
    let (j, g) = objective.cost_and_gradient(&gain)?;
    Ok((j, g, gain))
}

/// Projected gradient descent on `J_α(F, Γ)` using trajectories only.
///
/// `f0` is certified from data, since the caller may not know the model.
pub fn pgd_modelfree_run<T: TrajectorySource + ?Sized>(
    source: &T,
    cost: &CostSpec,
    mask: &StructureMask,
    f0: &DMatrix<f64>,
    seeds: &[DVector<f64>],
    cfg: &PgdConfig,
) -> Result<PgdRun> {
    let (n, m) = (source.state_dim(), source.input_dim());
    if mask.shape() != (m, n) {
        return Err(Error::dim("structure mask", (m, n), mask.shape()));
    }
    let objective = data_objective(source, cost, seeds, cfg.horizon)?;
    descend(&objective, mask, f0, cfg)
}
