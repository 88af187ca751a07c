//! Invariant checks shared by the property suites and the acceptance run.
//! Each takes a seed (and sizes) and reports the first violation.

use nalgebra::{DMatrix, DVector};

use super::{central_difference, cost_from_augmented, cost_from_states, relative_error, series};
use lqrsynth::fixtures::{matrix_with_radius, random_psd, rng, stabilized_instance, uniform_matrix, uniform_vector};
use lqrsynth::linalg::{
    apply_covariance_operator, closed_loop, is_psd, max_eigenvalue, min_eigenvalue, solve_stein,
    solve_stein_covariance, solve_stein_value, ExcitationSpec,
};
use lqrsynth::modelfree::{gradient_model_free, solve_value_from_data};
use lqrsynth::sdp::{extended_schur_block, AffineExpr};
use lqrsynth::structured::{
    excitation_cost, gradient_excitation_cost, gradient_state_gram, lifted_injection, z_cost, StructureMask,
};
use lqrsynth::trajectory::{collect_batch, SimulatedPlant};

pub type Check = Result<(), String>;

macro_rules! ensure {
    ($cond:expr, $($fmt:tt)+) => {
        if !$cond {
            return Err(format!($($fmt)+));
        }
    };
}

fn constant(m: &DMatrix<f64>) -> AffineExpr {
    AffineExpr::constant(m.clone())
}

/// `AᵀPA ⪯ P′` ⇒ the slack block is PSD with `G = P`.
pub fn schur_witness(seed: u64, n: usize) -> Check {
    let mut r = rng(seed);
    let p = random_psd(&mut r, n, 0.1);
    let a = uniform_matrix(&mut r, n, n, 1.0);
    let p_prime = a.transpose() * &p * &a + random_psd(&mut r, n, 0.0);
    let blk = extended_schur_block(&a, &constant(&p_prime), &constant(&p), &constant(&p)).evaluate(&[]);
    let min = min_eigenvalue(&blk);
    ensure!(min >= -1e-9 * (1.0 + blk.norm()), "witness block min eigenvalue {min:e}");
    Ok(())
}

/// A PSD slack block ⇒ `AᵀPA − P′ ⪯ 0`, via congruence with `[I, −Aᵀ]`.
pub fn schur_converse(seed: u64, n: usize) -> Check {
    let mut r = rng(seed);
    let p = random_psd(&mut r, n, 0.1);
    let skew = uniform_matrix(&mut r, n, n, 1.0);
    let g = &p + (&skew - skew.transpose()) + random_psd(&mut r, n, 0.0);
    let a = uniform_matrix(&mut r, n, n, 1.0);
    let corner = &g + g.transpose() - &p;
    let ga = &g * &a;
    let p_prime = ga.transpose() * corner.cholesky().ok_or("G + Gᵀ − P not PD")?.solve(&ga) + random_psd(&mut r, n, 0.0);
    let blk = extended_schur_block(&a, &constant(&p_prime), &constant(&g), &constant(&p)).evaluate(&[]);
    ensure!(min_eigenvalue(&blk) >= -1e-9 * (1.0 + blk.norm()), "constructed block is not PSD");
    let mut t = DMatrix::zeros(n, 2 * n);
    t.view_mut((0, 0), (n, n)).fill_with_identity();
    t.view_mut((0, n), (n, n)).copy_from(&(-a.transpose()));
    let reduced = &t * &blk * t.transpose();
    let lyap = a.transpose() * &p * &a - &p_prime;
    ensure!((&reduced + &lyap).norm() <= 1e-9 * (1.0 + reduced.norm()), "congruence does not reduce to P′ − AᵀPA");
    let max = max_eigenvalue(&lyap);
    ensure!(max <= 1e-9 * (1.0 + lyap.norm()), "AᵀPA − P′ has eigenvalue {max:e}");
    Ok(())
}

pub fn stein_vs_series(seed: u64, n: usize) -> Check {
    let mut r = rng(seed);
    let radius = (0.95 * (seed % 1000) as f64 / 1000.0).max(0.05);
    let m = matrix_with_radius(&mut r, n, radius);
    let rhs = random_psd(&mut r, n, 0.0);
    let x = solve_stein(&m, &rhs).map_err(|e| e.to_string())?;
    let err = relative_error(&x, &series(&m, &rhs));
    ensure!(err <= 1e-9, "Stein vs series relative error {err:e}");
    Ok(())
}

/// Iterating ℋ from a start with ℋ(S₀) ⪯ S₀ decreases monotonically to the
/// Stein fixed point.
pub fn covariance_monotone(seed: u64, n: usize, m: usize) -> Check {
    let mut r = rng(seed);
    let inst = stabilized_instance(&mut r, n, m, 1.0);
    let f = inst.gain.matrix();
    let z = random_psd(&mut r, n, 0.1);
    let injection = lifted_injection(f, &z);
    let fixed_point = solve_stein_covariance(&inst.model, &inst.gain, &injection)
        .map_err(|e| e.to_string())?
        .into_inner();
    // S₀ = S* + Y with Y = A_F Y A_Fᵀ + R, R ⪰ 0
    let af = closed_loop(&inst.model, f).map_err(|e| e.to_string())?.augmented().clone();
    let y = solve_stein(&af, &random_psd(&mut r, n + m, 0.0)).map_err(|e| e.to_string())?;
    let mut s = &fixed_point + y;
    let scale = 1.0 + s.norm();
    let start_gap = (&s - &fixed_point).norm();
    for k in 0..200 {
        let next = apply_covariance_operator(&inst.model, f, &injection, &s).map_err(|e| e.to_string())?;
        let dip = min_eigenvalue(&(&s - &next));
        ensure!(dip >= -1e-9 * scale, "step {k}: S_k − S_(k+1) has eigenvalue {dip:e}");
        s = next;
    }
    ensure!(is_psd(&(&s - &fixed_point)), "iterates crossed below the fixed point");
    let gap = (&s - &fixed_point).norm();
    ensure!(gap <= 1e-3 * start_gap.max(1e-12) + 1e-9 * scale, "no convergence: gap {gap:e}");
    Ok(())
}

pub fn projection(seed: u64, m: usize, n: usize) -> Check {
    let mut r = rng(seed);
    let pattern = uniform_matrix(&mut r, m, n, 1.0).map(|v| if v > 0.0 { 1.0 } else { 0.0 });
    let mask = StructureMask::new(pattern).map_err(|e| e.to_string())?;
    let x = uniform_matrix(&mut r, m, n, 3.0);
    let y = uniform_matrix(&mut r, m, n, 3.0);
    let px = mask.project(&x).map_err(|e| e.to_string())?;
    let py = mask.project(&y).map_err(|e| e.to_string())?;
    ensure!(mask.project(&px).map_err(|e| e.to_string())? == px, "projection is not idempotent");
    ensure!(mask.contains(&px), "projection leaves the subspace");
    ensure!((&px - &py).norm() <= (&x - &y).norm() + 1e-15, "projection expands distances");
    ensure!((&x - &px).dot(&px).abs() <= 1e-12 * (1.0 + x.norm_squared()), "residual not orthogonal");
    Ok(())
}

pub fn cross_identity(seed: u64, n: usize, m: usize, horizon: usize) -> Check {
    let mut r = rng(seed);
    let inst = stabilized_instance(&mut r, n, m, 0.9);
    let seeds: Vec<DVector<f64>> = (0..n + m).map(|_| uniform_vector(&mut r, n + m, 1.0)).collect();
    let plant = SimulatedPlant::new(inst.model.clone());
    let batch = collect_batch(&plant, inst.gain.matrix(), &seeds, horizon).map_err(|e| e.to_string())?;
    let af = closed_loop(&inst.model, inst.gain.matrix()).map_err(|e| e.to_string())?.augmented().clone();
    let expected = af * batch.aggregate.full();
    let err = (&batch.cross - &expected).norm();
    ensure!(err <= 1e-10 * (1.0 + expected.norm()), "‖W − A_F S̃‖ = {err:e}");
    Ok(())
}

/// Relative error of the initial-state gradient against central differences.
pub fn state_gradient_error(seed: u64, n: usize, m: usize) -> Result<f64, String> {
    let mut r = rng(seed);
    let inst = stabilized_instance(&mut r, n, m, 0.9);
    let z = random_psd(&mut r, n, 0.1);
    let analytic = gradient_state_gram(&inst.model, &inst.gain, &inst.cost, &z).map_err(|e| e.to_string())?;
    let fd = central_difference(inst.gain.matrix(), 1e-5, |f| cost_from_states(&inst.model, &inst.cost, f, &z));
    let j = z_cost(&inst.model, &inst.gain, &inst.cost, &z).map_err(|e| e.to_string())?;
    let oracle = cost_from_states(&inst.model, &inst.cost, inst.gain.matrix(), &z);
    ensure!((j - oracle).abs() <= 1e-9 * (1.0 + oracle.abs()), "cost {j} vs series {oracle}");
    Ok(relative_error(&analytic, &fd))
}

/// Relative error of the augmented-excitation gradient against central differences.
pub fn excitation_gradient_error(seed: u64, n: usize, m: usize) -> Result<f64, String> {
    let mut r = rng(seed);
    let inst = stabilized_instance(&mut r, n, m, 0.9);
    let gamma = random_psd(&mut r, n + m, 0.1);
    let analytic = gradient_excitation_cost(&inst.model, &inst.gain, &inst.cost, &gamma).map_err(|e| e.to_string())?;
    let fd = central_difference(inst.gain.matrix(), 1e-5, |f| cost_from_augmented(&inst.model, &inst.cost, f, &gamma));
    let j = excitation_cost(&inst.model, &inst.gain, &inst.cost, &gamma).map_err(|e| e.to_string())?;
    let oracle = cost_from_augmented(&inst.model, &inst.cost, inst.gain.matrix(), &gamma);
    ensure!((j - oracle).abs() <= 1e-9 * (1.0 + oracle.abs()), "cost {j} vs series {oracle}");
    Ok(relative_error(&analytic, &fd))
}

/// Value and gradient recovered from exact aggregates match the model.
pub fn value_from_data(seed: u64, n: usize, m: usize) -> Check {
    let mut r = rng(seed);
    let inst = stabilized_instance(&mut r, n, m, 0.9);
    let gamma = random_psd(&mut r, n + m, 0.2);
    let s = solve_stein_covariance(&inst.model, &inst.gain, &gamma).map_err(|e| e.to_string())?;
    let af = closed_loop(&inst.model, inst.gain.matrix()).map_err(|e| e.to_string())?.augmented().clone();
    let w = af * s.full();
    let p = solve_value_from_data(&s, &w, &inst.cost, 0.9).map_err(|e| e.to_string())?;
    let exact = solve_stein_value(&inst.model, &inst.gain, inst.cost.lambda()).map_err(|e| e.to_string())?;
    let err = relative_error(p.full(), exact.full());
    ensure!(err <= 1e-6, "value relative error {err:e}");
    let exc = ExcitationSpec::from_augmented_gram(gamma.clone(), n).map_err(|e| e.to_string())?;
    let g = gradient_model_free(&p, &s, &inst.gain, &exc).map_err(|e| e.to_string())?;
    let exact_g = gradient_excitation_cost(&inst.model, &inst.gain, &inst.cost, &gamma).map_err(|e| e.to_string())?;
    let err = relative_error(&g, &exact_g);
    ensure!(err <= 1e-6, "gradient relative error {err:e}");
    Ok(())
}
