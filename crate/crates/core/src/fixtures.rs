//! Seeded random instances for tests, benchmarks and the CLI `--seed` flag.
//!
//! Every generator takes an explicit RNG so callers control reproducibility;
//! [`rng`] builds the ChaCha stream used throughout the test suites.

use nalgebra::{dmatrix, DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::linalg::{spectral_radius, symmetrize, CostSpec, Gain, SystemModel};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// The double integrator `A = [[1,1],[0,1]]`, `B = [0;1]`.
pub fn double_integrator(alpha: f64) -> SystemModel {
    SystemModel::new(dmatrix![1.0, 1.0; 0.0, 1.0], dmatrix![0.0; 1.0], alpha)
        .expect("valid model")
}

/// `Q = I₂`, `R = 0.1`.
pub fn double_integrator_cost() -> CostSpec {
    CostSpec::new(DMatrix::identity(2, 2), dmatrix![0.1]).expect("valid cost")
}

pub fn uniform_matrix<R: Rng>(rng: &mut R, rows: usize, cols: usize, scale: f64) -> DMatrix<f64> {
    DMatrix::from_fn(rows, cols, |_, _| rng.random_range(-scale..scale))
}

pub fn uniform_vector<R: Rng>(rng: &mut R, len: usize, scale: f64) -> DVector<f64> {
    DVector::from_fn(len, |_, _| rng.random_range(-scale..scale))
}

/// `X Xᵀ + shift·I` with a uniform `X`; positive definite when `shift > 0`.
pub fn random_psd<R: Rng>(rng: &mut R, dim: usize, shift: f64) -> DMatrix<f64> {
    let x = uniform_matrix(rng, dim, dim, 1.0);
    symmetrize(&(&x * x.transpose() + DMatrix::identity(dim, dim) * shift))
}

/// Uniform matrix rescaled so its spectral radius equals `radius`.
pub fn matrix_with_radius<R: Rng>(rng: &mut R, dim: usize, radius: f64) -> DMatrix<f64> {
    loop {
        let m = uniform_matrix(rng, dim, dim, 1.0);
        let rho = spectral_radius(&m).expect("square");
        if rho > 1e-3 {
            return m * (radius / rho);
        }
    }
}

/// A random instance together with a gain known to stabilize it.
#[derive(Debug, Clone)]
pub struct StabilizedInstance {
    pub model: SystemModel,
    pub cost: CostSpec,
    pub gain: Gain,
}

/// Builds `A = A_cl − B F` around a closed loop `A_cl` whose discounted
/// radius is drawn from `[0.3, 0.9]`, so `F` is stabilizing by construction.
pub fn stabilized_instance<R: Rng>(rng: &mut R, n: usize, m: usize, alpha: f64) -> StabilizedInstance {
    let target = rng.random_range(0.3..0.9);
    let a_cl = matrix_with_radius(rng, n, target / alpha.sqrt());
    let b = uniform_matrix(rng, n, m, 1.0);
    let f = uniform_matrix(rng, m, n, 0.5);
    let a = &a_cl - &b * &f;
    let model = SystemModel::new(a, b, alpha).expect("valid model");
    let gain = Gain::new(&model, f).expect("valid gain");
    debug_assert!(gain.is_stabilizing());
    let cost = random_cost(rng, n, m);
    StabilizedInstance { model, cost, gain }
}

/// `Q ⪰ 0` with a small identity shift and `R ≻ 0`.
pub fn random_cost<R: Rng>(rng: &mut R, n: usize, m: usize) -> CostSpec {
    let q = random_psd(rng, n, 0.1);
    let r = random_psd(rng, m, 0.1);
    CostSpec::new(q, r).expect("valid cost")
}

/// A random `(A, B)` pair with a possibly unstable `A` (radius up to 1.3);
/// a fully actuated-enough `B` keeps it stabilizable with probability one.
pub fn stabilizable_model<R: Rng>(rng: &mut R, n: usize, m: usize) -> SystemModel {
    let radius = rng.random_range(0.5..1.3);
    let a = matrix_with_radius(rng, n, radius);
    let b = uniform_matrix(rng, n, m, 1.0);
    SystemModel::undiscounted(a, b).expect("valid model")
}
