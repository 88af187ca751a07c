#![allow(dead_code)]

pub mod invariants;

use nalgebra::DMatrix;
use proptest::test_runner::{Config, RngSeed};

use lqrsynth::linalg::{CostSpec, SystemModel};

/// Fixed-seed proptest configuration with `cases` instances.
pub fn fixed(cases: u32, seed: u64) -> Config {
    Config {
        cases,
        rng_seed: RngSeed::Fixed(seed),
        failure_persistence: None,
        ..Config::default()
    }
}

/// `Σ_k M^k N (Mᵀ)^k` summed until the terms stop mattering.
pub fn series(m: &DMatrix<f64>, n: &DMatrix<f64>) -> DMatrix<f64> {
    let mut acc = n.clone();
    let mut term = n.clone();
    for _ in 0..100_000 {
        term = m * &term * m.transpose();
        acc += &term;
        if term.norm() <= 1e-17 * acc.norm() {
            break;
        }
    }
    acc
}

/// State-space value `P_x = Σ_k α^k (A+BF)ᵀᵏ (Q + FᵀRF) (A+BF)ᵏ`.
pub fn state_value(model: &SystemModel, cost: &CostSpec, f: &DMatrix<f64>) -> DMatrix<f64> {
    let acl = (model.a() + model.b() * f) * model.alpha().sqrt();
    series(&acl.transpose(), &(cost.q() + f.transpose() * cost.r() * f))
}

/// `J(F) = tr(P_x Z)`, the cost from initial-state second moment `Z`.
pub fn cost_from_states(model: &SystemModel, cost: &CostSpec, f: &DMatrix<f64>, z: &DMatrix<f64>) -> f64 {
    state_value(model, cost, f).dot(z)
}

/// `J(F) = tr(P Γ)` with `P` the lifted value `Λ + α A_Fᵀ P A_F`.
pub fn cost_from_augmented(model: &SystemModel, cost: &CostSpec, f: &DMatrix<f64>, gamma: &DMatrix<f64>) -> f64 {
    let (n, m) = (model.n(), model.m());
    let mut af = DMatrix::zeros(n + m, n + m);
    af.view_mut((0, 0), (n, n)).copy_from(model.a());
    af.view_mut((0, n), (n, m)).copy_from(model.b());
    af.view_mut((n, 0), (m, n)).copy_from(&(f * model.a()));
    af.view_mut((n, n), (m, m)).copy_from(&(f * model.b()));
    let af = af * model.alpha().sqrt();
    series(&af.transpose(), cost.lambda()).dot(gamma)
}

/// Central finite difference of `j` at `f`, entry by entry.
pub fn central_difference(f: &DMatrix<f64>, h: f64, j: impl Fn(&DMatrix<f64>) -> f64) -> DMatrix<f64> {
    DMatrix::from_fn(f.nrows(), f.ncols(), |r, c| {
        let mut plus = f.clone();
        let mut minus = f.clone();
        plus[(r, c)] += h;
        minus[(r, c)] -= h;
        (j(&plus) - j(&minus)) / (2.0 * h)
    })
}

pub fn relative_error(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    (a - b).norm() / b.norm().max(1e-300)
}
