//! Randomized invariants over fixed-seed instances.

mod common;

use proptest::prelude::*;
use proptest::test_runner::TestCaseError;

use common::fixed;
use common::invariants::{self, Check};

fn holds(check: Check) -> Result<(), TestCaseError> {
    check.map_err(TestCaseError::fail)
}

proptest! {
    #![proptest_config(fixed(24, 0x5eed_0001))]

    #[test]
    fn schur_witness_g_equals_p(seed in any::<u64>(), n in 1usize..5) {
        holds(invariants::schur_witness(seed, n))?;
    }

    #[test]
    fn schur_block_implies_lyapunov_inequality(seed in any::<u64>(), n in 1usize..5) {
        holds(invariants::schur_converse(seed, n))?;
    }

    #[test]
    fn stein_matches_series(seed in any::<u64>(), n in 1usize..6) {
        holds(invariants::stein_vs_series(seed, n))?;
    }

    #[test]
    fn covariance_operator_is_monotone(seed in any::<u64>(), n in 1usize..4, m in 1usize..3) {
        holds(invariants::covariance_monotone(seed, n, m))?;
    }

    #[test]
    fn projection_is_idempotent_and_nonexpansive(seed in any::<u64>(), m in 1usize..4, n in 1usize..5) {
        holds(invariants::projection(seed, m, n))?;
    }

    #[test]
    fn cross_aggregate_is_closed_loop_times_aggregate(seed in any::<u64>(), n in 1usize..4, m in 1usize..3, horizon in 0usize..40) {
        holds(invariants::cross_identity(seed, n, m, horizon))?;
    }

    #[test]
    fn state_gram_gradient_matches_finite_differences(seed in any::<u64>(), n in 1usize..4, m in 1usize..3) {
        let err = invariants::state_gradient_error(seed, n, m).map_err(TestCaseError::fail)?;
        prop_assert!(err <= 1e-5, "relative error {}", err);
    }

    #[test]
    fn excitation_gradient_matches_finite_differences(seed in any::<u64>(), n in 1usize..4, m in 1usize..3) {
        let err = invariants::excitation_gradient_error(seed, n, m).map_err(TestCaseError::fail)?;
        prop_assert!(err <= 1e-5, "relative error {}", err);
    }

    #[test]
    fn value_from_exact_data_matches_stein(seed in any::<u64>(), n in 1usize..4, m in 1usize..3) {
        holds(invariants::value_from_data(seed, n, m))?;
    }
}
