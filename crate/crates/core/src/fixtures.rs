//! Shared test fixtures.

use crate::model::{JobSpec, Placement};
use crate::scalar::{int, Rational};

/// The worked example: Q = 3, N = 6, c_m = 1, c_s = 2, c_r = 1.
pub(crate) fn example_spec() -> JobSpec<Rational> {
    JobSpec::new(3, 6, int(1), int(2), int(1)).unwrap()
}

/// The worked example's five-server placement (three solvers, two helpers).
pub(crate) fn example_placement() -> Placement {
    Placement::from_lists(
        &[&[1, 2, 3, 4], &[3, 4, 5, 6], &[1, 2, 5, 6], &[1, 3, 5], &[2, 4, 6]],
        &[&[1], &[2], &[3], &[], &[]],
    )
}
