//! Shared fixtures for the benchmark suite.

use fbsde_core::{CoeffMatrix, LinearFbsde};

/// Instance with a single decoupling root and a strictly negative
/// dominating trajectory.
pub fn reference_instance() -> LinearFbsde {
    LinearFbsde::new(
        CoeffMatrix::new([-2.0, 0.0, 1.0], [1.0, -1.0, -2.0], [0.0, 2.0, 1.0]),
        -1.0,
        1.0,
        1.0,
    )
    .expect("valid instance")
}

/// Strongly coupled instance whose mirror cubic has three real roots.
pub fn coupled_instance() -> LinearFbsde {
    LinearFbsde::new(
        CoeffMatrix::new([5.0, 3.0, 5.0], [3.0, 1.0, -2.0], [5.0, 2.0, 4.0]),
        -4.0,
        1.0,
        1.0,
    )
    .expect("valid instance")
}
