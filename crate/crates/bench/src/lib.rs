//! Shared fixtures for the criterion benchmarks.

use adaptgap_core::instances::HardFamily;
use adaptgap_core::{Extended, MixedMatrix, ProblemSpec, RngStream, Variant};

pub const FIXTURE_SEED: u64 = 0xBE7C_4000;

/// One seeded draw from a hard family on an `n1 x n2` grid.
pub fn fixture(variant: Variant, n1: usize, n2: usize, p: Extended, u: Extended) -> MixedMatrix {
    let spec = ProblemSpec::new(n1, n2, p, u).expect("valid benchmark spec");
    HardFamily::new(variant, spec)
        .expect("valid benchmark family")
        .sample(&mut RngStream::new(FIXTURE_SEED, 0))
}

/// Active-row input with `p = 1`, `u = inf`, the regime of the adaptive
/// estimator.
pub fn active_row(n: usize) -> MixedMatrix {
    fixture(
        Variant::ActiveRowBernoulli,
        n,
        n,
        Extended::Finite(1.0),
        Extended::Inf,
    )
}
