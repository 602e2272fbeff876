//! Proptest strategies shared by the unit tests.

use proptest::prelude::*;

use crate::signature::TimeExtendedPath;
use crate::tensor::{TensorPoly, Word};

/// Sparse polynomial with up to `terms` words of length `<= max_len`.
pub fn arb_poly(max_len: usize, cap: usize, terms: usize) -> impl Strategy<Value = TensorPoly> {
    let word = (0..=max_len).prop_flat_map(|len| (Just(len), 0u64..(1u64 << len)));
    prop::collection::vec((word, -1.0f64..1.0), 0..=terms)
        .prop_map(move |ts| TensorPoly::from_terms(cap, ts.into_iter().map(|((len, bits), c)| (Word::from_bits(len, bits), c))))
}

/// Same, with no constant term.
pub fn arb_poly_no_constant(max_len: usize, cap: usize, terms: usize) -> impl Strategy<Value = TensorPoly> {
    arb_poly(max_len, cap, terms).prop_map(|p| TensorPoly::from_terms(p.level_cap(), p.iter().filter(|(w, _)| !w.is_empty())))
}

/// Brownian-like path with `steps` increments on `[0, 1]`.
pub fn arb_path(steps: std::ops::RangeInclusive<usize>) -> impl Strategy<Value = TimeExtendedPath> {
    steps.prop_flat_map(|j| {
        let sd = (1.0 / j as f64).sqrt();
        prop::collection::vec(-3.0 * sd..3.0 * sd, j)
            .prop_map(move |dw| TimeExtendedPath::from_increments(1.0 / j as f64, &dw).unwrap())
    })
}
