//! Regression coverage for degree-cap effects: the variational derivative
//! and d/dx lower the degree in the undifferentiated variables, so a
//! recursion check naively evaluated at the working cap picks up spurious
//! mismatches near the cap. check_recursion re-derives both sides at a
//! raised cap and compares only degrees the caller asked for.

use drham::cohft::CohFTDescriptor;
use drham::hierarchy::{build_bundle, check_recursion};
use drham::ring::TruncationPolicy;

#[test]
fn two_field_recursion_is_exact_at_default_caps() {
    let desc =
        CohFTDescriptor::builtin("two_field_genus0", TruncationPolicy::new(0, 6)).unwrap();
    let bundle = build_bundle(desc, 3).unwrap();
    let results = check_recursion(&bundle, 2);
    assert_eq!(results.len(), 8);
    for ((alpha, d), verdict) in results {
        assert!(
            verdict.is_ok(),
            "recursion(alpha={},d={}) at the default caps: {:?}",
            alpha,
            d,
            verdict
        );
    }
}
