//! Randomized algebraic property tests for the ring, the variational
//! calculus, and the operator layer.

use proptest::prelude::*;

use drham::ring::{rat, DiffPoly, Monomial, TruncationPolicy, VarIndex};
use drham::varcalc::{var_derivative_density, LocalFunctional};

const N_FIELDS: u32 = 2;

fn trunc() -> TruncationPolicy {
    TruncationPolicy::new(2, 8)
}

fn arb_monomial() -> impl Strategy<Value = Monomial> {
    (
        0u32..=3,
        proptest::collection::vec((1u32..=N_FIELDS, 0u32..=3, 1u32..=2), 0..=3),
    )
        .prop_map(|(eps, factors)| {
            let mut m = Monomial::eps(eps);
            for (alpha, d, e) in factors {
                for _ in 0..e {
                    m = m.mul(&Monomial::var(VarIndex::new(alpha, d)));
                }
            }
            m
        })
}

fn arb_poly() -> impl Strategy<Value = DiffPoly> {
    proptest::collection::vec((arb_monomial(), -6i64..=6, 1i64..=4), 0..=4).prop_map(|terms| {
        let mut f = DiffPoly::zero(trunc());
        for (m, p, q) in terms {
            if p != 0 {
                f.add_term(m, rat(p, q));
            }
        }
        f
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn addition_commutes(f in arb_poly(), g in arb_poly()) {
        prop_assert_eq!(f.add(&g).unwrap(), g.add(&f).unwrap());
    }

    #[test]
    fn multiplication_commutes_and_distributes(
        f in arb_poly(),
        g in arb_poly(),
        h in arb_poly(),
    ) {
        prop_assert_eq!(f.mul(&g).unwrap(), g.mul(&f).unwrap());
        let lhs = f.mul(&g.add(&h).unwrap()).unwrap();
        let rhs = f.mul(&g).unwrap().add(&f.mul(&h).unwrap()).unwrap();
        prop_assert_eq!(lhs, rhs);
        let assoc_l = f.mul(&g).unwrap().mul(&h).unwrap();
        let assoc_r = f.mul(&g.mul(&h).unwrap()).unwrap();
        prop_assert_eq!(assoc_l, assoc_r);
    }

    #[test]
    fn dx_is_a_derivation(f in arb_poly(), g in arb_poly()) {
        let lhs = f.mul(&g).unwrap().dx();
        let rhs = f.dx().mul(&g).unwrap().add(&f.mul(&g.dx()).unwrap()).unwrap();
        prop_assert_eq!(lhs, rhs);
    }

    #[test]
    fn partial_derivatives_commute(f in arb_poly()) {
        let a = VarIndex::new(1, 1);
        let b = VarIndex::new(2, 0);
        prop_assert_eq!(f.partial(a).partial(b), f.partial(b).partial(a));
    }

    #[test]
    fn variational_derivative_annihilates_total_derivatives(f in arb_poly()) {
        for alpha in 1..=N_FIELDS {
            prop_assert!(var_derivative_density(&f.dx(), alpha).is_zero());
        }
    }

    #[test]
    fn functional_equality_is_representative_independent(
        f in arb_poly(),
        g in arb_poly(),
    ) {
        let a = LocalFunctional::new(f.clone());
        let b = LocalFunctional::new(f.add(&g.dx()).unwrap());
        prop_assert!(a.equals(&b, N_FIELDS));
    }

    #[test]
    fn canonical_string_round_trips(f in arb_poly()) {
        let s = f.to_canonical_string();
        let back = DiffPoly::parse_canonical(&s, trunc()).unwrap();
        prop_assert_eq!(back, f);
    }

    #[test]
    fn eps_coefficients_reassemble(f in arb_poly()) {
        let mut sum = DiffPoly::zero(trunc());
        for k in 0..=trunc().eps_cap() {
            sum = sum.add(&f.eps_coefficient(k).mul_eps(k)).unwrap();
        }
        prop_assert_eq!(sum, f);
    }

    #[test]
    fn substitution_respects_products(f in arb_poly(), g in arb_poly()) {
        let images = vec![
            DiffPoly::var(1, 0, trunc()).scale(&rat(2, 1)),
            DiffPoly::var(2, 0, trunc())
                .add(&DiffPoly::var(1, 1, trunc()).mul_eps(1))
                .unwrap(),
        ];
        let lhs = f.mul(&g).unwrap().substitute(&images);
        let rhs = f
            .substitute(&images)
            .mul(&g.substitute(&images))
            .unwrap();
        prop_assert_eq!(lhs, rhs);
    }

    #[test]
    fn adjoint_is_an_involution(f in arb_poly(), j in 0u32..=3) {
        let mut op = drham::DiffOperator::zero(trunc());
        op.add_coeff(j, f);
        prop_assert_eq!(op.adjoint().adjoint(), op);
    }
}
