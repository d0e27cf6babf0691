//! Assembly of the DR hierarchy and both of its Poisson structures, the
//! principal hierarchy with Dubrovin's second bracket, and the theorem-level
//! identity checks: skewsymmetry, the bihamiltonian recursion, the
//! dispersionless comparison, and the pushforward identity that recovers the
//! dispersive operator from the genus-0 one.

use std::collections::BTreeMap;

use num_traits::{One, Zero};
use thiserror::Error;

use crate::cohft::{CohFTDescriptor, CohftError};
use crate::diffop::{omega_hat, DiffOperator, MatrixDiffOperator};
use crate::poisson::Verdict;
use crate::rational::{lemma_s2_pushforward, RationalError};
use crate::ring::{rat, DiffPoly, Rat, VarIndex};
use crate::varcalc::{e_hat, LocalFunctional, VarcalcError};

#[derive(Debug, Error)]
pub enum HierarchyError {
    #[error(transparent)]
    Cohft(#[from] CohftError),
    #[error(transparent)]
    Varcalc(#[from] VarcalcError),
    #[error(transparent)]
    Rational(#[from] RationalError),
}

/// The DR hierarchy data: Hamiltonians, the generating functional gbar
/// solved from (D - 2)gbar = gbar_{unit,1}, and both Poisson operators.
#[derive(Debug, Clone)]
pub struct HierarchyBundle {
    descriptor: CohFTDescriptor,
    g_functionals: BTreeMap<(u32, i64), LocalFunctional>,
    gbar: LocalFunctional,
    k1: MatrixDiffOperator,
    kdr: MatrixDiffOperator,
    d_max: i64,
}

/// Genus-0 data of the principal hierarchy and Dubrovin's second bracket.
#[derive(Debug, Clone)]
pub struct PrincipalBundle {
    h0_functionals: BTreeMap<(u32, i64), LocalFunctional>,
    b_matrix: Vec<Vec<DiffPoly>>,
    g_matrix: Vec<Vec<DiffPoly>>,
    k2_genus0: MatrixDiffOperator,
    d_max: i64,
}

fn compose_half_minus_mu_right(
    k: &MatrixDiffOperator,
    mu: &[Rat],
) -> MatrixDiffOperator {
    let mut out = k.clone();
    for a in 0..k.n() {
        for b in 0..k.n() {
            let c = rat(1, 2) - &mu[b];
            out.set_entry(a, b, k.entry(a, b).scale(&c));
        }
    }
    out
}

fn compose_half_minus_mu_left(
    k: &MatrixDiffOperator,
    mu: &[Rat],
) -> MatrixDiffOperator {
    let mut out = k.clone();
    for a in 0..k.n() {
        for b in 0..k.n() {
            let c = rat(1, 2) - &mu[a];
            out.set_entry(a, b, k.entry(a, b).scale(&c));
        }
    }
    out
}

fn min_eps_order(f: &DiffPoly) -> Option<u32> {
    f.terms().map(|(m, _)| m.eps_power).min()
}

fn operator_witness(diff: &MatrixDiffOperator) -> Option<(usize, usize, Option<u32>, String)> {
    for a in 0..diff.n() {
        for b in 0..diff.n() {
            let op = diff.entry(a, b);
            if !op.is_zero() {
                let mut eps = None;
                let mut desc = String::new();
                for (j, f) in op.orders() {
                    if f.is_zero() {
                        continue;
                    }
                    eps = match (eps, min_eps_order(f)) {
                        (None, e) => e,
                        (Some(x), Some(y)) => Some(x.min(y)),
                        (Some(x), None) => Some(x),
                    };
                    if desc.is_empty() {
                        desc = format!("order {} coefficient {}", j, f.to_canonical_string());
                    }
                }
                return Some((a + 1, b + 1, eps, desc));
            }
        }
    }
    None
}

pub fn build_bundle(
    descriptor: CohFTDescriptor,
    d_max: i64,
) -> Result<HierarchyBundle, HierarchyError> {
    let trunc = descriptor.trunc();
    let n = descriptor.n();
    let mut g_functionals = BTreeMap::new();
    for alpha in 1..=n as u32 {
        for d in -1..=d_max {
            g_functionals.insert((alpha, d), descriptor.build_g(alpha, d)?);
        }
    }
    let mut g_unit_1 = LocalFunctional::zero(trunc);
    for (alpha, c) in descriptor.unit().iter().enumerate() {
        if c.is_zero() {
            continue;
        }
        let g = if let Some(g) = g_functionals.get(&((alpha + 1) as u32, 1)) {
            g.clone()
        } else {
            descriptor.build_g((alpha + 1) as u32, 1)?
        };
        g_unit_1 = g_unit_1.add(&g.scale(c));
    }
    let gbar = g_unit_1.solve_d_minus_2()?;
    let k1 = MatrixDiffOperator::const_times_dx(descriptor.eta_inv(), 1, trunc);
    let kdr = assemble_kdr(&descriptor, &gbar);
    Ok(HierarchyBundle {
        descriptor,
        g_functionals,
        gbar,
        k1,
        kdr,
        d_max,
    })
}

fn assemble_kdr(descriptor: &CohFTDescriptor, gbar: &LocalFunctional) -> MatrixDiffOperator {
    let trunc = descriptor.trunc();
    let hom = descriptor.hom();
    let mu = hom.mu_vec();
    let omega0 = omega_hat(gbar, 0, descriptor.eta_inv());
    let omega1 = omega_hat(gbar, 1, descriptor.eta_inv());
    let dx = DiffOperator::dx_pow(1, trunc);
    let term1 = omega0
        .map_entries(|op| op.map_coeffs(|f| e_hat(f, hom)).compose(&dx));
    let term2 = compose_half_minus_mu_right(
        &omega0.map_entries(|op| op.map_coeffs(|f| f.dx())),
        &mu,
    );
    let term3 = omega1.map_entries(|op| dx.compose(op).compose(&dx));
    term1.add(&term2).add(&term3)
}

impl HierarchyBundle {
    pub fn descriptor(&self) -> &CohFTDescriptor {
        &self.descriptor
    }

    pub fn g_functional(&self, alpha: u32, d: i64) -> Option<&LocalFunctional> {
        self.g_functionals.get(&(alpha, d))
    }

    pub fn g_functionals(&self) -> &BTreeMap<(u32, i64), LocalFunctional> {
        &self.g_functionals
    }

    pub fn gbar(&self) -> &LocalFunctional {
        &self.gbar
    }

    pub fn k1(&self) -> &MatrixDiffOperator {
        &self.k1
    }

    pub fn kdr(&self) -> &MatrixDiffOperator {
        &self.kdr
    }

    pub fn d_max(&self) -> i64 {
        self.d_max
    }

    /// Variational gradient of gbar_{alpha,d} as an N-tuple.
    pub fn gradient(&self, alpha: u32, d: i64) -> Option<Vec<DiffPoly>> {
        let g = self.g_functionals.get(&(alpha, d))?;
        Some(
            (1..=self.descriptor.n() as u32)
                .map(|b| g.var_derivative(b))
                .collect(),
        )
    }
}

/// Alternative closed form of the same operator; the A-term is the constant
/// matrix eta^{-1} A eta^{-1} times dx.
pub fn build_kdr_alt(bundle: &HierarchyBundle) -> MatrixDiffOperator {
    let descriptor = &bundle.descriptor;
    let trunc = descriptor.trunc();
    let n = descriptor.n();
    let mu = descriptor.hom().mu_vec();
    let omega0 = omega_hat(&bundle.gbar, 0, descriptor.eta_inv());
    let omega1 = omega_hat(&bundle.gbar, 1, descriptor.eta_inv());
    let dx = DiffOperator::dx_pow(1, trunc);
    let term1 = compose_half_minus_mu_right(&omega0.map_entries(|op| dx.compose(op)), &mu);
    let term2 = compose_half_minus_mu_left(&omega0.map_entries(|op| op.compose(&dx)), &mu);
    let eta_inv = descriptor.eta_inv();
    let a_lower = descriptor.a_lower();
    let mut conj = vec![vec![Rat::zero(); n]; n];
    for a in 0..n {
        for b in 0..n {
            let mut s = Rat::zero();
            for m in 0..n {
                for nu in 0..n {
                    s += &eta_inv[a][m] * &a_lower[m][nu] * &eta_inv[nu][b];
                }
            }
            conj[a][b] = s;
        }
    }
    let term3 = MatrixDiffOperator::const_times_dx(&conj, 1, trunc);
    let term4 = omega1.map_entries(|op| dx.compose(op).compose(&dx));
    term1.add(&term2).add(&term3).add(&term4)
}

pub fn build_principal(
    descriptor: &CohFTDescriptor,
    d_max: i64,
) -> Result<PrincipalBundle, HierarchyError> {
    let trunc = descriptor.trunc();
    let n = descriptor.n();
    let hom = descriptor.hom();
    let mut h0_functionals = BTreeMap::new();
    for alpha in 1..=n as u32 {
        let mut casimir = DiffPoly::zero(trunc);
        for nu in 0..n {
            casimir = casimir
                .add(&DiffPoly::var((nu + 1) as u32, 0, trunc)
                    .scale(&descriptor.eta()[alpha as usize - 1][nu]))
                .expect("truncation policies match");
        }
        h0_functionals.insert(
            (alpha, -1),
            LocalFunctional::with_label(casimir, format!("hbar[{},-1]", alpha)),
        );
        if d_max >= 0 {
            let densities = descriptor.principal_densities(alpha, d_max as u32)?;
            for (d, density) in densities.into_iter().enumerate() {
                h0_functionals.insert(
                    (alpha, d as i64),
                    LocalFunctional::with_label(density, format!("hbar[{},{}]", alpha, d)),
                );
            }
        }
    }
    let eta_inv = descriptor.eta_inv();
    let mut b_matrix = vec![vec![DiffPoly::zero(trunc); n]; n];
    for a in 0..n {
        for b in 0..n {
            let mut acc = DiffPoly::zero(trunc);
            for m in 0..n {
                for nu in 0..n {
                    let c = &eta_inv[a][m] * &eta_inv[b][nu];
                    if c.is_zero() {
                        continue;
                    }
                    let second = descriptor
                        .f0()
                        .partial(VarIndex::new((m + 1) as u32, 0))
                        .partial(VarIndex::new((nu + 1) as u32, 0));
                    acc = acc.add(&second.scale(&c)).expect("truncation policies match");
                }
            }
            b_matrix[a][b] = acc;
        }
    }
    let mut g_matrix = vec![vec![DiffPoly::zero(trunc); n]; n];
    for a in 0..n {
        for b in 0..n {
            let mut acc = DiffPoly::zero(trunc);
            for nu in 0..n {
                let euler = DiffPoly::var((nu + 1) as u32, 0, trunc)
                    .scale(&(Rat::one() - &hom.q[nu]))
                    .add(&DiffPoly::constant(hom.r[nu].clone(), trunc))
                    .expect("truncation policies match");
                acc = acc
                    .add(
                        &euler
                            .mul(&b_matrix[a][b].partial(VarIndex::new((nu + 1) as u32, 0)))
                            .expect("truncation policies match"),
                    )
                    .expect("truncation policies match");
            }
            g_matrix[a][b] = acc;
        }
    }
    let mut k2 = MatrixDiffOperator::zero(n, trunc);
    for a in 0..n {
        for b in 0..n {
            let mut op = DiffOperator::zero(trunc);
            op.add_coeff(1, g_matrix[a][b].clone());
            op.add_coeff(
                0,
                b_matrix[a][b].dx().scale(&(rat(1, 2) - hom.mu(b))),
            );
            k2.set_entry(a, b, op);
        }
    }
    Ok(PrincipalBundle {
        h0_functionals,
        b_matrix,
        g_matrix,
        k2_genus0: k2,
        d_max,
    })
}

impl PrincipalBundle {
    pub fn h0_functional(&self, alpha: u32, d: i64) -> Option<&LocalFunctional> {
        self.h0_functionals.get(&(alpha, d))
    }

    pub fn h0_functionals(&self) -> &BTreeMap<(u32, i64), LocalFunctional> {
        &self.h0_functionals
    }

    pub fn b_matrix(&self) -> &[Vec<DiffPoly>] {
        &self.b_matrix
    }

    pub fn g_matrix(&self) -> &[Vec<DiffPoly>] {
        &self.g_matrix
    }

    pub fn k2_genus0(&self) -> &MatrixDiffOperator {
        &self.k2_genus0
    }

    pub fn d_max(&self) -> i64 {
        self.d_max
    }
}

/// Verify K^DR grad(gbar_{alpha,d}) = (d + 3/2 + mu_alpha) eta^{-1} dx
/// grad(gbar_{alpha,d+1}) + A^beta_alpha eta^{-1} dx grad(gbar_{beta,d})
/// for each alpha and -1 <= d <= d_max.
///
/// Both sides are evaluated at an internally raised degree cap so that terms
/// dropped at the cap cannot feed back (through d/du^a_0 and dx, which lower
/// the degree in the undifferentiated variables) into the degrees the policy
/// promises; the comparison is then restricted to the policy's cap.
pub fn check_recursion(bundle: &HierarchyBundle, d_max: i64) -> Vec<((u32, i64), Verdict)> {
    let trunc = bundle.descriptor.trunc();
    let slack = 4 * trunc.genus_cap + 6;
    let elevated = crate::ring::TruncationPolicy::new(trunc.genus_cap, trunc.u0_cap + slack);
    let shadow = CohFTDescriptor::from_raw(bundle.descriptor.raw().clone(), elevated)
        .expect("descriptor was already validated");
    let shadow = match build_bundle(shadow, bundle.d_max) {
        Ok(b) => b,
        Err(_) => bundle.clone(),
    };
    let n = shadow.descriptor.n();
    let a_upper = shadow.descriptor.a_upper();
    let mu = shadow.descriptor.hom().mu_vec();
    let mut out = Vec::new();
    for alpha in 1..=n as u32 {
        for d in -1..=d_max {
            let grad_d = match shadow.gradient(alpha, d) {
                Some(g) => g,
                None => continue,
            };
            let grad_d1 = match shadow.gradient(alpha, d + 1) {
                Some(g) => g,
                None => continue,
            };
            let lhs = shadow.kdr.apply(&grad_d);
            let factor = rat(2 * d + 3, 2) + &mu[alpha as usize - 1];
            let mut rhs: Vec<DiffPoly> = shadow
                .k1
                .apply(&grad_d1)
                .into_iter()
                .map(|f| f.scale(&factor))
                .collect();
            for beta in 1..=n as u32 {
                let c = &a_upper[beta as usize - 1][alpha as usize - 1];
                if c.is_zero() {
                    continue;
                }
                let grad_b = shadow
                    .gradient(beta, d)
                    .expect("same d range for all indices");
                for (acc, f) in rhs.iter_mut().zip(shadow.k1.apply(&grad_b)) {
                    *acc = acc.add(&f.scale(c)).expect("truncation policies match");
                }
            }
            let mut verdict = Verdict::Ok;
            for (a, (l, r)) in lhs.iter().zip(&rhs).enumerate() {
                let mut diff = DiffPoly::zero(l.trunc());
                for (m, c) in l.sub(r).expect("truncation policies match").terms() {
                    if m.u0_degree() <= trunc.u0_cap {
                        diff.add_term(m.clone(), c.clone());
                    }
                }
                if !diff.is_zero() {
                    verdict = Verdict::Fail {
                        check: format!("recursion(alpha={},d={})", alpha, d),
                        epsilon_order: min_eps_order(&diff),
                        witness: format!(
                            "component {}: {}",
                            a + 1,
                            diff.to_canonical_string()
                        ),
                    };
                    break;
                }
            }
            out.push(((alpha, d), verdict));
        }
    }
    out
}

/// kdr at eps = 0 must coincide with Dubrovin's genus-0 operator entrywise.
pub fn check_dispersionless(bundle: &HierarchyBundle, principal: &PrincipalBundle) -> Verdict {
    let disp = bundle
        .kdr
        .map_entries(|op| op.map_coeffs(|f| f.dispersionless()));
    let diff = disp.sub(&principal.k2_genus0);
    match operator_witness(&diff) {
        None => Verdict::Ok,
        Some((a, b, eps, desc)) => Verdict::Fail {
            check: "dispersionless".to_string(),
            epsilon_order: eps,
            witness: format!("entry ({},{}): {}", a, b, desc),
        },
    }
}

/// The canonical singular-substitution data: P^alpha is the x-derivative of
/// the positive-eps part of g^{alpha,0} = eta^{alpha nu} (density of
/// gbar_{nu,0}) in its canonical table-assembled representative.
pub fn canonical_p_vector(bundle: &HierarchyBundle) -> Vec<DiffPoly> {
    let descriptor = &bundle.descriptor;
    let n = descriptor.n();
    let trunc = descriptor.trunc();
    (0..n)
        .map(|a| {
            let mut g = DiffPoly::zero(trunc);
            for nu in 0..n {
                let c = &descriptor.eta_inv()[a][nu];
                if c.is_zero() {
                    continue;
                }
                let density = bundle
                    .g_functionals
                    .get(&((nu + 1) as u32, 0))
                    .expect("d = 0 is always built")
                    .density()
                    .clone();
                g = g.add(&density.scale(c)).expect("truncation policies match");
            }
            g.sub(&g.dispersionless())
                .expect("truncation policies match")
                .dx()
        })
        .collect()
}

/// The pushforward of Dubrovin's genus-0 operator along the purely singular
/// substitution with polynomial part P must reproduce kdr exactly.
pub fn verify_kdr_identity(
    bundle: &HierarchyBundle,
    principal: &PrincipalBundle,
) -> Result<Verdict, HierarchyError> {
    let p = canonical_p_vector(bundle);
    verify_kdr_identity_with(bundle, principal, &p)
}

pub fn verify_kdr_identity_with(
    bundle: &HierarchyBundle,
    principal: &PrincipalBundle,
    p: &[DiffPoly],
) -> Result<Verdict, HierarchyError> {
    let pushed = lemma_s2_pushforward(&principal.k2_genus0, p)?;
    let diff = pushed.sub(&bundle.kdr);
    Ok(match operator_witness(&diff) {
        None => Verdict::Ok,
        Some((a, b, eps, desc)) => Verdict::Fail {
            check: "kdr_identity".to_string(),
            epsilon_order: eps,
            witness: format!("entry ({},{}): {}", a, b, desc),
        },
    })
}

/// All pairwise brackets of the Hamiltonians with respect to eta^{-1} dx
/// vanish as local functionals.
pub fn check_commuting(
    bundle: &HierarchyBundle,
    d_max: i64,
) -> Vec<(((u32, i64), (u32, i64)), Verdict)> {
    let n = bundle.descriptor.n() as u32;
    let mut keys: Vec<(u32, i64)> = bundle
        .g_functionals
        .keys()
        .filter(|(_, d)| *d <= d_max)
        .cloned()
        .collect();
    keys.sort();
    let mut out = Vec::new();
    for (i, k1) in keys.iter().enumerate() {
        for k2 in keys.iter().skip(i) {
            let f = &bundle.g_functionals[k1];
            let g = &bundle.g_functionals[k2];
            let br = crate::diffop::bracket(f, g, &bundle.k1);
            let verdict = if br.is_zero(n) {
                Verdict::Ok
            } else {
                let witness: Vec<String> = (1..=n)
                    .map(|a| br.var_derivative(a).to_canonical_string())
                    .collect();
                Verdict::Fail {
                    check: format!(
                        "commuting(({},{}),({},{}))",
                        k1.0, k1.1, k2.0, k2.1
                    ),
                    epsilon_order: None,
                    witness: format!("variational derivatives ({})", witness.join("; ")),
                }
            };
            out.push(((*k1, *k2), verdict));
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::diffop::hamiltonian_flow;
    use crate::poisson::{is_compatible, is_poisson};
    use crate::ring::TruncationPolicy;

    fn trivial(g: u32, m: u32, d_max: i64) -> HierarchyBundle {
        let desc =
            CohFTDescriptor::builtin("trivial_kdv", TruncationPolicy::new(g, m)).unwrap();
        build_bundle(desc, d_max).unwrap()
    }

    fn two_field(m: u32, d_max: i64) -> HierarchyBundle {
        let desc =
            CohFTDescriptor::builtin("two_field_genus0", TruncationPolicy::new(0, m)).unwrap();
        build_bundle(desc, d_max).unwrap()
    }

    fn expect_op(parts: &[(u32, &str)], trunc: TruncationPolicy) -> DiffOperator {
        let mut op = DiffOperator::zero(trunc);
        for (j, s) in parts {
            op.add_coeff(*j, DiffPoly::parse_canonical(s, trunc).unwrap());
        }
        op
    }

    #[test]
    fn gbar_density_for_kdv() {
        let bundle = trivial(1, 8, 2);
        let expect = DiffPoly::parse_canonical(
            "1/6*u[1,0]^3 + 1/48*eps^2*u[1,0]*u[1,2]",
            bundle.descriptor().trunc(),
        )
        .unwrap();
        assert_eq!(bundle.gbar().density(), &expect);
    }

    #[test]
    fn kdr_for_kdv_dispersionless() {
        let bundle = trivial(0, 8, 2);
        let trunc = bundle.descriptor().trunc();
        let expect = expect_op(&[(1, "u[1,0]"), (0, "1/2*u[1,1]")], trunc);
        assert_eq!(bundle.kdr().entry(0, 0), &expect);
    }

    #[test]
    fn kdr_for_kdv_genus1() {
        let bundle = trivial(1, 8, 2);
        let trunc = bundle.descriptor().trunc();
        let expect = expect_op(&[(1, "u[1,0]"), (0, "1/2*u[1,1]"), (3, "1/8*eps^2")], trunc);
        assert_eq!(bundle.kdr().entry(0, 0), &expect);
    }

    #[test]
    fn kdr_is_skew_and_poisson() {
        let bundle = trivial(1, 8, 2);
        assert!(bundle.kdr().is_skew());
        assert!(is_poisson(bundle.kdr()).is_ok());
        assert!(is_compatible(bundle.k1(), bundle.kdr()).is_ok());
        let bundle = two_field(8, 1);
        assert!(bundle.kdr().is_skew());
        assert!(is_poisson(bundle.kdr()).is_ok());
        assert!(is_compatible(bundle.k1(), bundle.kdr()).is_ok());
    }

    #[test]
    fn alternative_kdr_expression_agrees() {
        let bundle = trivial(1, 8, 2);
        assert!(build_kdr_alt(&bundle).sub(bundle.kdr()).is_zero());
        let bundle = two_field(8, 1);
        assert!(build_kdr_alt(&bundle).sub(bundle.kdr()).is_zero());
    }

    #[test]
    fn recursion_for_kdv() {
        let bundle = trivial(1, 10, 3);
        for ((alpha, d), verdict) in check_recursion(&bundle, 2) {
            assert!(verdict.is_ok(), "alpha = {}, d = {}: {:?}", alpha, d, verdict);
        }
    }

    #[test]
    fn recursion_for_two_field() {
        let bundle = two_field(14, 3);
        for ((alpha, d), verdict) in check_recursion(&bundle, 2) {
            assert!(verdict.is_ok(), "alpha = {}, d = {}: {:?}", alpha, d, verdict);
        }
    }

    #[test]
    fn recursion_d0_reproduces_kdv_flow() {
        let bundle = trivial(1, 8, 2);
        let lhs = bundle.kdr().apply(&bundle.gradient(1, 0).unwrap());
        let trunc = bundle.descriptor().trunc();
        let flow = DiffPoly::parse_canonical(
            "u[1,0]*u[1,1] + 1/12*eps^2*u[1,3]",
            trunc,
        )
        .unwrap();
        assert_eq!(lhs, vec![flow.scale(&rat(3, 2))]);
    }

    #[test]
    fn principal_bundle_for_kdv() {
        let desc =
            CohFTDescriptor::builtin("trivial_kdv", TruncationPolicy::new(1, 8)).unwrap();
        let principal = build_principal(&desc, 2).unwrap();
        let trunc = desc.trunc();
        let u = DiffPoly::var(1, 0, trunc);
        assert_eq!(&principal.b_matrix()[0][0], &u);
        assert_eq!(&principal.g_matrix()[0][0], &u);
        let expect = expect_op(&[(1, "u[1,0]"), (0, "1/2*u[1,1]")], trunc);
        assert_eq!(principal.k2_genus0().entry(0, 0), &expect);
        // the t^1_0 flow of the principal hierarchy is v_x
        let k1 = MatrixDiffOperator::const_times_dx(desc.eta_inv(), 1, trunc);
        let flow = hamiltonian_flow(&k1, principal.h0_functional(1, 0).unwrap());
        assert_eq!(flow, vec![DiffPoly::var(1, 1, trunc)]);
    }

    #[test]
    fn principal_k2_is_poisson_and_compatible() {
        let desc =
            CohFTDescriptor::builtin("two_field_genus0", TruncationPolicy::new(0, 8)).unwrap();
        let principal = build_principal(&desc, 1).unwrap();
        assert!(principal.k2_genus0().is_skew());
        assert!(is_poisson(principal.k2_genus0()).is_ok());
        let k1 = MatrixDiffOperator::const_times_dx(desc.eta_inv(), 1, desc.trunc());
        assert!(is_compatible(&k1, principal.k2_genus0()).is_ok());
    }

    #[test]
    fn dispersionless_comparison() {
        let bundle = trivial(1, 8, 2);
        let principal = build_principal(bundle.descriptor(), 2).unwrap();
        assert!(check_dispersionless(&bundle, &principal).is_ok());
        let bundle = two_field(8, 1);
        let principal = build_principal(bundle.descriptor(), 1).unwrap();
        assert!(check_dispersionless(&bundle, &principal).is_ok());
    }

    #[test]
    fn kdr_identity_for_kdv() {
        let bundle = trivial(1, 8, 2);
        let principal = build_principal(bundle.descriptor(), 2).unwrap();
        let p = canonical_p_vector(&bundle);
        let expect = DiffPoly::parse_canonical(
            "1/24*eps^2*u[1,3]",
            bundle.descriptor().trunc(),
        )
        .unwrap();
        assert_eq!(p, vec![expect]);
        assert!(verify_kdr_identity(&bundle, &principal).unwrap().is_ok());
    }

    #[test]
    fn kdr_identity_trivially_at_genus_zero() {
        let bundle = two_field(8, 1);
        let principal = build_principal(bundle.descriptor(), 1).unwrap();
        let p = canonical_p_vector(&bundle);
        assert!(p.iter().all(|f| f.is_zero()));
        assert!(verify_kdr_identity(&bundle, &principal).unwrap().is_ok());
    }

    #[test]
    fn kdr_identity_detects_perturbed_p() {
        let bundle = trivial(1, 8, 2);
        let principal = build_principal(bundle.descriptor(), 2).unwrap();
        let mut p = canonical_p_vector(&bundle);
        let trunc = bundle.descriptor().trunc();
        p[0] = p[0]
            .add(&DiffPoly::var(1, 2, trunc).mul_eps(2).scale(&rat(1, 5)))
            .unwrap();
        let verdict = verify_kdr_identity_with(&bundle, &principal, &p).unwrap();
        assert!(!verdict.is_ok());
    }

    #[test]
    fn hamiltonians_commute() {
        let bundle = trivial(1, 10, 2);
        for ((p, q), verdict) in check_commuting(&bundle, 2) {
            assert!(verdict.is_ok(), "{:?}, {:?}: {:?}", p, q, verdict);
        }
        let bundle = two_field(12, 2);
        for ((p, q), verdict) in check_commuting(&bundle, 2) {
            assert!(verdict.is_ok(), "{:?}, {:?}: {:?}", p, q, verdict);
        }
    }

    #[test]
    fn corrupted_table_breaks_commutativity() {
        let mut raw = CohFTDescriptor::builtin("trivial_kdv", TruncationPolicy::new(1, 10))
            .unwrap()
            .raw()
            .clone();
        for e in &mut raw.table {
            if e.d == 2 {
                e.value = "1/7".to_string();
            }
        }
        let desc = CohFTDescriptor::from_raw(raw, TruncationPolicy::new(1, 10)).unwrap();
        let bundle = build_bundle(desc, 2).unwrap();
        let results = check_commuting(&bundle, 2);
        assert!(results.iter().any(|(_, v)| !v.is_ok()));
    }

    #[test]
    fn gbar_satisfies_defining_relation() {
        let bundle = trivial(1, 8, 2);
        let lhs = bundle
            .gbar()
            .d_operator()
            .sub(&bundle.gbar().scale(&rat(2, 1)));
        let rhs = bundle.g_functional(1, 1).unwrap();
        assert!(lhs.equals(rhs, 1));
    }
}
