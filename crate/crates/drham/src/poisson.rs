//! Poisson property (skewsymmetry plus Jacobi) and pencil compatibility of
//! matrix differential operators, decided exactly at the working truncation
//! via the odd-variable bivector formalism.
//!
//! An operator K is encoded as the bivector P_K with density
//! (1/2) theta_alpha K^{alpha beta}(theta_beta). The variational Schouten
//! bracket of two bivectors is
//!
//!   [P, Q] = int sum_alpha ( dP/dtheta_alpha * dQ/du^alpha
//!                          + dP/du^alpha * dQ/dtheta_alpha ) dx,
//!
//! and vanishing of the resulting trivector modulo constants and Im dx is
//! decided by the vanishing of all its (even and odd) variational
//! derivatives. This sign convention is fixed by the requirements that
//! constant skew operators are Poisson and that the pencil identity holds;
//! both are covered by tests.

use std::collections::BTreeMap;

use num_traits::{One, Zero};
use serde::Serialize;
use thiserror::Error;

use crate::diffop::MatrixDiffOperator;
use crate::ring::{DiffPoly, Monomial, Rat, TruncationPolicy, VarIndex};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum PoissonError {
    #[error("operator is not skewsymmetric: entry ({0},{1}) fails at eps order {2}")]
    NotSkew(usize, usize, u32),
}

/// An anticommuting variable theta_alpha^d (d counts x-derivatives).
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub struct OddVar {
    pub alpha: u32,
    pub d: u32,
}

/// Sort an odd factor list, tracking the Koszul sign; None if a factor
/// repeats (the term vanishes).
fn canonicalize_odd(mut odd: Vec<OddVar>) -> Option<(Vec<OddVar>, bool)> {
    let mut swaps = 0u32;
    for i in 1..odd.len() {
        let mut j = i;
        while j > 0 && odd[j - 1] > odd[j] {
            odd.swap(j - 1, j);
            swaps += 1;
            j -= 1;
        }
    }
    for w in odd.windows(2) {
        if w[0] == w[1] {
            return None;
        }
    }
    Some((odd, swaps % 2 == 1))
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub struct SuperMonomial {
    pub odd: Vec<OddVar>,
    pub even: Monomial,
}

/// A differential polynomial in the even jet variables and eps together with
/// anticommuting theta variables, in canonical (sorted odd factors) form.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SuperDiffPoly {
    terms: BTreeMap<SuperMonomial, Rat>,
    trunc: TruncationPolicy,
}

impl SuperDiffPoly {
    pub fn zero(trunc: TruncationPolicy) -> Self {
        SuperDiffPoly {
            terms: BTreeMap::new(),
            trunc,
        }
    }

    pub fn from_even(p: &DiffPoly) -> Self {
        let mut out = SuperDiffPoly::zero(p.trunc());
        for (m, c) in p.terms() {
            out.add_term(
                SuperMonomial {
                    odd: Vec::new(),
                    even: m.clone(),
                },
                c.clone(),
            );
        }
        out
    }

    pub fn theta(alpha: u32, d: u32, trunc: TruncationPolicy) -> Self {
        let mut out = SuperDiffPoly::zero(trunc);
        out.add_term(
            SuperMonomial {
                odd: vec![OddVar { alpha, d }],
                even: Monomial::one(),
            },
            Rat::one(),
        );
        out
    }

    pub fn trunc(&self) -> TruncationPolicy {
        self.trunc
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn terms(&self) -> impl Iterator<Item = (&SuperMonomial, &Rat)> {
        self.terms.iter()
    }

    fn kept(&self, m: &Monomial) -> bool {
        m.eps_power <= self.trunc.eps_cap() && m.u0_degree() <= self.trunc.u0_cap
    }

    pub fn add_term(&mut self, m: SuperMonomial, c: Rat) {
        if c.is_zero() || !self.kept(&m.even) {
            return;
        }
        let (odd, flip) = match canonicalize_odd(m.odd) {
            Some(x) => x,
            None => return,
        };
        let c = if flip { -c } else { c };
        let key = SuperMonomial { odd, even: m.even };
        let entry = self.terms.entry(key.clone()).or_insert_with(Rat::zero);
        *entry += c;
        if entry.is_zero() {
            self.terms.remove(&key);
        }
    }

    pub fn add(&self, other: &SuperDiffPoly) -> SuperDiffPoly {
        assert_eq!(self.trunc, other.trunc, "truncation policies match");
        let mut out = self.clone();
        for (m, c) in &other.terms {
            out.add_term(m.clone(), c.clone());
        }
        out
    }

    pub fn scale(&self, k: &Rat) -> SuperDiffPoly {
        let mut out = SuperDiffPoly::zero(self.trunc);
        for (m, c) in &self.terms {
            out.add_term(m.clone(), c * k);
        }
        out
    }

    pub fn neg(&self) -> SuperDiffPoly {
        self.scale(&-Rat::one())
    }

    pub fn sub(&self, other: &SuperDiffPoly) -> SuperDiffPoly {
        self.add(&other.neg())
    }

    pub fn mul(&self, other: &SuperDiffPoly) -> SuperDiffPoly {
        let mut out = SuperDiffPoly::zero(self.trunc);
        for (ma, ca) in &self.terms {
            for (mb, cb) in &other.terms {
                // sign from moving the odd factors of b past those of a:
                // concatenation then canonical sort carries the Koszul sign.
                let mut odd = ma.odd.clone();
                odd.extend_from_slice(&mb.odd);
                out.add_term(
                    SuperMonomial {
                        odd,
                        even: ma.even.mul(&mb.even),
                    },
                    ca * cb,
                );
            }
        }
        out
    }

    /// Total x-derivative; an even derivation with dx theta^d = theta^{d+1}.
    pub fn dx(&self) -> SuperDiffPoly {
        let mut out = SuperDiffPoly::zero(self.trunc);
        for (m, c) in &self.terms {
            let even_part = DiffPoly::from_monomial(m.even.clone(), c.clone(), self.trunc).dx();
            for (me, ce) in even_part.terms() {
                out.add_term(
                    SuperMonomial {
                        odd: m.odd.clone(),
                        even: me.clone(),
                    },
                    ce.clone(),
                );
            }
            for i in 0..m.odd.len() {
                let mut odd = m.odd.clone();
                odd[i] = OddVar {
                    alpha: odd[i].alpha,
                    d: odd[i].d + 1,
                };
                out.add_term(
                    SuperMonomial {
                        odd,
                        even: m.even.clone(),
                    },
                    c.clone(),
                );
            }
        }
        out
    }

    pub fn dx_n(&self, n: u32) -> SuperDiffPoly {
        let mut out = self.clone();
        for _ in 0..n {
            out = out.dx();
        }
        out
    }

    pub fn partial_even(&self, v: VarIndex) -> SuperDiffPoly {
        let mut out = SuperDiffPoly::zero(self.trunc);
        for (m, c) in &self.terms {
            let e = m.even.exponent(v);
            if e == 0 {
                continue;
            }
            if let Some(reduced) = m.even.div_var(v) {
                out.add_term(
                    SuperMonomial {
                        odd: m.odd.clone(),
                        even: reduced,
                    },
                    c * Rat::from_integer(e.into()),
                );
            }
        }
        out
    }

    /// Left derivative with respect to theta_alpha^d.
    pub fn partial_odd(&self, v: OddVar) -> SuperDiffPoly {
        let mut out = SuperDiffPoly::zero(self.trunc);
        for (m, c) in &self.terms {
            if let Some(pos) = m.odd.iter().position(|w| *w == v) {
                let mut odd = m.odd.clone();
                odd.remove(pos);
                let mut cc = c.clone();
                if pos % 2 == 1 {
                    cc = -cc;
                }
                out.add_term(
                    SuperMonomial {
                        odd,
                        even: m.even.clone(),
                    },
                    cc,
                );
            }
        }
        out
    }

    pub fn max_even_order(&self) -> u32 {
        self.terms
            .keys()
            .flat_map(|m| m.even.powers.keys().map(|v| v.d))
            .max()
            .unwrap_or(0)
    }

    pub fn max_odd_order(&self) -> u32 {
        self.terms
            .keys()
            .flat_map(|m| m.odd.iter().map(|v| v.d))
            .max()
            .unwrap_or(0)
    }

    /// delta/delta u^alpha = sum_d (-dx)^d d/du^alpha_d.
    pub fn var_derivative_even(&self, alpha: u32) -> SuperDiffPoly {
        let mut out = SuperDiffPoly::zero(self.trunc);
        for d in 0..=self.max_even_order() {
            let mut p = self.partial_even(VarIndex::new(alpha, d)).dx_n(d);
            if d % 2 == 1 {
                p = p.neg();
            }
            out = out.add(&p);
        }
        out
    }

    /// delta/delta theta_alpha = sum_d (-dx)^d dL/dtheta_alpha^d.
    pub fn var_derivative_odd(&self, alpha: u32) -> SuperDiffPoly {
        let mut out = SuperDiffPoly::zero(self.trunc);
        for d in 0..=self.max_odd_order() {
            let mut p = self.partial_odd(OddVar { alpha, d }).dx_n(d);
            if d % 2 == 1 {
                p = p.neg();
            }
            out = out.add(&p);
        }
        out
    }

    pub fn min_eps_order(&self) -> Option<u32> {
        self.terms.keys().map(|m| m.even.eps_power).min()
    }
}

/// Decide whether a super density integrates to zero, i.e. lies in
/// constants + Im dx: all even and odd variational derivatives must vanish.
pub fn super_functional_is_zero(t: &SuperDiffPoly, n_fields: u32) -> bool {
    if t.is_zero() {
        return true;
    }
    if t.terms.keys().any(|m| m.odd.is_empty() && m.even.powers.is_empty()) {
        // pure constants integrate to a multiple of the circle length but
        // never arise from Schouten expansions of bivectors
        return false;
    }
    for alpha in 1..=n_fields {
        if !t.var_derivative_even(alpha).is_zero() {
            return false;
        }
        if !t.var_derivative_odd(alpha).is_zero() {
            return false;
        }
    }
    true
}

/// The bivector P_K with density (1/2) theta_alpha K^{alpha beta}(theta_beta),
/// defined for skewsymmetric K only.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Bivector {
    density: SuperDiffPoly,
    n: usize,
}

impl Bivector {
    pub fn density(&self) -> &SuperDiffPoly {
        &self.density
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// Reconstruct the operator: K^{alpha beta}_j is the coefficient of
    /// theta_beta^j in delta P / delta theta_alpha.
    pub fn to_operator(&self) -> MatrixDiffOperator {
        let trunc = self.density.trunc();
        let mut out = MatrixDiffOperator::zero(self.n, trunc);
        for a in 0..self.n {
            let der = self.density.var_derivative_odd((a + 1) as u32);
            let mut entries: Vec<crate::diffop::DiffOperator> =
                vec![crate::diffop::DiffOperator::zero(trunc); self.n];
            for (m, c) in der.terms() {
                assert_eq!(m.odd.len(), 1, "bivector odd derivative is linear in theta");
                let ov = m.odd[0];
                entries[(ov.alpha - 1) as usize].add_coeff(
                    ov.d,
                    DiffPoly::from_monomial(m.even.clone(), c.clone(), trunc),
                );
            }
            for (b, op) in entries.into_iter().enumerate() {
                out.set_entry(a, b, op);
            }
        }
        out
    }
}

fn first_nonzero_entry(k: &MatrixDiffOperator) -> Option<(usize, usize, u32)> {
    for a in 0..k.n() {
        for b in 0..k.n() {
            let entry = k.entry(a, b);
            if entry.is_zero() {
                continue;
            }
            let eps = entry
                .orders()
                .flat_map(|(_, p)| p.terms().map(|(m, _)| m.eps_power))
                .min()
                .unwrap_or(0);
            return Some((a, b, eps));
        }
    }
    None
}

pub fn bivector_of(k: &MatrixDiffOperator) -> Result<Bivector, PoissonError> {
    let sum = k.adjoint().add(k);
    if let Some((a, b, eps)) = first_nonzero_entry(&sum) {
        return Err(PoissonError::NotSkew(a + 1, b + 1, eps));
    }
    let trunc = k.trunc();
    let n = k.n();
    let mut density = SuperDiffPoly::zero(trunc);
    let half = crate::ring::rat(1, 2);
    for a in 0..n {
        for b in 0..n {
            let ta = SuperDiffPoly::theta((a + 1) as u32, 0, trunc);
            for (j, f) in k.entry(a, b).orders() {
                let tb = SuperDiffPoly::theta((b + 1) as u32, *j, trunc);
                let term = ta.mul(&SuperDiffPoly::from_even(f).mul(&tb));
                density = density.add(&term.scale(&half));
            }
        }
    }
    Ok(Bivector { density, n })
}

/// The variational Schouten bracket of two bivectors (a trivector density,
/// regarded modulo constants and Im dx).
pub fn schouten(p: &Bivector, q: &Bivector) -> SuperDiffPoly {
    assert_eq!(p.n, q.n);
    let mut out = SuperDiffPoly::zero(p.density.trunc());
    for alpha in 1..=p.n as u32 {
        let a = p
            .density
            .var_derivative_odd(alpha)
            .mul(&q.density.var_derivative_even(alpha));
        let b = p
            .density
            .var_derivative_even(alpha)
            .mul(&q.density.var_derivative_odd(alpha));
        out = out.add(&a).add(&b);
    }
    out
}

/// Machine-readable verdict for a single structural check.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(tag = "verdict", rename_all = "snake_case")]
pub enum Verdict {
    Ok,
    Fail {
        check: String,
        epsilon_order: Option<u32>,
        witness: String,
    },
}

impl Verdict {
    pub fn is_ok(&self) -> bool {
        matches!(self, Verdict::Ok)
    }

    fn fail(check: &str, epsilon_order: Option<u32>, witness: impl Into<String>) -> Verdict {
        Verdict::Fail {
            check: check.to_string(),
            epsilon_order,
            witness: witness.into(),
        }
    }
}

fn trivector_witness(t: &SuperDiffPoly, n: usize, check: &str) -> Verdict {
    for alpha in 1..=n as u32 {
        for (name, der) in [
            ("even", t.var_derivative_even(alpha)),
            ("odd", t.var_derivative_odd(alpha)),
        ] {
            if !der.is_zero() {
                return Verdict::fail(
                    check,
                    der.min_eps_order(),
                    format!(
                        "nonvanishing {} variational derivative in field {}",
                        name, alpha
                    ),
                );
            }
        }
    }
    Verdict::Ok
}

/// K is Poisson iff K is skewsymmetric and [P_K, P_K] = 0 at the truncation.
pub fn is_poisson(k: &MatrixDiffOperator) -> Verdict {
    let p = match bivector_of(k) {
        Ok(p) => p,
        Err(PoissonError::NotSkew(a, b, eps)) => {
            return Verdict::fail(
                "skewsymmetry",
                Some(eps),
                format!("matrix entry ({},{})", a, b),
            )
        }
    };
    let t = schouten(&p, &p);
    trivector_witness(&t, k.n(), "jacobi")
}

/// Two Poisson operators are compatible iff the mixed Schouten bracket
/// vanishes (equivalent to the pencil K2 - lambda K1 being Poisson for all
/// lambda, by bilinearity).
pub fn is_compatible(k1: &MatrixDiffOperator, k2: &MatrixDiffOperator) -> Verdict {
    let p1 = match bivector_of(k1) {
        Ok(p) => p,
        Err(PoissonError::NotSkew(a, b, eps)) => {
            return Verdict::fail(
                "skewsymmetry(first)",
                Some(eps),
                format!("matrix entry ({},{})", a, b),
            )
        }
    };
    let p2 = match bivector_of(k2) {
        Ok(p) => p,
        Err(PoissonError::NotSkew(a, b, eps)) => {
            return Verdict::fail(
                "skewsymmetry(second)",
                Some(eps),
                format!("matrix entry ({},{})", a, b),
            )
        }
    };
    let t = schouten(&p1, &p2);
    trivector_witness(&t, k1.n(), "compatibility")
}
