//! Variational calculus: local functionals, variational derivatives, the
//! grading operator D, the Euler-type operator E-hat, and inversion of (D-2).

use crate::ring::{rint, DiffPoly, Monomial, Rat, TruncationPolicy, VarIndex};
use num_traits::{One, Zero};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum VarcalcError {
    #[error("(D-2) has the monomial {0} in its kernel; hierarchy data is corrupt")]
    KernelObstruction(String),
    #[error("not a total x-derivative: remainder {0}")]
    NotExact(String),
}

/// Homogeneity data (q_alpha, delta, r^gamma) of a homogeneous CohFT, with
/// the derived diagonal mu_alpha = q_alpha - delta/2.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HomogeneityData {
    pub q: Vec<Rat>,
    pub delta: Rat,
    pub r: Vec<Rat>,
}

impl HomogeneityData {
    pub fn trivial(n: usize) -> Self {
        HomogeneityData {
            q: vec![Rat::zero(); n],
            delta: Rat::zero(),
            r: vec![Rat::zero(); n],
        }
    }

    pub fn mu(&self, alpha: usize) -> Rat {
        &self.q[alpha] - &self.delta / rint(2)
    }

    pub fn mu_vec(&self) -> Vec<Rat> {
        (0..self.q.len()).map(|a| self.mu(a)).collect()
    }
}

/// A density regarded modulo constants and total x-derivatives.
///
/// Equality is decided through variational derivatives, never by comparing
/// densities. The density is normalized on construction by dropping all
/// jet-variable-free terms.
#[derive(Debug, Clone)]
pub struct LocalFunctional {
    density: DiffPoly,
    pub label: Option<String>,
}

impl LocalFunctional {
    pub fn new(density: DiffPoly) -> Self {
        let mut normalized = DiffPoly::zero(density.trunc());
        for (m, c) in density.terms() {
            if !m.is_var_free() {
                normalized.add_term(m.clone(), c.clone());
            }
        }
        LocalFunctional { density: normalized, label: None }
    }

    pub fn with_label(density: DiffPoly, label: impl Into<String>) -> Self {
        let mut f = LocalFunctional::new(density);
        f.label = Some(label.into());
        f
    }

    pub fn zero(trunc: TruncationPolicy) -> Self {
        LocalFunctional::new(DiffPoly::zero(trunc))
    }

    pub fn density(&self) -> &DiffPoly {
        &self.density
    }

    pub fn trunc(&self) -> TruncationPolicy {
        self.density.trunc()
    }

    pub fn add(&self, other: &LocalFunctional) -> LocalFunctional {
        LocalFunctional::new(self.density.add(&other.density).expect("policy"))
    }

    pub fn sub(&self, other: &LocalFunctional) -> LocalFunctional {
        LocalFunctional::new(self.density.sub(&other.density).expect("policy"))
    }

    pub fn scale(&self, c: &Rat) -> LocalFunctional {
        LocalFunctional::new(self.density.scale(c))
    }

    /// delta/delta u^alpha = sum_d (-dx)^d d/du^alpha_d applied to the density.
    pub fn var_derivative(&self, alpha: u32) -> DiffPoly {
        var_derivative_density(&self.density, alpha)
    }

    /// Equality in the space of local functionals.
    pub fn equals(&self, other: &LocalFunctional, n_fields: u32) -> bool {
        let diff = self.density.sub(&other.density).expect("policy");
        if !diff.eval_at_origin().is_zero() {
            return false;
        }
        (1..=n_fields).all(|a| var_derivative_density(&diff, a).is_zero())
    }

    pub fn is_zero(&self, n_fields: u32) -> bool {
        (1..=n_fields).all(|a| self.var_derivative(a).is_zero())
    }

    /// Applies D = sum (n+1) u^a_n d/du^a_n to the density.
    pub fn d_operator(&self) -> LocalFunctional {
        let mut out = DiffPoly::zero(self.trunc());
        for (m, c) in self.density.terms() {
            out.add_term(m.clone(), c * rint(m.d_eigenvalue()));
        }
        LocalFunctional::new(out)
    }

    /// Solves (D - 2) g = self monomial-wise.
    pub fn solve_d_minus_2(&self) -> Result<LocalFunctional, VarcalcError> {
        let mut out = DiffPoly::zero(self.trunc());
        for (m, c) in self.density.terms() {
            let ev = m.d_eigenvalue();
            if ev == 2 {
                let witness =
                    DiffPoly::from_monomial(m.clone(), Rat::one(), self.trunc()).to_canonical_string();
                return Err(VarcalcError::KernelObstruction(witness));
            }
            out.add_term(m.clone(), c / rint(ev - 2));
        }
        Ok(LocalFunctional::new(out))
    }
}

/// Variational derivative of a bare density.
pub fn var_derivative_density(f: &DiffPoly, alpha: u32) -> DiffPoly {
    let mut out = DiffPoly::zero(f.trunc());
    let max_d = f.max_order().unwrap_or(0);
    for d in 0..=max_d {
        let mut term = f.partial(VarIndex::new(alpha, d));
        for _ in 0..d {
            term = term.dx().neg();
        }
        out = out.add(&term).expect("policy");
    }
    out
}

/// The Euler-type operator E-hat of the homogeneous theory:
/// sum_n ((1-q_a) u^a_n + delta_{n,0} r^a) d/du^a_n + (1-delta)/2 * eps d/deps.
pub fn e_hat(f: &DiffPoly, hom: &HomogeneityData) -> DiffPoly {
    let trunc = f.trunc();
    let mut out = DiffPoly::zero(trunc);
    let n = hom.q.len() as u32;
    let max_d = f.max_order().unwrap_or(0);
    for alpha in 1..=n {
        let one_minus_q = Rat::one() - &hom.q[(alpha - 1) as usize];
        for d in 0..=max_d {
            let df = f.partial(VarIndex::new(alpha, d));
            if df.is_zero() {
                continue;
            }
            let scaled = DiffPoly::var(alpha, d, trunc).scale(&one_minus_q);
            out = out.add(&scaled.mul(&df).expect("policy")).expect("policy");
            if d == 0 {
                out = out
                    .add(&df.scale(&hom.r[(alpha - 1) as usize]))
                    .expect("policy");
            }
        }
    }
    // eps * d/deps acts as multiplication by the eps power per term.
    let half = (Rat::one() - &hom.delta) / rint(2);
    let mut eps_part = DiffPoly::zero(trunc);
    for (m, c) in f.terms() {
        eps_part.add_term(m.clone(), c * rint(m.eps_power as i64));
    }
    out.add(&eps_part.scale(&half)).expect("policy")
}

/// Writes `f` as dx(g), if possible. The input must already have zero
/// variational derivatives and no var-free part; otherwise NotExact.
pub fn integrate_dx(f: &DiffPoly) -> Result<DiffPoly, VarcalcError> {
    let trunc = f.trunc();
    let mut rem = f.clone();
    let mut out = DiffPoly::zero(trunc);
    loop {
        if rem.is_zero() {
            return Ok(out);
        }
        let m = rem.max_order().unwrap_or(0);
        if m == 0 {
            // Im dx contains no derivative-free element besides 0.
            return Err(VarcalcError::NotExact(rem.to_canonical_string()));
        }
        let n_fields = rem.max_alpha().unwrap_or(1);
        // f = sum_a A_a u^a_m + B with B free of order-m variables; g's
        // order-(m-1) dependence satisfies dg/du^a_{m-1} = A_a.
        let mut g0 = DiffPoly::zero(trunc);
        for alpha in 1..=n_fields {
            let top = VarIndex::new(alpha, m);
            let a_coeff = rem.partial(top);
            if a_coeff.exponent_in(top) {
                return Err(VarcalcError::NotExact(rem.to_canonical_string()));
            }
            // Path integral in the variables u^*_{m-1}: on segment alpha the
            // coordinates u^beta_{m-1} with beta > alpha are still zero.
            let frozen = freeze_later(&a_coeff, m - 1, alpha);
            g0 = g0.add(&integrate_var(&frozen, VarIndex::new(alpha, m - 1))).expect("policy");
        }
        let new_rem = rem.sub(&g0.dx()).expect("policy");
        // For exact f the order-m variables cancel completely; anything left
        // means the cross-derivative compatibility failed.
        if weight_at_order(&new_rem, m) > 0 {
            return Err(VarcalcError::NotExact(rem.to_canonical_string()));
        }
        out = out.add(&g0).expect("policy");
        rem = new_rem;
    }
}

// helpers for integrate_dx

impl DiffPoly {
    fn exponent_in(&self, v: VarIndex) -> bool {
        self.terms().any(|(m, _)| m.exponent(v) > 0)
    }
}

fn freeze_later(f: &DiffPoly, order: u32, alpha: u32) -> DiffPoly {
    let mut out = DiffPoly::zero(f.trunc());
    'term: for (m, c) in f.terms() {
        for (v, _) in &m.powers {
            if v.d == order && v.alpha > alpha {
                continue 'term;
            }
        }
        out.add_term(m.clone(), c.clone());
    }
    out
}

fn integrate_var(f: &DiffPoly, v: VarIndex) -> DiffPoly {
    let mut out = DiffPoly::zero(f.trunc());
    for (m, c) in f.terms() {
        let e = m.exponent(v);
        let lifted = m.mul(&Monomial::var(v));
        out.add_term(lifted, c / rint(e as i64 + 1));
    }
    out
}

fn weight_at_order(f: &DiffPoly, m: u32) -> usize {
    f.terms()
        .map(|(mono, _)| {
            mono.powers
                .iter()
                .filter(|(v, _)| v.d == m)
                .map(|(_, e)| *e as usize)
                .sum::<usize>()
        })
        .sum()
}
