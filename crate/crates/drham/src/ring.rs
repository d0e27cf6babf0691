//! Sparse differential polynomial ring with exact rational coefficients.
//!
//! Elements are finite sums of monomials in the jet variables `u[alpha,d]`
//! (`alpha` a field index, `d` a number of x-derivatives) and the genus
//! parameter `eps`, truncated by a [`TruncationPolicy`].

use std::cmp::Ordering;
use std::collections::BTreeMap;
use std::fmt;

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Signed, Zero};

pub type Rat = BigRational;

pub fn rat(p: i64, q: i64) -> Rat {
    Rat::new(BigInt::from(p), BigInt::from(q))
}

pub fn rint(p: i64) -> Rat {
    Rat::from(BigInt::from(p))
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum RingError {
    #[error("truncation policies differ: {0:?} vs {1:?}")]
    TruncationMismatch(TruncationPolicy, TruncationPolicy),
}

/// A jet variable `u^alpha_d`: field index `alpha` (1-based) differentiated `d` times.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, serde::Serialize, serde::Deserialize)]
pub struct VarIndex {
    pub alpha: u32,
    pub d: u32,
}

impl VarIndex {
    pub fn new(alpha: u32, d: u32) -> Self {
        assert!(alpha >= 1, "field index is 1-based");
        VarIndex { alpha, d }
    }
}

/// Truncation policy shared by all values combined in one expression.
///
/// `genus_cap` G drops terms with eps-power above 2G; `u0_cap` M caps the
/// total degree in the underived variables `u^*_0`, modeling the power
/// series ring C[[u^*_0]] at finite order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct TruncationPolicy {
    pub genus_cap: u32,
    pub u0_cap: u32,
}

impl TruncationPolicy {
    pub fn new(genus_cap: u32, u0_cap: u32) -> Self {
        assert!(u0_cap >= 1);
        TruncationPolicy { genus_cap, u0_cap }
    }

    pub fn eps_cap(&self) -> u32 {
        2 * self.genus_cap
    }

    fn keeps(&self, m: &Monomial) -> bool {
        m.eps_power <= self.eps_cap() && m.u0_degree() <= self.u0_cap
    }
}

/// A monomial: a finite power product of jet variables times a power of eps.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Monomial {
    /// Variable -> exponent; zero exponents are never stored.
    pub powers: BTreeMap<VarIndex, u32>,
    pub eps_power: u32,
}

impl Monomial {
    pub fn one() -> Self {
        Monomial::default()
    }

    pub fn var(v: VarIndex) -> Self {
        let mut powers = BTreeMap::new();
        powers.insert(v, 1);
        Monomial { powers, eps_power: 0 }
    }

    pub fn eps(k: u32) -> Self {
        Monomial { powers: BTreeMap::new(), eps_power: k }
    }

    pub fn total_var_degree(&self) -> u32 {
        self.powers.values().sum()
    }

    /// Total degree in the underived variables `u^*_0`.
    pub fn u0_degree(&self) -> u32 {
        self.powers
            .iter()
            .filter(|(v, _)| v.d == 0)
            .map(|(_, e)| *e)
            .sum()
    }

    /// Differential degree: sum of d * exponent over all variables.
    pub fn diff_degree(&self) -> i64 {
        self.powers
            .iter()
            .map(|(v, e)| v.d as i64 * *e as i64)
            .sum()
    }

    /// Combined degree with deg eps = -1.
    pub fn combined_degree(&self) -> i64 {
        self.diff_degree() - self.eps_power as i64
    }

    /// Eigenvalue of the operator D = sum (n+1) u^a_n d/du^a_n.
    pub fn d_eigenvalue(&self) -> i64 {
        self.powers
            .iter()
            .map(|(v, e)| (v.d as i64 + 1) * *e as i64)
            .sum()
    }

    pub fn is_constant(&self) -> bool {
        self.powers.is_empty() && self.eps_power == 0
    }

    /// True when no jet variable occurs (a pure eps power or a constant).
    pub fn is_var_free(&self) -> bool {
        self.powers.is_empty()
    }

    pub fn mul(&self, other: &Monomial) -> Monomial {
        let mut powers = self.powers.clone();
        for (v, e) in &other.powers {
            *powers.entry(*v).or_insert(0) += e;
        }
        Monomial {
            powers,
            eps_power: self.eps_power + other.eps_power,
        }
    }

    pub fn exponent(&self, v: VarIndex) -> u32 {
        self.powers.get(&v).copied().unwrap_or(0)
    }

    /// Divides out one power of `v`; None if absent.
    pub fn div_var(&self, v: VarIndex) -> Option<Monomial> {
        let e = *self.powers.get(&v)?;
        let mut powers = self.powers.clone();
        if e == 1 {
            powers.remove(&v);
        } else {
            powers.insert(v, e - 1);
        }
        Some(Monomial { powers, eps_power: self.eps_power })
    }
}

impl PartialOrd for Monomial {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Monomial {
    /// Graded order: total degree first, then eps power, then the variable
    /// lists lexicographically by (alpha, d) ascending.
    fn cmp(&self, other: &Self) -> Ordering {
        let ga = self.total_var_degree() + self.eps_power;
        let gb = other.total_var_degree() + other.eps_power;
        ga.cmp(&gb)
            .then_with(|| self.eps_power.cmp(&other.eps_power))
            .then_with(|| {
                let a: Vec<_> = self.powers.iter().collect();
                let b: Vec<_> = other.powers.iter().collect();
                a.cmp(&b)
            })
    }
}

/// A differential polynomial in canonical form.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DiffPoly {
    terms: BTreeMap<Monomial, Rat>,
    trunc: TruncationPolicy,
}

impl DiffPoly {
    pub fn zero(trunc: TruncationPolicy) -> Self {
        DiffPoly { terms: BTreeMap::new(), trunc }
    }

    pub fn constant(c: Rat, trunc: TruncationPolicy) -> Self {
        let mut p = DiffPoly::zero(trunc);
        if !c.is_zero() {
            p.terms.insert(Monomial::one(), c);
        }
        p
    }

    pub fn var(alpha: u32, d: u32, trunc: TruncationPolicy) -> Self {
        DiffPoly::from_monomial(Monomial::var(VarIndex::new(alpha, d)), Rat::one(), trunc)
    }

    pub fn eps_pow(k: u32, trunc: TruncationPolicy) -> Self {
        DiffPoly::from_monomial(Monomial::eps(k), Rat::one(), trunc)
    }

    pub fn from_monomial(m: Monomial, c: Rat, trunc: TruncationPolicy) -> Self {
        let mut p = DiffPoly::zero(trunc);
        p.add_term(m, c);
        p
    }

    pub fn trunc(&self) -> TruncationPolicy {
        self.trunc
    }

    pub fn terms(&self) -> impl Iterator<Item = (&Monomial, &Rat)> {
        self.terms.iter()
    }

    pub fn num_terms(&self) -> usize {
        self.terms.len()
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn coeff(&self, m: &Monomial) -> Rat {
        self.terms.get(m).cloned().unwrap_or_else(Rat::zero)
    }

    /// Adds `c * m`, keeping canonical form and honoring the truncation policy.
    pub fn add_term(&mut self, m: Monomial, c: Rat) {
        if c.is_zero() || !self.trunc.keeps(&m) {
            return;
        }
        let entry = self.terms.entry(m.clone()).or_insert_with(Rat::zero);
        *entry += c;
        if entry.is_zero() {
            self.terms.remove(&m);
        }
    }

    fn check_policy(&self, other: &DiffPoly) -> Result<(), RingError> {
        if self.trunc != other.trunc {
            Err(RingError::TruncationMismatch(self.trunc, other.trunc))
        } else {
            Ok(())
        }
    }

    pub fn add(&self, other: &DiffPoly) -> Result<DiffPoly, RingError> {
        self.check_policy(other)?;
        let mut out = self.clone();
        for (m, c) in &other.terms {
            out.add_term(m.clone(), c.clone());
        }
        Ok(out)
    }

    pub fn sub(&self, other: &DiffPoly) -> Result<DiffPoly, RingError> {
        self.add(&other.neg())
    }

    pub fn neg(&self) -> DiffPoly {
        let mut out = self.clone();
        for c in out.terms.values_mut() {
            *c = -c.clone();
        }
        out
    }

    pub fn scale(&self, c: &Rat) -> DiffPoly {
        if c.is_zero() {
            return DiffPoly::zero(self.trunc);
        }
        let mut out = self.clone();
        for v in out.terms.values_mut() {
            *v *= c;
        }
        out
    }

    pub fn mul(&self, other: &DiffPoly) -> Result<DiffPoly, RingError> {
        self.check_policy(other)?;
        let mut out = DiffPoly::zero(self.trunc);
        for (ma, ca) in &self.terms {
            for (mb, cb) in &other.terms {
                out.add_term(ma.mul(mb), ca * cb);
            }
        }
        Ok(out)
    }

    pub fn pow(&self, n: u32) -> DiffPoly {
        let mut out = DiffPoly::constant(Rat::one(), self.trunc);
        for _ in 0..n {
            out = out.mul(self).expect("same policy");
        }
        out
    }

    /// Formal partial derivative with respect to a jet variable.
    pub fn partial(&self, v: VarIndex) -> DiffPoly {
        let mut out = DiffPoly::zero(self.trunc);
        for (m, c) in &self.terms {
            let e = m.exponent(v);
            if e > 0 {
                let reduced = m.div_var(v).unwrap();
                out.add_term(reduced, c * rint(e as i64));
            }
        }
        out
    }

    /// Partial derivative in eps (not eps * d/deps).
    pub fn partial_eps(&self) -> DiffPoly {
        let mut out = DiffPoly::zero(self.trunc);
        for (m, c) in &self.terms {
            if m.eps_power > 0 {
                let mut m2 = m.clone();
                m2.eps_power -= 1;
                out.add_term(m2, c * rint(m.eps_power as i64));
            }
        }
        out
    }

    /// Total x-derivative: sum over d of u^a_{d+1} d/du^a_d.
    pub fn dx(&self) -> DiffPoly {
        let mut out = DiffPoly::zero(self.trunc);
        for (m, c) in &self.terms {
            for (v, e) in &m.powers {
                let reduced = m.div_var(*v).unwrap();
                let lifted = reduced.mul(&Monomial::var(VarIndex::new(v.alpha, v.d + 1)));
                out.add_term(lifted, c * rint(*e as i64));
            }
        }
        out
    }

    pub fn dx_n(&self, n: u32) -> DiffPoly {
        let mut out = self.clone();
        for _ in 0..n {
            out = out.dx();
        }
        out
    }

    /// Largest derivative order occurring, or None for a var-free element.
    pub fn max_order(&self) -> Option<u32> {
        self.terms
            .keys()
            .flat_map(|m| m.powers.keys().map(|v| v.d))
            .max()
    }

    /// Largest field index occurring.
    pub fn max_alpha(&self) -> Option<u32> {
        self.terms
            .keys()
            .flat_map(|m| m.powers.keys().map(|v| v.alpha))
            .max()
    }

    /// Sets every jet variable to zero, leaving the eps-series constant term.
    pub fn eval_at_origin(&self) -> DiffPoly {
        let mut out = DiffPoly::zero(self.trunc);
        for (m, c) in &self.terms {
            if m.is_var_free() {
                out.add_term(m.clone(), c.clone());
            }
        }
        out
    }

    /// Keeps only the eps^k coefficient (as a polynomial without the eps factor).
    pub fn eps_coefficient(&self, k: u32) -> DiffPoly {
        let mut out = DiffPoly::zero(self.trunc);
        for (m, c) in &self.terms {
            if m.eps_power == k {
                let mut m2 = m.clone();
                m2.eps_power = 0;
                out.add_term(m2, c.clone());
            }
        }
        out
    }

    /// Sets eps = 0.
    pub fn dispersionless(&self) -> DiffPoly {
        let mut out = DiffPoly::zero(self.trunc);
        for (m, c) in &self.terms {
            if m.eps_power == 0 {
                out.add_term(m.clone(), c.clone());
            }
        }
        out
    }

    /// Multiplies by eps^k.
    pub fn mul_eps(&self, k: u32) -> DiffPoly {
        let mut out = DiffPoly::zero(self.trunc);
        for (m, c) in &self.terms {
            let mut m2 = m.clone();
            m2.eps_power += k;
            out.add_term(m2, c.clone());
        }
        out
    }

    /// Substitutes each jet variable u^a_d by dx^d(images[a-1]); eps maps to itself.
    ///
    /// `images` gives the replacement for the underived variables u^a_0.
    pub fn substitute(&self, images: &[DiffPoly]) -> DiffPoly {
        let trunc = if let Some(first) = images.first() {
            first.trunc
        } else {
            self.trunc
        };
        // jet cache: (alpha, d) -> dx^d image
        let mut jets: BTreeMap<VarIndex, DiffPoly> = BTreeMap::new();
        let mut out = DiffPoly::zero(trunc);
        for (m, c) in &self.terms {
            let mut term = DiffPoly::from_monomial(Monomial::eps(m.eps_power), c.clone(), trunc);
            for (v, e) in &m.powers {
                let jet = jets
                    .entry(*v)
                    .or_insert_with(|| {
                        images[(v.alpha - 1) as usize].dx_n(v.d)
                    })
                    .clone();
                term = term.mul(&jet.pow(*e)).expect("same policy");
            }
            out = out.add(&term).expect("same policy");
        }
        out
    }

    /// Grading report over combined degree (deg u^a_i = i, deg eps = -1).
    pub fn grading(&self) -> GradingReport {
        let mut diff_degrees = Vec::new();
        let mut eps_degrees = Vec::new();
        let mut combined = Vec::new();
        for m in self.terms.keys() {
            push_unique(&mut diff_degrees, m.diff_degree());
            push_unique(&mut eps_degrees, m.eps_power as i64);
            push_unique(&mut combined, m.combined_degree());
        }
        GradingReport {
            homogeneous: combined.len() <= 1,
            combined_degrees: combined,
            diff_degrees,
            eps_degrees,
        }
    }

    /// True when every term has the given combined degree.
    pub fn is_homogeneous_of_degree(&self, deg: i64) -> bool {
        self.terms.keys().all(|m| m.combined_degree() == deg)
    }

    /// Canonical text form: terms in the deterministic order, exact fractions.
    pub fn to_canonical_string(&self) -> String {
        if self.is_zero() {
            return "0".to_string();
        }
        let mut parts = Vec::new();
        for (m, c) in &self.terms {
            let mut factors = vec![format!("{}", c)];
            if m.eps_power > 0 {
                factors.push(format!("eps^{}", m.eps_power));
            }
            for (v, e) in &m.powers {
                if *e == 1 {
                    factors.push(format!("u[{},{}]", v.alpha, v.d));
                } else {
                    factors.push(format!("u[{},{}]^{}", v.alpha, v.d, e));
                }
            }
            parts.push(factors.join("*"));
        }
        parts.join(" + ")
    }

    /// Parses the canonical text form produced by `to_canonical_string`.
    pub fn parse_canonical(s: &str, trunc: TruncationPolicy) -> Result<DiffPoly, String> {
        let s = s.trim();
        let mut out = DiffPoly::zero(trunc);
        if s == "0" {
            return Ok(out);
        }
        for part in s.split(" + ") {
            let mut coeff = Rat::one();
            let mut mono = Monomial::one();
            for factor in part.split('*') {
                let f = factor.trim();
                if let Some(rest) = f.strip_prefix("eps^") {
                    mono.eps_power += rest.parse::<u32>().map_err(|e| e.to_string())?;
                } else if f == "eps" {
                    mono.eps_power += 1;
                } else if let Some(rest) = f.strip_prefix("u[") {
                    let (inside, tail) = rest.split_once(']').ok_or("missing ]")?;
                    let (a, d) = inside.split_once(',').ok_or("missing , in var")?;
                    let alpha: u32 = a.trim().parse().map_err(|_| "bad alpha")?;
                    let d: u32 = d.trim().parse().map_err(|_| "bad order")?;
                    let e: u32 = if let Some(p) = tail.strip_prefix('^') {
                        p.parse().map_err(|_| "bad exponent")?
                    } else {
                        1
                    };
                    *mono.powers.entry(VarIndex::new(alpha, d)).or_insert(0) += e;
                } else {
                    coeff *= parse_rat(f)?;
                }
            }
            out.add_term(mono, coeff);
        }
        Ok(out)
    }
}

pub fn parse_rat(s: &str) -> Result<Rat, String> {
    let s = s.trim();
    if let Some((p, q)) = s.split_once('/') {
        let p: BigInt = p.trim().parse().map_err(|_| format!("bad integer {p}"))?;
        let q: BigInt = q.trim().parse().map_err(|_| format!("bad integer {q}"))?;
        if q.is_zero() {
            return Err("zero denominator".into());
        }
        Ok(Rat::new(p, q))
    } else {
        let p: BigInt = s.parse().map_err(|_| format!("bad integer {s}"))?;
        Ok(Rat::from(p))
    }
}

pub fn rat_to_string(r: &Rat) -> String {
    if r.denom().is_one() {
        format!("{}", r.numer())
    } else {
        format!("{}/{}", r.numer(), r.denom())
    }
}

fn push_unique(v: &mut Vec<i64>, x: i64) {
    if !v.contains(&x) {
        v.push(x);
        v.sort_unstable();
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GradingReport {
    pub diff_degrees: Vec<i64>,
    pub eps_degrees: Vec<i64>,
    pub combined_degrees: Vec<i64>,
    pub homogeneous: bool,
}

impl fmt::Display for DiffPoly {
    /// Human form: `u` / `u_2` for N=1, `u1`/`u2_3` otherwise.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.is_zero() {
            return write!(f, "0");
        }
        let single_field = self.max_alpha().unwrap_or(1) <= 1;
        let mut first = true;
        for (m, c) in &self.terms {
            let neg = c.is_negative();
            let mag = c.abs();
            if first {
                if neg {
                    write!(f, "-")?;
                }
                first = false;
            } else if neg {
                write!(f, " - ")?;
            } else {
                write!(f, " + ")?;
            }
            let mut factors: Vec<String> = Vec::new();
            if !mag.is_one() || m.is_var_free() {
                factors.push(rat_to_string(&mag));
            }
            if m.eps_power == 1 {
                factors.push("eps".into());
            } else if m.eps_power > 1 {
                factors.push(format!("eps^{}", m.eps_power));
            }
            for (v, e) in &m.powers {
                let name = if single_field {
                    if v.d == 0 { "u".to_string() } else { format!("u_{}", v.d) }
                } else if v.d == 0 {
                    format!("u{}", v.alpha)
                } else {
                    format!("u{}_{}", v.alpha, v.d)
                };
                if *e == 1 {
                    factors.push(name);
                } else {
                    factors.push(format!("{name}^{e}"));
                }
            }
            write!(f, "{}", factors.join("*"))?;
        }
        Ok(())
    }
}
