//! The Laurent extension of the differential polynomial ring in the single
//! variable v^1_x, polynomial/singular decomposition, rational and purely
//! singular Miura transformations, and the polynomial-part pushforward of
//! first-order operators along purely singular transformations.

use std::collections::BTreeMap;

use num_traits::{One, Zero};
use thiserror::Error;

use crate::diffop::{l_op, DiffOperator, MatrixDiffOperator};
use crate::ring::{DiffPoly, Monomial, Rat, TruncationPolicy, VarIndex};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum RationalError {
    #[error("hypothesis violated: {0}")]
    HypothesisViolation(String),
    #[error("not a valid rational Miura transformation: {0}")]
    InvalidTransform(String),
}

fn vx() -> VarIndex {
    VarIndex::new(1, 1)
}

/// Generalized binomial coefficient C(i, j) for integer i (possibly
/// negative), used in the geometric re-expansion of negative powers.
fn gbinom(i: i64, j: u32) -> Rat {
    let mut r = Rat::one();
    for s in 0..j as i64 {
        r *= Rat::from_integer((i - s).into());
        r /= Rat::from_integer((s + 1).into());
    }
    r
}

/// An element sum_{i <= m} P_i (v^1_x)^i with no P_i depending on v^1_x.
/// Construction normalizes: explicit v^1_x powers inside a DiffPoly are
/// absorbed into the Laurent index.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LaurentDiffPoly {
    components: BTreeMap<i64, DiffPoly>,
    trunc: TruncationPolicy,
}

impl LaurentDiffPoly {
    pub fn zero(trunc: TruncationPolicy) -> Self {
        LaurentDiffPoly {
            components: BTreeMap::new(),
            trunc,
        }
    }

    pub fn from_poly(p: &DiffPoly) -> Self {
        let mut out = LaurentDiffPoly::zero(p.trunc());
        for (m, c) in p.terms() {
            let e = m.exponent(vx());
            let mut powers = m.powers.clone();
            powers.remove(&vx());
            let stripped = Monomial {
                powers,
                eps_power: m.eps_power,
            };
            out.add_term(e as i64, stripped, c.clone());
        }
        out
    }

    /// p * (v^1_x)^i, normalized.
    pub fn from_component(i: i64, p: &DiffPoly) -> Self {
        LaurentDiffPoly::from_poly(p).shift(i)
    }

    pub fn vx_pow(i: i64, trunc: TruncationPolicy) -> Self {
        LaurentDiffPoly::from_component(i, &DiffPoly::constant(Rat::one(), trunc))
    }

    pub fn var(alpha: u32, d: u32, trunc: TruncationPolicy) -> Self {
        LaurentDiffPoly::from_poly(&DiffPoly::var(alpha, d, trunc))
    }

    fn add_term(&mut self, i: i64, m: Monomial, c: Rat) {
        debug_assert_eq!(m.exponent(vx()), 0);
        let entry = self
            .components
            .entry(i)
            .or_insert_with(|| DiffPoly::zero(self.trunc));
        entry.add_term(m, c);
        if self.components.get(&i).map(|p| p.is_zero()).unwrap_or(false) {
            self.components.remove(&i);
        }
    }

    pub fn trunc(&self) -> TruncationPolicy {
        self.trunc
    }

    pub fn components(&self) -> impl Iterator<Item = (&i64, &DiffPoly)> {
        self.components.iter()
    }

    pub fn component(&self, i: i64) -> DiffPoly {
        self.components
            .get(&i)
            .cloned()
            .unwrap_or_else(|| DiffPoly::zero(self.trunc))
    }

    pub fn is_zero(&self) -> bool {
        self.components.is_empty()
    }

    pub fn shift(&self, delta: i64) -> LaurentDiffPoly {
        LaurentDiffPoly {
            components: self
                .components
                .iter()
                .map(|(i, p)| (i + delta, p.clone()))
                .collect(),
            trunc: self.trunc,
        }
    }

    pub fn add(&self, other: &LaurentDiffPoly) -> LaurentDiffPoly {
        assert_eq!(self.trunc, other.trunc, "truncation policies match");
        let mut out = self.clone();
        for (i, p) in &other.components {
            for (m, c) in p.terms() {
                out.add_term(*i, m.clone(), c.clone());
            }
        }
        out
    }

    pub fn sub(&self, other: &LaurentDiffPoly) -> LaurentDiffPoly {
        self.add(&other.neg())
    }

    pub fn neg(&self) -> LaurentDiffPoly {
        self.scale(&-Rat::one())
    }

    pub fn scale(&self, c: &Rat) -> LaurentDiffPoly {
        if c.is_zero() {
            return LaurentDiffPoly::zero(self.trunc);
        }
        LaurentDiffPoly {
            components: self
                .components
                .iter()
                .map(|(i, p)| (*i, p.scale(c)))
                .collect(),
            trunc: self.trunc,
        }
    }

    pub fn mul(&self, other: &LaurentDiffPoly) -> LaurentDiffPoly {
        let mut out = LaurentDiffPoly::zero(self.trunc);
        for (i, p) in &self.components {
            for (j, q) in &other.components {
                let prod = p.mul(q).expect("truncation policies match");
                for (m, c) in prod.terms() {
                    out.add_term(i + j, m.clone(), c.clone());
                }
            }
        }
        out
    }

    pub fn pow(&self, n: u32) -> LaurentDiffPoly {
        let mut out = LaurentDiffPoly::vx_pow(0, self.trunc);
        for _ in 0..n {
            out = out.mul(self);
        }
        out
    }

    pub fn mul_eps(&self, k: u32) -> LaurentDiffPoly {
        LaurentDiffPoly {
            components: self
                .components
                .iter()
                .map(|(i, p)| (*i, p.mul_eps(k)))
                .filter(|(_, p)| !p.is_zero())
                .collect(),
            trunc: self.trunc,
        }
    }

    pub fn eps_coefficient(&self, k: u32) -> LaurentDiffPoly {
        LaurentDiffPoly {
            components: self
                .components
                .iter()
                .map(|(i, p)| (*i, p.eps_coefficient(k)))
                .filter(|(_, p)| !p.is_zero())
                .collect(),
            trunc: self.trunc,
        }
    }

    /// The polynomial part sum_{i >= 0} P_i (v^1_x)^i as a DiffPoly.
    pub fn pol_part(&self) -> DiffPoly {
        let mut out = DiffPoly::zero(self.trunc);
        for (i, p) in &self.components {
            if *i >= 0 {
                let vxp = DiffPoly::var(1, 1, self.trunc).pow(*i as u32);
                out = out
                    .add(&p.mul(&vxp).expect("truncation policies match"))
                    .expect("truncation policies match");
            }
        }
        out
    }

    pub fn sing_part(&self) -> LaurentDiffPoly {
        LaurentDiffPoly {
            components: self
                .components
                .iter()
                .filter(|(i, _)| **i < 0)
                .map(|(i, p)| (*i, p.clone()))
                .collect(),
            trunc: self.trunc,
        }
    }

    pub fn partial(&self, v: VarIndex) -> LaurentDiffPoly {
        let mut out = LaurentDiffPoly::zero(self.trunc);
        if v == vx() {
            for (i, p) in &self.components {
                for (m, c) in p.terms() {
                    out.add_term(i - 1, m.clone(), c * Rat::from_integer((*i).into()));
                }
            }
        } else {
            for (i, p) in &self.components {
                for (m, c) in p.partial(v).terms() {
                    out.add_term(*i, m.clone(), c.clone());
                }
            }
        }
        out
    }

    /// Total x-derivative with d(v^1_x)^i = i (v^1_x)^{i-1} v^1_2; the
    /// result is re-normalized (dx of a component can produce v^1_x).
    pub fn dx(&self) -> LaurentDiffPoly {
        let mut out = LaurentDiffPoly::zero(self.trunc);
        for (i, p) in &self.components {
            out = out.add(&LaurentDiffPoly::from_poly(&p.dx()).shift(*i));
            if *i != 0 {
                let v12 = DiffPoly::var(1, 2, self.trunc);
                let extra = p.mul(&v12).expect("truncation policies match");
                out = out.add(
                    &LaurentDiffPoly::from_poly(&extra)
                        .shift(i - 1)
                        .scale(&Rat::from_integer((*i).into())),
                );
            }
        }
        out
    }

    pub fn dx_n(&self, n: u32) -> LaurentDiffPoly {
        let mut out = self.clone();
        for _ in 0..n {
            out = out.dx();
        }
        out
    }

    /// Maximum jet order appearing (counting the Laurent variable as order 1).
    pub fn max_order(&self) -> u32 {
        let from_vars = self
            .components
            .values()
            .filter_map(|p| p.max_order())
            .max()
            .unwrap_or(0);
        let from_vx = if self.components.keys().any(|i| *i != 0) {
            1
        } else {
            0
        };
        from_vars.max(from_vx)
    }

    pub fn max_alpha(&self) -> u32 {
        self.components
            .values()
            .filter_map(|p| p.max_alpha())
            .max()
            .unwrap_or(0)
    }

    pub fn to_canonical_string(&self) -> String {
        if self.is_zero() {
            return "0".to_string();
        }
        self.components
            .iter()
            .map(|(i, p)| {
                if *i == 0 {
                    p.to_canonical_string()
                } else {
                    format!("({})*vx1^({})", p.to_canonical_string(), i)
                }
            })
            .collect::<Vec<_>>()
            .join(" + ")
    }
}

/// The exact split f = pol + sing.
pub fn pol_sing_split(f: &LaurentDiffPoly) -> (DiffPoly, LaurentDiffPoly) {
    (f.pol_part(), f.sing_part())
}

/// Substitute every jet variable of `f` (written in the transformed
/// variables) by the corresponding x-derivative of the given images,
/// re-expanding negative powers of the image of v^1_x as a geometric
/// series (finite by the eps cap, since images are identity + O(eps)).
pub fn laurent_substitute(f: &LaurentDiffPoly, images: &[LaurentDiffPoly]) -> LaurentDiffPoly {
    let trunc = f.trunc();
    let n = images.len();
    let max_c = f.max_order().max(1);
    let mut jets: Vec<Vec<LaurentDiffPoly>> = Vec::with_capacity(n);
    for img in images {
        let mut row = vec![img.clone()];
        for _ in 0..max_c {
            let next = row.last().unwrap().dx();
            row.push(next);
        }
        jets.push(row);
    }
    let j11 = jets[0][1].clone();
    let s = j11.sub(&LaurentDiffPoly::vx_pow(1, trunc));
    debug_assert!(s.eps_coefficient(0).is_zero(), "images are identity + O(eps)");
    let t = s.shift(-1);
    let neg_pow = |i: i64| -> LaurentDiffPoly {
        // (v^1_x + s)^i = (v^1_x)^i (1 + t)^i, t = s / v^1_x = O(eps)
        let mut acc = LaurentDiffPoly::zero(trunc);
        let mut tp = LaurentDiffPoly::vx_pow(0, trunc);
        for j in 0..=trunc.eps_cap() {
            acc = acc.add(&tp.scale(&gbinom(i, j)));
            tp = tp.mul(&t);
        }
        acc.shift(i)
    };
    let mut out = LaurentDiffPoly::zero(trunc);
    for (i, p) in f.components() {
        let vx_factor = if *i >= 0 {
            j11.pow(*i as u32)
        } else {
            neg_pow(*i)
        };
        for (m, c) in p.terms() {
            let mut prod = LaurentDiffPoly::from_poly(&DiffPoly::from_monomial(
                Monomial::eps(m.eps_power),
                c.clone(),
                trunc,
            ));
            for (v, e) in &m.powers {
                prod = prod.mul(&jets[(v.alpha - 1) as usize][v.d as usize].pow(*e));
            }
            out = out.add(&prod.mul(&vx_factor));
        }
    }
    out
}

/// A rational Miura transformation u^alpha(v^*_*, eps) = v^alpha +
/// sum_{k >= 1} eps^k f^alpha_k with f^alpha_k in the Laurent ring of
/// combined degree k.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RationalMiura {
    images: Vec<LaurentDiffPoly>,
    trunc: TruncationPolicy,
}

impl RationalMiura {
    pub fn new(images: Vec<LaurentDiffPoly>) -> Result<Self, RationalError> {
        assert!(!images.is_empty());
        let trunc = images[0].trunc();
        for (a, img) in images.iter().enumerate() {
            let corr = img.sub(&LaurentDiffPoly::var((a + 1) as u32, 0, trunc));
            if !corr.eps_coefficient(0).is_zero() {
                return Err(RationalError::InvalidTransform(format!(
                    "image {} is not the identity at eps^0",
                    a + 1
                )));
            }
            for (i, p) in corr.components() {
                for (m, _) in p.terms() {
                    if m.diff_degree() + i != m.eps_power as i64 {
                        return Err(RationalError::InvalidTransform(format!(
                            "image {} has an eps^{} term of combined degree {}",
                            a + 1,
                            m.eps_power,
                            m.diff_degree() + i
                        )));
                    }
                }
            }
        }
        Ok(RationalMiura { images, trunc })
    }

    pub fn identity(n: usize, trunc: TruncationPolicy) -> Self {
        RationalMiura {
            images: (1..=n as u32)
                .map(|a| LaurentDiffPoly::var(a, 0, trunc))
                .collect(),
            trunc,
        }
    }

    pub fn images(&self) -> &[LaurentDiffPoly] {
        &self.images
    }

    pub fn n(&self) -> usize {
        self.images.len()
    }

    pub fn trunc(&self) -> TruncationPolicy {
        self.trunc
    }

    /// Rewrite f (in the transformed variables) through the images.
    pub fn apply(&self, f: &LaurentDiffPoly) -> LaurentDiffPoly {
        laurent_substitute(f, &self.images)
    }

    /// self after first.
    pub fn compose(&self, first: &RationalMiura) -> Result<RationalMiura, RationalError> {
        RationalMiura::new(
            self.images
                .iter()
                .map(|img| laurent_substitute(img, &first.images))
                .collect(),
        )
    }

    /// Inverse to the working eps order, by the recursion of the group law:
    /// v = u - E(v) iterated, gaining one eps order per pass.
    pub fn invert(&self) -> Result<RationalMiura, RationalError> {
        let n = self.n();
        let trunc = self.trunc;
        let e_parts: Vec<LaurentDiffPoly> = (0..n)
            .map(|a| {
                self.images[a].sub(&LaurentDiffPoly::var((a + 1) as u32, 0, trunc))
            })
            .collect();
        let mut inv: Vec<LaurentDiffPoly> = (1..=n as u32)
            .map(|a| LaurentDiffPoly::var(a, 0, trunc))
            .collect();
        for _ in 0..=trunc.eps_cap() {
            let next: Vec<LaurentDiffPoly> = (0..n)
                .map(|a| {
                    LaurentDiffPoly::var((a + 1) as u32, 0, trunc)
                        .sub(&laurent_substitute(&e_parts[a], &inv))
                })
                .collect();
            if next == inv {
                break;
            }
            inv = next;
        }
        RationalMiura::new(inv)
    }
}

/// A rational Miura transformation with pol(u^alpha) = v^alpha and
/// du^alpha/dv^1 = delta^{alpha,1}.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PurelySingularMiura {
    base: RationalMiura,
}

impl PurelySingularMiura {
    pub fn new(base: RationalMiura) -> Result<Self, RationalError> {
        for (a, img) in base.images().iter().enumerate() {
            let pol = img.pol_part();
            if pol != DiffPoly::var((a + 1) as u32, 0, base.trunc()) {
                return Err(RationalError::InvalidTransform(format!(
                    "image {} has polynomial part different from the variable",
                    a + 1
                )));
            }
            // images are v^alpha + corrections, so du^alpha/dv^1 =
            // delta^{alpha,1} reduces to: corrections free of v^1
            let corr = img.sub(&LaurentDiffPoly::var((a + 1) as u32, 0, base.trunc()));
            if !corr.partial(VarIndex::new(1, 0)).is_zero() {
                return Err(RationalError::InvalidTransform(format!(
                    "image {} depends on v^1",
                    a + 1
                )));
            }
        }
        Ok(PurelySingularMiura { base })
    }

    pub fn from_images(images: Vec<LaurentDiffPoly>) -> Result<Self, RationalError> {
        PurelySingularMiura::new(RationalMiura::new(images)?)
    }

    pub fn base(&self) -> &RationalMiura {
        &self.base
    }

    pub fn images(&self) -> &[LaurentDiffPoly] {
        self.base.images()
    }

    pub fn n(&self) -> usize {
        self.base.n()
    }

    pub fn trunc(&self) -> TruncationPolicy {
        self.base.trunc()
    }

    pub fn compose(&self, first: &PurelySingularMiura) -> Result<PurelySingularMiura, RationalError> {
        PurelySingularMiura::new(self.base.compose(&first.base)?)
    }

    pub fn invert(&self) -> Result<PurelySingularMiura, RationalError> {
        PurelySingularMiura::new(self.base.invert()?)
    }

    /// P^alpha = pol( v^1_x (u^alpha(v^*_*, eps) - v^alpha) ).
    pub fn p_vector(&self) -> Vec<DiffPoly> {
        (0..self.n())
            .map(|a| {
                self.images()[a]
                    .sub(&LaurentDiffPoly::var((a + 1) as u32, 0, self.trunc()))
                    .shift(1)
                    .pol_part()
            })
            .collect()
    }
}

/// pol part of f after substituting u^gamma_c by dx^c u^gamma(v^*_*, eps).
pub fn pol_of_substitution(f: &LaurentDiffPoly, m: &PurelySingularMiura) -> DiffPoly {
    m.base().apply(f).pol_part()
}

struct FirstOrderData {
    g: Vec<Vec<DiffPoly>>,
    b1: Vec<Vec<Rat>>,
}

/// Check the Lemma singular-2 hypotheses on K and extract g^{ab} and the
/// constants b^{ab}_1.
fn decompose_first_order(k: &MatrixDiffOperator) -> Result<FirstOrderData, RationalError> {
    let n = k.n();
    let trunc = k.trunc();
    let mut g = vec![vec![DiffPoly::zero(trunc); n]; n];
    let mut b1 = vec![vec![Rat::zero(); n]; n];
    for a in 0..n {
        for b in 0..n {
            let entry = k.entry(a, b);
            if entry.order().unwrap_or(0) > 1 {
                return Err(RationalError::HypothesisViolation(format!(
                    "entry ({},{}) has order above 1",
                    a + 1,
                    b + 1
                )));
            }
            let ga = entry.coeff(1);
            for (m, _) in ga.terms() {
                if m.eps_power != 0 || m.powers.keys().any(|v| v.d != 0) {
                    return Err(RationalError::HypothesisViolation(format!(
                        "entry ({},{}): g is not a series in the undifferentiated variables",
                        a + 1,
                        b + 1
                    )));
                }
            }
            if !ga
                .partial(VarIndex::new(1, 0))
                .partial(VarIndex::new(1, 0))
                .is_zero()
            {
                return Err(RationalError::HypothesisViolation(format!(
                    "entry ({},{}): second v^1 derivative of g is nonzero",
                    a + 1,
                    b + 1
                )));
            }
            g[a][b] = ga;
            let c0 = entry.coeff(0);
            for (m, c) in c0.terms() {
                let derived: Vec<(VarIndex, u32)> = m
                    .powers
                    .iter()
                    .filter(|(v, _)| v.d != 0)
                    .map(|(v, e)| (*v, *e))
                    .collect();
                if m.eps_power != 0
                    || derived.len() != 1
                    || derived[0].0.d != 1
                    || derived[0].1 != 1
                {
                    return Err(RationalError::HypothesisViolation(format!(
                        "entry ({},{}): order-0 part is not of the form b_gamma v^gamma_x",
                        a + 1,
                        b + 1
                    )));
                }
                let gamma = derived[0].0.alpha;
                let mut rest = m.powers.clone();
                rest.remove(&derived[0].0);
                let rest_m = Monomial {
                    powers: rest,
                    eps_power: 0,
                };
                if rest_m.powers.contains_key(&VarIndex::new(1, 0)) {
                    return Err(RationalError::HypothesisViolation(format!(
                        "entry ({},{}): b depends on v^1",
                        a + 1,
                        b + 1
                    )));
                }
                if gamma == 1 {
                    if !rest_m.powers.is_empty() {
                        return Err(RationalError::HypothesisViolation(format!(
                            "entry ({},{}): b^{{ab}}_1 is not constant",
                            a + 1,
                            b + 1
                        )));
                    }
                    b1[a][b] += c;
                }
            }
        }
    }
    Ok(FirstOrderData { g, b1 })
}

/// The Lemma singular-2 polynomial-part pushforward: for K of the form
/// g^{ab} dx + b^{ab}_gamma v^gamma_x within hypotheses and
/// P^a = pol(v^1_x (u^a(v) - v^a)),
///
///   (K_u^{ab})^pol = K^{ab} + L^1_mu(P^a) ∘ eta^{mu b} dx
///                  + L^0_mu(P^a) ∘ b^{mu b}_1 + b^{a nu}_1 ∘ L^0_nu(P^b)^dagger,
///
/// with eta^{ab} := dg^{ab}/dv^1, variables renamed v -> u.
pub fn lemma_s2_pushforward(
    k: &MatrixDiffOperator,
    p: &[DiffPoly],
) -> Result<MatrixDiffOperator, RationalError> {
    let n = k.n();
    assert_eq!(p.len(), n);
    let trunc = k.trunc();
    let data = decompose_first_order(k)?;
    let eta: Vec<Vec<DiffPoly>> = (0..n)
        .map(|a| {
            (0..n)
                .map(|b| data.g[a][b].partial(VarIndex::new(1, 0)))
                .collect()
        })
        .collect();
    let mut out = MatrixDiffOperator::zero(n, trunc);
    for a in 0..n {
        for b in 0..n {
            let mut acc = k.entry(a, b).clone();
            for mu in 0..n {
                if !eta[mu][b].is_zero() {
                    let eta_dx =
                        DiffOperator::mult(eta[mu][b].clone()).compose(&DiffOperator::dx_pow(1, trunc));
                    acc = acc.add(&l_op(&p[a], (mu + 1) as u32, 1).compose(&eta_dx));
                }
                if !data.b1[mu][b].is_zero() {
                    acc = acc.add(&l_op(&p[a], (mu + 1) as u32, 0).scale(&data.b1[mu][b]));
                }
                if !data.b1[a][mu].is_zero() {
                    acc = acc.add(
                        &l_op(&p[b], (mu + 1) as u32, 0)
                            .adjoint()
                            .scale(&data.b1[a][mu]),
                    );
                }
            }
            out.set_entry(a, b, acc);
        }
    }
    Ok(out)
}

/// A differential operator with Laurent coefficients (internal oracle
/// machinery for the direct pushforward).
#[derive(Debug, Clone, PartialEq, Eq)]
struct LaurentOp {
    coeffs: BTreeMap<u32, LaurentDiffPoly>,
    trunc: TruncationPolicy,
}

impl LaurentOp {
    fn zero(trunc: TruncationPolicy) -> Self {
        LaurentOp {
            coeffs: BTreeMap::new(),
            trunc,
        }
    }

    fn add_coeff(&mut self, order: u32, f: LaurentDiffPoly) {
        if f.is_zero() {
            return;
        }
        let entry = self
            .coeffs
            .entry(order)
            .or_insert_with(|| LaurentDiffPoly::zero(self.trunc));
        *entry = entry.add(&f);
        if self.coeffs.get(&order).map(|p| p.is_zero()).unwrap_or(false) {
            self.coeffs.remove(&order);
        }
    }

    fn mult(f: LaurentDiffPoly) -> Self {
        let trunc = f.trunc();
        let mut op = LaurentOp::zero(trunc);
        op.add_coeff(0, f);
        op
    }

    fn add(&self, other: &LaurentOp) -> LaurentOp {
        let mut out = self.clone();
        for (j, f) in &other.coeffs {
            out.add_coeff(*j, f.clone());
        }
        out
    }

    fn scale(&self, c: &Rat) -> LaurentOp {
        let mut out = LaurentOp::zero(self.trunc);
        for (j, f) in &self.coeffs {
            out.add_coeff(*j, f.scale(c));
        }
        out
    }

    fn compose(&self, other: &LaurentOp) -> LaurentOp {
        let mut out = LaurentOp::zero(self.trunc);
        for (j, f) in &self.coeffs {
            for (i, g) in &other.coeffs {
                let mut gs = g.clone();
                for s in 0..=*j {
                    out.add_coeff(j - s + i, f.mul(&gs.scale(&crate::diffop::binom(*j, s))));
                    if s < *j {
                        gs = gs.dx();
                    }
                }
            }
        }
        out
    }
}

/// The direct Laurent pushforward oracle: conjugate K by the full Jacobian
/// operator of the transformation, rewrite in the new variables through the
/// inverse transformation, and take the polynomial part entrywise.
pub fn direct_pushforward_pol(
    k: &MatrixDiffOperator,
    m: &PurelySingularMiura,
) -> Result<MatrixDiffOperator, RationalError> {
    let n = k.n();
    assert_eq!(m.n(), n);
    let trunc = k.trunc();
    let inv = m.invert()?;
    let max_p = m
        .images()
        .iter()
        .map(|img| img.max_order())
        .max()
        .unwrap_or(0);
    // left factor: sum_p du^a/dv^mu_p dx^p; right factor: its adjoint form
    let jac = |a: usize, mu: usize| -> Vec<LaurentDiffPoly> {
        (0..=max_p)
            .map(|p| m.images()[a].partial(VarIndex::new((mu + 1) as u32, p)))
            .collect()
    };
    let mut out = MatrixDiffOperator::zero(n, trunc);
    for a in 0..n {
        for b in 0..n {
            let mut acc = LaurentOp::zero(trunc);
            for mu in 0..n {
                let left_parts = jac(a, mu);
                for nu in 0..n {
                    // middle: K^{mu nu} with Laurent coefficients
                    let mut mid = LaurentOp::zero(trunc);
                    for (j, f) in k.entry(mu, nu).orders() {
                        mid.add_coeff(*j, LaurentDiffPoly::from_poly(f));
                    }
                    // right: sum_q (-dx)^q ∘ du^b/dv^nu_q
                    let right_parts = jac(b, nu);
                    let mut right = LaurentOp::zero(trunc);
                    for (q, f) in right_parts.iter().enumerate() {
                        if f.is_zero() {
                            continue;
                        }
                        let mut dq = LaurentOp::zero(trunc);
                        dq.add_coeff(q as u32, LaurentDiffPoly::vx_pow(0, trunc));
                        let sign = if q % 2 == 0 { Rat::one() } else { -Rat::one() };
                        right = right.add(&dq.compose(&LaurentOp::mult(f.clone())).scale(&sign));
                    }
                    let mut left = LaurentOp::zero(trunc);
                    for (p, f) in left_parts.iter().enumerate() {
                        left.add_coeff(p as u32, f.clone());
                    }
                    acc = acc.add(&left.compose(&mid).compose(&right));
                }
            }
            let mut op = DiffOperator::zero(trunc);
            for (j, f) in &acc.coeffs {
                op.add_coeff(*j, laurent_substitute(f, inv.images()).pol_part());
            }
            out.set_entry(a, b, op);
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ring::rat;

    fn tr() -> TruncationPolicy {
        TruncationPolicy::new(1, 8)
    }

    fn v(alpha: u32, d: u32) -> DiffPoly {
        DiffPoly::var(alpha, d, tr())
    }

    #[test]
    fn split_examples() {
        // f = v^2_2/v^1_x + v^2_0 v^1_x
        let f = LaurentDiffPoly::from_component(-1, &v(2, 2))
            .add(&LaurentDiffPoly::from_poly(&v(2, 0).mul(&v(1, 1)).unwrap()));
        let (pol, sing) = pol_sing_split(&f);
        assert_eq!(pol, v(2, 0).mul(&v(1, 1)).unwrap());
        assert_eq!(sing, LaurentDiffPoly::from_component(-1, &v(2, 2)));
        assert_eq!(pol_sing_split(&f).0, f.sub(&sing).pol_part());
        // polynomial input has no singular part
        let g = LaurentDiffPoly::from_poly(&v(1, 0).pow(3));
        assert!(g.sing_part().is_zero());
        // pure negative power has no polynomial part
        assert!(LaurentDiffPoly::vx_pow(-2, tr()).pol_part().is_zero());
    }

    #[test]
    fn from_poly_normalizes_vx() {
        let p = v(1, 1).pow(2).mul(&v(2, 0)).unwrap();
        let f = LaurentDiffPoly::from_poly(&p);
        assert_eq!(f.component(2), v(2, 0));
        assert!(f.component(0).is_zero());
        assert_eq!(f.pol_part(), p);
    }

    #[test]
    fn dx_examples() {
        // dx(1/v^1_x) = -v^1_2/(v^1_x)^2
        let f = LaurentDiffPoly::vx_pow(-1, tr());
        assert_eq!(f.dx(), LaurentDiffPoly::from_component(-2, &v(1, 2)).neg());
        // dx(v^2_0/v^1_x) = v^2_1/v^1_x - v^2_0 v^1_2/(v^1_x)^2
        let g = LaurentDiffPoly::from_component(-1, &v(2, 0));
        let expect = LaurentDiffPoly::from_component(-1, &v(2, 1)).add(
            &LaurentDiffPoly::from_component(-2, &v(2, 0).mul(&v(1, 2)).unwrap()).neg(),
        );
        assert_eq!(g.dx(), expect);
        // dx preserves the singular subspace on a v^1-free, pol-free element
        let h = LaurentDiffPoly::from_component(-1, &v(2, 0));
        assert!(h.dx().pol_part().is_zero());
    }

    fn kdv_singular(scale: Rat) -> PurelySingularMiura {
        // u = v + eps^2 * scale * v_3 / v^1_x (N = 1)
        let corr = LaurentDiffPoly::from_component(-1, &v(1, 3).scale(&scale)).mul_eps(2);
        PurelySingularMiura::from_images(vec![LaurentDiffPoly::var(1, 0, tr()).add(&corr)])
            .unwrap()
    }

    #[test]
    fn purely_singular_validation() {
        assert!(kdv_singular(rat(1, 24)).p_vector()[0]
            .sub(&v(1, 3).scale(&rat(1, 24)).mul_eps(2))
            .unwrap()
            .is_zero());
        // pol part not the identity
        let bad = LaurentDiffPoly::var(1, 0, tr())
            .add(&LaurentDiffPoly::from_poly(&v(1, 2).mul_eps(2)));
        assert!(PurelySingularMiura::from_images(vec![bad]).is_err());
        // depends on v^1
        let bad2 = LaurentDiffPoly::var(1, 0, tr()).add(
            &LaurentDiffPoly::from_component(-2, &v(1, 0).mul(&v(1, 2)).unwrap()).mul_eps(1),
        );
        assert!(PurelySingularMiura::from_images(vec![bad2]).is_err());
    }

    #[test]
    fn grading_enforced() {
        // eps^2 with a degree-1 correction is rejected
        let bad = LaurentDiffPoly::var(1, 0, TruncationPolicy::new(2, 8)).add(
            &LaurentDiffPoly::from_component(
                -1,
                &DiffPoly::var(1, 2, TruncationPolicy::new(2, 8)),
            )
            .mul_eps(2),
        );
        assert!(RationalMiura::new(vec![bad]).is_err());
    }

    #[test]
    fn invert_round_trip() {
        let trunc = TruncationPolicy::new(2, 8);
        // N = 2: u^1 = v^1 + eps * v^2_2/v^1_x, u^2 = v^2
        let corr = LaurentDiffPoly::from_component(-1, &DiffPoly::var(2, 2, trunc)).mul_eps(1);
        let m = RationalMiura::new(vec![
            LaurentDiffPoly::var(1, 0, trunc).add(&corr),
            LaurentDiffPoly::var(2, 0, trunc),
        ])
        .unwrap();
        let inv = m.invert().unwrap();
        // leading correction of the inverse: -eps * u^2_2/u^1_x
        assert_eq!(
            inv.images()[0].eps_coefficient(1),
            LaurentDiffPoly::from_component(-1, &DiffPoly::var(2, 2, trunc)).neg()
        );
        let round = m.compose(&inv).unwrap();
        assert_eq!(round, RationalMiura::identity(2, trunc));
        let round2 = inv.compose(&m).unwrap();
        assert_eq!(round2, RationalMiura::identity(2, trunc));
    }

    #[test]
    fn purely_singular_subgroup() {
        let m1 = kdv_singular(rat(1, 24));
        let m2 = kdv_singular(rat(-1, 7));
        let c = m1.compose(&m2).unwrap();
        assert_eq!(c.images()[0].pol_part(), v(1, 0));
        let inv = m1.invert().unwrap();
        assert_eq!(
            m1.base().compose(inv.base()).unwrap(),
            RationalMiura::identity(1, tr())
        );
    }

    #[test]
    fn pol_of_substitution_examples() {
        let m = kdv_singular(rat(1, 24));
        // f = u^1_x: pol of dx u^1(v) is v^1_x
        let f = LaurentDiffPoly::var(1, 1, tr());
        assert_eq!(pol_of_substitution(&f, &m), v(1, 1));
        // f = h/(u^1_x)^k with h free of u^1_x: pol part vanishes
        let f2 = LaurentDiffPoly::from_component(-2, &v(1, 2));
        assert!(pol_of_substitution(&f2, &m).is_zero());
        // f with pol part free of u^1_x: renamed
        let f3 = LaurentDiffPoly::from_poly(&v(1, 0).pow(2))
            .add(&LaurentDiffPoly::from_component(-1, &v(1, 2).mul_eps(1)));
        assert_eq!(pol_of_substitution(&f3, &m), v(1, 0).pow(2));
    }

    fn kdv_k2_genus0() -> MatrixDiffOperator {
        MatrixDiffOperator::from_entries(vec![vec![DiffOperator::from_coeffs(
            vec![(1, v(1, 0)), (0, v(1, 1).scale(&rat(1, 2)))],
            tr(),
        )]])
    }

    #[test]
    fn lemma_s2_on_kdv() {
        let m = kdv_singular(rat(1, 24));
        let p = m.p_vector();
        let pushed = lemma_s2_pushforward(&kdv_k2_genus0(), &p).unwrap();
        // expected: u dx + u_x/2 + eps^2/8 dx^3
        let expect = MatrixDiffOperator::from_entries(vec![vec![DiffOperator::from_coeffs(
            vec![
                (1, v(1, 0)),
                (0, v(1, 1).scale(&rat(1, 2))),
                (3, DiffPoly::constant(rat(1, 8), tr()).mul_eps(2)),
            ],
            tr(),
        )]]);
        assert_eq!(pushed, expect);
    }

    #[test]
    fn lemma_s2_matches_direct_oracle() {
        let m = kdv_singular(rat(1, 24));
        let k = kdv_k2_genus0();
        let lemma = lemma_s2_pushforward(&k, &m.p_vector()).unwrap();
        let direct = direct_pushforward_pol(&k, &m).unwrap();
        assert_eq!(lemma, direct);
    }

    #[test]
    fn lemma_s2_identity_transform() {
        let k = kdv_k2_genus0();
        let p = vec![DiffPoly::zero(tr())];
        assert_eq!(lemma_s2_pushforward(&k, &p).unwrap(), k);
    }

    #[test]
    fn lemma_s2_hypothesis_violation() {
        // b depending on v^1: order-0 coefficient v^1_0 v^1_1
        let bad = MatrixDiffOperator::from_entries(vec![vec![DiffOperator::from_coeffs(
            vec![(1, v(1, 0)), (0, v(1, 0).mul(&v(1, 1)).unwrap())],
            tr(),
        )]]);
        assert!(lemma_s2_pushforward(&bad, &[DiffPoly::zero(tr())]).is_err());
        // second v^1 derivative of g nonzero
        let bad2 = MatrixDiffOperator::from_entries(vec![vec![DiffOperator::from_coeffs(
            vec![(1, v(1, 0).pow(2))],
            tr(),
        )]]);
        assert!(lemma_s2_pushforward(&bad2, &[DiffPoly::zero(tr())]).is_err());
    }

    #[test]
    fn laurent_inverse_powers() {
        let m = kdv_singular(rat(1, 24));
        // substituted (u^1_x)^{-1} times substituted u^1_x is 1
        let ident = RationalMiura::identity(1, tr());
        let one = LaurentDiffPoly::vx_pow(0, tr());
        assert_eq!(
            laurent_substitute(&LaurentDiffPoly::vx_pow(-2, tr()), ident.images()),
            LaurentDiffPoly::vx_pow(-2, tr())
        );
        let j = m.images()[0].dx();
        let jinv = laurent_substitute(&LaurentDiffPoly::vx_pow(-1, tr()), m.images());
        assert_eq!(j.mul(&jinv), one);
    }
}
