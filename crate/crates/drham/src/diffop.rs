//! Scalar and matrix differential operators on the differential polynomial
//! ring: composition, adjoints, brackets of local functionals, the operator
//! families L^k_alpha and Omega-hat^k, and Miura transformations.

use std::collections::BTreeMap;
use std::fmt;

use num_traits::{One, Zero};
use thiserror::Error;

use crate::linalg;
use crate::ring::{rint, DiffPoly, Monomial, Rat, TruncationPolicy, VarIndex};
use crate::varcalc::LocalFunctional;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum DiffOpError {
    #[error("transformation is not invertible: {0}")]
    NonInvertible(String),
}

/// Binomial coefficient as an exact rational.
pub fn binom(n: u32, k: u32) -> Rat {
    if k > n {
        return Rat::zero();
    }
    let mut r = Rat::one();
    for i in 0..k {
        r *= rint((n - i) as i64);
        r /= rint((i + 1) as i64);
    }
    r
}

/// A differential operator sum_j f_j * Dx^j in canonical coefficients-left
/// form. Zero coefficients are dropped; equal orders are merged.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DiffOperator {
    coeffs: BTreeMap<u32, DiffPoly>,
    trunc: TruncationPolicy,
}

impl DiffOperator {
    pub fn zero(trunc: TruncationPolicy) -> Self {
        DiffOperator {
            coeffs: BTreeMap::new(),
            trunc,
        }
    }

    /// Multiplication operator by f (order zero).
    pub fn mult(f: DiffPoly) -> Self {
        let trunc = f.trunc();
        let mut op = DiffOperator::zero(trunc);
        op.add_coeff(0, f);
        op
    }

    /// c * Dx^j.
    pub fn dx_pow(j: u32, trunc: TruncationPolicy) -> Self {
        let mut op = DiffOperator::zero(trunc);
        op.add_coeff(j, DiffPoly::constant(Rat::one(), trunc));
        op
    }

    pub fn from_coeffs(pairs: Vec<(u32, DiffPoly)>, trunc: TruncationPolicy) -> Self {
        let mut op = DiffOperator::zero(trunc);
        for (j, f) in pairs {
            op.add_coeff(j, f);
        }
        op
    }

    pub fn trunc(&self) -> TruncationPolicy {
        self.trunc
    }

    pub fn add_coeff(&mut self, order: u32, f: DiffPoly) {
        if f.is_zero() {
            return;
        }
        let entry = self
            .coeffs
            .entry(order)
            .or_insert_with(|| DiffPoly::zero(self.trunc));
        *entry = entry.add(&f).expect("truncation policies match");
        if self.coeffs.get(&order).map(|p| p.is_zero()).unwrap_or(false) {
            self.coeffs.remove(&order);
        }
    }

    pub fn coeff(&self, order: u32) -> DiffPoly {
        self.coeffs
            .get(&order)
            .cloned()
            .unwrap_or_else(|| DiffPoly::zero(self.trunc))
    }

    pub fn orders(&self) -> impl Iterator<Item = (&u32, &DiffPoly)> {
        self.coeffs.iter()
    }

    pub fn is_zero(&self) -> bool {
        self.coeffs.is_empty()
    }

    /// Highest order with a nonzero coefficient.
    pub fn order(&self) -> Option<u32> {
        self.coeffs.keys().next_back().copied()
    }

    pub fn add(&self, other: &DiffOperator) -> DiffOperator {
        let mut out = self.clone();
        for (j, f) in &other.coeffs {
            out.add_coeff(*j, f.clone());
        }
        out
    }

    pub fn sub(&self, other: &DiffOperator) -> DiffOperator {
        self.add(&other.neg())
    }

    pub fn neg(&self) -> DiffOperator {
        self.scale(&-Rat::one())
    }

    pub fn scale(&self, c: &Rat) -> DiffOperator {
        let mut out = DiffOperator::zero(self.trunc);
        for (j, f) in &self.coeffs {
            out.add_coeff(*j, f.scale(c));
        }
        out
    }

    /// Left multiplication by a differential polynomial: f ∘ A.
    pub fn scale_poly(&self, f: &DiffPoly) -> DiffOperator {
        let mut out = DiffOperator::zero(self.trunc);
        for (j, g) in &self.coeffs {
            out.add_coeff(*j, f.mul(g).expect("truncation policies match"));
        }
        out
    }

    /// Operator product, normalized with Dx^j ∘ f = sum_i C(j,i) (Dx^i f) Dx^{j-i}.
    pub fn compose(&self, other: &DiffOperator) -> DiffOperator {
        let mut out = DiffOperator::zero(self.trunc);
        for (j, f) in &self.coeffs {
            for (i, g) in &other.coeffs {
                let mut gs = g.clone();
                for s in 0..=*j {
                    let term = f
                        .mul(&gs.scale(&binom(*j, s)))
                        .expect("truncation policies match");
                    out.add_coeff(j - s + i, term);
                    if s < *j {
                        gs = gs.dx();
                    }
                }
            }
        }
        out
    }

    /// Formal adjoint sum_j (-Dx)^j ∘ f_j, normalized to coefficients-left form.
    pub fn adjoint(&self) -> DiffOperator {
        let mut out = DiffOperator::zero(self.trunc);
        for (j, f) in &self.coeffs {
            let sign = if j % 2 == 0 { Rat::one() } else { -Rat::one() };
            let mut fs = f.clone();
            for s in 0..=*j {
                let c = binom(*j, s) * &sign;
                out.add_coeff(j - s, fs.scale(&c));
                if s < *j {
                    fs = fs.dx();
                }
            }
        }
        out
    }

    pub fn apply(&self, p: &DiffPoly) -> DiffPoly {
        let mut out = DiffPoly::zero(self.trunc);
        for (j, f) in &self.coeffs {
            out = out
                .add(&f.mul(&p.dx_n(*j)).expect("truncation policies match"))
                .expect("truncation policies match");
        }
        out
    }

    pub fn map_coeffs(&self, mut f: impl FnMut(&DiffPoly) -> DiffPoly) -> DiffOperator {
        let mut out = DiffOperator::zero(self.trunc);
        for (j, g) in &self.coeffs {
            out.add_coeff(*j, f(g));
        }
        out
    }
}

impl fmt::Display for DiffOperator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.is_zero() {
            return write!(f, "0");
        }
        let parts: Vec<String> = self
            .coeffs
            .iter()
            .map(|(j, p)| {
                if *j == 0 {
                    format!("({})", p)
                } else if *j == 1 {
                    format!("({}) * Dx", p)
                } else {
                    format!("({}) * Dx^{}", p, j)
                }
            })
            .collect();
        write!(f, "{}", parts.join(" + "))
    }
}

/// An N x N matrix of differential operators sharing one truncation policy.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MatrixDiffOperator {
    n: usize,
    entries: Vec<Vec<DiffOperator>>,
    trunc: TruncationPolicy,
}

impl MatrixDiffOperator {
    pub fn zero(n: usize, trunc: TruncationPolicy) -> Self {
        MatrixDiffOperator {
            n,
            entries: vec![vec![DiffOperator::zero(trunc); n]; n],
            trunc,
        }
    }

    pub fn from_entries(entries: Vec<Vec<DiffOperator>>) -> Self {
        let n = entries.len();
        assert!(entries.iter().all(|row| row.len() == n), "square matrix");
        let trunc = entries[0][0].trunc();
        MatrixDiffOperator { n, entries, trunc }
    }

    /// Constant matrix times Dx^j, e.g. eta^{-1} Dx.
    pub fn const_times_dx(mat: &[Vec<Rat>], j: u32, trunc: TruncationPolicy) -> Self {
        let n = mat.len();
        let mut out = MatrixDiffOperator::zero(n, trunc);
        for a in 0..n {
            for b in 0..n {
                if !mat[a][b].is_zero() {
                    out.entries[a][b] = DiffOperator::dx_pow(j, trunc).scale(&mat[a][b]);
                }
            }
        }
        out
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn trunc(&self) -> TruncationPolicy {
        self.trunc
    }

    pub fn entry(&self, a: usize, b: usize) -> &DiffOperator {
        &self.entries[a][b]
    }

    pub fn set_entry(&mut self, a: usize, b: usize, op: DiffOperator) {
        self.entries[a][b] = op;
    }

    pub fn is_zero(&self) -> bool {
        self.entries.iter().flatten().all(|op| op.is_zero())
    }

    pub fn add(&self, other: &MatrixDiffOperator) -> MatrixDiffOperator {
        assert_eq!(self.n, other.n);
        let mut out = self.clone();
        for a in 0..self.n {
            for b in 0..self.n {
                out.entries[a][b] = self.entries[a][b].add(&other.entries[a][b]);
            }
        }
        out
    }

    pub fn sub(&self, other: &MatrixDiffOperator) -> MatrixDiffOperator {
        self.add(&other.scale(&-Rat::one()))
    }

    pub fn scale(&self, c: &Rat) -> MatrixDiffOperator {
        let mut out = self.clone();
        for row in &mut out.entries {
            for op in row {
                *op = op.scale(c);
            }
        }
        out
    }

    pub fn compose(&self, other: &MatrixDiffOperator) -> MatrixDiffOperator {
        assert_eq!(self.n, other.n);
        let mut out = MatrixDiffOperator::zero(self.n, self.trunc);
        for a in 0..self.n {
            for b in 0..self.n {
                let mut acc = DiffOperator::zero(self.trunc);
                for m in 0..self.n {
                    acc = acc.add(&self.entries[a][m].compose(&other.entries[m][b]));
                }
                out.entries[a][b] = acc;
            }
        }
        out
    }

    /// (K^dagger)^{ab} = (K^{ba})^dagger.
    pub fn adjoint(&self) -> MatrixDiffOperator {
        let mut out = MatrixDiffOperator::zero(self.n, self.trunc);
        for a in 0..self.n {
            for b in 0..self.n {
                out.entries[a][b] = self.entries[b][a].adjoint();
            }
        }
        out
    }

    pub fn apply(&self, v: &[DiffPoly]) -> Vec<DiffPoly> {
        assert_eq!(v.len(), self.n);
        (0..self.n)
            .map(|a| {
                let mut acc = DiffPoly::zero(self.trunc);
                for b in 0..self.n {
                    acc = acc
                        .add(&self.entries[a][b].apply(&v[b]))
                        .expect("truncation policies match");
                }
                acc
            })
            .collect()
    }

    pub fn map_entries(&self, mut f: impl FnMut(&DiffOperator) -> DiffOperator) -> MatrixDiffOperator {
        let mut out = MatrixDiffOperator::zero(self.n, self.trunc);
        for a in 0..self.n {
            for b in 0..self.n {
                out.entries[a][b] = f(&self.entries[a][b]);
            }
        }
        out
    }

    pub fn is_skew(&self) -> bool {
        self.adjoint().add(self).is_zero()
    }
}

/// {f, g}_K = int (df/du^mu K^{mu nu} dg/du^nu) dx.
pub fn bracket(
    f: &LocalFunctional,
    g: &LocalFunctional,
    k: &MatrixDiffOperator,
) -> LocalFunctional {
    let trunc = k.trunc();
    let n = k.n();
    let dg: Vec<DiffPoly> = (1..=n as u32).map(|b| g.var_derivative(b)).collect();
    let kdg = k.apply(&dg);
    let mut density = DiffPoly::zero(trunc);
    for a in 0..n {
        density = density
            .add(
                &f.var_derivative((a + 1) as u32)
                    .mul(&kdg[a])
                    .expect("truncation policies match"),
            )
            .expect("truncation policies match");
    }
    LocalFunctional::new(density)
}

/// Right-hand sides of the flow du^a/dt = K^{a mu} dh/du^mu.
pub fn hamiltonian_flow(k: &MatrixDiffOperator, h: &LocalFunctional) -> Vec<DiffPoly> {
    let n = k.n();
    let dh: Vec<DiffPoly> = (1..=n as u32).map(|b| h.var_derivative(b)).collect();
    k.apply(&dh)
}

/// L^k_alpha(f) = sum_{i >= k} C(i,k) (df/du^alpha_i) Dx^{i-k}.
pub fn l_op(f: &DiffPoly, alpha: u32, k: u32) -> DiffOperator {
    let trunc = f.trunc();
    let mut out = DiffOperator::zero(trunc);
    let max = f.max_order().unwrap_or(0);
    for i in k..=max {
        let p = f.partial(VarIndex::new(alpha, i));
        if !p.is_zero() {
            out.add_coeff(i - k, p.scale(&binom(i, k)));
        }
    }
    out
}

/// Omega-hat^k(h)^{ab} = eta^{a mu} eta^{b nu} L^k_nu(dh/du^mu).
pub fn omega_hat(
    h: &LocalFunctional,
    k: u32,
    eta_inv: &[Vec<Rat>],
) -> MatrixDiffOperator {
    let n = eta_inv.len();
    let trunc = h.trunc();
    let var_ders: Vec<DiffPoly> = (1..=n as u32).map(|m| h.var_derivative(m)).collect();
    let mut out = MatrixDiffOperator::zero(n, trunc);
    for a in 0..n {
        for b in 0..n {
            let mut acc = DiffOperator::zero(trunc);
            for mu in 0..n {
                for nu in 0..n {
                    let c = &eta_inv[a][mu] * &eta_inv[b][nu];
                    if c.is_zero() {
                        continue;
                    }
                    acc = acc.add(&l_op(&var_ders[mu], (nu + 1) as u32, k).scale(&c));
                }
            }
            out.set_entry(a, b, acc);
        }
    }
    out
}

/// A polynomial Miura transformation w^a = f^a_0(u) + sum_k eps^k f^a_k,
/// with f^a_k of differential degree k, f^a_0|_{u=0} = 0 and invertible
/// linear part.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MiuraTransform {
    images: Vec<DiffPoly>,
    trunc: TruncationPolicy,
}

fn constant_value(p: &DiffPoly) -> Rat {
    p.coeff(&Monomial::one())
}

impl MiuraTransform {
    pub fn new(images: Vec<DiffPoly>) -> Result<Self, DiffOpError> {
        assert!(!images.is_empty());
        let trunc = images[0].trunc();
        let n = images.len();
        for (a, w) in images.iter().enumerate() {
            for k in 0..=trunc.eps_cap() {
                let fk = w.eps_coefficient(k);
                for (m, _) in fk.terms() {
                    if m.diff_degree() != k as i64 {
                        return Err(DiffOpError::NonInvertible(format!(
                            "image {} has an eps^{} term of differential degree {}",
                            a + 1,
                            k,
                            m.diff_degree()
                        )));
                    }
                }
            }
            if !constant_value(&w.eps_coefficient(0)).is_zero() {
                return Err(DiffOpError::NonInvertible(format!(
                    "image {} does not vanish at the origin",
                    a + 1
                )));
            }
        }
        let jac = jacobian_at_origin(&images, n);
        if linalg::det(&jac).is_zero() {
            return Err(DiffOpError::NonInvertible(
                "linear part of the dispersionless map is singular".into(),
            ));
        }
        Ok(MiuraTransform { images, trunc })
    }

    pub fn identity(n: usize, trunc: TruncationPolicy) -> Self {
        let images = (1..=n as u32).map(|a| DiffPoly::var(a, 0, trunc)).collect();
        MiuraTransform { images, trunc }
    }

    pub fn images(&self) -> &[DiffPoly] {
        &self.images
    }

    pub fn n(&self) -> usize {
        self.images.len()
    }

    pub fn trunc(&self) -> TruncationPolicy {
        self.trunc
    }

    /// Substitute the transform into a differential polynomial.
    pub fn apply(&self, f: &DiffPoly) -> DiffPoly {
        f.substitute(&self.images)
    }

    /// self after first: (self ∘ first)(u) = self(first(u)).
    pub fn compose(&self, first: &MiuraTransform) -> Result<MiuraTransform, DiffOpError> {
        let images = self
            .images
            .iter()
            .map(|w| w.substitute(&first.images))
            .collect();
        MiuraTransform::new(images)
    }

    /// Inverse transform to the working eps order: first the power-series
    /// inverse of the dispersionless part, then an eps fixed-point iteration.
    pub fn invert(&self) -> Result<MiuraTransform, DiffOpError> {
        let n = self.n();
        let trunc = self.trunc;
        let f0: Vec<DiffPoly> = self.images.iter().map(|w| w.eps_coefficient(0)).collect();
        let jac = jacobian_at_origin(&self.images, n);
        let ainv = linalg::invert(&jac).ok_or_else(|| {
            DiffOpError::NonInvertible(
                "linear part of the dispersionless map is singular".into(),
            )
        })?;

        // g = f0^{-1} as a truncated power-series map in the underived variables.
        let lin: Vec<DiffPoly> = (0..n)
            .map(|a| {
                let mut p = DiffPoly::zero(trunc);
                for b in 0..n {
                    p = p
                        .add(&DiffPoly::var((b + 1) as u32, 0, trunc).scale(&ainv[a][b]))
                        .expect("truncation policies match");
                }
                p
            })
            .collect();
        let mut g = lin.clone();
        for _ in 0..=trunc.u0_cap {
            let fg: Vec<DiffPoly> = f0.iter().map(|f| f.substitute(&g)).collect();
            let mut next = Vec::with_capacity(n);
            for a in 0..n {
                let mut p = g[a].clone();
                for b in 0..n {
                    let delta = DiffPoly::var((b + 1) as u32, 0, trunc)
                        .sub(&fg[b])
                        .expect("truncation policies match");
                    p = p
                        .add(&delta.scale(&ainv[a][b]))
                        .expect("truncation policies match");
                }
                next.push(p);
            }
            if next == g {
                break;
            }
            g = next;
        }

        // eps corrections: v = g(u - E(v)) with E the eps >= 1 part of the map.
        let e_part: Vec<DiffPoly> = (0..n)
            .map(|a| {
                self.images[a]
                    .sub(&f0[a])
                    .expect("truncation policies match")
            })
            .collect();
        let mut v: Vec<DiffPoly> = (0..n).map(|a| g[a].clone()).collect();
        for _ in 0..=trunc.eps_cap() {
            let args: Vec<DiffPoly> = (0..n)
                .map(|b| {
                    DiffPoly::var((b + 1) as u32, 0, trunc)
                        .sub(&e_part[b].substitute(&v))
                        .expect("truncation policies match")
                })
                .collect();
            let next: Vec<DiffPoly> = g.iter().map(|ga| ga.substitute(&args)).collect();
            if next == v {
                break;
            }
            v = next;
        }
        MiuraTransform::new(v)
    }

    /// K_w^{ab} = (L^0_mu(w^a) ∘ K^{mu nu} ∘ L^0_nu(w^b)^dagger)|_{u = u(w)}.
    pub fn pushforward(
        &self,
        k: &MatrixDiffOperator,
    ) -> Result<MatrixDiffOperator, DiffOpError> {
        let n = self.n();
        assert_eq!(k.n(), n);
        let inv = self.invert()?;
        let jac_ops: Vec<Vec<DiffOperator>> = (0..n)
            .map(|a| {
                (1..=n as u32)
                    .map(|mu| l_op(&self.images[a], mu, 0))
                    .collect()
            })
            .collect();
        let mut out = MatrixDiffOperator::zero(n, self.trunc);
        for a in 0..n {
            for b in 0..n {
                let mut acc = DiffOperator::zero(self.trunc);
                for mu in 0..n {
                    for nu in 0..n {
                        acc = acc.add(
                            &jac_ops[a][mu]
                                .compose(k.entry(mu, nu))
                                .compose(&jac_ops[b][nu].adjoint()),
                        );
                    }
                }
                out.set_entry(a, b, acc.map_coeffs(|p| p.substitute(inv.images())));
            }
        }
        Ok(out)
    }
}

fn jacobian_at_origin(images: &[DiffPoly], n: usize) -> Vec<Vec<Rat>> {
    (0..n)
        .map(|a| {
            (0..n)
                .map(|b| {
                    constant_value(
                        &images[a]
                            .eps_coefficient(0)
                            .partial(VarIndex::new((b + 1) as u32, 0))
                            .eval_at_origin(),
                    )
                })
                .collect()
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ring::rat;

    fn tr() -> TruncationPolicy {
        TruncationPolicy::new(2, 8)
    }

    fn u(d: u32) -> DiffPoly {
        DiffPoly::var(1, d, tr())
    }

    #[test]
    fn compose_leibniz() {
        // Dx ∘ u -> u*Dx + u_1
        let dx = DiffOperator::dx_pow(1, tr());
        let mu = DiffOperator::mult(u(0));
        let c = dx.compose(&mu);
        assert_eq!(c.coeff(1), u(0));
        assert_eq!(c.coeff(0), u(1));
        // Dx ∘ Dx -> Dx^2
        let c2 = dx.compose(&dx);
        assert_eq!(c2.coeff(2), DiffPoly::constant(Rat::one(), tr()));
        assert!(c2.coeff(0).is_zero() && c2.coeff(1).is_zero());
        // (u Dx) ∘ (u Dx) -> u^2 Dx^2 + u u_1 Dx
        let udx = mu.compose(&dx);
        let sq = udx.compose(&udx);
        assert_eq!(sq.coeff(2), u(0).pow(2));
        assert_eq!(sq.coeff(1), u(0).mul(&u(1)).unwrap());
    }

    #[test]
    fn adjoint_examples() {
        let udx = DiffOperator::mult(u(0)).compose(&DiffOperator::dx_pow(1, tr()));
        let adj = udx.adjoint();
        assert_eq!(adj.coeff(1), u(0).neg());
        assert_eq!(adj.coeff(0), u(1).neg());
        assert_eq!(
            DiffOperator::dx_pow(1, tr()).adjoint(),
            DiffOperator::dx_pow(1, tr()).neg()
        );
        let f = DiffOperator::mult(u(0).pow(2));
        assert_eq!(f.adjoint(), f);
    }

    #[test]
    fn adjoint_involution_and_antihomomorphism() {
        let a = DiffOperator::from_coeffs(
            vec![(0, u(1)), (2, u(0).pow(2))],
            tr(),
        );
        let b = DiffOperator::from_coeffs(vec![(1, u(0)), (0, u(2))], tr());
        assert_eq!(a.adjoint().adjoint(), a);
        assert_eq!(a.compose(&b).adjoint(), b.adjoint().compose(&a.adjoint()));
    }

    #[test]
    fn bracket_examples() {
        let dx = MatrixDiffOperator::from_entries(vec![vec![DiffOperator::dx_pow(1, tr())]]);
        let h = LocalFunctional::new(u(0).pow(2).scale(&rat(1, 2)));
        assert!(bracket(&h, &h, &dx).is_zero(1));
        let casimir = LocalFunctional::new(u(0));
        let any = LocalFunctional::new(
            u(0).pow(3).scale(&rat(1, 6)).add(&u(1).pow(2)).unwrap(),
        );
        assert!(bracket(&casimir, &any, &dx).is_zero(1));
    }

    #[test]
    fn hamiltonian_flow_examples() {
        let dx = MatrixDiffOperator::from_entries(vec![vec![DiffOperator::dx_pow(1, tr())]]);
        let h = LocalFunctional::new(u(0).pow(2).scale(&rat(1, 2)));
        assert_eq!(hamiltonian_flow(&dx, &h), vec![u(1)]);
        // KdV hamiltonian -> u u_x + eps^2/12 u_3
        let g1 = LocalFunctional::new(
            u(0)
                .pow(3)
                .scale(&rat(1, 6))
                .add(&u(0).mul(&u(2)).unwrap().mul_eps(2).scale(&rat(1, 24)))
                .unwrap(),
        );
        let expect = u(0)
            .mul(&u(1))
            .unwrap()
            .add(&u(3).mul_eps(2).scale(&rat(1, 12)))
            .unwrap();
        assert_eq!(hamiltonian_flow(&dx, &g1), vec![expect]);
        let zero = MatrixDiffOperator::zero(1, tr());
        assert_eq!(hamiltonian_flow(&zero, &h), vec![DiffPoly::zero(tr())]);
    }

    #[test]
    fn l_op_examples() {
        assert_eq!(
            l_op(&u(0).pow(2).scale(&rat(1, 2)), 1, 0),
            DiffOperator::mult(u(0))
        );
        let f = u(2).mul_eps(2).scale(&rat(1, 12));
        let l1 = l_op(&f, 1, 1);
        assert_eq!(
            l1,
            DiffOperator::dx_pow(1, tr())
                .scale(&rat(1, 6))
                .map_coeffs(|p| p.mul_eps(2))
        );
    }

    #[test]
    fn l_op_ladder_identity() {
        // L^k(dx f) = Dx ∘ L^k(f) + L^{k-1}(f), with L^{-1} = 0 at k = 0.
        let f = u(0)
            .pow(2)
            .mul(&u(1))
            .unwrap()
            .add(&u(2).mul_eps(2))
            .unwrap();
        for k in 0..=2u32 {
            let lhs = l_op(&f.dx(), 1, k);
            let mut rhs = DiffOperator::dx_pow(1, tr()).compose(&l_op(&f, 1, k));
            if k > 0 {
                rhs = rhs.add(&l_op(&f, 1, k - 1));
            }
            assert_eq!(lhs, rhs, "k = {}", k);
        }
    }

    #[test]
    fn omega_hat_examples() {
        let eta_inv = vec![vec![Rat::one()]];
        let cubic = LocalFunctional::new(u(0).pow(3).scale(&rat(1, 6)));
        assert_eq!(
            omega_hat(&cubic, 0, &eta_inv).entry(0, 0),
            &DiffOperator::mult(u(0))
        );
        let gbar = LocalFunctional::new(
            u(0)
                .pow(3)
                .scale(&rat(1, 6))
                .add(&u(0).mul(&u(2)).unwrap().mul_eps(2).scale(&rat(1, 48)))
                .unwrap(),
        );
        let om0 = omega_hat(&gbar, 0, &eta_inv);
        let expect0 = DiffOperator::mult(u(0)).add(
            &DiffOperator::dx_pow(2, tr())
                .scale(&rat(1, 24))
                .map_coeffs(|p| p.mul_eps(2)),
        );
        assert_eq!(om0.entry(0, 0), &expect0);
        let om1 = omega_hat(&gbar, 1, &eta_inv);
        let expect1 = DiffOperator::dx_pow(1, tr())
            .scale(&rat(1, 12))
            .map_coeffs(|p| p.mul_eps(2));
        assert_eq!(om1.entry(0, 0), &expect1);
    }

    #[test]
    fn miura_identity_and_rescaling() {
        let dx = MatrixDiffOperator::from_entries(vec![vec![DiffOperator::dx_pow(1, tr())]]);
        let id = MiuraTransform::identity(1, tr());
        assert_eq!(id.pushforward(&dx).unwrap(), dx);
        let m2 = MiuraTransform::new(vec![u(0).scale(&rint(2))]).unwrap();
        assert_eq!(
            m2.pushforward(&dx).unwrap().entry(0, 0),
            &DiffOperator::dx_pow(1, tr()).scale(&rint(4))
        );
        let inv = m2.invert().unwrap();
        assert_eq!(inv.images()[0], u(0).scale(&rat(1, 2)));
    }

    #[test]
    fn miura_inverse_round_trip() {
        // w = u + eps^2 u_2
        let m = MiuraTransform::new(vec![u(0).add(&u(2).mul_eps(2)).unwrap()]).unwrap();
        let inv = m.invert().unwrap();
        let round = m.compose(&inv).unwrap();
        assert_eq!(round.images()[0], u(0));
        // leading correction is -eps^2 w_2
        assert_eq!(inv.images()[0].eps_coefficient(2), u(2).neg());
    }

    #[test]
    fn miura_nonlinear_inverse() {
        // w = u + u^2: dispersionless power-series inverse.
        let m = MiuraTransform::new(vec![u(0).add(&u(0).pow(2)).unwrap()]).unwrap();
        let inv = m.invert().unwrap();
        let round = m.compose(&inv).unwrap();
        assert_eq!(round.images()[0], u(0));
        let round2 = inv.compose(&m).unwrap();
        assert_eq!(round2.images()[0], u(0));
    }

    #[test]
    fn miura_pushforward_round_trip() {
        let dx = MatrixDiffOperator::from_entries(vec![vec![DiffOperator::dx_pow(1, tr())]]);
        let m = MiuraTransform::new(vec![u(0).add(&u(1).mul_eps(1)).unwrap()]).unwrap();
        let kw = m.pushforward(&dx).unwrap();
        let back = m.invert().unwrap().pushforward(&kw).unwrap();
        assert_eq!(back, dx);
    }

    #[test]
    fn miura_pushforward_functorial() {
        let dx = MatrixDiffOperator::from_entries(vec![vec![DiffOperator::dx_pow(1, tr())]]);
        let m1 = MiuraTransform::new(vec![u(0).add(&u(1).mul_eps(1)).unwrap()]).unwrap();
        let m2 = MiuraTransform::new(vec![u(0).scale(&rint(3))]).unwrap();
        let via_composite = m2.compose(&m1).unwrap().pushforward(&dx).unwrap();
        let via_steps = m2.pushforward(&m1.pushforward(&dx).unwrap()).unwrap();
        assert_eq!(via_composite, via_steps);
    }

    #[test]
    fn bracket_invariance_under_miura() {
        let dx = MatrixDiffOperator::from_entries(vec![vec![DiffOperator::dx_pow(1, tr())]]);
        let m = MiuraTransform::new(vec![u(0).add(&u(1).mul_eps(1)).unwrap()]).unwrap();
        let inv = m.invert().unwrap();
        let kw = m.pushforward(&dx).unwrap();
        let f = LocalFunctional::new(u(0).pow(3).scale(&rat(1, 6)));
        let g = LocalFunctional::new(u(0).mul(&u(2)).unwrap().mul_eps(2));
        // densities rewritten in the new coordinates: f[w] = f(u(w))
        let fw = LocalFunctional::new(inv.apply(f.density()));
        let gw = LocalFunctional::new(inv.apply(g.density()));
        let lhs = bracket(&fw, &gw, &kw);
        let rhs = LocalFunctional::new(inv.apply(bracket(&f, &g, &dx).density()));
        assert!(lhs.equals(&rhs, 1));
    }

    #[test]
    fn invalid_miura_rejected() {
        // degree mismatch: eps^1 term of differential degree 0
        assert!(MiuraTransform::new(vec![u(0).add(&u(0).mul_eps(1)).unwrap()]).is_err());
        // vanishing linear part
        assert!(MiuraTransform::new(vec![u(0).pow(2)]).is_err());
    }
}
