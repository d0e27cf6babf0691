//! CohFT descriptor data: the metric, homogeneity data, genus-0 potential
//! and intersection-coefficient tables, with file serialization, validation,
//! bundled examples, and assembly of the hierarchy Hamiltonians g_{alpha,d}.
//!
//! Intersection numbers are data, never computed here: positive-genus
//! contributions come from descriptor tables, while the genus-0 layer is
//! generated from the potential f0 by the genus-0 topological recursion.

use std::collections::BTreeMap;

use num_traits::{One, Zero};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::linalg;
use crate::ring::{parse_rat, DiffPoly, Monomial, Rat, TruncationPolicy, VarIndex};
use crate::varcalc::{HomogeneityData, LocalFunctional};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum CohftError {
    #[error("descriptor parse error: {0}")]
    Parse(String),
    #[error("descriptor validation error: {0}")]
    Validation(String),
    #[error("intersection table gap: {0}")]
    TableGap(String),
    #[error("genus-0 recursion is inconsistent: {0}")]
    IntegrabilityFailure(String),
}

/// Raw on-disk form: exact fractions as "p/q" strings, differential
/// polynomials in canonical string form. Round-trips bit-exactly.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RawDescriptor {
    pub format_version: u32,
    pub name: String,
    #[serde(default)]
    pub metadata: BTreeMap<String, String>,
    pub n_fields: u32,
    pub eta: Vec<Vec<String>>,
    pub unit_coords: Vec<String>,
    pub q: Vec<String>,
    pub delta: String,
    pub r: Vec<String>,
    pub f0: String,
    #[serde(default = "default_true")]
    pub require_unit_first: bool,
    #[serde(default)]
    pub table: Vec<RawTableEntry>,
    /// Declared coverage: for each (g, d_max) pair, the table contains every
    /// nonzero entry with that genus, any alpha, and d <= d_max.
    #[serde(default)]
    pub coverage: Vec<RawCoverage>,
}

fn default_true() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RawTableEntry {
    pub g: u32,
    pub alpha: u32,
    pub d: u32,
    /// Multiset of (alpha_i, b_i) insertions.
    pub insertions: Vec<(u32, u32)>,
    pub value: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RawCoverage {
    pub g: u32,
    pub d_max: u32,
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub struct TableKey {
    pub g: u32,
    pub alpha: u32,
    pub d: u32,
    pub insertions: Vec<(u32, u32)>,
}

/// A validated CohFT descriptor instantiated at a truncation policy.
#[derive(Debug, Clone)]
pub struct CohFTDescriptor {
    raw: RawDescriptor,
    n: usize,
    eta: Vec<Vec<Rat>>,
    eta_inv: Vec<Vec<Rat>>,
    unit: Vec<Rat>,
    hom: HomogeneityData,
    f0: DiffPoly,
    a_lower: Vec<Vec<Rat>>,
    a_upper: Vec<Vec<Rat>>,
    table: BTreeMap<TableKey, Rat>,
    trunc: TruncationPolicy,
}

fn parse_rat_ctx(s: &str, ctx: &str) -> Result<Rat, CohftError> {
    parse_rat(s).map_err(|e| CohftError::Parse(format!("{}: {}", ctx, e)))
}

impl CohFTDescriptor {
    pub fn from_raw(raw: RawDescriptor, trunc: TruncationPolicy) -> Result<Self, CohftError> {
        let n = raw.n_fields as usize;
        if n == 0 {
            return Err(CohftError::Validation("n_fields must be positive".into()));
        }
        if raw.eta.len() != n || raw.eta.iter().any(|row| row.len() != n) {
            return Err(CohftError::Validation("eta is not an N x N matrix".into()));
        }
        let eta: Vec<Vec<Rat>> = raw
            .eta
            .iter()
            .map(|row| row.iter().map(|s| parse_rat_ctx(s, "eta")).collect())
            .collect::<Result<_, _>>()?;
        if !linalg::is_symmetric(&eta) {
            return Err(CohftError::Validation("eta is not symmetric".into()));
        }
        let eta_inv = linalg::invert(&eta)
            .ok_or_else(|| CohftError::Validation("eta is not invertible".into()))?;
        if raw.unit_coords.len() != n || raw.q.len() != n || raw.r.len() != n {
            return Err(CohftError::Validation(
                "unit_coords, q, r must have length N".into(),
            ));
        }
        let unit: Vec<Rat> = raw
            .unit_coords
            .iter()
            .map(|s| parse_rat_ctx(s, "unit_coords"))
            .collect::<Result<_, _>>()?;
        if raw.require_unit_first {
            let expected: Vec<Rat> = (0..n)
                .map(|i| if i == 0 { Rat::one() } else { Rat::zero() })
                .collect();
            if unit != expected {
                return Err(CohftError::Validation(
                    "require_unit_first is set but unit_coords != (1,0,...,0)".into(),
                ));
            }
        }
        let hom = HomogeneityData {
            q: raw
                .q
                .iter()
                .map(|s| parse_rat_ctx(s, "q"))
                .collect::<Result<_, _>>()?,
            delta: parse_rat_ctx(&raw.delta, "delta")?,
            r: raw
                .r
                .iter()
                .map(|s| parse_rat_ctx(s, "r"))
                .collect::<Result<_, _>>()?,
        };
        // mu eta + eta mu = 0
        for a in 0..n {
            for b in 0..n {
                if !((hom.mu(a) + hom.mu(b)) * &eta[a][b]).is_zero() {
                    return Err(CohftError::Validation(format!(
                        "mu*eta + eta*mu is nonzero at entry ({},{})",
                        a + 1,
                        b + 1
                    )));
                }
            }
        }
        let f0 = DiffPoly::parse_canonical(&raw.f0, trunc)
            .map_err(|e| CohftError::Parse(format!("f0: {}", e)))?;
        for (m, _) in f0.terms() {
            if m.eps_power != 0 || m.powers.keys().any(|v| v.d != 0) {
                return Err(CohftError::Validation(
                    "f0 must depend only on the undifferentiated variables".into(),
                ));
            }
            if m.total_var_degree() < 3 {
                return Err(CohftError::Validation(
                    "f0 must have no terms below cubic order".into(),
                ));
            }
        }
        // axiom (ii): unit-contracted third derivatives reproduce eta
        for a in 0..n {
            for b in 0..n {
                let mut contracted = DiffPoly::zero(trunc);
                for (g, ug) in unit.iter().enumerate() {
                    if ug.is_zero() {
                        continue;
                    }
                    let third = f0
                        .partial(VarIndex::new((a + 1) as u32, 0))
                        .partial(VarIndex::new((b + 1) as u32, 0))
                        .partial(VarIndex::new((g + 1) as u32, 0));
                    contracted = contracted
                        .add(&third.scale(ug))
                        .expect("truncation policies match");
                }
                if contracted != DiffPoly::constant(eta[a][b].clone(), trunc) {
                    return Err(CohftError::Validation(format!(
                        "unit-contracted third derivative of f0 differs from eta at ({},{})",
                        a + 1,
                        b + 1
                    )));
                }
            }
        }
        // A_{ab} = r^g * d^3 f0 / du^a du^b du^g at the origin
        let mut a_lower = vec![vec![Rat::zero(); n]; n];
        for a in 0..n {
            for b in 0..n {
                for (g, rg) in hom.r.iter().enumerate() {
                    if rg.is_zero() {
                        continue;
                    }
                    let third = f0
                        .partial(VarIndex::new((a + 1) as u32, 0))
                        .partial(VarIndex::new((b + 1) as u32, 0))
                        .partial(VarIndex::new((g + 1) as u32, 0))
                        .eval_at_origin();
                    a_lower[a][b] += third.coeff(&Monomial::one()) * rg;
                }
            }
        }
        let a_upper: Vec<Vec<Rat>> = (0..n)
            .map(|b| {
                (0..n)
                    .map(|a| {
                        let mut s = Rat::zero();
                        for nu in 0..n {
                            s += &eta_inv[b][nu] * &a_lower[nu][a];
                        }
                        s
                    })
                    .collect()
            })
            .collect();
        // table entries: canonical sorted multisets, degree condition
        let mut table = BTreeMap::new();
        for e in &raw.table {
            if e.alpha == 0 || e.alpha > n as u32 {
                return Err(CohftError::Validation(format!(
                    "table entry with alpha = {} out of range",
                    e.alpha
                )));
            }
            if e.insertions.iter().any(|(a, _)| *a == 0 || *a > n as u32) {
                return Err(CohftError::Validation(
                    "table entry with insertion index out of range".into(),
                ));
            }
            let bsum: u32 = e.insertions.iter().map(|(_, b)| *b).sum();
            if bsum != 2 * e.g {
                return Err(CohftError::Validation(format!(
                    "table entry (g={}, alpha={}, d={}) has total psi-power {} != 2g",
                    e.g, e.alpha, e.d, bsum
                )));
            }
            let mut insertions = e.insertions.clone();
            insertions.sort();
            let key = TableKey {
                g: e.g,
                alpha: e.alpha,
                d: e.d,
                insertions,
            };
            let value = parse_rat_ctx(&e.value, "table value")?;
            if table.insert(key, value).is_some() {
                return Err(CohftError::Validation(
                    "duplicate table entry (same multiset key)".into(),
                ));
            }
        }
        Ok(CohFTDescriptor {
            raw,
            n,
            eta,
            eta_inv,
            unit,
            hom,
            f0,
            a_lower,
            a_upper,
            table,
            trunc,
        })
    }

    pub fn load_str(text: &str, trunc: TruncationPolicy) -> Result<Self, CohftError> {
        let raw: RawDescriptor =
            serde_json::from_str(text).map_err(|e| CohftError::Parse(e.to_string()))?;
        CohFTDescriptor::from_raw(raw, trunc)
    }

    pub fn load_file(path: &std::path::Path, trunc: TruncationPolicy) -> Result<Self, CohftError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CohftError::Parse(format!("{}: {}", path.display(), e)))?;
        CohFTDescriptor::load_str(&text, trunc)
    }

    pub fn to_json_string(&self) -> String {
        serde_json::to_string_pretty(&self.raw).expect("raw descriptor serializes")
    }

    pub fn builtin(name: &str, trunc: TruncationPolicy) -> Result<Self, CohftError> {
        match name {
            "trivial_kdv" => CohFTDescriptor::from_raw(trivial_kdv_raw(), trunc),
            "two_field_genus0" => CohFTDescriptor::from_raw(two_field_genus0_raw(), trunc),
            other => Err(CohftError::Parse(format!(
                "unknown builtin descriptor '{}'",
                other
            ))),
        }
    }

    pub fn raw(&self) -> &RawDescriptor {
        &self.raw
    }

    pub fn name(&self) -> &str {
        &self.raw.name
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn trunc(&self) -> TruncationPolicy {
        self.trunc
    }

    pub fn eta(&self) -> &[Vec<Rat>] {
        &self.eta
    }

    pub fn eta_inv(&self) -> &[Vec<Rat>] {
        &self.eta_inv
    }

    pub fn unit(&self) -> &[Rat] {
        &self.unit
    }

    pub fn hom(&self) -> &HomogeneityData {
        &self.hom
    }

    pub fn f0(&self) -> &DiffPoly {
        &self.f0
    }

    /// A_{alpha beta} = c_{0,3}(e_alpha ⊗ e_beta ⊗ r-bar).
    pub fn a_lower(&self) -> &[Vec<Rat>] {
        &self.a_lower
    }

    /// A^beta_alpha = eta^{beta nu} A_{nu alpha}; indexed [beta][alpha].
    pub fn a_upper(&self) -> &[Vec<Rat>] {
        &self.a_upper
    }

    pub fn table(&self) -> &BTreeMap<TableKey, Rat> {
        &self.table
    }

    pub fn coverage(&self) -> &[RawCoverage] {
        &self.raw.coverage
    }

    fn covered(&self, g: u32, d: u32) -> bool {
        self.raw.coverage.iter().any(|c| c.g == g && d <= c.d_max)
    }

    /// Structure constants c^g_{mn} = eta^{g x} d^3 f0 / dx dm dn as
    /// differential polynomials in the undifferentiated variables.
    pub fn structure_constants(&self) -> Vec<Vec<Vec<DiffPoly>>> {
        let n = self.n;
        let mut thirds = vec![vec![vec![DiffPoly::zero(self.trunc); n]; n]; n];
        for x in 0..n {
            for m in 0..n {
                for nu in 0..n {
                    thirds[x][m][nu] = self
                        .f0
                        .partial(VarIndex::new((x + 1) as u32, 0))
                        .partial(VarIndex::new((m + 1) as u32, 0))
                        .partial(VarIndex::new((nu + 1) as u32, 0));
                }
            }
        }
        let mut c = vec![vec![vec![DiffPoly::zero(self.trunc); n]; n]; n];
        for g in 0..n {
            for m in 0..n {
                for nu in 0..n {
                    let mut acc = DiffPoly::zero(self.trunc);
                    for x in 0..n {
                        if !self.eta_inv[g][x].is_zero() {
                            acc = acc
                                .add(&thirds[x][m][nu].scale(&self.eta_inv[g][x]))
                                .expect("truncation policies match");
                        }
                    }
                    c[g][m][nu] = acc;
                }
            }
        }
        c
    }

    /// Densities of the genus-0 Hamiltonians h_{alpha,0..d_max}, generated
    /// from f0 by the genus-0 topological recursion: h_{alpha,0} = df0/du^a
    /// and Hess(h_{alpha,d}) = c^g Hess-contraction of h_{alpha,d-1}; the
    /// affine ambiguity vanishes (no genus-0 correlators below three points).
    pub fn principal_densities(
        &self,
        alpha: u32,
        d_max: u32,
    ) -> Result<Vec<DiffPoly>, CohftError> {
        let n = self.n;
        let trunc = self.trunc;
        let c = self.structure_constants();
        let mut out = vec![self.f0.partial(VarIndex::new(alpha, 0))];
        for d in 1..=d_max {
            let prev = out.last().unwrap();
            let grads: Vec<DiffPoly> = (0..n)
                .map(|g| prev.partial(VarIndex::new((g + 1) as u32, 0)))
                .collect();
            let mut hess = vec![vec![DiffPoly::zero(trunc); n]; n];
            for m in 0..n {
                for nu in 0..n {
                    let mut acc = DiffPoly::zero(trunc);
                    for g in 0..n {
                        acc = acc
                            .add(&c[g][m][nu].mul(&grads[g]).expect("truncation policies match"))
                            .expect("truncation policies match");
                    }
                    hess[m][nu] = acc;
                }
            }
            let h = integrate_hessian(&hess, n, trunc).map_err(|e| {
                CohftError::IntegrabilityFailure(format!(
                    "step d = {} for alpha = {}: {}",
                    d, alpha, e
                ))
            })?;
            out.push(h);
        }
        Ok(out)
    }

    /// Assemble the Hamiltonian density g_{alpha,d}; the genus-0 layer comes
    /// from the f0 recursion and positive genus from the tables.
    pub fn build_g_density(&self, alpha: u32, d: i64) -> Result<DiffPoly, CohftError> {
        let trunc = self.trunc;
        if d == -1 {
            let mut density = DiffPoly::zero(trunc);
            for nu in 0..self.n {
                density = density
                    .add(&DiffPoly::var((nu + 1) as u32, 0, trunc).scale(&self.eta[alpha as usize - 1][nu]))
                    .expect("truncation policies match");
            }
            return Ok(density);
        }
        let d = u32::try_from(d)
            .map_err(|_| CohftError::Validation(format!("d = {} below -1", d)))?;
        let mut density = self
            .principal_densities(alpha, d)?
            .pop()
            .expect("recursion returns d+1 densities");
        for g in 1..=trunc.genus_cap {
            if !self.covered(g, d) {
                return Err(CohftError::TableGap(format!(
                    "descriptor '{}' has no coverage for genus {} at (alpha={}, d={})",
                    self.raw.name, g, alpha, d
                )));
            }
            for (key, value) in &self.table {
                if key.g != g || key.alpha != alpha || key.d != d {
                    continue;
                }
                // divide by the multiset stabilizer: the assembly sums over
                // ordered insertion tuples with 1/n!
                let mut mult_fact = Rat::one();
                let mut run = 1u32;
                for i in 1..=key.insertions.len() {
                    if i < key.insertions.len() && key.insertions[i] == key.insertions[i - 1] {
                        run += 1;
                    } else {
                        for f in 2..=run {
                            mult_fact *= Rat::from_integer(f.into());
                        }
                        run = 1;
                    }
                }
                let mut m = Monomial::eps(2 * g);
                for (ai, bi) in &key.insertions {
                    m = m.mul(&Monomial::var(VarIndex::new(*ai, *bi)));
                }
                density = density
                    .add(&DiffPoly::from_monomial(m, value / mult_fact, trunc))
                    .expect("truncation policies match");
            }
        }
        Ok(density)
    }

    pub fn build_g(&self, alpha: u32, d: i64) -> Result<LocalFunctional, CohftError> {
        let density = self.build_g_density(alpha, d)?;
        Ok(LocalFunctional::with_label(
            density,
            format!("gbar[{},{}]", alpha, d),
        ))
    }
}

/// Recover h from its Hessian for a series with no constant or linear part:
/// on the degree-k homogeneous layer, h = (1/k(k-1)) u^m u^n Hess_{mn}(h).
/// Fails if the candidate does not reproduce the Hessian (within the
/// degrees the truncation can represent).
fn integrate_hessian(
    hess: &[Vec<DiffPoly>],
    n: usize,
    trunc: TruncationPolicy,
) -> Result<DiffPoly, String> {
    let mut h = DiffPoly::zero(trunc);
    let mut contracted = DiffPoly::zero(trunc);
    for m in 0..n {
        for nu in 0..n {
            let um = DiffPoly::var((m + 1) as u32, 0, trunc);
            let un = DiffPoly::var((nu + 1) as u32, 0, trunc);
            contracted = contracted
                .add(&um.mul(&un).and_then(|p| p.mul(&hess[m][nu])).expect("truncation policies match"))
                .expect("truncation policies match");
        }
    }
    for (mono, c) in contracted.terms() {
        let k = mono.total_var_degree();
        debug_assert!(k >= 2);
        let scale = Rat::from_integer((k as i64 * (k as i64 - 1)).into());
        h.add_term(mono.clone(), c / scale);
    }
    // verify, ignoring degrees the cap cannot represent
    for m in 0..n {
        for nu in 0..n {
            let back = h
                .partial(VarIndex::new((m + 1) as u32, 0))
                .partial(VarIndex::new((nu + 1) as u32, 0));
            let diff = back.sub(&hess[m][nu]).expect("truncation policies match");
            for (mono, _) in diff.terms() {
                if mono.total_var_degree() + 2 <= trunc.u0_cap {
                    return Err(format!(
                        "Hessian mismatch at entry ({},{}), degree {}",
                        m + 1,
                        nu + 1,
                        mono.total_var_degree()
                    ));
                }
            }
        }
    }
    Ok(h)
}

fn trivial_kdv_raw() -> RawDescriptor {
    let mut metadata = BTreeMap::new();
    metadata.insert(
        "description".to_string(),
        "trivial rank-1 theory; the hierarchy is KdV".to_string(),
    );
    metadata.insert("semisimple".to_string(), "true".to_string());
    metadata.insert(
        "table_provenance".to_string(),
        "genus-1 coefficients pinned by the d=0 recursion and pairwise commutativity"
            .to_string(),
    );
    let mut table = Vec::new();
    // genus-1 entries: one psi^2-free insertion pattern per d, coefficient 1/24
    for d in 0..=4u32 {
        let mut insertions = vec![(1u32, 2u32)];
        for _ in 0..d {
            insertions.push((1, 0));
        }
        table.push(RawTableEntry {
            g: 1,
            alpha: 1,
            d,
            insertions,
            value: "1/24".to_string(),
        });
    }
    RawDescriptor {
        format_version: 1,
        name: "trivial_kdv".to_string(),
        metadata,
        n_fields: 1,
        eta: vec![vec!["1".to_string()]],
        unit_coords: vec!["1".to_string()],
        q: vec!["0".to_string()],
        delta: "0".to_string(),
        r: vec!["0".to_string()],
        f0: "1/6*u[1,0]^3".to_string(),
        require_unit_first: true,
        table,
        coverage: vec![RawCoverage { g: 1, d_max: 4 }],
    }
}

fn two_field_genus0_raw() -> RawDescriptor {
    let mut metadata = BTreeMap::new();
    metadata.insert(
        "description".to_string(),
        "rank-2 homogeneous potential with nonzero mu and r; genus-0 only".to_string(),
    );
    metadata.insert("semisimple".to_string(), "true (at generic points)".to_string());
    RawDescriptor {
        format_version: 1,
        name: "two_field_genus0".to_string(),
        metadata,
        n_fields: 2,
        eta: vec![
            vec!["0".to_string(), "1".to_string()],
            vec!["1".to_string(), "0".to_string()],
        ],
        unit_coords: vec!["1".to_string(), "0".to_string()],
        q: vec!["0".to_string(), "1/3".to_string()],
        delta: "1/3".to_string(),
        r: vec!["1".to_string(), "0".to_string()],
        f0: "1/2*u[1,0]^2*u[2,0] + 1/24*u[2,0]^4".to_string(),
        require_unit_first: true,
        table: Vec::new(),
        coverage: Vec::new(),
    }
}
