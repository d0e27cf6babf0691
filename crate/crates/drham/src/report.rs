//! Machine-readable check reports (versioned JSON schema) and text/LaTeX
//! rendering of reports and of the exported algebraic objects.

use serde::Serialize;

use crate::diffop::{DiffOperator, MatrixDiffOperator};
use crate::poisson::Verdict;
use crate::ring::{rat_to_string, DiffPoly, Rat};

pub const REPORT_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, Serialize)]
pub struct CheckRecord {
    pub check_name: String,
    pub descriptor: String,
    pub status: String,
    pub epsilon_order: Option<u32>,
    pub witness: Option<String>,
}

#[derive(Debug, Clone, Serialize)]
pub struct Report {
    pub format_version: u32,
    pub descriptor: String,
    pub genus_cap: u32,
    pub u0_cap: u32,
    pub d_max: i64,
    pub seed: u64,
    pub checks: Vec<CheckRecord>,
}

impl Report {
    pub fn new(descriptor: &str, genus_cap: u32, u0_cap: u32, d_max: i64, seed: u64) -> Self {
        Report {
            format_version: REPORT_FORMAT_VERSION,
            descriptor: descriptor.to_string(),
            genus_cap,
            u0_cap,
            d_max,
            seed,
            checks: Vec::new(),
        }
    }

    pub fn push(&mut self, check_name: impl Into<String>, verdict: &Verdict) {
        let check_name = check_name.into();
        let record = match verdict {
            Verdict::Ok => CheckRecord {
                check_name,
                descriptor: self.descriptor.clone(),
                status: "ok".to_string(),
                epsilon_order: None,
                witness: None,
            },
            Verdict::Fail {
                epsilon_order,
                witness,
                ..
            } => CheckRecord {
                check_name,
                descriptor: self.descriptor.clone(),
                status: "fail".to_string(),
                epsilon_order: *epsilon_order,
                witness: Some(witness.clone()),
            },
        };
        self.checks.push(record);
    }

    /// Deterministic record order: by check name, then original order.
    pub fn sort(&mut self) {
        self.checks
            .sort_by(|a, b| a.check_name.cmp(&b.check_name));
    }

    pub fn all_ok(&self) -> bool {
        self.checks.iter().all(|c| c.status == "ok")
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        out.push_str(&format!(
            "descriptor {} (genus cap {}, degree cap {}, d_max {})\n",
            self.descriptor, self.genus_cap, self.u0_cap, self.d_max
        ));
        for c in &self.checks {
            if c.status == "ok" {
                out.push_str(&format!("ok    {}\n", c.check_name));
            } else {
                let eps = c
                    .epsilon_order
                    .map(|e| format!(" at eps^{}", e))
                    .unwrap_or_default();
                out.push_str(&format!(
                    "FAIL  {}{}: {}\n",
                    c.check_name,
                    eps,
                    c.witness.as_deref().unwrap_or("")
                ));
            }
        }
        out.push_str(&format!(
            "{}\n",
            if self.all_ok() {
                "all checks passed"
            } else {
                "some checks FAILED"
            }
        ));
        out
    }

    pub fn to_latex(&self) -> String {
        let mut out = String::new();
        out.push_str("\\begin{tabular}{llll}\n");
        out.push_str("check & status & $\\varepsilon$-order & witness \\\\\n\\hline\n");
        for c in &self.checks {
            let eps = c
                .epsilon_order
                .map(|e| e.to_string())
                .unwrap_or_else(|| "--".to_string());
            let witness = c
                .witness
                .as_deref()
                .map(latex_escape)
                .unwrap_or_else(|| "--".to_string());
            out.push_str(&format!(
                "\\texttt{{{}}} & {} & {} & {} \\\\\n",
                latex_escape(&c.check_name),
                c.status,
                eps,
                witness
            ));
        }
        out.push_str("\\end{tabular}\n");
        out
    }
}

fn latex_escape(s: &str) -> String {
    s.replace('\\', "\\textbackslash ")
        .replace('_', "\\_")
        .replace('^', "\\^{}")
        .replace('{', "\\{")
        .replace('}', "\\}")
}

fn rat_to_latex(c: &Rat) -> String {
    if c.is_integer() {
        format!("{}", c.numer())
    } else if c.numer().sign() == num_bigint::Sign::Minus {
        format!("-\\frac{{{}}}{{{}}}", -c.numer(), c.denom())
    } else {
        format!("\\frac{{{}}}{{{}}}", c.numer(), c.denom())
    }
}

pub fn diffpoly_to_latex(f: &DiffPoly) -> String {
    if f.is_zero() {
        return "0".to_string();
    }
    let single = f.max_alpha().unwrap_or(1) <= 1;
    let mut parts = Vec::new();
    for (m, c) in f.terms() {
        let mut factors = Vec::new();
        let mag = if c < &Rat::from_integer(0.into()) { -c } else { c.clone() };
        if !mag.is_integer() || mag != Rat::from_integer(1.into()) || m.is_var_free() {
            factors.push(rat_to_latex(&mag));
        }
        if m.eps_power == 1 {
            factors.push("\\varepsilon".to_string());
        } else if m.eps_power > 1 {
            factors.push(format!("\\varepsilon^{{{}}}", m.eps_power));
        }
        for (v, e) in &m.powers {
            let base = if single {
                if v.d == 0 {
                    "u".to_string()
                } else {
                    format!("u_{{{}}}", v.d)
                }
            } else if v.d == 0 {
                format!("u^{{{}}}", v.alpha)
            } else {
                format!("u^{{{}}}_{{{}}}", v.alpha, v.d)
            };
            if *e == 1 {
                factors.push(base);
            } else {
                factors.push(format!("({})^{{{}}}", base, e));
            }
        }
        let sign = if c < &Rat::from_integer(0.into()) { "-" } else { "+" };
        parts.push((sign, factors.join(" ")));
    }
    let mut out = String::new();
    for (i, (sign, body)) in parts.iter().enumerate() {
        if i == 0 {
            if *sign == "-" {
                out.push('-');
            }
        } else {
            out.push_str(&format!(" {} ", sign));
        }
        out.push_str(body);
    }
    out
}

pub fn operator_to_latex(op: &DiffOperator) -> String {
    if op.is_zero() {
        return "0".to_string();
    }
    let parts: Vec<String> = op
        .orders()
        .map(|(j, f)| {
            let coeff = diffpoly_to_latex(f);
            let wrapped = if f.num_terms() > 1 {
                format!("\\left({}\\right)", coeff)
            } else {
                coeff
            };
            match *j {
                0 => wrapped,
                1 => format!("{} \\partial_x", wrapped),
                _ => format!("{} \\partial_x^{{{}}}", wrapped, j),
            }
        })
        .collect();
    parts.join(" + ")
}

pub fn matrix_operator_to_latex(k: &MatrixDiffOperator) -> String {
    let mut out = String::from("\\begin{pmatrix}\n");
    for a in 0..k.n() {
        let row: Vec<String> = (0..k.n()).map(|b| operator_to_latex(k.entry(a, b))).collect();
        out.push_str(&row.join(" & "));
        out.push_str(" \\\\\n");
    }
    out.push_str("\\end{pmatrix}\n");
    out
}

/// Canonical JSON form of an operator: order -> canonical coefficient string.
#[derive(Debug, Clone, Serialize)]
pub struct OperatorJson {
    pub orders: Vec<(u32, String)>,
}

pub fn operator_to_json(op: &DiffOperator) -> OperatorJson {
    OperatorJson {
        orders: op
            .orders()
            .map(|(j, f)| (*j, f.to_canonical_string()))
            .collect(),
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct MatrixOperatorJson {
    pub n: usize,
    pub entries: Vec<Vec<OperatorJson>>,
}

pub fn matrix_operator_to_json(k: &MatrixDiffOperator) -> MatrixOperatorJson {
    MatrixOperatorJson {
        n: k.n(),
        entries: (0..k.n())
            .map(|a| (0..k.n()).map(|b| operator_to_json(k.entry(a, b))).collect())
            .collect(),
    }
}

pub fn rat_matrix_to_text(m: &[Vec<Rat>]) -> String {
    m.iter()
        .map(|row| {
            let cells: Vec<String> = row.iter().map(rat_to_string).collect();
            format!("[{}]", cells.join(", "))
        })
        .collect::<Vec<_>>()
        .join("\n")
}
