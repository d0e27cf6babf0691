use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use drham::cohft::CohFTDescriptor;
use drham::hierarchy::{
    build_bundle, build_kdr_alt, build_principal, check_commuting, check_dispersionless,
    check_recursion, verify_kdr_identity, HierarchyBundle, PrincipalBundle,
};
use drham::poisson::{is_compatible, is_poisson};
use drham::report::{
    matrix_operator_to_json, matrix_operator_to_latex, rat_matrix_to_text, Report,
};
use drham::ring::{rat_to_string, TruncationPolicy};

#[derive(Parser)]
#[command(
    name = "drham",
    about = "Exact construction and verification of the double ramification hierarchy's bihamiltonian structure",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run identity checks and report verdicts; exit 0 iff all selected checks pass.
    Check {
        #[command(flatten)]
        opts: CommonOpts,
        /// Comma-separated subset of checks to run.
        #[arg(long, value_delimiter = ',', default_value = "all")]
        checks: Vec<CheckKind>,
    },
    /// Print one of the constructed objects.
    Export {
        #[command(flatten)]
        opts: CommonOpts,
        /// One of: gbar, kdr, kdr_alt, k2_genus0, hamiltonian(alpha,d)
        object: String,
    },
    /// Summarize the descriptor: N, eta, mu, r, A, coverage, truncation.
    Describe {
        #[command(flatten)]
        opts: CommonOpts,
    },
}

#[derive(Args)]
struct CommonOpts {
    /// Builtin descriptor name (trivial_kdv, two_field_genus0) or a file path.
    #[arg(long, default_value = "trivial_kdv")]
    cohft: String,
    /// Genus cap G; identities are verified modulo eps^(2G+1).
    #[arg(short = 'G', long = "genus-cap", default_value_t = 1)]
    genus_cap: u32,
    /// Degree cap M in the undifferentiated variables.
    #[arg(short = 'M', long = "u0-cap", default_value_t = 6)]
    u0_cap: u32,
    /// Largest Hamiltonian index d covered by the checks.
    #[arg(long = "d-max", default_value_t = 2)]
    d_max: i64,
    #[arg(long, value_enum, default_value_t = OutputFormat::Text)]
    output: OutputFormat,
    /// Seed recorded in the report for reproducibility of randomized suites.
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum OutputFormat {
    Text,
    Json,
    Latex,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum CheckKind {
    Poisson,
    Compat,
    Recursion,
    Dispersionless,
    #[value(name = "kdr_identity")]
    KdrIdentity,
    Commuting,
    All,
}

fn resolve_descriptor_path(name: &str) -> Option<PathBuf> {
    let direct = PathBuf::from(name);
    if direct.exists() {
        return Some(direct);
    }
    if let Ok(search) = std::env::var("DRHAM_COHFT_PATH") {
        for dir in search.split(':').filter(|s| !s.is_empty()) {
            let candidate = PathBuf::from(dir).join(name);
            if candidate.exists() {
                return Some(candidate);
            }
        }
    }
    None
}

fn load_descriptor(opts: &CommonOpts) -> Result<CohFTDescriptor, String> {
    let trunc = TruncationPolicy::new(opts.genus_cap, opts.u0_cap);
    match CohFTDescriptor::builtin(&opts.cohft, trunc) {
        Ok(d) => return Ok(d),
        Err(drham::cohft::CohftError::Parse(_)) => {}
        Err(e) => return Err(e.to_string()),
    }
    let path = resolve_descriptor_path(&opts.cohft)
        .ok_or_else(|| format!("descriptor '{}' is not builtin and no such file exists (searched DRHAM_COHFT_PATH)", opts.cohft))?;
    CohFTDescriptor::load_file(&path, trunc).map_err(|e| e.to_string())
}

fn build(opts: &CommonOpts) -> Result<(HierarchyBundle, PrincipalBundle), String> {
    let descriptor = load_descriptor(opts)?;
    let principal = build_principal(&descriptor, opts.d_max).map_err(|e| e.to_string())?;
    let bundle = build_bundle(descriptor, opts.d_max + 1).map_err(|e| e.to_string())?;
    Ok((bundle, principal))
}

fn run_check(opts: &CommonOpts, checks: &[CheckKind]) -> Result<(Report, bool), String> {
    let (bundle, principal) = build(opts)?;
    let all = checks.contains(&CheckKind::All);
    let selected = |k: CheckKind| all || checks.contains(&k);
    let mut report = Report::new(
        bundle.descriptor().name(),
        opts.genus_cap,
        opts.u0_cap,
        opts.d_max,
        opts.seed,
    );
    if selected(CheckKind::Poisson) {
        report.push("poisson(kdr)", &is_poisson(bundle.kdr()));
        report.push("poisson(k1)", &is_poisson(bundle.k1()));
    }
    if selected(CheckKind::Compat) {
        report.push("compat(k1,kdr)", &is_compatible(bundle.k1(), bundle.kdr()));
    }
    if selected(CheckKind::Recursion) {
        for ((alpha, d), verdict) in check_recursion(&bundle, opts.d_max) {
            report.push(format!("recursion(alpha={},d={})", alpha, d), &verdict);
        }
    }
    if selected(CheckKind::Dispersionless) {
        report.push(
            "dispersionless",
            &check_dispersionless(&bundle, &principal),
        );
    }
    if selected(CheckKind::KdrIdentity) {
        let verdict = verify_kdr_identity(&bundle, &principal).map_err(|e| e.to_string())?;
        report.push("kdr_identity", &verdict);
    }
    if selected(CheckKind::Commuting) {
        for (((a1, d1), (a2, d2)), verdict) in check_commuting(&bundle, opts.d_max) {
            report.push(
                format!("commuting(({},{}),({},{}))", a1, d1, a2, d2),
                &verdict,
            );
        }
    }
    report.sort();
    let ok = report.all_ok();
    Ok((report, ok))
}

fn parse_hamiltonian_object(object: &str) -> Option<(u32, i64)> {
    let inner = object
        .strip_prefix("hamiltonian(")
        .and_then(|s| s.strip_suffix(')'))
        .or_else(|| object.strip_prefix("hamiltonian:"))?;
    let mut parts = inner.split(',');
    let alpha = parts.next()?.trim().parse().ok()?;
    let d = parts.next()?.trim().parse().ok()?;
    if parts.next().is_some() {
        return None;
    }
    Some((alpha, d))
}

fn run_export(opts: &CommonOpts, object: &str) -> Result<String, String> {
    let (bundle, principal) = build(opts)?;
    let matrix = |k: &drham::MatrixDiffOperator| -> String {
        match opts.output {
            OutputFormat::Text => {
                let mut out = String::new();
                for a in 0..k.n() {
                    for b in 0..k.n() {
                        out.push_str(&format!("[{},{}] {}\n", a + 1, b + 1, k.entry(a, b)));
                    }
                }
                out
            }
            OutputFormat::Json => {
                serde_json::to_string_pretty(&matrix_operator_to_json(k)).expect("serializes")
            }
            OutputFormat::Latex => matrix_operator_to_latex(k),
        }
    };
    match object {
        "gbar" => {
            let density = bundle.gbar().density();
            Ok(match opts.output {
                OutputFormat::Text => format!("{}\n", density),
                OutputFormat::Json => format!("\"{}\"", density.to_canonical_string()),
                OutputFormat::Latex => {
                    format!("{}\n", drham::report::diffpoly_to_latex(density))
                }
            })
        }
        "kdr" => Ok(matrix(bundle.kdr())),
        "kdr_alt" => Ok(matrix(&build_kdr_alt(&bundle))),
        "k2_genus0" => Ok(matrix(principal.k2_genus0())),
        other => {
            let (alpha, d) = parse_hamiltonian_object(other).ok_or_else(|| {
                format!(
                    "unknown object '{}'; expected gbar, kdr, kdr_alt, k2_genus0, or hamiltonian(alpha,d)",
                    other
                )
            })?;
            let h = bundle
                .g_functional(alpha, d)
                .ok_or_else(|| format!("hamiltonian ({},{}) not built; raise --d-max", alpha, d))?;
            let density = h.density();
            Ok(match opts.output {
                OutputFormat::Text => format!("{}\n", density),
                OutputFormat::Json => format!("\"{}\"", density.to_canonical_string()),
                OutputFormat::Latex => {
                    format!("{}\n", drham::report::diffpoly_to_latex(density))
                }
            })
        }
    }
}

fn run_describe(opts: &CommonOpts) -> Result<String, String> {
    let descriptor = load_descriptor(opts)?;
    let mut out = String::new();
    out.push_str(&format!("descriptor: {}\n", descriptor.name()));
    out.push_str(&format!("n_fields: {}\n", descriptor.n()));
    out.push_str(&format!(
        "truncation: genus cap {}, degree cap {}\n",
        opts.genus_cap, opts.u0_cap
    ));
    out.push_str(&format!("eta:\n{}\n", rat_matrix_to_text(descriptor.eta())));
    let mu: Vec<String> = descriptor
        .hom()
        .mu_vec()
        .iter()
        .map(rat_to_string)
        .collect();
    out.push_str(&format!("mu: ({})\n", mu.join(", ")));
    let r: Vec<String> = descriptor.hom().r.iter().map(rat_to_string).collect();
    out.push_str(&format!("r: ({})\n", r.join(", ")));
    out.push_str(&format!(
        "A (lower indices):\n{}\n",
        rat_matrix_to_text(descriptor.a_lower())
    ));
    out.push_str(&format!(
        "A (eta-raised):\n{}\n",
        rat_matrix_to_text(descriptor.a_upper())
    ));
    if descriptor.coverage().is_empty() {
        out.push_str("table coverage: genus 0 only\n");
    } else {
        for c in descriptor.coverage() {
            out.push_str(&format!(
                "table coverage: genus {} up to d = {}\n",
                c.g, c.d_max
            ));
        }
    }
    for (k, v) in &descriptor.raw().metadata {
        out.push_str(&format!("metadata.{}: {}\n", k, v));
    }
    Ok(out)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match cli.command {
        Command::Check { opts, checks } => match run_check(&opts, &checks) {
            Ok((report, ok)) => {
                match opts.output {
                    OutputFormat::Text => print!("{}", report.to_text()),
                    OutputFormat::Json => println!("{}", report.to_json()),
                    OutputFormat::Latex => print!("{}", report.to_latex()),
                }
                if ok {
                    ExitCode::SUCCESS
                } else {
                    ExitCode::FAILURE
                }
            }
            Err(e) => {
                eprintln!("error: {}", e);
                ExitCode::from(2)
            }
        },
        Command::Export { opts, object } => match run_export(&opts, &object) {
            Ok(doc) => {
                print!("{}", doc);
                ExitCode::SUCCESS
            }
            Err(e) => {
                eprintln!("error: {}", e);
                ExitCode::from(2)
            }
        },
        Command::Describe { opts } => match run_describe(&opts) {
            Ok(doc) => {
                print!("{}", doc);
                ExitCode::SUCCESS
            }
            Err(e) => {
                eprintln!("error: {}", e);
                ExitCode::from(2)
            }
        },
    }
}
