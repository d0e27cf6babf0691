//! End-to-end tests for the drham binary: report schema stability,
//! determinism, exit codes, and descriptor file loading.

use std::path::PathBuf;
use std::process::{Command, Output};

use drham::cohft::CohFTDescriptor;
use drham::ring::TruncationPolicy;

fn drham(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_drham"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn stdout(out: &Output) -> String {
    String::from_utf8(out.stdout.clone()).expect("utf-8 output")
}

fn golden_path(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("tests/golden")
        .join(name)
}

fn assert_golden(name: &str, actual: &str) {
    let path = golden_path(name);
    let expected = std::fs::read_to_string(&path)
        .unwrap_or_else(|e| panic!("golden file {} unreadable: {}", path.display(), e));
    assert_eq!(actual, expected, "output differs from golden file {}", name);
}

#[test]
fn check_json_report_matches_golden() {
    let out = drham(&[
        "check",
        "--cohft",
        "trivial_kdv",
        "--checks",
        "poisson,compat",
        "--output",
        "json",
    ]);
    assert!(out.status.success());
    assert_golden("check_trivial_poisson.json", &stdout(&out));
}

#[test]
fn check_text_report_matches_golden() {
    let out = drham(&[
        "check",
        "--cohft",
        "two_field_genus0",
        "-G",
        "0",
        "--d-max",
        "1",
        "--checks",
        "poisson,compat,dispersionless",
    ]);
    assert!(out.status.success());
    assert_golden("check_two_field_text.txt", &stdout(&out));
}

#[test]
fn identical_configuration_is_byte_identical() {
    let args = [
        "check",
        "--cohft",
        "trivial_kdv",
        "--checks",
        "poisson",
        "--seed",
        "42",
        "--output",
        "json",
    ];
    let first = drham(&args);
    let second = drham(&args);
    assert!(first.status.success());
    assert_eq!(first.stdout, second.stdout);
}

#[test]
fn export_gbar_and_kdr_match_golden() {
    let gbar = drham(&["export", "gbar"]);
    assert!(gbar.status.success());
    assert_eq!(stdout(&gbar), "1/6*u^3 + 1/48*eps^2*u*u_2\n");

    let kdr = drham(&["export", "kdr"]);
    assert!(kdr.status.success());
    assert_golden("export_kdr.txt", &stdout(&kdr));
}

#[test]
fn failing_check_exits_one() {
    let desc = CohFTDescriptor::builtin("trivial_kdv", TruncationPolicy::new(1, 6)).unwrap();
    let mut raw = desc.raw().clone();
    // the d = 1 entry feeds the generating functional behind the operator
    for entry in &mut raw.table {
        if entry.d == 1 {
            entry.value = "1/23".to_string();
        }
    }
    let dir = std::env::temp_dir().join("drham-cli-corrupt");
    std::fs::create_dir_all(&dir).unwrap();
    let path = dir.join("corrupt_kdv.json");
    std::fs::write(&path, serde_json::to_string_pretty(&raw).unwrap()).unwrap();
    let out = drham(&[
        "check",
        "--cohft",
        path.to_str().unwrap(),
        "--checks",
        "recursion",
        "--d-max",
        "1",
    ]);
    assert_eq!(out.status.code(), Some(1));
    assert!(stdout(&out).contains("FAIL"));
}

#[test]
fn unknown_descriptor_exits_two() {
    let out = drham(&["check", "--cohft", "no_such_descriptor"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn descriptor_file_round_trip_via_search_path() {
    let desc = CohFTDescriptor::builtin("trivial_kdv", TruncationPolicy::new(1, 6)).unwrap();
    let dir = std::env::temp_dir().join("drham-cli-roundtrip");
    std::fs::create_dir_all(&dir).unwrap();
    std::fs::write(dir.join("kdv_copy.json"), desc.to_json_string()).unwrap();
    let out = Command::new(env!("CARGO_BIN_EXE_drham"))
        .args(["export", "gbar", "--cohft", "kdv_copy.json"])
        .env("DRHAM_COHFT_PATH", &dir)
        .output()
        .expect("binary runs");
    assert!(out.status.success());
    assert_eq!(stdout(&out), "1/6*u^3 + 1/48*eps^2*u*u_2\n");
}
