use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn vqr(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_vqr"))
        .args(args)
        .env("VQR_LOG", "error")
        .output()
        .unwrap()
}

fn ok(args: &[&str]) -> Value {
    let out = vqr(args);
    assert_eq!(
        out.status.code(),
        Some(0),
        "{args:?}: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    serde_json::from_slice(&out.stdout).unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn generate(dir: &Path, n: &str, seed: &str) -> std::path::PathBuf {
    ok(&["gen", "--preset", "specified", "--n", n, "--seed", seed, "--output", s(dir)]);
    dir.join("data.csv")
}

#[test]
fn gen_then_qr1d_is_quasi_specified() {
    let dir = tempfile::tempdir().unwrap();
    let data = generate(dir.path(), "200", "7");
    let out = dir.path().join("fit");
    let v = ok(&["qr1d", "--input", s(&data), "--output", s(&out)]);
    assert_eq!(v["summary"]["quasi_spec"], true);
    assert!(out.join("solution.json").exists() && out.join("curves.csv").exists());
    let check = ok(&["check", "--input", s(&out.join("solution.json"))]);
    assert_eq!(check["pass"], true);
}

#[test]
fn vqr_writes_solution_and_contact_files() {
    let dir = tempfile::tempdir().unwrap();
    let data = generate(dir.path(), "32", "1");
    let out = dir.path().join("vqr");
    let v = ok(&[
        "vqr", "--input", s(&data), "--grid-size", "16", "--backend", "exact", "--output", s(&out),
        "--x-query", "-0.5", "--x-query", "0.5",
    ]);
    assert_eq!(v["summary"]["contact_pass"], true);
    for f in ["solution.json", "contact.json", "contact.csv", "curves.csv"] {
        assert!(out.join(f).exists(), "{f} missing");
    }
    let curves = std::fs::read_to_string(out.join("curves.csv")).unwrap();
    assert_eq!(curves.lines().next(), Some("x1,t,q"));
    assert_eq!(curves.lines().count(), 1 + 2 * 16);
    let check = ok(&["check", "--input", s(&out.join("solution.json"))]);
    assert_eq!(check["pass"], true, "{check}");
}

#[test]
fn equiv_gap_is_small() {
    let dir = tempfile::tempdir().unwrap();
    let data = generate(dir.path(), "12", "3");
    let v = ok(&["equiv", "--input", s(&data), "--grid-size", "8", "--output", s(dir.path())]);
    assert!(v["summary"]["gap"].as_f64().unwrap() <= 1e-6);
    assert!(dir.path().join("equiv.json").exists());
}

#[test]
fn vq_and_entropic_round_trip_through_check() {
    let dir = tempfile::tempdir().unwrap();
    let data = generate(dir.path(), "20", "5");
    for (name, extra) in [("vq", vec![]), ("vqr", vec!["--backend", "entropic"])] {
        let out = dir.path().join(name);
        let mut args = vec![name, "--input", s(&data), "--grid-size", "8", "--output", s(&out)];
        args.extend(extra);
        ok(&args);
        let check = ok(&["check", "--input", s(&out.join("solution.json"))]);
        assert_eq!(check["pass"], true, "{name}: {check}");
    }
}

#[test]
fn gen_is_deterministic() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    generate(a.path(), "50", "11");
    generate(b.path(), "50", "11");
    for f in ["data.csv", "generator.json"] {
        assert_eq!(std::fs::read(a.path().join(f)).unwrap(), std::fs::read(b.path().join(f)).unwrap());
    }
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let data = generate(dir.path(), "10", "0");
    let code = |args: &[&str]| vqr(args).status.code();
    assert_eq!(code(&["vqr", "--input", s(&data), "--epsilon", "0.1"]), Some(1));
    assert_eq!(code(&["vqr", "--input", s(&data), "--bogus"]), Some(1));
    assert_eq!(code(&["vqr", "--input", s(&data), "--seed", "3"]), Some(1));
    assert_eq!(code(&["qr1d", "--input", s(&data), "--levels", "0.5", "--grid-size", "3"]), Some(1));
    assert_eq!(code(&["vqr", "--input", s(&dir.path().join("missing.csv"))]), Some(1));
    assert_eq!(code(&["gen", "--preset", "nope"]), Some(1));
    assert_eq!(code(&["--help"]), Some(0));
    let out = dir.path().join("e");
    assert_eq!(
        code(&[
            "vqr", "--input", s(&data), "--backend", "entropic", "--epsilon", "1e-4", "--max-iter", "1",
            "--output", s(&out),
        ]),
        Some(2)
    );
}

#[test]
fn corrupted_solution_fails_check() {
    let dir = tempfile::tempdir().unwrap();
    let data = generate(dir.path(), "16", "2");
    ok(&["vqr", "--input", s(&data), "--grid-size", "8", "--output", s(dir.path())]);
    let path = dir.path().join("solution.json");
    let mut v: Value = serde_json::from_str(&std::fs::read_to_string(&path).unwrap()).unwrap();
    let psi = v["psi"][0].as_f64().unwrap();
    v["psi"][0] = (psi - 1.0).into();
    std::fs::write(&path, serde_json::to_string(&v).unwrap()).unwrap();
    let out = vqr(&["check", "--input", s(&path)]);
    assert_eq!(out.status.code(), Some(1));
}
