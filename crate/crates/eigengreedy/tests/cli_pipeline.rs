//! End-to-end runs of the compiled binary over the text formats, including
//! the exit-code contract of the verification sweep.

use std::path::Path;
use std::process::Command;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_eigengreedy"))
}

fn run_ok(args: &[&str]) {
    let out = bin().args(args).output().expect("binary runs");
    assert!(
        out.status.success(),
        "command {:?} failed:\n{}",
        args,
        String::from_utf8_lossy(&out.stderr)
    );
}

#[test]
fn full_pipeline_example1() {
    let dir = tempfile::tempdir().unwrap();
    let path = |name: &str| dir.path().join(name).to_string_lossy().into_owned();
    let model = path("model.txt");
    let grid = path("grid.csv");
    let gap_rom = path("gap.rom");
    let eig_rom = path("eig.rom");
    let report = path("eval.csv");
    let verify_csv = path("verify.csv");

    run_ok(&["gen", "example1", "--out", &model]);
    run_ok(&["grid", "--model", &model, "--counts", "11", "--out", &grid]);
    run_ok(&[
        "build-gap",
        "--model",
        &model,
        "--grid",
        &grid,
        "--tol",
        "1e-7",
        "--out",
        &gap_rom,
        "--store-basis",
        "--trace",
        &path("gap_trace.csv"),
    ]);
    run_ok(&[
        "build-eig",
        "--model",
        &model,
        "--grid",
        &grid,
        "--gap-rom",
        &gap_rom,
        "--tol",
        "1e-7",
        "--out",
        &eig_rom,
        "--store-basis",
    ]);
    run_ok(&[
        "eval", "--eig-rom", &eig_rom, "--gap-rom", &gap_rom, "--mu-file", &grid, "--out", &report,
    ]);
    let eval_text = std::fs::read_to_string(&report).unwrap();
    assert!(eval_text.lines().count() >= 12);
    assert!(eval_text.contains("certified"));

    let verify = bin()
        .args([
            "verify",
            "--model",
            &model,
            "--gap-rom",
            &gap_rom,
            "--eig-rom",
            &eig_rom,
            "--grid",
            &grid,
            "--out",
            &verify_csv,
        ])
        .output()
        .unwrap();
    assert_eq!(verify.status.code(), Some(0), "verify must pass cleanly");

    run_ok(&[
        "bench",
        "--model",
        &model,
        "--rom",
        &eig_rom,
        "--grid",
        &grid,
        "--repetitions",
        "1",
        "--out",
        &path("bench.csv"),
    ]);
    let bench = std::fs::read_to_string(path("bench.csv")).unwrap();
    assert!(bench.contains("rom_mean") && bench.contains("speedup"));

    // ROM-only timing mode
    run_ok(&[
        "bench",
        "--model",
        &model,
        "--rom",
        &eig_rom,
        "--grid",
        &grid,
        "--repetitions",
        "1",
        "--skip-fom",
        "--out",
        &path("bench2.csv"),
    ]);

    // Tampered basis (swapped coordinate rows): certified claims must fail
    // and the exit code must flag the violation.
    tamper_basis_rows(Path::new(&eig_rom));
    let verify = bin()
        .args([
            "verify",
            "--model",
            &model,
            "--gap-rom",
            &gap_rom,
            "--eig-rom",
            &eig_rom,
            "--grid",
            &grid,
        ])
        .output()
        .unwrap();
    assert_eq!(
        verify.status.code(),
        Some(2),
        "tampered ROM must be detected: {}",
        String::from_utf8_lossy(&verify.stderr)
    );
}

/// Swaps the first two coordinate rows of the stored basis block, which
/// keeps the block orthonormal while corrupting every lifted vector.
fn tamper_basis_rows(rom: &Path) {
    let text = std::fs::read_to_string(rom).unwrap();
    let mut lines: Vec<String> = text.lines().map(String::from).collect();
    let idx = lines
        .iter()
        .position(|l| l.starts_with("basis "))
        .expect("basis block present");
    lines.swap(idx + 1, idx + 2);
    std::fs::write(rom, lines.join("\n") + "\n").unwrap();
}

#[test]
fn builds_are_deterministic_given_seed() {
    let dir = tempfile::tempdir().unwrap();
    let path = |name: &str| dir.path().join(name).to_string_lossy().into_owned();
    let model = path("model.txt");
    let grid = path("grid.csv");
    run_ok(&["gen", "example1", "--out", &model]);
    run_ok(&["grid", "--model", &model, "--counts", "7", "--out", &grid]);
    for rom in ["a.rom", "b.rom"] {
        run_ok(&[
            "build-gap",
            "--model",
            &model,
            "--grid",
            &grid,
            "--tol",
            "1e-6",
            "--seed",
            "42",
            "--out",
            &path(rom),
        ]);
    }
    let a = std::fs::read(path("a.rom")).unwrap();
    let b = std::fs::read(path("b.rom")).unwrap();
    assert_eq!(a, b, "identical config and seed must give identical ROMs");
}

#[test]
fn eval_works_without_basis_but_verify_requires_it() {
    let dir = tempfile::tempdir().unwrap();
    let path = |name: &str| dir.path().join(name).to_string_lossy().into_owned();
    let model = path("model.txt");
    let grid = path("grid.csv");
    run_ok(&["gen", "example1", "--out", &model]);
    run_ok(&["grid", "--model", &model, "--counts", "7", "--out", &grid]);
    let gap_rom = path("gap.rom");
    let eig_rom = path("eig.rom");
    // built WITHOUT --store-basis: online-only ROMs
    run_ok(&[
        "build-gap", "--model", &model, "--grid", &grid, "--tol", "1e-6", "--out", &gap_rom,
    ]);
    run_ok(&[
        "build-eig", "--model", &model, "--grid", &grid, "--gap-rom", &gap_rom, "--tol", "1e-6",
        "--out", &eig_rom,
    ]);
    // online evaluation needs no basis
    run_ok(&[
        "eval", "--eig-rom", &eig_rom, "--gap-rom", &gap_rom, "--mu-file", &grid, "--out",
        &path("eval.csv"),
    ]);
    // lifting does
    let out = bin()
        .args([
            "eval", "--eig-rom", &eig_rom, "--gap-rom", &gap_rom, "--mu-file", &grid, "--lift",
            &path("vectors.csv"),
        ])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(1));
    // and the oracle verification sweep does too
    let out = bin()
        .args([
            "verify", "--model", &model, "--gap-rom", &gap_rom, "--eig-rom", &eig_rom, "--grid",
            &grid,
        ])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("store-basis"));
}

#[test]
fn corrupted_rom_reports_operational_error() {
    let dir = tempfile::tempdir().unwrap();
    let rom = dir.path().join("bad.rom");
    std::fs::write(&rom, "rom 1\nsize n 3 p 1 Q garbage r 0 coverage 1\n").unwrap();
    let out = bin()
        .args([
            "eval",
            "--eig-rom",
            rom.to_str().unwrap(),
            "--gap-rom",
            rom.to_str().unwrap(),
            "--mu-file",
            rom.to_str().unwrap(),
        ])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(1));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("error"), "diagnostics missing: {err}");
}

#[test]
fn empty_grid_verify_is_an_error() {
    let dir = tempfile::tempdir().unwrap();
    let path = |name: &str| dir.path().join(name).to_string_lossy().into_owned();
    let model = path("model.txt");
    run_ok(&["gen", "example1", "--out", &model]);
    let grid = path("empty.csv");
    std::fs::write(&grid, "# no points\n").unwrap();
    let gap_rom = path("gap.rom");
    // build requires a nonempty grid as well
    let out = bin()
        .args([
            "build-gap",
            "--model",
            &model,
            "--grid",
            &grid,
            "--tol",
            "1e-6",
            "--out",
            &gap_rom,
        ])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn gen_lagrange_and_rational_rejection() {
    let dir = tempfile::tempdir().unwrap();
    let path = |name: &str| dir.path().join(name).to_string_lossy().into_owned();
    let model = path("lagrange.txt");
    run_ok(&[
        "gen",
        "lagrange",
        "--nodes",
        "-0.5,0.0,0.5",
        "--out",
        &model,
    ]);
    let grid = path("grid.csv");
    run_ok(&["grid", "--model", &model, "--counts", "5", "--out", &grid]);
    // the certified machinery rejects rational families
    let out = bin()
        .args([
            "build-gap",
            "--model",
            &model,
            "--grid",
            &grid,
            "--tol",
            "1e-6",
            "--out",
            &path("gap.rom"),
        ])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(1));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("rational"), "unexpected diagnostics: {err}");
}
