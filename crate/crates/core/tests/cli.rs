use std::path::{Path, PathBuf};
use std::process::Command;

use basis_mpc::problem_file::ProblemFile;

fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("fixtures")
        .join(name)
}

fn run(args: &[&str]) -> (i32, String) {
    let out = Command::new(env!("CARGO_BIN_EXE_basis-mpc"))
        .args(args)
        .output()
        .unwrap();
    (
        out.status.code().unwrap(),
        String::from_utf8_lossy(&out.stdout).into_owned(),
    )
}

fn run_cmd(cmd: &str, problem: &Path, out: &Path, extra: &[&str]) -> (i32, String) {
    let mut args = vec![
        cmd,
        "--problem",
        problem.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
    ];
    args.extend_from_slice(extra);
    run(&args)
}

#[test]
fn fixtures_round_trip() {
    for name in [
        "double_integrator.toml",
        "di_tight.toml",
        "certify_violation.toml",
        "asymmetric.toml",
    ] {
        let text = std::fs::read_to_string(fixture(name)).unwrap();
        let doc = ProblemFile::parse(&text).unwrap();
        assert_eq!(ProblemFile::parse(&doc.emit()).unwrap(), doc, "{name}");
    }
}

#[test]
fn simulate_writes_expected_csv() {
    let dir = tempfile::tempdir().unwrap();
    let (code, _) = run_cmd(
        "simulate",
        &fixture("double_integrator.toml"),
        dir.path(),
        &["--steps", "10"],
    );
    assert_eq!(code, 0);
    let csv = std::fs::read_to_string(dir.path().join("simulate.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next().unwrap(), "t,x1,x2,u1,J_mpc,iters");
    let rows: Vec<&str> = lines.collect();
    assert_eq!(rows.len(), 10 * 10);
    for r in &rows {
        assert_eq!(r.split(',').count(), 1 + 2 + 1 + 2);
    }
    let first: Vec<&str> = rows[0].split(',').collect();
    assert_eq!(first[1], "1.0000000000000000e0");
    // 17 significant digits
    assert_eq!(
        first[4]
            .split('e')
            .next()
            .unwrap()
            .replace(['.', '-'], "")
            .len(),
        17
    );
}

#[test]
fn simulate_output_is_byte_identical_across_runs() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    for d in [&a, &b] {
        let (code, _) = run_cmd(
            "simulate",
            &fixture("di_tight.toml"),
            d.path(),
            &["--steps", "15"],
        );
        assert_eq!(code, 0);
    }
    let ra = std::fs::read(a.path().join("simulate.csv")).unwrap();
    let rb = std::fs::read(b.path().join("simulate.csv")).unwrap();
    assert_eq!(ra, rb);
}

#[test]
fn certify_reports_the_known_violation() {
    let dir = tempfile::tempdir().unwrap();
    let (code, stdout) = run_cmd(
        "certify",
        &fixture("certify_violation.toml"),
        dir.path(),
        &[],
    );
    assert_eq!(code, 0);
    assert!(stdout.starts_with("Violated row = 0"), "{stdout}");
    let t: f64 = stdout
        .split("t = ")
        .nth(1)
        .unwrap()
        .split(' ')
        .next()
        .unwrap()
        .parse()
        .unwrap();
    assert!((t - 1.5).abs() < 1e-9, "{t}");
    let report = std::fs::read_to_string(dir.path().join("certify.txt")).unwrap();
    // the second row, with bound -0.7, holds
    assert_eq!(report.matches("Violated").count(), 1);
}

#[test]
fn solve_and_oracle_agree_on_the_tight_case() {
    let dir = tempfile::tempdir().unwrap();
    let (code, stdout) = run_cmd("solve", &fixture("di_tight.toml"), dir.path(), &[]);
    assert_eq!(code, 0, "{stdout}");
    let j_si: f64 = stdout
        .split("J = ")
        .nth(1)
        .unwrap()
        .split(' ')
        .next()
        .unwrap()
        .parse()
        .unwrap();
    let (code, stdout) = run_cmd(
        "oracle",
        &fixture("di_tight.toml"),
        dir.path(),
        &["--grid-step", "0.01"],
    );
    assert_eq!(code, 0);
    let j_grid: f64 = stdout.trim().trim_start_matches("J = ").parse().unwrap();
    assert!(j_si >= j_grid * (1.0 - 1e-4));
    assert!((j_si - j_grid) / j_grid < 0.05);
    assert!(dir.path().join("solution.toml").exists());
    assert!(dir.path().join("oracle.csv").exists());
}

#[test]
fn horizon_and_precompute_succeed() {
    let dir = tempfile::tempdir().unwrap();
    let (code, stdout) = run_cmd("horizon", &fixture("asymmetric.toml"), dir.path(), &[]);
    assert_eq!(code, 0);
    assert!(stdout.starts_with("T_c = "));
    let text = std::fs::read_to_string(dir.path().join("horizon.txt")).unwrap();
    assert!(text.contains("[asymmetric]"));
    let (code, _) = run_cmd(
        "precompute-poly",
        &fixture("double_integrator.toml"),
        dir.path(),
        &["--s", "3"],
    );
    assert_eq!(code, 0);
    assert!(dir.path().join("poly.toml").exists());
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path();
    // unknown command
    assert_eq!(
        run(&["bogus", "--problem", "x", "--out", out.to_str().unwrap()]).0,
        2
    );
    // missing file
    assert_eq!(
        run_cmd("solve", Path::new("/nonexistent.toml"), out, &[]).0,
        2
    );
    // bad flag value
    assert_eq!(
        run_cmd(
            "solve",
            &fixture("double_integrator.toml"),
            out,
            &["--eps", "-1"]
        )
        .0,
        2
    );
    // malformed document
    let bad = out.join("bad.toml");
    std::fs::write(&bad, "A = [[1.0]\n").unwrap();
    assert_eq!(run_cmd("solve", &bad, out, &[]).0, 2);
    // dimension mismatch
    let text = std::fs::read_to_string(fixture("double_integrator.toml")).unwrap();
    std::fs::write(&bad, text.replace("x0 = [1.0, 0.0]", "x0 = [1.0]")).unwrap();
    assert_eq!(run_cmd("solve", &bad, out, &[]).0, 2);
    // unconverged
    assert_eq!(
        run_cmd(
            "solve",
            &fixture("di_tight.toml"),
            out,
            &["--max-iter", "1"]
        )
        .0,
        1
    );
    // infeasible
    let text = std::fs::read_to_string(fixture("asymmetric.toml")).unwrap();
    std::fs::write(&bad, text.replace("x0 = [-0.2]", "x0 = [-5.0]")).unwrap();
    assert_eq!(run_cmd("solve", &bad, out, &[]).0, 1);
}

#[test]
fn library_entry_point_matches_binary() {
    let dir = tempfile::tempdir().unwrap();
    let p = fixture("certify_violation.toml");
    let code = basis_mpc::cli::run([
        "basis-mpc",
        "certify",
        "--problem",
        p.to_str().unwrap(),
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert_eq!(code, 0);
}
