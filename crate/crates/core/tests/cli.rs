use std::process::Command;

use imq_fastmv::{halton2d, write_points};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_imq-fastmv"))
}

#[test]
fn errtrend_writes_csv() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("err.csv");
    let status = bin().args(["--mode", "errtrend", "--out"]).arg(&out).status().unwrap();
    assert!(status.success());
    let text = std::fs::read_to_string(&out).unwrap();
    let mut lines = text.lines();
    assert!(lines.next().unwrap().starts_with("# config mode=errtrend"));
    assert_eq!(lines.next().unwrap(), "rho_x,M,case,E,bound");
    let rows: Vec<Vec<&str>> = lines.map(|l| l.split(',').collect()).collect();
    assert_eq!(rows.len(), 2 * 3 * 200);
    for r in &rows {
        assert_eq!(r.len(), 5);
        let rho: f64 = r[0].parse().unwrap();
        assert!((1.1 - 1e-9..=21.0 + 1e-9).contains(&rho));
        assert!(["5", "10", "20"].contains(&r[1]));
        assert!(r[2] == "a" || r[2] == "b");
    }
}

#[test]
fn bench_on_point_file() {
    let dir = tempfile::tempdir().unwrap();
    let pts = dir.path().join("pts.txt");
    write_points(&pts, &halton2d(1500)).unwrap();
    let out = bin()
        .args(["--mode", "bench", "--levels", "2", "--reps", "1", "--points"])
        .arg(&pts)
        .output()
        .unwrap();
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    let row = text.lines().nth(2).unwrap();
    let fields: Vec<&str> = row.split(',').collect();
    assert_eq!(&fields[..3], ["1500", "10", "2"]);
    let err: f64 = fields[5].parse().unwrap();
    assert!(err < 5e-8, "{err}");
}

#[test]
fn verify_reports_each_check() {
    let out = bin().args(["--mode", "verify", "--n", "800", "--threads", "2"]).output().unwrap();
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.lines().next().unwrap().contains("threads=2"));
    let checks: Vec<&str> = text.lines().filter(|l| l.starts_with('[')).collect();
    assert!(checks.len() >= 6);
    assert!(checks.iter().all(|l| l.starts_with("[PASS]")), "{text}");
}

#[test]
fn solve_reports_status() {
    let out = bin()
        .args(["--mode", "solve", "--n", "200", "--t", "0.05", "--m", "20", "--levels", "1"])
        .output()
        .unwrap();
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.contains("# status=converged"));
}

#[test]
fn usage_errors() {
    for args in [
        &["--levels", "0"][..],
        &["--t", "-1"],
        &["--mode", "fast"],
        &["--n", "abc"],
    ] {
        let out = bin().args(args).output().unwrap();
        assert!(!out.status.success(), "{args:?}");
        assert!(!out.stderr.is_empty());
    }
}

#[test]
fn malformed_point_file() {
    let dir = tempfile::tempdir().unwrap();
    let pts = dir.path().join("bad.txt");
    std::fs::write(&pts, "# sites\n0.1 0.2\n0.3\n").unwrap();
    let out = bin().args(["--mode", "bench", "--reps", "1", "--points"]).arg(&pts).output().unwrap();
    assert!(!out.status.success());
    let err = String::from_utf8(out.stderr).unwrap();
    assert!(err.contains("bad.txt:3"), "{err}");
}
