use std::fs;
use std::path::Path;

use sinhflow_cli::{run_command, EXIT_OK, EXIT_VALIDATION};
use tempfile::TempDir;

fn run(args: &[&str]) -> i32 {
    let argv: Vec<String> = std::iter::once("sinhflow").chain(args.iter().copied()).map(String::from).collect();
    run_command(argv)
}

fn run_in(dir: &Path, cmd: &str, sets: &[&str]) -> i32 {
    let mut args = vec![cmd.to_string(), "-o".into(), dir.display().to_string()];
    for s in sets {
        args.push("-s".into());
        args.push(s.to_string());
    }
    let refs: Vec<&str> = args.iter().map(String::as_str).collect();
    run(&refs)
}

/// Header, data rows, trailing `# config_sha256=… n=…` line.
fn check_csv(path: &Path, header: &str, n: usize) -> Vec<Vec<f64>> {
    let text = fs::read_to_string(path).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], header);
    let meta = lines.last().unwrap();
    let hash = meta
        .strip_prefix("# config_sha256=")
        .and_then(|s| s.strip_suffix(&format!(" n={n}")))
        .unwrap_or_else(|| panic!("bad metadata line {meta:?}"));
    assert_eq!(hash.len(), 64);
    assert!(hash.chars().all(|c| c.is_ascii_hexdigit()));
    let width = header.split(',').count();
    lines[1..]
        .iter()
        .filter(|l| !l.starts_with('#'))
        .map(|l| {
            let row: Vec<f64> = l.split(',').map(|v| v.parse().unwrap()).collect();
            assert_eq!(row.len(), width, "{l}");
            row
        })
        .collect()
}

fn check_pgm(path: &Path, n: usize) {
    let text = fs::read_to_string(path).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("P2"));
    assert!(lines.next().unwrap().starts_with("# min="));
    assert_eq!(lines.next(), Some(format!("{n} {n}").as_str()));
    assert_eq!(lines.next(), Some("255"));
    let values: Vec<u32> = lines.flat_map(|l| l.split_whitespace()).map(|v| v.parse().unwrap()).collect();
    assert_eq!(values.len(), n * n);
    assert!(values.iter().all(|&v| v <= 255));
    assert!(values.contains(&0) && values.contains(&255));
}

#[test]
fn verify_passes_on_defaults() {
    let dir = TempDir::new().unwrap();
    assert_eq!(run_in(dir.path(), "verify", &["n=32"]), EXIT_OK);
}

#[test]
fn usage_errors_exit_with_validation_code() {
    assert_eq!(run(&["no-such-command"]), EXIT_VALIDATION);
    assert_eq!(run(&["flow", "--bogus"]), EXIT_VALIDATION);
    assert_eq!(run(&["--help"]), EXIT_OK);
}

#[test]
fn invalid_settings_exit_with_validation_code() {
    let dir = TempDir::new().unwrap();
    assert_eq!(run_in(dir.path(), "barrier", &["eps_list=0.2"]), EXIT_VALIDATION);
    assert_eq!(run_in(dir.path(), "flow", &["rho2=30"]), EXIT_VALIDATION);
    assert_eq!(run_in(dir.path(), "flow", &["n=48"]), EXIT_VALIDATION);
    assert!(!dir.path().join("trajectory.csv").exists());
}

#[test]
fn missing_config_file_is_a_validation_error() {
    assert_eq!(run(&["flow", "-c", "/nonexistent/sinhflow.cfg"]), EXIT_VALIDATION);
}

#[test]
fn config_file_and_overrides_combine() {
    let dir = TempDir::new().unwrap();
    let cfg = dir.path().join("run.cfg");
    fs::write(&cfg, "n = 64\np = 0.25 0.5\n").unwrap();
    let out = dir.path().join("out");
    let code = run(&["green", "-c", cfg.to_str().unwrap(), "-o", out.to_str().unwrap()]);
    assert_eq!(code, EXIT_OK);
    let rows = check_csv(&out.join("green.csv"), "px,py,A,b1,b2,fit_error,integral", 64);
    assert_eq!(rows.len(), 1);
    let r = &rows[0];
    assert_eq!((r[0], r[1]), (0.25, 0.5));
    assert!((r[2] - sinhflow::green::SQUARE_TORUS_A).abs() < 1e-4);
    assert!(r[3].abs() < 1e-6 && r[4].abs() < 1e-6);
    check_pgm(&out.join("green.pgm"), 64);

    // the same key from the file and from --set collides
    let code = run(&["green", "-c", cfg.to_str().unwrap(), "-s", "n=128", "-o", out.to_str().unwrap()]);
    assert_eq!(code, EXIT_VALIDATION);
}

#[test]
fn flow_writes_deterministic_artifacts() {
    let dir = TempDir::new().unwrap();
    let sets = ["n=32", "t_end=0.05", "seed=5", "sample_every=2"];
    assert_eq!(run_in(dir.path(), "flow", &sets), EXIT_OK);
    let csv = dir.path().join("trajectory.csv");
    let rows = check_csv(&csv, sinhflow::flow::TRAJECTORY_HEADER, 32);
    assert!(rows.len() >= 2);
    assert!(rows.windows(2).all(|w| w[1][1] <= w[0][1] + 1e-12), "energy column must not increase");
    let mass0 = rows[0][2];
    assert!(rows.iter().all(|r| ((r[2] - mass0) / mass0).abs() < 1e-6));
    check_pgm(&dir.path().join("u_final.pgm"), 32);

    let first = fs::read(&csv).unwrap();
    assert_eq!(run_in(dir.path(), "flow", &sets), EXIT_OK);
    assert_eq!(fs::read(&csv).unwrap(), first);

    assert_eq!(run_in(dir.path(), "flow", &["n=32", "t_end=0.05", "seed=6", "sample_every=2"]), EXIT_OK);
    assert_ne!(fs::read(&csv).unwrap(), first);
}

#[test]
fn mfe_scan_writes_every_point() {
    let dir = TempDir::new().unwrap();
    assert_eq!(run_in(dir.path(), "mfe", &["n=64", "p_resolution=4"]), EXIT_OK);
    let rows = check_csv(&dir.path().join("scan.csv"), sinhflow::mfe::SCAN_HEADER, 64);
    assert!(rows.len() >= 16);
    check_pgm(&dir.path().join("w_p0.pgm"), 64);
}
