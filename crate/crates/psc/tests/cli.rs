use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn psc(args: &[&str], env_out: Option<&Path>) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_psc"));
    cmd.args(args).env_remove("PSC_OUT_DIR");
    if let Some(d) = env_out {
        cmd.env("PSC_OUT_DIR", d);
    }
    cmd.output().unwrap()
}

fn write_spec(dir: &Path, body: &str) -> String {
    let p = dir.join("spec.json");
    fs::write(&p, body).unwrap();
    p.to_str().unwrap().to_string()
}

const SMALL: &str = r#"{"model": {"kind": "quadratic", "dim": 4, "kappa": 4}, "trials": 2, "max_iters": 50, "x0_std": 1.0}"#;

#[test]
fn invalid_spec_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let spec = write_spec(
        dir.path(),
        r#"{"model": {"kind": "quadratic", "dim": 4, "kappa": 4}, "trials": 0}"#,
    );
    let out = psc(&["run", &spec, "--out", dir.path().to_str().unwrap()], None);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).starts_with("psc: "));
}

#[test]
fn unknown_field_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let spec = write_spec(
        dir.path(),
        r#"{"model": {"kind": "quadratic", "dim": 4, "kappa": 4}, "trails": 3}"#,
    );
    let out = psc(
        &["check", &spec, "--out", dir.path().to_str().unwrap()],
        None,
    );
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn missing_spec_file_exits_2() {
    let out = psc(&["rates", "/nonexistent/spec.json", "--out", "/tmp"], None);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn zero_jobs_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let spec = write_spec(dir.path(), SMALL);
    let out = psc(
        &[
            "run",
            &spec,
            "--jobs",
            "0",
            "--out",
            dir.path().to_str().unwrap(),
        ],
        None,
    );
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn output_dir_falls_back_to_env() {
    let dir = tempfile::tempdir().unwrap();
    let spec = write_spec(dir.path(), SMALL);
    let out_dir = dir.path().join("env-out");
    let out = psc(&["run", &spec], Some(&out_dir));
    assert_eq!(
        out.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    for f in ["trace.csv", "report.json", "loss.svg", "displacement.svg"] {
        assert!(out_dir.join(f).is_file(), "{f} missing");
    }
}

#[test]
fn flag_overrides_env() {
    let dir = tempfile::tempdir().unwrap();
    let spec = write_spec(dir.path(), SMALL);
    let (env_dir, flag_dir) = (dir.path().join("env"), dir.path().join("flag"));
    let out = psc(
        &["run", &spec, "--out", flag_dir.to_str().unwrap()],
        Some(&env_dir),
    );
    assert_eq!(out.status.code(), Some(0));
    assert!(flag_dir.join("trace.csv").is_file());
    assert!(!env_dir.exists());
}

#[test]
fn seed_flag_changes_trace() {
    let dir = tempfile::tempdir().unwrap();
    let spec = write_spec(dir.path(), SMALL);
    let read = |seed: &str| {
        let d = dir.path().join(seed);
        let out = psc(
            &["run", &spec, "--seed", seed, "--out", d.to_str().unwrap()],
            None,
        );
        assert_eq!(out.status.code(), Some(0));
        fs::read(d.join("trace.csv")).unwrap()
    };
    assert_ne!(read("1"), read("2"));
}

#[test]
fn out_of_regime_check_exits_1() {
    let dir = tempfile::tempdir().unwrap();
    let spec = write_spec(
        dir.path(),
        r#"{"model": {"kind": "additive", "m": 6, "d": 6, "sigma_min_a1": 1, "sigma_max_a1": 2,
            "sigma_max_a2": [5.0]}, "max_iters": 100}"#,
    );
    let out = psc(
        &["check", &spec, "--out", dir.path().to_str().unwrap()],
        None,
    );
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stdout).contains("violated"));
    assert!(dir.path().join("report.json").is_file());
}
