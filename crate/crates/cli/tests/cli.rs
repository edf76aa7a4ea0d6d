use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use tempfile::TempDir;

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_hyperorbit"));
    c.env_remove("ORBIT_LOG");
    c
}

fn write_config(dir: &Path, name: &str, body: &str) -> PathBuf {
    let p = dir.join(name);
    fs::write(&p, body).unwrap();
    p
}

fn run(cmd: &mut Command) -> (i32, String, String) {
    let Output { status, stdout, stderr } = cmd.output().expect("binary runs");
    (
        status.code().expect("exit code"),
        String::from_utf8(stdout).unwrap(),
        String::from_utf8(stderr).unwrap(),
    )
}

const POWER_1: &str = "alpha = 1.0\ndimension = 2\nprofile = \"power\"\n";

#[test]
fn check_potential_exit_codes() {
    let dir = TempDir::new().unwrap();
    let ok = write_config(dir.path(), "ok.toml", POWER_1);
    let (code, out, _) = run(bin().arg("check-potential").arg(&ok));
    assert_eq!(code, 0);
    let v: serde_json::Value = serde_json::from_str(&out).unwrap();
    assert!(v["checks"].as_array().unwrap().iter().all(|c| c["passed"] == true));

    let strong = write_config(
        dir.path(),
        "strong.toml",
        "alpha = 2.5\ndimension = 2\nprofile = \"power\"\n",
    );
    let (code, _, err) = run(bin().arg("check-potential").arg(&strong));
    assert_eq!(code, 1);
    assert!(err.contains("(V1) range violated"), "{err}");

    // the override flag reaches the same check
    let (code, _, err) = run(bin().arg("check-potential").arg(&ok).args(["--alpha-override", "2.5"]));
    assert_eq!(code, 1);
    assert!(err.contains("(V1) range violated"));

    let missing = write_config(dir.path(), "missing.toml", "alpha = 1.0\ndimension = 2\n");
    assert_eq!(run(bin().arg("check-potential").arg(&missing)).0, 2);
    assert_eq!(
        run(bin().arg("check-potential").arg(dir.path().join("absent.toml"))).0,
        2
    );
}

#[test]
fn solve_end_to_end_writes_artifacts() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(dir.path(), "c.toml", POWER_1);
    let out = dir.path().join("run");
    let (code, stdout, err) = run(bin()
        .arg("solve")
        .arg(&cfg)
        .args(["--R", "16", "--H", "1", "--n", "512", "--out"])
        .arg(&out));
    assert_eq!(code, 0, "{err}");
    for f in ["solve.json", "loop.csv", "orbit.csv", "orbit.json"] {
        assert!(out.join(f).is_file(), "{f} missing");
    }
    let v: serde_json::Value = serde_json::from_str(&stdout).unwrap();
    assert_eq!(v["schema"], 1);
    assert_eq!(v["report"]["status"], "converged");
    assert!(v["report"]["constraint_residual"].as_f64().unwrap() < 1e-9);
    assert_eq!(fs::read_to_string(out.join("solve.json")).unwrap(), stdout);

    let header = fs::read_to_string(out.join("orbit.csv")).unwrap();
    assert!(header.starts_with("t,"));
}

#[test]
fn solve_is_deterministic() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(dir.path(), "c.toml", POWER_1);
    let a = run(bin()
        .arg("solve")
        .arg(&cfg)
        .args(["--R", "8", "--n", "128", "--out"])
        .arg(dir.path().join("a")));
    let b = run(bin()
        .arg("solve")
        .arg(&cfg)
        .args(["--R", "8", "--n", "128", "--out"])
        .arg(dir.path().join("b")));
    assert_eq!(a.0, 0);
    assert_eq!(a.1, b.1);
    assert_eq!(
        fs::read(dir.path().join("a/orbit.csv")).unwrap(),
        fs::read(dir.path().join("b/orbit.csv")).unwrap()
    );
}

#[test]
fn solve_input_errors() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(dir.path(), "c.toml", POWER_1);
    let out = dir.path().join("o");
    assert_eq!(
        run(bin().arg("solve").arg(&cfg).args(["--R", "0", "--out"]).arg(&out)).0,
        2
    );
    assert_eq!(
        run(bin().arg("solve").arg(&cfg).args(["--R", "-3", "--out"]).arg(&out)).0,
        2
    );
    // no radius anywhere
    assert_eq!(run(bin().arg("solve").arg(&cfg).arg("--out").arg(&out)).0, 2);
    assert_eq!(
        run(bin()
            .arg("solve")
            .arg(&cfg)
            .args(["--R", "4", "--H", "0", "--out"])
            .arg(&out))
        .0,
        2
    );
    assert_eq!(
        run(bin()
            .arg("solve")
            .arg(&cfg)
            .args(["--R", "4", "--tol-kkt", "-1", "--out"])
            .arg(&out))
        .0,
        2
    );
    // outside the solver's hypothesis range
    let (code, _, err) = run(bin()
        .arg("solve")
        .arg(&cfg)
        .args(["--R", "4", "--alpha-override", "2.5", "--out"])
        .arg(&out));
    assert_eq!(code, 1);
    assert!(err.contains("(V1) range violated"));
}

#[test]
fn non_convergence_keeps_best_so_far_artifacts() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(
        dir.path(),
        "c.toml",
        "alpha = 1.0\ndimension = 2\nprofile = \"power\"\nmax_outer = 1\nmax_inner = 2\n",
    );
    let out = dir.path().join("o");
    let (code, stdout, err) = run(bin()
        .arg("solve")
        .arg(&cfg)
        .args(["--R", "16", "--n", "8", "--out"])
        .arg(&out));
    assert_eq!(code, 4, "{err}");
    assert!(err.contains("best-so-far"));
    let v: serde_json::Value = serde_json::from_str(&stdout).unwrap();
    assert_eq!(v["report"]["status"], "max_iterations");
    assert!(out.join("loop.csv").is_file());
}

#[test]
fn sweep_writes_record_and_reports_verdict() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(dir.path(), "c.toml", POWER_1);
    let out = dir.path().join("s");
    let (code, stdout, _) = run(bin()
        .arg("sweep")
        .arg(&cfg)
        .args(["--R0", "4", "--doublings", "3", "--n", "128", "--jobs", "2", "--out"])
        .arg(&out));
    let v: serde_json::Value = serde_json::from_str(&stdout).unwrap();
    let pass = v["verdicts"]["hyperbolicity"].as_bool().unwrap();
    assert_eq!(code, if pass { 0 } else { 1 });
    assert_eq!(v["entries"].as_array().unwrap().len(), 4);
    assert!(out.join("sweep.json").is_file());
    assert!(out.join("orbit_R4.csv").is_file());

    let bad = write_config(dir.path(), "bad.toml", "alpha = 1.0\nprofile = \"power\"\n");
    assert_eq!(run(bin().arg("sweep").arg(&bad).arg("--out").arg(&out)).0, 2);
    assert_eq!(
        run(bin().arg("sweep").arg(&cfg).args(["--R0", "-1", "--out"]).arg(&out)).0,
        2
    );
}

#[test]
fn oracles() {
    let dir = TempDir::new().unwrap();
    let (code, out, _) = run(bin().args([
        "oracle", "kepler", "--mass", "1", "--delta", "1", "--L", "1", "--H", "0.5",
    ]));
    assert_eq!(code, 0);
    let v: serde_json::Value = serde_json::from_str(&out).unwrap();
    let zeta = v["hyperbola"]["zeta_inf"].as_f64().unwrap();
    assert!((zeta - std::f64::consts::FRAC_PI_4).abs() < 1e-15);
    assert!(v["lenz_identity_residual"].as_f64().unwrap() < 1e-12);

    let (code, out, _) = run(bin()
        .args(["oracle", "circle", "--alpha", "4", "--H", "1", "--out"])
        .arg(dir.path()));
    assert_eq!(code, 0);
    let v: serde_json::Value = serde_json::from_str(&out).unwrap();
    assert_eq!(v["radius"].as_f64().unwrap(), 1.0);
    assert_eq!(v["omega"].as_f64().unwrap(), 2.0);
    assert!(dir.path().join("circle.csv").is_file());

    let (code, _, err) = run(bin().args(["oracle", "circle", "--alpha", "1.5"]));
    assert_eq!(code, 2);
    assert!(err.contains("requires alpha > 2"));

    let (code, _, _) = run(bin().args(["oracle", "kepler", "--out"]).arg(dir.path()));
    assert_eq!(code, 0);
    let csv = fs::read_to_string(dir.path().join("kepler.csv")).unwrap();
    assert_eq!(csv.lines().count(), 202);
}

#[test]
fn unknown_arguments_are_usage_errors() {
    assert_eq!(run(bin().arg("frobnicate")).0, 2);
    assert_eq!(run(bin().args(["solve"])).0, 2);
}
