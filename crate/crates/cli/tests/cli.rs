use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn fibidx(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_fibidx")).args(args).env_remove("FIBIDX_LOG").output().expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn write_config(dir: &Path, body: &str) -> String {
    let p = dir.join("config.toml");
    fs::write(&p, body).unwrap();
    p.to_string_lossy().into_owned()
}

const FAST: &str = r#"
schema_version = 1

[checks]
seed = 7

[checks.trials]
trace_defect = 5
residue = 5
fedosov = 3
chains = 3
transgression = 3
finite_models = 2
conjugations = 3
"#;

#[test]
fn pair_reports_the_winding_difference() {
    let o = fibidx(&["pair", "--wp", "2", "--wm", "-1"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let s = stdout(&o);
    assert!(s.contains("criterion  1: PASS") && s.contains("[theorem check]"), "{s}");
}

#[test]
fn oracle_matches_the_expected_integer() {
    let o = fibidx(&["oracle", "--wp", "-2", "--wm", "1", "--cutoff", "64"]);
    assert!(o.status.success());
    assert!(stdout(&o).contains("criterion  9: PASS"));
}

#[test]
fn check_writes_csv_and_json() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), FAST);
    let out = dir.path().join("run");
    let o = fibidx(&["--config", &cfg, "--out", out.to_str().unwrap(), "check", "zeta"]);
    assert!(o.status.success(), "{}", stdout(&o));
    let csv = fs::read_to_string(out.join("checks.csv")).unwrap();
    assert_eq!(csv.lines().next().unwrap(), "name,formula,oracle,delta,tolerance,pass");
    assert!(csv.lines().count() > 5);
    let json: serde_json::Value = serde_json::from_str(&fs::read_to_string(out.join("report.json")).unwrap()).unwrap();
    assert!(json.get("kappa").is_some());
    assert_eq!(json["tolerances"].as_array().unwrap().len(), 12);
    assert_eq!(json["settings"]["seed"], 7);
    assert!(out.join("summary.txt").exists());
}

#[test]
fn output_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), FAST);
    let mut files = vec![];
    for name in ["a", "b"] {
        let out = dir.path().join(name);
        let o = fibidx(&["--config", &cfg, "--seed", "11", "--out", out.to_str().unwrap(), "check", "fedosov"]);
        assert!(o.status.success(), "{}", stdout(&o));
        files.push((fs::read(out.join("checks.csv")).unwrap(), fs::read(out.join("report.json")).unwrap()));
    }
    assert_eq!(files[0], files[1]);
}

#[test]
fn xcomplex_group_runs() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), FAST);
    let o = fibidx(&["--config", &cfg, "check", "xcomplex"]);
    assert!(o.status.success(), "{}", stdout(&o));
    let s = stdout(&o);
    assert!(s.contains("criterion  7: PASS") && s.contains("criterion  8: PASS"), "{s}");
}

#[test]
fn tolerance_scale_can_force_failures() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), FAST);
    let o = fibidx(&["--config", &cfg, "--tol-scale", "1e-30", "check", "zeta"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stdout(&o).contains("FAIL trace-defect"));
    let bad = fibidx(&["--tol-scale", "-1", "check", "zeta"]);
    assert!(!bad.status.success());
}

#[test]
fn wrong_schema_version_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "schema_version = 99\n");
    let o = fibidx(&["--config", &cfg, "check", "zeta"]);
    assert!(!o.status.success());
    assert!(String::from_utf8_lossy(&o.stderr).contains("schema_version"));
    let cfg = write_config(dir.path(), "schema_version = 1\n[checks]\nunknown = 3\n");
    assert!(!fibidx(&["--config", &cfg, "check", "zeta"]).status.success());
}

#[test]
fn family_reports_kappa() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        r#"
schema_version = 1
[checks.family]
families = [{ a = 1, c = 1, mass = 1.0 }]
grids = [16]
general_path = false
"#,
    );
    let out = dir.path().join("fam");
    let o = fibidx(&["--config", &cfg, "--out", out.to_str().unwrap(), "family"]);
    assert!(o.status.success(), "{}", stdout(&o));
    assert!(stdout(&o).contains("kappa 1.000000000000"));
    let json: serde_json::Value = serde_json::from_str(&fs::read_to_string(out.join("report.json")).unwrap()).unwrap();
    assert!((json["kappa"].as_f64().unwrap() - 1.0).abs() < 1e-12);
}

#[test]
fn log_level_comes_from_the_environment() {
    let o = Command::new(env!("CARGO_BIN_EXE_fibidx"))
        .args(["check", "zeta"])
        .env("FIBIDX_LOG", "info")
        .output()
        .unwrap();
    assert!(String::from_utf8_lossy(&o.stderr).contains("criterion 2"));
}
