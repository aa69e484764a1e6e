use std::fs;
use std::path::Path;
use std::process::Command;

use spinpol_cli::config::{ScenarioConfig, BUNDLED, CANONICAL};
use spinpol_cli::{CliError, EXIT_NUMERICAL, EXIT_USAGE};

fn spinpol(args: &[&str]) -> (i32, String, String) {
    let out = Command::new(env!("CARGO_BIN_EXE_spinpol")).args(args).output().unwrap();
    (
        out.status.code().unwrap(),
        String::from_utf8(out.stdout).unwrap(),
        String::from_utf8(out.stderr).unwrap(),
    )
}

fn write_config(dir: &Path, name: &str, text: &str) -> String {
    let p = dir.join(name);
    fs::write(&p, text).unwrap();
    p.to_str().unwrap().to_string()
}

fn json(path: &Path) -> serde_json::Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

#[test]
fn bundled_configs_round_trip() {
    for (name, text) in BUNDLED {
        let a = ScenarioConfig::parse(text).unwrap();
        let b = ScenarioConfig::parse(&a.to_toml()).unwrap();
        assert_eq!(a, b, "{name}");
        let (va, vb) = (a.validate().unwrap(), b.validate().unwrap());
        assert_eq!(va.pipeline, vb.pipeline, "{name}");
        assert_eq!(va.config_hash, vb.config_hash, "{name}");
    }
}

#[test]
fn stage_with_both_strengths_is_rejected() {
    let text = CANONICAL.replace("coupling = 0.5\nphase_pi = 0.5", "coupling = 0.5\nincident_field = 5e8\nphase_pi = 0.5");
    let err = ScenarioConfig::parse(&text).unwrap().validate().unwrap_err();
    assert!(matches!(&err, CliError::Config(m) if m.starts_with("stage1")), "{err}");
}

#[test]
fn field_stage_matches_calibration() {
    let text = CANONICAL.replace("coupling = 0.5\nphase_pi = 0.5", "incident_field = 550e6\nphase_pi = 0.5");
    let sc = ScenarioConfig::parse(&text).unwrap().validate().unwrap();
    assert!((sc.pipeline.stage1.magnitude() - 0.48).abs() < 0.01);
}

#[test]
fn unknown_key_and_parameter_reported() {
    let err = ScenarioConfig::parse(&CANONICAL.replace("beta = 0.1", "beta = 0.1\nbetta = 0.2")).unwrap_err();
    assert!(err.to_string().contains("betta"));
    let text = format!("{CANONICAL}\n[sweep.axis1]\nparameter = \"g3\"\nstart = 0\nstop = 1\ncount = 2\n[sweep.axis2]\nparameter = \"g2\"\nstart = 0\nstop = 1\ncount = 2\n");
    let err = ScenarioConfig::parse(&text).unwrap().validate().unwrap_err().to_string();
    assert!(err.contains("sweep.axis1.parameter") && err.contains("drift_fraction"), "{err}");
}

#[test]
fn exit_code_mapping() {
    assert_eq!(CliError::Numerical("x".into()).exit_code(), EXIT_NUMERICAL);
    assert_eq!(CliError::Config("x".into()).exit_code(), EXIT_USAGE);
}

#[test]
fn help_and_usage_exit_codes() {
    assert_eq!(spinpol(&["--help"]).0, 0);
    assert_eq!(spinpol(&["--version"]).0, 0);
    assert_eq!(spinpol(&["frobnicate"]).0, 1);
    assert_eq!(spinpol(&["sweep", "--figure", "9z"]).0, 1);
    assert_eq!(spinpol(&["simulate", "--threads", "0"]).0, 1);
}

#[test]
fn bad_config_exits_one() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "bad.cfg", &CANONICAL.replace("fraction = 0.5", "fraction = 0.5\nlength = 1e-3"));
    let (code, _, err) = spinpol(&["simulate", "--config", &cfg, "--out", dir.path().to_str().unwrap()]);
    assert_eq!(code, 1);
    assert!(err.contains("drift"), "{err}");
    let (code, _, _) = spinpol(&["simulate", "--config", "/nonexistent.cfg"]);
    assert_eq!(code, 1);
}

#[test]
fn unwritable_output_exits_one() {
    let dir = tempfile::tempdir().unwrap();
    let file = dir.path().join("taken");
    fs::write(&file, "").unwrap();
    let (code, _, err) = spinpol(&["simulate", "--out", file.to_str().unwrap()]);
    assert_eq!(code, 1);
    assert!(err.contains("not writable"), "{err}");
}

#[test]
fn canonical_simulation() {
    let dir = tempfile::tempdir().unwrap();
    let (code, stdout, _) = spinpol(&["simulate", "--out", dir.path().to_str().unwrap()]);
    assert_eq!(code, 0);
    assert!(stdout.contains("<S_y>"));
    let v = json(&dir.path().join("observables.json"));
    let s = v["observables"]["s_y_expect"].as_f64().unwrap();
    assert!((s + 0.7).abs() < 0.05, "{s}");
    let hash = v["config_hash"].as_str().unwrap();
    for f in ["drift_densities.csv", "s_y_density.csv"] {
        let text = fs::read_to_string(dir.path().join(f)).unwrap();
        assert_eq!(text.lines().next().unwrap(), format!("# config_hash: {hash}"));
    }
}

#[test]
fn null_phase_simulation() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "null.cfg", &CANONICAL.replace("phase = 0.0", "phase_pi = -0.5"));
    let (code, _, _) = spinpol(&["simulate", "--config", &cfg, "--out", dir.path().to_str().unwrap()]);
    assert_eq!(code, 0);
    let s = json(&dir.path().join("observables.json"))["observables"]["s_y_expect"].as_f64().unwrap();
    assert!(s.abs() < 0.05, "{s}");
}

#[test]
fn zero_couplings_keep_initial_spin() {
    let dir = tempfile::tempdir().unwrap();
    let text = CANONICAL
        .replace("coupling = 0.5", "coupling = 0.0")
        .replace("kind = \"density\"\nbloch = [0.0, 0.0, 0.0]", "kind = \"spinor\"\nup = [1.0, 0.0]\ndown = [0.0, 1.0]");
    let cfg = write_config(dir.path(), "zero.cfg", &text);
    let (code, _, _) = spinpol(&["simulate", "--config", &cfg, "--out", dir.path().to_str().unwrap()]);
    assert_eq!(code, 0);
    let s = json(&dir.path().join("observables.json"))["observables"]["s_y_expect"].as_f64().unwrap();
    assert!((s - 1.0).abs() < 1e-12, "{s}");
}

#[test]
fn single_cell_sweep() {
    let dir = tempfile::tempdir().unwrap();
    let text = format!(
        "{CANONICAL}\n[sweep.axis1]\nparameter = \"coupling\"\nstart = 0.5\nstop = 0.5\ncount = 1\n\
         [sweep.axis2]\nparameter = \"drift_fraction\"\nstart = 0.5\nstop = 0.5\ncount = 1\n"
    );
    let cfg = write_config(dir.path(), "one.cfg", &text);
    let (code, _, err) = spinpol(&["sweep", "--config", &cfg, "--out", dir.path().to_str().unwrap()]);
    assert_eq!(code, 0, "{err}");
    let csv = fs::read_to_string(dir.path().join("sweep.csv")).unwrap();
    let rows: Vec<&str> = csv.lines().filter(|l| !l.starts_with('#')).collect();
    assert_eq!(rows.len(), 2);
    assert_eq!(rows[0], "coupling,drift_fraction,s_y");
}

#[test]
fn figure_sweep_grid() {
    let dir = tempfile::tempdir().unwrap();
    let (code, _, _) = spinpol(&["sweep", "--figure", "3b", "--threads", "2", "--out", dir.path().to_str().unwrap()]);
    assert_eq!(code, 0);
    let csv = fs::read_to_string(dir.path().join("sweep_3b.csv")).unwrap();
    assert!(csv.starts_with("# config_hash: "));
    assert_eq!(csv.lines().filter(|l| !l.starts_with('#')).count(), 1 + 41 * 41);
}

#[test]
fn pinem_is_deterministic_and_ordered() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    assert_eq!(spinpol(&["pinem", "--out", a.path().to_str().unwrap()]).0, 0);
    assert_eq!(spinpol(&["pinem", "--out", b.path().to_str().unwrap(), "--threads", "3"]).0, 0);
    let read = |d: &Path| fs::read(d.join("pinem_grid.csv")).unwrap();
    assert_eq!(read(a.path()), read(b.path()));
    let v = json(&a.path().join("pinem.json"));
    let c: Vec<f64> = v["points"].as_array().unwrap().iter().map(|p| p["contrast"].as_f64().unwrap()).collect();
    // σ_x-major: (40,10), (40,100), (8,10), (8,100)
    assert!(c[0] > c[1] && c[0] > c[2] && c[3] < c[1] && c[3] < c[2], "{c:?}");
}

#[test]
fn zero_field_pinem_has_no_contrast() {
    let dir = tempfile::tempdir().unwrap();
    let text = spinpol_cli::config::FIGS1.replace("drift_fraction = 0.5\ntolerance", "channel_field = 0.0\ndrift_fraction = 0.5\ntolerance");
    let cfg = write_config(dir.path(), "dark.cfg", &text);
    assert_eq!(spinpol(&["pinem", "--config", &cfg, "--out", dir.path().to_str().unwrap()]).0, 0);
    let v = json(&dir.path().join("pinem.json"));
    assert!(v["points"].as_array().unwrap().iter().all(|p| p["contrast"].as_f64().unwrap() == 0.0));
}

#[test]
fn validate_writes_report() {
    let dir = tempfile::tempdir().unwrap();
    let (code, stdout, _) = spinpol(&["validate", "--seed", "7", "--draws", "4", "--out", dir.path().to_str().unwrap()]);
    assert_eq!(code, 0);
    assert!(stdout.contains("invariants passed"));
    let v = json(&dir.path().join("validation.json"));
    assert_eq!(v["seed"], 7);
    assert!(v["checks"].as_array().unwrap().len() >= 15);
}
