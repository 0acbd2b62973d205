use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use gp_limits::cli::{config_from_manifest, Manifest, EXIT_CONFIG, EXIT_OK, EXIT_SOLVER};

fn bin(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_gp-limits")).args(args).output().unwrap()
}

fn write(dir: &Path, name: &str, text: &str) -> String {
    let p = dir.join(name);
    fs::write(&p, text).unwrap();
    p.to_str().unwrap().to_owned()
}

const SCATTERING: &str =
    "subcommand = scattering\ndim = 3\ninteraction.kind = gaussian\ninteraction.g = 1\ninteraction.s = 1\n";

#[test]
fn success_writes_outputs_and_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "s.cfg", SCATTERING);
    let out = dir.path().join("out");
    let o = bin(&["scattering", "--config", &cfg, "--out", out.to_str().unwrap(), "--quiet"]);
    assert_eq!(o.status.code(), Some(EXIT_OK), "{}", String::from_utf8_lossy(&o.stderr));
    let v: serde_json::Value = serde_json::from_str(&fs::read_to_string(out.join("scattering.json")).unwrap()).unwrap();
    assert!(v["alpha_tilde"].as_f64().unwrap() > 0.0);
    let m: Manifest = serde_json::from_str(&fs::read_to_string(out.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(m.subcommand, "scattering");
    let back = config_from_manifest(&m).unwrap();
    assert_eq!(back.to_text(), m.config);
}

#[test]
fn config_errors_exit_two() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "bad.cfg", "dim = 2\ngrid.points_per_axis = 3\n");
    let o = bin(&["gp", "--config", &cfg]);
    assert_eq!(o.status.code(), Some(EXIT_CONFIG));
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("OutOfRange") && err.contains("grid.points_per_axis"), "{err}");

    let cfg = write(dir.path(), "unknown.cfg", "colour = blue\n");
    let o = bin(&["gp", "--config", &cfg]);
    assert_eq!(o.status.code(), Some(EXIT_CONFIG));
    assert!(String::from_utf8_lossy(&o.stderr).contains("UnknownKey"));

    assert_eq!(bin(&["teleport", "--config", &cfg]).status.code(), Some(EXIT_CONFIG));
    assert_eq!(bin(&["gp"]).status.code(), Some(EXIT_CONFIG));
}

#[test]
fn solver_errors_exit_three() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "well.cfg", &SCATTERING.replace("interaction.g = 1", "interaction.g = -30"));
    let o = bin(&["scattering", "--config", &cfg, "--out", dir.path().join("o").to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(EXIT_SOLVER));
    assert!(String::from_utf8_lossy(&o.stderr).contains("NodeCrossing"));
}

#[test]
fn tampered_manifest_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "s.cfg", SCATTERING);
    let out = dir.path().join("out");
    assert_eq!(
        bin(&["scattering", "--config", &cfg, "--out", out.to_str().unwrap(), "--quiet"]).status.code(),
        Some(EXIT_OK)
    );
    let path = out.join("manifest.json");
    let text = fs::read_to_string(&path).unwrap().replace("interaction.g = 1", "interaction.g = 2");
    fs::write(&path, text).unwrap();
    let o = bin(&["scattering", "--manifest", path.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(EXIT_CONFIG));
}

#[test]
fn overrides_apply_after_file() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "s.cfg", SCATTERING);
    let out = dir.path().join("out");
    let o = bin(&["scattering", "--config", &cfg, "--override", "interaction.g=0", "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(EXIT_OK));
    let v: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(v["alpha_tilde"].as_f64().unwrap(), 0.0);
}
