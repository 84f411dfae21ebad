use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use pilotwave::scenarios::BUNDLED;

const SMALL: &str = r#"
name = "small_ring"
description = "Ring plane wave with extra flux, a few thousand trajectories."

[continuum]
domain = { kind = "ring", x_min = 0.0, x_max = 6.283185307179586, n_points = 128 }
alpha = 1.0
potential = { kind = "free" }
state = { kind = "plane_wave", k = 1 }
dg = { c_v = 0.1, c_u = 0.05 }
timeline = "fixed"

[run]
dt = 1e-3
t_final = 0.5
n_trajectories = 4000
n_reports = 5
master_seed = 3

[assertions]
max_l1 = 0.2
"#;

fn pilotwave(args: &[&str], env_out: Option<&Path>) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_pilotwave"));
    cmd.args(args).env_remove("PILOTWAVE_OUT");
    if let Some(dir) = env_out {
        cmd.env("PILOTWAVE_OUT", dir);
    }
    cmd.output().unwrap()
}

fn write_config(dir: &Path, name: &str, text: &str) -> String {
    let path = dir.join(name);
    fs::write(&path, text).unwrap();
    path.to_str().unwrap().to_string()
}

fn summary(dir: &Path) -> serde_json::Value {
    serde_json::from_str(&fs::read_to_string(dir.join("summary.json")).unwrap()).unwrap()
}

#[test]
fn list_names_every_bundled_scenario() {
    let out = pilotwave(&["list"], None);
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    for b in BUNDLED {
        assert!(text.contains(b.name), "{}", b.name);
    }
    assert!(text.contains("equilibrium_ho_alpha1"));
}

#[test]
fn describe_known_and_unknown() {
    let out = pilotwave(&["describe", "ou_stationarity"], None);
    assert!(out.status.success());
    assert!(String::from_utf8(out.stdout).unwrap().contains("Exercises"));
    let out = pilotwave(&["describe", "no_such_scenario"], None);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn passing_run_writes_artifacts() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "small.toml", SMALL);
    let out_dir = tmp.path().join("out");
    let out = pilotwave(&["run", &cfg, "--out", out_dir.to_str().unwrap()], None);
    assert_eq!(
        out.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    for f in [
        "l1_series.csv",
        "moments.csv",
        "density_final.csv",
        "psi_final.csv",
        "fields_final.csv",
    ] {
        assert!(out_dir.join(f).exists(), "{f}");
    }
    let csv = fs::read_to_string(out_dir.join("psi_final.csv")).unwrap();
    assert!(csv.starts_with("x,re_psi,im_psi,rho\n"));
    assert!(!csv.contains('\r'));
    let fields = fs::read_to_string(out_dir.join("fields_final.csv")).unwrap();
    assert!(fields.starts_with("x,v,u,b,b_star\n"));
    let s = summary(&out_dir);
    assert_eq!(s["status"], "pass");
    assert_eq!(s["scenario"], "small_ring");
}

#[test]
fn default_out_dir_from_environment() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "small.toml", SMALL);
    let env_dir = tmp.path().join("env_out");
    let out = pilotwave(&["run", &cfg], Some(&env_dir));
    assert_eq!(out.status.code(), Some(0));
    assert!(env_dir.join("summary.json").exists());
}

#[test]
fn failed_assertion_exits_1() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(
        tmp.path(),
        "strict.toml",
        &SMALL.replace("max_l1 = 0.2", "max_l1 = 1e-9"),
    );
    let out_dir = tmp.path().join("out");
    let out = pilotwave(&["run", &cfg, "--out", out_dir.to_str().unwrap()], None);
    assert_eq!(out.status.code(), Some(1));
    assert_eq!(summary(&out_dir)["status"], "fail");
    assert!(out_dir.join("l1_series.csv").exists());
}

#[test]
fn line_flux_is_rejected_before_running() {
    let tmp = tempfile::tempdir().unwrap();
    let text = SMALL
        .replace(
            "kind = \"ring\", x_min = 0.0, x_max = 6.283185307179586",
            "kind = \"line\", x_min = -8.0, x_max = 8.0",
        )
        .replace(
            "{ kind = \"plane_wave\", k = 1 }",
            "{ kind = \"gaussian\", x0 = 0.0, p0 = 1.0, sigma = 1.0 }",
        );
    let cfg = write_config(tmp.path(), "line.toml", &text);
    let out_dir = tmp.path().join("out");
    let out = pilotwave(&["run", &cfg, "--out", out_dir.to_str().unwrap()], None);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8(out.stderr).unwrap().contains("DGSpec"));
    let s = summary(&out_dir);
    assert_eq!(s["status"], "config_error");
    assert!(!out_dir.join("l1_series.csv").exists());
}

#[test]
fn unknown_keys_and_bad_assertions_are_config_errors() {
    let tmp = tempfile::tempdir().unwrap();
    let out_dir = tmp.path().join("out");
    for (name, text) in [
        (
            "typo.toml",
            SMALL.replace("alpha = 1.0", "alpha = 1.0\nalhpa = 2.0"),
        ),
        (
            "assert.toml",
            SMALL.replace("max_l1 = 0.2", "max_l1 = 0.2\nfreq_error_max = 0.02"),
        ),
        (
            "missing.toml",
            SMALL.replace("max_l1 = 0.2", "fpe_l1_max = 0.05"),
        ),
    ] {
        let cfg = write_config(tmp.path(), name, &text);
        let out = pilotwave(&["run", &cfg, "--out", out_dir.to_str().unwrap()], None);
        assert_eq!(out.status.code(), Some(2), "{name}");
    }
}

#[test]
fn unwritable_output_is_a_runtime_error() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "small.toml", SMALL);
    let blocker = tmp.path().join("file");
    fs::write(&blocker, "x").unwrap();
    let out = pilotwave(&["run", &cfg, "--out", blocker.to_str().unwrap()], None);
    assert_eq!(out.status.code(), Some(3));
}

#[test]
fn same_seed_same_bytes() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "small.toml", SMALL);
    let (a, b, c) = (
        tmp.path().join("a"),
        tmp.path().join("b"),
        tmp.path().join("c"),
    );
    for (dir, seed) in [(&a, "42"), (&b, "42"), (&c, "43")] {
        let out = pilotwave(
            &["run", &cfg, "--out", dir.to_str().unwrap(), "--seed", seed],
            None,
        );
        assert_eq!(out.status.code(), Some(0));
    }
    let read = |d: &Path| fs::read(d.join("moments.csv")).unwrap();
    assert_eq!(read(&a), read(&b));
    assert_ne!(read(&a), read(&c));
    assert_eq!(summary(&a)["master_seed"], 42);
}
