//! Acceptance run over the bundled scenarios. One line per criterion; the
//! process exits non-zero if any criterion fails.

use std::collections::HashMap;
use std::f64::consts::PI;
use std::fs;
use std::path::Path;
use std::process::Command;
use std::sync::OnceLock;
use std::time::Instant;

use pilotwave::{execute, scenarios, Report};
use pilotwave_core::beable::DgJumpSpec;

type Check = Result<String, String>;

fn report(name: &'static str) -> &'static Report {
    static CACHE: OnceLock<HashMap<&'static str, OnceLock<Report>>> = OnceLock::new();
    let cache = CACHE.get_or_init(|| {
        scenarios::BUNDLED
            .iter()
            .map(|b| (b.name, OnceLock::new()))
            .collect()
    });
    cache[name].get_or_init(|| {
        let start = Instant::now();
        let s = scenarios::load(name).unwrap();
        let r = execute(&s, None).unwrap_or_else(|e| panic!("{name}: {e}"));
        eprintln!("  ran {name} in {:.1}s", start.elapsed().as_secs_f64());
        r
    })
}

fn metric(name: &'static str, key: &str) -> f64 {
    report(name)
        .metric(key)
        .unwrap_or_else(|| panic!("{name} has no metric {key}"))
}

fn column(name: &'static str, table: &str, col: &str) -> Vec<f64> {
    report(name)
        .table(table)
        .and_then(|t| t.column(col))
        .unwrap_or_else(|| panic!("{name}: no column {table}.{col}"))
}

fn ensure(ok: bool, detail: String) -> Check {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

const EQUILIBRIUM: [&str; 4] = [
    "equilibrium_ho_alpha0",
    "equilibrium_ho_alpha05",
    "equilibrium_ho_alpha1",
    "equilibrium_ho_alpha2",
];

const CONTINUUM: [&str; 9] = [
    "equilibrium_ho_alpha0",
    "equilibrium_ho_alpha05",
    "equilibrium_ho_alpha1",
    "equilibrium_ho_alpha2",
    "dg_ring_alpha1",
    "dg_ring_winding_alpha0",
    "ou_stationarity",
    "convergence_ho_alpha1",
    "convergence_ho_control_alpha0",
];

fn ac01() -> Check {
    let mut worst: f64 = 0.0;
    let mut detail = Vec::new();
    for name in EQUILIBRIUM {
        let l1 = column(name, "l1_series", "l1");
        if l1.len() < 11 {
            return Err(format!("{name}: only {} report times", l1.len()));
        }
        let m = l1.iter().cloned().fold(0.0, f64::max);
        detail.push(format!("{m:.4}"));
        worst = worst.max(m);
    }
    // The bundled alpha = 1 scenario must leave its L1 series behind.
    let tmp = tempfile::tempdir().unwrap();
    report("equilibrium_ho_alpha1")
        .write(tmp.path())
        .map_err(|e| e.to_string())?;
    if !tmp.path().join("l1_series.csv").exists() {
        return Err("l1_series.csv missing".into());
    }
    ensure(
        worst < 0.05,
        format!(
            "max L1 per alpha (0, 0.5, 1, 2) = [{}] < 0.05 at 11 times",
            detail.join(", ")
        ),
    )
}

fn ac02() -> Check {
    let ring = column("dg_ring_alpha1", "l1_series", "l1");
    let worst = ring.iter().cloned().fold(0.0, f64::max);
    // hbar k / m + 2 pi c_v with k = 1, c_v = 0.1
    let expected = 1.0 + 2.0 * PI * 0.1;
    let v = metric("dg_ring_winding_alpha0", "mean_velocity");
    let rel = (v - expected).abs() / expected;
    ensure(
        worst < 0.05 && rel < 0.02,
        format!("ring max L1 = {worst:.4} < 0.05; alpha=0 winding velocity {v:.5} vs {expected:.5} (rel {rel:.2e} < 0.02)"),
    )
}

fn ac03() -> Check {
    let var = metric("ou_stationarity", "variance_mean");
    let rel = (var - 0.5).abs() / 0.5;
    let linf = metric("ou_stationarity", "fpe_relaxation_linf");
    let fpe_var = metric("ou_stationarity", "fpe_relaxation_variance");
    ensure(
        rel < 0.03 && linf < 1e-3 && (fpe_var - 0.5).abs() < 1e-3,
        format!(
            "trajectory variance {var:.4} (rel {rel:.2e} < 0.03); FPE from uniform: L-inf {linf:.2e} < 1e-3, variance {fpe_var:.5}"
        ),
    )
}

fn ac04() -> Check {
    let l1 = column("convergence_ho_alpha1", "l1_series", "l1");
    let (first, last) = (l1[0], *l1.last().unwrap());
    let control = *column("convergence_ho_control_alpha0", "l1_series", "l1")
        .last()
        .unwrap();
    ensure(
        last < 0.1 && last < first / 3.0 && control > 0.1,
        format!("alpha=1: L1(0) = {first:.3}, L1(6) = {last:.4}; alpha=0 control L1(6) = {control:.3} > 0.1"),
    )
}

fn ac05() -> Check {
    let d = column("convergence_ho_alpha1", "l1_series", "fpe_l1");
    let worst = d.iter().cloned().fold(0.0, f64::max);
    ensure(
        worst < 0.05,
        format!(
            "SDE vs FPE L1 max over {} report times = {worst:.4} < 0.05",
            d.len()
        ),
    )
}

fn ac06() -> Check {
    let worst = CONTINUUM
        .iter()
        .map(|n| metric(n, "drift_identity_error"))
        .fold(0.0, f64::max);
    let fb = metric("ou_stationarity", "forward_backward_error");
    ensure(
        worst <= 1e-12 && fb < 1e-5,
        format!(
            "max |b+b*-2v|, |b-b*-2u| = {worst:.2e} <= 1e-12; forward-backward FPE {fb:.2e} < 1e-5"
        ),
    )
}

fn ac07() -> Check {
    let carlen = metric("equilibrium_ho_alpha1", "carlen_integral");
    let diff = metric("equilibrium_ho_alpha1", "carlen_rel_diff");
    // (0.1^2 + 0.05^2) (2 pi)^2
    let expected = 0.4934802200544679;
    let dg = metric("dg_ring_alpha1", "dg_integral_per_time");
    let dg_rel = (dg - expected).abs() / expected;
    let ratio = metric("equilibrium_ho_alpha1", "weak_continuity_ratio");
    ensure(
        carlen.is_finite() && diff < 0.05 && dg_rel < 0.02 && ratio >= 1.8,
        format!(
            "Carlen integral {carlen:.4} (refined rel diff {diff:.2e} < 0.05); DG integral/time {dg:.5} vs {expected:.5} (rel {dg_rel:.2e}); weak residual ratio {ratio:.2} >= 1.8"
        ),
    )
}

fn ac08() -> Check {
    let t = column("rabi_bell", "frequencies", "t");
    let f = column("rabi_bell", "frequencies", "freq_0");
    let worst = t
        .iter()
        .zip(&f)
        .skip(1)
        .map(|(t, f)| (f - (t / 2.0).cos().powi(2)).abs())
        .fold(0.0, f64::max);
    let trapped = metric("rabi_bell", "trapped");
    ensure(
        t.len() == 21 && worst < 0.02 && trapped == 0.0,
        format!("max |freq_0 - cos^2(t/2)| = {worst:.4} < 0.02 at 20 times; trapped = {trapped}"),
    )
}

fn ac09() -> Check {
    let master = metric("rabi_generalized", "gauge_master_diff");
    let mut worst: f64 = 0.0;
    for k in 0..2 {
        let a = column("rabi_generalized", "frequencies", &format!("freq_{k}"));
        let b = column("rabi_generalized", "frequencies", &format!("bell_freq_{k}"));
        worst = a
            .iter()
            .zip(&b)
            .map(|(x, y)| (x - y).abs())
            .fold(worst, f64::max);
    }
    ensure(
        master < 1e-8 && worst < 0.02,
        format!("master p(t) gap {master:.2e} < 1e-8; jump frequency gap {worst:.4} < 0.02"),
    )
}

fn ac10() -> Check {
    let mut worst: f64 = 0.0;
    for k in 0..3 {
        let f = column("dg_jump_cycle", "frequencies", &format!("freq_{k}"));
        worst = f
            .iter()
            .map(|v| (v - 1.0 / 3.0).abs())
            .fold(worst, f64::max);
    }
    let net = metric("dg_jump_cycle", "net_transitions_01");
    let sigma = metric("dg_jump_cycle", "net_transition_sigma");
    let spec = DgJumpSpec::cyclic(3, 0.2).map_err(|e| e.to_string())?;
    let exact = spec
        .matrix()
        .row_iter()
        .all(|r| r.iter().sum::<f64>() == 0.0);
    ensure(
        worst < 0.02 && net > 0.0 && sigma >= 5.0 && exact && metric("dg_jump_cycle", "dg_row_sum_max") == 0.0,
        format!("max |freq - 1/3| = {worst:.4} < 0.02; net 0->1 = {net} ({sigma:.1} sigma); row sums exactly 0"),
    )
}

fn ac11() -> Check {
    let e = metric("rotating_projectors", "sum_rule_max_error");
    ensure(
        e < 1e-6,
        format!("max |sum_i J_ji - dp_j/dt| = {e:.2e} < 1e-6 over one period"),
    )
}

fn ac12() -> Check {
    let mut recovered = 0.0;
    let mut frozen = 0.0;
    for name in CONTINUUM {
        recovered += metric(name, "nodal_recovered");
        frozen += metric(name, "nodal_frozen");
    }
    ensure(
        recovered <= 2.0 && frozen == 0.0,
        format!(
            "nodal incidents over scenarios 1-4: {recovered} recovered (<= 2), {frozen} frozen"
        ),
    )
}

fn run_binary(config: &str, out: &Path, threads: &str) -> Result<(), String> {
    let status = Command::new(env!("CARGO_BIN_EXE_pilotwave"))
        .args([
            "run",
            config,
            "--out",
            out.to_str().unwrap(),
            "--threads",
            threads,
            "--seed",
            "42",
        ])
        .env_remove("PILOTWAVE_OUT")
        .output()
        .map_err(|e| e.to_string())?;
    match status.status.code() {
        Some(0) | Some(1) => Ok(()),
        c => Err(format!(
            "{config}: exit {c:?}: {}",
            String::from_utf8_lossy(&status.stderr)
        )),
    }
}

fn csv_files(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut out: Vec<(String, Vec<u8>)> = fs::read_dir(dir)
        .unwrap()
        .filter_map(|e| {
            let p = e.ok()?.path();
            (p.extension()? == "csv").then(|| {
                (
                    p.file_name().unwrap().to_string_lossy().into_owned(),
                    fs::read(&p).unwrap(),
                )
            })
        })
        .collect();
    out.sort();
    out
}

fn ac13() -> Check {
    let tmp = tempfile::tempdir().unwrap();
    // A shortened copy of the superposition scenario: CN timeline, many
    // particles per worker, nodes in play.
    let short = scenarios::find("equilibrium_ho_alpha1")
        .unwrap()
        .toml
        .replace("n_trajectories = 50000", "n_trajectories = 6000")
        .replace("t_final = 31.41592653589793", "t_final = 3.2")
        .replace("finiteness_refined = true", "finiteness_refined = false")
        .replace("carlen_rel_diff_max = 0.05", "");
    let cfg = tmp.path().join("short.toml");
    fs::write(&cfg, short).unwrap();
    let mut compared = 0;
    for config in [cfg.to_str().unwrap(), "rabi_generalized", "dg_jump_cycle"] {
        let (a, b) = (
            tmp.path().join(format!("{compared}_t1")),
            tmp.path().join(format!("{compared}_t4")),
        );
        run_binary(config, &a, "1")?;
        run_binary(config, &b, "4")?;
        let (fa, fb) = (csv_files(&a), csv_files(&b));
        if fa.is_empty() || fa != fb {
            return Err(format!(
                "{config}: CSV outputs differ between --threads 1 and 4"
            ));
        }
        compared += fa.len();
    }
    Ok(format!(
        "{compared} CSV files byte-identical across --threads 1 and 4 (3 scenarios, seed 42)"
    ))
}

fn main() {
    let criteria: [(&str, &str, fn() -> Check); 13] = [
        ("AC01", "equilibrium preservation", ac01),
        ("AC02", "extra-current equilibrium on the ring", ac02),
        ("AC03", "Ornstein-Uhlenbeck stationarity", ac03),
        ("AC04", "convergence to equilibrium", ac04),
        ("AC05", "SDE vs Fokker-Planck", ac05),
        ("AC06", "time-reversal structure", ac06),
        ("AC07", "finiteness diagnostics", ac07),
        ("AC08", "beable Rabi oscillation", ac08),
        ("AC09", "rate-choice invariance", ac09),
        ("AC10", "cyclic jump current", ac10),
        ("AC11", "rotating-projector sum rule", ac11),
        ("AC12", "nodal avoidance", ac12),
        ("AC13", "determinism across thread counts", ac13),
    ];
    let start = Instant::now();
    let mut failed = 0;
    for (id, title, check) in criteria {
        let outcome = std::panic::catch_unwind(check).unwrap_or_else(|p| {
            let msg = p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            Err(format!("panicked: {msg}"))
        });
        match outcome {
            Ok(detail) => println!("[PASS] {id} {title}: {detail}"),
            Err(detail) => {
                failed += 1;
                println!("[FAIL] {id} {title}: {detail}");
            }
        }
    }
    println!(
        "acceptance: {} passed, {failed} failed in {:.0}s",
        13 - failed,
        start.elapsed().as_secs_f64()
    );
    if failed > 0 {
        std::process::exit(1);
    }
}
