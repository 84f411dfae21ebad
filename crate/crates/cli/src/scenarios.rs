//! Scenario files shipped inside the binary.

use crate::config::Scenario;
use crate::RunError;

pub struct Bundled {
    pub name: &'static str,
    pub toml: &'static str,
}

macro_rules! bundle {
    ($($name:literal),* $(,)?) => {
        &[$(Bundled { name: $name, toml: include_str!(concat!("../scenarios/", $name, ".toml")) }),*]
    };
}

pub const BUNDLED: &[Bundled] = bundle![
    "equilibrium_ho_alpha0",
    "equilibrium_ho_alpha05",
    "equilibrium_ho_alpha1",
    "equilibrium_ho_alpha2",
    "dg_ring_alpha1",
    "dg_ring_winding_alpha0",
    "ou_stationarity",
    "convergence_ho_alpha1",
    "convergence_ho_control_alpha0",
    "rabi_bell",
    "rabi_generalized",
    "dg_jump_cycle",
    "rotating_projectors",
];

pub fn find(name: &str) -> Option<&'static Bundled> {
    let stem = name.strip_suffix(".toml").unwrap_or(name);
    BUNDLED.iter().find(|b| b.name == stem)
}

pub fn load(name: &str) -> Result<Scenario, RunError> {
    let b = find(name)
        .ok_or_else(|| RunError::Config(format!("no bundled scenario named `{name}`")))?;
    Scenario::from_toml(b.toml)
}

/// First line of the description.
pub fn headline(s: &Scenario) -> &str {
    s.description.lines().next().unwrap_or("").trim()
}

pub fn describe(name: &str) -> Result<String, RunError> {
    let s = load(name)?;
    let mut out = format!("{}\n\n{}\n", s.name, s.description.trim());
    let steps = s.report_steps();
    out.push_str(&format!(
        "\nrun: dt = {}, t_final = {}, {} trajectories, {} reports, seed {}\n",
        s.run.dt,
        *steps.last().unwrap() as f64 * s.run.dt,
        s.run.n_trajectories,
        s.run.n_reports,
        s.run.master_seed
    ));
    if !s.assertions.is_empty() {
        out.push_str("assertions:\n");
        for (k, v) in &s.assertions {
            out.push_str(&format!("  {k} = {v}\n"));
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn every_bundled_scenario_builds() {
        for b in BUNDLED {
            let s = Scenario::from_toml(b.toml).unwrap_or_else(|e| panic!("{}: {e}", b.name));
            assert_eq!(s.name, b.name);
            s.build().unwrap_or_else(|e| panic!("{}: {e}", b.name));
            assert!(!headline(&s).is_empty());
            assert!(!s.assertions.is_empty(), "{}", b.name);
        }
    }

    #[test]
    fn unknown_name() {
        assert!(matches!(describe("nope"), Err(RunError::Config(_))));
        assert!(describe("rabi_bell.toml").is_ok());
    }
}
