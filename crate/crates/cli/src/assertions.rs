//! Named thresholds a scenario may assert on, and how they are judged.

use std::collections::BTreeMap;

use serde::Serialize;

use crate::config::Scenario;
use crate::RunError;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Kind {
    Continuum,
    Beable,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Op {
    Lt,
    Le,
    Gt,
    Ge,
}

struct Rule {
    name: &'static str,
    metric: &'static str,
    op: Op,
    kind: Kind,
    /// Analysis switch the metric depends on, if any.
    needs: Option<fn(&Scenario) -> bool>,
}

const fn rule(name: &'static str, metric: &'static str, op: Op, kind: Kind) -> Rule {
    Rule {
        name,
        metric,
        op,
        kind,
        needs: None,
    }
}

const fn needing(
    name: &'static str,
    metric: &'static str,
    op: Op,
    kind: Kind,
    f: fn(&Scenario) -> bool,
) -> Rule {
    Rule {
        name,
        metric,
        op,
        kind,
        needs: Some(f),
    }
}

use Kind::{Beable as B, Continuum as C};

const RULES: &[Rule] = &[
    rule("max_l1", "max_l1", Op::Lt, C),
    rule("final_l1_max", "final_l1", Op::Lt, C),
    rule("final_l1_min", "final_l1", Op::Gt, C),
    rule("relaxation_factor_min", "l1_relaxation_factor", Op::Gt, C),
    rule("drift_identity_max", "drift_identity_error", Op::Le, C),
    rule("nodal_recovered_max", "nodal_recovered", Op::Le, C),
    rule("nodal_frozen_max", "nodal_frozen", Op::Le, C),
    needing("fpe_l1_max", "fpe_l1_max", Op::Lt, C, |s| {
        s.analysis.fpe_oracle
    }),
    needing(
        "forward_backward_max",
        "forward_backward_error",
        Op::Lt,
        C,
        |s| s.analysis.forward_backward_steps.is_some(),
    ),
    needing("carlen_rel_diff_max", "carlen_rel_diff", Op::Lt, C, |s| {
        s.analysis.finiteness_refined
    }),
    needing(
        "dg_integral_rel_error_max",
        "dg_integral_rel_error",
        Op::Lt,
        C,
        |s| s.analysis.finiteness && plane_wave(s),
    ),
    needing(
        "weak_continuity_ratio_min",
        "weak_continuity_ratio",
        Op::Ge,
        C,
        |s| s.analysis.weak_continuity,
    ),
    needing(
        "winding_velocity_rel_error_max",
        "winding_velocity_rel_error",
        Op::Lt,
        C,
        plane_wave,
    ),
    needing(
        "variance_rel_error_max",
        "variance_rel_error",
        Op::Lt,
        C,
        |s| s.analysis.variance_from.is_some(),
    ),
    needing(
        "fpe_relaxation_linf_max",
        "fpe_relaxation_linf",
        Op::Lt,
        C,
        |s| s.analysis.ou_relaxation_time.is_some(),
    ),
    rule("freq_error_max", "freq_max_error", Op::Lt, B),
    rule("trapped_max", "trapped", Op::Le, B),
    rule("dg_row_sum_max", "dg_row_sum_max", Op::Le, B),
    rule(
        "net_transition_sigma_min",
        "net_transition_sigma",
        Op::Ge,
        B,
    ),
    needing("master_error_max", "master_max_error", Op::Lt, B, |s| {
        s.analysis.master
    }),
    needing(
        "gauge_master_diff_max",
        "gauge_master_diff",
        Op::Lt,
        B,
        |s| s.analysis.master && generalized(s),
    ),
    rule("gauge_freq_diff_max", "gauge_freq_diff", Op::Lt, B),
    needing("sum_rule_error_max", "sum_rule_max_error", Op::Lt, B, |s| {
        s.analysis.sum_rule
    }),
];

fn plane_wave(s: &Scenario) -> bool {
    matches!(
        s.continuum.as_ref().map(|c| &c.state),
        Some(crate::config::StateConfig::PlaneWave { .. })
    )
}

fn generalized(s: &Scenario) -> bool {
    matches!(
        s.beable.as_ref().map(|b| &b.rates),
        Some(crate::config::RateConfig::Generalized { .. })
    )
}

pub fn validate(s: &Scenario) -> Result<(), RunError> {
    let kind = s.kind();
    for (name, value) in &s.assertions {
        let r = RULES
            .iter()
            .find(|r| r.name == name)
            .ok_or_else(|| RunError::Config(format!("assertions: unknown name `{name}`")))?;
        if r.kind != kind {
            return Err(RunError::Config(format!(
                "assertions: `{name}` does not apply to this system"
            )));
        }
        if !value.is_finite() {
            return Err(RunError::Config(format!(
                "assertions: `{name}` must be finite"
            )));
        }
        if name == "gauge_freq_diff_max" && !generalized(s) {
            return Err(RunError::Config(
                "assertions: gauge_freq_diff_max needs generalized rates".into(),
            ));
        }
        if let Some(f) = r.needs {
            if !f(s) {
                return Err(RunError::Config(format!(
                    "assertions: `{name}` needs an analysis that is not enabled"
                )));
            }
        }
    }
    Ok(())
}

#[derive(Clone, Debug, Serialize, PartialEq)]
pub struct AssertionResult {
    pub name: String,
    pub metric: String,
    pub threshold: f64,
    pub value: Option<f64>,
    pub passed: bool,
}

pub fn judge(s: &Scenario, metrics: &BTreeMap<String, f64>) -> Vec<AssertionResult> {
    s.assertions
        .iter()
        .filter_map(|(name, &threshold)| {
            let r = RULES.iter().find(|r| r.name == name)?;
            let value = metrics.get(r.metric).copied();
            let passed = value.is_some_and(|v| match r.op {
                Op::Lt => v < threshold,
                Op::Le => v <= threshold,
                Op::Gt => v > threshold,
                Op::Ge => v >= threshold,
            });
            Some(AssertionResult {
                name: name.clone(),
                metric: r.metric.to_string(),
                threshold,
                value: value.filter(|v| v.is_finite()),
                passed,
            })
        })
        .collect()
}
