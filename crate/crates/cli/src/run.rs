//! Executes a validated scenario and collects metrics and tables.

use std::collections::BTreeMap;
use std::f64::consts::PI;

use log::info;

use pilotwave_core::beable::{
    integrate_master, quantum_probabilities, rates_at, sample_states, simulate_jump_ensemble,
    total_current, JumpEnsembleRun, RateChoice,
};
use pilotwave_core::dynamics::{
    check_finiteness, check_weak_continuity, drift_fields, face_drifts, FaceField,
};
use pilotwave_core::ensemble::{
    evolve_ensemble, fpe_oracle_series, grid_density_bins, l1_distance, sample_density,
    sample_uniform, BinSpec, SAMPLING_STREAM,
};
use pilotwave_core::fpe::{fpe_backward_step, fpe_step, positivity_dt, GridDensity};
use pilotwave_core::sde::{PsiTimeline, RngStream};
use pilotwave_core::wavefunction::CnPropagator;
use pilotwave_core::{Domain1D, DomainKind, PhysParams, RealField, Wavefunction};

use crate::assertions::judge;
use crate::config::{
    BeableSetup, Built, ContinuumConfig, ContinuumSetup, InitialConfig, JumpInitialConfig,
    PotentialConfig, Scenario, StateConfig, TimelineConfig,
};
use crate::{Report, RunError, Summary, Table};

trait Rt<T> {
    fn rt(self) -> Result<T, RunError>;
}

impl<T> Rt<T> for pilotwave_core::Result<T> {
    fn rt(self) -> Result<T, RunError> {
        self.map_err(|e| RunError::Runtime(e.to_string()))
    }
}

type Metrics = BTreeMap<String, f64>;
type Tables = BTreeMap<String, Table>;

/// Runs `s` with its own seed unless `seed` overrides it.
pub fn execute(s: &Scenario, seed: Option<u64>) -> Result<Report, RunError> {
    let built = s.build()?;
    let seed = seed.unwrap_or(s.run.master_seed);
    info!("running {} (seed {seed})", s.name);
    let (metrics, tables) = match &built {
        Built::Continuum(setup) => continuum(s, setup, seed)?,
        Built::Beable(setup) => beable(s, setup, seed)?,
    };
    let assertions = judge(s, &metrics);
    let passed = assertions.iter().all(|a| a.passed);
    let summary = Summary {
        scenario: s.name.clone(),
        description: s.description.clone(),
        master_seed: seed,
        status: if passed { "pass" } else { "fail" }.to_string(),
        metrics,
        assertions,
        files: tables.keys().map(|k| format!("{k}.csv")).collect(),
        error: None,
    };
    Ok(Report { summary, tables })
}

fn max_abs(values: impl IntoIterator<Item = f64>) -> f64 {
    values.into_iter().fold(0.0, |m, v| m.max(v.abs()))
}

/// Same physics on the grid with `Δx` halved.
fn refined(
    c: &ContinuumConfig,
    domain: &Domain1D,
) -> Result<(Domain1D, PhysParams, Wavefunction), RunError> {
    let n = match domain.kind() {
        DomainKind::Line => 2 * domain.n_points() - 1,
        DomainKind::Ring => 2 * domain.n_points(),
    };
    let d = Domain1D::new(domain.kind(), domain.x_min(), domain.x_max(), n).rt()?;
    let params =
        crate::config::continuum_params(c, &d).map_err(|e| RunError::Runtime(e.to_string()))?;
    let psi = crate::config::continuum_state(c, &params, &d)
        .map_err(|e| RunError::Runtime(e.to_string()))?;
    Ok((d, params, psi))
}

fn timeline(
    kind: TimelineConfig,
    psi: &Wavefunction,
    params: &PhysParams,
    dt: f64,
) -> Result<PsiTimeline, RunError> {
    match kind {
        TimelineConfig::Fixed => Ok(PsiTimeline::fixed(psi.clone())),
        TimelineConfig::CrankNicolson => PsiTimeline::evolving(psi.clone(), params, dt).rt(),
    }
}

/// `max |b + b* − 2v|` and `max |b − b* − 2u|` at nodes and faces.
fn drift_identity_error(
    psi: &Wavefunction,
    params: &PhysParams,
    dg: &pilotwave_core::dynamics::DgSpec,
) -> Result<f64, RunError> {
    let f = drift_fields(psi, params, dg).rt()?;
    let mut err: f64 = 0.0;
    for i in 0..f.b.values.len() {
        if f.b.is_flagged(i) {
            continue;
        }
        err = err
            .max((f.b.values[i] + f.b_star.values[i] - 2.0 * f.v.values[i]).abs())
            .max((f.b.values[i] - f.b_star.values[i] - 2.0 * f.u.values[i]).abs());
    }
    let g = face_drifts(psi, params, dg).rt()?;
    for k in 0..g.b.values.len() {
        err = err
            .max((g.b.values[k] + g.b_star.values[k] - 2.0 * g.v.values[k]).abs())
            .max((g.b.values[k] - g.b_star.values[k] - 2.0 * g.u.values[k]).abs());
    }
    Ok(err)
}

fn snapshots(
    kind: TimelineConfig,
    psi: &Wavefunction,
    params: &PhysParams,
    dt: f64,
    stride: usize,
    steps: usize,
) -> Result<Vec<Wavefunction>, RunError> {
    let mut tl = timeline(kind, psi, params, dt)?;
    let mut out = vec![tl.current().clone()];
    for k in 1..=steps {
        tl.advance(dt).rt()?;
        if k % stride == 0 {
            out.push(tl.current().clone());
        }
    }
    Ok(out)
}

fn test_functions(d: &Domain1D) -> Vec<RealField> {
    let (lo, l) = (d.x_min(), d.length());
    if d.is_ring() {
        let k = 2.0 * PI / l;
        vec![
            RealField::from_fn(d, 0.0, |x| (k * (x - lo)).sin()),
            RealField::from_fn(d, 0.0, |x| (k * (x - lo)).cos()),
            RealField::from_fn(d, 0.0, |x| (2.0 * k * (x - lo)).sin()),
        ]
    } else {
        let c = lo + 0.5 * l;
        let w = l / 8.0;
        vec![
            RealField::from_fn(d, 0.0, |x| (-((x - c) / w).powi(2)).exp()),
            RealField::from_fn(d, 0.0, |x| {
                (x - c) / w * (-0.5 * ((x - c) / w).powi(2)).exp()
            }),
            RealField::from_fn(d, 0.0, |x| {
                ((x - c) / w).sin() * (-0.25 * ((x - c) / w).powi(2)).exp()
            }),
        ]
    }
}

fn continuum(
    s: &Scenario,
    setup: &ContinuumSetup,
    seed: u64,
) -> Result<(Metrics, Tables), RunError> {
    let c = s.continuum.as_ref().expect("continuum block");
    let ContinuumSetup {
        domain,
        params,
        psi,
        dg,
    } = setup;
    let (run, analysis) = (&s.run, &s.analysis);
    let dt = run.dt;
    let times = s.report_times();
    let steps = *s.report_steps().last().unwrap();
    let rho0 = psi.density();
    let bins = BinSpec::for_density(&rho0, run.bins).rt()?;
    let mut metrics = Metrics::new();
    let mut tables = Tables::new();

    let mut sampler = RngStream::new(seed, SAMPLING_STREAM);
    let positions = match c.initial {
        InitialConfig::Equilibrium => {
            sample_density(&rho0, run.n_trajectories, &mut sampler).rt()?
        }
        InitialConfig::Uniform { a, b } => sample_uniform(a, b, run.n_trajectories, &mut sampler),
    };
    let mut tl = timeline(c.timeline, psi, params, dt)?;
    let ens = evolve_ensemble(&positions, &mut tl, params, dg, seed, dt, &times, &bins).rt()?;
    let final_psi = tl.current().clone();

    let l1 = &ens.series.distances;
    let (first, last) = (l1[0], *l1.last().unwrap());
    metrics.insert("max_l1".into(), ens.series.max());
    metrics.insert("initial_l1".into(), first);
    metrics.insert("final_l1".into(), last);
    metrics.insert("l1_relaxation_factor".into(), first / last);
    metrics.insert("nodal_frozen".into(), ens.nodal_incidents() as f64);
    metrics.insert("nodal_recovered".into(), ens.recovered() as f64);
    metrics.insert("boundary_events".into(), ens.boundary_events() as f64);
    let identity =
        drift_identity_error(psi, params, dg)?.max(drift_identity_error(&final_psi, params, dg)?);
    metrics.insert("drift_identity_error".into(), identity);

    let mut series = Table::new(&["t", "l1"]);
    if analysis.fpe_oracle {
        let p0 = match c.initial {
            InitialConfig::Equilibrium => GridDensity::from_field(&rho0).rt()?,
            InitialConfig::Uniform { a, b } => GridDensity::indicator(domain, a, b, 0.0).rt()?,
        };
        let mut tl = timeline(c.timeline, psi, params, dt)?;
        let oracle = fpe_oracle_series(&p0, &mut tl, params, dg, dt, &times).rt()?;
        series = Table::new(&["t", "l1", "fpe_l1"]);
        let mut worst: f64 = 0.0;
        for (k, p) in oracle.iter().enumerate() {
            let d = l1_distance(
                &ens.densities[k].probabilities,
                &grid_density_bins(p, &bins).rt()?,
            );
            worst = worst.max(d);
            series.push(vec![times[k], l1[k], d]);
        }
        metrics.insert("fpe_l1_max".into(), worst);
    } else {
        for (t, d) in times.iter().zip(l1) {
            series.push(vec![*t, *d]);
        }
    }
    tables.insert("l1_series".into(), series);

    let mut moments = Table::new(&["t", "mean", "variance"]);
    for (t, [m, v]) in times.iter().zip(&ens.moments) {
        moments.push(vec![*t, *m, *v]);
    }
    tables.insert("moments".into(), moments);

    if domain.is_ring() {
        let velocity = ens.mean_velocity(domain);
        metrics.insert("mean_velocity".into(), velocity);
        if let StateConfig::PlaneWave { k } = c.state {
            let l = domain.length();
            let expected =
                params.hbar * 2.0 * PI * k as f64 / (l * params.mass) + l * (dg.c_v + dg.c_u);
            metrics.insert("winding_velocity_expected".into(), expected);
            metrics.insert(
                "winding_velocity_rel_error".into(),
                ((velocity - expected) / expected).abs(),
            );
        }
    }

    if let Some(from) = analysis.variance_from {
        let window: Vec<f64> = times
            .iter()
            .zip(&ens.moments)
            .filter(|(t, _)| **t >= from - 1e-9)
            .map(|(_, m)| m[1])
            .collect();
        let mean = window.iter().sum::<f64>() / window.len() as f64;
        let xs = domain.xs();
        let centre = domain.integrate(
            &xs.iter()
                .zip(&rho0.values)
                .map(|(x, r)| x * r)
                .collect::<Vec<_>>(),
        );
        let expected = domain.integrate(
            &xs.iter()
                .zip(&rho0.values)
                .map(|(x, r)| (x - centre).powi(2) * r)
                .collect::<Vec<_>>(),
        );
        metrics.insert("variance_mean".into(), mean);
        metrics.insert("variance_expected".into(), expected);
        metrics.insert(
            "variance_rel_error".into(),
            ((mean - expected) / expected).abs(),
        );
    }

    if analysis.finiteness {
        let stride = match analysis.finiteness_interval {
            Some(h) => (h / dt).round() as usize,
            None => ((0.01 / dt).round() as usize).max(1),
        };
        let snaps = snapshots(c.timeline, psi, params, dt, stride, steps)?;
        let span = snaps.len() as f64 * stride as f64 * dt;
        let (carlen, dg_int) = check_finiteness(&snaps, dg, params).rt()?;
        drop(snaps);
        metrics.insert("carlen_integral".into(), carlen);
        metrics.insert("carlen_per_time".into(), carlen / span);
        metrics.insert("dg_integral".into(), dg_int);
        metrics.insert("dg_integral_per_time".into(), dg_int / span);
        if let StateConfig::PlaneWave { .. } = c.state {
            let l = domain.length();
            let expected = (dg.c_v.powi(2) + dg.c_u.powi(2)) * l * l;
            metrics.insert("dg_integral_expected_per_time".into(), expected);
            metrics.insert(
                "dg_integral_rel_error".into(),
                ((dg_int / span - expected) / expected).abs(),
            );
        }
        if analysis.finiteness_refined {
            let (d2, p2, psi2) = refined(c, domain)?;
            let dg2 = *dg;
            dg2.validate(&d2).rt()?;
            let snaps = snapshots(c.timeline, &psi2, &p2, dt / 2.0, 2 * stride, 2 * steps)?;
            let (fine, _) = check_finiteness(&snaps, &dg2, &p2).rt()?;
            metrics.insert("carlen_refined".into(), fine);
            metrics.insert("carlen_rel_diff".into(), ((carlen - fine) / fine).abs());
        }
    }

    if analysis.weak_continuity {
        let residual =
            |d: &Domain1D, p: &PhysParams, psi: &Wavefunction, h: f64| -> Result<f64, RunError> {
                let next = CnPropagator::new(d, p, h).rt()?.step(psi).rt()?;
                check_weak_continuity(psi, &next, p, dg, &test_functions(d)).rt()
            };
        let coarse = residual(domain, params, psi, dt)?;
        let (d2, p2, psi2) = refined(c, domain)?;
        let fine = residual(&d2, &p2, &psi2, dt / 2.0)?;
        metrics.insert("weak_residual_coarse".into(), coarse);
        metrics.insert("weak_residual_fine".into(), fine);
        metrics.insert("weak_continuity_ratio".into(), coarse / fine);
    }

    if let Some(t_relax) = analysis.ou_relaxation_time {
        let omega = match c.potential {
            PotentialConfig::Harmonic { omega } => omega,
            PotentialConfig::Free => unreachable!("checked at build time"),
        };
        let b = FaceField::from_fn(domain, 0.0, |x| -params.alpha * omega * x);
        let nu = params.nu();
        let n = (t_relax / (0.9 * positivity_dt(&b, nu))).ceil() as usize;
        let h = t_relax / n as f64;
        let mut p = GridDensity::uniform(domain, 0.0).rt()?;
        for _ in 0..n {
            p = fpe_step(&p, &b, nu, h).rt()?;
        }
        metrics.insert("fpe_relaxation_linf".into(), p.max_abs_diff(&rho0.values));
        metrics.insert("fpe_relaxation_variance".into(), p.variance());
        metrics.insert("fpe_relaxation_clipped".into(), p.clipped as f64);
    }

    if let Some(n) = analysis.forward_backward_steps {
        let f = face_drifts(psi, params, dg).rt()?;
        let nu = params.nu();
        let h = dt
            .min(0.9 * positivity_dt(&f.b, nu))
            .min(0.9 * positivity_dt(&f.b_star, nu));
        let p0 = GridDensity::from_field(&rho0).rt()?;
        let mut p = p0.clone();
        for _ in 0..n {
            p = fpe_step(&p, &f.b, nu, h).rt()?;
        }
        for _ in 0..n {
            p = fpe_backward_step(&p, &f.b_star, nu, h).rt()?;
        }
        metrics.insert("forward_backward_error".into(), p.max_abs_diff(&p0.values));
    }

    let last_density = ens.densities.last().unwrap();
    let reference = ens.references.last().unwrap();
    let mut hist = Table::new(&["centre", "empirical", "reference"]);
    for k in 0..bins.n_bins {
        hist.push(vec![
            bins.centre(k),
            last_density.probabilities[k],
            reference[k],
        ]);
    }
    tables.insert("density_final".into(), hist);

    let mut dump = Table::new(&["x", "re_psi", "im_psi", "rho"]);
    let rho = final_psi.density();
    for (i, a) in final_psi.amplitudes().iter().enumerate() {
        dump.push(vec![domain.x(i), a.re, a.im, rho.values[i]]);
    }
    tables.insert("psi_final".into(), dump);

    let f = drift_fields(&final_psi, params, dg).rt()?;
    let mut fields = Table::new(&["x", "v", "u", "b", "b_star"]);
    for i in 0..domain.n_points() {
        fields.push(vec![
            domain.x(i),
            f.v.values[i],
            f.u.values[i],
            f.b.values[i],
            f.b_star.values[i],
        ]);
    }
    tables.insert("fields_final".into(), fields);
    Ok((metrics, tables))
}

fn master_series(
    setup: &BeableSetup,
    choice: &RateChoice,
    times: &[f64],
    dt: f64,
) -> Result<Vec<Vec<f64>>, RunError> {
    let sys = &setup.system;
    let mut p = quantum_probabilities(sys, times[0]);
    let mut out = vec![p.clone()];
    for w in times.windows(2) {
        p = integrate_master(&p, w[0], w[1], dt, |t| rates_at(sys, &setup.dg, choice, t)).rt()?;
        out.push(p.clone());
    }
    Ok(out)
}

fn freq_gap(a: &JumpEnsembleRun, b: &JumpEnsembleRun) -> f64 {
    a.frequencies
        .iter()
        .zip(&b.frequencies)
        .flat_map(|(x, y)| x.iter().zip(y).map(|(p, q)| p - q))
        .fold(0.0, |m, d| m.max(d.abs()))
}

fn beable(s: &Scenario, setup: &BeableSetup, seed: u64) -> Result<(Metrics, Tables), RunError> {
    let cfg = s.beable.as_ref().expect("beable block");
    let sys = &setup.system;
    let n = sys.dim();
    let (run, dt) = (&s.run, s.run.dt);
    let times = s.report_times();
    let generalized = setup.rates != RateChoice::Bell;
    let mut metrics = Metrics::new();
    let mut tables = Tables::new();

    let row_sums = setup.dg.matrix().row_iter().map(|r| r.iter().sum::<f64>());
    metrics.insert("dg_row_sum_max".into(), max_abs(row_sums));

    let mut header: Vec<String> = vec!["t".into()];
    header.extend((0..n).map(|i| format!("p_{i}")));
    let mut columns: Vec<Vec<Vec<f64>>> = vec![times
        .iter()
        .map(|t| quantum_probabilities(sys, *t))
        .collect()];

    if run.n_trajectories > 0 {
        let p0 = quantum_probabilities(sys, 0.0);
        let initial = match cfg.initial {
            JumpInitialConfig::Equilibrium => sample_states(
                &p0,
                run.n_trajectories,
                &mut RngStream::new(seed, SAMPLING_STREAM),
            ),
            JumpInitialConfig::State { index } => vec![index; run.n_trajectories],
        };
        let ens = simulate_jump_ensemble(sys, &setup.dg, &setup.rates, &initial, seed, dt, &times)
            .rt()?;
        let err = ens
            .frequencies
            .iter()
            .zip(&ens.probabilities)
            .flat_map(|(f, p)| f.iter().zip(p).map(|(a, b)| a - b))
            .fold(0.0f64, |m, d| m.max(d.abs()));
        metrics.insert("freq_max_error".into(), err);
        metrics.insert("trapped".into(), ens.trapped as f64);
        let net = ens.net_transitions(0, 1) as f64;
        let total = (ens.transitions[(1, 0)] + ens.transitions[(0, 1)]) as f64;
        metrics.insert("net_transitions_01".into(), net);
        metrics.insert(
            "net_transition_sigma".into(),
            if total > 0.0 { net / total.sqrt() } else { 0.0 },
        );
        header.extend((0..n).map(|i| format!("freq_{i}")));
        columns.push(ens.frequencies.clone());

        let mut jumps = Table::new(&["from", "to", "count"]);
        for i in 0..n {
            for j in 0..n {
                if i != j {
                    jumps.push(vec![i as f64, j as f64, ens.transitions[(j, i)] as f64]);
                }
            }
        }
        tables.insert("transitions".into(), jumps);

        if generalized {
            let bell = simulate_jump_ensemble(
                sys,
                &setup.dg,
                &RateChoice::Bell,
                &initial,
                seed,
                dt,
                &times,
            )
            .rt()?;
            metrics.insert("gauge_freq_diff".into(), freq_gap(&ens, &bell));
            header.extend((0..n).map(|i| format!("bell_freq_{i}")));
            columns.push(bell.frequencies);
        }
    }

    if s.analysis.master {
        let master = master_series(setup, &setup.rates, &times, dt)?;
        let err = master
            .iter()
            .zip(&columns[0])
            .flat_map(|(m, p)| m.iter().zip(p).map(|(a, b)| a - b))
            .fold(0.0f64, |m, d| m.max(d.abs()));
        metrics.insert("master_max_error".into(), err);
        if generalized {
            let bell = master_series(setup, &RateChoice::Bell, &times, dt)?;
            let gap = master
                .iter()
                .zip(&bell)
                .flat_map(|(a, b)| a.iter().zip(b).map(|(x, y)| x - y))
                .fold(0.0f64, |m, d| m.max(d.abs()));
            metrics.insert("gauge_master_diff".into(), gap);
        }
        header.extend((0..n).map(|i| format!("master_{i}")));
        columns.push(master);
    }

    if s.analysis.sum_rule {
        let h = 1e-4;
        let samples = 400;
        let mut worst: f64 = 0.0;
        for k in 0..=samples {
            let t = run.t_final * k as f64 / samples as f64;
            let j = total_current(sys, t, &setup.dg).rt()?;
            let (hi, lo) = (
                quantum_probabilities(sys, t + h),
                quantum_probabilities(sys, t - h),
            );
            for (i, sum) in j.row_sums().iter().enumerate() {
                worst = worst.max((sum - (hi[i] - lo[i]) / (2.0 * h)).abs());
            }
        }
        metrics.insert("sum_rule_max_error".into(), worst);
    }

    let mut table = Table::with_header(header);
    for (k, t) in times.iter().enumerate() {
        let mut row = vec![*t];
        for col in &columns {
            row.extend_from_slice(&col[k]);
        }
        table.push(row);
    }
    tables.insert("frequencies".into(), table);
    Ok((metrics, tables))
}
