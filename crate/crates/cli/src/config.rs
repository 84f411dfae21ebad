//! Scenario files. Everything is validated and built into core objects
//! before a run starts; unknown keys are rejected.

use std::collections::BTreeMap;
use std::path::Path;

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::Deserialize;

use pilotwave_core::beable::{
    quantum_probabilities, BeableSystem, CMatrix, CVector, DgJumpSpec, ProjectorFamily, RateChoice,
};
use pilotwave_core::dynamics::DgSpec;
use pilotwave_core::wavefunction::{
    make_free_gaussian, make_harmonic_eigenstate, make_plane_wave_ring, make_superposition,
};
use pilotwave_core::{Domain1D, DomainKind, PhysParams, Wavefunction};

use crate::assertions::{self, Kind};
use crate::RunError;

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub name: String,
    pub description: String,
    pub continuum: Option<ContinuumConfig>,
    pub beable: Option<BeableConfig>,
    pub run: RunConfig,
    #[serde(default)]
    pub analysis: AnalysisConfig,
    /// Named thresholds, see `assertions::RULES`.
    #[serde(default)]
    pub assertions: BTreeMap<String, f64>,
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DomainConfig {
    pub kind: DomainKindConfig,
    pub x_min: f64,
    pub x_max: f64,
    pub n_points: usize,
}

#[derive(Clone, Copy, Debug, Deserialize, PartialEq)]
#[serde(rename_all = "snake_case")]
pub enum DomainKindConfig {
    Line,
    Ring,
}

#[derive(Clone, Debug, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum PotentialConfig {
    Free,
    Harmonic { omega: f64 },
}

#[derive(Clone, Debug, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum StateConfig {
    /// Oscillator eigenstates; equal weights unless `coefficients` (re, im) are given.
    Harmonic {
        levels: Vec<usize>,
        omega: f64,
        coefficients: Option<Vec<[f64; 2]>>,
    },
    PlaneWave {
        k: i64,
    },
    Gaussian {
        x0: f64,
        p0: f64,
        sigma: f64,
    },
}

#[derive(Clone, Copy, Debug, Default, Deserialize, PartialEq)]
#[serde(rename_all = "snake_case")]
pub enum TimelineConfig {
    /// Density and drift frozen at the initial state (stationary states).
    Fixed,
    #[default]
    CrankNicolson,
}

#[derive(Clone, Debug, Default, Deserialize, PartialEq)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum InitialConfig {
    #[default]
    Equilibrium,
    Uniform {
        a: f64,
        b: f64,
    },
}

#[derive(Clone, Copy, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DgConfig {
    #[serde(default)]
    pub c_v: f64,
    #[serde(default)]
    pub c_u: f64,
}

fn one() -> f64 {
    1.0
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ContinuumConfig {
    pub domain: DomainConfig,
    #[serde(default = "one")]
    pub hbar: f64,
    #[serde(default = "one")]
    pub mass: f64,
    pub alpha: f64,
    pub potential: PotentialConfig,
    pub state: StateConfig,
    pub dg: Option<DgConfig>,
    #[serde(default)]
    pub timeline: TimelineConfig,
    #[serde(default)]
    pub initial: InitialConfig,
}

#[derive(Clone, Debug, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum MatrixConfig {
    Zero,
    /// `scale · σ_x` in the first two states.
    SigmaX {
        scale: f64,
    },
    Dense {
        re: Vec<Vec<f64>>,
        im: Option<Vec<Vec<f64>>>,
    },
}

#[derive(Clone, Debug, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ProjectorConfig {
    Fixed,
    Rotating { generator: MatrixConfig, rate: f64 },
}

#[derive(Clone, Debug, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum JumpDgConfig {
    /// Flux circulating `0 → 1 → … → n−1 → 0`.
    Cyclic {
        flux: f64,
    },
    Dense {
        values: Vec<Vec<f64>>,
    },
}

#[derive(Clone, Debug, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum RateConfig {
    Bell,
    Generalized { extra: Vec<Vec<f64>> },
}

#[derive(Clone, Debug, Default, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum JumpInitialConfig {
    /// Sampled from `p(0)`.
    #[default]
    Equilibrium,
    State {
        index: usize,
    },
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StateVector {
    pub re: Vec<f64>,
    pub im: Option<Vec<f64>>,
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BeableConfig {
    pub dim: usize,
    #[serde(default = "one")]
    pub hbar: f64,
    pub hamiltonian: MatrixConfig,
    pub state: StateVector,
    pub projectors: ProjectorConfig,
    pub dg: Option<JumpDgConfig>,
    pub rates: RateConfig,
    #[serde(default)]
    pub initial: JumpInitialConfig,
}

fn default_bins() -> usize {
    pilotwave_core::ensemble::DEFAULT_BINS
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub dt: f64,
    pub t_final: f64,
    pub n_trajectories: usize,
    /// Evenly spaced report times in `(0, t_final]`, snapped to the step
    /// lattice; `t = 0` is always reported as well.
    pub n_reports: usize,
    pub master_seed: u64,
    #[serde(default = "default_bins")]
    pub bins: usize,
}

#[derive(Clone, Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnalysisConfig {
    /// Fokker–Planck solution alongside the ensemble, compared bin by bin.
    #[serde(default)]
    pub fpe_oracle: bool,
    /// Space-time integrals of `(v² + u²)ρ` and of the extra-drift share.
    #[serde(default)]
    pub finiteness: bool,
    /// Repeat the integrals with `Δx` and `dt` halved.
    #[serde(default)]
    pub finiteness_refined: bool,
    /// Spacing of the snapshots entering the space-time integrals.
    pub finiteness_interval: Option<f64>,
    /// Weak-form continuity residual at `(Δx, dt)` and `(Δx/2, dt/2)`.
    #[serde(default)]
    pub weak_continuity: bool,
    /// Average the ensemble variance over report times from here on.
    pub variance_from: Option<f64>,
    /// Relax a uniform density under the Ornstein–Uhlenbeck drift `−αωx`
    /// with the Fokker–Planck solver up to this time.
    pub ou_relaxation_time: Option<f64>,
    /// Forward then backward Fokker–Planck steps from the initial density.
    pub forward_backward_steps: Option<usize>,
    /// Beable systems: master equation along the sample times.
    #[serde(default)]
    pub master: bool,
    /// Beable systems: check Σ_i J_ji against a difference quotient of p_j.
    #[serde(default)]
    pub sum_rule: bool,
}

impl Scenario {
    pub fn from_toml(text: &str) -> Result<Self, RunError> {
        toml::from_str(text).map_err(|e| RunError::Config(e.to_string()))
    }

    pub fn from_path(path: &Path) -> Result<Self, RunError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| RunError::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    pub fn kind(&self) -> Kind {
        if self.continuum.is_some() {
            Kind::Continuum
        } else {
            Kind::Beable
        }
    }

    /// Step index of each report time, `0` first.
    pub fn report_steps(&self) -> Vec<usize> {
        let total = (self.run.t_final / self.run.dt).round() as usize;
        let n = self.run.n_reports;
        (0..=n)
            .map(|j| ((j * total) as f64 / n as f64).round() as usize)
            .collect()
    }

    pub fn report_times(&self) -> Vec<f64> {
        self.report_steps()
            .into_iter()
            .map(|k| k as f64 * self.run.dt)
            .collect()
    }

    /// Checks every block and builds the objects the runner needs.
    pub fn build(&self) -> Result<Built, RunError> {
        let cfg = |m: String| RunError::Config(m);
        let run = &self.run;
        if !(run.dt > 0.0 && run.dt.is_finite()) || !(run.t_final >= run.dt) {
            return Err(cfg(format!(
                "run: need 0 < dt <= t_final, got dt = {}, t_final = {}",
                run.dt, run.t_final
            )));
        }
        if run.n_reports == 0 || run.bins < 2 {
            return Err(cfg("run: n_reports must be >= 1 and bins >= 2".into()));
        }
        let built = match (&self.continuum, &self.beable) {
            (Some(c), None) => Built::Continuum(self.build_continuum(c)?),
            (None, Some(b)) => Built::Beable(self.build_beable(b)?),
            _ => {
                return Err(cfg(
                    "exactly one of [continuum] or [beable] is required".into()
                ))
            }
        };
        assertions::validate(self)?;
        Ok(built)
    }

    fn build_continuum(&self, c: &ContinuumConfig) -> Result<ContinuumSetup, RunError> {
        let kind = match c.domain.kind {
            DomainKindConfig::Line => DomainKind::Line,
            DomainKindConfig::Ring => DomainKind::Ring,
        };
        let domain = Domain1D::new(kind, c.domain.x_min, c.domain.x_max, c.domain.n_points)?;
        let params = continuum_params(c, &domain)?;
        let psi = continuum_state(c, &params, &domain)?;
        let dg = match c.dg {
            Some(d) => DgSpec::new(d.c_v, d.c_u),
            None => DgSpec::none(),
        };
        dg.validate(&domain)?;
        if self.run.n_trajectories == 0 {
            return Err(RunError::Config("run: n_trajectories must be > 0".into()));
        }
        if let InitialConfig::Uniform { a, b } = c.initial {
            if !(a < b) || a < domain.x_min() || b > domain.x_max() {
                return Err(RunError::Config(format!(
                    "initial: uniform interval [{a}, {b}] must be nonempty and inside the domain"
                )));
            }
        }
        let a = &self.analysis;
        if a.master || a.sum_rule {
            return Err(RunError::Config(
                "analysis: master and sum_rule apply to beable systems only".into(),
            ));
        }
        if a.finiteness_refined && !a.finiteness {
            return Err(RunError::Config(
                "analysis: finiteness_refined needs finiteness".into(),
            ));
        }
        if let Some(h) = a.finiteness_interval {
            let k = (h / self.run.dt).round();
            if !(k >= 1.0) || (k * self.run.dt - h).abs() > 1e-9 * h {
                return Err(RunError::Config(format!(
                    "analysis: finiteness_interval {h} must be a positive multiple of dt"
                )));
            }
        }
        if let Some(t) = a.variance_from {
            if !(t >= 0.0 && t < self.run.t_final) {
                return Err(RunError::Config(format!(
                    "analysis: variance_from = {t} outside the run"
                )));
            }
        }
        if a.ou_relaxation_time.is_some() {
            let ground = matches!(&c.state, StateConfig::Harmonic { levels, .. } if levels == &[0]);
            if !matches!(c.potential, PotentialConfig::Harmonic { .. })
                || !ground
                || !(c.alpha > 0.0)
            {
                return Err(RunError::Config(
                    "analysis: ou_relaxation_time needs the harmonic ground state with alpha > 0"
                        .into(),
                ));
            }
        }
        if a.forward_backward_steps.is_some() && c.timeline != TimelineConfig::Fixed {
            return Err(RunError::Config(
                "analysis: forward_backward_steps needs a stationary state (timeline = \"fixed\")"
                    .into(),
            ));
        }
        Ok(ContinuumSetup {
            domain,
            params,
            psi,
            dg,
        })
    }

    fn build_beable(&self, b: &BeableConfig) -> Result<BeableSetup, RunError> {
        let n = b.dim;
        let h = matrix(&b.hamiltonian, n, "hamiltonian")?;
        let family = match &b.projectors {
            ProjectorConfig::Fixed => ProjectorFamily::Fixed,
            ProjectorConfig::Rotating { generator, rate } => ProjectorFamily::Rotating {
                generator: matrix(generator, n, "projectors.generator")?,
                rate: *rate,
            },
        };
        let im = b
            .state
            .im
            .clone()
            .unwrap_or_else(|| vec![0.0; b.state.re.len()]);
        if b.state.re.len() != n || im.len() != n {
            return Err(RunError::Config(format!(
                "state: need {n} entries in re and im"
            )));
        }
        let psi = CVector::from_iterator(
            n,
            b.state
                .re
                .iter()
                .zip(&im)
                .map(|(r, i)| Complex64::new(*r, *i)),
        );
        let system = BeableSystem::new(h, family, psi, b.hbar, 0.0)?;
        let dg = match &b.dg {
            None => DgJumpSpec::zero(n),
            Some(JumpDgConfig::Cyclic { flux }) => DgJumpSpec::cyclic(n, *flux)?,
            Some(JumpDgConfig::Dense { values }) => {
                DgJumpSpec::new(real_matrix(values, n, "dg.values")?)?
            }
        };
        let rates = match &b.rates {
            RateConfig::Bell => RateChoice::Bell,
            RateConfig::Generalized { extra } => {
                let extra = real_matrix(extra, n, "rates.extra")?;
                if (&extra - extra.transpose()).amax() > 1e-12 || extra.iter().any(|v| !(*v >= 0.0))
                {
                    return Err(RunError::Config(
                        "rates.extra must be symmetric and nonnegative".into(),
                    ));
                }
                RateChoice::Generalized { extra }
            }
        };
        if let JumpInitialConfig::State { index } = b.initial {
            let p = quantum_probabilities(&system, 0.0);
            if index >= n || p[index] <= pilotwave_core::beable::EPS_P {
                return Err(RunError::Config(format!(
                    "initial: state {index} is out of range or has zero probability"
                )));
            }
        }
        let a = &self.analysis;
        if a.fpe_oracle
            || a.finiteness
            || a.weak_continuity
            || a.variance_from.is_some()
            || a.ou_relaxation_time.is_some()
            || a.forward_backward_steps.is_some()
        {
            return Err(RunError::Config(
                "analysis: continuum options set on a beable system".into(),
            ));
        }
        Ok(BeableSetup { system, dg, rates })
    }
}

pub(crate) fn continuum_params(
    c: &ContinuumConfig,
    domain: &Domain1D,
) -> Result<PhysParams, RunError> {
    Ok(match c.potential {
        PotentialConfig::Free => PhysParams::free(domain, c.hbar, c.mass, c.alpha)?,
        PotentialConfig::Harmonic { omega } => {
            PhysParams::harmonic(domain, omega, c.hbar, c.mass, c.alpha)?
        }
    })
}

pub(crate) fn continuum_state(
    c: &ContinuumConfig,
    params: &PhysParams,
    domain: &Domain1D,
) -> Result<Wavefunction, RunError> {
    Ok(match &c.state {
        StateConfig::Harmonic {
            levels,
            omega,
            coefficients,
        } => {
            if levels.is_empty() {
                return Err(RunError::Config("state: levels must not be empty".into()));
            }
            let coeffs: Vec<Complex64> = match coefficients {
                None => vec![Complex64::new(1.0, 0.0); levels.len()],
                Some(cs) if cs.len() == levels.len() => {
                    cs.iter().map(|[r, i]| Complex64::new(*r, *i)).collect()
                }
                Some(_) => return Err(RunError::Config("state: one coefficient per level".into())),
            };
            let states = levels
                .iter()
                .map(|&n| make_harmonic_eigenstate(n, *omega, params, domain, 0.0))
                .collect::<pilotwave_core::Result<Vec<_>>>()?;
            make_superposition(&states, &coeffs)?
        }
        StateConfig::PlaneWave { k } => make_plane_wave_ring(*k, domain, 0.0)?,
        StateConfig::Gaussian { x0, p0, sigma } => {
            make_free_gaussian(*x0, *p0, *sigma, 0.0, params, domain)?
        }
    })
}

fn check_shape(rows: &[Vec<f64>], n: usize, what: &str) -> Result<(), RunError> {
    if rows.len() != n || rows.iter().any(|r| r.len() != n) {
        return Err(RunError::Config(format!(
            "{what}: expected a {n}x{n} matrix"
        )));
    }
    Ok(())
}

fn real_matrix(rows: &[Vec<f64>], n: usize, what: &str) -> Result<DMatrix<f64>, RunError> {
    check_shape(rows, n, what)?;
    Ok(DMatrix::from_fn(n, n, |i, j| rows[i][j]))
}

fn matrix(m: &MatrixConfig, n: usize, what: &str) -> Result<CMatrix, RunError> {
    Ok(match m {
        MatrixConfig::Zero => CMatrix::zeros(n, n),
        MatrixConfig::SigmaX { scale } => {
            let mut out = CMatrix::zeros(n, n);
            out[(0, 1)] = Complex64::new(*scale, 0.0);
            out[(1, 0)] = Complex64::new(*scale, 0.0);
            out
        }
        MatrixConfig::Dense { re, im } => {
            let re = real_matrix(re, n, what)?;
            let im = match im {
                Some(im) => real_matrix(im, n, what)?,
                None => DMatrix::zeros(n, n),
            };
            CMatrix::from_fn(n, n, |i, j| Complex64::new(re[(i, j)], im[(i, j)]))
        }
    })
}

pub struct ContinuumSetup {
    pub domain: Domain1D,
    pub params: PhysParams,
    pub psi: Wavefunction,
    pub dg: DgSpec,
}

pub struct BeableSetup {
    pub system: BeableSystem,
    pub dg: DgJumpSpec,
    pub rates: RateChoice,
}

pub enum Built {
    Continuum(ContinuumSetup),
    Beable(BeableSetup),
}
