//! Particle ensembles: sampling from a grid density, lockstep evolution,
//! histogram estimates and L1 distances to the quantum density, plus the
//! matching Fokker–Planck oracle run.

use log::debug;

use crate::dynamics::{face_drifts, DgSpec, FaceField};
use crate::error::{Error, Result};
use crate::fpe::{fpe_step_varying, positivity_dt, GridDensity};
use crate::grid::Domain1D;
use crate::sde::{step_particles, DriftSnapshot, Particle, PsiTimeline, RngStream};
use crate::wavefunction::{PhysParams, RealField};

pub const DEFAULT_BINS: usize = 50;

/// Stream index reserved for drawing initial positions.
pub const SAMPLING_STREAM: u64 = u64::MAX;

/// Uniform bins on `[lo, hi]`. Samples outside fall into the edge bins.
#[derive(Clone, Debug, PartialEq)]
pub struct BinSpec {
    pub lo: f64,
    pub hi: f64,
    pub n_bins: usize,
}

impl BinSpec {
    pub fn new(lo: f64, hi: f64, n_bins: usize) -> Result<Self> {
        if !(hi > lo) || n_bins == 0 {
            return Err(Error::InvalidArgument(format!(
                "bad bins [{lo}, {hi}] x {n_bins}"
            )));
        }
        Ok(Self { lo, hi, n_bins })
    }

    /// Whole ring, or `mid ± 4σ` about the centre of a line, where `σ²` is the
    /// second moment of `rho` about that centre.
    pub fn for_density(rho: &RealField, n_bins: usize) -> Result<Self> {
        let d = &rho.domain;
        if d.is_ring() {
            return Self::new(d.x_min(), d.x_max(), n_bins);
        }
        let mid = 0.5 * (d.x_min() + d.x_max());
        let m2: Vec<f64> = d
            .xs()
            .iter()
            .zip(&rho.values)
            .map(|(x, r)| (x - mid).powi(2) * r)
            .collect();
        let half = 4.0 * (d.integrate(&m2) / d.integrate(&rho.values)).sqrt();
        Self::new(
            (mid - half).max(d.x_min()),
            (mid + half).min(d.x_max()),
            n_bins,
        )
    }

    pub fn width(&self) -> f64 {
        (self.hi - self.lo) / self.n_bins as f64
    }

    pub fn edge(&self, k: usize) -> f64 {
        self.lo + k as f64 * self.width()
    }

    pub fn centre(&self, k: usize) -> f64 {
        self.lo + (k as f64 + 0.5) * self.width()
    }

    #[inline]
    pub fn index(&self, x: f64) -> usize {
        let k = ((x - self.lo) / self.width()).floor();
        if k < 0.0 {
            0
        } else {
            (k as usize).min(self.n_bins - 1)
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct EmpiricalDensity {
    pub bins: BinSpec,
    pub probabilities: Vec<f64>,
    pub time: f64,
}

impl EmpiricalDensity {
    pub fn from_positions(
        positions: impl IntoIterator<Item = f64>,
        bins: &BinSpec,
        time: f64,
    ) -> Self {
        let mut counts = vec![0u64; bins.n_bins];
        let mut n = 0u64;
        for x in positions {
            counts[bins.index(x)] += 1;
            n += 1;
        }
        let probabilities = counts
            .iter()
            .map(|&c| if n > 0 { c as f64 / n as f64 } else { 0.0 })
            .collect();
        Self {
            bins: bins.clone(),
            probabilities,
            time,
        }
    }

    pub fn l1(&self, reference: &[f64]) -> f64 {
        l1_distance(&self.probabilities, reference)
    }
}

pub fn l1_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum()
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct DistanceSeries {
    pub times: Vec<f64>,
    pub distances: Vec<f64>,
}

impl DistanceSeries {
    pub fn push(&mut self, t: f64, d: f64) {
        self.times.push(t);
        self.distances.push(d);
    }

    pub fn max(&self) -> f64 {
        self.distances.iter().copied().fold(0.0, f64::max)
    }

    pub fn at(&self, t: f64) -> Option<f64> {
        self.times
            .iter()
            .position(|&s| (s - t).abs() < 1e-9)
            .map(|k| self.distances[k])
    }
}

/// Piecewise-linear interpolant of nodal values and its running integral.
struct LinearCdf {
    domain: Domain1D,
    values: Vec<f64>,
    /// `cumulative[k]` is the mass left of node `k`; the last entry is the total.
    cumulative: Vec<f64>,
}

impl LinearCdf {
    fn new(rho: &RealField) -> Result<Self> {
        let d = rho.domain.clone();
        let n = d.n_points();
        let cells = if d.is_ring() { n } else { n - 1 };
        let h = d.dx();
        let mut cumulative = Vec::with_capacity(cells + 1);
        cumulative.push(0.0);
        let mut acc = 0.0;
        for k in 0..cells {
            let (a, b) = (rho.values[k], rho.values[(k + 1) % n]);
            if !(a >= 0.0 && b >= 0.0) {
                return Err(Error::InvalidArgument(format!(
                    "density must be finite and nonnegative (node {k})"
                )));
            }
            acc += 0.5 * (a + b) * h;
            cumulative.push(acc);
        }
        if !(acc > 0.0) {
            return Err(Error::ZeroNorm);
        }
        Ok(Self {
            domain: d,
            values: rho.values.clone(),
            cumulative,
        })
    }

    fn total(&self) -> f64 {
        *self.cumulative.last().unwrap()
    }

    fn cell_ends(&self, k: usize) -> (f64, f64) {
        let n = self.values.len();
        (self.values[k], self.values[(k + 1) % n])
    }

    /// Mass on `[x_min, x]`, with `x` clamped to the domain.
    fn cdf(&self, x: f64) -> f64 {
        let d = &self.domain;
        let h = d.dx();
        let cells = self.cumulative.len() - 1;
        let s = ((x - d.x_min()) / h).clamp(0.0, cells as f64);
        let k = (s.floor() as usize).min(cells - 1);
        let t = (s - k as f64) * h;
        let (a, b) = self.cell_ends(k);
        self.cumulative[k] + a * t + 0.5 * (b - a) * t * t / h
    }

    /// Position with `cdf(x) = u · total`.
    fn inverse(&self, u: f64) -> f64 {
        let target = u * self.total();
        let cells = self.cumulative.len() - 1;
        // First cell whose right cumulative exceeds the target.
        let mut k = self
            .cumulative
            .partition_point(|&c| c <= target)
            .saturating_sub(1);
        k = k.min(cells - 1);
        while self.cumulative[k + 1] <= self.cumulative[k] && k + 1 < cells {
            k += 1;
        }
        let h = self.domain.dx();
        let (a, b) = self.cell_ends(k);
        let m = (target - self.cumulative[k]).max(0.0);
        let disc = (a * a + 2.0 * (b - a) * m / h).max(0.0);
        let denom = a + disc.sqrt();
        let t = if denom > 0.0 {
            (2.0 * m / denom).min(h)
        } else {
            0.0
        };
        self.domain.x(k) + t
    }
}

/// Probability of each bin under the piecewise-linear interpolant of `rho`,
/// with the tails beyond the bin range added to the edge bins.
pub fn reference_probabilities(rho: &RealField, bins: &BinSpec) -> Result<Vec<f64>> {
    let cdf = LinearCdf::new(rho)?;
    let total = cdf.total();
    let mut out = Vec::with_capacity(bins.n_bins);
    for k in 0..bins.n_bins {
        let left = if k == 0 { 0.0 } else { cdf.cdf(bins.edge(k)) };
        let right = if k + 1 == bins.n_bins {
            total
        } else {
            cdf.cdf(bins.edge(k + 1))
        };
        out.push((right - left) / total);
    }
    Ok(out)
}

/// `n` independent draws from the piecewise-linear density by inverse CDF.
pub fn sample_density(rho: &RealField, n: usize, rng: &mut RngStream) -> Result<Vec<f64>> {
    let cdf = LinearCdf::new(rho)?;
    let d = &rho.domain;
    Ok((0..n).map(|_| d.wrap(cdf.inverse(rng.uniform()))).collect())
}

/// `n` independent uniform draws on `[a, b]`.
pub fn sample_uniform(a: f64, b: f64, n: usize, rng: &mut RngStream) -> Vec<f64> {
    (0..n).map(|_| a + (b - a) * rng.uniform()).collect()
}

/// Step indices for report times measured from `t0`.
pub fn report_steps(t0: f64, dt: f64, report_times: &[f64]) -> Result<Vec<usize>> {
    let mut out = Vec::with_capacity(report_times.len());
    let mut last = 0;
    for &t in report_times {
        let k = ((t - t0) / dt).round();
        if !(k >= 0.0) || (t - t0 - k * dt).abs() > 1e-6 * dt.max(1.0) {
            return Err(Error::InvalidArgument(format!(
                "report time {t} is not on the dt = {dt} lattice from {t0}"
            )));
        }
        let k = k as usize;
        if k < last {
            return Err(Error::InvalidArgument(
                "report times must be increasing".into(),
            ));
        }
        last = k;
        out.push(k);
    }
    Ok(out)
}

#[derive(Clone, Debug)]
pub struct EnsembleRun {
    pub densities: Vec<EmpiricalDensity>,
    /// Bin probabilities of `|ψ|²` at each report time.
    pub references: Vec<Vec<f64>>,
    pub series: DistanceSeries,
    /// Mean and variance of the (wrapped) positions at each report time.
    pub moments: Vec<[f64; 2]>,
    pub initial: Vec<f64>,
    pub particles: Vec<Particle>,
    pub elapsed: f64,
}

impl EnsembleRun {
    pub fn nodal_incidents(&self) -> u64 {
        self.particles
            .iter()
            .map(|p| p.nodal_incidents as u64)
            .sum()
    }

    pub fn recovered(&self) -> u64 {
        self.particles.iter().map(|p| p.recovered as u64).sum()
    }

    pub fn boundary_events(&self) -> u64 {
        self.particles
            .iter()
            .map(|p| p.boundary_events as u64)
            .sum()
    }

    /// Mean unrolled displacement per unit time (ring winding velocity).
    pub fn mean_velocity(&self, domain: &Domain1D) -> f64 {
        let n = self.particles.len() as f64;
        let moved: f64 = self
            .particles
            .iter()
            .zip(&self.initial)
            .map(|(p, x0)| p.unwrapped(domain) - x0)
            .sum();
        moved / n / self.elapsed
    }
}

/// Evolves `positions` against the timeline and compares the histogram with
/// `|ψ(t)|²` at each report time. Particle `i` uses stream `(master_seed, i)`.
#[allow(clippy::too_many_arguments)]
pub fn evolve_ensemble(
    positions: &[f64],
    timeline: &mut PsiTimeline,
    params: &PhysParams,
    spec: &DgSpec,
    master_seed: u64,
    dt: f64,
    report_times: &[f64],
    bins: &BinSpec,
) -> Result<EnsembleRun> {
    let t0 = timeline.current().time();
    let steps = report_steps(t0, dt, report_times)?;
    let domain = timeline.current().domain().clone();
    spec.validate(&domain)?;

    let first = DriftSnapshot::from_psi(timeline.current(), params, spec)?;
    if let Some(x) = positions.iter().find(|&&x| first.drift_at(x).is_none()) {
        return Err(Error::NodalState(format!("initial position {x} is nodal")));
    }
    let mut particles: Vec<Particle> = positions
        .iter()
        .enumerate()
        .map(|(i, &x)| Particle::new(domain.wrap(x), RngStream::new(master_seed, i as u64)))
        .collect();

    let mut run = EnsembleRun {
        densities: Vec::with_capacity(steps.len()),
        references: Vec::with_capacity(steps.len()),
        series: DistanceSeries::default(),
        moments: Vec::with_capacity(steps.len()),
        initial: particles.iter().map(|p| p.x).collect(),
        particles: Vec::new(),
        elapsed: 0.0,
    };
    let report =
        |particles: &[Particle], timeline: &PsiTimeline, run: &mut EnsembleRun| -> Result<()> {
            let psi = timeline.current();
            let reference = reference_probabilities(&psi.density(), bins)?;
            let emp =
                EmpiricalDensity::from_positions(particles.iter().map(|p| p.x), bins, psi.time());
            let l1 = emp.l1(&reference);
            debug!("t = {:.4}: L1 = {l1:.4}", psi.time());
            run.series.push(psi.time(), l1);
            let n = particles.len().max(1) as f64;
            let mean = particles.iter().map(|p| p.x).sum::<f64>() / n;
            let var = particles.iter().map(|p| (p.x - mean).powi(2)).sum::<f64>() / n;
            run.moments.push([mean, var]);
            run.densities.push(emp);
            run.references.push(reference);
            Ok(())
        };

    let total = steps.last().copied().unwrap_or(0);
    let mut next = 0;
    let mut snapshot = first;
    for k in 0..=total {
        while next < steps.len() && steps[next] == k {
            report(&particles, timeline, &mut run)?;
            next += 1;
        }
        if k == total {
            break;
        }
        if k > 0 {
            snapshot = DriftSnapshot::from_psi(timeline.current(), params, spec)?;
        }
        step_particles(&mut particles, &snapshot, params, dt);
        timeline.advance(dt)?;
    }
    run.elapsed = timeline.current().time() - t0;
    run.particles = particles;
    Ok(run)
}

/// Relaxation run from a non-equilibrium start; meaningful only with noise.
#[allow(clippy::too_many_arguments)]
pub fn convergence_experiment(
    initial: &[f64],
    timeline: &mut PsiTimeline,
    params: &PhysParams,
    spec: &DgSpec,
    master_seed: u64,
    dt: f64,
    report_times: &[f64],
    bins: &BinSpec,
) -> Result<EnsembleRun> {
    if !(params.alpha > 0.0) {
        return Err(Error::InvalidParams(
            "convergence runs need alpha > 0; use evolve_ensemble for the deterministic control"
                .into(),
        ));
    }
    evolve_ensemble(
        initial,
        timeline,
        params,
        spec,
        master_seed,
        dt,
        report_times,
        bins,
    )
}

fn lerp_faces(a: &FaceField, b: &FaceField, w: f64) -> FaceField {
    FaceField::new(
        a.domain.clone(),
        a.values
            .iter()
            .zip(&b.values)
            .map(|(x, y)| x + w * (y - x))
            .collect(),
        a.time + w * (b.time - a.time),
    )
}

/// Fokker–Planck solution from `p0` with the drift of the timeline, reported
/// at the same times as `evolve_ensemble`. Each SDE step is split into as
/// many substeps as positivity requires, with the face drift interpolated
/// linearly in time between the two wavefunction snapshots.
pub fn fpe_oracle_series(
    p0: &GridDensity,
    timeline: &mut PsiTimeline,
    params: &PhysParams,
    spec: &DgSpec,
    dt: f64,
    report_times: &[f64],
) -> Result<Vec<GridDensity>> {
    let t0 = timeline.current().time();
    let steps = report_steps(t0, dt, report_times)?;
    let nu = params.nu();
    let mut p = p0.clone();
    p.time = t0;
    let mut out = Vec::with_capacity(steps.len());
    let total = steps.last().copied().unwrap_or(0);
    let mut next = 0;
    let mut b_now = face_drifts(timeline.current(), params, spec)?.b;
    for k in 0..=total {
        while next < steps.len() && steps[next] == k {
            out.push(p.clone());
            next += 1;
        }
        if k == total {
            break;
        }
        timeline.advance(dt)?;
        let b_next = face_drifts(timeline.current(), params, spec)?.b;
        let limit = positivity_dt(&b_now, nu).min(positivity_dt(&b_next, nu));
        let subs = (dt / (0.9 * limit)).ceil().max(1.0) as usize;
        let h = dt / subs as f64;
        for s in 0..subs {
            let lo = lerp_faces(&b_now, &b_next, s as f64 / subs as f64);
            let hi = lerp_faces(&b_now, &b_next, (s + 1) as f64 / subs as f64);
            p = fpe_step_varying(&p, &lo, &hi, nu, h)?;
        }
        p.time = timeline.current().time();
        b_now = b_next;
    }
    Ok(out)
}

/// Bin probabilities of a grid density, built like `reference_probabilities`.
pub fn grid_density_bins(p: &GridDensity, bins: &BinSpec) -> Result<Vec<f64>> {
    reference_probabilities(
        &RealField::new(p.domain.clone(), p.values.clone(), p.time),
        bins,
    )
}
