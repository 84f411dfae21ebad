//! Euler–Maruyama integration of `dx = b(x,t) dt + √α dω` with
//! `E[dω²] = (ħ/m) dt`, per-trajectory random streams and a nodal guard.

use rand::RngCore;
use rand_distr::{Distribution, StandardNormal};
use rand_pcg::Pcg64;
use rayon::prelude::*;

use crate::dynamics::{drift_fields, DgSpec};
use crate::error::{Error, Result};
use crate::grid::Domain1D;
use crate::wavefunction::{CnPropagator, PhysParams, Wavefunction};

/// Retries with a halved step before a trajectory is frozen for the step.
pub const MAX_RETRIES: u32 = 8;

/// Random stream keyed by `(master_seed, stream_index)`. Streams with
/// different indices use different PCG increments, so they are independent
/// of each other and of the order in which they are consumed.
#[derive(Clone, Debug)]
pub struct RngStream {
    master_seed: u64,
    stream_index: u64,
    rng: Pcg64,
}

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

impl RngStream {
    pub fn new(master_seed: u64, stream_index: u64) -> Self {
        let hi = splitmix(master_seed) as u128;
        let lo = splitmix(master_seed ^ 0x5851_f42d_4c95_7f2d) as u128;
        Self {
            master_seed,
            stream_index,
            rng: Pcg64::new((hi << 64) | lo, stream_index as u128),
        }
    }

    pub fn master_seed(&self) -> u64 {
        self.master_seed
    }

    pub fn stream_index(&self) -> u64 {
        self.stream_index
    }

    #[inline]
    pub fn standard_normal(&mut self) -> f64 {
        StandardNormal.sample(&mut self.rng)
    }

    /// Uniform on `[0, 1)` with 53 random bits.
    #[inline]
    pub fn uniform(&mut self) -> f64 {
        (self.rng.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }
}

impl RngCore for RngStream {
    fn next_u32(&mut self) -> u32 {
        self.rng.next_u32()
    }

    fn next_u64(&mut self) -> u64 {
        self.rng.next_u64()
    }

    fn fill_bytes(&mut self, dst: &mut [u8]) {
        self.rng.fill_bytes(dst)
    }
}

/// `Δω ~ N(0, (ħ/m) dt)`.
pub fn wiener_increment(rng: &mut RngStream, dt: f64, params: &PhysParams) -> f64 {
    (params.hbar / params.mass * dt).sqrt() * rng.standard_normal()
}

/// Drift and density tabulated on the grid at one instant.
#[derive(Clone, Debug)]
pub struct DriftSnapshot {
    pub domain: Domain1D,
    pub b: Vec<f64>,
    pub rho: Vec<f64>,
    /// Densities below this count as nodal.
    pub floor: f64,
    pub time: f64,
}

impl DriftSnapshot {
    pub fn from_psi(psi: &Wavefunction, params: &PhysParams, spec: &DgSpec) -> Result<Self> {
        let fields = drift_fields(psi, params, spec)?;
        Ok(Self {
            domain: psi.domain().clone(),
            b: fields.b.values,
            rho: psi.density().values,
            floor: psi.node_floor(),
            time: psi.time(),
        })
    }

    /// Nodal-free field given directly, e.g. an analytic drift.
    pub fn from_drift(domain: &Domain1D, b: Vec<f64>, time: f64) -> Self {
        Self {
            domain: domain.clone(),
            rho: vec![1.0; b.len()],
            b,
            floor: 0.0,
            time,
        }
    }

    /// Interpolated drift, or `None` where the density is nodal.
    #[inline]
    pub fn drift_at(&self, x: f64) -> Option<f64> {
        let (i, j, f) = self.domain.locate(x);
        let rho = self.rho[i] + f * (self.rho[j] - self.rho[i]);
        let b = self.b[i] + f * (self.b[j] - self.b[i]);
        if rho < self.floor || b.is_nan() {
            None
        } else {
            Some(b)
        }
    }
}

#[derive(Clone, Debug)]
pub struct Particle {
    pub x: f64,
    /// Net number of times a ring trajectory crossed `x_max` going right.
    pub winding: i64,
    /// Steps on which the trajectory was frozen by the nodal guard.
    pub nodal_incidents: u32,
    /// Steps that hit a nodal point but succeeded after halving.
    pub recovered: u32,
    /// Reflections at line walls.
    pub boundary_events: u32,
    pub rng: RngStream,
}

impl Particle {
    pub fn new(x: f64, rng: RngStream) -> Self {
        Self {
            x,
            winding: 0,
            nodal_incidents: 0,
            recovered: 0,
            boundary_events: 0,
            rng,
        }
    }

    /// Position with ring windings unrolled.
    pub fn unwrapped(&self, domain: &Domain1D) -> f64 {
        self.x + self.winding as f64 * domain.length()
    }
}

/// Folds a proposed position back into the domain. Returns the new position,
/// the winding change and the number of wall reflections.
#[inline]
fn settle(domain: &Domain1D, x: f64) -> (f64, i64, u32) {
    if domain.is_ring() {
        let turns = ((x - domain.x_min()) / domain.length()).floor();
        (domain.wrap(x), turns as i64, 0)
    } else {
        let (lo, hi) = (domain.x_min(), domain.x_max());
        let mut y = x;
        let mut hits = 0;
        while (y < lo || y > hi) && hits < 8 {
            y = if y < lo { 2.0 * lo - y } else { 2.0 * hi - y };
            hits += 1;
        }
        (y.clamp(lo, hi), 0, hits)
    }
}

/// One Euler–Maruyama step `x′ = x + b(x) dt + √α Δω` against a fixed
/// snapshot. Landing on a nodal point triggers up to `MAX_RETRIES` retries
/// with the step halved each time and a fresh increment; if all fail, or if
/// the start point is itself nodal, the particle stays put for this step.
#[inline]
pub fn em_step(p: &mut Particle, drift: &DriftSnapshot, params: &PhysParams, dt: f64) {
    let Some(b) = drift.drift_at(p.x) else {
        p.nodal_incidents += 1;
        return;
    };
    let kick = params.alpha * params.hbar / params.mass;
    let mut h = dt;
    for attempt in 0..=MAX_RETRIES {
        let noise = if kick > 0.0 {
            (kick * h).sqrt() * p.rng.standard_normal()
        } else {
            0.0
        };
        let (y, turns, hits) = settle(&drift.domain, p.x + b * h + noise);
        if drift.drift_at(y).is_some() {
            p.x = y;
            p.winding += turns;
            p.boundary_events += hits;
            if attempt > 0 {
                p.recovered += 1;
            }
            return;
        }
        h *= 0.5;
    }
    p.nodal_incidents += 1;
}

/// Steps every particle once. The result does not depend on the number of
/// worker threads: each particle only touches its own stream.
pub fn step_particles(
    particles: &mut [Particle],
    drift: &DriftSnapshot,
    params: &PhysParams,
    dt: f64,
) {
    particles
        .par_iter_mut()
        .with_min_len(256)
        .for_each(|p| em_step(p, drift, params, dt));
}

/// Wavefunction that is either fixed or advanced by Crank–Nicolson in step
/// with the trajectories.
#[derive(Clone, Debug)]
pub enum PsiTimeline {
    Static(Wavefunction),
    Evolving {
        psi: Wavefunction,
        propagator: CnPropagator,
    },
}

impl PsiTimeline {
    pub fn fixed(psi: Wavefunction) -> Self {
        PsiTimeline::Static(psi)
    }

    pub fn evolving(psi: Wavefunction, params: &PhysParams, dt: f64) -> Result<Self> {
        let propagator = CnPropagator::new(psi.domain(), params, dt)?;
        Ok(PsiTimeline::Evolving { psi, propagator })
    }

    pub fn current(&self) -> &Wavefunction {
        match self {
            PsiTimeline::Static(psi) => psi,
            PsiTimeline::Evolving { psi, .. } => psi,
        }
    }

    /// Moves to the next time level; `dt` must match the propagator step.
    pub fn advance(&mut self, dt: f64) -> Result<()> {
        match self {
            PsiTimeline::Static(psi) => *psi = psi.at_time(psi.time() + dt),
            PsiTimeline::Evolving { psi, propagator } => {
                if (propagator.dt() - dt).abs() > 1e-12 * dt {
                    return Err(Error::InvalidArgument(format!(
                        "timeline built for dt = {}, asked for {dt}",
                        propagator.dt()
                    )));
                }
                *psi = propagator.step(psi)?;
            }
        }
        Ok(())
    }
}

#[derive(Clone, Debug)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub positions: Vec<f64>,
    pub winding: i64,
    pub nodal_incidents: u32,
    pub recovered: u32,
    pub boundary_events: u32,
    pub left_domain: bool,
}

/// Single trajectory from `x0` over `n_steps` steps, drift taken from the
/// timeline at the start of each step.
pub fn propagate_trajectory(
    x0: f64,
    timeline: &mut PsiTimeline,
    params: &PhysParams,
    spec: &DgSpec,
    rng: RngStream,
    dt: f64,
    n_steps: usize,
) -> Result<Trajectory> {
    if !(dt > 0.0) {
        return Err(Error::InvalidArgument(format!("dt must be > 0, got {dt}")));
    }
    let start = DriftSnapshot::from_psi(timeline.current(), params, spec)?;
    if start.drift_at(x0).is_none() {
        return Err(Error::NodalState(format!("start point x0 = {x0} is nodal")));
    }
    let mut p = Particle::new(start.domain.wrap(x0), rng);
    let mut times = vec![timeline.current().time()];
    let mut positions = vec![p.x];
    let mut snapshot = start;
    for k in 0..n_steps {
        if k > 0 {
            snapshot = DriftSnapshot::from_psi(timeline.current(), params, spec)?;
        }
        em_step(&mut p, &snapshot, params, dt);
        timeline.advance(dt)?;
        times.push(timeline.current().time());
        positions.push(p.x);
    }
    Ok(Trajectory {
        times,
        positions,
        winding: p.winding,
        nodal_incidents: p.nodal_incidents,
        recovered: p.recovered,
        boundary_events: p.boundary_events,
        left_domain: p.boundary_events > 0,
    })
}
