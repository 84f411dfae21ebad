//! Velocity fields built from a wavefunction: current, osmotic, the extra
//! divergence-free (DG) pieces, forward and backward drifts. Also the
//! integral diagnostics (finiteness, weak continuity, cross terms).
//!
//! Fields come in two flavours. Nodal fields (`RealField`) use central
//! differences and are what trajectories interpolate. Face fields
//! (`FaceField`) live halfway between nodes and are built so that the
//! three-point discretisation of the Fokker–Planck operator has `|ψ|²` as an
//! exact stationary point of the semi-discrete equation.

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::grid::Domain1D;
use crate::wavefunction::{PhysParams, RealField, Wavefunction};

/// Constant-flux extra current `j_DG = c_v + c_u`, split into a part added to
/// the current velocity and a part added to the osmotic velocity.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct DgSpec {
    pub c_v: f64,
    pub c_u: f64,
}

impl DgSpec {
    pub fn none() -> Self {
        Self::default()
    }

    pub fn new(c_v: f64, c_u: f64) -> Self {
        Self { c_v, c_u }
    }

    pub fn is_zero(&self) -> bool {
        self.c_v == 0.0 && self.c_u == 0.0
    }

    /// A line admits no nonzero constant flux with finite `∫ j²/ρ`.
    pub fn validate(&self, domain: &Domain1D) -> Result<()> {
        if !(self.c_v.is_finite() && self.c_u.is_finite()) {
            return Err(Error::DgSpec("flux constants must be finite".into()));
        }
        if !domain.is_ring() && !self.is_zero() {
            return Err(Error::DgSpec(format!(
                "c_v = {}, c_u = {} on a line domain; extra flux must be zero there",
                self.c_v, self.c_u
            )));
        }
        Ok(())
    }
}

#[derive(Clone, Debug)]
pub struct DriftFields {
    pub v: RealField,
    pub u: RealField,
    pub b: RealField,
    pub b_star: RealField,
    pub nu: f64,
}

/// `v = (ħ/m) ∇S`.
pub fn current_velocity(psi: &Wavefunction, params: &PhysParams) -> RealField {
    psi.grad_phase().scale(params.hbar / params.mass)
}

/// `u = ν ∇ρ/ρ`.
pub fn osmotic_velocity(psi: &Wavefunction, params: &PhysParams) -> RealField {
    psi.grad_log_density().scale(params.nu())
}

fn require_node_free(psi: &Wavefunction) -> Result<()> {
    let floor = psi.node_floor();
    if let Some((i, a)) = psi
        .amplitudes()
        .iter()
        .enumerate()
        .find(|(_, a)| a.norm_sqr() <= floor)
    {
        return Err(Error::NodalState(format!(
            "density {:.3e} at x = {} while extra flux is on",
            a.norm_sqr(),
            psi.domain().x(i)
        )));
    }
    Ok(())
}

/// `(v_DG, u_DG) = (c_v/ρ, c_u/ρ)`.
pub fn dg_velocities(spec: &DgSpec, psi: &Wavefunction) -> Result<(RealField, RealField)> {
    let d = psi.domain();
    spec.validate(d)?;
    if spec.is_zero() {
        return Ok((
            RealField::zeros(d, psi.time()),
            RealField::zeros(d, psi.time()),
        ));
    }
    require_node_free(psi)?;
    let rho = psi.density();
    let over = |c: f64| {
        RealField::new(
            d.clone(),
            rho.values.iter().map(|r| c / r).collect(),
            psi.time(),
        )
    };
    Ok((over(spec.c_v), over(spec.c_u)))
}

pub fn drift_fields(psi: &Wavefunction, params: &PhysParams, spec: &DgSpec) -> Result<DriftFields> {
    let (v_dg, u_dg) = dg_velocities(spec, psi)?;
    let (grad_s, grad_log) = psi.gradient_fields();
    let v = grad_s.scale(params.hbar / params.mass).add(&v_dg);
    let u = grad_log.scale(params.nu()).add(&u_dg);
    let b = v.add(&u);
    let b_star = v.sub(&u);
    Ok(DriftFields {
        v,
        u,
        b,
        b_star,
        nu: params.nu(),
    })
}

/// Values on faces; face `f` joins node `f` to `domain.face_right(f)`.
#[derive(Clone, Debug, PartialEq)]
pub struct FaceField {
    pub domain: Domain1D,
    pub values: Vec<f64>,
    pub time: f64,
}

impl FaceField {
    pub fn new(domain: Domain1D, values: Vec<f64>, time: f64) -> Self {
        debug_assert_eq!(values.len(), domain.n_faces());
        Self {
            domain,
            values,
            time,
        }
    }

    pub fn from_fn(domain: &Domain1D, time: f64, f: impl Fn(f64) -> f64) -> Self {
        let values = (0..domain.n_faces()).map(|k| f(domain.face_x(k))).collect();
        Self::new(domain.clone(), values, time)
    }

    pub fn constant(domain: &Domain1D, time: f64, c: f64) -> Self {
        Self::new(domain.clone(), vec![c; domain.n_faces()], time)
    }

    pub fn scale(&self, k: f64) -> FaceField {
        FaceField::new(
            self.domain.clone(),
            self.values.iter().map(|v| k * v).collect(),
            self.time,
        )
    }
}

#[derive(Clone, Debug)]
pub struct FaceDrifts {
    pub v: FaceField,
    pub u: FaceField,
    pub b: FaceField,
    pub b_star: FaceField,
    pub nu: f64,
}

/// Staggered drifts with `ρ̄ = (ρ_i + ρ_{i+1})/2`:
/// `v = (ħ/m) Im(ψ_i* ψ_{i+1}) / (Δx ρ̄) + c_v/ρ̄` and
/// `u = ν (ρ_{i+1} − ρ_i) / (Δx ρ̄) + c_u/ρ̄`.
/// Faces where `ρ̄` falls below the node floor carry zero drift.
pub fn face_drifts(psi: &Wavefunction, params: &PhysParams, spec: &DgSpec) -> Result<FaceDrifts> {
    let d = psi.domain();
    spec.validate(d)?;
    if !spec.is_zero() {
        require_node_free(psi)?;
    }
    let a = psi.amplitudes();
    let dx = d.dx();
    let nu = params.nu();
    let floor = psi.node_floor();
    let nf = d.n_faces();
    let mut v = Vec::with_capacity(nf);
    let mut u = Vec::with_capacity(nf);
    for f in 0..nf {
        let (l, r) = (a[f], a[d.face_right(f)]);
        let (rl, rr) = (l.norm_sqr(), r.norm_sqr());
        let mean = 0.5 * (rl + rr);
        if mean < floor || mean == 0.0 {
            v.push(0.0);
            u.push(0.0);
            continue;
        }
        let flux: Complex64 = l.conj() * r;
        v.push(params.hbar / params.mass * flux.im / (dx * mean) + spec.c_v / mean);
        u.push(nu * (rr - rl) / (dx * mean) + spec.c_u / mean);
    }
    let b = v.iter().zip(&u).map(|(v, u)| v + u).collect();
    let b_star = v.iter().zip(&u).map(|(v, u)| v - u).collect();
    let t = psi.time();
    Ok(FaceDrifts {
        v: FaceField::new(d.clone(), v, t),
        u: FaceField::new(d.clone(), u, t),
        b: FaceField::new(d.clone(), b, t),
        b_star: FaceField::new(d.clone(), b_star, t),
        nu,
    })
}

/// Spatial integrands `(∫(u² + v²)ρ dx, ∫(v_DG² + u_DG²)ρ dx)` at one instant,
/// trapezoidal in x, flagged nodes skipped.
pub fn finiteness_integrands(
    psi: &Wavefunction,
    params: &PhysParams,
    spec: &DgSpec,
) -> Result<(f64, f64)> {
    let fields = drift_fields(psi, params, spec)?;
    let rho = psi.density();
    let d = psi.domain();
    let mut carlen = 0.0;
    for i in 0..d.n_points() {
        let (u, v) = (fields.u.values[i], fields.v.values[i]);
        if u.is_nan() || v.is_nan() {
            continue;
        }
        carlen += (u * u + v * v) * rho.values[i] * d.quad_weight(i);
    }
    // (c/ρ)² ρ = c²/ρ; the DG fields exist only on node-free states.
    let dg = if spec.is_zero() {
        0.0
    } else {
        let c2 = spec.c_v * spec.c_v + spec.c_u * spec.c_u;
        (0..d.n_points())
            .map(|i| c2 / rho.values[i] * d.quad_weight(i))
            .sum()
    };
    Ok((carlen, dg))
}

/// Space-time quadratures `(carlen_integral, dg_integral)` over a trajectory
/// of snapshots at uniform spacing. Each snapshot stands for the interval of
/// width `dt` centred on it (midpoint rule in time).
pub fn check_finiteness(
    psi_trajectory: &[Wavefunction],
    spec: &DgSpec,
    params: &PhysParams,
) -> Result<(f64, f64)> {
    if psi_trajectory.len() < 2 {
        return Err(Error::InvalidArgument(
            "need at least two snapshots to fix the time step".into(),
        ));
    }
    let dt = psi_trajectory[1].time() - psi_trajectory[0].time();
    if !(dt > 0.0) {
        return Err(Error::InvalidArgument(
            "snapshot times must increase".into(),
        ));
    }
    for w in psi_trajectory.windows(2) {
        let step = w[1].time() - w[0].time();
        if (step - dt).abs() > 1e-6 * dt {
            return Err(Error::InvalidArgument(format!(
                "non-uniform snapshot spacing: {step} vs {dt}"
            )));
        }
    }
    let (mut carlen, mut dg) = (0.0, 0.0);
    for psi in psi_trajectory {
        let (c, g) = finiteness_integrands(psi, params, spec)?;
        carlen += c * dt;
        dg += g * dt;
    }
    if !carlen.is_finite() {
        return Err(Error::Divergent(format!("carlen integral = {carlen}")));
    }
    if !dg.is_finite() {
        return Err(Error::Divergent(format!("dg integral = {dg}")));
    }
    Ok((carlen, dg))
}

/// Nodal probability current `vρ = (ħ/m) Im(ψ* ∂ψ) + c_v`; needs no division.
fn nodal_current(psi: &Wavefunction, params: &PhysParams, spec: &DgSpec) -> Vec<f64> {
    let d = psi.domain();
    let a = psi.amplitudes();
    let n = d.n_points();
    let h2 = 2.0 * d.dx();
    let k = params.hbar / params.mass;
    (0..n)
        .map(|i| {
            let zero = Complex64::new(0.0, 0.0);
            let left = if i > 0 {
                a[i - 1]
            } else if d.is_ring() {
                a[n - 1]
            } else {
                zero
            };
            let right = if i + 1 < n {
                a[i + 1]
            } else if d.is_ring() {
                a[0]
            } else {
                zero
            };
            k * (a[i].conj() * (right - left)).im / h2 + spec.c_v
        })
        .collect()
}

/// `max_f |d/dt ∫fρ dx − ∫ f′ vρ dx|`, the time derivative by the difference
/// of the two snapshots and the flux term averaged over them.
pub fn check_weak_continuity(
    psi: &Wavefunction,
    psi_next: &Wavefunction,
    params: &PhysParams,
    spec: &DgSpec,
    test_functions: &[RealField],
) -> Result<f64> {
    let d = psi.domain();
    if !psi_next.domain().same_grid(d) {
        return Err(Error::DomainMismatch("snapshots on different grids".into()));
    }
    spec.validate(d)?;
    let dt = psi_next.time() - psi.time();
    if !(dt > 0.0) {
        return Err(Error::InvalidArgument(
            "psi_next must be later than psi".into(),
        ));
    }
    let (rho0, rho1) = (psi.density(), psi_next.density());
    let (j0, j1) = (
        nodal_current(psi, params, spec),
        nodal_current(psi_next, params, spec),
    );
    let mut worst: f64 = 0.0;
    for f in test_functions {
        if !f.domain.same_grid(d) {
            return Err(Error::DomainMismatch(
                "test function on another grid".into(),
            ));
        }
        let df = d.gradient(&f.values);
        let weighted = |g: &[f64], h: &[f64]| {
            d.integrate(&g.iter().zip(h).map(|(a, b)| a * b).collect::<Vec<_>>())
        };
        let lhs = (weighted(&f.values, &rho1.values) - weighted(&f.values, &rho0.values)) / dt;
        let rhs = 0.5 * (weighted(&df, &j0) + weighted(&df, &j1));
        worst = worst.max((lhs - rhs).abs());
    }
    Ok(worst)
}

/// `(∫ν(∇ρ/ρ) u_DG ρ dx, ∫(ħ/m)∇S v_DG ρ dx)`. With `u_DG ρ = c_u` and
/// `v_DG ρ = c_v` constant, the integrands are total derivatives; on the grid
/// they are summed as face differences of `log ρ` and of the phase so that
/// the sums telescope.
pub fn check_cross_terms(
    psi: &Wavefunction,
    params: &PhysParams,
    spec: &DgSpec,
) -> Result<(f64, f64)> {
    let d = psi.domain();
    spec.validate(d)?;
    if spec.is_zero() {
        return Ok((0.0, 0.0));
    }
    require_node_free(psi)?;
    let a = psi.amplitudes();
    let (mut log_sum, mut phase_sum) = (0.0, 0.0);
    for f in 0..d.n_faces() {
        let (l, r) = (a[f], a[d.face_right(f)]);
        log_sum += r.norm_sqr().ln() - l.norm_sqr().ln();
        phase_sum += (l.conj() * r).arg();
    }
    let cross_u = params.nu() * spec.c_u * log_sum;
    let cross_v = params.hbar / params.mass * spec.c_v * phase_sum;
    Ok((cross_u, cross_v))
}
