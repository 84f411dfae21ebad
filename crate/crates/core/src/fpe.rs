//! Finite-volume Crank–Nicolson solver for `∂P/∂t = −∇·(bP − ν∇P)` with the
//! drift given on cell faces.
//!
//! The face flux is `J = b P̄ − ν (P_{i+1} − P_i)/Δx`. `P̄` is the central
//! average while the cell Péclet number `|b|Δx/ν` stays at or below 2 and the
//! upwind value beyond that, which keeps the off-diagonal couplings
//! nonnegative. Line ends are zero-flux walls.

use log::warn;

use crate::dynamics::FaceField;
use crate::error::{Error, Result};
use crate::grid::Domain1D;
use crate::tridiag::Tridiagonal;
use crate::wavefunction::RealField;

/// Cells below this value make the step fail instead of being clipped.
pub const NEGATIVE_LIMIT: f64 = -1e-8;

#[derive(Clone, Debug, PartialEq)]
pub struct GridDensity {
    pub domain: Domain1D,
    pub values: Vec<f64>,
    pub time: f64,
    /// Cells clipped to zero so far along this solution.
    pub clipped: usize,
}

impl GridDensity {
    /// Rescales `values` so that `Σ P_i Δx = 1`.
    pub fn normalized(domain: &Domain1D, values: Vec<f64>, time: f64) -> Result<Self> {
        if values.len() != domain.n_points() {
            return Err(Error::DomainMismatch(format!(
                "{} values for a {}-point grid",
                values.len(),
                domain.n_points()
            )));
        }
        if let Some((cell, &value)) = values
            .iter()
            .enumerate()
            .find(|(_, v)| !v.is_finite() || **v < 0.0)
        {
            return Err(Error::NegativeDensity { cell, value });
        }
        let mass: f64 = values.iter().sum::<f64>() * domain.dx();
        if !(mass > 0.0) {
            return Err(Error::ZeroNorm);
        }
        Ok(Self {
            domain: domain.clone(),
            values: values.into_iter().map(|v| v / mass).collect(),
            time,
            clipped: 0,
        })
    }

    pub fn from_field(field: &RealField) -> Result<Self> {
        Self::normalized(&field.domain, field.values.clone(), field.time)
    }

    pub fn uniform(domain: &Domain1D, time: f64) -> Result<Self> {
        Self::normalized(domain, vec![1.0; domain.n_points()], time)
    }

    /// Normalized indicator of the nodes inside `[a, b]`.
    pub fn indicator(domain: &Domain1D, a: f64, b: f64, time: f64) -> Result<Self> {
        let values = domain
            .xs()
            .iter()
            .map(|&x| {
                if x >= a - 1e-12 && x <= b + 1e-12 {
                    1.0
                } else {
                    0.0
                }
            })
            .collect();
        Self::normalized(domain, values, time)
    }

    /// `Σ P_i Δx`.
    pub fn mass(&self) -> f64 {
        self.values.iter().sum::<f64>() * self.domain.dx()
    }

    pub fn variance(&self) -> f64 {
        let xs = self.domain.xs();
        let m = self.mass();
        let mean =
            xs.iter().zip(&self.values).map(|(x, p)| x * p).sum::<f64>() * self.domain.dx() / m;
        xs.iter()
            .zip(&self.values)
            .map(|(x, p)| (x - mean).powi(2) * p)
            .sum::<f64>()
            * self.domain.dx()
            / m
    }

    pub fn max_abs_diff(&self, other: &[f64]) -> f64 {
        self.values
            .iter()
            .zip(other)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }
}

/// Flux weights `(α, β)` with `J = α P_i + β P_{i+1}`.
#[inline]
fn flux_weights(b: f64, nu: f64, dx: f64) -> (f64, f64) {
    let d = nu / dx;
    if b.abs() * dx <= 2.0 * nu {
        (0.5 * b + d, 0.5 * b - d)
    } else if b > 0.0 {
        (b + d, -d)
    } else {
        (d, b - d)
    }
}

/// Generator `A` of the semi-discrete system `dP/dt = A P`.
fn generator(b: &FaceField, nu: f64) -> Tridiagonal<f64> {
    let d = &b.domain;
    let n = d.n_points();
    let dx = d.dx();
    let mut a = Tridiagonal::zeros(n);
    for f in 0..d.n_faces() {
        let bf = if b.values[f].is_finite() {
            b.values[f]
        } else {
            0.0
        };
        let (alpha, beta) = flux_weights(bf, nu, dx);
        let (i, j) = (f, d.face_right(f));
        a.diag[i] -= alpha / dx;
        a.upper[i] -= beta / dx;
        a.lower[j] += alpha / dx;
        a.diag[j] += beta / dx;
    }
    a
}

/// Largest step for which the explicit half of the scheme keeps every
/// coefficient nonnegative, so that positive data stay positive.
pub fn positivity_dt(b: &FaceField, nu: f64) -> f64 {
    let a = generator(b, nu);
    let worst = a.diag.iter().fold(0.0_f64, |m, v| m.max(-v));
    if worst > 0.0 {
        2.0 / worst
    } else {
        f64::INFINITY
    }
}

fn check_inputs(p: &GridDensity, fields: &[&FaceField], nu: f64, dt: f64) -> Result<()> {
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(Error::InvalidArgument(format!("dt must be > 0, got {dt}")));
    }
    if !(nu >= 0.0 && nu.is_finite()) {
        return Err(Error::InvalidArgument(format!("nu must be >= 0, got {nu}")));
    }
    for b in fields {
        if !b.domain.same_grid(&p.domain) {
            return Err(Error::DomainMismatch(
                "drift and density on different grids".into(),
            ));
        }
    }
    let dx = p.domain.dx();
    if nu > 0.0 && dt > 10.0 * dx * dx / nu {
        warn!(
            "FPE step dt = {dt:.3e} exceeds 10·Δx²/ν = {:.3e}",
            10.0 * dx * dx / nu
        );
    }
    Ok(())
}

/// One Crank–Nicolson step with drift `b_now` at the old time level and
/// `b_next` at the new one.
pub fn fpe_step_varying(
    p: &GridDensity,
    b_now: &FaceField,
    b_next: &FaceField,
    nu: f64,
    dt: f64,
) -> Result<GridDensity> {
    check_inputs(p, &[b_now, b_next], nu, dt)?;
    let ring = p.domain.is_ring();
    let mut explicit = generator(b_now, nu);
    let mut implicit = generator(b_next, nu);
    let h = 0.5 * dt;
    for i in 0..p.domain.n_points() {
        explicit.lower[i] *= h;
        explicit.upper[i] *= h;
        explicit.diag[i] = 1.0 + h * explicit.diag[i];
        implicit.lower[i] *= -h;
        implicit.upper[i] *= -h;
        implicit.diag[i] = 1.0 - h * implicit.diag[i];
    }
    let rhs = explicit.apply(&p.values, ring);
    let mut values = implicit.solve(&rhs, ring)?;

    let mut clipped = 0;
    for (cell, v) in values.iter_mut().enumerate() {
        if *v < NEGATIVE_LIMIT {
            return Err(Error::NegativeDensity { cell, value: *v });
        }
        if *v < 0.0 {
            *v = 0.0;
            clipped += 1;
        }
    }
    if clipped > 0 {
        let before = p.mass();
        let after: f64 = values.iter().sum::<f64>() * p.domain.dx();
        values.iter_mut().for_each(|v| *v *= before / after);
    }
    Ok(GridDensity {
        domain: p.domain.clone(),
        values,
        time: p.time + dt,
        clipped: p.clipped + clipped,
    })
}

/// One forward step with a drift that does not change over the step.
pub fn fpe_step(p: &GridDensity, b: &FaceField, nu: f64, dt: f64) -> Result<GridDensity> {
    fpe_step_varying(p, b, b, nu, dt)
}

/// One step of the backward equation `∂P/∂t = −∇·(b*P + ν∇P)`, taken in
/// reversed time: the result is `P(t − dt)`. With `s = −t` the equation is a
/// forward one in `s` with drift `−b*`, which is the well-posed direction.
pub fn fpe_backward_step(
    p: &GridDensity,
    b_star: &FaceField,
    nu: f64,
    dt: f64,
) -> Result<GridDensity> {
    let reversed = b_star.scale(-1.0);
    let mut out = fpe_step(p, &reversed, nu, dt)?;
    out.time = p.time - dt;
    Ok(out)
}

#[cfg(test)]
mod tests {
    use std::f64::consts::PI;

    use super::*;
    use crate::dynamics::{face_drifts, DgSpec};
    use crate::wavefunction::{make_harmonic_eigenstate, make_plane_wave_ring, PhysParams};

    fn line() -> Domain1D {
        Domain1D::line(-8.0, 8.0, 512).unwrap()
    }

    #[test]
    fn weights_switch_to_upwind_at_high_peclet() {
        assert_eq!(flux_weights(1.0, 1.0, 0.1), (0.5 + 10.0, 0.5 - 10.0));
        assert_eq!(flux_weights(30.0, 1.0, 0.1), (30.0 + 10.0, -10.0));
        assert_eq!(flux_weights(-30.0, 1.0, 0.1), (10.0, -30.0 - 10.0));
        assert_eq!(flux_weights(2.0, 0.0, 0.1), (2.0, 0.0));
    }

    #[test]
    fn ground_state_is_stationary_for_any_alpha() {
        let d = line();
        for alpha in [0.5, 1.0, 2.0] {
            let p = PhysParams::harmonic(&d, 1.0, 1.0, 1.0, alpha).unwrap();
            let psi = make_harmonic_eigenstate(0, 1.0, &p, &d, 0.0).unwrap();
            let fd = face_drifts(&psi, &p, &DgSpec::none()).unwrap();
            let start = GridDensity::from_field(&psi.density()).unwrap();
            let mut dens = start.clone();
            for _ in 0..1000 {
                dens = fpe_step(&dens, &fd.b, fd.nu, 1e-3).unwrap();
            }
            assert!(dens.max_abs_diff(&start.values) < 1e-6, "alpha {alpha}");
            assert!((dens.mass() - 1.0).abs() < 1e-10);
        }
    }

    #[test]
    fn ou_relaxes_to_gaussian() {
        let d = line();
        let b = FaceField::from_fn(&d, 0.0, |x| -x);
        let mut dens = GridDensity::uniform(&d, 0.0).unwrap();
        let dt = 0.9 * positivity_dt(&b, 0.5);
        let steps = (20.0 / dt).ceil() as usize;
        for _ in 0..steps {
            dens = fpe_step(&dens, &b, 0.5, dt).unwrap();
        }
        let exact: Vec<f64> = d.xs().iter().map(|x| (-x * x).exp() / PI.sqrt()).collect();
        assert!(dens.max_abs_diff(&exact) < 1e-3);
        assert!((dens.variance() - 0.5).abs() < 1e-3);
    }

    #[test]
    fn pure_advection_moves_the_peak() {
        let d = Domain1D::ring(0.0, 2.0 * PI, 512).unwrap();
        let start: Vec<f64> = d
            .xs()
            .iter()
            .map(|x| (-(x - 2.0).powi(2) * 8.0).exp())
            .collect();
        let mut dens = GridDensity::normalized(&d, start, 0.0).unwrap();
        let b = FaceField::constant(&d, 0.0, 1.0);
        let dt = 0.5 * d.dx();
        let steps = 400;
        for _ in 0..steps {
            dens = fpe_step(&dens, &b, 0.0, dt).unwrap();
        }
        let peak = dens
            .values
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.total_cmp(b.1))
            .unwrap()
            .0;
        let expected = 2.0 + steps as f64 * dt;
        assert!((d.x(peak) - expected).abs() <= d.dx() + 1e-12);
        assert!((dens.mass() - 1.0).abs() < 1e-10);
    }

    #[test]
    fn backward_step_is_forward_with_negated_drift() {
        let d = line();
        let b = FaceField::from_fn(&d, 0.0, |x| 0.3 * x.sin());
        let dens = GridDensity::uniform(&d, 1.0).unwrap();
        let back = fpe_backward_step(&dens, &b, 0.0, 1e-2).unwrap();
        let fwd = fpe_step(&dens, &b.scale(-1.0), 0.0, 1e-2).unwrap();
        assert_eq!(back.values, fwd.values);
        assert_eq!(back.time, 1.0 - 1e-2);
    }

    #[test]
    fn forward_then_backward_on_equilibrium() {
        let d = line();
        let p = PhysParams::harmonic(&d, 1.0, 1.0, 1.0, 1.0).unwrap();
        let psi = make_harmonic_eigenstate(0, 1.0, &p, &d, 0.0).unwrap();
        let fd = face_drifts(&psi, &p, &DgSpec::none()).unwrap();
        let start = GridDensity::from_field(&psi.density()).unwrap();
        let mut dens = start.clone();
        for _ in 0..500 {
            dens = fpe_step(&dens, &fd.b, fd.nu, 2e-3).unwrap();
        }
        for _ in 0..500 {
            dens = fpe_backward_step(&dens, &fd.b_star, fd.nu, 2e-3).unwrap();
        }
        assert!(dens.max_abs_diff(&start.values) < 1e-5);
        assert!(dens.time.abs() < 1e-12);
    }

    #[test]
    fn dg_ring_equilibrium_is_stationary() {
        let d = Domain1D::ring(0.0, 2.0 * PI, 512).unwrap();
        let p = PhysParams::free(&d, 1.0, 1.0, 1.0).unwrap();
        let psi = make_plane_wave_ring(1, &d, 0.0).unwrap();
        let fd = face_drifts(&psi, &p, &DgSpec::new(0.1, 0.05)).unwrap();
        let start = GridDensity::from_field(&psi.density()).unwrap();
        let mut dens = start.clone();
        for _ in 0..1000 {
            dens = fpe_step(&dens, &fd.b, fd.nu, 1e-3).unwrap();
        }
        assert!(dens.max_abs_diff(&start.values) < 1e-10);
    }

    #[test]
    fn large_negative_cells_fail() {
        let d = Domain1D::ring(0.0, 1.0, 64).unwrap();
        let dens = GridDensity::indicator(&d, 0.4, 0.6, 0.0).unwrap();
        // A huge step with pure diffusion makes CN ring.
        let b = FaceField::constant(&d, 0.0, 0.0);
        assert!(matches!(
            fpe_step(&dens, &b, 1.0, 1.0),
            Err(Error::NegativeDensity { .. })
        ));
        let safe = positivity_dt(&b, 1.0);
        let next = fpe_step(&dens, &b, 1.0, safe).unwrap();
        assert!(next.values.iter().all(|&v| v >= 0.0));
    }
}
