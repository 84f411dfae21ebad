//! Grid wavefunctions, their analytic constructors, the Crank–Nicolson
//! propagator and the real fields (density, phase gradient, log-density
//! gradient) that every dynamics consumes.

use std::f64::consts::PI;

use log::warn;
use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::grid::{Domain1D, DomainKind};
use crate::tridiag::Tridiagonal;

/// Relative density below which derived fields are flagged (set to NaN).
pub const NODE_EPS: f64 = 1e-12;

/// Largest probability mass an analytic state may lose to grid truncation.
pub const TRUNCATION_LIMIT: f64 = 1e-10;

#[derive(Clone, Debug, PartialEq)]
pub struct PhysParams {
    pub hbar: f64,
    pub mass: f64,
    pub alpha: f64,
    /// `V(x)` tabulated on the grid nodes.
    pub potential: Vec<f64>,
}

impl PhysParams {
    pub fn new(hbar: f64, mass: f64, alpha: f64, potential: Vec<f64>) -> Result<Self> {
        if !(hbar > 0.0 && hbar.is_finite()) {
            return Err(Error::InvalidParams(format!(
                "hbar must be > 0, got {hbar}"
            )));
        }
        if !(mass > 0.0 && mass.is_finite()) {
            return Err(Error::InvalidParams(format!(
                "mass must be > 0, got {mass}"
            )));
        }
        if !(alpha >= 0.0 && alpha.is_finite()) {
            return Err(Error::InvalidParams(format!(
                "alpha must be >= 0, got {alpha}"
            )));
        }
        if potential.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidParams(
                "potential contains non-finite values".into(),
            ));
        }
        Ok(Self {
            hbar,
            mass,
            alpha,
            potential,
        })
    }

    pub fn free(domain: &Domain1D, hbar: f64, mass: f64, alpha: f64) -> Result<Self> {
        Self::new(hbar, mass, alpha, vec![0.0; domain.n_points()])
    }

    /// `V(x) = m ω² x² / 2`.
    pub fn harmonic(
        domain: &Domain1D,
        omega: f64,
        hbar: f64,
        mass: f64,
        alpha: f64,
    ) -> Result<Self> {
        let v = domain
            .xs()
            .iter()
            .map(|x| 0.5 * mass * omega * omega * x * x)
            .collect();
        Self::new(hbar, mass, alpha, v)
    }

    /// Diffusion coefficient `ν = α ħ / 2m`.
    pub fn nu(&self) -> f64 {
        self.alpha * self.hbar / (2.0 * self.mass)
    }

    pub fn with_alpha(&self, alpha: f64) -> Result<Self> {
        Self::new(self.hbar, self.mass, alpha, self.potential.clone())
    }

    fn check_grid(&self, domain: &Domain1D) -> Result<()> {
        if self.potential.len() != domain.n_points() {
            return Err(Error::DomainMismatch(format!(
                "potential has {} entries, grid has {} points",
                self.potential.len(),
                domain.n_points()
            )));
        }
        Ok(())
    }
}

/// Real values on grid nodes. Flagged (nodal) points hold NaN.
#[derive(Clone, Debug, PartialEq)]
pub struct RealField {
    pub domain: Domain1D,
    pub values: Vec<f64>,
    pub time: f64,
}

impl RealField {
    pub fn new(domain: Domain1D, values: Vec<f64>, time: f64) -> Self {
        debug_assert_eq!(values.len(), domain.n_points());
        Self {
            domain,
            values,
            time,
        }
    }

    pub fn zeros(domain: &Domain1D, time: f64) -> Self {
        Self::new(domain.clone(), vec![0.0; domain.n_points()], time)
    }

    pub fn from_fn(domain: &Domain1D, time: f64, f: impl Fn(f64) -> f64) -> Self {
        Self::new(
            domain.clone(),
            domain.xs().into_iter().map(f).collect(),
            time,
        )
    }

    pub fn is_flagged(&self, i: usize) -> bool {
        self.values[i].is_nan()
    }

    pub fn flagged_count(&self) -> usize {
        self.values.iter().filter(|v| v.is_nan()).count()
    }

    pub fn at(&self, x: f64) -> f64 {
        self.domain.interpolate(&self.values, x)
    }

    fn zip_with(&self, other: &RealField, f: impl Fn(f64, f64) -> f64) -> RealField {
        debug_assert!(self.domain.same_grid(&other.domain));
        RealField::new(
            self.domain.clone(),
            self.values
                .iter()
                .zip(&other.values)
                .map(|(&a, &b)| f(a, b))
                .collect(),
            self.time,
        )
    }

    pub fn add(&self, other: &RealField) -> RealField {
        self.zip_with(other, |a, b| a + b)
    }

    pub fn sub(&self, other: &RealField) -> RealField {
        self.zip_with(other, |a, b| a - b)
    }

    pub fn scale(&self, k: f64) -> RealField {
        RealField::new(
            self.domain.clone(),
            self.values.iter().map(|v| k * v).collect(),
            self.time,
        )
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Wavefunction {
    domain: Domain1D,
    amplitudes: Vec<Complex64>,
    time: f64,
}

impl Wavefunction {
    /// Normalizes the amplitudes so that `Σ|ψ_i|² Δx = 1`.
    pub fn from_amplitudes(
        domain: Domain1D,
        amplitudes: Vec<Complex64>,
        time: f64,
    ) -> Result<Self> {
        if amplitudes.len() != domain.n_points() {
            return Err(Error::DomainMismatch(format!(
                "{} amplitudes for a {}-point grid",
                amplitudes.len(),
                domain.n_points()
            )));
        }
        if amplitudes
            .iter()
            .any(|a| !(a.re.is_finite() && a.im.is_finite()))
        {
            return Err(Error::InvalidArgument("non-finite amplitude".into()));
        }
        let mut psi = Self {
            domain,
            amplitudes,
            time,
        };
        let norm = psi.norm();
        if !(norm > 1e-300) {
            return Err(Error::ZeroNorm);
        }
        let k = 1.0 / norm.sqrt();
        psi.amplitudes.iter_mut().for_each(|a| *a *= k);
        Ok(psi)
    }

    pub fn from_fn(domain: &Domain1D, time: f64, f: impl Fn(f64) -> Complex64) -> Result<Self> {
        let amps = domain.xs().into_iter().map(f).collect();
        Self::from_amplitudes(domain.clone(), amps, time)
    }

    pub fn domain(&self) -> &Domain1D {
        &self.domain
    }

    pub fn amplitudes(&self) -> &[Complex64] {
        &self.amplitudes
    }

    pub fn time(&self) -> f64 {
        self.time
    }

    /// Same amplitudes, new time stamp.
    pub fn at_time(&self, time: f64) -> Wavefunction {
        Wavefunction {
            time,
            ..self.clone()
        }
    }

    /// `Σ|ψ_i|² Δx`.
    pub fn norm(&self) -> f64 {
        self.amplitudes.iter().map(|a| a.norm_sqr()).sum::<f64>() * self.domain.dx()
    }

    pub fn density(&self) -> RealField {
        RealField::new(
            self.domain.clone(),
            self.amplitudes.iter().map(|a| a.norm_sqr()).collect(),
            self.time,
        )
    }

    /// Absolute density threshold `NODE_EPS · max ρ` below which fields are flagged.
    pub fn node_floor(&self) -> f64 {
        let max = self
            .amplitudes
            .iter()
            .map(|a| a.norm_sqr())
            .fold(0.0_f64, f64::max);
        NODE_EPS * max
    }

    /// Central difference of ψ; the hard wall of a line grid is a zero ghost node.
    fn derivative(&self) -> Vec<Complex64> {
        let n = self.domain.n_points();
        let h2 = 2.0 * self.domain.dx();
        let zero = Complex64::new(0.0, 0.0);
        let ring = self.domain.is_ring();
        (0..n)
            .map(|i| {
                let left = match (i, ring) {
                    (0, true) => self.amplitudes[n - 1],
                    (0, false) => zero,
                    _ => self.amplitudes[i - 1],
                };
                let right = match (i + 1 == n, ring) {
                    (true, true) => self.amplitudes[0],
                    (true, false) => zero,
                    _ => self.amplitudes[i + 1],
                };
                (right - left) / h2
            })
            .collect()
    }

    /// `ψ* ∂ψ / ρ` at every node, NaN at flagged nodes.
    fn log_derivative(&self) -> Vec<Complex64> {
        let floor = self.node_floor();
        let nan = Complex64::new(f64::NAN, f64::NAN);
        self.derivative()
            .iter()
            .zip(&self.amplitudes)
            .map(|(d, a)| {
                let rho = a.norm_sqr();
                if rho < floor || rho == 0.0 {
                    nan
                } else {
                    a.conj() * d / rho
                }
            })
            .collect()
    }

    /// `∇S = Im(ψ* ∂ψ) / ρ`.
    pub fn grad_phase(&self) -> RealField {
        let values = self.log_derivative().iter().map(|z| z.im).collect();
        RealField::new(self.domain.clone(), values, self.time)
    }

    /// `∇ρ / ρ = 2 Re(ψ* ∂ψ) / ρ`.
    pub fn grad_log_density(&self) -> RealField {
        let values = self.log_derivative().iter().map(|z| 2.0 * z.re).collect();
        RealField::new(self.domain.clone(), values, self.time)
    }

    /// `ψ* ∂ψ / ρ` split into `(∇S, ∇ρ/ρ)` in one pass.
    pub fn gradient_fields(&self) -> (RealField, RealField) {
        let z = self.log_derivative();
        (
            RealField::new(
                self.domain.clone(),
                z.iter().map(|z| z.im).collect(),
                self.time,
            ),
            RealField::new(
                self.domain.clone(),
                z.iter().map(|z| 2.0 * z.re).collect(),
                self.time,
            ),
        )
    }
}

/// Harmonic-oscillator eigenfunction `n` (Hermite–Gaussian), including the
/// phase `e^{-i E_n t / ħ}`.
pub fn make_harmonic_eigenstate(
    n: usize,
    omega: f64,
    params: &PhysParams,
    domain: &Domain1D,
    t: f64,
) -> Result<Wavefunction> {
    if !(omega > 0.0) {
        return Err(Error::InvalidParams(format!(
            "omega must be > 0, got {omega}"
        )));
    }
    let scale = (params.mass * omega / params.hbar).sqrt();
    let f = |x: f64| hermite_function(n, scale * x) * scale.sqrt();
    if domain.kind() == DomainKind::Line {
        let reach = (2.0 * n as f64 + 1.0).sqrt() / scale;
        let lost = tail_mass(|x| f(x).powi(2), domain.x_max(), 1.0, reach)
            + tail_mass(|x| f(x).powi(2), domain.x_min(), -1.0, reach);
        if lost > TRUNCATION_LIMIT {
            return Err(Error::DomainTooNarrow {
                mass: lost,
                limit: TRUNCATION_LIMIT,
            });
        }
    }
    let energy = params.hbar * omega * (n as f64 + 0.5);
    let phase = Complex64::from_polar(1.0, -energy * t / params.hbar);
    Wavefunction::from_fn(domain, t, |x| phase * f(x))
}

/// Normalized Hermite function `φ_n(ξ)` by the stable three-term recurrence.
pub fn hermite_function(n: usize, xi: f64) -> f64 {
    let mut prev = PI.powf(-0.25) * (-0.5 * xi * xi).exp();
    if n == 0 {
        return prev;
    }
    let mut cur = 2f64.sqrt() * xi * prev;
    for k in 1..n {
        let k = k as f64;
        let next = (2.0 / (k + 1.0)).sqrt() * xi * cur - (k / (k + 1.0)).sqrt() * prev;
        prev = cur;
        cur = next;
    }
    cur
}

/// `∫ f` from `edge` outward (`direction` = ±1) by composite Simpson, out to
/// 40 length scales past the edge.
fn tail_mass(f: impl Fn(f64) -> f64, edge: f64, direction: f64, scale: f64) -> f64 {
    let span = 40.0 * scale;
    let steps = 4000;
    let h = span / steps as f64;
    let mut acc = f(edge) + f(edge + direction * span);
    for k in 1..steps {
        let w = if k % 2 == 1 { 4.0 } else { 2.0 };
        acc += w * f(edge + direction * k as f64 * h);
    }
    acc * h / 3.0
}

pub fn make_superposition(states: &[Wavefunction], coeffs: &[Complex64]) -> Result<Wavefunction> {
    let first = states
        .first()
        .ok_or_else(|| Error::InvalidArgument("empty superposition".into()))?;
    if states.len() != coeffs.len() {
        return Err(Error::InvalidArgument(format!(
            "{} states but {} coefficients",
            states.len(),
            coeffs.len()
        )));
    }
    for s in states {
        if !s.domain.same_grid(&first.domain) {
            return Err(Error::DomainMismatch(
                "superposed states live on different grids".into(),
            ));
        }
        if (s.time - first.time).abs() > 1e-12 {
            return Err(Error::DomainMismatch(format!(
                "superposed states at different times ({} vs {})",
                s.time, first.time
            )));
        }
    }
    if coeffs.iter().all(|c| c.norm() == 0.0) {
        return Err(Error::ZeroNorm);
    }
    let n = first.domain.n_points();
    let mut amps = vec![Complex64::new(0.0, 0.0); n];
    for (s, c) in states.iter().zip(coeffs) {
        for (a, b) in amps.iter_mut().zip(&s.amplitudes) {
            *a += c * b;
        }
    }
    // Cancellation: the combination is numerically empty relative to its parts.
    let scale: f64 = coeffs.iter().map(|c| c.norm_sqr()).sum();
    let raw: f64 = amps.iter().map(|a| a.norm_sqr()).sum::<f64>() * first.domain.dx();
    if raw < 1e-20 * scale {
        return Err(Error::ZeroNorm);
    }
    Wavefunction::from_amplitudes(first.domain.clone(), amps, first.time)
}

/// `ψ(x) = e^{ikx} / √L` with `k = 2π k_index / L`.
pub fn make_plane_wave_ring(k_index: i64, domain: &Domain1D, t: f64) -> Result<Wavefunction> {
    if !domain.is_ring() {
        return Err(Error::NotRing);
    }
    let k = 2.0 * PI * k_index as f64 / domain.length();
    let x0 = domain.x_min();
    Wavefunction::from_fn(domain, t, |x| Complex64::from_polar(1.0, k * (x - x0)))
}

/// Freely spreading Gaussian packet, exact at time `t`.
pub fn make_free_gaussian(
    x0: f64,
    p0: f64,
    sigma0: f64,
    t: f64,
    params: &PhysParams,
    domain: &Domain1D,
) -> Result<Wavefunction> {
    if !(sigma0 > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "sigma0 must be > 0, got {sigma0}"
        )));
    }
    let (hbar, m) = (params.hbar, params.mass);
    let tau = hbar * t / (2.0 * m * sigma0 * sigma0);
    let centre = x0 + p0 * t / m;
    let width = sigma0 * (1.0 + tau * tau).sqrt();
    if domain.kind() == DomainKind::Line {
        let gauss = |x: f64| {
            (-(x - centre).powi(2) / (2.0 * width * width)).exp() / (width * (2.0 * PI).sqrt())
        };
        let lost = tail_mass(gauss, domain.x_max(), 1.0, width)
            + tail_mass(gauss, domain.x_min(), -1.0, width);
        if lost > TRUNCATION_LIMIT {
            return Err(Error::DomainTooNarrow {
                mass: lost,
                limit: TRUNCATION_LIMIT,
            });
        }
    }
    let spread = Complex64::new(1.0, tau);
    let prefactor = spread.sqrt().inv();
    Wavefunction::from_fn(domain, t, |x| {
        let y = x - centre;
        let envelope = (-(y * y) / (4.0 * sigma0 * sigma0 * spread)).exp();
        let boost = Complex64::from_polar(1.0, (p0 * x - 0.5 * p0 * p0 * t / m) / hbar);
        prefactor * envelope * boost
    })
}

/// Crank–Nicolson stepper for `iħ ∂ψ/∂t = -(ħ²/2m) ∂²ψ + Vψ` with the
/// three-point Laplacian: periodic on a ring, hard walls on a line.
#[derive(Clone, Debug)]
pub struct CnPropagator {
    domain: Domain1D,
    dt: f64,
    hbar: f64,
    lhs: Tridiagonal<Complex64>,
    rhs: Tridiagonal<Complex64>,
}

impl CnPropagator {
    pub fn new(domain: &Domain1D, params: &PhysParams, dt: f64) -> Result<Self> {
        if !(dt > 0.0 && dt.is_finite()) {
            return Err(Error::InvalidArgument(format!("dt must be > 0, got {dt}")));
        }
        params.check_grid(domain)?;
        let dx = domain.dx();
        let soft_limit = 10.0 * dx * dx * params.mass / params.hbar;
        if dt > soft_limit {
            warn!("CN step dt = {dt:.3e} exceeds 10·Δx²·m/ħ = {soft_limit:.3e}; phases will be inaccurate");
        }
        let n = domain.n_points();
        let kinetic = params.hbar * params.hbar / (params.mass * dx * dx);
        let half = Complex64::new(0.0, 0.5 * dt / params.hbar);
        let mut lhs = Tridiagonal::zeros(n);
        let mut rhs = Tridiagonal::zeros(n);
        let one = Complex64::new(1.0, 0.0);
        for i in 0..n {
            let h_diag = Complex64::new(kinetic + params.potential[i], 0.0);
            let h_off = Complex64::new(-0.5 * kinetic, 0.0);
            lhs.diag[i] = one + half * h_diag;
            rhs.diag[i] = one - half * h_diag;
            lhs.lower[i] = half * h_off;
            lhs.upper[i] = half * h_off;
            rhs.lower[i] = -half * h_off;
            rhs.upper[i] = -half * h_off;
        }
        Ok(Self {
            domain: domain.clone(),
            dt,
            hbar: params.hbar,
            lhs,
            rhs,
        })
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn hbar(&self) -> f64 {
        self.hbar
    }

    pub fn step(&self, psi: &Wavefunction) -> Result<Wavefunction> {
        if !psi.domain.same_grid(&self.domain) {
            return Err(Error::DomainMismatch(
                "propagator built for another grid".into(),
            ));
        }
        let ring = self.domain.is_ring();
        let b = self.rhs.apply(&psi.amplitudes, ring);
        let amplitudes = self.lhs.solve(&b, ring)?;
        Ok(Wavefunction {
            domain: self.domain.clone(),
            amplitudes,
            time: psi.time + self.dt,
        })
    }
}

/// One Crank–Nicolson step of length `dt`.
pub fn propagate_cn(psi: &Wavefunction, params: &PhysParams, dt: f64) -> Result<Wavefunction> {
    CnPropagator::new(psi.domain(), params, dt)?.step(psi)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ho_line() -> (Domain1D, PhysParams) {
        let d = Domain1D::line(-8.0, 8.0, 512).unwrap();
        let p = PhysParams::harmonic(&d, 1.0, 1.0, 1.0, 1.0).unwrap();
        (d, p)
    }

    fn value_at(f: &RealField, x: f64) -> f64 {
        f.at(x)
    }

    #[test]
    fn params_validation() {
        let d = Domain1D::line(-1.0, 1.0, 16).unwrap();
        assert!(PhysParams::free(&d, 0.0, 1.0, 1.0).is_err());
        assert!(PhysParams::free(&d, 1.0, -1.0, 1.0).is_err());
        assert!(PhysParams::free(&d, 1.0, 1.0, -0.1).is_err());
        let p = PhysParams::free(&d, 2.0, 4.0, 3.0).unwrap();
        assert_eq!(p.nu(), 3.0 * 2.0 / 8.0);
    }

    #[test]
    fn ground_state_peak_density() {
        // ρ(0) = π^{-1/2} for ω = ħ = m = 1; x = 0 is not a node of the grid,
        // so compare at the nearest nodes through the analytic profile.
        let d = Domain1D::line(-8.0, 8.0, 513).unwrap();
        let p = PhysParams::harmonic(&d, 1.0, 1.0, 1.0, 1.0).unwrap();
        let psi = make_harmonic_eigenstate(0, 1.0, &p, &d, 0.0).unwrap();
        let rho = psi.density();
        assert!((rho.values[256] - PI.powf(-0.5)).abs() < 1e-9);
        assert!((psi.norm() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn ground_state_phase_is_flat_at_any_time() {
        let (d, p) = ho_line();
        let psi = make_harmonic_eigenstate(0, 1.0, &p, &d, 1.7).unwrap();
        let gs = psi.grad_phase();
        for (i, v) in gs.values.iter().enumerate() {
            if !gs.is_flagged(i) {
                assert!(v.abs() < 1e-10);
            }
        }
    }

    #[test]
    fn first_excited_state_has_node_at_origin() {
        let d = Domain1D::line(-8.0, 8.0, 513).unwrap();
        let p = PhysParams::harmonic(&d, 1.0, 1.0, 1.0, 1.0).unwrap();
        let psi = make_harmonic_eigenstate(1, 1.0, &p, &d, 0.0).unwrap();
        assert!(psi.density().values[256] < 1e-28);
        assert!(psi.grad_phase().is_flagged(256));
        assert!(psi.grad_log_density().is_flagged(256));
    }

    #[test]
    fn narrow_domain_is_rejected() {
        let d = Domain1D::line(-2.0, 2.0, 128).unwrap();
        let p = PhysParams::harmonic(&d, 1.0, 1.0, 1.0, 1.0).unwrap();
        assert!(matches!(
            make_harmonic_eigenstate(0, 1.0, &p, &d, 0.0),
            Err(Error::DomainTooNarrow { .. })
        ));
        let p = PhysParams::free(&d, 1.0, 1.0, 1.0).unwrap();
        assert!(make_free_gaussian(0.0, 0.0, 1.0, 0.0, &p, &d).is_err());
    }

    #[test]
    fn superposition_cases() {
        let (d, p) = ho_line();
        let psi0 = make_harmonic_eigenstate(0, 1.0, &p, &d, 0.0).unwrap();
        let psi1 = make_harmonic_eigenstate(1, 1.0, &p, &d, 0.0).unwrap();
        let one = Complex64::new(1.0, 0.0);

        let same = make_superposition(&[psi0.clone()], &[one]).unwrap();
        for (a, b) in same.amplitudes().iter().zip(psi0.amplitudes()) {
            assert!((a - b).norm() < 1e-14);
        }

        let r = Complex64::new(FRAC_1_SQRT_2, 0.0);
        let mix = make_superposition(&[psi0.clone(), psi1.clone()], &[r, r]).unwrap();
        assert!((mix.norm() - 1.0).abs() < 1e-12);
        // Analytic: ρ = (φ0 + φ1)²/2 with φ1 = √2 x φ0; asymmetric about 0.
        let rho = mix.density();
        for x in [0.5, 1.0, 1.5] {
            let phi0 = |x: f64| PI.powf(-0.25) * (-0.5 * x * x).exp();
            let exact = |x: f64| 0.5 * (phi0(x) * (1.0 + 2f64.sqrt() * x)).powi(2);
            assert!((value_at(&rho, x) - exact(x)).abs() < 1e-3);
            assert!(value_at(&rho, x) > value_at(&rho, -x));
        }

        assert!(matches!(
            make_superposition(&[psi0.clone(), psi0.clone()], &[one, -one]),
            Err(Error::ZeroNorm)
        ));

        let other = Domain1D::line(-8.0, 8.0, 256).unwrap();
        let po = PhysParams::harmonic(&other, 1.0, 1.0, 1.0, 1.0).unwrap();
        let psi_other = make_harmonic_eigenstate(0, 1.0, &po, &other, 0.0).unwrap();
        assert!(matches!(
            make_superposition(&[psi0, psi_other], &[one, one]),
            Err(Error::DomainMismatch(_))
        ));
    }

    use std::f64::consts::FRAC_1_SQRT_2;

    #[test]
    fn plane_wave_fields() {
        let d = Domain1D::ring(0.0, 2.0 * PI, 256).unwrap();
        let flat = make_plane_wave_ring(0, &d, 0.0).unwrap();
        for v in flat.density().values {
            assert!((v - 1.0 / (2.0 * PI)).abs() < 1e-14);
        }
        assert!(flat.grad_phase().values.iter().all(|v| v.abs() < 1e-12));

        let psi = make_plane_wave_ring(1, &d, 0.0).unwrap();
        // Central differences see sin(kΔx)/(kΔx) instead of 1.
        let h = d.dx();
        let expected = h.sin() / h;
        for (s, l) in psi
            .grad_phase()
            .values
            .iter()
            .zip(psi.grad_log_density().values)
        {
            assert!((s - expected).abs() < 1e-12);
            assert!((s - 1.0).abs() < 2e-4);
            assert!(l.abs() < 1e-12);
        }
        assert!(matches!(
            make_plane_wave_ring(1, &Domain1D::line(0.0, 1.0, 32).unwrap(), 0.0),
            Err(Error::NotRing)
        ));
    }

    #[test]
    fn free_gaussian_at_t0() {
        let d = Domain1D::line(-20.0, 20.0, 2001).unwrap();
        let p = PhysParams::free(&d, 1.0, 1.0, 1.0).unwrap();
        let psi = make_free_gaussian(0.0, 0.0, 1.5, 0.0, &p, &d).unwrap();
        let rho = psi.density();
        let var = d
            .xs()
            .iter()
            .zip(&rho.values)
            .map(|(x, r)| x * x * r)
            .sum::<f64>()
            * d.dx();
        assert!((var - 2.25).abs() < 1e-8);

        let moving = make_free_gaussian(0.0, 1.0, 1.5, 0.0, &p, &d).unwrap();
        let gs = moving.grad_phase();
        for i in 800..1200 {
            // O(Δx²) stencil bias, including the envelope curvature.
            assert!((gs.values[i] - 1.0).abs() < 5e-4);
        }
    }

    #[test]
    fn cn_keeps_eigenstate_density_and_norm() {
        let (d, p) = ho_line();
        let mut psi = make_harmonic_eigenstate(0, 1.0, &p, &d, 0.0).unwrap();
        let rho0 = psi.density();
        let cn = CnPropagator::new(&d, &p, 1e-3).unwrap();
        for _ in 0..200 {
            let next = cn.step(&psi).unwrap();
            assert!((next.norm() - 1.0).abs() < 1e-10);
            psi = next;
        }
        // The analytic state is an O(Δx²) approximation of the grid eigenstate.
        let drift = psi
            .density()
            .values
            .iter()
            .zip(&rho0.values)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        assert!(drift < 1e-4, "{drift}");
    }
}
