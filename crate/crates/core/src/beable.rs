//! Discrete beables: a finite Hermitian system, probability currents between
//! projector eigenspaces, jump rates realising them, the master equation and
//! Monte Carlo jump trajectories.
//!
//! Index convention: `J[(j, i)]` is the net current from state `i` into
//! state `j` and `T[(j, i)]` the rate of jumps `i → j`.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use num_complex::Complex64;
use rayon::prelude::*;

use crate::ensemble::report_steps;
use crate::error::{Error, Result};
use crate::sde::RngStream;

pub type CMatrix = DMatrix<Complex64>;
pub type CVector = DVector<Complex64>;

/// Probabilities below this make a state unable to carry outgoing current.
pub const EPS_P: f64 = 1e-12;
/// Currents at or below this magnitude count as zero.
pub const EPS_J: f64 = 1e-12;
pub const HERMITIAN_TOL: f64 = 1e-12;
/// Largest number of substeps a jump step is split into.
pub const MAX_SUBSTEPS: usize = 256;
/// Target bound on `rate · h` per jump substep.
pub const JUMP_PROBABILITY_CAP: f64 = 0.05;

fn c(re: f64) -> Complex64 {
    Complex64::new(re, 0.0)
}

fn hermitian_deviation(m: &CMatrix) -> f64 {
    (m - m.adjoint())
        .iter()
        .map(|z| z.norm())
        .fold(0.0, f64::max)
}

/// Eigendecomposition `M = V diag(λ) V†` of a Hermitian matrix.
#[derive(Clone, Debug)]
struct Spectral {
    values: Vec<f64>,
    vectors: CMatrix,
}

impl Spectral {
    fn new(m: &CMatrix) -> Result<Self> {
        if !m.is_square() {
            return Err(Error::InvalidSystem("matrix is not square".into()));
        }
        let dev = hermitian_deviation(m);
        if dev > HERMITIAN_TOL {
            return Err(Error::NonHermitian(dev));
        }
        let eig = SymmetricEigen::new(m.clone());
        if eig.eigenvalues.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidSystem("eigendecomposition failed".into()));
        }
        Ok(Self {
            values: eig.eigenvalues.iter().copied().collect(),
            vectors: eig.eigenvectors,
        })
    }

    /// `exp(−i θ M)`.
    fn exp_i(&self, theta: f64) -> CMatrix {
        let phases = CVector::from_iterator(
            self.values.len(),
            self.values
                .iter()
                .map(|l| Complex64::from_polar(1.0, -l * theta)),
        );
        let mut scaled = self.vectors.clone();
        for (k, mut col) in scaled.column_iter_mut().enumerate() {
            col *= phases[k];
        }
        scaled * self.vectors.adjoint()
    }
}

#[derive(Clone, Debug)]
pub enum ProjectorFamily {
    /// `P_i = |i⟩⟨i|`.
    Fixed,
    /// `P_i(t) = U(t) |i⟩⟨i| U(t)†` with `U(t) = exp(−i G λ t / ħ)`.
    Rotating { generator: CMatrix, rate: f64 },
}

#[derive(Clone, Debug)]
pub struct BeableSystem {
    hbar: f64,
    hamiltonian: CMatrix,
    family: ProjectorFamily,
    h_spec: Spectral,
    g_spec: Option<Spectral>,
    psi: CVector,
    time: f64,
}

impl BeableSystem {
    pub fn new(
        hamiltonian: CMatrix,
        family: ProjectorFamily,
        psi0: CVector,
        hbar: f64,
        t0: f64,
    ) -> Result<Self> {
        let n = hamiltonian.nrows();
        if n < 2 || n > 64 {
            return Err(Error::InvalidSystem(format!(
                "dimension {n} outside 2..=64"
            )));
        }
        if !(hbar > 0.0) {
            return Err(Error::InvalidParams(format!(
                "hbar must be > 0, got {hbar}"
            )));
        }
        if psi0.len() != n {
            return Err(Error::InvalidSystem(format!(
                "state has {} entries, Hamiltonian is {n}x{n}",
                psi0.len()
            )));
        }
        let h_spec = Spectral::new(&hamiltonian)?;
        let g_spec = match &family {
            ProjectorFamily::Fixed => None,
            ProjectorFamily::Rotating { generator, rate } => {
                if generator.shape() != (n, n) {
                    return Err(Error::InvalidSystem(
                        "generator shape differs from H".into(),
                    ));
                }
                if !rate.is_finite() {
                    return Err(Error::InvalidSystem("rotation rate must be finite".into()));
                }
                Some(Spectral::new(generator)?)
            }
        };
        let norm = psi0.norm();
        if !(norm > 1e-150) {
            return Err(Error::ZeroNorm);
        }
        Ok(Self {
            hbar,
            hamiltonian,
            family,
            h_spec,
            g_spec,
            psi: psi0 / c(norm),
            time: t0,
        })
    }

    pub fn fixed(hamiltonian: CMatrix, psi0: CVector) -> Result<Self> {
        Self::new(hamiltonian, ProjectorFamily::Fixed, psi0, 1.0, 0.0)
    }

    pub fn dim(&self) -> usize {
        self.hamiltonian.nrows()
    }

    pub fn hbar(&self) -> f64 {
        self.hbar
    }

    pub fn time(&self) -> f64 {
        self.time
    }

    pub fn state(&self) -> &CVector {
        &self.psi
    }

    pub fn hamiltonian(&self) -> &CMatrix {
        &self.hamiltonian
    }

    pub fn family(&self) -> &ProjectorFamily {
        &self.family
    }

    /// `ψ(t)` from the stored state by exact evolution.
    pub fn state_at(&self, t: f64) -> CVector {
        if t == self.time {
            return self.psi.clone();
        }
        self.h_spec.exp_i((t - self.time) / self.hbar) * &self.psi
    }

    /// Columns are the basis vectors `e_k(t)` spanning the projectors.
    pub fn basis_at(&self, t: f64) -> CMatrix {
        match (&self.family, &self.g_spec) {
            (ProjectorFamily::Rotating { rate, .. }, Some(g)) => g.exp_i(rate * t / self.hbar),
            _ => CMatrix::identity(self.dim(), self.dim()),
        }
    }

    fn rotation(&self) -> Option<(&CMatrix, f64)> {
        match &self.family {
            ProjectorFamily::Rotating { generator, rate } => Some((generator, *rate)),
            ProjectorFamily::Fixed => None,
        }
    }

    /// `P_j(t)` as a matrix.
    pub fn projector(&self, j: usize, t: f64) -> CMatrix {
        let e = self.basis_at(t).column(j).into_owned();
        &e * e.adjoint()
    }

    /// `Ṗ_j(t) = (−iλ/ħ)[G, P_j(t)]`; zero for a fixed basis.
    pub fn projector_rate(&self, j: usize, t: f64) -> CMatrix {
        match self.rotation() {
            None => CMatrix::zeros(self.dim(), self.dim()),
            Some((g, rate)) => {
                let p = self.projector(j, t);
                (g * &p - &p * g) * Complex64::new(0.0, -rate / self.hbar)
            }
        }
    }

    /// `a_k = ⟨e_k(t)|ψ(t)⟩`, plus `H` and `G` in the same basis.
    fn rotating_frame(&self, t: f64) -> (CVector, CMatrix, Option<(CMatrix, f64)>) {
        let psi = self.state_at(t);
        match self.rotation() {
            None => (psi, self.hamiltonian.clone(), None),
            Some((g, rate)) => {
                let u = self.basis_at(t);
                let ud = u.adjoint();
                (
                    &ud * psi,
                    &ud * &self.hamiltonian * &u,
                    Some((&ud * g * &u, rate)),
                )
            }
        }
    }
}

/// `p_i = ⟨ψ(t)|P_i(t)|ψ(t)⟩`.
pub fn quantum_probabilities(sys: &BeableSystem, t: f64) -> Vec<f64> {
    let (a, _, _) = sys.rotating_frame(t);
    a.iter().map(|z| z.norm_sqr()).collect()
}

/// Advances the stored state by `dt` with the exact propagator.
pub fn evolve_state(sys: &mut BeableSystem, dt: f64) -> Result<()> {
    if !(dt > 0.0) {
        return Err(Error::InvalidArgument(format!("dt must be > 0, got {dt}")));
    }
    let next = sys.state_at(sys.time + dt);
    let norm = next.norm();
    sys.psi = next / c(norm);
    sys.time += dt;
    Ok(())
}

/// `ṗ_j = (2/ħ) Im⟨ψ|P_j H|ψ⟩ + ⟨ψ|Ṗ_j|ψ⟩`.
pub fn pdot(sys: &BeableSystem, t: f64) -> Vec<f64> {
    let (a, h, g) = sys.rotating_frame(t);
    let n = sys.dim();
    let hb = sys.hbar;
    (0..n)
        .map(|j| {
            let mut acc = 0.0;
            for i in 0..n {
                let mut k = h[(j, i)];
                if let Some((g, rate)) = &g {
                    k -= g[(j, i)] * *rate;
                }
                acc += 2.0 / hb * (a[j].conj() * k * a[i]).im;
            }
            acc
        })
        .collect()
}

/// Antisymmetric current matrix with zero row sums.
#[derive(Clone, Debug, PartialEq)]
pub struct DgJumpSpec {
    matrix: DMatrix<f64>,
}

impl DgJumpSpec {
    pub fn new(matrix: DMatrix<f64>) -> Result<Self> {
        if !matrix.is_square() {
            return Err(Error::DgSpec("extra current must be square".into()));
        }
        let n = matrix.nrows();
        for j in 0..n {
            for i in 0..n {
                if (matrix[(j, i)] + matrix[(i, j)]).abs() > 1e-14 || !matrix[(j, i)].is_finite() {
                    return Err(Error::DgSpec(format!("not antisymmetric at ({j}, {i})")));
                }
            }
            let row: f64 = matrix.row(j).iter().sum();
            if row.abs() > 1e-14 {
                return Err(Error::DgSpec(format!("row {j} sums to {row:e}, not 0")));
            }
        }
        Ok(Self { matrix })
    }

    pub fn zero(n: usize) -> Self {
        Self {
            matrix: DMatrix::zeros(n, n),
        }
    }

    /// Circulating flux `c` around `0 → 1 → … → n−1 → 0`.
    pub fn cyclic(n: usize, flux: f64) -> Result<Self> {
        let mut m = DMatrix::zeros(n, n);
        for k in 0..n {
            let next = (k + 1) % n;
            m[(next, k)] += flux;
            m[(k, next)] -= flux;
        }
        Self::new(m)
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct JumpCurrent {
    pub j: DMatrix<f64>,
    pub time: f64,
}

impl JumpCurrent {
    pub fn row_sums(&self) -> Vec<f64> {
        self.j.row_iter().map(|r| r.iter().sum()).collect()
    }
}

/// `J_ji = (2/ħ) Im⟨ψ|P_j H P_i|ψ⟩ + ⟨ψ|Ṗ_j P_i − Ṗ_i P_j|ψ⟩ + J^DG_ji`,
/// evaluated through the amplitudes `a_k = ⟨e_k|ψ⟩`, where it reads
/// `(2/ħ) Im(a_j* (H − λG)_ji a_i)` in the rotating basis.
pub fn total_current(sys: &BeableSystem, t: f64, dg: &DgJumpSpec) -> Result<JumpCurrent> {
    let n = sys.dim();
    if dg.matrix.nrows() != n {
        return Err(Error::DgSpec(format!(
            "extra current is {0}x{0}, system has dimension {n}",
            dg.matrix.nrows()
        )));
    }
    let (a, h, g) = sys.rotating_frame(t);
    let hb = sys.hbar;
    let mut j = DMatrix::zeros(n, n);
    for row in 0..n {
        for col in 0..n {
            if row == col {
                continue;
            }
            let mut k = h[(row, col)];
            if let Some((g, rate)) = &g {
                k -= g[(row, col)] * *rate;
            }
            j[(row, col)] = 2.0 / hb * (a[row].conj() * k * a[col]).im;
        }
    }
    let j = (&j - j.transpose()) * 0.5 + &dg.matrix;
    Ok(JumpCurrent { j, time: t })
}

#[derive(Clone, Debug, PartialEq)]
pub struct RateMatrix {
    pub t: DMatrix<f64>,
    pub time: f64,
}

impl RateMatrix {
    pub fn zeros(n: usize, time: f64) -> Self {
        Self {
            t: DMatrix::zeros(n, n),
            time,
        }
    }

    /// Total rate of leaving state `i`.
    pub fn exit_rate(&self, i: usize) -> f64 {
        self.t.column(i).iter().sum::<f64>() - self.t[(i, i)]
    }

    pub fn max_exit_rate(&self) -> f64 {
        (0..self.t.ncols())
            .map(|i| self.exit_rate(i))
            .fold(0.0, f64::max)
    }

    /// `T_ji p_i − T_ij p_j`.
    pub fn realized_current(&self, p: &[f64]) -> DMatrix<f64> {
        let n = p.len();
        DMatrix::from_fn(n, n, |j, i| self.t[(j, i)] * p[i] - self.t[(i, j)] * p[j])
    }
}

fn check_source(p: &[f64], i: usize, current: f64) -> Result<()> {
    if p[i] < EPS_P {
        return Err(Error::SingularProbability {
            state: i,
            probability: p[i],
            current,
        });
    }
    Ok(())
}

/// `T_ji = max(J_ji, 0) / p_i`.
pub fn bell_rates(current: &JumpCurrent, p: &[f64]) -> Result<RateMatrix> {
    generalized_rates(current, p, &DMatrix::zeros(p.len(), p.len()))
}

/// For `J_ji > 0`: `T_ji = (J_ji + extra_ji)/p_i` and `T_ij = extra_ji/p_j`.
/// Pairs without current get no rates, whatever `extra` says there.
pub fn generalized_rates(
    current: &JumpCurrent,
    p: &[f64],
    extra: &DMatrix<f64>,
) -> Result<RateMatrix> {
    let n = p.len();
    if current.j.shape() != (n, n) || extra.shape() != (n, n) {
        return Err(Error::InvalidArgument(
            "shape mismatch between J, p and extra".into(),
        ));
    }
    for j in 0..n {
        for i in 0..n {
            let e = extra[(j, i)];
            if !(e >= 0.0) || (e - extra[(i, j)]).abs() > 1e-12 {
                return Err(Error::InvalidArgument(format!(
                    "extra must be symmetric and nonnegative; ({j}, {i}) = {e}"
                )));
            }
        }
    }
    let mut rates = RateMatrix::zeros(n, current.time);
    for j in 0..n {
        for i in 0..n {
            let jji = current.j[(j, i)];
            if i == j || jji <= EPS_J {
                continue;
            }
            let e = extra[(j, i)];
            check_source(p, i, jji)?;
            rates.t[(j, i)] = (jji + e) / p[i];
            if e > 0.0 {
                check_source(p, j, e)?;
                rates.t[(i, j)] = e / p[j];
            }
        }
    }
    Ok(rates)
}

#[derive(Clone, Debug, PartialEq)]
pub enum RateChoice {
    Bell,
    /// Symmetric nonnegative addition to both directions of every active pair.
    Generalized {
        extra: DMatrix<f64>,
    },
}

pub fn rates_for(choice: &RateChoice, current: &JumpCurrent, p: &[f64]) -> Result<RateMatrix> {
    match choice {
        RateChoice::Bell => bell_rates(current, p),
        RateChoice::Generalized { extra } => generalized_rates(current, p, extra),
    }
}

/// Rates realising the total current at time `t`.
pub fn rates_at(
    sys: &BeableSystem,
    dg: &DgJumpSpec,
    choice: &RateChoice,
    t: f64,
) -> Result<RateMatrix> {
    let p = quantum_probabilities(sys, t);
    let current = total_current(sys, t, dg)?;
    rates_for(choice, &current, &p)
}

/// `M` with `ṗ = M p`.
fn master_generator(rates: &RateMatrix) -> DMatrix<f64> {
    let n = rates.t.nrows();
    let mut m = rates.t.clone();
    for i in 0..n {
        m[(i, i)] = 0.0;
    }
    for i in 0..n {
        m[(i, i)] = -rates.exit_rate(i);
    }
    m
}

fn check_probabilities(p: &DVector<f64>) -> Result<Vec<f64>> {
    if let Some((state, &value)) = p.iter().enumerate().find(|(_, v)| !(**v >= -1e-10)) {
        return Err(Error::NegativeProbability { state, value });
    }
    Ok(p.iter().copied().collect())
}

/// One RK4 step of `ṗ_j = Σ_i (T_ji p_i − T_ij p_j)` with `T` held fixed.
pub fn master_step(p: &[f64], rates: &RateMatrix, dt: f64) -> Result<Vec<f64>> {
    let guard = dt * rates.max_exit_rate();
    if !(dt > 0.0) || guard >= 0.1 {
        return Err(Error::StepSize(guard));
    }
    let m = master_generator(rates);
    let p0 = DVector::from_column_slice(p);
    let k1 = &m * &p0;
    let k2 = &m * (&p0 + &k1 * (0.5 * dt));
    let k3 = &m * (&p0 + &k2 * (0.5 * dt));
    let k4 = &m * (&p0 + &k3 * dt);
    let next = p0 + (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (dt / 6.0);
    check_probabilities(&next)
}

/// Radau IIA (three stages, order 5) for `ṗ = M(t) p` from `t0` to `t1`.
/// L-stable, so rates that blow up where a probability vanishes are handled
/// without a step-size guard.
pub fn integrate_master(
    p0: &[f64],
    t0: f64,
    t1: f64,
    dt: f64,
    mut rates: impl FnMut(f64) -> Result<RateMatrix>,
) -> Result<Vec<f64>> {
    if !(dt > 0.0) || t1 < t0 {
        return Err(Error::InvalidArgument(format!(
            "bad interval [{t0}, {t1}] with dt {dt}"
        )));
    }
    let n = p0.len();
    let s6 = 6f64.sqrt();
    let cs = [(4.0 - s6) / 10.0, (4.0 + s6) / 10.0, 1.0];
    let a = [
        [
            (88.0 - 7.0 * s6) / 360.0,
            (296.0 - 169.0 * s6) / 1800.0,
            (-2.0 + 3.0 * s6) / 225.0,
        ],
        [
            (296.0 + 169.0 * s6) / 1800.0,
            (88.0 + 7.0 * s6) / 360.0,
            (-2.0 - 3.0 * s6) / 225.0,
        ],
        [(16.0 - s6) / 36.0, (16.0 + s6) / 36.0, 1.0 / 9.0],
    ];
    let steps = ((t1 - t0) / dt - 1e-9).ceil().max(0.0) as usize;
    let mut p = DVector::from_column_slice(p0);
    if steps == 0 {
        return Ok(p0.to_vec());
    }
    let h = (t1 - t0) / steps as f64;
    for k in 0..steps {
        let t = t0 + k as f64 * h;
        let ms: Vec<DMatrix<f64>> = cs
            .iter()
            .map(|ci| rates(t + ci * h).map(|r| master_generator(&r)))
            .collect::<Result<_>>()?;
        let mut big = DMatrix::<f64>::identity(3 * n, 3 * n);
        for r in 0..3 {
            for s in 0..3 {
                let block = &ms[s] * (-h * a[r][s]);
                let mut view = big.view_mut((r * n, s * n), (n, n));
                view += block;
            }
        }
        let rhs = DVector::from_iterator(3 * n, (0..3).flat_map(|_| p.iter().copied()));
        let y = big
            .lu()
            .solve(&rhs)
            .ok_or(Error::SingularSystem { row: 0, pivot: 0.0 })?;
        p = y.rows(2 * n, n).into_owned();
        check_probabilities(&p)?;
    }
    Ok(p.iter().copied().collect())
}

/// Rates for one jump step, split so that `rate · h ≤ JUMP_PROBABILITY_CAP`
/// where possible; each piece uses the rates at its own midpoint.
fn step_rates(
    sys: &BeableSystem,
    dg: &DgJumpSpec,
    choice: &RateChoice,
    t: f64,
    dt: f64,
) -> Result<Vec<(f64, RateMatrix, Vec<f64>)>> {
    let mid = rates_at(sys, dg, choice, t + 0.5 * dt)?;
    let mut subs = 1;
    while subs < MAX_SUBSTEPS && mid.max_exit_rate() * dt / subs as f64 > JUMP_PROBABILITY_CAP {
        subs *= 2;
    }
    if subs == 1 {
        return Ok(vec![(dt, mid, quantum_probabilities(sys, t + 0.5 * dt))]);
    }
    let h = dt / subs as f64;
    (0..subs)
        .map(|k| {
            let tm = t + (k as f64 + 0.5) * h;
            Ok((
                h,
                rates_at(sys, dg, choice, tm)?,
                quantum_probabilities(sys, tm),
            ))
        })
        .collect()
}

#[derive(Clone, Copy, Debug, PartialEq)]
enum Outcome {
    Stay,
    Trapped,
    Jump(usize, usize),
}

#[inline]
fn jump_once(
    state: &mut usize,
    rng: &mut RngStream,
    rates: &RateMatrix,
    p: &[f64],
    h: f64,
) -> Outcome {
    let i = *state;
    if p[i] < EPS_P {
        return Outcome::Trapped;
    }
    let total = rates.exit_rate(i);
    if total <= 0.0 {
        return Outcome::Stay;
    }
    if rng.uniform() >= -(-total * h).exp_m1() {
        return Outcome::Stay;
    }
    let mut target = rng.uniform() * total;
    let n = p.len();
    let mut last = i;
    for j in 0..n {
        if j == i {
            continue;
        }
        let r = rates.t[(j, i)];
        if r <= 0.0 {
            continue;
        }
        last = j;
        if target < r {
            *state = j;
            return Outcome::Jump(i, j);
        }
        target -= r;
    }
    *state = last;
    Outcome::Jump(i, last)
}

#[derive(Clone, Debug)]
pub struct JumpEnsembleRun {
    pub times: Vec<f64>,
    /// Occupation fraction of each state at each sample time.
    pub frequencies: Vec<Vec<f64>>,
    /// `⟨ψ|P_i|ψ⟩` at the same times.
    pub probabilities: Vec<Vec<f64>>,
    /// `transitions[(j, i)]` counts jumps `i → j`.
    pub transitions: DMatrix<u64>,
    /// Walker-substeps spent in a state of vanishing probability.
    pub trapped: u64,
    pub states: Vec<usize>,
}

impl JumpEnsembleRun {
    /// Signed count of jumps `i → j` minus `j → i`.
    pub fn net_transitions(&self, i: usize, j: usize) -> i64 {
        self.transitions[(j, i)] as i64 - self.transitions[(i, j)] as i64
    }
}

/// Draws `n` states from `p` with stream `(master_seed, index)`.
pub fn sample_states(p: &[f64], n: usize, rng: &mut RngStream) -> Vec<usize> {
    let total: f64 = p.iter().sum();
    (0..n)
        .map(|_| {
            let mut u = rng.uniform() * total;
            for (k, &pk) in p.iter().enumerate() {
                if u < pk {
                    return k;
                }
                u -= pk;
            }
            p.iter().rposition(|&v| v > 0.0).unwrap_or(0)
        })
        .collect()
}

/// Jump ensemble from `initial` states; walker `i` uses stream
/// `(master_seed, i)`. Frequencies are recorded at `sample_times`, which
/// must lie on the `dt` lattice starting at the system time.
#[allow(clippy::too_many_arguments)]
pub fn simulate_jump_ensemble(
    sys: &BeableSystem,
    dg: &DgJumpSpec,
    choice: &RateChoice,
    initial: &[usize],
    master_seed: u64,
    dt: f64,
    sample_times: &[f64],
) -> Result<JumpEnsembleRun> {
    let n = sys.dim();
    let t0 = sys.time();
    let steps = report_steps(t0, dt, sample_times)?;
    let p0 = quantum_probabilities(sys, t0);
    if let Some(&i) = initial.iter().find(|&&i| i >= n || p0[i] <= EPS_P) {
        return Err(Error::InvalidArgument(format!(
            "initial state {i} is out of range or has zero probability"
        )));
    }
    let mut walkers: Vec<(usize, RngStream)> = initial
        .iter()
        .enumerate()
        .map(|(k, &i)| (i, RngStream::new(master_seed, k as u64)))
        .collect();
    let mut run = JumpEnsembleRun {
        times: Vec::new(),
        frequencies: Vec::new(),
        probabilities: Vec::new(),
        transitions: DMatrix::zeros(n, n),
        trapped: 0,
        states: Vec::new(),
    };
    let record = |walkers: &[(usize, RngStream)], t: f64, run: &mut JumpEnsembleRun| {
        let mut counts = vec![0usize; n];
        for (s, _) in walkers {
            counts[*s] += 1;
        }
        let total = walkers.len().max(1) as f64;
        run.times.push(t);
        run.frequencies
            .push(counts.iter().map(|&c| c as f64 / total).collect());
        run.probabilities.push(quantum_probabilities(sys, t));
    };
    let last = steps.last().copied().unwrap_or(0);
    let mut next = 0;
    for k in 0..=last {
        let t = t0 + k as f64 * dt;
        while next < steps.len() && steps[next] == k {
            record(&walkers, t, &mut run);
            next += 1;
        }
        if k == last {
            break;
        }
        for (h, rates, p) in step_rates(sys, dg, choice, t, dt)? {
            let outcomes: Vec<Outcome> = walkers
                .par_iter_mut()
                .with_min_len(512)
                .map(|(s, rng)| jump_once(s, rng, &rates, &p, h))
                .collect();
            for o in outcomes {
                match o {
                    Outcome::Stay => {}
                    Outcome::Trapped => run.trapped += 1,
                    Outcome::Jump(i, j) => run.transitions[(j, i)] += 1,
                }
            }
        }
    }
    run.states = walkers.into_iter().map(|(s, _)| s).collect();
    Ok(run)
}

#[derive(Clone, Debug)]
pub struct JumpTrajectory {
    /// State occupied at the start of each step and at the end.
    pub times: Vec<f64>,
    pub states: Vec<usize>,
    pub trapped: u64,
}

/// Single jump trajectory from `i0` over `[t, t + t_final]`.
pub fn simulate_jump_process(
    sys: &BeableSystem,
    dg: &DgJumpSpec,
    choice: &RateChoice,
    i0: usize,
    mut rng: RngStream,
    dt: f64,
    t_final: f64,
) -> Result<JumpTrajectory> {
    let t0 = sys.time();
    if i0 >= sys.dim() || quantum_probabilities(sys, t0)[i0] <= EPS_P {
        return Err(Error::InvalidArgument(format!(
            "start state {i0} is out of range or has zero probability"
        )));
    }
    let steps = (t_final / dt).round() as usize;
    let mut state = i0;
    let mut out = JumpTrajectory {
        times: vec![t0],
        states: vec![i0],
        trapped: 0,
    };
    for k in 0..steps {
        let t = t0 + k as f64 * dt;
        for (h, rates, p) in step_rates(sys, dg, choice, t, dt)? {
            if jump_once(&mut state, &mut rng, &rates, &p, h) == Outcome::Trapped {
                out.trapped += 1;
            }
        }
        out.times.push(t + dt);
        out.states.push(state);
    }
    Ok(out)
}

/// `H = (Ω/2) σ_x`.
pub fn rabi_hamiltonian(omega: f64) -> CMatrix {
    CMatrix::from_row_slice(2, 2, &[c(0.0), c(0.5 * omega), c(0.5 * omega), c(0.0)])
}

/// Unit vector `|k⟩` in dimension `n`.
pub fn basis_state(n: usize, k: usize) -> CVector {
    let mut v = CVector::zeros(n);
    v[k] = c(1.0);
    v
}
