use nalgebra::DMatrix;
use num_complex::Complex64;
use proptest::prelude::*;

use pilotwave_core::beable::{
    generalized_rates, master_step, pdot, total_current, BeableSystem, CMatrix, CVector,
    DgJumpSpec, ProjectorFamily,
};
use pilotwave_core::dynamics::{drift_fields, DgSpec, FaceField};
use pilotwave_core::fpe::{fpe_step, positivity_dt, GridDensity};
use pilotwave_core::wavefunction::{make_harmonic_eigenstate, make_superposition, propagate_cn};
use pilotwave_core::{Domain1D, PhysParams, Wavefunction};

fn hermitian(n: usize, re: &[f64], im: &[f64]) -> CMatrix {
    let mut h = CMatrix::zeros(n, n);
    let mut k = 0;
    for i in 0..n {
        h[(i, i)] = Complex64::new(re[k], 0.0);
        k += 1;
        for j in i + 1..n {
            h[(i, j)] = Complex64::new(re[k], im[k]);
            h[(j, i)] = h[(i, j)].conj();
            k += 1;
        }
    }
    h
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn cn_preserves_norm(x0 in -2.0f64..2.0, p0 in -2.0f64..2.0, sigma in 0.6f64..1.5, dt in 0.001f64..0.05) {
        let d = Domain1D::line(-12.0, 12.0, 256).unwrap();
        let params = PhysParams::free(&d, 1.0, 1.0, 1.0).unwrap();
        let mut psi = Wavefunction::from_fn(&d, 0.0, |x| {
            Complex64::from_polar((-(x - x0).powi(2) / (4.0 * sigma * sigma)).exp(), p0 * x)
        }).unwrap();
        for _ in 0..20 {
            psi = propagate_cn(&psi, &params, dt).unwrap();
        }
        prop_assert!((psi.norm() - 1.0).abs() < 1e-10);
    }

    #[test]
    fn forward_backward_drift_identities(a in -1.0f64..1.0, phase in 0.0f64..6.28, alpha in 0.0f64..3.0) {
        let d = Domain1D::line(-8.0, 8.0, 256).unwrap();
        let params = PhysParams::harmonic(&d, 1.0, 1.0, 1.0, alpha).unwrap();
        let s0 = make_harmonic_eigenstate(0, 1.0, &params, &d, 0.3).unwrap();
        let s1 = make_harmonic_eigenstate(1, 1.0, &params, &d, 0.3).unwrap();
        let psi = make_superposition(&[s0, s1], &[Complex64::new(1.0, 0.0), Complex64::from_polar(a, phase)]).unwrap();
        let f = drift_fields(&psi, &params, &DgSpec::none()).unwrap();
        for i in 0..d.n_points() {
            if f.b.is_flagged(i) {
                continue;
            }
            prop_assert!((f.b.values[i] + f.b_star.values[i] - 2.0 * f.v.values[i]).abs() < 1e-9);
            prop_assert!((f.b.values[i] - f.b_star.values[i] - 2.0 * f.u.values[i]).abs() < 1e-9);
        }
    }

    #[test]
    fn fpe_conserves_mass(
        weights in proptest::collection::vec(0.01f64..1.0, 32),
        drift in proptest::collection::vec(-3.0f64..3.0, 31),
        nu in 0.05f64..1.0,
        frac in 0.1f64..1.0,
    ) {
        let d = Domain1D::line(-4.0, 4.0, 32).unwrap();
        let p = GridDensity::normalized(&d, weights, 0.0).unwrap();
        let b = FaceField::new(d.clone(), drift, 0.0);
        let dt = frac * positivity_dt(&b, nu);
        let mut q = p;
        for _ in 0..10 {
            q = fpe_step(&q, &b, nu, dt).unwrap();
        }
        prop_assert!((q.mass() - 1.0).abs() < 1e-12);
        prop_assert!(q.values.iter().all(|v| *v >= 0.0));
    }

    #[test]
    fn current_antisymmetric_with_sum_rule(
        re in proptest::collection::vec(-1.0f64..1.0, 6),
        im in proptest::collection::vec(-1.0f64..1.0, 6),
        gre in proptest::collection::vec(-1.0f64..1.0, 6),
        amp in proptest::collection::vec(-1.0f64..1.0, 6),
        rate in -2.0f64..2.0,
        t in 0.0f64..10.0,
        flux in -0.5f64..0.5,
    ) {
        let psi = CVector::from_iterator(3, (0..3).map(|k| Complex64::new(amp[2 * k], amp[2 * k + 1])));
        prop_assume!(psi.norm() > 0.1);
        let sys = BeableSystem::new(
            hermitian(3, &re, &im),
            ProjectorFamily::Rotating { generator: hermitian(3, &gre, &im), rate },
            psi,
            1.0,
            0.0,
        ).unwrap();
        let dg = DgJumpSpec::cyclic(3, flux).unwrap();
        let j = total_current(&sys, t, &dg).unwrap();
        prop_assert!((&j.j + j.j.transpose()).amax() < 1e-14);
        let pd = pdot(&sys, t);
        for (s, p) in j.row_sums().iter().zip(&pd) {
            prop_assert!((s - p).abs() < 1e-10);
        }
    }

    #[test]
    fn rates_realize_current(
        j10 in 0.0f64..2.0,
        j20 in -2.0f64..2.0,
        j21 in -2.0f64..2.0,
        p in proptest::collection::vec(0.05f64..1.0, 3),
        e in proptest::collection::vec(0.0f64..1.0, 3),
        dt in 0.0001f64..0.005,
    ) {
        let mut m = DMatrix::zeros(3, 3);
        for (a, b, v) in [(1, 0, j10), (2, 0, j20), (2, 1, j21)] {
            m[(a, b)] = v;
            m[(b, a)] = -v;
        }
        let total: f64 = p.iter().sum();
        let p: Vec<f64> = p.iter().map(|v| v / total).collect();
        let mut extra = DMatrix::zeros(3, 3);
        for (k, (a, b)) in [(1, 0), (2, 0), (2, 1)].into_iter().enumerate() {
            extra[(a, b)] = e[k];
            extra[(b, a)] = e[k];
        }
        let cur = pilotwave_core::beable::JumpCurrent { j: m.clone(), time: 0.0 };
        let rates = generalized_rates(&cur, &p, &extra).unwrap();
        let realized = rates.realized_current(&p);
        prop_assert!((&realized - &m).amax() < 1e-12);

        let q = master_step(&p, &rates, dt.min(0.09 / rates.max_exit_rate().max(1e-9))).unwrap();
        prop_assert!((q.iter().sum::<f64>() - 1.0).abs() < 1e-14);
    }
}
