use nalgebra::DMatrix;
use proptest::prelude::*;
use rand::Rng;
use sff_core::models::{build_floquet_halves, build_ising_layer, sample_fields, Basis, DisorderLaw, FieldAxes, HermitianOperator, Pauli};
use sff_core::rng;
use sff_core::spectra::{self, eig_hermitian, floquet_operator, propagator, quasienergies, unitarity_residual, UnitaryOperator};
use sff_core::C64;

fn random_hermitian(seed: u64, sites: usize) -> HermitianOperator {
    let n = 1 << sites;
    let mut r = rng::from_seed(seed);
    let mut m = DMatrix::<C64>::zeros(n, n);
    for j in 0..n {
        m[(j, j)] = C64::new(r.random_range(-1.0..1.0), 0.0);
        for i in 0..j {
            let z = C64::new(r.random_range(-1.0..1.0), r.random_range(-1.0..1.0));
            m[(i, j)] = z;
            m[(j, i)] = z.conj();
        }
    }
    HermitianOperator::new(m, Basis::full(sites).unwrap()).unwrap()
}

/// exp(−iHt) by scaling and squaring a truncated Taylor series.
fn expm_taylor(h: &DMatrix<C64>, t: f64) -> DMatrix<C64> {
    let a = h * C64::new(0.0, -t);
    let norm = a.iter().map(|z| z.norm()).sum::<f64>();
    let s = (norm / 0.25).log2().ceil().max(0.0) as i32;
    let a = a / C64::new(2f64.powi(s), 0.0);
    let n = h.nrows();
    let mut term = DMatrix::<C64>::identity(n, n);
    let mut sum = term.clone();
    for k in 1..30 {
        term = &term * &a / C64::new(k as f64, 0.0);
        sum += &term;
    }
    for _ in 0..s {
        sum = &sum * &sum;
    }
    sum
}

fn max_diff(a: &DMatrix<C64>, b: &DMatrix<C64>) -> f64 {
    (a - b).iter().fold(0.0f64, |acc, z| acc.max(z.norm()))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn propagator_group_property(seed in any::<u64>(), a in -3.0f64..3.0, b in -3.0f64..3.0) {
        let s = eig_hermitian(&random_hermitian(seed, 3), true).unwrap();
        let ua = propagator(&s, a).unwrap();
        let ub = propagator(&s, b).unwrap();
        let uab = propagator(&s, a + b).unwrap();
        prop_assert!(max_diff(&(ua.matrix() * ub.matrix()), uab.matrix()) < 1e-9);
        prop_assert!(unitarity_residual(uab.matrix()) < 1e-9);
    }

    #[test]
    fn eigendecomposition_reconstructs(seed in any::<u64>()) {
        let h = random_hermitian(seed, 4);
        let s = eig_hermitian(&h, true).unwrap();
        prop_assert!(s.values().windows(2).all(|w| w[0] <= w[1]));
        let v = s.vectors().unwrap();
        let lam = DMatrix::from_diagonal(&nalgebra::DVector::from_iterator(s.len(), s.values().iter().map(|&x| C64::new(x, 0.0))));
        prop_assert!(max_diff(&(v * lam * v.adjoint()), h.matrix()) < 1e-10);
        prop_assert!(unitarity_residual(v) < 1e-9);
    }
}

#[test]
fn propagator_matches_taylor_series() {
    let h = random_hermitian(5, 3);
    let s = eig_hermitian(&h, true).unwrap();
    for t in [0.1, 1.7, -4.0] {
        assert!(max_diff(propagator(&s, t).unwrap().matrix(), &expm_taylor(h.matrix(), t)) < 1e-10);
    }
}

fn floquet_heisenberg_l4(theta: f64) -> (UnitaryOperator, DMatrix<C64>) {
    let dis = sample_fields(4, DisorderLaw::Normal, 1.0, FieldAxes::Xyz, 9);
    let (h1, h2) = build_floquet_halves(4, &dis).unwrap();
    let u = floquet_operator(&[(&h1, theta / 2.0), (&h2, theta / 2.0)]).unwrap();
    let dense = expm_taylor(h1.matrix(), theta / 2.0) * expm_taylor(h2.matrix(), theta / 2.0);
    (u, dense)
}

#[test]
fn floquet_heisenberg_unitary_and_path_independent() {
    let theta = 1.0;
    let (u, dense) = floquet_heisenberg_l4(theta);
    assert!(unitarity_residual(u.matrix()) < 1e-9);
    assert!(max_diff(u.matrix(), &dense) < 1e-10);
    let via_layers = quasienergies(&u, theta, false).unwrap();
    let via_dense = quasienergies(&UnitaryOperator::new(dense).unwrap(), theta, false).unwrap();
    for (a, b) in via_layers.values().iter().zip(via_dense.values()) {
        let d = (a - b).abs();
        // same eigenphase up to the branch cut
        assert!(d < 1e-8 || (d - 2.0 * std::f64::consts::PI / theta).abs() < 1e-8, "{a} vs {b}");
    }
    assert!(via_layers.values().iter().all(|&l| (0.0..2.0 * std::f64::consts::PI / theta).contains(&l)));
}

fn kicked_ising(three: bool) -> (UnitaryOperator, f64) {
    let theta = 1.0;
    let mut r = rng::from_seed(44);
    let mut fields = || (0..4).map(|_| r.random_range(-1.0..=1.0)).collect::<Vec<f64>>();
    let hx = build_ising_layer(Pauli::X, 4, &fields()).unwrap();
    let hy = build_ising_layer(Pauli::Y, 4, &fields()).unwrap();
    let hz = build_ising_layer(Pauli::Z, 4, &fields()).unwrap();
    let u = if three {
        floquet_operator(&[(&hx, theta), (&hy, theta), (&hz, theta)]).unwrap()
    } else {
        floquet_operator(&[(&hx, theta), (&hy, theta)]).unwrap()
    };
    (u, theta)
}

#[test]
fn quasienergy_trace_matches_matrix_power() {
    for three in [false, true] {
        let (u, theta) = kicked_ising(three);
        let q = quasienergies(&u, theta, false).unwrap();
        let mut power = DMatrix::<C64>::identity(16, 16);
        for t in 0..40 {
            let direct: C64 = (0..16).map(|k| power[(k, k)]).sum();
            let from_levels: C64 = q.values().iter().map(|l| C64::from_polar(1.0, -l * theta * t as f64)).sum();
            assert!((direct.norm() - from_levels.norm()).abs() < 1e-8, "t = {t}");
            assert!((direct - from_levels).norm() < 1e-8);
            power = &power * u.matrix();
        }
    }
}

#[test]
fn quasienergy_eigenvectors_diagonalize() {
    let (u, theta) = kicked_ising(true);
    let q = quasienergies(&u, theta, true).unwrap();
    let rebuilt = propagator(&q, 1.0).unwrap();
    assert!(max_diff(rebuilt.matrix(), u.matrix()) < 1e-9);
}

#[test]
fn floquet_spectrum_propagator_counts_periods() {
    let (u, theta) = kicked_ising(false);
    let q = quasienergies(&u, theta, true).unwrap();
    let u3 = propagator(&q, 3.0).unwrap();
    assert!(max_diff(u3.matrix(), &(u.matrix() * u.matrix() * u.matrix())) < 1e-9);
    assert_eq!(spectra::mean_level_spacing(&q, 1.0).unwrap().levels_used, 16);
}
