use proptest::prelude::*;
use rayon::prelude::*;
use sff_core::models::{build_heisenberg, sample_disorder, sector_basis, Basis, DisorderLaw, SpinModelSpec};
use sff_core::sff::{
    self, exact_sff, filter_values, k_infinity, pea_filter, rmt_baseline, rmt_value, thouless_time, time_grid, CurveAccumulator,
    CurveMeta, FilterSpec, RmtEnsemble, RmtParams, Spacing,
};
use sff_core::spectra::{eig_hermitian, mean_level_spacing, Spectrum, DEFAULT_WINDOW};

fn levels() -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-20.0f64..20.0, 1..40)
}

fn filters() -> impl Strategy<Value = FilterSpec> {
    prop_oneof![
        Just(FilterSpec::Flat),
        (0u32..6).prop_map(|m| FilterSpec::Pea { center: None, steps: m, t0: None }),
        (0.1f64..5.0).prop_map(|w| FilterSpec::Gaussian { center: None, width: Some(w) }),
    ]
}

proptest! {
    #[test]
    fn normalized_filter_invariants(e in levels(), f in filters(), shift in -50.0f64..50.0, tau in 0.0f64..100.0) {
        let s = Spectrum::from_levels(e.clone()).unwrap();
        let w = match filter_values(&f, &s) {
            Ok(w) => w,
            Err(_) => return Ok(()),
        };
        prop_assert!(w.iter().all(|&x| x >= 0.0));
        prop_assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        let shifted = Spectrum::from_levels(e.iter().map(|x| x + shift).collect()).unwrap();
        let k = exact_sff(&s, &w, &[0.0, tau]).unwrap();
        let ks = exact_sff(&shifted, &w, &[0.0, tau]).unwrap();
        let back = sff::filtered_trace(&s, &w, -tau).norm_sqr();
        prop_assert!((k.k[0] - 1.0).abs() < 1e-12);
        prop_assert!((k.k[1] - ks.k[1]).abs() < 1e-12);
        prop_assert!((k.k[1] - back).abs() < 1e-12);
        prop_assert!(k.k[1] <= 1.0 + 1e-12);
        let kinf = k_infinity(&w);
        let nonzero = w.iter().filter(|&&x| x > 0.0).count() as f64;
        prop_assert!(kinf <= w.iter().cloned().fold(0.0, f64::max) + 1e-15);
        prop_assert!(kinf >= 1.0 / nonzero - 1e-12);
    }

    #[test]
    fn gaussian_baselines_continuous(tau_h in 0.1f64..1e4, k_inf in 1e-4f64..1.0) {
        let p = RmtParams::Gaussian { tau_h, k_inf };
        for e in [RmtEnsemble::Goe, RmtEnsemble::Gue] {
            let below = rmt_value(e, p, tau_h * (1.0 - 1e-15)).unwrap();
            let above = rmt_value(e, p, tau_h * (1.0 + 1e-15)).unwrap();
            prop_assert!((below - above).abs() < 1e-12 * k_inf.max(1e-300) + 1e-12);
        }
    }
}

#[test]
fn single_level_and_two_level_curves() {
    let one = Spectrum::from_levels(vec![3.7]).unwrap();
    let c = exact_sff(&one, &[1.0], &[0.0, 1.0, 55.0]).unwrap();
    assert!(c.k.iter().all(|k| (k - 1.0).abs() < 1e-15));
    assert_eq!(k_infinity(&[1.0]), 1.0);
    assert!((k_infinity(&[0.25; 4]) - 0.25).abs() < 1e-16);
}

#[test]
fn rmt_long_time_limits() {
    let p = RmtParams::Gaussian { tau_h: 7.0, k_inf: 0.02 };
    let goe = rmt_value(RmtEnsemble::Goe, p, 700.0).unwrap() / 0.02;
    let gue = rmt_value(RmtEnsemble::Gue, p, 700.0).unwrap() / 0.02;
    // the printed GOE expression tends to 1, see the ledger
    assert!((goe - 1.0).abs() < 0.01);
    assert!((gue - 1.0).abs() < 0.01);
    let at_h = rmt_value(RmtEnsemble::Goe, p, 7.0).unwrap();
    assert!((at_h - (2.0 - 3f64.ln()) * 0.02).abs() < 1e-15);
}

/// Composite Simpson rule.
fn simpson(f: impl Fn(f64) -> f64, a: f64, b: f64, n: usize) -> f64 {
    let h = (b - a) / n as f64;
    let mut s = f(a) + f(b);
    for i in 1..n {
        s += if i % 2 == 1 { 4.0 } else { 2.0 } * f(a + i as f64 * h);
    }
    s * h / 3.0
}

#[test]
fn pea_filter_area() {
    let target = std::f64::consts::PI * 2f64.powi(-6);
    let area = simpson(|x| pea_filter(x, 6, 1.0), -1.0, 1.0, 1 << 16);
    assert!((area / target - 1.0).abs() < 0.05);
}

fn reference_spec(l: usize, w: f64) -> SpinModelSpec {
    SpinModelSpec::new(l, 0.8, 0.02, 0.06, w).unwrap()
}

fn sector_spectrum(spec: &SpinModelSpec, seed: u64) -> Spectrum {
    let dis = sample_disorder(spec, DisorderLaw::Uniform, seed);
    let basis = Basis::Sector(sector_basis(spec.sites, 0).unwrap());
    eig_hermitian(&build_heisenberg(spec, &dis, &basis, None).unwrap(), false).unwrap()
}

#[test]
fn plateau_equals_late_time_average() {
    let spec = reference_spec(8, 2.0);
    let s = sector_spectrum(&spec, 2);
    let tau_h = mean_level_spacing(&s, DEFAULT_WINDOW).unwrap().tau_h;
    let w = filter_values(&FilterSpec::Pea { center: None, steps: 3, t0: None }, &s).unwrap();
    let times: Vec<f64> = (0..20_000).map(|i| tau_h * (10.0 + 10.0 * i as f64 / 20_000.0)).collect();
    let avg = exact_sff(&s, &w, &times).unwrap().k.iter().sum::<f64>() / times.len() as f64;
    let kinf = k_infinity(&w);
    assert!((avg / kinf - 1.0).abs() < 0.1, "time average {avg} vs sum f^2 {kinf}");
}

#[test]
fn thouless_time_grows_with_disorder() {
    let n_d = 20;
    let steps = 5;
    let mut tau_th = Vec::new();
    for w in [1.0, 3.0] {
        let spec = reference_spec(12, w);
        let spectra: Vec<Spectrum> = (0..n_d as u64).into_par_iter().map(|i| sector_spectrum(&spec, 1000 + i)).collect();
        let tau_h = spectra.iter().map(|s| mean_level_spacing(s, DEFAULT_WINDOW).unwrap().tau_h).sum::<f64>() / n_d as f64;
        let times = time_grid(Spacing::Log, 0.01, 10.0 * tau_h, 120).unwrap();
        let mut acc = CurveAccumulator::new(times.clone());
        let mut kinf = 0.0;
        for s in &spectra {
            let f = filter_values(&FilterSpec::Pea { center: None, steps, t0: None }, s).unwrap();
            kinf += k_infinity(&f) / n_d as f64;
            acc.push(&exact_sff(s, &f, &times).unwrap().k).unwrap();
        }
        let curve = acc.finish(CurveMeta::default()).unwrap();
        let base = rmt_baseline(RmtEnsemble::Goe, RmtParams::Gaussian { tau_h, k_inf: kinf }, &times).unwrap();
        let t = thouless_time(&curve, &base, sff::THOULESS_EPS, sff::THOULESS_SUSTAIN).unwrap();
        tau_th.push(t.expect("ramp reached"));
    }
    assert!(tau_th[0] < tau_th[1], "Thouless times {tau_th:?}");
}
