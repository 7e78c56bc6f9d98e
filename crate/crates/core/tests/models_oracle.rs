//! Checks the bit-manipulation builders against a naive Kronecker-product
//! construction over the full 2^L space.

use nalgebra::DMatrix;
use sff_core::models::{
    self, build_floquet_halves, build_heisenberg, build_ising_layer, sample_disorder, sample_fields, sector_basis, Basis,
    DisorderLaw, DisorderRealization, FieldAxes, Pauli, SpinModelSpec,
};
use sff_core::spectra::eig_hermitian;
use sff_core::C64;

fn c(re: f64, im: f64) -> C64 {
    C64::new(re, im)
}

// single-site matrices in the (down, up) = (0, 1) ordering
fn single(p: Pauli) -> DMatrix<C64> {
    match p {
        Pauli::X => DMatrix::from_row_slice(2, 2, &[c(0., 0.), c(1., 0.), c(1., 0.), c(0., 0.)]),
        Pauli::Y => DMatrix::from_row_slice(2, 2, &[c(0., 0.), c(0., 1.), c(0., -1.), c(0., 0.)]),
        Pauli::Z => DMatrix::from_row_slice(2, 2, &[c(-1., 0.), c(0., 0.), c(0., 0.), c(1., 0.)]),
    }
}

fn raise() -> DMatrix<C64> {
    DMatrix::from_row_slice(2, 2, &[c(0., 0.), c(0., 0.), c(1., 0.), c(0., 0.)])
}

/// Operator acting with `ops` on the listed sites; site 0 is the least significant bit.
fn embed(l: usize, ops: &[(usize, DMatrix<C64>)]) -> DMatrix<C64> {
    let mut out = DMatrix::<C64>::identity(1, 1);
    for site in (0..l).rev() {
        let local = ops.iter().find(|(s, _)| *s == site).map(|(_, m)| m.clone()).unwrap_or_else(|| DMatrix::identity(2, 2));
        out = out.kronecker(&local);
    }
    out
}

fn pp(l: usize, i: usize, a: Pauli, j: usize, b: Pauli) -> DMatrix<C64> {
    embed(l, &[(i, single(a)), (j, single(b))])
}

fn oracle_heisenberg(spec: &SpinModelSpec, h: &[f64], phases: Option<&[f64]>) -> DMatrix<C64> {
    let l = spec.sites;
    let dim = 1 << l;
    let mut m = DMatrix::<C64>::zeros(dim, dim);
    let lower = raise().adjoint();
    for i in 0..l {
        for (j, jxy, jz) in [((i + 1) % l, 1.0, spec.delta), ((i + 2) % l, spec.j2, spec.delta2)] {
            let phase = phases.map_or(c(1., 0.), |p| C64::from_polar(1.0, p[i] - p[j]));
            let up_down = embed(l, &[(i, raise()), (j, lower.clone())]);
            let down_up = embed(l, &[(i, lower.clone()), (j, raise())]);
            m += (up_down * phase + down_up * phase.conj()) * c(2.0 * jxy, 0.0);
            m += pp(l, i, Pauli::Z, j, Pauli::Z) * c(jz, 0.0);
        }
        m += embed(l, &[(i, single(Pauli::Z))]) * c(h[i], 0.0);
    }
    m
}

fn restrict(full: &DMatrix<C64>, states: &[u32]) -> DMatrix<C64> {
    DMatrix::from_fn(states.len(), states.len(), |a, b| full[(states[a] as usize, states[b] as usize)])
}

fn max_diff(a: &DMatrix<C64>, b: &DMatrix<C64>) -> f64 {
    (a - b).iter().fold(0.0f64, |acc, z| acc.max(z.norm()))
}

#[test]
fn clean_l4_sector_matches_oracle() {
    let spec = SpinModelSpec::new(4, 1.0, 0.0, 0.0, 0.0).unwrap();
    let sector = sector_basis(4, 0).unwrap();
    let h = build_heisenberg(&spec, &DisorderRealization::clean(4), &Basis::Sector(sector.clone()), None).unwrap();
    let oracle = restrict(&oracle_heisenberg(&spec, &[0.0; 4], None), sector.states());
    assert!(max_diff(h.matrix(), &oracle) < 1e-14);
    let ours = eig_hermitian(&h, false).unwrap();
    let theirs = eig_hermitian(&models::HermitianOperator::new(oracle, Basis::Sector(sector)).unwrap(), false).unwrap();
    for (a, b) in ours.values().iter().zip(theirs.values()) {
        assert!((a - b).abs() < 1e-12);
    }
}

#[test]
fn disordered_full_space_matches_oracle() {
    for l in [4usize, 6] {
        let spec = SpinModelSpec::new(l, 0.8, 0.02, 0.06, 2.0).unwrap();
        let dis = sample_disorder(&spec, DisorderLaw::Uniform, 17);
        let h = build_heisenberg(&spec, &dis, &Basis::full(l).unwrap(), None).unwrap();
        assert!(max_diff(h.matrix(), &oracle_heisenberg(&spec, &dis.fields_z, None)) < 1e-13);
    }
}

#[test]
fn phased_model_matches_oracle_and_stays_hermitian() {
    let spec = SpinModelSpec::new(6, 0.7, 0.3, 0.1, 1.0).unwrap();
    let dis = sample_disorder(&spec, DisorderLaw::Uniform, 3);
    let phases = [0.3, -1.2, 2.5, 0.0, 0.9, -2.2];
    let h = build_heisenberg(&spec, &dis, &Basis::full(6).unwrap(), Some(&phases)).unwrap();
    assert!(max_diff(h.matrix(), &oracle_heisenberg(&spec, &dis.fields_z, Some(&phases))) < 1e-13);
    let sector = Basis::Sector(sector_basis(6, 0).unwrap());
    let hs = build_heisenberg(&spec, &dis, &sector, Some(&phases)).unwrap();
    assert!(models::hermiticity_residual(hs.matrix()) < 1e-12);
    assert!(eig_hermitian(&hs, true).is_ok());
}

#[test]
fn equal_phases_leave_spectrum_unchanged() {
    let spec = SpinModelSpec::new(8, 0.8, 0.02, 0.06, 2.0).unwrap();
    let dis = sample_disorder(&spec, DisorderLaw::Uniform, 8);
    let basis = Basis::Sector(sector_basis(8, 0).unwrap());
    let plain = eig_hermitian(&build_heisenberg(&spec, &dis, &basis, None).unwrap(), false).unwrap();
    let phased = eig_hermitian(&build_heisenberg(&spec, &dis, &basis, Some(&[1.3; 8])).unwrap(), false).unwrap();
    for (a, b) in plain.values().iter().zip(phased.values()) {
        assert!((a - b).abs() < 1e-10);
    }
}

#[test]
fn sector_levels_are_subset_of_full_levels() {
    for l in [4usize, 6, 8] {
        let spec = SpinModelSpec::new(l, 0.8, 0.02, 0.06, 1.5).unwrap();
        let dis = sample_disorder(&spec, DisorderLaw::Uniform, 100 + l as u64);
        let full = eig_hermitian(&build_heisenberg(&spec, &dis, &Basis::full(l).unwrap(), None).unwrap(), false).unwrap();
        let sector = Basis::Sector(sector_basis(l, 0).unwrap());
        let part = eig_hermitian(&build_heisenberg(&spec, &dis, &sector, None).unwrap(), false).unwrap();
        for e in part.values() {
            let nearest = full.values().iter().fold(f64::INFINITY, |a, f| a.min((f - e).abs()));
            assert!(nearest < 1e-9, "L={l}: level {e} missing from the full spectrum");
        }
    }
}

#[test]
fn ising_layers_match_oracle() {
    let l = 4;
    let fields = [0.3, -0.8, 0.55, 0.1];
    for axis in [Pauli::X, Pauli::Y, Pauli::Z] {
        let h = build_ising_layer(axis, l, &fields).unwrap();
        let mut oracle = DMatrix::<C64>::zeros(16, 16);
        for i in 0..l {
            oracle += pp(l, i, axis, (i + 1) % l, axis);
            oracle += embed(l, &[(i, single(axis.next()))]) * c(fields[i], 0.0);
        }
        assert!(max_diff(h.matrix(), &oracle) < 1e-14);
        let trace: C64 = (0..16).map(|k| h.matrix()[(k, k)]).sum();
        assert!(trace.norm() < 1e-13);
        assert!(models::hermiticity_residual(h.matrix()) < 1e-12);
    }
}

#[test]
fn floquet_halves_cancel_y_fields() {
    let l = 4;
    let dis = sample_fields(l, DisorderLaw::Normal, 1.0, FieldAxes::Xyz, 21);
    let (h1, h2) = build_floquet_halves(l, &dis).unwrap();
    assert!(models::hermiticity_residual(h1.matrix()) < 1e-12);
    assert!(models::hermiticity_residual(h2.matrix()) < 1e-12);
    let avg = (h1.matrix() + h2.matrix()) * c(0.5, 0.0);
    let dim = 1usize << l;
    for i in 0..l {
        // Pauli coefficient = Tr(H P)/2^L
        let coefficient = |p: Pauli| -> C64 {
            let prod = &avg * embed(l, &[(i, single(p))]);
            (0..dim).map(|k| prod[(k, k)]).sum::<C64>() / c(dim as f64, 0.0)
        };
        assert!(coefficient(Pauli::Y).norm() < 1e-14);
        let hx = dis.fields_x.as_ref().unwrap()[i];
        assert!((coefficient(Pauli::X) - c(0.25 * hx, 0.0)).norm() < 1e-14);
        assert!((coefficient(Pauli::Z) - c(0.25 * dis.fields_z[i], 0.0)).norm() < 1e-14);
    }
}
