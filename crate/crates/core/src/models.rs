//! Spin Hamiltonians on a periodic ring.
//!
//! Basis convention: a basis state is a bit pattern, bit `i` is site `i` and
//! a set bit means spin up (σᶻ = +1). Full-space states are ordered by their
//! integer value; sector bases keep the same ascending order.

use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng;
use crate::C64;

pub const MIN_SITES: usize = 4;
pub const MAX_SITES: usize = 14;
/// Largest ring for which full-space (2^L) operators are built.
pub const MAX_FULL_SITES: usize = 12;
/// Construction tolerance for max |M − M†|.
pub const HERMITICITY_TOL: f64 = 1e-12;

/// Disordered next-nearest-neighbour XXZ ring, energies in units of J.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpinModelSpec {
    pub sites: usize,
    /// zz anisotropy of nearest-neighbour bonds.
    pub delta: f64,
    /// xy coupling of next-nearest-neighbour bonds.
    pub j2: f64,
    /// zz coupling of next-nearest-neighbour bonds.
    pub delta2: f64,
    /// Half-width W of the random longitudinal field.
    pub disorder: f64,
}

impl SpinModelSpec {
    pub fn new(sites: usize, delta: f64, j2: f64, delta2: f64, disorder: f64) -> Result<Self> {
        let spec = Self { sites, delta, j2, delta2, disorder };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if self.sites % 2 != 0 || !(MIN_SITES..=MAX_SITES).contains(&self.sites) {
            return Err(Error::Parameter(format!(
                "site count must be even and in [{MIN_SITES}, {MAX_SITES}], got {}",
                self.sites
            )));
        }
        if !(self.disorder >= 0.0) || !self.disorder.is_finite() {
            return Err(Error::Parameter(format!("disorder strength must be >= 0, got {}", self.disorder)));
        }
        for (name, v) in [("delta", self.delta), ("j2", self.j2), ("delta2", self.delta2)] {
            if !v.is_finite() {
                return Err(Error::Parameter(format!("{name} must be finite")));
            }
        }
        Ok(())
    }

    /// Nearest and next-nearest bonds, one per site each, exactly as the
    /// periodic sum over `i` runs (for L = 4 every next-nearest pair appears twice).
    pub fn bonds(&self) -> Vec<XxzBond> {
        let l = self.sites;
        let mut bonds = Vec::with_capacity(2 * l);
        for i in 0..l {
            bonds.push(XxzBond { i, j: (i + 1) % l, jxy: 1.0, jz: self.delta });
        }
        for i in 0..l {
            bonds.push(XxzBond { i, j: (i + 2) % l, jxy: self.j2, jz: self.delta2 });
        }
        bonds
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DisorderLaw {
    /// h ∈ [−scale, scale] uniformly.
    Uniform,
    /// h ~ N(0, scale²).
    Normal,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FieldAxes {
    Z,
    Xyz,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DisorderRealization {
    pub seed: u64,
    pub fields_z: Vec<f64>,
    pub fields_x: Option<Vec<f64>>,
    pub fields_y: Option<Vec<f64>>,
}

impl DisorderRealization {
    pub fn clean(sites: usize) -> Self {
        Self { seed: 0, fields_z: vec![0.0; sites], fields_x: None, fields_y: None }
    }

    pub fn has_transverse(&self) -> bool {
        self.fields_x.is_some() || self.fields_y.is_some()
    }
}

/// Longitudinal disorder for an XXZ model, width `spec.disorder`.
pub fn sample_disorder(spec: &SpinModelSpec, law: DisorderLaw, seed: u64) -> DisorderRealization {
    sample_fields(spec.sites, law, spec.disorder, FieldAxes::Z, seed)
}

/// Random fields on `sites` sites. For [`FieldAxes::Xyz`] the x, y and z
/// vectors are drawn in that order from one stream.
pub fn sample_fields(sites: usize, law: DisorderLaw, scale: f64, axes: FieldAxes, seed: u64) -> DisorderRealization {
    let mut rng = rng::from_seed(seed);
    let mut draw = |n: usize| -> Vec<f64> {
        (0..n)
            .map(|_| match law {
                DisorderLaw::Uniform => {
                    if scale == 0.0 {
                        0.0
                    } else {
                        rng.random_range(-scale..=scale)
                    }
                }
                DisorderLaw::Normal => {
                    let z: f64 = rng.sample(StandardNormal);
                    scale * z
                }
            })
            .collect()
    };
    match axes {
        FieldAxes::Z => DisorderRealization { seed, fields_z: draw(sites), fields_x: None, fields_y: None },
        FieldAxes::Xyz => {
            let x = draw(sites);
            let y = draw(sites);
            let z = draw(sites);
            DisorderRealization { seed, fields_z: z, fields_x: Some(x), fields_y: Some(y) }
        }
    }
}

fn binomial(n: usize, k: usize) -> usize {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    (0..k).fold(1usize, |acc, i| acc * (n - i) / (i + 1))
}

/// States with fixed total σᶻ.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SectorBasis {
    sites: usize,
    sz: i32,
    states: Vec<u32>,
}

impl SectorBasis {
    pub fn new(sites: usize, sz: i32) -> Result<Self> {
        if sites == 0 || sites > 24 {
            return Err(Error::Parameter(format!("sector basis needs 1..=24 sites, got {sites}")));
        }
        let l = sites as i32;
        if sz.abs() > l || (l + sz) % 2 != 0 {
            return Err(Error::Parameter(format!(
                "total Sz = {sz} is not reachable with {sites} spins (need |Sz| <= L and L + Sz even)"
            )));
        }
        let ups = ((l + sz) / 2) as u32;
        let states: Vec<u32> = (0u32..(1u32 << sites)).filter(|s| s.count_ones() == ups).collect();
        debug_assert_eq!(states.len(), binomial(sites, ups as usize));
        Ok(Self { sites, sz, states })
    }

    pub fn sites(&self) -> usize {
        self.sites
    }

    pub fn sz(&self) -> i32 {
        self.sz
    }

    pub fn dim(&self) -> usize {
        self.states.len()
    }

    pub fn states(&self) -> &[u32] {
        &self.states
    }

    pub fn index_of(&self, state: u32) -> Option<usize> {
        self.states.binary_search(&state).ok()
    }
}

/// Shorthand for [`SectorBasis::new`].
pub fn sector_basis(sites: usize, sz: i32) -> Result<SectorBasis> {
    SectorBasis::new(sites, sz)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Basis {
    Full { sites: usize },
    Sector(SectorBasis),
}

impl Basis {
    pub fn full(sites: usize) -> Result<Self> {
        if sites == 0 || sites > MAX_FULL_SITES {
            return Err(Error::Parameter(format!("full space supports 1..={MAX_FULL_SITES} sites, got {sites}")));
        }
        Ok(Basis::Full { sites })
    }

    pub fn sites(&self) -> usize {
        match self {
            Basis::Full { sites } => *sites,
            Basis::Sector(b) => b.sites(),
        }
    }

    pub fn dim(&self) -> usize {
        match self {
            Basis::Full { sites } => 1 << sites,
            Basis::Sector(b) => b.dim(),
        }
    }

    fn state(&self, index: usize) -> u32 {
        match self {
            Basis::Full { .. } => index as u32,
            Basis::Sector(b) => b.states[index],
        }
    }

    fn index_of(&self, state: u32) -> Option<usize> {
        match self {
            Basis::Full { sites } => ((state as usize) < (1 << sites)).then_some(state as usize),
            Basis::Sector(b) => b.index_of(state),
        }
    }
}

/// Dense Hermitian matrix together with the basis it is written in.
#[derive(Debug, Clone)]
pub struct HermitianOperator {
    matrix: DMatrix<C64>,
    basis: Basis,
}

impl HermitianOperator {
    /// Wraps `matrix`, rejecting it if it is not Hermitian within [`HERMITICITY_TOL`].
    pub fn new(matrix: DMatrix<C64>, basis: Basis) -> Result<Self> {
        if !matrix.is_square() || matrix.nrows() != basis.dim() {
            return Err(Error::Incompatible(format!(
                "matrix is {}x{} but basis has dimension {}",
                matrix.nrows(),
                matrix.ncols(),
                basis.dim()
            )));
        }
        let residual = hermiticity_residual(&matrix);
        if !(residual < HERMITICITY_TOL) {
            return Err(Error::Numerical(format!("operator is not Hermitian: max |M - M^dag| = {residual:e}")));
        }
        Ok(Self { matrix, basis })
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn matrix(&self) -> &DMatrix<C64> {
        &self.matrix
    }

    pub fn basis(&self) -> &Basis {
        &self.basis
    }

    pub fn is_real(&self) -> bool {
        self.matrix.iter().all(|z| z.im == 0.0)
    }

    /// Element-wise combination `a·self + b·other` (same basis required).
    pub fn combine(&self, a: f64, other: &HermitianOperator, b: f64) -> Result<Self> {
        if self.basis != other.basis {
            return Err(Error::Incompatible("operators live in different bases".into()));
        }
        let matrix = self.matrix.map(|z| z * a) + other.matrix.map(|z| z * b);
        Self::new(matrix, self.basis.clone())
    }
}

pub fn hermiticity_residual(m: &DMatrix<C64>) -> f64 {
    let n = m.nrows();
    let mut worst = 0.0f64;
    for j in 0..n {
        for i in 0..=j {
            worst = worst.max((m[(i, j)] - m[(j, i)].conj()).norm());
        }
    }
    worst
}

/// One two-body term `jxy (σˣσˣ + σʸσʸ) + jz σᶻσᶻ` between sites `i` and `j`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct XxzBond {
    pub i: usize,
    pub j: usize,
    pub jxy: f64,
    pub jz: f64,
}

#[inline]
fn spin(state: u32, site: usize) -> f64 {
    if state >> site & 1 == 1 {
        1.0
    } else {
        -1.0
    }
}

/// Long-range XXZ Hamiltonian `Σ_bonds [...] + Σ_i h_i σᶻ_i` in `basis`.
///
/// With per-site `phases`, a flip-flop that raises site `i` and lowers site
/// `j` carries `e^{i(φ_i − φ_j)}`; the conjugate process the opposite phase.
pub fn build_xxz(bonds: &[XxzBond], fields_z: &[f64], basis: &Basis, phases: Option<&[f64]>) -> Result<HermitianOperator> {
    let l = basis.sites();
    if fields_z.len() != l {
        return Err(Error::Incompatible(format!("{} z-fields for {l} sites", fields_z.len())));
    }
    if let Some(p) = phases {
        if p.len() != l {
            return Err(Error::Incompatible(format!("{} phases for {l} sites", p.len())));
        }
    }
    for b in bonds {
        if b.i >= l || b.j >= l || b.i == b.j {
            return Err(Error::Parameter(format!("bond ({}, {}) invalid on {l} sites", b.i, b.j)));
        }
    }
    let dim = basis.dim();
    let mut m = DMatrix::<C64>::zeros(dim, dim);
    for col in 0..dim {
        let s = basis.state(col);
        let mut diag: f64 = fields_z.iter().enumerate().map(|(i, h)| h * spin(s, i)).sum();
        for b in bonds {
            let (si, sj) = (spin(s, b.i), spin(s, b.j));
            diag += b.jz * si * sj;
            if si != sj && b.jxy != 0.0 {
                let t = s ^ (1 << b.i) ^ (1 << b.j);
                let row = basis
                    .index_of(t)
                    .ok_or_else(|| Error::Incompatible("flip-flop left the basis".into()))?;
                let phase = match phases {
                    None => C64::new(1.0, 0.0),
                    // raising i (i was down) picks e^{i(φ_i − φ_j)}
                    Some(p) => {
                        let arg = if si < 0.0 { p[b.i] - p[b.j] } else { p[b.j] - p[b.i] };
                        C64::from_polar(1.0, arg)
                    }
                };
                m[(row, col)] += phase * (2.0 * b.jxy);
            }
        }
        m[(col, col)] += C64::new(diag, 0.0);
    }
    HermitianOperator::new(m, basis.clone())
}

/// Disordered Heisenberg ring in `basis`, optionally with per-site flip-flop phases.
///
/// Transverse fields in `dis` are only allowed in the full basis.
pub fn build_heisenberg(
    spec: &SpinModelSpec,
    dis: &DisorderRealization,
    basis: &Basis,
    phases: Option<&[f64]>,
) -> Result<HermitianOperator> {
    spec.validate()?;
    if basis.sites() != spec.sites {
        return Err(Error::Incompatible(format!("basis has {} sites, model {}", basis.sites(), spec.sites)));
    }
    if dis.fields_z.len() != spec.sites {
        return Err(Error::Incompatible(format!("{} z-fields for {} sites", dis.fields_z.len(), spec.sites)));
    }
    let xxz = build_xxz(&spec.bonds(), &dis.fields_z, basis, phases)?;
    if !dis.has_transverse() {
        return Ok(xxz);
    }
    if let Basis::Sector(_) = basis {
        return Err(Error::Incompatible("x/y fields break Sz conservation; use the full basis".into()));
    }
    let mut terms = Vec::new();
    for (axis, fields) in [(Pauli::X, &dis.fields_x), (Pauli::Y, &dis.fields_y)] {
        if let Some(h) = fields {
            if h.len() != spec.sites {
                return Err(Error::Incompatible("transverse field length mismatch".into()));
            }
            terms.extend(h.iter().enumerate().map(|(i, &c)| PauliTerm::new(c, vec![(i, axis)])));
        }
    }
    let transverse = build_pauli_sum(spec.sites, &terms)?;
    xxz.combine(1.0, &transverse, 1.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Pauli {
    X,
    Y,
    Z,
}

impl Pauli {
    /// The next axis in x → y → z → x order.
    pub fn next(self) -> Pauli {
        match self {
            Pauli::X => Pauli::Y,
            Pauli::Y => Pauli::Z,
            Pauli::Z => Pauli::X,
        }
    }
}

/// `coeff · Π σ^{a}_{site}` over distinct sites.
#[derive(Debug, Clone, PartialEq)]
pub struct PauliTerm {
    pub coeff: f64,
    pub ops: Vec<(usize, Pauli)>,
}

impl PauliTerm {
    pub fn new(coeff: f64, ops: Vec<(usize, Pauli)>) -> Self {
        Self { coeff, ops }
    }
}

fn apply_pauli_string(state: u32, ops: &[(usize, Pauli)]) -> (u32, C64) {
    let mut s = state;
    let mut amp = C64::new(1.0, 0.0);
    for &(site, p) in ops {
        let up = s >> site & 1 == 1;
        match p {
            Pauli::X => s ^= 1 << site,
            Pauli::Y => {
                // σʸ|↑⟩ = i|↓⟩, σʸ|↓⟩ = −i|↑⟩
                amp *= if up { C64::new(0.0, 1.0) } else { C64::new(0.0, -1.0) };
                s ^= 1 << site;
            }
            Pauli::Z => {
                if !up {
                    amp = -amp;
                }
            }
        }
    }
    (s, amp)
}

/// Full-space (2^L) operator from a list of real-weighted Pauli strings.
pub fn build_pauli_sum(sites: usize, terms: &[PauliTerm]) -> Result<HermitianOperator> {
    let basis = Basis::full(sites)?;
    for t in terms {
        for (k, &(site, _)) in t.ops.iter().enumerate() {
            if site >= sites || t.ops[..k].iter().any(|&(s, _)| s == site) {
                return Err(Error::Parameter(format!("Pauli string has invalid or repeated site {site}")));
            }
        }
    }
    let dim = basis.dim();
    let mut m = DMatrix::<C64>::zeros(dim, dim);
    for col in 0..dim {
        for t in terms.iter().filter(|t| t.coeff != 0.0) {
            let (row, amp) = apply_pauli_string(col as u32, &t.ops);
            m[(row as usize, col)] += amp * t.coeff;
        }
    }
    HermitianOperator::new(m, basis)
}

fn check_ring(sites: usize, fields: &[&[f64]]) -> Result<()> {
    if sites < 3 {
        return Err(Error::Parameter(format!(
            "periodic ring needs at least 3 sites ({sites} would double-count bonds)"
        )));
    }
    if sites > MAX_FULL_SITES {
        return Err(Error::Parameter(format!("full-space models support at most {MAX_FULL_SITES} sites")));
    }
    if fields.iter().any(|f| f.len() != sites) {
        return Err(Error::Incompatible(format!("field vectors must have length {sites}")));
    }
    Ok(())
}

/// Transverse Ising layer `Σ_i σᵃ_i σᵃ_{i+1} + h_i σᵇ_i` with `b` the axis after `a`
/// (x → y field, y → z field, z → x field).
pub fn build_ising_layer(axis: Pauli, sites: usize, fields: &[f64]) -> Result<HermitianOperator> {
    check_ring(sites, &[fields])?;
    let field_axis = axis.next();
    let mut terms = Vec::with_capacity(2 * sites);
    for i in 0..sites {
        terms.push(PauliTerm::new(1.0, vec![(i, axis), ((i + 1) % sites, axis)]));
        terms.push(PauliTerm::new(fields[i], vec![(i, field_axis)]));
    }
    build_pauli_sum(sites, &terms)
}

/// The two Hamiltonians of the half-period Floquet drive:
/// `H₁ = Σ σ·σ + ½(hˣσˣ + hʸσʸ)` and `H₂ = Σ σ·σ + ½(hᶻσᶻ − hʸσʸ)`.
pub fn build_floquet_halves(sites: usize, dis: &DisorderRealization) -> Result<(HermitianOperator, HermitianOperator)> {
    let (hx, hy) = match (&dis.fields_x, &dis.fields_y) {
        (Some(x), Some(y)) => (x.as_slice(), y.as_slice()),
        _ => return Err(Error::Parameter("Floquet halves need x, y and z fields".into())),
    };
    let hz = dis.fields_z.as_slice();
    check_ring(sites, &[hx, hy, hz])?;
    let mut exchange = Vec::with_capacity(3 * sites);
    for i in 0..sites {
        for a in [Pauli::X, Pauli::Y, Pauli::Z] {
            exchange.push(PauliTerm::new(1.0, vec![(i, a), ((i + 1) % sites, a)]));
        }
    }
    let mut first = exchange.clone();
    let mut second = exchange;
    for i in 0..sites {
        first.push(PauliTerm::new(0.5 * hx[i], vec![(i, Pauli::X)]));
        first.push(PauliTerm::new(0.5 * hy[i], vec![(i, Pauli::Y)]));
        second.push(PauliTerm::new(0.5 * hz[i], vec![(i, Pauli::Z)]));
        second.push(PauliTerm::new(-0.5 * hy[i], vec![(i, Pauli::Y)]));
    }
    Ok((build_pauli_sum(sites, &first)?, build_pauli_sum(sites, &second)?))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn reference_spec(w: f64) -> SpinModelSpec {
        SpinModelSpec::new(8, 0.8, 0.02, 0.06, w).unwrap()
    }

    #[test]
    fn spec_rejects_bad_sizes() {
        assert!(SpinModelSpec::new(2, 1.0, 0.0, 0.0, 0.0).is_err());
        assert!(SpinModelSpec::new(7, 1.0, 0.0, 0.0, 0.0).is_err());
        assert!(SpinModelSpec::new(16, 1.0, 0.0, 0.0, 0.0).is_err());
        assert!(SpinModelSpec::new(8, 1.0, 0.0, 0.0, -1.0).is_err());
    }

    #[test]
    fn zero_width_disorder_is_clean() {
        let dis = sample_disorder(&reference_spec(0.0), DisorderLaw::Uniform, 99);
        assert!(dis.fields_z.iter().all(|&h| h == 0.0));
    }

    #[test]
    fn disorder_is_deterministic() {
        let spec = reference_spec(2.0);
        let a = sample_disorder(&spec, DisorderLaw::Uniform, 5);
        let b = sample_disorder(&spec, DisorderLaw::Uniform, 5);
        let c = sample_disorder(&spec, DisorderLaw::Uniform, 6);
        assert_eq!(a, b);
        assert_ne!(a, c);
        assert_eq!(
            sample_fields(4, DisorderLaw::Normal, 1.0, FieldAxes::Xyz, 3),
            sample_fields(4, DisorderLaw::Normal, 1.0, FieldAxes::Xyz, 3)
        );
    }

    #[test]
    fn uniform_law_statistics() {
        // 10^5 draws spread over many seeds
        let w = 2.0;
        let spec = SpinModelSpec::new(10, 1.0, 0.0, 0.0, w).unwrap();
        let draws: Vec<f64> = (0..10_000u64)
            .flat_map(|s| sample_disorder(&spec, DisorderLaw::Uniform, s).fields_z)
            .collect();
        assert_eq!(draws.len(), 100_000);
        let mean = draws.iter().sum::<f64>() / draws.len() as f64;
        let sigma = w / 3f64.sqrt() / (draws.len() as f64).sqrt();
        assert!(mean.abs() < 3.0 * sigma, "mean {mean}");
        assert!(draws.iter().all(|h| h.abs() <= w));
    }

    #[test]
    fn sector_dimensions() {
        assert_eq!(sector_basis(12, 0).unwrap().dim(), 924);
        assert_eq!(sector_basis(8, 0).unwrap().dim(), 70);
        let up = sector_basis(4, 4).unwrap();
        assert_eq!(up.states(), &[0b1111]);
        assert!(sector_basis(8, 1).is_err());
        assert!(sector_basis(4, 6).is_err());
        let b = sector_basis(10, -2).unwrap();
        assert_eq!(b.dim(), binomial(10, 4));
        assert!(b.states().windows(2).all(|w| w[0] < w[1]));
    }

    #[test]
    fn fully_polarized_energy() {
        let spec = SpinModelSpec::new(4, 0.7, 0.3, 0.2, 0.0).unwrap();
        let basis = Basis::Sector(sector_basis(4, 4).unwrap());
        let h = build_heisenberg(&spec, &DisorderRealization::clean(4), &basis, None).unwrap();
        assert_eq!(h.dim(), 1);
        assert!((h.matrix()[(0, 0)].re - (4.0 * 0.7 + 4.0 * 0.2)).abs() < 1e-14);
    }

    #[test]
    fn transverse_fields_rejected_in_sector() {
        let spec = reference_spec(1.0);
        let dis = sample_fields(8, DisorderLaw::Normal, 1.0, FieldAxes::Xyz, 1);
        let basis = Basis::Sector(sector_basis(8, 0).unwrap());
        assert!(matches!(build_heisenberg(&spec, &dis, &basis, None), Err(Error::Incompatible(_))));
        assert!(build_heisenberg(&spec, &dis, &Basis::full(8).unwrap(), None).is_ok());
    }

    #[test]
    fn classical_ising_layer_is_diagonal() {
        let h = build_ising_layer(Pauli::Z, 4, &[0.0; 4]).unwrap();
        for s in 0..16u32 {
            let aligned = (0..4).filter(|&i| (s >> i & 1) == (s >> ((i + 1) % 4) & 1)).count() as f64;
            assert_eq!(h.matrix()[(s as usize, s as usize)].re, aligned - (4.0 - aligned));
            for t in 0..16usize {
                if t != s as usize {
                    assert_eq!(h.matrix()[(t, s as usize)], C64::new(0.0, 0.0));
                }
            }
        }
    }

    #[test]
    fn ising_layer_rejects_tiny_ring() {
        assert!(build_ising_layer(Pauli::X, 2, &[0.1, 0.2]).is_err());
    }

    #[test]
    fn pauli_y_action() {
        // σʸ on site 0 of |↑⟩ (bit set) gives i|↓⟩
        let (s, a) = apply_pauli_string(1, &[(0, Pauli::Y)]);
        assert_eq!(s, 0);
        assert_eq!(a, C64::new(0.0, 1.0));
    }

    #[test]
    fn floquet_halves_clean_limit() {
        let dis = DisorderRealization {
            seed: 0,
            fields_z: vec![0.0; 4],
            fields_x: Some(vec![0.0; 4]),
            fields_y: Some(vec![0.0; 4]),
        };
        let (h1, h2) = build_floquet_halves(4, &dis).unwrap();
        let spec = SpinModelSpec::new(4, 1.0, 0.0, 0.0, 0.0).unwrap();
        let clean = build_heisenberg(&spec, &DisorderRealization::clean(4), &Basis::full(4).unwrap(), None).unwrap();
        assert_eq!(h1.matrix(), clean.matrix());
        assert_eq!(h2.matrix(), clean.matrix());
    }
}
