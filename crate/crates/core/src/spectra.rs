//! Dense eigendecompositions, propagators and Floquet operators.

use std::f64::consts::PI;

use nalgebra::{DMatrix, Schur, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::models::HermitianOperator;
use crate::C64;

pub const UNITARITY_TOL: f64 = 1e-9;
pub const RECONSTRUCTION_TOL: f64 = 1e-8;
/// Central fraction of levels used for the mean spacing unless overridden.
pub const DEFAULT_WINDOW: f64 = 1.0 / 3.0;
/// Quasienergies within this distance of the 2π branch cut fold to 0.
const BRANCH_EPS: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum SpectrumKind {
    Hamiltonian,
    Floquet { period: f64 },
}

/// Ascending eigenvalues with optional eigenvectors (as columns).
#[derive(Debug, Clone)]
pub struct Spectrum {
    values: Vec<f64>,
    vectors: Option<DMatrix<C64>>,
    kind: SpectrumKind,
}

impl Spectrum {
    /// Hamiltonian spectrum from raw levels; they are sorted.
    pub fn from_levels(mut values: Vec<f64>) -> Result<Self> {
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numerical("non-finite level".into()));
        }
        values.sort_by(f64::total_cmp);
        Ok(Self { values, vectors: None, kind: SpectrumKind::Hamiltonian })
    }

    /// Floquet spectrum from quasienergies already in `[0, 2π/period)`.
    pub fn from_quasienergies(mut values: Vec<f64>, period: f64) -> Result<Self> {
        check_period(period)?;
        let top = 2.0 * PI / period;
        if values.iter().any(|&v| !(0.0..top).contains(&v)) {
            return Err(Error::Parameter(format!("quasienergies must lie in [0, {top})")));
        }
        values.sort_by(f64::total_cmp);
        Ok(Self { values, vectors: None, kind: SpectrumKind::Floquet { period } })
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn vectors(&self) -> Option<&DMatrix<C64>> {
        self.vectors.as_ref()
    }

    pub fn kind(&self) -> SpectrumKind {
        self.kind
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// E_max − E_min.
    pub fn width(&self) -> f64 {
        match (self.values.first(), self.values.last()) {
            (Some(a), Some(b)) => b - a,
            _ => 0.0,
        }
    }

    /// (E_max + E_min)/2.
    pub fn center(&self) -> f64 {
        match (self.values.first(), self.values.last()) {
            (Some(a), Some(b)) => 0.5 * (a + b),
            _ => 0.0,
        }
    }

    /// Dynamical phase multiplier: `E_ℓ·t` for a Hamiltonian, `λ_ℓ·ϑ·t` for Floquet steps.
    pub fn phase_rate(&self, level: usize) -> f64 {
        match self.kind {
            SpectrumKind::Hamiltonian => self.values[level],
            SpectrumKind::Floquet { period } => self.values[level] * period,
        }
    }

    /// Drop eigenvectors to save memory.
    pub fn without_vectors(mut self) -> Self {
        self.vectors = None;
        self
    }
}

fn check_period(period: f64) -> Result<()> {
    if !(period > 0.0) || !period.is_finite() {
        return Err(Error::Parameter(format!("Floquet period must be positive, got {period}")));
    }
    Ok(())
}

/// Dense unitary matrix, unitarity checked on construction.
#[derive(Debug, Clone)]
pub struct UnitaryOperator {
    matrix: DMatrix<C64>,
}

impl UnitaryOperator {
    pub fn new(matrix: DMatrix<C64>) -> Result<Self> {
        if !matrix.is_square() {
            return Err(Error::Incompatible("unitary must be square".into()));
        }
        let r = unitarity_residual(&matrix);
        if !(r < UNITARITY_TOL) {
            return Err(Error::Numerical(format!("matrix is not unitary: max |U^dag U - I| = {r:e}")));
        }
        Ok(Self { matrix })
    }

    pub fn identity(dim: usize) -> Self {
        Self { matrix: DMatrix::identity(dim, dim) }
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn matrix(&self) -> &DMatrix<C64> {
        &self.matrix
    }

    pub fn into_matrix(self) -> DMatrix<C64> {
        self.matrix
    }
}

pub fn unitarity_residual(m: &DMatrix<C64>) -> f64 {
    let n = m.nrows();
    let g = m.adjoint() * m;
    let mut worst = 0.0f64;
    for j in 0..n {
        for i in 0..n {
            let target = if i == j { C64::new(1.0, 0.0) } else { C64::new(0.0, 0.0) };
            worst = worst.max((g[(i, j)] - target).norm());
        }
    }
    worst
}

fn sort_eigenpairs(values: Vec<f64>, vectors: Option<DMatrix<C64>>) -> (Vec<f64>, Option<DMatrix<C64>>) {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let sorted = order.iter().map(|&k| values[k]).collect();
    let vectors = vectors.map(|v| DMatrix::from_fn(v.nrows(), v.ncols(), |i, j| v[(i, order[j])]));
    (sorted, vectors)
}

/// Eigen-decomposition of a Hermitian operator; real matrices take a real solver.
pub fn eig_hermitian(h: &HermitianOperator, want_vectors: bool) -> Result<Spectrum> {
    let m = h.matrix();
    let n = m.nrows();
    if n == 0 {
        return Err(Error::Parameter("empty operator".into()));
    }
    let max_iter = 100 * n.max(10);
    let (values, vectors) = if h.is_real() {
        let re = m.map(|z| z.re);
        let eig = SymmetricEigen::try_new(re, 1e-15, max_iter).ok_or_else(|| {
            Error::Numerical(format!("real symmetric eigensolver did not converge (dim {n}, {max_iter} sweeps)"))
        })?;
        let vecs = want_vectors.then(|| eig.eigenvectors.map(|x| C64::new(x, 0.0)));
        (eig.eigenvalues.iter().copied().collect::<Vec<_>>(), vecs)
    } else {
        let eig = SymmetricEigen::try_new(m.clone(), 1e-15, max_iter).ok_or_else(|| {
            Error::Numerical(format!("Hermitian eigensolver did not converge (dim {n}, {max_iter} sweeps)"))
        })?;
        let vecs = want_vectors.then_some(eig.eigenvectors);
        (eig.eigenvalues.iter().copied().collect::<Vec<_>>(), vecs)
    };
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numerical("eigensolver returned non-finite eigenvalues".into()));
    }
    let (values, vectors) = sort_eigenpairs(values, vectors);
    if let Some(v) = &vectors {
        let scale = values.iter().fold(0.0f64, |a, x| a.max(x.abs()));
        let residual = reconstruction_residual(m, v, &values);
        if residual > RECONSTRUCTION_TOL * scale.max(f64::MIN_POSITIVE) {
            return Err(Error::Numerical(format!(
                "eigendecomposition residual {residual:e} exceeds {RECONSTRUCTION_TOL:e} x |H| = {scale:e}"
            )));
        }
    }
    Ok(Spectrum { values, vectors, kind: SpectrumKind::Hamiltonian })
}

fn reconstruction_residual(m: &DMatrix<C64>, v: &DMatrix<C64>, values: &[f64]) -> f64 {
    let mut scaled = v.clone();
    for (j, &lam) in values.iter().enumerate() {
        scaled.column_mut(j).scale_mut(lam);
    }
    let rebuilt = scaled * v.adjoint();
    (m - rebuilt).iter().fold(0.0f64, |a, z| a.max(z.norm()))
}

/// `V e^{−iΛ·rate·t} V†`; for Floquet spectra `t` counts periods.
pub fn propagator(spec: &Spectrum, t: f64) -> Result<UnitaryOperator> {
    let v = spec
        .vectors()
        .ok_or_else(|| Error::Parameter("propagator needs a spectrum with eigenvectors".into()))?;
    let mut scaled = v.clone();
    for j in 0..spec.len() {
        let phase = C64::from_polar(1.0, -spec.phase_rate(j) * t);
        for z in scaled.column_mut(j).iter_mut() {
            *z *= phase;
        }
    }
    UnitaryOperator::new(scaled * v.adjoint())
}

/// `Π_k e^{−iτ_k H_k}` with `layers[0]` leftmost, i.e. the last layer acts first.
pub fn floquet_operator(layers: &[(&HermitianOperator, f64)]) -> Result<UnitaryOperator> {
    let first = layers.first().ok_or_else(|| Error::Parameter("no Floquet layers".into()))?;
    let dim = first.0.dim();
    let mut u: Option<DMatrix<C64>> = None;
    for (h, tau) in layers {
        if h.dim() != dim {
            return Err(Error::Incompatible(format!("layer dimension {} differs from {dim}", h.dim())));
        }
        if !(*tau > 0.0) || !tau.is_finite() {
            return Err(Error::Parameter(format!("layer duration must be positive, got {tau}")));
        }
        let p = propagator(&eig_hermitian(h, true)?, *tau)?.into_matrix();
        u = Some(match u {
            None => p,
            Some(acc) => acc * p,
        });
    }
    UnitaryOperator::new(u.expect("at least one layer"))
}

fn fold_quasienergy(z: C64, period: f64) -> f64 {
    let mut phase = (-z.arg()).rem_euclid(2.0 * PI);
    if 2.0 * PI - phase < BRANCH_EPS {
        phase = 0.0;
    }
    phase / period
}

/// Quasienergies `λ = −arg(eig U)/ϑ ∈ [0, 2π/ϑ)`, ascending.
pub fn quasienergies(u: &UnitaryOperator, period: f64, want_vectors: bool) -> Result<Spectrum> {
    check_period(period)?;
    let r = unitarity_residual(u.matrix());
    if !(r < UNITARITY_TOL) {
        return Err(Error::Numerical(format!("quasienergies need a unitary input; residual {r:e}")));
    }
    let n = u.dim();
    let schur = Schur::try_new(u.matrix().clone(), 1e-15, 1000 * n.max(10))
        .ok_or_else(|| Error::Numerical(format!("Schur decomposition did not converge (dim {n})")))?;
    let (q, t) = schur.unpack();
    // a normal matrix has a diagonal Schur form
    let offdiag = (0..n)
        .flat_map(|j| (0..j).map(move |i| (i, j)))
        .fold(0.0f64, |a, (i, j)| a.max(t[(i, j)].norm()));
    if offdiag > 1e-8 {
        return Err(Error::Numerical(format!("Schur form of unitary not diagonal (max off-diagonal {offdiag:e})")));
    }
    let values: Vec<f64> = (0..n).map(|k| fold_quasienergy(t[(k, k)], period)).collect();
    let (values, vectors) = sort_eigenpairs(values, want_vectors.then_some(q));
    Ok(Spectrum { values, vectors, kind: SpectrumKind::Floquet { period } })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LevelSpacing {
    pub delta_e: f64,
    pub tau_h: f64,
    pub levels_used: usize,
}

/// Mean gap over the central `window_fraction` of levels (by index) and τ_H = 2π/δ_E.
pub fn mean_level_spacing(spec: &Spectrum, window_fraction: f64) -> Result<LevelSpacing> {
    if !(window_fraction > 0.0 && window_fraction <= 1.0) {
        return Err(Error::Parameter(format!("window fraction must be in (0, 1], got {window_fraction}")));
    }
    let n = spec.len();
    let k = ((window_fraction * n as f64).round() as usize).min(n);
    if k < 2 {
        return Err(Error::TooFewLevels { found: k, required: 2 });
    }
    let start = (n - k) / 2;
    let window = &spec.values()[start..start + k];
    let delta_e = (window[k - 1] - window[0]) / (k - 1) as f64;
    if !(delta_e > 0.0) {
        return Err(Error::Numerical("levels in the window are fully degenerate".into()));
    }
    Ok(LevelSpacing { delta_e, tau_h: 2.0 * PI / delta_e, levels_used: k })
}
