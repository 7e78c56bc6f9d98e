//! Rydberg-dressing engine: van der Waals matrices, dressed spin couplings on
//! a tweezer ring, blockade by the control atom and the decoherence budget.
//!
//! Units are MHz and μm throughout; the conversion to the dimensionless
//! J = 1 of the simulation core goes through [`RingModel::j_unit`].
//!
//! The maximal ring radius is R_max = 0.75·R_b ≈ 5 μm in the discussion of
//! the budget; a figure caption elsewhere quotes 4.6 μm. Reference configs use 5.0.

use std::f64::consts::PI;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::models::{self, Basis, XxzBond};
use crate::spectra;
use crate::C64;

/// Relative pole threshold on products of three light-shift denominators, in units of |2Δ|³.
pub const POLE_THRESHOLD: f64 = 1e-6;
/// Upper bound returned by [`max_ring_atoms`] before it reports an error.
pub const MAX_RING_CAP: usize = 10_000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RydbergConfig {
    /// Isotropic simulator-pair constant (MHz·μm⁶).
    pub c6: f64,
    /// Anisotropic simulator-pair constant (MHz·μm⁶).
    pub c6_tilde: f64,
    /// Control-simulator constant (MHz·μm⁶).
    pub c6_prime: f64,
    /// Dressing detuning Δ± (MHz).
    pub delta: f64,
    /// Ω/Δ.
    pub xi: f64,
    /// Two-photon field splitting Δ_B (MHz); only enters the reported regime check.
    #[serde(default)]
    pub delta_b: f64,
    /// Simulator Rydberg decay rate (MHz).
    #[serde(default)]
    pub gamma_d: f64,
    /// Control Rydberg decay rate (MHz).
    #[serde(default)]
    pub gamma_d_prime: f64,
    /// Electronic offset E_cr − E_cg added to the clock detuning (MHz).
    #[serde(default)]
    pub electronic_offset: f64,
}

impl RydbergConfig {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("c6", self.c6),
            ("c6_tilde", self.c6_tilde),
            ("c6_prime", self.c6_prime),
            ("delta", self.delta),
            ("xi", self.xi),
            ("delta_b", self.delta_b),
            ("gamma_d", self.gamma_d),
            ("gamma_d_prime", self.gamma_d_prime),
            ("electronic_offset", self.electronic_offset),
        ] {
            if !v.is_finite() {
                return Err(Error::Parameter(format!("{name} must be finite")));
            }
        }
        if self.delta == 0.0 {
            return Err(Error::Parameter("dressing detuning must be nonzero".into()));
        }
        if !(self.xi > 0.0 && self.xi < 0.5) {
            return Err(Error::Parameter(format!("xi = {} outside the perturbative range (0, 0.5)", self.xi)));
        }
        if self.gamma_d < 0.0 || self.gamma_d_prime < 0.0 {
            return Err(Error::Parameter("decay rates must be nonnegative".into()));
        }
        Ok(())
    }

    /// Rabi frequency Ω = ξΔ.
    pub fn omega(&self) -> f64 {
        self.xi * self.delta
    }

    pub fn blockade_radius(&self) -> f64 {
        (self.c6_prime / self.delta).abs().powf(1.0 / 6.0)
    }

    /// Dressing seen by the ring with the control atom excited: Δ′ = Δ − C₆′/R⁶
    /// at fixed Rabi frequency, so ξ′ = Ω/Δ′.
    pub fn blockaded_dressing(&self, radius: f64) -> (f64, f64) {
        let delta_p = self.delta - self.c6_prime / radius.powi(6);
        (delta_p, self.omega() / delta_p)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RingGeometry {
    pub sites: usize,
    /// Ring radius R (μm), also the control-atom distance.
    pub radius: f64,
    /// Minimal simulator-simulator distance r_c (μm).
    pub r_c: f64,
    /// Minimal control-simulator distance r_c′ (μm).
    #[serde(default)]
    pub r_c_prime: Option<f64>,
}

impl RingGeometry {
    pub fn validate(&self) -> Result<()> {
        if self.sites < 2 {
            return Err(Error::Geometry(format!("ring needs at least 2 atoms, got {}", self.sites)));
        }
        if !(self.radius > 0.0 && self.radius.is_finite()) || !(self.r_c > 0.0) {
            return Err(Error::Geometry("radius and r_c must be positive".into()));
        }
        Ok(())
    }

    /// Chord distance 2R sin(π|i−j|/L).
    pub fn distance(&self, i: usize, j: usize) -> f64 {
        let d = i.abs_diff(j) as f64;
        2.0 * self.radius * (PI * d / self.sites as f64).sin()
    }

    /// In-plane angle of the vector from atom i to atom j.
    pub fn azimuth(&self, i: usize, j: usize) -> f64 {
        let step = 2.0 * PI / self.sites as f64;
        (0.5 * (i + j) as f64 * step + 0.5 * PI).rem_euclid(2.0 * PI)
    }

    pub fn nearest_distance(&self) -> f64 {
        self.distance(0, 1)
    }

    /// Non-fatal validity findings.
    pub fn warnings(&self, blockade_radius: Option<f64>) -> Vec<String> {
        let mut out = Vec::new();
        if self.nearest_distance() < self.r_c {
            out.push(format!(
                "nearest chord {:.4} um is below r_c = {} um; dressing is outside its perturbative range",
                self.nearest_distance(),
                self.r_c
            ));
        }
        if let Some(rc) = self.r_c_prime {
            if self.radius < rc {
                out.push(format!("ring radius {} um is below r_c' = {rc} um", self.radius));
            }
        }
        if let Some(rb) = blockade_radius {
            if self.radius > 0.75 * rb {
                out.push(format!("ring radius {} um exceeds 0.75 R_b = {:.4} um", self.radius, 0.75 * rb));
            }
        }
        out
    }
}

/// `𝔻₀(θ, φ)` with entries as printed for the 4×4 pair basis (++, +−, −+, −−).
///
/// Note: off the θ = π/2 plane the printed (2,1) and (3,1) entries are not the
/// conjugates of (1,2) and (1,3), so the matrix is only Hermitian in that plane.
pub fn d0_matrix(theta: f64, phi: f64) -> DMatrix<C64> {
    let c2 = (2.0 * theta).cos();
    let s2 = (2.0 * theta).sin();
    let ss = theta.sin().powi(2);
    let e = |k: f64| C64::from_polar(1.0, k * phi);
    let r = |x: f64| C64::new(x, 0.0);
    let a = r((3.0 * c2 - 1.0) / 81.0);
    let b = r((1.0 - 3.0 * c2) / 81.0);
    let c = r((-5.0 - 3.0 * c2) / 81.0);
    DMatrix::from_row_slice(
        4,
        4,
        &[
            a,
            e(-1.0) * (4.0 * s2 / 27.0),
            e(-1.0) * (4.0 * s2 / 27.0),
            e(-2.0) * (2.0 * ss / 27.0),
            e(1.0) * (s2 / 27.0),
            b,
            c,
            e(-1.0) * (-4.0 * s2 / 27.0),
            e(1.0) * (s2 / 27.0),
            c,
            b,
            e(-1.0) * (-4.0 * s2 / 27.0),
            e(2.0) * (2.0 * ss / 27.0),
            e(1.0) * (-4.0 * s2 / 27.0),
            e(1.0) * (-4.0 * s2 / 27.0),
            a,
        ],
    )
}

/// `[C₆𝕀 − C̃₆𝔻₀(θ, φ)]/r⁶`.
pub fn vdw_matrix(c6: f64, c6_tilde: f64, r: f64, theta: f64, phi: f64) -> DMatrix<C64> {
    let d0 = d0_matrix(theta, phi);
    (DMatrix::<C64>::identity(4, 4) * C64::new(c6, 0.0) - d0 * C64::new(c6_tilde, 0.0)) / C64::new(r.powi(6), 0.0)
}

/// van der Waals elements of one simulator pair (MHz).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PairCouplings {
    pub i: usize,
    pub j: usize,
    pub distance: f64,
    pub phi: f64,
    /// W₊₊ = W₋₋.
    pub w_pp: f64,
    /// W₊₋ = W₋₊.
    pub w_pm: f64,
    /// V₊₋ = V₋₊.
    pub v_pm: f64,
    pub v_pp: C64,
}

impl PairCouplings {
    pub fn w_mm(&self) -> f64 {
        self.w_pp
    }

    pub fn w_mp(&self) -> f64 {
        self.w_pm
    }

    pub fn v_mp(&self) -> f64 {
        self.v_pm
    }

    pub fn v_mm(&self) -> C64 {
        self.v_pp.conj()
    }

    pub fn with_pair(mut self, i: usize, j: usize) -> Self {
        self.i = i;
        self.j = j;
        self
    }
}

/// W/V elements in the θ = π/2 plane at distance `r` and azimuth `phi`.
pub fn vdw_pair(c6: f64, c6_tilde: f64, r: f64, phi: f64) -> Result<PairCouplings> {
    if !(r > 0.0) {
        return Err(Error::Geometry(format!("pair distance must be positive, got {r}")));
    }
    let inv = r.powi(-6);
    Ok(PairCouplings {
        i: 0,
        j: 0,
        distance: r,
        phi,
        w_pp: (c6 - 4.0 * c6_tilde / 81.0) * inv,
        w_pm: (c6 + 4.0 * c6_tilde / 81.0) * inv,
        v_pm: -(2.0 / 81.0) * c6_tilde * inv,
        v_pp: C64::from_polar(1.0, -2.0 * phi) * (-(2.0 / 27.0) * c6_tilde * inv),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Blockade {
    /// C₆′/r⁶ (MHz).
    pub shift: f64,
    /// |C₆′/Δ|^{1/6} (μm).
    pub radius: f64,
}

pub fn blockade(c6_prime: f64, r: f64, delta: f64) -> Result<Blockade> {
    if !(r > 0.0) || delta == 0.0 {
        return Err(Error::Parameter("blockade needs r > 0 and a nonzero detuning".into()));
    }
    Ok(Blockade { shift: c6_prime / r.powi(6), radius: (c6_prime / delta).abs().powf(1.0 / 6.0) })
}

/// XXZ couplings and the spin-independent shift of one pair (MHz).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DressedCoupling {
    pub jxy: f64,
    pub jz: f64,
    pub beta: f64,
}

/// Fourth-order dressed couplings in the strong-field regime.
pub fn dressed_couplings(pair: &PairCouplings, delta: f64, xi: f64) -> Result<DressedCoupling> {
    let (v, wpm, wpp) = (pair.v_pm, pair.w_pm, pair.w_pp);
    let d = delta;
    let x4 = xi.powi(4);
    let minus = v - wpm - 2.0 * d;
    let plus = 2.0 * d + v + wpm;
    let mid = 2.0 * d + wpm;
    let shift = 2.0 * d + wpp;
    let threshold = POLE_THRESHOLD * (2.0 * d).abs().powi(3);
    for denominator in [minus * plus * mid, shift * minus * plus] {
        if !(denominator.abs() >= threshold) {
            return Err(Error::Resonance { i: pair.i, j: pair.j, distance: pair.distance, denominator, threshold });
        }
    }
    let jxy = -2.0 * d * d * x4 * v / (minus * plus);
    let jz = -2.0 * d * d * x4 * (v * v - mid * (wpm - wpp)) / (mid * minus * plus);
    let beta = -2.0 * d * xi * xi
        + 2.0 * d * x4 * (v * v * (3.0 * d + 2.0 * wpp) - mid * (4.0 * d * d + 3.0 * d * (wpm + wpp) + 2.0 * wpm * wpp))
            / (shift * (v - 2.0 * d - wpm) * plus);
    Ok(DressedCoupling { jxy, jz, beta })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RingPair {
    pub vdw: PairCouplings,
    /// Control atom in |0⟩: H_spin.
    pub plain: DressedCoupling,
    /// Control atom excited: H′_spin.
    pub blockaded: DressedCoupling,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Branch {
    Plain,
    Blockaded,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RingModel {
    pub sites: usize,
    pub pairs: Vec<RingPair>,
    pub delta_prime: f64,
    pub xi_prime: f64,
    pub beta_sum: f64,
    pub beta_prime_sum: f64,
    /// Σ(β′ − β) + electronic offset (MHz).
    pub delta_offset: f64,
    /// |J_xy| of nearest neighbours (MHz), the energy unit of exported models.
    pub j_unit: f64,
    pub warnings: Vec<String>,
}

impl RingModel {
    fn coupling(&self, pair: &RingPair, branch: Branch) -> DressedCoupling {
        match branch {
            Branch::Plain => pair.plain,
            Branch::Blockaded => pair.blockaded,
        }
    }

    /// All-pairs XXZ bonds divided by `scale` (use `j_unit` for J = 1 units, 1 for MHz).
    pub fn bonds(&self, branch: Branch, scale: f64) -> Vec<XxzBond> {
        self.pairs
            .iter()
            .map(|p| {
                let c = self.coupling(p, branch);
                XxzBond { i: p.vdw.i, j: p.vdw.j, jxy: c.jxy / scale, jz: c.jz / scale }
            })
            .collect()
    }

    /// Symmetric L×L table of J_xy (MHz).
    pub fn jxy_matrix(&self, branch: Branch) -> DMatrix<f64> {
        let mut m = DMatrix::zeros(self.sites, self.sites);
        for p in &self.pairs {
            let c = self.coupling(p, branch);
            m[(p.vdw.i, p.vdw.j)] = c.jxy;
            m[(p.vdw.j, p.vdw.i)] = c.jxy;
        }
        m
    }
}

/// Dressed couplings for every pair of a ring, with and without the control excitation.
pub fn build_ring_model(config: &RydbergConfig, geom: &RingGeometry) -> Result<RingModel> {
    config.validate()?;
    geom.validate()?;
    let (delta_prime, xi_prime) = config.blockaded_dressing(geom.radius);
    let mut pairs = Vec::new();
    for i in 0..geom.sites {
        for j in i + 1..geom.sites {
            let vdw = vdw_pair(config.c6, config.c6_tilde, geom.distance(i, j), geom.azimuth(i, j))?.with_pair(i, j);
            pairs.push(RingPair {
                plain: dressed_couplings(&vdw, config.delta, config.xi)?,
                blockaded: dressed_couplings(&vdw, delta_prime, xi_prime)?,
                vdw,
            });
        }
    }
    let beta_sum: f64 = pairs.iter().map(|p| p.plain.beta).sum();
    let beta_prime_sum: f64 = pairs.iter().map(|p| p.blockaded.beta).sum();
    let j_unit = pairs
        .iter()
        .find(|p| p.vdw.i == 0 && p.vdw.j == 1)
        .map(|p| p.plain.jxy.abs())
        .unwrap_or(0.0);
    let mut warnings = geom.warnings(Some(config.blockade_radius()));
    if j_unit == 0.0 {
        warnings.push("nearest-neighbour J_xy vanishes; the energy unit is undefined".into());
    }
    let max_j = pairs.iter().fold(0.0f64, |a, p| a.max(p.plain.jxy.abs()).max(p.plain.jz.abs()));
    if config.delta_b.abs() < 10.0 * max_j {
        warnings.push(format!(
            "|delta_b| = {} MHz is not large against the couplings (max {max_j:.3e} MHz); the XXZ reduction assumes a strong field",
            config.delta_b.abs()
        ));
    }
    Ok(RingModel {
        sites: geom.sites,
        pairs,
        delta_prime,
        xi_prime,
        beta_sum,
        beta_prime_sum,
        delta_offset: beta_prime_sum - beta_sum + config.electronic_offset,
        j_unit,
        warnings,
    })
}

/// E_max − E_min of an XXZ model, taken over all magnetization sectors.
pub fn spectral_range(sites: usize, bonds: &[XxzBond]) -> Result<f64> {
    let fields = vec![0.0; sites];
    let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
    let l = sites as i32;
    for sz in (-l..=l).step_by(2) {
        let basis = Basis::Sector(models::sector_basis(sites, sz)?);
        let h = models::build_xxz(bonds, &fields, &basis, None)?;
        let spec = spectra::eig_hermitian(&h, false)?;
        lo = lo.min(spec.values()[0]);
        hi = hi.max(spec.values()[spec.len() - 1]);
    }
    Ok(hi - lo)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecoherenceBudget {
    pub kappa1: f64,
    pub kappa2: f64,
    pub kappa3: f64,
    /// (R/R_b)²⁴ estimate of κ₃.
    pub kappa3_analytic: f64,
    /// [|H_spin| max κ]⁻¹ (μs for rates in MHz).
    pub t_coh: f64,
    /// t_coh in units of 1/J when an energy unit is given.
    pub t_coh_j: Option<f64>,
    pub blockade_radius: f64,
    pub h_range: f64,
    pub h_prime_range: f64,
}

pub fn decoherence_budget(
    config: &RydbergConfig,
    geom: &RingGeometry,
    h_range: f64,
    h_prime_range: f64,
    j_unit: Option<f64>,
) -> Result<DecoherenceBudget> {
    config.validate()?;
    geom.validate()?;
    if !(h_range > 0.0) || !(h_prime_range >= 0.0) {
        return Err(Error::Parameter("spectral ranges must be positive".into()));
    }
    let kappa1 = config.gamma_d_prime / h_range;
    let kappa2 = config.xi * config.xi * config.gamma_d * geom.sites as f64 / h_range;
    let kappa3 = h_prime_range / h_range;
    let kappa = kappa1.max(kappa2).max(kappa3);
    let t_coh = if kappa > 0.0 { 1.0 / (h_range * kappa) } else { f64::INFINITY };
    let rb = config.blockade_radius();
    Ok(DecoherenceBudget {
        kappa1,
        kappa2,
        kappa3,
        kappa3_analytic: (geom.radius / rb).powi(24),
        t_coh,
        t_coh_j: j_unit.map(|j| t_coh * j),
        blockade_radius: rb,
        h_range,
        h_prime_range,
    })
}

/// |H_spin| implied by a decay rate and a quoted κ₁.
pub fn implied_h_range(gamma_d_prime: f64, kappa1: f64) -> f64 {
    gamma_d_prime / kappa1
}

/// L_max = ⌊π / arcsin(r_c / 2R_max)⌋.
pub fn max_ring_atoms(r_c: f64, r_max: f64) -> Result<usize> {
    if !(r_c > 0.0) || !(r_max > 0.0) || r_c >= 2.0 * r_max {
        return Err(Error::Geometry(format!("need 0 < r_c < 2 R_max, got r_c = {r_c}, R_max = {r_max}")));
    }
    let x = PI / (r_c / (2.0 * r_max)).asin();
    // absorb rounding at exact polygon sizes
    let l = (x + 1e-9).floor();
    if l > MAX_RING_CAP as f64 {
        return Err(Error::Geometry(format!("r_c = {r_c} is too small: ring would hold {l:e} atoms")));
    }
    Ok(l as usize)
}

/// Effective Rabi amplitude and phase of a plane-wave/LG stroboscopic cycle.
pub fn stroboscopic_phase(omega: f64, omega_lg: f64, t1: f64, t2: f64, phi: f64) -> Result<(f64, f64)> {
    if t1 < 0.0 || t2 < 0.0 || !(t1 + t2 > 0.0) {
        return Err(Error::Parameter("segment durations must be nonnegative with a positive sum".into()));
    }
    let period = t1 + t2;
    let re = t1 * omega + t2 * omega_lg * phi.cos();
    let im = t2 * omega_lg * phi.sin();
    Ok((re.hypot(im) / period, im.atan2(re)))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn d0_printed_entries() {
        assert!((d0_matrix(0.0, 0.3)[(0, 0)].re - 2.0 / 81.0).abs() < 1e-16);
        let m = d0_matrix(PI / 2.0, 0.0);
        assert!((m[(0, 3)] - C64::new(2.0 / 27.0, 0.0)).norm() < 1e-16);
    }

    #[test]
    fn vdw_examples() {
        let p = vdw_pair(123.0, 81.0, 1.0, 0.4).unwrap();
        assert!((p.v_pm + 2.0).abs() < 1e-15);
        let a = vdw_pair(-500.0, 3000.0, 3.0, 1.1).unwrap();
        let b = vdw_pair(-500.0, 3000.0, 6.0, 1.1).unwrap();
        assert!((a.w_pp / b.w_pp - 64.0).abs() < 1e-12);
        assert!((a.w_pm / b.w_pm - 64.0).abs() < 1e-12);
        assert!((a.v_pm / b.v_pm - 64.0).abs() < 1e-12);
        assert!((a.v_pp / b.v_pp - C64::new(64.0, 0.0)).norm() < 1e-12);
        let c = vdw_pair(0.0, 270.0, 1.0, PI).unwrap();
        assert!(c.v_pp.im.abs() < 1e-14 && (c.v_pp.re + 20.0).abs() < 1e-12);
        assert_eq!(c.v_mm(), c.v_pp.conj());
    }

    #[test]
    fn blockade_examples() {
        assert!((blockade(64.0, 1.0, 1.0).unwrap().radius - 2.0).abs() < 1e-15);
        let b = blockade(5000.0, 1.0, -7.0).unwrap();
        let at = blockade(5000.0, b.radius, -7.0).unwrap();
        assert!((at.shift - 7.0).abs() < 1e-12);
    }

    #[test]
    fn flip_flop_vanishes_without_v() {
        let p = vdw_pair(-900.0, 0.0, 3.0, 0.0).unwrap();
        assert_eq!(dressed_couplings(&p, -9.0, 0.2).unwrap().jxy, 0.0);
    }

    #[test]
    fn pole_is_reported() {
        // W₊₋ = −2Δ puts a zero into the J_z denominator
        let delta = -9.0;
        let p = PairCouplings { i: 2, j: 5, distance: 3.0, phi: 0.0, w_pp: 1.0, w_pm: 18.0, v_pm: 0.5, v_pp: C64::new(0.0, 0.0) };
        match dressed_couplings(&p, delta, 0.2) {
            Err(Error::Resonance { i: 2, j: 5, .. }) => {}
            other => panic!("expected resonance, got {other:?}"),
        }
    }

    #[test]
    fn ring_atom_limits() {
        assert_eq!(max_ring_atoms(2.4, 5.0).unwrap(), 12);
        assert_eq!(max_ring_atoms(2.0 * 3.0 * (PI / 6.0).sin(), 3.0).unwrap(), 6);
        assert!(max_ring_atoms(10.0, 5.0).is_err());
        assert!(max_ring_atoms(1e-9, 5.0).is_err());
    }

    #[test]
    fn stroboscopic_limits() {
        let (amp, phase) = stroboscopic_phase(2.0, 3.0, 1.5, 0.0, 1.0).unwrap();
        assert_eq!(phase, 0.0);
        assert!((amp - 2.0).abs() < 1e-15);
        let (_, phase) = stroboscopic_phase(2.0, 2.0, 0.0, 1.0, 1.0).unwrap();
        assert!((phase - 1.0).abs() < 1e-15);
    }
}
