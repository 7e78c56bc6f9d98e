//! Spectral form factors, energy filters and random-matrix baselines.

use std::collections::BTreeMap;
use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::spectra::Spectrum;
use crate::stats::Welford;
use crate::C64;

/// Default Thouless-time tolerance on |K/K_RMT − 1|.
pub const THOULESS_EPS: f64 = 0.3;
/// Default number of consecutive grid points that must agree.
pub const THOULESS_SUSTAIN: usize = 5;

/// Energy filter f(E). `None` fields are resolved from the spectrum at hand:
/// centers default to the middle of the spectrum, the Gaussian width to a
/// sixth of the bandwidth and the PEA base time to π/(2 max|E − δ|).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum FilterSpec {
    Gaussian {
        #[serde(default)]
        center: Option<f64>,
        #[serde(default)]
        width: Option<f64>,
    },
    Pea {
        #[serde(default)]
        center: Option<f64>,
        steps: u32,
        #[serde(default)]
        t0: Option<f64>,
    },
    Flat,
}

/// Product form of the phase-estimation filter,
/// `Π_{m<M} cos²(2^m t₀ x) = [sin(2^M t₀ x) / (2^M sin(t₀ x))]²`,
/// which stays exact at the removable singularities `t₀x = kπ`.
pub fn pea_filter(x: f64, steps: u32, t0: f64) -> f64 {
    let mut p = 1.0;
    let mut arg = t0 * x;
    for _ in 0..steps {
        let c = arg.cos();
        p *= c * c;
        arg *= 2.0;
    }
    p
}

/// Largest |E − δ| over the spectrum.
pub fn max_detuning(spectrum: &Spectrum, center: f64) -> f64 {
    spectrum.values().iter().fold(0.0f64, |a, e| a.max((e - center).abs()))
}

/// Base time that places the whole band inside one filter period.
pub fn auto_t0(spectrum: &Spectrum, center: f64) -> f64 {
    let x = max_detuning(spectrum, center);
    if x > 0.0 {
        std::f64::consts::FRAC_PI_2 / x
    } else {
        1.0
    }
}

/// Normalized weights f(E_ℓ), Σf = 1.
pub fn filter_values(spec: &FilterSpec, spectrum: &Spectrum) -> Result<Vec<f64>> {
    if spectrum.is_empty() {
        return Err(Error::Parameter("filter needs a nonempty spectrum".into()));
    }
    let raw: Vec<f64> = match spec {
        FilterSpec::Flat => vec![1.0; spectrum.len()],
        FilterSpec::Gaussian { center, width } => {
            let c = center.unwrap_or_else(|| spectrum.center());
            let w = width.unwrap_or_else(|| spectrum.width() / 6.0);
            if !(w > 0.0) {
                return Err(Error::Parameter(format!("Gaussian filter width must be positive, got {w}")));
            }
            spectrum.values().iter().map(|e| (-0.5 * ((e - c) / w).powi(2)).exp()).collect()
        }
        FilterSpec::Pea { center, steps, t0 } => {
            let c = center.unwrap_or_else(|| spectrum.center());
            let t0 = t0.unwrap_or_else(|| auto_t0(spectrum, c));
            if !(t0 > 0.0) {
                return Err(Error::Parameter(format!("PEA base time must be positive, got {t0}")));
            }
            spectrum.values().iter().map(|e| pea_filter(e - c, *steps, t0)).collect()
        }
    };
    normalize(raw)
}

/// Scales nonnegative weights to unit sum.
pub fn normalize(mut w: Vec<f64>) -> Result<Vec<f64>> {
    if w.iter().any(|x| !(x.is_finite() && *x >= 0.0)) {
        return Err(Error::Parameter("weights must be finite and nonnegative".into()));
    }
    let total: f64 = w.iter().sum();
    if !(total > 0.0) {
        return Err(Error::DegenerateFilter);
    }
    w.iter_mut().for_each(|x| *x /= total);
    Ok(w)
}

fn check_weights(spectrum: &Spectrum, weights: &[f64]) -> Result<()> {
    if weights.len() != spectrum.len() {
        return Err(Error::Incompatible(format!("{} weights for {} levels", weights.len(), spectrum.len())));
    }
    let total: f64 = weights.iter().sum();
    if (total - 1.0).abs() > 1e-12 || weights.iter().any(|w| *w < 0.0) {
        return Err(Error::Parameter(format!("weights must be nonnegative and sum to 1 (sum = {total})")));
    }
    Ok(())
}

/// `Σ_ℓ f_ℓ e^{−i rate_ℓ t}`, the filtered trace whose modulus squared is K.
pub fn filtered_trace(spectrum: &Spectrum, weights: &[f64], t: f64) -> C64 {
    weights
        .iter()
        .enumerate()
        .filter(|(_, f)| **f != 0.0)
        .map(|(l, f)| C64::from_polar(*f, -spectrum.phase_rate(l) * t))
        .sum()
}

/// Single-realization K(τ) = |Σ f e^{−iEτ}|² on `times`.
pub fn exact_sff(spectrum: &Spectrum, weights: &[f64], times: &[f64]) -> Result<SffCurve> {
    check_weights(spectrum, weights)?;
    let k: Vec<f64> = times.iter().map(|&t| filtered_trace(spectrum, weights, t).norm_sqr()).collect();
    let n = times.len();
    SffCurve::new(times.to_vec(), k, vec![0.0; n], vec![1; n], CurveMeta::default())
}

/// Floquet K(t) = |Σ f e^{−iλϑt}|² for t = 0..=t_max; `weights = None` means ρ_∞.
pub fn exact_sff_floquet(spectrum: &Spectrum, weights: Option<&[f64]>, t_max: u32) -> Result<SffCurve> {
    let flat;
    let w = match weights {
        Some(w) => w,
        None => {
            flat = vec![1.0 / spectrum.len() as f64; spectrum.len()];
            &flat
        }
    };
    exact_sff(spectrum, w, &integer_grid(0, t_max))
}

/// Plateau value Σ f².
pub fn k_infinity(weights: &[f64]) -> f64 {
    weights.iter().map(|f| f * f).sum()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RmtEnsemble {
    Goe,
    Gue,
    Coe,
    Cue,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum RmtParams {
    /// Gaussian ensembles: Heisenberg time and plateau.
    Gaussian { tau_h: f64, k_inf: f64 },
    /// Circular ensembles: Hilbert-space dimension.
    Circular { dim: usize },
}

fn goe_shape(s: f64) -> f64 {
    if s <= 1.0 {
        2.0 * s - s * (1.0 + 2.0 * s).ln()
    } else {
        2.0 - s * ((2.0 * s + 1.0) / (2.0 * s - 1.0)).ln()
    }
}

fn gue_shape(s: f64) -> f64 {
    s.min(1.0)
}

/// Baseline value at a single time.
pub fn rmt_value(ensemble: RmtEnsemble, params: RmtParams, t: f64) -> Result<f64> {
    let (tau_h, k_inf) = match (ensemble, params) {
        (RmtEnsemble::Goe | RmtEnsemble::Gue, RmtParams::Gaussian { tau_h, k_inf }) => {
            if !(tau_h > 0.0) || !(k_inf > 0.0 && k_inf <= 1.0) {
                return Err(Error::Parameter(format!("need tau_h > 0 and K_inf in (0, 1], got {tau_h}, {k_inf}")));
            }
            (tau_h, k_inf)
        }
        (RmtEnsemble::Coe | RmtEnsemble::Cue, RmtParams::Circular { dim }) => {
            if dim < 2 {
                return Err(Error::Parameter(format!("circular ensembles need dim >= 2, got {dim}")));
            }
            (dim as f64, 1.0 / dim as f64)
        }
        _ => return Err(Error::Incompatible(format!("{ensemble:?} does not take {params:?}"))),
    };
    let s = t.abs() / tau_h;
    let shape = match ensemble {
        RmtEnsemble::Goe | RmtEnsemble::Coe => goe_shape(s),
        RmtEnsemble::Gue | RmtEnsemble::Cue => gue_shape(s),
    };
    Ok(k_inf * shape)
}

/// Baseline curve on `times`.
pub fn rmt_baseline(ensemble: RmtEnsemble, params: RmtParams, times: &[f64]) -> Result<SffCurve> {
    let k = times.iter().map(|&t| rmt_value(ensemble, params, t)).collect::<Result<Vec<_>>>()?;
    let n = times.len();
    let meta = CurveMeta { label: format!("{ensemble:?}").to_lowercase(), ..CurveMeta::default() };
    SffCurve::new(times.to_vec(), k, vec![0.0; n], vec![0; n], meta)
}

/// Earliest grid time from which `|K/K_base − 1| < eps` holds on `sustain` consecutive points.
pub fn thouless_time(curve: &SffCurve, baseline: &SffCurve, eps: f64, sustain: usize) -> Result<Option<f64>> {
    if !(eps > 0.0) || sustain == 0 {
        return Err(Error::Parameter("Thouless criterion needs eps > 0 and sustain >= 1".into()));
    }
    if curve.times.len() != baseline.times.len()
        || curve
            .times
            .iter()
            .zip(&baseline.times)
            .any(|(a, b)| (a - b).abs() > 1e-12 * a.abs().max(b.abs()).max(1.0))
    {
        return Err(Error::Incompatible("curve and baseline are on different time grids".into()));
    }
    let agrees: Vec<bool> = curve
        .k
        .iter()
        .zip(&baseline.k)
        .map(|(&k, &b)| if b == 0.0 { k == 0.0 } else { (k / b - 1.0).abs() < eps })
        .collect();
    let n = agrees.len();
    if sustain > n {
        return Ok(None);
    }
    Ok((0..=n - sustain).find(|&i| agrees[i..i + sustain].iter().all(|&a| a)).map(|i| curve.times[i]))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Spacing {
    Log,
    Linear,
}

/// `points` times from `t_min` to `t_max` inclusive.
pub fn time_grid(spacing: Spacing, t_min: f64, t_max: f64, points: usize) -> Result<Vec<f64>> {
    if points < 2 || !(t_max > t_min) || !t_min.is_finite() || !t_max.is_finite() {
        return Err(Error::Parameter(format!(
            "time grid needs points >= 2 and t_min < t_max, got {points} points on [{t_min}, {t_max}]"
        )));
    }
    let last = (points - 1) as f64;
    Ok(match spacing {
        Spacing::Linear => (0..points).map(|i| t_min + (t_max - t_min) * i as f64 / last).collect(),
        Spacing::Log => {
            if !(t_min > 0.0) {
                return Err(Error::Parameter("log grid needs t_min > 0".into()));
            }
            let (a, b) = (t_min.ln(), t_max.ln());
            (0..points)
                .map(|i| match i {
                    0 => t_min,
                    _ if i == points - 1 => t_max,
                    _ => (a + (b - a) * i as f64 / last).exp(),
                })
                .collect()
        }
    })
}

/// Integer Floquet steps `from..=to`.
pub fn integer_grid(from: u32, to: u32) -> Vec<f64> {
    (from..=to).map(f64::from).collect()
}

/// Metadata carried alongside a curve into its JSON form.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CurveMeta {
    pub label: String,
    pub n_disorder: usize,
    pub shots: Option<u64>,
    pub reuse: Option<u64>,
    pub filter: Option<FilterSpec>,
    pub model_hash: Option<String>,
    pub thouless_eps: Option<f64>,
    pub thouless_sustain: Option<usize>,
    pub t_coh: Option<f64>,
    pub notes: BTreeMap<String, String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SffCurve {
    pub times: Vec<f64>,
    pub k: Vec<f64>,
    pub stderr: Vec<f64>,
    pub n_disorder: Vec<u64>,
    pub meta: CurveMeta,
}

#[derive(Debug, Serialize, Deserialize)]
struct CsvRow {
    time: f64,
    #[serde(rename = "K")]
    k: f64,
    stderr: f64,
    n_disorder: u64,
}

impl SffCurve {
    pub fn new(times: Vec<f64>, k: Vec<f64>, stderr: Vec<f64>, n_disorder: Vec<u64>, meta: CurveMeta) -> Result<Self> {
        let curve = Self { times, k, stderr, n_disorder, meta };
        curve.validate()?;
        Ok(curve)
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.times.len();
        if self.k.len() != n || self.stderr.len() != n || self.n_disorder.len() != n {
            return Err(Error::Incompatible("curve columns have different lengths".into()));
        }
        if self.times.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::Parameter("curve times must be strictly increasing".into()));
        }
        if self.times.iter().chain(&self.k).chain(&self.stderr).any(|x| !x.is_finite()) {
            return Err(Error::Numerical("curve contains non-finite values".into()));
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        for i in 0..self.len() {
            w.serialize(CsvRow { time: self.times[i], k: self.k[i], stderr: self.stderr[i], n_disorder: self.n_disorder[i] })
                .map_err(|e| Error::Serialization(e.to_string()))?;
        }
        w.flush()?;
        Ok(())
    }

    /// Reads the `time,K,stderr,n_disorder` table; metadata is left empty.
    pub fn read_csv<R: Read>(input: R) -> Result<Self> {
        let mut r = csv::Reader::from_reader(input);
        let headers = r.headers().map_err(|e| Error::Serialization(e.to_string()))?;
        if headers.iter().collect::<Vec<_>>() != ["time", "K", "stderr", "n_disorder"] {
            return Err(Error::Serialization(format!("unexpected curve header {headers:?}")));
        }
        let (mut times, mut k, mut stderr, mut nd) = (Vec::new(), Vec::new(), Vec::new(), Vec::new());
        for row in r.deserialize() {
            let row: CsvRow = row.map_err(|e| Error::Serialization(e.to_string()))?;
            times.push(row.time);
            k.push(row.k);
            stderr.push(row.stderr);
            nd.push(row.n_disorder);
        }
        Self::new(times, k, stderr, nd, CurveMeta::default())
    }

    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string_pretty(self).map_err(|e| Error::Serialization(e.to_string()))
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let c: Self = serde_json::from_str(s).map_err(|e| Error::Serialization(e.to_string()))?;
        c.validate()?;
        Ok(c)
    }
}

/// Pointwise streaming mean over disorder realizations.
#[derive(Debug, Clone)]
pub struct CurveAccumulator {
    times: Vec<f64>,
    points: Vec<Welford>,
}

impl CurveAccumulator {
    pub fn new(times: Vec<f64>) -> Self {
        let points = vec![Welford::default(); times.len()];
        Self { times, points }
    }

    pub fn push(&mut self, values: &[f64]) -> Result<()> {
        if values.len() != self.points.len() {
            return Err(Error::Incompatible(format!("{} values for {} grid points", values.len(), self.points.len())));
        }
        self.points.iter_mut().zip(values).for_each(|(w, &v)| w.push(v));
        Ok(())
    }

    pub fn merge(&mut self, other: &CurveAccumulator) -> Result<()> {
        if other.points.len() != self.points.len() {
            return Err(Error::Incompatible("accumulators on different grids".into()));
        }
        self.points.iter_mut().zip(&other.points).for_each(|(a, b)| a.merge(b));
        Ok(())
    }

    pub fn count(&self) -> u64 {
        self.points.first().map_or(0, |w| w.count())
    }

    /// Mean curve with standard errors (zero when fewer than two samples).
    pub fn finish(&self, meta: CurveMeta) -> Result<SffCurve> {
        SffCurve::new(
            self.times.clone(),
            self.points.iter().map(|w| w.mean()).collect(),
            self.points.iter().map(|w| w.std_err()).collect(),
            self.points.iter().map(|w| w.count()).collect(),
            meta,
        )
    }
}
