//! Shot-level Monte Carlo of the clock-qubit protocol.
//!
//! Every object the protocol touches is diagonal in the energy eigenbasis, so
//! a prepared copy is simulated as a sampled eigenstate index followed by
//! independent Bernoulli readouts conditioned on that level. No state vectors
//! are propagated.

use std::sync::atomic::{AtomicBool, Ordering};

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng;
use crate::sff::{self, CurveAccumulator, CurveMeta, FilterSpec, SffCurve};
use crate::spectra::{mean_level_spacing, Spectrum, SpectrumKind, DEFAULT_WINDOW};
use crate::stats::Welford;
use crate::C64;

/// Success probabilities below this are treated as a filter that missed the band.
pub const MIN_P_MC: f64 = 1e-300;

/// Diagonal density matrix in the eigenbasis, normalized.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiagonalEnsemble {
    weights: Vec<f64>,
}

impl DiagonalEnsemble {
    pub fn new(weights: Vec<f64>) -> Result<Self> {
        Ok(Self { weights: sff::normalize(weights)? })
    }

    /// ρ_∞ = 𝟙/𝒟.
    pub fn infinite_temperature(dim: usize) -> Self {
        Self { weights: vec![1.0 / dim as f64; dim] }
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn mean_energy(&self, spectrum: &Spectrum) -> f64 {
        self.weights.iter().zip(spectrum.values()).map(|(w, e)| w * e).sum()
    }

    fn is_flat(&self) -> bool {
        self.weights.iter().all(|&w| w == self.weights[0])
    }
}

/// Preparation settings; `None` resolves per spectrum (center of the band,
/// and t₀ = π/(2 max|E − δ|)).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PrepConfig {
    pub steps: u32,
    #[serde(default)]
    pub t0: Option<f64>,
    #[serde(default)]
    pub center: Option<f64>,
}

impl PrepConfig {
    pub fn new(steps: u32) -> Self {
        Self { steps, t0: None, center: None }
    }

    pub fn resolve(&self, spectrum: &Spectrum) -> Result<ResolvedPrep> {
        if self.steps > 40 {
            return Err(Error::Parameter(format!("{} filtering steps is beyond double precision", self.steps)));
        }
        let center = self.center.unwrap_or_else(|| spectrum.center());
        let limit = sff::auto_t0(spectrum, center);
        let t0 = match self.t0 {
            None => limit,
            Some(t0) if t0 > 0.0 && t0 <= limit * (1.0 + 1e-12) => t0,
            Some(t0) => {
                return Err(Error::Parameter(format!(
                    "t0 = {t0} must lie in (0, {limit}] so that the band sits inside one filter period"
                )))
            }
        };
        Ok(ResolvedPrep { steps: self.steps, t0, center })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ResolvedPrep {
    pub steps: u32,
    pub t0: f64,
    pub center: f64,
}

impl ResolvedPrep {
    /// Clock-qubit interaction time of filtering step `m`.
    pub fn interaction_time(&self, m: u32) -> f64 {
        self.t0 * 2f64.powi(m as i32 + 1)
    }

    /// Probability that all `steps` readouts give "+" for energy `e`.
    pub fn filter(&self, e: f64) -> f64 {
        sff::pea_filter(e - self.center, self.steps, self.t0)
    }

    pub fn filter_spec(&self) -> FilterSpec {
        FilterSpec::Pea { center: Some(self.center), steps: self.steps, t0: Some(self.t0) }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Outcome {
    Plus,
    Minus,
}

/// Readout probability after interaction time `t`: p(+) = cos²((E−δ)t/2).
pub fn readout_probability(e: f64, t: f64, delta: f64, outcome: Outcome) -> f64 {
    let half = 0.5 * (e - delta) * t;
    match outcome {
        Outcome::Plus => half.cos().powi(2),
        Outcome::Minus => half.sin().powi(2),
    }
}

/// Postselected ensemble ρ_mc and its success probability p_mc.
pub fn prepare_mc(spectrum: &Spectrum, prep: &ResolvedPrep, rho_in: &DiagonalEnsemble) -> Result<(DiagonalEnsemble, f64)> {
    if rho_in.len() != spectrum.len() {
        return Err(Error::Incompatible(format!("ensemble has {} levels, spectrum {}", rho_in.len(), spectrum.len())));
    }
    let raw: Vec<f64> = spectrum.values().iter().zip(rho_in.weights()).map(|(&e, &w)| prep.filter(e) * w).collect();
    let p_mc: f64 = raw.iter().sum();
    if !(p_mc >= MIN_P_MC) {
        return Err(Error::FilterMissedSpectrum { p_mc });
    }
    Ok((DiagonalEnsemble { weights: raw.into_iter().map(|p| p / p_mc).collect() }, p_mc))
}

/// Outcome-averaged weights after one readout: p(+)·w + p(−)·w.
pub fn outcome_averaged_update(spectrum: &Spectrum, ensemble: &DiagonalEnsemble, t: f64, delta: f64) -> Vec<f64> {
    spectrum
        .values()
        .iter()
        .zip(ensemble.weights())
        .map(|(&e, &w)| {
            readout_probability(e, t, delta, Outcome::Plus) * w + readout_probability(e, t, delta, Outcome::Minus) * w
        })
        .collect()
}

/// Draws eigenstate indices from a diagonal ensemble.
#[derive(Debug, Clone)]
pub enum LevelSampler {
    Uniform(usize),
    Weighted(WeightedIndex<f64>),
}

impl LevelSampler {
    pub fn new(ensemble: &DiagonalEnsemble) -> Result<Self> {
        if ensemble.is_empty() {
            return Err(Error::Parameter("empty ensemble".into()));
        }
        if ensemble.is_flat() {
            return Ok(LevelSampler::Uniform(ensemble.len()));
        }
        WeightedIndex::new(ensemble.weights())
            .map(LevelSampler::Weighted)
            .map_err(|e| Error::Parameter(format!("cannot sample ensemble: {e}")))
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        match self {
            LevelSampler::Uniform(n) => rng.random_range(0..*n),
            LevelSampler::Weighted(w) => w.sample(rng),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PrepTrial {
    pub success: bool,
    pub level: usize,
}

/// One preparation attempt: ℓ ~ ρ_in, then `steps` sequential readouts, stopping at the first "−".
pub fn sample_prep_trajectory<R: Rng + ?Sized>(
    spectrum: &Spectrum,
    prep: &ResolvedPrep,
    rho_in: &LevelSampler,
    rng: &mut R,
) -> PrepTrial {
    let level = rho_in.sample(rng);
    let e = spectrum.values()[level];
    for m in 0..prep.steps {
        let p = readout_probability(e, prep.interaction_time(m), prep.center, Outcome::Plus);
        if !rng.random_bool(p.clamp(0.0, 1.0)) {
            return PrepTrial { success: false, level };
        }
    }
    PrepTrial { success: true, level }
}

/// Repeats trajectories until one succeeds; returns the level and the attempts used.
pub fn prepare_copy<R: Rng + ?Sized>(
    spectrum: &Spectrum,
    prep: &ResolvedPrep,
    rho_in: &LevelSampler,
    rng: &mut R,
) -> (usize, u64) {
    let mut attempts = 0;
    loop {
        attempts += 1;
        let trial = sample_prep_trajectory(spectrum, prep, rho_in, rng);
        if trial.success {
            return (trial.level, attempts);
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Quadrature {
    X,
    Y,
}

impl Quadrature {
    fn index(self) -> u64 {
        match self {
            Quadrature::X => 0,
            Quadrature::Y => 1,
        }
    }
}

/// p(σ = +1) for one shot on eigenstate `level`, phase (rate − δ)·t.
fn shot_probability(spectrum: &Spectrum, level: usize, delta: f64, t: f64, q: Quadrature) -> f64 {
    let phase = (spectrum.phase_rate(level) - delta) * t;
    let s = match q {
        Quadrature::X => phase.cos(),
        Quadrature::Y => phase.sin(),
    };
    (0.5 * (1.0 + s)).clamp(0.0, 1.0)
}

fn mean_of_shots<R: Rng + ?Sized>(p: f64, n: u64, rng: &mut R) -> f64 {
    let plus = (0..n).filter(|_| rng.random_bool(p)).count() as f64;
    (2.0 * plus - n as f64) / n as f64
}

/// `n` shots per quadrature at time `t`, a fresh level from `ensemble` per shot.
pub fn measure_sff_point<R: Rng + ?Sized>(
    spectrum: &Spectrum,
    ensemble: &LevelSampler,
    delta: f64,
    t: f64,
    n: u64,
    rng: &mut R,
) -> Result<(f64, f64)> {
    if n == 0 {
        return Err(Error::Parameter("need at least one shot".into()));
    }
    let mut quad = |q| {
        let mut sum = 0i64;
        for _ in 0..n {
            let level = ensemble.sample(rng);
            sum += if rng.random_bool(shot_probability(spectrum, level, delta, t, q)) { 1 } else { -1 };
        }
        sum as f64 / n as f64
    };
    let mx = quad(Quadrature::X);
    let my = quad(Quadrature::Y);
    Ok((mx, my))
}

/// All shots at all times from a single prepared copy in eigenstate `level`.
pub fn run_with_recycling<R: Rng + ?Sized>(
    spectrum: &Spectrum,
    level: usize,
    delta: f64,
    times: &[f64],
    n: u64,
    rng: &mut R,
) -> Result<Vec<(f64, f64)>> {
    if n == 0 {
        return Err(Error::Parameter("need at least one shot".into()));
    }
    if level >= spectrum.len() {
        return Err(Error::Parameter(format!("level {level} out of range")));
    }
    Ok(times
        .iter()
        .map(|&t| {
            let mx = mean_of_shots(shot_probability(spectrum, level, delta, t, Quadrature::X), n, rng);
            let my = mean_of_shots(shot_probability(spectrum, level, delta, t, Quadrature::Y), n, rng);
            (mx, my)
        })
        .collect())
}

/// Bias-corrected K̂ = N/(N−1)·(m_x² + m_y² − 2/N).
pub fn estimate_k(mx: f64, my: f64, n: u64) -> Result<f64> {
    if n < 2 {
        return Err(Error::Parameter(format!("estimator needs N >= 2 shots, got {n}")));
    }
    let n = n as f64;
    Ok(n / (n - 1.0) * (mx * mx + my * my - 2.0 / n))
}

/// Leading-order estimator variance 4K/N + 4/N².
pub fn variance_model(k: f64, n: u64) -> f64 {
    let n = n as f64;
    4.0 * k / n + 4.0 / (n * n)
}

pub fn snr(k: f64, n: u64) -> f64 {
    k / variance_model(k, n).sqrt()
}

/// Single-realization threshold 2(1+√2)/N where the SNR reaches one.
pub fn threshold_single(n: u64) -> f64 {
    2.0 * (1.0 + std::f64::consts::SQRT_2) / n as f64
}

/// Threshold after averaging over `n_d` realizations.
pub fn threshold(n: u64, n_d: usize) -> f64 {
    threshold_single(n) / (n_d as f64).sqrt()
}

/// τ̂_H = 2^{M+1} t₀ 𝒟 p_mc.
pub fn estimate_heisenberg(p_mc: f64, steps: u32, t0: f64, dim: usize) -> f64 {
    2f64.powi(steps as i32 + 1) * t0 * dim as f64 * p_mc
}

/// K̂_∞ = (2/3)/(𝒟 p_mc).
pub fn estimate_plateau(p_mc: f64, dim: usize) -> f64 {
    (2.0 / 3.0) / (dim as f64 * p_mc)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ShotPlan {
    /// Shots per quadrature per time point per realization.
    pub shots: u64,
    pub disorders: usize,
    pub reuse: u64,
    pub master_seed: u64,
}

impl ShotPlan {
    pub fn validate(&self) -> Result<()> {
        if self.shots < 2 || self.disorders == 0 || self.reuse == 0 {
            return Err(Error::Parameter(format!(
                "shot plan needs shots >= 2, disorders >= 1, reuse >= 1 (got {}, {}, {})",
                self.shots, self.disorders, self.reuse
            )));
        }
        Ok(())
    }

    pub fn disorder_seed(&self, realization: usize) -> u64 {
        rng::derive_seed(self.master_seed, rng::DISORDER, &[realization as u64])
    }

    pub fn shot_stream(&self, realization: usize, block: u64) -> ChaCha8Rng {
        rng::stream(self.master_seed, rng::SHOTS, &[realization as u64, block])
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FloquetSampling {
    /// ℓ uniform over the quasienergy eigenbasis.
    Eigenbasis,
    /// Random computational product states (needs eigenvectors, no recycling).
    ProductState,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "lowercase")]
pub enum ExperimentMode {
    Hamiltonian { prep: PrepConfig },
    Floquet { sampling: FloquetSampling },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentSpec {
    pub mode: ExperimentMode,
    pub plan: ShotPlan,
    pub times: Vec<f64>,
    /// Coherence budget per prepared copy (total evolution time), annotation only.
    pub t_coh: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PointRecord {
    pub mx: f64,
    pub my: f64,
    pub k_hat: f64,
    pub k_exact: f64,
    pub var_model: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeasurementRecord {
    pub realization: usize,
    pub disorder_seed: u64,
    pub dim: usize,
    pub p_mc: f64,
    pub p_mc_observed: f64,
    pub t0: Option<f64>,
    pub center: Option<f64>,
    pub k_inf: f64,
    /// 2π/δ_E from the central level spacing; 𝒟 periods for Floquet spectra.
    pub tau_h: Option<f64>,
    pub tau_h_hat: Option<f64>,
    pub k_inf_hat: Option<f64>,
    pub prep_attempts: u64,
    pub copies: u64,
    pub budget_overruns: u64,
    pub points: Vec<PointRecord>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RealizationFailure {
    pub realization: usize,
    pub disorder_seed: u64,
    pub message: String,
    pub numerical: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunAccounting {
    pub realizations_ok: usize,
    pub prep_attempts: u64,
    pub copies: u64,
    pub effective_reuse: u64,
    pub mean_p_mc: f64,
    /// N_d·N/(p_mc·N_reuse) with the mean p_mc.
    pub n_run_formula: f64,
    /// Preparation attempts per time point per quadrature actually consumed.
    pub n_run_observed: f64,
    pub budget_overruns: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Estimates {
    pub tau_h_hat: Option<f64>,
    pub k_inf_hat: Option<f64>,
    pub tau_h_exact: Option<f64>,
    pub k_inf_exact: f64,
    pub k_star: f64,
    pub k_star_single: f64,
}

#[derive(Debug, Clone)]
pub struct ExperimentResult {
    pub measured: SffCurve,
    pub exact: SffCurve,
    pub records: Vec<MeasurementRecord>,
    pub failures: Vec<RealizationFailure>,
    pub cancelled: bool,
    pub accounting: RunAccounting,
    pub estimates: Estimates,
}

enum CopySource<'a> {
    Levels { sampler: LevelSampler, prep: Option<&'a ResolvedPrep> },
    Product { amplitudes: Vec<Vec<C64>> },
}

struct QuadratureTally {
    means: Vec<f64>,
    attempts: u64,
    copies: u64,
    overruns: u64,
}

/// `a_s(t) = Σ_ℓ |V_sℓ|² e^{−iλϑt}` for every computational state s.
fn product_amplitudes(spectrum: &Spectrum, times: &[f64]) -> Result<Vec<Vec<C64>>> {
    let v = spectrum
        .vectors()
        .ok_or_else(|| Error::Parameter("product-state sampling needs Floquet eigenvectors".into()))?;
    let d = spectrum.len();
    let phases: Vec<Vec<C64>> = times
        .iter()
        .map(|&t| (0..d).map(|l| C64::from_polar(1.0, -spectrum.phase_rate(l) * t)).collect())
        .collect();
    Ok((0..v.nrows())
        .map(|s| {
            let w: Vec<f64> = (0..d).map(|l| v[(s, l)].norm_sqr()).collect();
            phases.iter().map(|ph| w.iter().zip(ph).map(|(w, p)| p * *w).sum()).collect()
        })
        .collect())
}

/// Runs one quadrature: every copy serves `reuse` consecutive (shot, time) slots.
#[allow(clippy::too_many_arguments)]
fn simulate_quadrature<R: Rng + ?Sized>(
    spectrum: &Spectrum,
    source: &CopySource,
    delta: f64,
    times: &[f64],
    shots: u64,
    reuse: u64,
    q: Quadrature,
    t_coh: Option<f64>,
    rng: &mut R,
) -> QuadratureTally {
    let n_t = times.len() as u64;
    let total = shots * n_t;
    let mut sums = vec![0i64; times.len()];
    let (mut attempts, mut copies, mut overruns) = (0u64, 0u64, 0u64);
    let mut slot = 0u64;
    while slot < total {
        let end = (slot + reuse).min(total);
        copies += 1;
        let mut elapsed = 0.0;
        match source {
            CopySource::Levels { sampler, prep } => {
                let level = match prep {
                    Some(prep) => {
                        let (level, a) = prepare_copy(spectrum, prep, sampler, rng);
                        attempts += a;
                        level
                    }
                    None => {
                        attempts += 1;
                        sampler.sample(rng)
                    }
                };
                for s in slot..end {
                    let k = (s % n_t) as usize;
                    elapsed += times[k];
                    let p = shot_probability(spectrum, level, delta, times[k], q);
                    sums[k] += if rng.random_bool(p) { 1 } else { -1 };
                }
            }
            CopySource::Product { amplitudes } => {
                attempts += 1;
                let state = rng.random_range(0..amplitudes.len());
                for s in slot..end {
                    let k = (s % n_t) as usize;
                    elapsed += times[k];
                    let a = amplitudes[state][k];
                    let v = match q {
                        Quadrature::X => a.re,
                        Quadrature::Y => -a.im,
                    };
                    sums[k] += if rng.random_bool((0.5 * (1.0 + v)).clamp(0.0, 1.0)) { 1 } else { -1 };
                }
            }
        }
        if t_coh.is_some_and(|tc| elapsed > tc) {
            overruns += 1;
        }
        slot = end;
    }
    QuadratureTally {
        means: sums.into_iter().map(|s| s as f64 / shots as f64).collect(),
        attempts,
        copies,
        overruns,
    }
}

fn run_realization(spec: &ExperimentSpec, index: usize, seed: u64, spectrum: &Spectrum) -> Result<MeasurementRecord> {
    let plan = &spec.plan;
    let times = &spec.times;
    let dim = spectrum.len();
    let rho_inf = DiagonalEnsemble::infinite_temperature(dim);

    let (weights, p_mc, prep, delta, mut reuse, source) = match spec.mode {
        ExperimentMode::Hamiltonian { prep } => {
            if !matches!(spectrum.kind(), SpectrumKind::Hamiltonian) {
                return Err(Error::Incompatible("Hamiltonian mode needs an energy spectrum".into()));
            }
            let prep = prep.resolve(spectrum)?;
            let (mc, p_mc) = prepare_mc(spectrum, &prep, &rho_inf)?;
            (mc.weights, p_mc, Some(prep), prep.center, plan.reuse, None)
        }
        ExperimentMode::Floquet { sampling } => {
            if !matches!(spectrum.kind(), SpectrumKind::Floquet { .. }) {
                return Err(Error::Incompatible("Floquet mode needs a quasienergy spectrum".into()));
            }
            match sampling {
                FloquetSampling::Eigenbasis => (rho_inf.weights, 1.0, None, 0.0, plan.reuse, None),
                FloquetSampling::ProductState => {
                    let amplitudes = product_amplitudes(spectrum, times)?;
                    (rho_inf.weights, 1.0, None, 0.0, 1, Some(CopySource::Product { amplitudes }))
                }
            }
        }
    };
    reuse = reuse.min(times.len() as u64).max(1);
    let source = match source {
        Some(s) => s,
        None => CopySource::Levels { sampler: LevelSampler::new(&DiagonalEnsemble::infinite_temperature(dim))?, prep: prep.as_ref() },
    };

    let run_quad = |q: Quadrature| {
        let mut rng = plan.shot_stream(index, q.index());
        simulate_quadrature(spectrum, &source, delta, times, plan.shots, reuse, q, spec.t_coh, &mut rng)
    };
    let (x, y) = (run_quad(Quadrature::X), run_quad(Quadrature::Y));

    let mut points = Vec::with_capacity(times.len());
    for (k, &t) in times.iter().enumerate() {
        let k_exact = sff::filtered_trace(spectrum, &weights, t).norm_sqr();
        points.push(PointRecord {
            mx: x.means[k],
            my: y.means[k],
            k_hat: estimate_k(x.means[k], y.means[k], plan.shots)?,
            k_exact,
            var_model: variance_model(k_exact, plan.shots),
        });
    }
    let attempts = x.attempts + y.attempts;
    let copies = x.copies + y.copies;
    let p_mc_observed = copies as f64 / attempts as f64;
    Ok(MeasurementRecord {
        realization: index,
        disorder_seed: seed,
        dim,
        p_mc,
        p_mc_observed,
        t0: prep.map(|p| p.t0),
        center: prep.map(|p| p.center),
        k_inf: sff::k_infinity(&weights),
        tau_h: match spectrum.kind() {
            SpectrumKind::Hamiltonian => mean_level_spacing(spectrum, DEFAULT_WINDOW).ok().map(|s| s.tau_h),
            SpectrumKind::Floquet { .. } => Some(dim as f64),
        },
        tau_h_hat: prep.map(|p| estimate_heisenberg(p_mc_observed, p.steps, p.t0, dim)),
        k_inf_hat: prep.map(|_| estimate_plateau(p_mc_observed, dim)),
        prep_attempts: attempts,
        copies,
        budget_overruns: x.overruns + y.overruns,
        points,
    })
}

/// Full protocol over a disorder sweep.
///
/// `realize(i, seed)` builds the spectrum of realization `i`. Realizations
/// run in parallel but are folded in index order, so the output does not
/// depend on the number of workers. Failed realizations are listed in the
/// result; `cancel` stops scheduling new realizations.
pub fn run_experiment<F>(spec: &ExperimentSpec, realize: F, cancel: Option<&AtomicBool>) -> Result<ExperimentResult>
where
    F: Fn(usize, u64) -> Result<Spectrum> + Sync,
{
    spec.plan.validate()?;
    if spec.times.is_empty() || spec.times.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(Error::Parameter("time grid must be nonempty and strictly increasing".into()));
    }
    let plan = spec.plan;
    let outcomes: Vec<Option<std::result::Result<MeasurementRecord, RealizationFailure>>> = (0..plan.disorders)
        .into_par_iter()
        .map(|i| {
            if cancel.is_some_and(|c| c.load(Ordering::Relaxed)) {
                return None;
            }
            let seed = plan.disorder_seed(i);
            let result = realize(i, seed).and_then(|s| run_realization(spec, i, seed, &s));
            Some(result.map_err(|e| RealizationFailure {
                realization: i,
                disorder_seed: seed,
                numerical: e.is_numerical(),
                message: e.to_string(),
            }))
        })
        .collect();
    let cancelled = outcomes.iter().any(Option::is_none);

    let mut measured = CurveAccumulator::new(spec.times.clone());
    let mut exact = CurveAccumulator::new(spec.times.clone());
    let (mut p_mc, mut tau_h, mut k_inf_hat, mut k_inf) = (Welford::new(), Welford::new(), Welford::new(), Welford::new());
    let mut tau_h_exact = Welford::new();
    let mut records = Vec::new();
    let mut failures = Vec::new();
    for outcome in outcomes.into_iter().flatten() {
        match outcome {
            Ok(r) => {
                measured.push(&r.points.iter().map(|p| p.k_hat).collect::<Vec<_>>())?;
                exact.push(&r.points.iter().map(|p| p.k_exact).collect::<Vec<_>>())?;
                p_mc.push(r.p_mc);
                k_inf.push(r.k_inf);
                if let Some(t) = r.tau_h {
                    tau_h_exact.push(t);
                }
                if let Some(t) = r.tau_h_hat {
                    tau_h.push(t);
                }
                if let Some(k) = r.k_inf_hat {
                    k_inf_hat.push(k);
                }
                records.push(r);
            }
            Err(f) => failures.push(f),
        }
    }

    let n_ok = records.len();
    let n_t = spec.times.len() as f64;
    let effective_reuse = match spec.mode {
        ExperimentMode::Floquet { sampling: FloquetSampling::ProductState } => 1,
        _ => plan.reuse.min(spec.times.len() as u64),
    };
    let prep_attempts: u64 = records.iter().map(|r| r.prep_attempts).sum();
    let copies: u64 = records.iter().map(|r| r.copies).sum();
    let mean_p_mc = if n_ok > 0 { p_mc.mean() } else { f64::NAN };
    let accounting = RunAccounting {
        realizations_ok: n_ok,
        prep_attempts,
        copies,
        effective_reuse,
        mean_p_mc,
        n_run_formula: n_ok as f64 * plan.shots as f64 / (mean_p_mc * effective_reuse as f64),
        n_run_observed: prep_attempts as f64 / (2.0 * n_t),
        budget_overruns: records.iter().map(|r| r.budget_overruns).sum(),
    };
    let estimates = Estimates {
        tau_h_hat: (tau_h.count() > 0).then(|| tau_h.mean()),
        k_inf_hat: (k_inf_hat.count() > 0).then(|| k_inf_hat.mean()),
        tau_h_exact: (tau_h_exact.count() > 0).then(|| tau_h_exact.mean()),
        k_inf_exact: k_inf.mean(),
        k_star: threshold(plan.shots, n_ok.max(1)),
        k_star_single: threshold_single(plan.shots),
    };
    let filter = match spec.mode {
        ExperimentMode::Hamiltonian { prep } => Some(FilterSpec::Pea { center: prep.center, steps: prep.steps, t0: prep.t0 }),
        ExperimentMode::Floquet { .. } => Some(FilterSpec::Flat),
    };
    let meta = CurveMeta {
        label: "measured".into(),
        n_disorder: n_ok,
        shots: Some(plan.shots),
        reuse: Some(effective_reuse),
        filter,
        t_coh: spec.t_coh,
        ..CurveMeta::default()
    };
    Ok(ExperimentResult {
        measured: measured.finish(meta.clone())?,
        exact: exact.finish(CurveMeta { label: "exact".into(), shots: None, reuse: None, ..meta })?,
        records,
        failures,
        cancelled,
        accounting,
        estimates,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toy() -> Spectrum {
        Spectrum::from_levels(vec![0.0, 1.0, 2.3]).unwrap()
    }

    #[test]
    fn readout_identities() {
        assert_eq!(readout_probability(0.7, 3.0, 0.7, Outcome::Plus), 1.0);
        assert!(readout_probability(std::f64::consts::PI, 1.0, 0.0, Outcome::Plus) < 1e-30);
        let p = readout_probability(1.3, 0.9, -0.4, Outcome::Plus) + readout_probability(1.3, 0.9, -0.4, Outcome::Minus);
        assert!((p - 1.0).abs() < 1e-15);
    }

    #[test]
    fn readout_schedule_reproduces_filter() {
        let prep = ResolvedPrep { steps: 5, t0: 0.11, center: 0.4 };
        for &e in &[0.4, -2.0, 1.7, 3.3] {
            let chain: f64 = (0..prep.steps)
                .map(|m| readout_probability(e, prep.interaction_time(m), prep.center, Outcome::Plus))
                .product();
            assert!((chain - prep.filter(e)).abs() < 1e-14);
        }
    }

    #[test]
    fn zero_steps_keep_input() {
        let s = toy();
        let prep = PrepConfig::new(0).resolve(&s).unwrap();
        let rho = DiagonalEnsemble::new(vec![0.2, 0.5, 0.3]).unwrap();
        let (mc, p) = prepare_mc(&s, &prep, &rho).unwrap();
        assert_eq!(p, 1.0);
        assert_eq!(mc, rho);
    }

    #[test]
    fn single_level_on_center() {
        let s = Spectrum::from_levels(vec![1.25]).unwrap();
        let prep = PrepConfig { steps: 7, t0: None, center: Some(1.25) }.resolve(&s).unwrap();
        let (_, p) = prepare_mc(&s, &prep, &DiagonalEnsemble::infinite_temperature(1)).unwrap();
        assert_eq!(p, 1.0);
    }

    #[test]
    fn t0_above_limit_rejected() {
        let s = toy();
        assert!(PrepConfig { steps: 3, t0: Some(10.0), center: None }.resolve(&s).is_err());
    }

    #[test]
    fn estimator_arithmetic() {
        assert!((estimate_k(0.0, 0.0, 100).unwrap() + 2.0 / 99.0).abs() < 1e-15);
        assert!(estimate_k(1.0, 1.0, 1).is_err());
        let k1 = threshold_single(1000);
        assert!((snr(k1, 1000) - 1.0).abs() < 1e-12);
        assert!((threshold(10_000, 100) - 4.828427e-5).abs() < 1e-10);
    }

    #[test]
    fn shots_on_fixed_phase() {
        let s = Spectrum::from_levels(vec![0.0]).unwrap();
        let mut rng = rng::from_seed(1);
        let r = run_with_recycling(&s, 0, 0.0, &[0.0, 5.0], 50, &mut rng).unwrap();
        assert_eq!(r[0].0, 1.0);
        assert_eq!(r[1].0, 1.0);
    }

    #[test]
    fn reuse_one_matches_fresh_sampling() {
        let s = toy();
        let plan = ShotPlan { shots: 20, disorders: 1, reuse: 1, master_seed: 4 };
        let sampler = LevelSampler::new(&DiagonalEnsemble::infinite_temperature(3)).unwrap();
        let source = CopySource::Levels { sampler: sampler.clone(), prep: None };
        let times = [0.5];
        let mut a = plan.shot_stream(0, 0);
        let tally = simulate_quadrature(&s, &source, 0.0, &times, 20, 1, Quadrature::X, None, &mut a);
        let mut b = plan.shot_stream(0, 0);
        let mut sum = 0i64;
        for _ in 0..20 {
            let l = sampler.sample(&mut b);
            sum += if b.random_bool(shot_probability(&s, l, 0.0, 0.5, Quadrature::X)) { 1 } else { -1 };
        }
        assert_eq!(tally.means[0], sum as f64 / 20.0);
    }
}
