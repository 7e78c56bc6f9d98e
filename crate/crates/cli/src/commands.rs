//! The six subcommands. Each one writes its files plus `manifest.json` into the output directory.

use std::path::PathBuf;
use std::sync::atomic::{AtomicBool, Ordering};
use std::time::Instant;

use clap::ValueEnum;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sff_core::models::{
    build_floquet_halves, build_heisenberg, build_ising_layer, sample_disorder, sample_fields, sector_basis, Basis, FieldAxes, Pauli,
    SpinModelSpec,
};
use sff_core::protocol::{
    run_experiment, threshold, threshold_single, ExperimentMode, ExperimentResult, ExperimentSpec, FloquetSampling, RealizationFailure,
};
use sff_core::rydberg::{
    build_ring_model, decoherence_budget, implied_h_range, max_ring_atoms, spectral_range, Branch, DecoherenceBudget, RingModel,
};
use sff_core::sff::{
    exact_sff, filter_values, integer_grid, k_infinity, rmt_baseline, thouless_time, CurveAccumulator, CurveMeta, FilterSpec, RmtEnsemble,
    RmtParams, SffCurve, THOULESS_EPS, THOULESS_SUSTAIN,
};
use sff_core::spectra::{eig_hermitian, floquet_operator, mean_level_spacing, quasienergies, Spectrum, DEFAULT_WINDOW};
use sff_core::stats::Welford;

use crate::config::{ModelKind, ResolvedModel, RunConfig};
use crate::error::{CliError, CliResult};
use crate::manifest::{Residuals, RunManifest, RunSummary, OutputWriter, TIMING_FILE};

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Command {
    SffExact,
    SffMeasure,
    Floquet,
    Rmt,
    Rydberg,
    Budget,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::SffExact => "sff-exact",
            Command::SffMeasure => "sff-measure",
            Command::Floquet => "floquet",
            Command::Rmt => "rmt",
            Command::Rydberg => "rydberg",
            Command::Budget => "budget",
        }
    }
}

pub struct RunOptions<'a> {
    pub out_dir: PathBuf,
    /// Worker threads; `None` uses the available parallelism.
    pub workers: Option<usize>,
    pub seed: Option<u64>,
    pub cancel: Option<&'a AtomicBool>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Timing {
    pub wall_seconds: f64,
    pub workers: usize,
}

pub fn log(msg: &str) {
    eprintln!("sff-lab: {msg}");
}

/// Applies the seed override, runs `command` on a pool of `workers` threads and records wall time.
pub fn execute(command: Command, mut config: RunConfig, opts: &RunOptions) -> CliResult<RunManifest> {
    if let Some(seed) = opts.seed {
        match config.plan.as_mut() {
            Some(plan) => plan.master_seed = seed,
            None => log("--seed ignored: this command has no [plan] section"),
        }
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(opts.workers.unwrap_or(0))
        .build()
        .map_err(|e| CliError::Config(format!("worker pool: {e}")))?;
    let start = Instant::now();
    let mut out = OutputWriter::new(&opts.out_dir)?;
    let result = pool.install(|| match command {
        Command::SffExact => sff_exact(&config, opts, &mut out),
        Command::SffMeasure => sff_measure(&config, opts, &mut out),
        Command::Floquet => floquet(&config, opts, &mut out),
        Command::Rmt => rmt(&config, &mut out),
        Command::Rydberg => rydberg(&config, &mut out),
        Command::Budget => budget(&config, &mut out),
    });
    let timing = Timing { wall_seconds: start.elapsed().as_secs_f64(), workers: pool.current_num_threads() };
    let text = serde_json::to_string_pretty(&timing).map_err(|e| CliError::Io(e.to_string()))?;
    std::fs::write(out.dir().join(TIMING_FILE), text)?;
    result
}

fn cancelled(opts: &RunOptions) -> bool {
    opts.cancel.is_some_and(|c| c.load(Ordering::Relaxed))
}

fn tag(name: &str, value: f64) -> String {
    format!("{name}{value}")
}

/// Eigenvalues of one disorder realization of the Heisenberg chain.
pub fn heisenberg_spectrum(model: &ResolvedModel, w: f64, seed: u64) -> sff_core::Result<Spectrum> {
    let spec = SpinModelSpec::new(model.sites, model.delta, model.j2, model.delta2, w)?;
    let dis = sample_disorder(&spec, model.law, seed);
    let basis = if model.full_basis { Basis::full(model.sites)? } else { Basis::Sector(sector_basis(model.sites, model.sz)?) };
    eig_hermitian(&build_heisenberg(&spec, &dis, &basis, None)?, false)
}

/// Quasienergies of one realization of a Floquet model with period `theta`.
pub fn floquet_spectrum(model: &ResolvedModel, scale: f64, theta: f64, seed: u64, vectors: bool) -> sff_core::Result<Spectrum> {
    let l = model.sites;
    let dis = sample_fields(l, model.law, scale, FieldAxes::Xyz, seed);
    let (hx, hy) = (dis.fields_x.as_deref().unwrap_or_default(), dis.fields_y.as_deref().unwrap_or_default());
    let u = match model.kind {
        ModelKind::FloquetHeisenberg => {
            let (h1, h2) = build_floquet_halves(l, &dis)?;
            floquet_operator(&[(&h1, theta / 2.0), (&h2, theta / 2.0)])?
        }
        ModelKind::KickedIsing2 | ModelKind::KickedIsing3 => {
            let x = build_ising_layer(Pauli::X, l, hy)?;
            let y = build_ising_layer(Pauli::Y, l, &dis.fields_z)?;
            if model.kind == ModelKind::KickedIsing2 {
                floquet_operator(&[(&x, theta), (&y, theta)])?
            } else {
                let z = build_ising_layer(Pauli::Z, l, hx)?;
                floquet_operator(&[(&x, theta), (&y, theta), (&z, theta)])?
            }
        }
        ModelKind::Heisenberg => return Err(sff_core::Error::Parameter("not a Floquet model".into())),
    };
    quasienergies(&u, theta, vectors)
}

fn gaussian_baseline(tau_h: Option<f64>, k_inf: f64, times: &[f64]) -> Option<SffCurve> {
    let tau_h = tau_h?;
    rmt_baseline(RmtEnsemble::Goe, RmtParams::Gaussian { tau_h, k_inf }, times).ok()
}

fn thouless(curve: &SffCurve, baseline: Option<&SffCurve>) -> CliResult<Option<f64>> {
    match baseline {
        Some(b) => Ok(thouless_time(curve, b, THOULESS_EPS, THOULESS_SUSTAIN)?),
        None => Ok(None),
    }
}

fn with_thouless(mut meta: CurveMeta) -> CurveMeta {
    meta.thouless_eps = Some(THOULESS_EPS);
    meta.thouless_sustain = Some(THOULESS_SUSTAIN);
    meta
}

fn finish(out: &mut OutputWriter, mut manifest: RunManifest, complete: bool) -> CliResult<RunManifest> {
    manifest.complete = complete;
    out.manifest(&mut manifest)?;
    if complete {
        Ok(manifest)
    } else {
        log("cancelled; manifest marked incomplete");
        Err(CliError::Cancelled)
    }
}

fn all_failed(failures: &[RealizationFailure]) -> CliError {
    CliError::AllFailed(failures.first().map_or_else(String::new, |f| format!("realization {}: {}", f.realization, f.message)))
}

fn exact_filter(config: &RunConfig) -> CliResult<FilterSpec> {
    if let Some(f) = &config.filter {
        return Ok(f.clone());
    }
    Ok(match &config.prep {
        Some(p) => {
            let prep = p.prep_config()?;
            FilterSpec::Pea { center: prep.center, steps: prep.steps, t0: prep.t0 }
        }
        None => FilterSpec::Flat,
    })
}

struct ExactRealization {
    k: Vec<f64>,
    k_inf: f64,
    tau_h: Option<f64>,
}

fn sff_exact(config: &RunConfig, opts: &RunOptions, out: &mut OutputWriter) -> CliResult<RunManifest> {
    let command = Command::SffExact.name();
    let model = config.model()?;
    if model.kind.is_floquet() {
        return Err(CliError::Config(format!("model.kind = {:?} needs the floquet command", model.kind)));
    }
    let plan = config.plan()?.seed_plan();
    let times = config.grid()?;
    let filter = exact_filter(config)?;
    let prefix = config.prefix(command).to_string();
    let mut manifest = RunManifest::new(command, config);

    for &w in &model.w {
        let label = tag("w", w);
        log(&format!("{label}: {} realizations", plan.disorders));
        let outcomes: Vec<Option<Result<ExactRealization, RealizationFailure>>> = (0..plan.disorders)
            .into_par_iter()
            .map(|i| {
                if cancelled(opts) {
                    return None;
                }
                let seed = plan.disorder_seed(i);
                let run = || -> sff_core::Result<ExactRealization> {
                    let s = heisenberg_spectrum(&model, w, seed)?;
                    let f = filter_values(&filter, &s)?;
                    Ok(ExactRealization {
                        k: exact_sff(&s, &f, &times)?.k,
                        k_inf: k_infinity(&f),
                        tau_h: mean_level_spacing(&s, DEFAULT_WINDOW).ok().map(|l| l.tau_h),
                    })
                };
                Some(run().map_err(|e| RealizationFailure {
                    realization: i,
                    disorder_seed: seed,
                    numerical: e.is_numerical(),
                    message: e.to_string(),
                }))
            })
            .collect();
        let complete = outcomes.iter().all(Option::is_some);
        let mut acc = CurveAccumulator::new(times.clone());
        let (mut k_inf, mut tau_h) = (Welford::new(), Welford::new());
        let mut failures = Vec::new();
        for o in outcomes.into_iter().flatten() {
            match o {
                Ok(r) => {
                    acc.push(&r.k)?;
                    k_inf.push(r.k_inf);
                    if let Some(t) = r.tau_h {
                        tau_h.push(t);
                    }
                }
                Err(f) => {
                    log(&format!("{label}: realization {} failed: {}", f.realization, f.message));
                    failures.push(f)
                }
            }
        }
        if acc.count() == 0 {
            if !complete {
                return finish(out, manifest, false);
            }
            return Err(all_failed(&failures));
        }
        let tau_h = (tau_h.count() > 0).then(|| tau_h.mean());
        let meta = CurveMeta { label: label.clone(), n_disorder: acc.count() as usize, filter: Some(filter.clone()), ..CurveMeta::default() };
        let curve = acc.finish(with_thouless(meta))?;
        let stem = format!("{prefix}_{label}");
        out.curve(&stem, &curve, &config.output)?;
        let baseline = gaussian_baseline(tau_h, k_inf.mean(), &times);
        if let Some(b) = &baseline {
            out.curve(&format!("{stem}_goe"), b, &config.output)?;
        }
        manifest.runs.push(RunSummary {
            label,
            parameter: w,
            seeds: (0..plan.disorders).map(|i| plan.disorder_seed(i)).collect(),
            p_mc: Vec::new(),
            estimates: None,
            accounting: None,
            tau_h_exact: tau_h,
            k_inf_exact: Some(k_inf.mean()),
            thouless_time: thouless(&curve, baseline.as_ref())?,
            thouless_time_measured: None,
            residuals: None,
            failures,
        });
        if !complete {
            return finish(out, manifest, false);
        }
    }
    finish(out, manifest, true)
}

/// Writes the measured/exact pair and builds the sweep entry.
fn record_experiment(
    config: &RunConfig,
    out: &mut OutputWriter,
    stem: &str,
    label: String,
    parameter: f64,
    result: &ExperimentResult,
) -> CliResult<RunSummary> {
    let mut measured = result.measured.clone();
    measured.meta.label = format!("{label} measured");
    let mut exact = result.exact.clone();
    exact.meta.label = format!("{label} exact");
    out.curve(&format!("{stem}_measured"), &with_curve_meta(measured), &config.output)?;
    out.curve(&format!("{stem}_exact"), &with_curve_meta(exact), &config.output)?;
    if config.output.records {
        out.json(&format!("{stem}_records.json"), &result.records)?;
    }
    let plan = config.plan()?;
    let seeds = (0..plan.disorders).map(|i| sff_core::rng::derive_seed(plan.master_seed, sff_core::rng::DISORDER, &[i as u64])).collect();
    Ok(RunSummary {
        label,
        parameter,
        seeds,
        p_mc: result.records.iter().map(|r| r.p_mc).collect(),
        estimates: Some(result.estimates.clone()),
        accounting: Some(result.accounting.clone()),
        tau_h_exact: result.estimates.tau_h_exact,
        k_inf_exact: Some(result.estimates.k_inf_exact),
        thouless_time: None,
        thouless_time_measured: None,
        residuals: None,
        failures: result.failures.clone(),
    })
}

fn with_curve_meta(c: SffCurve) -> SffCurve {
    let meta = with_thouless(c.meta.clone());
    SffCurve { meta, ..c }
}

fn sff_measure(config: &RunConfig, opts: &RunOptions, out: &mut OutputWriter) -> CliResult<RunManifest> {
    let command = Command::SffMeasure.name();
    let model = config.model()?;
    if model.kind.is_floquet() {
        return Err(CliError::Config(format!("model.kind = {:?} needs the floquet command", model.kind)));
    }
    let prep = config.prep.as_ref().ok_or_else(|| crate::config::missing("prep"))?.prep_config()?;
    let plan_section = config.plan()?;
    let spec_template = ExperimentSpec {
        mode: ExperimentMode::Hamiltonian { prep },
        plan: plan_section.shot_plan()?,
        times: config.grid()?,
        t_coh: plan_section.t_coh,
    };
    let prefix = config.prefix(command).to_string();
    let mut manifest = RunManifest::new(command, config);

    for &w in &model.w {
        let label = tag("w", w);
        log(&format!("{label}: {} realizations, {} shots per point", spec_template.plan.disorders, spec_template.plan.shots));
        let result = run_experiment(&spec_template, |_, seed| heisenberg_spectrum(&model, w, seed), opts.cancel)?;
        for f in &result.failures {
            log(&format!("{label}: realization {} failed: {}", f.realization, f.message));
        }
        if result.records.is_empty() {
            if result.cancelled {
                return finish(out, manifest, false);
            }
            return Err(all_failed(&result.failures));
        }
        let stem = format!("{prefix}_{label}");
        let mut summary = record_experiment(config, out, &stem, label, w, &result)?;
        let baseline = gaussian_baseline(result.estimates.tau_h_exact, result.estimates.k_inf_exact, &spec_template.times);
        if let Some(b) = &baseline {
            out.curve(&format!("{stem}_goe"), b, &config.output)?;
        }
        summary.thouless_time = thouless(&result.exact, baseline.as_ref())?;
        summary.thouless_time_measured = thouless(&result.measured, baseline.as_ref())?;
        manifest.runs.push(summary);
        if result.cancelled {
            return finish(out, manifest, false);
        }
    }
    finish(out, manifest, true)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct CircularRow {
    time: f64,
    #[serde(rename = "K_COE")]
    k_coe: f64,
    #[serde(rename = "K_CUE")]
    k_cue: f64,
}

fn squared_residual(curve: &SffCurve, baseline: &[f64], keep: &[bool]) -> f64 {
    curve.k.iter().zip(baseline).zip(keep).filter(|(_, &k)| k).map(|((a, b), _)| (a - b).powi(2)).sum()
}

fn floquet(config: &RunConfig, opts: &RunOptions, out: &mut OutputWriter) -> CliResult<RunManifest> {
    let command = Command::Floquet.name();
    let model = config.model()?;
    if !model.kind.is_floquet() {
        return Err(CliError::Config("the floquet command needs a Floquet model kind".into()));
    }
    if model.w.len() != 1 {
        return Err(CliError::Config("Floquet runs sweep theta; give a single model.w".into()));
    }
    let scale = model.w[0];
    let section = config.floquet.as_ref().ok_or_else(|| crate::config::missing("floquet"))?;
    let dim = 1usize << model.sites;
    let t_max = section.t_max.unwrap_or(dim as u32);
    if section.t_min > t_max {
        return Err(CliError::Config(format!("floquet.t_min = {} exceeds t_max = {t_max}", section.t_min)));
    }
    let times = integer_grid(section.t_min, t_max);
    let plan_section = config.plan()?;
    let measure = plan_section.shots.is_some();
    let vectors = measure && section.sampling == FloquetSampling::ProductState;
    let prefix = config.prefix(command).to_string();
    let mut manifest = RunManifest::new(command, config);

    let circ = RmtParams::Circular { dim };
    let coe = rmt_baseline(RmtEnsemble::Coe, circ, &times)?;
    let cue = rmt_baseline(RmtEnsemble::Cue, circ, &times)?;
    let keep: Vec<bool> = times.iter().map(|&t| t >= 2.0 && t <= dim as f64).collect();
    let residual_span = (2, t_max.min(dim as u32));

    for theta in section.theta.values() {
        if !(theta > 0.0 && theta.is_finite()) {
            return Err(CliError::Config(format!("floquet.theta must be positive, got {theta}")));
        }
        let label = tag("theta", theta);
        let stem = format!("{prefix}_{label}");
        let realize = |_: usize, seed: u64| floquet_spectrum(&model, scale, theta, seed, vectors);
        let (mut summary, exact, measured, complete) = if measure {
            let spec = ExperimentSpec {
                mode: ExperimentMode::Floquet { sampling: section.sampling },
                plan: plan_section.shot_plan()?,
                times: times.clone(),
                t_coh: plan_section.t_coh,
            };
            log(&format!("{label}: {} realizations, {} shots per point", spec.plan.disorders, spec.plan.shots));
            let result = run_experiment(&spec, realize, opts.cancel)?;
            for f in &result.failures {
                log(&format!("{label}: realization {} failed: {}", f.realization, f.message));
            }
            if result.records.is_empty() {
                if result.cancelled {
                    return finish(out, manifest, false);
                }
                return Err(all_failed(&result.failures));
            }
            let summary = record_experiment(config, out, &stem, label, theta, &result)?;
            (summary, result.exact, Some(result.measured), !result.cancelled)
        } else {
            let plan = plan_section.seed_plan();
            log(&format!("{label}: {} realizations (exact)", plan.disorders));
            let outcomes: Vec<Option<Result<Vec<f64>, RealizationFailure>>> = (0..plan.disorders)
                .into_par_iter()
                .map(|i| {
                    if cancelled(opts) {
                        return None;
                    }
                    let seed = plan.disorder_seed(i);
                    let run = || -> sff_core::Result<Vec<f64>> {
                        let s = realize(i, seed)?;
                        let f = vec![1.0 / s.len() as f64; s.len()];
                        Ok(exact_sff(&s, &f, &times)?.k)
                    };
                    Some(run().map_err(|e| RealizationFailure {
                        realization: i,
                        disorder_seed: seed,
                        numerical: e.is_numerical(),
                        message: e.to_string(),
                    }))
                })
                .collect();
            let complete = outcomes.iter().all(Option::is_some);
            let mut acc = CurveAccumulator::new(times.clone());
            let mut failures = Vec::new();
            for o in outcomes.into_iter().flatten() {
                match o {
                    Ok(k) => acc.push(&k)?,
                    Err(f) => failures.push(f),
                }
            }
            if acc.count() == 0 {
                if !complete {
                    return finish(out, manifest, false);
                }
                return Err(all_failed(&failures));
            }
            let meta = CurveMeta { label: format!("{label} exact"), n_disorder: acc.count() as usize, filter: Some(FilterSpec::Flat), ..CurveMeta::default() };
            let exact = acc.finish(meta)?;
            out.curve(&format!("{stem}_exact"), &exact, &config.output)?;
            let summary = RunSummary {
                label,
                parameter: theta,
                seeds: (0..plan.disorders).map(|i| plan.disorder_seed(i)).collect(),
                p_mc: Vec::new(),
                estimates: None,
                accounting: None,
                tau_h_exact: Some(dim as f64),
                k_inf_exact: Some(1.0 / dim as f64),
                thouless_time: None,
                thouless_time_measured: None,
                residuals: None,
                failures,
            };
            (summary, exact, None, complete)
        };
        let rows: Vec<CircularRow> =
            times.iter().zip(coe.k.iter().zip(&cue.k)).map(|(&time, (&k_coe, &k_cue))| CircularRow { time, k_coe, k_cue }).collect();
        out.table(&format!("{stem}_rmt.csv"), &rows)?;
        summary.residuals = Some(Residuals {
            t_from: residual_span.0,
            t_to: residual_span.1,
            exact_coe: squared_residual(&exact, &coe.k, &keep),
            exact_cue: squared_residual(&exact, &cue.k, &keep),
            measured_coe: measured.as_ref().map(|m| squared_residual(m, &coe.k, &keep)),
            measured_cue: measured.as_ref().map(|m| squared_residual(m, &cue.k, &keep)),
        });
        manifest.runs.push(summary);
        if !complete {
            return finish(out, manifest, false);
        }
    }
    finish(out, manifest, true)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct RmtDetails {
    ensemble: RmtEnsemble,
    params: RmtParams,
}

fn rmt(config: &RunConfig, out: &mut OutputWriter) -> CliResult<RunManifest> {
    let command = Command::Rmt.name();
    let section = config.rmt.as_ref().ok_or_else(|| crate::config::missing("rmt"))?;
    let params = match section.ensemble {
        RmtEnsemble::Coe | RmtEnsemble::Cue => {
            let dim = match (section.dim, &config.model) {
                (Some(d), _) => d,
                (None, Some(m)) => 1usize << m.sites,
                (None, None) => return Err(CliError::Config("rmt.dim (or a [model] section) is required for circular ensembles".into())),
            };
            RmtParams::Circular { dim }
        }
        RmtEnsemble::Goe | RmtEnsemble::Gue => {
            let (mut tau_h, mut k_inf) = (section.tau_h, section.k_inf);
            if let Some(path) = &section.manifest {
                let m = RunManifest::read(path)?;
                let run = m.runs.get(section.run).ok_or_else(|| {
                    CliError::Config(format!("rmt.run = {} but {} has {} runs", section.run, path.display(), m.runs.len()))
                })?;
                let est = run.estimates.as_ref();
                let (t, k) = if section.estimated {
                    (est.and_then(|e| e.tau_h_hat), est.and_then(|e| e.k_inf_hat))
                } else {
                    (run.tau_h_exact, run.k_inf_exact)
                };
                tau_h = tau_h.or(t);
                k_inf = k_inf.or(k);
            }
            match (tau_h, k_inf) {
                (Some(tau_h), Some(k_inf)) => RmtParams::Gaussian { tau_h, k_inf },
                _ => return Err(CliError::Config("Gaussian ensembles need rmt.tau_h and rmt.k_inf (or rmt.manifest)".into())),
            }
        }
    };
    let times = match (&config.grid, params) {
        (Some(_), _) => config.grid()?,
        (None, RmtParams::Circular { dim }) => integer_grid(1, dim as u32),
        (None, RmtParams::Gaussian { .. }) => return Err(crate::config::missing("grid")),
    };
    let curve = rmt_baseline(section.ensemble, params, &times).map_err(|e| CliError::Config(format!("rmt: {e}")))?;
    let name = format!("{:?}", section.ensemble).to_lowercase();
    out.curve(&format!("{}_{name}", config.prefix(command)), &curve, &config.output)?;
    let mut manifest = RunManifest::new(command, config);
    manifest.details = Some(serde_json::to_value(RmtDetails { ensemble: section.ensemble, params }).map_err(|e| CliError::Io(e.to_string()))?);
    finish(out, manifest, true)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct CouplingRow {
    pair_i: usize,
    pair_j: usize,
    distance_um: f64,
    #[serde(rename = "J_xy")]
    j_xy: f64,
    #[serde(rename = "J_z")]
    j_z: f64,
    beta: f64,
    #[serde(rename = "Jp_xy")]
    jp_xy: f64,
    #[serde(rename = "Jp_z")]
    jp_z: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct RydbergReport {
    sites: usize,
    l_max: usize,
    r_max: f64,
    delta_prime: f64,
    xi_prime: f64,
    delta_offset: f64,
    j_unit: f64,
    warnings: Vec<String>,
    budget: DecoherenceBudget,
}

/// Ring model, ranges |H_spin| and |H′_spin| and the κ budget; ranges from `[budget]` take precedence.
fn ring_budget(config: &RunConfig) -> CliResult<(RingModel, DecoherenceBudget, usize, f64)> {
    let ryd = config.rydberg.as_ref().ok_or_else(|| crate::config::missing("rydberg"))?;
    let geometry = config.geometry.as_ref().ok_or_else(|| crate::config::missing("geometry"))?;
    ryd.validate().map_err(|e| CliError::Config(format!("rydberg: {e}")))?;
    let geom = geometry.ring();
    geom.validate().map_err(|e| CliError::Config(format!("geometry: {e}")))?;
    let model = build_ring_model(ryd, &geom)?;
    for w in &model.warnings {
        log(&format!("geometry warning: {w}"));
    }
    let section = config.budget.clone().unwrap_or_default();
    let h = match section.h_range {
        Some(h) => h,
        None => spectral_range(geom.sites, &model.bonds(Branch::Plain, 1.0))?,
    };
    let hp = match section.h_prime_range {
        Some(h) => h,
        None => spectral_range(geom.sites, &model.bonds(Branch::Blockaded, 1.0))?,
    };
    let budget = decoherence_budget(ryd, &geom, h, hp, Some(model.j_unit))?;
    let r_max = geometry.r_max.unwrap_or(0.75 * ryd.blockade_radius());
    let l_max = max_ring_atoms(geometry.r_c, r_max).map_err(|e| CliError::Config(format!("geometry: {e}")))?;
    Ok((model, budget, l_max, r_max))
}

fn rydberg(config: &RunConfig, out: &mut OutputWriter) -> CliResult<RunManifest> {
    let command = Command::Rydberg.name();
    let (model, budget, l_max, r_max) = ring_budget(config)?;
    let rows: Vec<CouplingRow> = model
        .pairs
        .iter()
        .map(|p| CouplingRow {
            pair_i: p.vdw.i,
            pair_j: p.vdw.j,
            distance_um: p.vdw.distance,
            j_xy: p.plain.jxy,
            j_z: p.plain.jz,
            beta: p.plain.beta,
            jp_xy: p.blockaded.jxy,
            jp_z: p.blockaded.jz,
        })
        .collect();
    let prefix = config.prefix(command).to_string();
    out.table(&format!("{prefix}_couplings.csv"), &rows)?;
    let report = RydbergReport {
        sites: model.sites,
        l_max,
        r_max,
        delta_prime: model.delta_prime,
        xi_prime: model.xi_prime,
        delta_offset: model.delta_offset,
        j_unit: model.j_unit,
        warnings: model.warnings.clone(),
        budget,
    };
    out.json(&format!("{prefix}_budget.json"), &report)?;
    let mut manifest = RunManifest::new(command, config);
    manifest.details = Some(serde_json::json!({ "l_max": l_max, "pairs": rows.len() }));
    finish(out, manifest, true)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct BudgetReport {
    budget: DecoherenceBudget,
    l_max: usize,
    r_max: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    implied_h_range: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    k_star_single: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    k_star: Option<f64>,
    /// N_d·N/(p_mc·N_reuse) preparation runs per time point.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    n_run: Option<f64>,
}

fn budget(config: &RunConfig, out: &mut OutputWriter) -> CliResult<RunManifest> {
    let command = Command::Budget.name();
    let (_, budget, l_max, r_max) = ring_budget(config)?;
    let section = config.budget.clone().unwrap_or_default();
    let ryd = config.rydberg.as_ref().ok_or_else(|| crate::config::missing("rydberg"))?;
    if section.shots.is_some_and(|n| n == 0) || section.disorders.is_some_and(|n| n == 0) {
        return Err(CliError::Config("budget.shots and budget.disorders must be positive".into()));
    }
    let n_run = match (section.shots, section.disorders, section.p_mc) {
        (Some(n), Some(nd), Some(p)) if p > 0.0 && p <= 1.0 => Some(nd as f64 * n as f64 / (p * section.reuse.unwrap_or(1) as f64)),
        (_, _, Some(p)) if !(p > 0.0 && p <= 1.0) => return Err(CliError::Config(format!("budget.p_mc = {p} outside (0, 1]"))),
        _ => None,
    };
    let report = BudgetReport {
        budget,
        l_max,
        r_max,
        implied_h_range: section.kappa1_quoted.map(|k| implied_h_range(ryd.gamma_d_prime, k)),
        k_star_single: section.shots.map(threshold_single),
        k_star: section.shots.zip(section.disorders).map(|(n, nd)| threshold(n, nd)),
        n_run,
    };
    out.json(&format!("{}.json", config.prefix(command)), &report)?;
    let manifest = RunManifest::new(command, config);
    finish(out, manifest, true)
}
