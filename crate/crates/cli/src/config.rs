//! Run configuration: TOML files, or the `config` block of a previous manifest.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sff_core::models::{DisorderLaw, MAX_SITES, MIN_SITES};
use sff_core::protocol::{FloquetSampling, PrepConfig, ShotPlan};
use sff_core::rydberg::{RingGeometry, RydbergConfig};
use sff_core::sff::{FilterSpec, RmtEnsemble, Spacing};

use crate::error::{CliError, CliResult};
use crate::manifest::RunManifest;

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub model: Option<ModelSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub prep: Option<PrepSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub plan: Option<PlanSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub grid: Option<GridSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub filter: Option<FilterSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub floquet: Option<FloquetSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rmt: Option<RmtSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rydberg: Option<RydbergConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub geometry: Option<GeometrySection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub budget: Option<BudgetSection>,
    #[serde(default)]
    pub output: OutputSection,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ModelKind {
    Heisenberg,
    FloquetHeisenberg,
    #[serde(rename = "kicked-ising-2")]
    KickedIsing2,
    #[serde(rename = "kicked-ising-3")]
    KickedIsing3,
}

impl ModelKind {
    pub fn is_floquet(self) -> bool {
        self != ModelKind::Heisenberg
    }
}

/// A single number or a list of numbers to sweep over.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Sweep {
    One(f64),
    Many(Vec<f64>),
}

impl Sweep {
    pub fn values(&self) -> Vec<f64> {
        match self {
            Sweep::One(x) => vec![*x],
            Sweep::Many(v) => v.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSection {
    pub kind: ModelKind,
    #[serde(rename = "L")]
    pub sites: usize,
    /// Anisotropy, next-nearest hopping and anisotropy (Heisenberg only).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub delta: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub j2: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub delta2: Option<f64>,
    /// Disorder strength (Heisenberg) or field scale (Floquet models).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub w: Option<Sweep>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub disorder_law: Option<DisorderLaw>,
    /// Total σᶻ sector; ignored when `full_basis` is set.
    #[serde(default)]
    pub sz: i32,
    #[serde(default)]
    pub full_basis: bool,
}

/// `"auto"`/`"center"` keyword or an explicit value.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Setting {
    Value(f64),
    Keyword(String),
}

impl Setting {
    fn resolve(&self, keyword: &str, key: &str) -> CliResult<Option<f64>> {
        match self {
            Setting::Value(v) if v.is_finite() => Ok(Some(*v)),
            Setting::Value(v) => Err(CliError::Config(format!("{key} = {v} is not finite"))),
            Setting::Keyword(k) if k == keyword => Ok(None),
            Setting::Keyword(k) => Err(CliError::Config(format!("{key} must be a number or \"{keyword}\", got \"{k}\""))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PrepSection {
    /// Number of filtering steps M.
    pub steps: u32,
    #[serde(default = "auto")]
    pub t0: Setting,
    /// Filter center δ.
    #[serde(default = "center")]
    pub delta: Setting,
}

fn auto() -> Setting {
    Setting::Keyword("auto".into())
}

fn center() -> Setting {
    Setting::Keyword("center".into())
}

impl PrepSection {
    pub fn prep_config(&self) -> CliResult<PrepConfig> {
        if self.steps > 30 {
            return Err(CliError::Config(format!("prep.steps = {} is above the supported 30", self.steps)));
        }
        let t0 = self.t0.resolve("auto", "prep.t0")?;
        if t0.is_some_and(|t| t <= 0.0) {
            return Err(CliError::Config("prep.t0 must be positive".into()));
        }
        Ok(PrepConfig { steps: self.steps, t0, center: self.delta.resolve("center", "prep.delta")? })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlanSection {
    /// Shots per quadrature per time point per realization.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub shots: Option<u64>,
    pub disorders: usize,
    #[serde(default = "one")]
    pub reuse: u64,
    #[serde(default)]
    pub master_seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub t_coh: Option<f64>,
}

fn one() -> u64 {
    1
}

impl PlanSection {
    pub fn shot_plan(&self) -> CliResult<ShotPlan> {
        let shots = self.shots.ok_or_else(|| CliError::Config("plan.shots is required for measurement runs".into()))?;
        let plan = ShotPlan { shots, disorders: self.disorders, reuse: self.reuse, master_seed: self.master_seed };
        plan.validate().map_err(|e| CliError::Config(format!("plan: {e}")))?;
        Ok(plan)
    }

    /// Seeds only; used by exact runs, where shots are irrelevant.
    pub fn seed_plan(&self) -> ShotPlan {
        ShotPlan { shots: 2, disorders: self.disorders, reuse: 1, master_seed: self.master_seed }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSection {
    pub t_min: f64,
    pub t_max: f64,
    pub points: usize,
    #[serde(default = "log_spacing")]
    pub spacing: Spacing,
}

fn log_spacing() -> Spacing {
    Spacing::Log
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FloquetSection {
    /// Driving period ϑ, one or a sweep.
    pub theta: Sweep,
    #[serde(default = "eigenbasis")]
    pub sampling: FloquetSampling,
    #[serde(default = "one_u32")]
    pub t_min: u32,
    /// Last integer time; defaults to the Hilbert-space dimension.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub t_max: Option<u32>,
}

fn eigenbasis() -> FloquetSampling {
    FloquetSampling::Eigenbasis
}

fn one_u32() -> u32 {
    1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RmtSection {
    #[serde(default = "goe")]
    pub ensemble: RmtEnsemble,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tau_h: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub k_inf: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dim: Option<usize>,
    /// Take τ_H and K_∞ from a manifest written by `sff-measure`/`sff-exact`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub manifest: Option<PathBuf>,
    /// Which sweep entry of that manifest.
    #[serde(default)]
    pub run: usize,
    /// Use the measured estimators instead of the exact values from the manifest.
    #[serde(default)]
    pub estimated: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub thouless_eps: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub thouless_sustain: Option<usize>,
}

fn goe() -> RmtEnsemble {
    RmtEnsemble::Goe
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GeometrySection {
    pub sites: usize,
    /// Ring radius in μm.
    pub radius: f64,
    /// Tweezer exclusion distance in μm.
    pub r_c: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub r_c_prime: Option<f64>,
    /// Largest admissible ring radius for L_max; defaults to 0.75 R_b.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub r_max: Option<f64>,
}

impl GeometrySection {
    pub fn ring(&self) -> RingGeometry {
        RingGeometry { sites: self.sites, radius: self.radius, r_c: self.r_c, r_c_prime: self.r_c_prime }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BudgetSection {
    /// Spectral ranges |H_spin|, |H′_spin|; computed from the ring when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub h_range: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub h_prime_range: Option<f64>,
    /// A quoted κ₁ to convert back into the implied |H_spin|.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kappa1_quoted: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub shots: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub disorders: Option<usize>,
    /// Mean preparation probability, for the N_run estimate.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub p_mc: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reuse: Option<u64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Csv,
    Json,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSection {
    /// File name prefix; defaults to the command name.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub prefix: Option<String>,
    #[serde(default = "all_formats")]
    pub formats: Vec<Format>,
    /// Write per-realization measurement records.
    #[serde(default)]
    pub records: bool,
}

fn all_formats() -> Vec<Format> {
    vec![Format::Csv, Format::Json]
}

impl Default for OutputSection {
    fn default() -> Self {
        Self { prefix: None, formats: all_formats(), records: false }
    }
}

impl OutputSection {
    pub fn csv(&self) -> bool {
        self.formats.contains(&Format::Csv)
    }

    pub fn json(&self) -> bool {
        self.formats.contains(&Format::Json)
    }
}

/// Heisenberg-chain parameters with the defaults filled in.
#[derive(Debug, Clone, PartialEq)]
pub struct ResolvedModel {
    pub kind: ModelKind,
    pub sites: usize,
    pub delta: f64,
    pub j2: f64,
    pub delta2: f64,
    pub w: Vec<f64>,
    pub law: DisorderLaw,
    pub sz: i32,
    pub full_basis: bool,
}

impl ModelSection {
    pub fn resolve(&self) -> CliResult<ResolvedModel> {
        if !(MIN_SITES..=MAX_SITES).contains(&self.sites) {
            return Err(CliError::Config(format!("model.L = {} outside [{MIN_SITES}, {MAX_SITES}]", self.sites)));
        }
        let heisenberg = self.kind == ModelKind::Heisenberg;
        if !heisenberg {
            for (key, v) in [("delta", self.delta), ("j2", self.j2), ("delta2", self.delta2)] {
                if v.is_some() {
                    return Err(CliError::Config(format!("model.{key} only applies to kind = \"heisenberg\"")));
                }
            }
            if self.sz != 0 || self.full_basis {
                return Err(CliError::Config("Floquet models always use the full basis; drop model.sz/full_basis".into()));
            }
        }
        let w = match (&self.w, self.kind) {
            (Some(s), _) => s.values(),
            (None, ModelKind::Heisenberg) => return Err(CliError::Config("model.w (disorder strength) is required".into())),
            (None, _) => vec![1.0],
        };
        if w.is_empty() || w.iter().any(|x| !(x.is_finite() && *x >= 0.0)) {
            return Err(CliError::Config(format!("model.w must be nonnegative finite values, got {w:?}")));
        }
        let law = self.disorder_law.unwrap_or(match self.kind {
            ModelKind::FloquetHeisenberg => DisorderLaw::Normal,
            _ => DisorderLaw::Uniform,
        });
        let model = ResolvedModel {
            kind: self.kind,
            sites: self.sites,
            delta: self.delta.unwrap_or(0.8),
            j2: self.j2.unwrap_or(0.02),
            delta2: self.delta2.unwrap_or(0.06),
            w,
            law,
            sz: self.sz,
            full_basis: self.full_basis,
        };
        if heisenberg && !model.full_basis && (model.sz.unsigned_abs() as usize > model.sites || (model.sz + model.sites as i32) % 2 != 0) {
            return Err(CliError::Config(format!("model.sz = {} is not a sector of {} spins", model.sz, model.sites)));
        }
        if heisenberg && model.full_basis && model.sites > sff_core::models::MAX_FULL_SITES {
            return Err(CliError::Config(format!(
                "model.full_basis supports at most {} sites",
                sff_core::models::MAX_FULL_SITES
            )));
        }
        if !heisenberg && model.sites > sff_core::models::MAX_FULL_SITES {
            return Err(CliError::Config(format!(
                "Floquet models support at most {} sites",
                sff_core::models::MAX_FULL_SITES
            )));
        }
        Ok(model)
    }
}

impl GridSection {
    pub fn times(&self) -> CliResult<Vec<f64>> {
        if self.spacing == Spacing::Log && !(self.t_min > 0.0) {
            return Err(CliError::Config("grid.t_min must be positive for log spacing".into()));
        }
        if self.t_min < 0.0 {
            return Err(CliError::Config("grid.t_min must be nonnegative".into()));
        }
        sff_core::sff::time_grid(self.spacing, self.t_min, self.t_max, self.points).map_err(|e| CliError::Config(format!("grid: {e}")))
    }
}

impl RunConfig {
    pub fn model(&self) -> CliResult<ResolvedModel> {
        self.model.as_ref().ok_or_else(|| missing("model"))?.resolve()
    }

    pub fn plan(&self) -> CliResult<&PlanSection> {
        let plan = self.plan.as_ref().ok_or_else(|| missing("plan"))?;
        if plan.disorders == 0 {
            return Err(CliError::Config("plan.disorders must be at least 1".into()));
        }
        if plan.t_coh.is_some_and(|t| !(t > 0.0)) {
            return Err(CliError::Config("plan.t_coh must be positive".into()));
        }
        Ok(plan)
    }

    pub fn grid(&self) -> CliResult<Vec<f64>> {
        self.grid.as_ref().ok_or_else(|| missing("grid"))?.times()
    }

    pub fn prefix<'a>(&'a self, command: &'a str) -> &'a str {
        self.output.prefix.as_deref().unwrap_or(command)
    }

    /// Canonical JSON form, the input of the config hash.
    pub fn canonical_json(&self) -> String {
        serde_json::to_string(self).expect("config serializes")
    }
}

pub fn missing(section: &str) -> CliError {
    CliError::Config(format!("missing [{section}] section"))
}

/// Reads a TOML config, or a JSON manifest whose embedded config is reused.
pub fn load(path: &Path) -> CliResult<RunConfig> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::Io(format!("reading {}: {e}", path.display())))?;
    if path.extension().is_some_and(|e| e == "json") {
        let manifest: RunManifest =
            serde_json::from_str(&text).map_err(|e| CliError::Config(format!("{}: not a run manifest: {e}", path.display())))?;
        return Ok(manifest.config);
    }
    parse_toml(&text).map_err(|e| match e {
        CliError::Config(m) => CliError::Config(format!("{}: {m}", path.display())),
        other => other,
    })
}

pub fn parse_toml(text: &str) -> CliResult<RunConfig> {
    toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))
}
