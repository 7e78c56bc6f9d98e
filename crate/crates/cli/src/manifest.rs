//! Run manifests and self-validating file output.

use std::fs;
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use sff_core::protocol::{Estimates, RealizationFailure, RunAccounting};
use sff_core::sff::SffCurve;

use crate::config::{OutputSection, RunConfig};
use crate::error::{CliError, CliResult};

pub const TOOL: &str = "sff-lab";
pub const MANIFEST_FILE: &str = "manifest.json";
pub const TIMING_FILE: &str = "timing.json";

/// Everything needed to rerun a command bit-for-bit. Feeding this file back
/// as `--config` reuses `config` verbatim.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunManifest {
    pub tool: String,
    pub version: String,
    pub command: String,
    pub complete: bool,
    pub config_hash: String,
    pub config: RunConfig,
    pub runs: Vec<RunSummary>,
    pub files: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub details: Option<serde_json::Value>,
}

/// One entry of a parameter sweep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunSummary {
    pub label: String,
    pub parameter: f64,
    /// Disorder seed per realization.
    pub seeds: Vec<u64>,
    pub p_mc: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub estimates: Option<Estimates>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub accounting: Option<RunAccounting>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tau_h_exact: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub k_inf_exact: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub thouless_time: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub thouless_time_measured: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub residuals: Option<Residuals>,
    pub failures: Vec<RealizationFailure>,
}

/// Summed squared deviations from the circular-ensemble baselines.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Residuals {
    pub t_from: u32,
    pub t_to: u32,
    pub exact_coe: f64,
    pub exact_cue: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub measured_coe: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub measured_cue: Option<f64>,
}

fn same_bits(a: &[f64], b: &[f64]) -> bool {
    a.len() == b.len() && a.iter().zip(b).all(|(x, y)| x.to_bits() == y.to_bits())
}

pub fn config_hash(config: &RunConfig) -> String {
    Sha256::digest(config.canonical_json().as_bytes()).iter().map(|b| format!("{b:02x}")).collect()
}

impl RunManifest {
    pub fn new(command: &str, config: &RunConfig) -> Self {
        Self {
            tool: TOOL.into(),
            version: env!("CARGO_PKG_VERSION").into(),
            command: command.into(),
            complete: false,
            config_hash: config_hash(config),
            config: config.clone(),
            runs: Vec::new(),
            files: Vec::new(),
            details: None,
        }
    }

    pub fn read(path: &Path) -> CliResult<Self> {
        let text = fs::read_to_string(path).map_err(|e| CliError::Io(format!("reading {}: {e}", path.display())))?;
        serde_json::from_str(&text).map_err(|e| CliError::Config(format!("{}: not a run manifest: {e}", path.display())))
    }
}

/// Writes into one directory and reads every file back through its own schema.
pub struct OutputWriter {
    dir: PathBuf,
    files: Vec<String>,
}

impl OutputWriter {
    pub fn new(dir: &Path) -> CliResult<Self> {
        fs::create_dir_all(dir).map_err(|e| CliError::Io(format!("creating {}: {e}", dir.display())))?;
        Ok(Self { dir: dir.to_path_buf(), files: Vec::new() })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn files(&self) -> &[String] {
        &self.files
    }

    fn put(&mut self, name: &str, bytes: &[u8]) -> CliResult<PathBuf> {
        let path = self.dir.join(name);
        fs::write(&path, bytes).map_err(|e| CliError::Io(format!("writing {}: {e}", path.display())))?;
        if !self.files.iter().any(|f| f == name) {
            self.files.push(name.into());
        }
        Ok(path)
    }

    pub fn curve(&mut self, stem: &str, curve: &SffCurve, output: &OutputSection) -> CliResult<()> {
        if output.csv() {
            let mut buf = Vec::new();
            curve.write_csv(&mut buf)?;
            let path = self.put(&format!("{stem}.csv"), &buf)?;
            let back = SffCurve::read_csv(fs::File::open(&path)?)?;
            if !same_bits(&back.times, &curve.times) || !same_bits(&back.k, &curve.k) || !same_bits(&back.stderr, &curve.stderr) || back.n_disorder != curve.n_disorder {
                return Err(CliError::Io(format!("{} does not read back to the written curve", path.display())));
            }
        }
        if output.json() {
            let path = self.put(&format!("{stem}.json"), curve.to_json()?.as_bytes())?;
            let back = SffCurve::from_json(&fs::read_to_string(&path)?)?;
            if &back != curve {
                return Err(CliError::Io(format!("{} does not read back to the written curve", path.display())));
            }
        }
        Ok(())
    }

    pub fn json<T: Serialize + DeserializeOwned + PartialEq>(&mut self, name: &str, value: &T) -> CliResult<()> {
        let text = serde_json::to_string_pretty(value).map_err(|e| CliError::Io(e.to_string()))?;
        let path = self.put(name, text.as_bytes())?;
        let back: T = serde_json::from_str(&fs::read_to_string(&path)?)
            .map_err(|e| CliError::Io(format!("{} fails its schema: {e}", path.display())))?;
        if &back != value {
            return Err(CliError::Io(format!("{} does not read back to the written value", path.display())));
        }
        Ok(())
    }

    pub fn table<T: Serialize + DeserializeOwned + PartialEq>(&mut self, name: &str, rows: &[T]) -> CliResult<()> {
        let mut w = csv::Writer::from_writer(Vec::new());
        for r in rows {
            w.serialize(r).map_err(|e| CliError::Io(e.to_string()))?;
        }
        let bytes = w.into_inner().map_err(|e| CliError::Io(e.to_string()))?;
        let path = self.put(name, &bytes)?;
        let back: Vec<T> = csv::Reader::from_path(&path)
            .map_err(|e| CliError::Io(e.to_string()))?
            .deserialize()
            .collect::<Result<_, _>>()
            .map_err(|e| CliError::Io(format!("{} fails its schema: {e}", path.display())))?;
        if back != rows {
            return Err(CliError::Io(format!("{} does not read back to the written rows", path.display())));
        }
        Ok(())
    }

    /// The manifest goes last so that it can list every other file.
    pub fn manifest(&mut self, manifest: &mut RunManifest) -> CliResult<()> {
        manifest.files = self.files.clone();
        self.json(MANIFEST_FILE, manifest)
    }
}
