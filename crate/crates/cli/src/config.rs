//! Experiment configuration: a TOML file plus `--set key=value` overrides.
//!
//! ```toml
//! seed = 7
//! repeats = 3
//! dataset = "data.toml"          # or an inline [dataset] table
//!
//! [pipeline]
//! kind = "lkdl"
//! sampler = "kmeans"
//! c = { fraction = 0.2 }
//! k = 20
//! kernel = { kind = "gaussian", sigma = 1.0 }
//! learner = { kind = "per-class", m_per_class = 15, q = 3, iterations = 5 }
//! ```

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use lkdl::datasets::{DatasetManifest, LabeledDataset};
use lkdl::PipelineSpec;

use crate::error::{CliError, Result, StageExt};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum DatasetRef {
    Path(PathBuf),
    Inline(DatasetManifest),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SweepAxis {
    #[serde(rename = "c_over_N", alias = "c_over_n")]
    COverN,
    #[serde(rename = "noise_sigma")]
    NoiseSigma,
    #[serde(rename = "missing_fraction")]
    MissingFraction,
    #[serde(rename = "train_fraction")]
    TrainFraction,
}

impl SweepAxis {
    pub fn name(self) -> &'static str {
        match self {
            SweepAxis::COverN => "c_over_N",
            SweepAxis::NoiseSigma => "noise_sigma",
            SweepAxis::MissingFraction => "missing_fraction",
            SweepAxis::TrainFraction => "train_fraction",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "c_over_N" | "c_over_n" => Ok(SweepAxis::COverN),
            "noise_sigma" => Ok(SweepAxis::NoiseSigma),
            "missing_fraction" => Ok(SweepAxis::MissingFraction),
            "train_fraction" => Ok(SweepAxis::TrainFraction),
            other => Err(CliError::Config(format!(
                "unknown sweep axis {other:?} (c_over_N, noise_sigma, missing_fraction, train_fraction)"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    pub axis: SweepAxis,
    pub values: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub dataset: DatasetRef,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "one")]
    pub repeats: usize,
    #[serde(default)]
    pub out: Option<PathBuf>,
    pub pipeline: PipelineSpec,
    #[serde(default)]
    pub sweep: Option<SweepConfig>,
    /// Write zero timings so result files are byte-identical across runs.
    #[serde(default = "yes")]
    pub record_timings: bool,
    /// Directory relative dataset paths are resolved against.
    #[serde(skip)]
    pub base_dir: PathBuf,
}

fn one() -> usize {
    1
}

fn yes() -> bool {
    true
}

impl ExperimentConfig {
    pub fn from_toml(text: &str, overrides: &[String], base_dir: &Path) -> Result<Self> {
        let mut table: toml::Table = toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))?;
        for o in overrides {
            apply_override(&mut table, o)?;
        }
        let mut cfg: ExperimentConfig =
            toml::Value::Table(table).try_into().map_err(|e: toml::de::Error| CliError::Config(e.to_string()))?;
        cfg.base_dir = base_dir.to_path_buf();
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path, overrides: &[String]) -> Result<Self> {
        let text = fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Self::from_toml(&text, overrides, &base)
    }

    pub fn validate(&self) -> Result<()> {
        if self.repeats == 0 {
            return Err(CliError::Config("repeats must be >= 1".into()));
        }
        if let lkdl::pipeline::LandmarkCount::Fraction(f) = self.pipeline.c {
            if !(f > 0.0 && f <= 1.0) {
                return Err(CliError::Config(format!("c fraction must lie in (0, 1], got {f}")));
            }
        }
        if self.pipeline.k == 0 {
            return Err(CliError::Config("k must be >= 1".into()));
        }
        self.pipeline.kernel.validate()?;
        Ok(())
    }

    pub fn manifest(&self) -> Result<(DatasetManifest, PathBuf)> {
        match &self.dataset {
            DatasetRef::Inline(m) => Ok((m.clone(), self.base_dir.clone())),
            DatasetRef::Path(p) => {
                let path = if p.is_absolute() { p.clone() } else { self.base_dir.join(p) };
                let text = fs::read_to_string(&path)
                    .map_err(|e| CliError::Config(format!("cannot read manifest {}: {e}", path.display())))?;
                let m: DatasetManifest =
                    toml::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
                Ok((m, path.parent().map(Path::to_path_buf).unwrap_or_default()))
            }
        }
    }

    pub fn load_data(&self) -> Result<(LabeledDataset, LabeledDataset)> {
        let (m, base) = self.manifest()?;
        m.load(&base).stage("load dataset")
    }

    pub fn out_dir(&self) -> PathBuf {
        self.out.clone().unwrap_or_else(|| PathBuf::from("out"))
    }

    /// The configuration as JSON, for run manifests.
    pub fn echo(&self) -> serde_json::Value {
        serde_json::to_value(self).unwrap_or(serde_json::Value::Null)
    }
}

/// Applies `a.b.c=value`. The value is read as a TOML literal when it
/// parses as one and as a bare string otherwise.
pub fn apply_override(table: &mut toml::Table, assignment: &str) -> Result<()> {
    let (key, raw) = assignment
        .split_once('=')
        .ok_or_else(|| CliError::Config(format!("override {assignment:?} is not key=value")))?;
    let value = match toml::from_str::<toml::Table>(&format!("v = {}", raw.trim())) {
        Ok(mut t) => t.remove("v").expect("parsed key"),
        Err(_) => toml::Value::String(raw.trim().to_string()),
    };
    let parts: Vec<&str> = key.trim().split('.').collect();
    if parts.iter().any(|p| p.is_empty()) {
        return Err(CliError::Config(format!("bad override key {key:?}")));
    }
    let mut cur = table;
    for part in &parts[..parts.len() - 1] {
        let entry = cur
            .entry(part.to_string())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()));
        cur = entry
            .as_table_mut()
            .ok_or_else(|| CliError::Config(format!("override {key:?}: {part} is not a table")))?;
    }
    cur.insert(parts[parts.len() - 1].to_string(), value);
    Ok(())
}
