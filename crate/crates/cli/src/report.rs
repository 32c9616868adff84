//! CSV and JSON outputs.

use std::fs;
use std::path::{Path, PathBuf};

use chrono::{DateTime, SecondsFormat, Utc};
use serde::Serialize;

use lkdl::pipeline::{PipelineKind, PipelineRun, PipelineSpec, PredictionRow};

use crate::error::Result;

pub const EXPERIMENT_HEADER: [&str; 10] = [
    "pipeline",
    "kernel",
    "sampler",
    "c_over_N",
    "k",
    "repeat",
    "accuracy",
    "t_preprocess",
    "t_train",
    "t_test",
];

/// One repeat of one configuration.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RepeatRow {
    pub pipeline: String,
    pub kernel: String,
    pub sampler: String,
    pub c_over_n: f64,
    pub k: usize,
    pub repeat: usize,
    pub accuracy: f64,
    pub t_preprocess: f64,
    pub t_train: f64,
    pub t_test: f64,
    pub approx_error: Option<f64>,
}

impl RepeatRow {
    pub fn new(spec: &PipelineSpec, n_train: usize, repeat: usize, run: &PipelineRun, timings: bool) -> Self {
        let lkdl = spec.kind == PipelineKind::Lkdl;
        let t = if timings { run.times } else { Default::default() };
        Self {
            pipeline: spec.kind.name().to_string(),
            kernel: if spec.kind == PipelineKind::Linear { "linear".into() } else { spec.kernel.to_string() },
            sampler: if lkdl { spec.sampler.name().into() } else { "none".into() },
            c_over_n: if lkdl { spec.c.fraction(n_train) } else { 0.0 },
            k: if lkdl { spec.k } else { 0 },
            repeat,
            accuracy: run.accuracy,
            t_preprocess: t.preprocess,
            t_train: t.train,
            t_test: t.test,
            approx_error: run.approx_error,
        }
    }

    fn fields(&self) -> Vec<String> {
        vec![
            self.pipeline.clone(),
            self.kernel.clone(),
            self.sampler.clone(),
            format!("{}", self.c_over_n),
            self.k.to_string(),
            self.repeat.to_string(),
            format!("{:.6}", self.accuracy),
            format!("{:.3}", self.t_preprocess),
            format!("{:.3}", self.t_train),
            format!("{:.3}", self.t_test),
        ]
    }
}

pub fn write_experiment_csv(path: &Path, rows: &[RepeatRow]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(EXPERIMENT_HEADER)?;
    for r in rows {
        w.write_record(r.fields())?;
    }
    w.flush()?;
    Ok(())
}

/// Experiment columns with the sweep axis prepended and the approximation
/// error appended (empty when not measured).
pub fn write_sweep_csv(path: &Path, axis: &str, rows: &[(f64, RepeatRow)]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    let mut header = vec![axis];
    header.extend(EXPERIMENT_HEADER);
    header.push("approx_error");
    w.write_record(&header)?;
    for (v, r) in rows {
        let mut rec = vec![format!("{v}")];
        rec.extend(r.fields());
        rec.push(r.approx_error.map(|e| format!("{e:.6e}")).unwrap_or_default());
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

/// `sample_index,true_label,predicted_label,<prefix>_1..<prefix>_L`.
pub fn write_predictions_csv(path: &Path, rows: &[PredictionRow], score_prefix: &str) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    let l = rows.first().map_or(0, |r| r.scores.len());
    let mut header = vec!["sample_index".to_string(), "true_label".into(), "predicted_label".into()];
    header.extend((1..=l).map(|i| format!("{score_prefix}_{i}")));
    w.write_record(&header)?;
    for (i, r) in rows.iter().enumerate() {
        let mut rec = vec![i.to_string(), r.true_label.to_string(), r.predicted.to_string()];
        rec.extend(r.scores.iter().map(|s| format!("{s:.9e}")));
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MeanStd {
    pub mean: f64,
    pub std: f64,
}

impl MeanStd {
    /// Population standard deviation, so a single repeat has `std = 0`.
    pub fn of(values: &[f64]) -> Option<Self> {
        if values.is_empty() {
            return None;
        }
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
        Some(Self { mean, std: var.sqrt() })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Summary {
    pub repeats: usize,
    pub accuracy: MeanStd,
    pub t_preprocess: MeanStd,
    pub t_train: MeanStd,
    pub t_test: MeanStd,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub approx_error: Option<MeanStd>,
}

impl Summary {
    pub fn of(rows: &[RepeatRow]) -> Option<Self> {
        let pick = |f: fn(&RepeatRow) -> f64| MeanStd::of(&rows.iter().map(f).collect::<Vec<_>>());
        let errs: Vec<f64> = rows.iter().filter_map(|r| r.approx_error).collect();
        Some(Self {
            repeats: rows.len(),
            accuracy: pick(|r| r.accuracy)?,
            t_preprocess: pick(|r| r.t_preprocess)?,
            t_train: pick(|r| r.t_train)?,
            t_test: pick(|r| r.t_test)?,
            approx_error: MeanStd::of(&errs),
        })
    }
}

/// Machine-readable record of one CLI invocation.
#[derive(Debug, Serialize)]
pub struct RunManifest {
    pub command: String,
    pub library: &'static str,
    pub library_version: &'static str,
    pub cli_version: &'static str,
    pub rng: &'static str,
    pub seed: u64,
    pub started: String,
    pub finished: String,
    pub config: serde_json::Value,
    pub outputs: Vec<PathBuf>,
    pub results: serde_json::Value,
    pub failures: Vec<String>,
}

pub fn timestamp(t: DateTime<Utc>) -> String {
    t.to_rfc3339_opts(SecondsFormat::Millis, true)
}

impl RunManifest {
    pub fn new(command: &str, seed: u64, config: serde_json::Value, started: DateTime<Utc>) -> Self {
        Self {
            command: command.to_string(),
            library: "lkdl",
            library_version: lkdl::VERSION,
            cli_version: env!("CARGO_PKG_VERSION"),
            rng: lkdl::rng::RNG_ALGORITHM,
            seed,
            started: timestamp(started),
            finished: String::new(),
            config,
            outputs: Vec::new(),
            results: serde_json::Value::Null,
            failures: Vec::new(),
        }
    }

    pub fn write(mut self, dir: &Path) -> Result<PathBuf> {
        self.finished = timestamp(Utc::now());
        let path = dir.join("manifest.json");
        fs::write(&path, serde_json::to_string_pretty(&self)?)?;
        Ok(path)
    }
}
