//! Subcommand implementations. Each writes its outputs and a
//! `manifest.json` into the output directory.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use chrono::Utc;
use serde::Serialize;
use serde_json::json;

use lkdl::container::Features;
use lkdl::datasets::{subsample_fraction, LabeledDataset};
use lkdl::kernels::gram;
use lkdl::lcksvd::atom_abs_sums;
use lkdl::matrix::at_b;
use lkdl::nystrom::{approximation_error, svd_truncation_errors};
use lkdl::pipeline::{
    self, corrupt, fit_map, predict_rows, run_pipeline, train_model, Corruption, LandmarkCount, Learner, PipelineKind,
    PipelineRun, TrainedModel,
};
use lkdl::rng::derive_seed;
use lkdl::sampling::{SamplerSpec, SamplingMethod};
use lkdl::sparse_coding::omp_batch;
use lkdl::{NystromMap, Persist, PipelineSpec};

use crate::config::{ExperimentConfig, SweepAxis};
use crate::error::{CliError, Result, StageExt};
use crate::report::{
    write_experiment_csv, write_predictions_csv, write_sweep_csv, RepeatRow, RunManifest, Summary,
};

pub const MAP_FILE: &str = "map.lkdl";
pub const MODEL_FILE: &str = "model.lkdl";
pub const TRAIN_FEATURES_FILE: &str = "train_features.lkdl";
pub const TEST_FEATURES_FILE: &str = "test_features.lkdl";
pub const PREDICTIONS_FILE: &str = "predictions.csv";
pub const EXPERIMENT_FILE: &str = "experiment.csv";
pub const SWEEP_FILE: &str = "sweep.csv";
pub const APPROX_FILE: &str = "approx_error.csv";
pub const ATOM_SUMS_FILE: &str = "atom_abs_sums.csv";

fn prepare(out: &Path) -> Result<()> {
    fs::create_dir_all(out)?;
    Ok(())
}

/// Seed of repeat `r`; repeat streams are split off the master seed.
pub fn repeat_seed(seed: u64, r: usize) -> u64 {
    derive_seed(seed, r as u64)
}

fn score_prefix(model: &TrainedModel) -> &'static str {
    match model {
        TrainedModel::Lcksvd(_) => "score",
        _ => "residual",
    }
}

fn corrupted_test(cfg: &ExperimentConfig, test: &LabeledDataset, seed: u64) -> Result<LabeledDataset> {
    let p = &cfg.pipeline;
    corrupt(test, p.corruption, p.renormalize_corrupted, derive_seed(seed, 3)).stage("corrupt")
}

#[derive(Debug, Clone, Serialize)]
pub struct PreprocessOutput {
    pub map: PathBuf,
    pub train_features: PathBuf,
    pub test_features: PathBuf,
    pub k: usize,
    pub c: usize,
    pub n_train: usize,
    pub n_test: usize,
    pub seconds: f64,
}

/// Fits the Nystrom map and writes virtual train and test samples.
pub fn preprocess(cfg: &ExperimentConfig, out: &Path) -> Result<PreprocessOutput> {
    prepare(out)?;
    let started = Utc::now();
    let (train, test) = cfg.load_data()?;
    let t = Instant::now();
    let map = fit_map(&train, &cfg.pipeline, cfg.seed).stage("fit map")?;
    let f_train = map.transform(&train.samples).stage("map train")?.features;
    let f_test = map.transform(&test.samples).stage("map test")?.features;
    let seconds = t.elapsed().as_secs_f64();
    let res = PreprocessOutput {
        map: out.join(MAP_FILE),
        train_features: out.join(TRAIN_FEATURES_FILE),
        test_features: out.join(TEST_FEATURES_FILE),
        k: map.k(),
        c: map.c(),
        n_train: train.len(),
        n_test: test.len(),
        seconds,
    };
    map.save(&res.map)?;
    Features {
        features: f_train,
        labels: train.labels,
    }
    .save(&res.train_features)?;
    Features {
        features: f_test,
        labels: test.labels,
    }
    .save(&res.test_features)?;
    let mut m = RunManifest::new("preprocess", cfg.seed, cfg.echo(), started);
    m.outputs = vec![res.map.clone(), res.train_features.clone(), res.test_features.clone()];
    m.results = serde_json::to_value(&res)?;
    m.write(out)?;
    Ok(res)
}

#[derive(Debug, Clone, Serialize)]
pub struct TrainOutput {
    pub model: PathBuf,
    pub map: Option<PathBuf>,
    pub classes: Vec<u32>,
    pub t_preprocess: f64,
    pub t_train: f64,
}

/// Trains the configured model. With `features`, the learner runs on a
/// saved virtual-sample file instead of mapping the dataset again.
pub fn train(cfg: &ExperimentConfig, out: &Path, features: Option<&Path>) -> Result<TrainOutput> {
    prepare(out)?;
    let started = Utc::now();
    let spec = &cfg.pipeline;
    let mut map_path = None;
    let mut t_preprocess = 0.0;
    let (x, labels) = match features {
        Some(path) => {
            if spec.kind == PipelineKind::KernelBaseline {
                return Err(CliError::Config("the kernel baseline trains on raw samples, not features".into()));
            }
            let f = Features::load(path)?;
            (f.features, f.labels)
        }
        None => {
            let (train, _) = cfg.load_data()?;
            if spec.kind == PipelineKind::Lkdl {
                let t = Instant::now();
                let map = fit_map(&train, spec, cfg.seed).stage("fit map")?;
                let f = map.transform(&train.samples).stage("map train")?.features;
                t_preprocess = t.elapsed().as_secs_f64();
                let p = out.join(MAP_FILE);
                map.save(&p)?;
                map_path = Some(p);
                (f, train.labels)
            } else {
                (train.samples, train.labels)
            }
        }
    };
    let t = Instant::now();
    let model = train_model(&x, &labels, spec, cfg.seed).stage("train")?;
    let t_train = t.elapsed().as_secs_f64();
    let res = TrainOutput {
        model: out.join(MODEL_FILE),
        map: map_path,
        classes: model.classes(),
        t_preprocess,
        t_train,
    };
    model.save(&res.model)?;
    let mut m = RunManifest::new("train", cfg.seed, cfg.echo(), started);
    m.outputs = std::iter::once(res.model.clone()).chain(res.map.clone()).collect();
    m.results = serde_json::to_value(&res)?;
    m.write(out)?;
    Ok(res)
}

/// Where `classify` reads its test samples from.
#[derive(Debug, Clone)]
pub enum TestInput {
    /// The config's test split, corrupted as configured, mapped through
    /// the Nystrom map when one is given.
    Config {
        cfg: Box<ExperimentConfig>,
        map: Option<PathBuf>,
    },
    /// A saved virtual-sample file.
    Features(PathBuf),
}

#[derive(Debug, Clone, Serialize)]
pub struct ClassifyOutput {
    pub predictions: PathBuf,
    pub accuracy: f64,
    pub n: usize,
}

pub fn classify(model_path: &Path, input: &TestInput, test_q: Option<usize>, out: &Path) -> Result<ClassifyOutput> {
    prepare(out)?;
    let started = Utc::now();
    let model = TrainedModel::load(model_path)?;
    let (x, labels, seed, echo) = match input {
        TestInput::Features(p) => {
            let f = Features::load(p)?;
            (f.features, f.labels, 0, json!({ "features": p }))
        }
        TestInput::Config { cfg, map } => {
            let (_, test) = cfg.load_data()?;
            let test = corrupted_test(cfg, &test, cfg.seed)?;
            let x = match map {
                Some(p) => NystromMap::load(p)?.transform(&test.samples).stage("map test")?.features,
                None => test.samples,
            };
            (x, test.labels, cfg.seed, cfg.echo())
        }
    };
    let rows = predict_rows(&model, test_q, &x, &labels).stage("classify")?;
    let res = ClassifyOutput {
        predictions: out.join(PREDICTIONS_FILE),
        accuracy: pipeline::accuracy_of(&rows),
        n: rows.len(),
    };
    write_predictions_csv(&res.predictions, &rows, score_prefix(&model))?;
    let mut m = RunManifest::new("classify", seed, json!({ "model": model_path, "input": echo }), started);
    m.outputs = vec![res.predictions.clone()];
    m.results = serde_json::to_value(&res)?;
    m.write(out)?;
    Ok(res)
}

#[derive(Debug, Clone, Serialize)]
pub struct ExperimentReport {
    pub rows: Vec<RepeatRow>,
    pub summary: Option<Summary>,
    pub failures: Vec<String>,
}

/// Runs `cfg.repeats` repeats; a failing repeat is recorded and skipped.
fn run_repeats(
    cfg: &ExperimentConfig,
    spec: &PipelineSpec,
    train: &LabeledDataset,
    test: &LabeledDataset,
    subsample: Option<f64>,
    mut keep: impl FnMut(usize, &PipelineRun),
) -> (Vec<RepeatRow>, Vec<String>) {
    let mut rows = Vec::new();
    let mut failures = Vec::new();
    for r in 0..cfg.repeats {
        let seed = repeat_seed(cfg.seed, r);
        let run = subsample
            .map(|f| subsample_fraction(train, f, derive_seed(seed, 4)))
            .transpose()
            .and_then(|sub| {
                let tr = sub.as_ref().unwrap_or(train);
                run_pipeline(tr, test, spec, seed).map(|run| (tr.len(), run))
            });
        match run {
            Ok((n, run)) => {
                rows.push(RepeatRow::new(spec, n, r, &run, cfg.record_timings));
                keep(r, &run);
            }
            Err(e) => {
                log::warn!("repeat {r} failed: {e}");
                failures.push(format!("repeat {r}: {e}"));
            }
        }
    }
    (rows, failures)
}

pub fn experiment(cfg: &ExperimentConfig, out: &Path) -> Result<ExperimentReport> {
    prepare(out)?;
    let started = Utc::now();
    let (train, test) = cfg.load_data()?;
    let mut first: Option<PipelineRun> = None;
    let (rows, failures) = run_repeats(cfg, &cfg.pipeline, &train, &test, None, |_, run| {
        if first.is_none() {
            first = Some(run.clone());
        }
    });
    let csv_path = out.join(EXPERIMENT_FILE);
    write_experiment_csv(&csv_path, &rows)?;
    let mut outputs = vec![csv_path];
    if let Some(run) = &first {
        let p = out.join(PREDICTIONS_FILE);
        write_predictions_csv(&p, &run.predictions, score_prefix(&run.model))?;
        outputs.push(p);
    }
    let report = ExperimentReport {
        summary: Summary::of(&rows),
        rows,
        failures,
    };
    let mut m = RunManifest::new("experiment", cfg.seed, cfg.echo(), started);
    m.outputs = outputs;
    m.results = json!({ "summary": report.summary });
    m.failures = report.failures.clone();
    m.write(out)?;
    if report.rows.is_empty() {
        return Err(CliError::Config(format!("every repeat failed: {}", report.failures.join("; "))));
    }
    Ok(report)
}

#[derive(Debug, Clone, Serialize)]
pub struct SweepPoint {
    pub value: f64,
    pub summary: Option<Summary>,
}

#[derive(Debug, Clone, Serialize)]
pub struct SweepReport {
    pub axis: &'static str,
    pub rows: Vec<(f64, RepeatRow)>,
    pub points: Vec<SweepPoint>,
    pub failures: Vec<String>,
}

/// The configuration at one sweep value, plus the train fraction to
/// subsample when the axis is `train_fraction`.
pub fn sweep_spec(base: &PipelineSpec, axis: SweepAxis, value: f64) -> Result<(PipelineSpec, Option<f64>)> {
    let mut spec = base.clone();
    let mut subsample = None;
    match axis {
        SweepAxis::COverN => {
            if spec.kind != PipelineKind::Lkdl {
                return Err(CliError::Config("a c_over_N sweep needs the lkdl pipeline".into()));
            }
            if !(value > 0.0 && value <= 1.0) {
                return Err(CliError::Config(format!("c_over_N value {value} outside (0, 1]")));
            }
            spec.c = LandmarkCount::Fraction(value);
        }
        SweepAxis::NoiseSigma => spec.corruption = Some(Corruption::Gaussian { sigma: value }),
        SweepAxis::MissingFraction => spec.corruption = Some(Corruption::Missing { fraction: value }),
        SweepAxis::TrainFraction => {
            if !(value > 0.0 && value <= 1.0) {
                return Err(CliError::Config(format!("train_fraction value {value} outside (0, 1]")));
            }
            subsample = Some(value);
        }
    }
    Ok((spec, subsample))
}

pub fn sweep(cfg: &ExperimentConfig, axis: SweepAxis, values: &[f64], out: &Path) -> Result<SweepReport> {
    if values.is_empty() {
        return Err(CliError::Config("sweep needs at least one value".into()));
    }
    prepare(out)?;
    let started = Utc::now();
    let (train, test) = cfg.load_data()?;
    let mut report = SweepReport {
        axis: axis.name(),
        rows: Vec::new(),
        points: Vec::new(),
        failures: Vec::new(),
    };
    for &v in values {
        let (spec, subsample) = sweep_spec(&cfg.pipeline, axis, v)?;
        let (rows, failures) = run_repeats(cfg, &spec, &train, &test, subsample, |_, _| {});
        report.points.push(SweepPoint {
            value: v,
            summary: Summary::of(&rows),
        });
        report.rows.extend(rows.into_iter().map(|r| (v, r)));
        report.failures.extend(failures.into_iter().map(|f| format!("{}={v}: {f}", axis.name())));
    }
    let path = out.join(SWEEP_FILE);
    write_sweep_csv(&path, axis.name(), &report.rows)?;
    let mut m = RunManifest::new("sweep", cfg.seed, cfg.echo(), started);
    m.outputs = vec![path];
    m.results = json!({ "axis": report.axis, "points": report.points });
    m.failures = report.failures.clone();
    m.write(out)?;
    Ok(report)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ApproxRow {
    pub sampler: &'static str,
    pub c_over_n: f64,
    pub c: usize,
    pub k: usize,
    pub repeat: usize,
    pub error: f64,
    pub svd_bound: f64,
}

/// Normalized Nystrom error on the training set for each sampler and
/// landmark fraction, next to the rank-`c` SVD lower bound. `rank`
/// defaults to `k = c`.
pub fn approx_error(
    cfg: &ExperimentConfig,
    samplers: &[SamplingMethod],
    fractions: &[f64],
    rank: Option<usize>,
    out: &Path,
) -> Result<Vec<ApproxRow>> {
    if samplers.is_empty() || fractions.is_empty() {
        return Err(CliError::Config("approx-error needs at least one sampler and one fraction".into()));
    }
    prepare(out)?;
    let started = Utc::now();
    let (train, _) = cfg.load_data()?;
    let kernel = cfg.pipeline.kernel;
    let n = train.len();
    let k_full = gram(&kernel, &train.samples).stage("kernel matrix")?;
    let cs: Vec<usize> = fractions
        .iter()
        .map(|&f| LandmarkCount::Fraction(f).resolve(n))
        .collect::<lkdl::Result<_>>()
        .stage("landmark count")?;
    let bounds = svd_truncation_errors(&k_full.entries, &cs).stage("svd bound")?;
    let mut rows = Vec::new();
    for &method in samplers {
        for ((&f, &c), &bound) in fractions.iter().zip(&cs).zip(&bounds) {
            let k = rank.map_or(c, |r| r.min(c));
            for r in 0..cfg.repeats {
                let sampler = SamplerSpec::new(method, c, derive_seed(repeat_seed(cfg.seed, r), 1));
                let map = NystromMap::fit(&train.samples, &kernel, &sampler, k).stage("fit map")?;
                let f_train = map.transform(&train.samples).stage("map train")?.features;
                let error = approximation_error(&k_full.entries, &at_b(&f_train, &f_train)).stage("error")?;
                rows.push(ApproxRow {
                    sampler: method.name(),
                    c_over_n: f,
                    c,
                    k,
                    repeat: r,
                    error,
                    svd_bound: bound,
                });
            }
        }
    }
    let path = out.join(APPROX_FILE);
    let mut w = csv::Writer::from_path(&path)?;
    w.write_record(["sampler", "c_over_N", "c", "k", "repeat", "error", "svd_bound"])?;
    for r in &rows {
        w.write_record([
            r.sampler.to_string(),
            format!("{}", r.c_over_n),
            r.c.to_string(),
            r.k.to_string(),
            r.repeat.to_string(),
            format!("{:.9e}", r.error),
            format!("{:.9e}", r.svd_bound),
        ])?;
    }
    w.flush()?;
    let mut m = RunManifest::new("approx-error", cfg.seed, cfg.echo(), started);
    m.outputs = vec![path];
    m.results = serde_json::to_value(&rows)?;
    m.write(out)?;
    Ok(rows)
}

#[derive(Debug, Clone, Serialize)]
pub struct LcKsvdOutput {
    pub accuracy: f64,
    pub model: PathBuf,
    pub predictions: PathBuf,
    pub atom_sums: PathBuf,
}

/// Trains and evaluates LC-KSVD (on raw or virtual samples), then writes
/// the per-atom sums of absolute test coefficients for every test class.
pub fn lcksvd(cfg: &ExperimentConfig, out: &Path) -> Result<LcKsvdOutput> {
    let test_q = match cfg.pipeline.learner {
        Learner::Lcksvd { test_q, .. } => test_q,
        Learner::PerClass { .. } => {
            return Err(CliError::Config("the lcksvd command needs learner.kind = \"lcksvd\"".into()));
        }
    };
    if cfg.pipeline.kind == PipelineKind::KernelBaseline {
        return Err(CliError::Config("LC-KSVD runs on the linear or lkdl pipeline".into()));
    }
    prepare(out)?;
    let started = Utc::now();
    let (train, test) = cfg.load_data()?;
    let run = run_pipeline(&train, &test, &cfg.pipeline, cfg.seed).stage("lcksvd pipeline")?;
    let TrainedModel::Lcksvd(model) = &run.model else {
        unreachable!("an lcksvd learner yields an LC-KSVD model");
    };
    let res = LcKsvdOutput {
        accuracy: run.accuracy,
        model: out.join(MODEL_FILE),
        predictions: out.join(PREDICTIONS_FILE),
        atom_sums: out.join(ATOM_SUMS_FILE),
    };
    model.save(&res.model)?;
    let mut outputs = vec![res.model.clone(), res.predictions.clone(), res.atom_sums.clone()];
    if let Some(map) = &run.map {
        let p = out.join(MAP_FILE);
        map.save(&p)?;
        outputs.push(p);
    }
    write_predictions_csv(&res.predictions, &run.predictions, "score")?;

    let test = corrupted_test(cfg, &test, cfg.seed)?;
    let x = match &run.map {
        Some(map) => map.transform(&test.samples).stage("map test")?.features,
        None => test.samples.clone(),
    };
    let classes = test.classes();
    let mut columns = Vec::new();
    for &label in &classes {
        let idx = test.class_indices(label);
        let codes = omp_batch(&model.dictionary, &x.select_columns(&idx), test_q.unwrap_or(model.q), 0.0)
            .stage("code test samples")?;
        columns.push(atom_abs_sums(&codes));
    }
    let mut w = csv::Writer::from_path(&res.atom_sums)?;
    let mut header = vec!["atom".to_string(), "atom_class".into()];
    header.extend(classes.iter().map(|l| format!("class_{l}")));
    w.write_record(&header)?;
    for j in 0..model.dictionary.len() {
        let mut rec = vec![(j + 1).to_string(), model.atom_class[j].to_string()];
        rec.extend(columns.iter().map(|c| format!("{:.9e}", c[j])));
        w.write_record(&rec)?;
    }
    w.flush()?;

    let mut m = RunManifest::new("lcksvd", cfg.seed, cfg.echo(), started);
    m.outputs = outputs;
    m.results = serde_json::to_value(&res)?;
    m.write(out)?;
    Ok(res)
}
