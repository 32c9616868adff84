//! End-to-end classification pipelines with per-stage timing.
//!
//! * `Linear`: dictionaries learned on the raw samples.
//! * `Lkdl`: Nystrom virtual samples first, then the same linear learner.
//! * `KernelBaseline`: per-class KOMP with kernel MOD on exact kernel
//!   matrices.

use std::time::Instant;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::classify::{
    corrupt_gaussian, corrupt_missing, train_kernel_per_class, train_per_class, ClassDictionaryModel, ClassTrainConfig,
    KernelClassModel,
};
use crate::datasets::LabeledDataset;
use crate::dict_learning::LearnMethod;
use crate::error::{LkdlError, Result};
use crate::kernels::{gram, Kernel};
use crate::lcksvd::{self, LcKsvdConfig, LcKsvdModel, Variant};
use crate::matrix::at_b;
use crate::nystrom::{approximation_error, NystromMap};
use crate::rng;
use crate::sampling::{SamplerSpec, SamplingMethod};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PipelineKind {
    Linear,
    Lkdl,
    KernelBaseline,
}

impl PipelineKind {
    pub fn name(self) -> &'static str {
        match self {
            PipelineKind::Linear => "linear",
            PipelineKind::Lkdl => "lkdl",
            PipelineKind::KernelBaseline => "kernel-baseline",
        }
    }
}

/// Number of landmarks, absolute or as a fraction of the training set.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LandmarkCount {
    Count(usize),
    Fraction(f64),
}

impl LandmarkCount {
    pub fn resolve(self, n: usize) -> Result<usize> {
        match self {
            LandmarkCount::Count(c) if c >= 1 && c <= n => Ok(c),
            LandmarkCount::Fraction(f) if f > 0.0 && f <= 1.0 => Ok(((f * n as f64).round() as usize).clamp(1, n)),
            other => Err(LkdlError::InvalidParameter(format!("invalid landmark count {other:?} for N={n}"))),
        }
    }

    /// `c / N` as reported in result tables.
    pub fn fraction(self, n: usize) -> f64 {
        match self {
            LandmarkCount::Count(c) => c as f64 / n.max(1) as f64,
            LandmarkCount::Fraction(f) => f,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Learner {
    PerClass {
        m_per_class: usize,
        q: usize,
        iterations: usize,
        #[serde(default = "default_method")]
        method: LearnMethod,
    },
    Lcksvd {
        m: usize,
        q: usize,
        alpha: f64,
        beta: f64,
        #[serde(default = "default_variant")]
        variant: Variant,
        #[serde(default = "default_tau2")]
        tau2: f64,
        iterations: usize,
        /// Test-time cardinality; the training one when absent.
        #[serde(default)]
        test_q: Option<usize>,
    },
}

fn default_method() -> LearnMethod {
    LearnMethod::Ksvd
}

fn default_variant() -> Variant {
    Variant::Lc2
}

fn default_tau2() -> f64 {
    lcksvd::DEFAULT_TAU2
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Corruption {
    Gaussian { sigma: f64 },
    Missing { fraction: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineSpec {
    pub kind: PipelineKind,
    pub kernel: Kernel,
    pub sampler: SamplingMethod,
    pub c: LandmarkCount,
    pub k: usize,
    pub learner: Learner,
    #[serde(default)]
    pub corruption: Option<Corruption>,
    /// Rescale corrupted test columns to unit norm.
    #[serde(default = "default_true")]
    pub renormalize_corrupted: bool,
    /// Also report `|K - F^T F|_F / |K|_F` on the training set (`O(N^2)`).
    #[serde(default)]
    pub measure_approx_error: bool,
}

fn default_true() -> bool {
    true
}

/// Wall-clock seconds per stage.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct StageTimes {
    pub preprocess: f64,
    pub train: f64,
    pub test: f64,
}

impl StageTimes {
    pub fn total(&self) -> f64 {
        self.preprocess + self.train + self.test
    }
}

/// One test sample's outcome; `scores` are residuals for class-dictionary
/// models and classifier outputs for LC-KSVD.
#[derive(Debug, Clone, PartialEq)]
pub struct PredictionRow {
    pub true_label: u32,
    pub predicted: u32,
    pub scores: Vec<f64>,
}

#[derive(Debug, Clone)]
pub enum TrainedModel {
    Classes(ClassDictionaryModel),
    Kernel(KernelClassModel),
    Lcksvd(LcKsvdModel),
}

#[derive(Debug, Clone)]
pub struct PipelineRun {
    pub accuracy: f64,
    pub times: StageTimes,
    pub approx_error: Option<f64>,
    pub classes: Vec<u32>,
    pub predictions: Vec<PredictionRow>,
    pub map: Option<NystromMap>,
    pub model: TrainedModel,
}

fn seconds(t: Instant) -> f64 {
    // millisecond resolution, as reported
    (t.elapsed().as_secs_f64() * 1e3).round() / 1e3
}

/// Applies the configured corruption to the test samples.
pub fn corrupt(test: &LabeledDataset, corruption: Option<Corruption>, renormalize: bool, seed: u64) -> Result<LabeledDataset> {
    let samples = match corruption {
        None => return Ok(test.clone()),
        Some(Corruption::Gaussian { sigma }) => corrupt_gaussian(&test.samples, sigma, seed, renormalize)?,
        Some(Corruption::Missing { fraction }) => corrupt_missing(&test.samples, fraction, seed, renormalize)?.0,
    };
    Ok(LabeledDataset {
        samples,
        ..test.clone()
    })
}

fn class_config(learner: &Learner, seed: u64) -> Option<ClassTrainConfig> {
    match *learner {
        Learner::PerClass {
            m_per_class,
            q,
            iterations,
            method,
        } => Some(ClassTrainConfig {
            m_per_class,
            q,
            iterations,
            method,
            seed,
        }),
        Learner::Lcksvd { .. } => None,
    }
}

/// Fits the Nystrom map of an `Lkdl` pipeline (sampler sub-seed 1).
pub fn fit_map(train: &LabeledDataset, spec: &PipelineSpec, seed: u64) -> Result<NystromMap> {
    let c = spec.c.resolve(train.len())?;
    let sampler = SamplerSpec::new(spec.sampler, c, rng::derive_seed(seed, 1));
    NystromMap::fit(&train.samples, &spec.kernel, &sampler, spec.k)
}

/// Trains the configured learner (sub-seed 2). `samples` are virtual
/// samples for `Lkdl` and raw signals otherwise.
pub fn train_model(samples: &DMatrix<f64>, labels: &[u32], spec: &PipelineSpec, seed: u64) -> Result<TrainedModel> {
    let seed = rng::derive_seed(seed, 2);
    if spec.kind == PipelineKind::KernelBaseline {
        let cfg = class_config(&spec.learner, seed).ok_or_else(|| {
            LkdlError::InvalidParameter("the kernel baseline supports only the per-class learner".into())
        })?;
        return Ok(TrainedModel::Kernel(train_kernel_per_class(samples, labels, &spec.kernel, &cfg)?));
    }
    match &spec.learner {
        Learner::PerClass { .. } => Ok(TrainedModel::Classes(train_per_class(
            samples,
            labels,
            &class_config(&spec.learner, seed).expect("per-class learner"),
        )?)),
        Learner::Lcksvd {
            m,
            q,
            alpha,
            beta,
            variant,
            tau2,
            iterations,
            ..
        } => {
            let mut cfg = LcKsvdConfig::new(*m, *q, *alpha, *beta, *iterations, *variant, seed);
            cfg.tau2 = *tau2;
            Ok(TrainedModel::Lcksvd(lcksvd::train(samples, labels, &cfg)?.model))
        }
    }
}

/// Classifies the columns of `samples`. `test_q` overrides the LC-KSVD
/// test cardinality; the model's training one is used otherwise.
pub fn predict_rows(model: &TrainedModel, test_q: Option<usize>, samples: &DMatrix<f64>, truth: &[u32]) -> Result<Vec<PredictionRow>> {
    if samples.ncols() != truth.len() {
        return Err(LkdlError::DimensionMismatch(format!(
            "{} samples but {} labels",
            samples.ncols(),
            truth.len()
        )));
    }
    let from = |p: Vec<crate::classify::Prediction>| {
        p.into_iter()
            .zip(truth)
            .map(|(p, &t)| PredictionRow {
                true_label: t,
                predicted: p.label,
                scores: p.residuals,
            })
            .collect()
    };
    Ok(match model {
        TrainedModel::Classes(m) => from(m.classify_batch(samples)?),
        TrainedModel::Kernel(m) => from(m.classify_batch(samples)?),
        TrainedModel::Lcksvd(m) => m
            .predict_batch(samples, test_q.unwrap_or(m.q))?
            .into_iter()
            .zip(truth)
            .map(|((label, scores), &t)| PredictionRow {
                true_label: t,
                predicted: label,
                scores,
            })
            .collect(),
    })
}

impl TrainedModel {
    pub fn classes(&self) -> Vec<u32> {
        match self {
            TrainedModel::Classes(m) => m.labels(),
            TrainedModel::Kernel(m) => m.labels(),
            TrainedModel::Lcksvd(m) => m.classes.clone(),
        }
    }
}

fn test_q(learner: &Learner) -> Option<usize> {
    match learner {
        Learner::Lcksvd { test_q, .. } => *test_q,
        Learner::PerClass { .. } => None,
    }
}

/// Fraction of rows whose prediction matches the truth.
pub fn accuracy_of(rows: &[PredictionRow]) -> f64 {
    if rows.is_empty() {
        return 0.0;
    }
    rows.iter().filter(|p| p.predicted == p.true_label).count() as f64 / rows.len() as f64
}

/// Runs one pipeline. Sub-seeds: 1 sampler, 2 learner, 3 corruption.
pub fn run_pipeline(train: &LabeledDataset, test: &LabeledDataset, spec: &PipelineSpec, seed: u64) -> Result<PipelineRun> {
    if train.dim() != test.dim() {
        return Err(LkdlError::DimensionMismatch(format!(
            "train dimension {} vs test dimension {}",
            train.dim(),
            test.dim()
        )));
    }
    if spec.kind == PipelineKind::KernelBaseline && matches!(spec.learner, Learner::Lcksvd { .. }) {
        return Err(LkdlError::InvalidParameter(
            "the kernel baseline supports only the per-class learner".into(),
        ));
    }
    let test = corrupt(test, spec.corruption, spec.renormalize_corrupted, rng::derive_seed(seed, 3))?;
    let mut times = StageTimes::default();
    let mut approx_error = None;
    let mut map = None;

    let (train_x, test_x) = match spec.kind {
        PipelineKind::Lkdl => {
            let t = Instant::now();
            let m = fit_map(train, spec, seed)?;
            let f_train = m.transform(&train.samples)?.features;
            let f_test = m.transform(&test.samples)?.features;
            times.preprocess = seconds(t);
            if spec.measure_approx_error {
                let k = gram(&spec.kernel, &train.samples)?;
                approx_error = Some(approximation_error(&k.entries, &at_b(&f_train, &f_train))?);
            }
            map = Some(m);
            (f_train, f_test)
        }
        PipelineKind::Linear | PipelineKind::KernelBaseline => (train.samples.clone(), test.samples),
    };
    let t = Instant::now();
    let model = train_model(&train_x, &train.labels, spec, seed)?;
    times.train = seconds(t);
    let t = Instant::now();
    let predictions = predict_rows(&model, test_q(&spec.learner), &test_x, &test.labels)?;
    times.test = seconds(t);
    Ok(PipelineRun {
        accuracy: accuracy_of(&predictions),
        times,
        approx_error,
        classes: model.classes(),
        predictions,
        map,
        model,
    })
}
