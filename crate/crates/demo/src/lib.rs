//! Three interactive operations for the static page in `www/`. Each takes
//! plain numbers and returns a JSON string, so the same code is exercised
//! by native tests and by the wasm build.

use serde::Serialize;

use lkdl::datasets::{normalize_unit, synth_circles, synth_gaussian_classes};
use lkdl::dict_learning::LearnMethod;
use lkdl::eigen;
use lkdl::kernels::gram;
use lkdl::matrix::at_b;
use lkdl::nystrom::{approximation_error, svd_truncation_errors};
use lkdl::pipeline::{accuracy_of, fit_map, predict_rows, train_model, LandmarkCount, Learner, PipelineKind, PipelineSpec};
use lkdl::sampling::{sample, SamplerSpec};
use lkdl::{Kernel, LabeledDataset, NystromMap, SamplingMethod};

#[cfg(target_arch = "wasm32")]
mod wasm;

/// `kind` is `linear`, `poly` (param = degree) or `gaussian` (param = sigma).
pub fn parse_kernel(kind: &str, param: f64) -> Result<Kernel, String> {
    let k = match kind {
        "linear" => Kernel::Linear,
        "poly" | "polynomial" => Kernel::polynomial(param.round().max(1.0) as u32),
        "gaussian" => Kernel::gaussian(param),
        other => return Err(format!("unknown kernel {other:?}")),
    };
    k.validate().map_err(|e| e.to_string())?;
    Ok(k)
}

pub fn parse_sampler(name: &str) -> Result<SamplingMethod, String> {
    SamplingMethod::ALL
        .into_iter()
        .find(|m| m.name() == name)
        .ok_or_else(|| format!("unknown sampler {name:?}"))
}

fn to_json<T: Serialize>(r: Result<T, String>) -> String {
    match r {
        Ok(v) => serde_json::to_string(&v).expect("serializable"),
        Err(e) => serde_json::json!({ "error": e }).to_string(),
    }
}

fn mixture(n: usize, seed: u64) -> Result<LabeledDataset, String> {
    let classes = 4;
    let ds = synth_gaussian_classes(8, classes, n.div_ceil(classes), 0.3, seed).map_err(|e| e.to_string())?;
    normalize_unit(&ds).map_err(|e| e.to_string())
}

#[derive(Debug, Serialize)]
pub struct ErrorCurve {
    pub fractions: Vec<f64>,
    pub errors: Vec<f64>,
    pub svd: Vec<f64>,
}

/// Normalized Nystrom error against `c/N` for one sampler on a Gaussian
/// mixture, with the rank-`c` SVD floor.
pub fn error_curve(kernel: Kernel, sampler: SamplingMethod, n: usize, seed: u64) -> Result<ErrorCurve, String> {
    let ds = mixture(n.clamp(20, 600), seed)?;
    let x = &ds.samples;
    let n = x.ncols();
    let k = gram(&kernel, x).map_err(|e| e.to_string())?;
    let fractions = vec![0.02, 0.05, 0.1, 0.2, 0.3, 0.5];
    let cs: Vec<usize> = fractions.iter().map(|f| ((f * n as f64).round() as usize).max(1)).collect();
    let svd = svd_truncation_errors(&k.entries, &cs).map_err(|e| e.to_string())?;
    let errors = cs
        .iter()
        .map(|&c| {
            let map = NystromMap::fit(x, &kernel, &SamplerSpec::new(sampler, c, seed), c).map_err(|e| e.to_string())?;
            let f = map.transform(x).map_err(|e| e.to_string())?.features;
            approximation_error(&k.entries, &at_b(&f, &f)).map_err(|e| e.to_string())
        })
        .collect::<Result<_, _>>()?;
    Ok(ErrorCurve { fractions, errors, svd })
}

pub fn nystrom_error_curve(kernel: &str, param: f64, sampler: &str, n: usize, seed: u64) -> String {
    to_json(parse_kernel(kernel, param).and_then(|k| error_curve(k, parse_sampler(sampler)?, n, seed)))
}

#[derive(Debug, Serialize)]
pub struct DecisionMap {
    pub grid: usize,
    pub extent: f64,
    /// Row-major predicted labels over the grid, top row first.
    pub labels: Vec<u32>,
    pub train: Vec<[f64; 3]>,
    pub landmarks: Vec<[f64; 2]>,
    pub accuracy_lkdl: f64,
    pub accuracy_linear: f64,
}

pub fn circles_spec(kind: PipelineKind, sigma: f64, c_frac: f64, k: usize) -> PipelineSpec {
    PipelineSpec {
        kind,
        kernel: Kernel::gaussian(sigma),
        sampler: SamplingMethod::Uniform,
        c: LandmarkCount::Fraction(c_frac),
        k,
        learner: Learner::PerClass {
            m_per_class: 10,
            q: 3,
            iterations: 5,
            method: LearnMethod::Ksvd,
        },
        corruption: None,
        renormalize_corrupted: false,
        measure_approx_error: false,
    }
}

/// Trains LKDL on two noisy circles and labels every cell of a square grid.
pub fn decision_map(sigma: f64, c_frac: f64, k: usize, noise: f64, grid: usize, seed: u64) -> Result<DecisionMap, String> {
    let err = |e: lkdl::LkdlError| e.to_string();
    let grid = grid.clamp(8, 160);
    let train = synth_circles(150, &[1.0, 2.0], noise, seed).map_err(err)?;
    let test = synth_circles(150, &[1.0, 2.0], noise, seed + 1).map_err(err)?;
    let c = LandmarkCount::Fraction(c_frac).resolve(train.len()).map_err(err)?;
    let k = k.clamp(1, c);
    // run_pipeline times its stages and std::time::Instant panics on wasm32,
    // so the stages are driven directly here.
    let spec = circles_spec(PipelineKind::Lkdl, sigma, c_frac, k);
    let map = fit_map(&train, &spec, seed).map_err(err)?;
    let f_train = map.transform(&train.samples).map_err(err)?.features;
    let f_test = map.transform(&test.samples).map_err(err)?.features;
    let model = train_model(&f_train, &train.labels, &spec, seed).map_err(err)?;
    let accuracy_lkdl = accuracy_of(&predict_rows(&model, None, &f_test, &test.labels).map_err(err)?);
    let linear_spec = circles_spec(PipelineKind::Linear, sigma, c_frac, k);
    let linear = train_model(&train.samples, &train.labels, &linear_spec, seed).map_err(err)?;
    let accuracy_linear = accuracy_of(&predict_rows(&linear, None, &test.samples, &test.labels).map_err(err)?);

    let extent = 2.6;
    let step = 2.0 * extent / (grid - 1) as f64;
    let points = nalgebra::DMatrix::from_fn(2, grid * grid, |d, idx| {
        let (row, col) = (idx / grid, idx % grid);
        if d == 0 {
            -extent + col as f64 * step
        } else {
            extent - row as f64 * step
        }
    });
    let f = map.transform(&points).map_err(err)?.features;
    let labels = predict_rows(&model, None, &f, &vec![0; grid * grid])
        .map_err(err)?
        .into_iter()
        .map(|r| r.predicted)
        .collect();
    let landmarks = map.landmarks.column_iter().map(|c| [c[0], c[1]]).collect();
    let train_pts = (0..train.len())
        .map(|i| [train.samples[(0, i)], train.samples[(1, i)], train.labels[i] as f64])
        .collect();
    Ok(DecisionMap {
        grid,
        extent,
        labels,
        train: train_pts,
        landmarks,
        accuracy_lkdl,
        accuracy_linear,
    })
}

pub fn circles_decision_map(sigma: f64, c_frac: f64, k: usize, noise: f64, grid: usize, seed: u64) -> String {
    to_json(decision_map(sigma, c_frac, k, noise, grid, seed))
}

#[derive(Debug, Serialize)]
pub struct Spectrum {
    pub eigenvalues: Vec<f64>,
    /// Fraction of the trace captured by the leading `i + 1` eigenvalues.
    pub captured: Vec<f64>,
}

/// Eigenvalues of the landmark kernel matrix `W`, largest first.
pub fn spectrum(kernel: Kernel, sampler: SamplingMethod, c: usize, seed: u64) -> Result<Spectrum, String> {
    let ds = mixture(400, seed)?;
    let c = c.clamp(2, ds.len());
    let set = sample(&SamplerSpec::new(sampler, c, seed), &kernel, &ds.samples).map_err(|e| e.to_string())?;
    let w = gram(&kernel, &set.points).map_err(|e| e.to_string())?;
    let eigenvalues: Vec<f64> = eigen::full(&w.entries).values.iter().map(|v| v.max(0.0)).collect();
    let total: f64 = eigenvalues.iter().sum();
    let mut acc = 0.0;
    let captured = eigenvalues
        .iter()
        .map(|v| {
            acc += v;
            if total > 0.0 { acc / total } else { 0.0 }
        })
        .collect();
    Ok(Spectrum { eigenvalues, captured })
}

pub fn kernel_spectrum(kernel: &str, param: f64, sampler: &str, c: usize, seed: u64) -> String {
    to_json(parse_kernel(kernel, param).and_then(|k| spectrum(k, parse_sampler(sampler)?, c, seed)))
}
