//! Landmark selection for the Nystrom approximation.
//!
//! Five strategies: uniform, diagonal, column-norm, k-means centers and
//! coreset (representation error against the data mean). Everything is
//! driven by an explicit seed so a `(method, c, seed, data)` tuple always
//! yields the same landmarks.

use nalgebra::DMatrix;
use rand::seq::SliceRandom;
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::error::{LkdlError, Result};
use crate::kernels::{for_each_block, Kernel, DEFAULT_MEMORY_BUDGET};
use crate::matrix::{col, col_mut, select_columns, SampleMatrix};
use crate::rng::{self, Rng};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SamplingMethod {
    Uniform,
    Diagonal,
    ColumnNorm,
    Kmeans,
    Coreset,
}

impl SamplingMethod {
    pub const ALL: [SamplingMethod; 5] = [
        SamplingMethod::Uniform,
        SamplingMethod::Diagonal,
        SamplingMethod::ColumnNorm,
        SamplingMethod::Kmeans,
        SamplingMethod::Coreset,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            SamplingMethod::Uniform => "uniform",
            SamplingMethod::Diagonal => "diagonal",
            SamplingMethod::ColumnNorm => "column-norm",
            SamplingMethod::Kmeans => "kmeans",
            SamplingMethod::Coreset => "coreset",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SamplerSpec {
    pub method: SamplingMethod,
    pub c: usize,
    pub seed: u64,
    pub kmeans_max_iters: usize,
}

impl SamplerSpec {
    pub fn new(method: SamplingMethod, c: usize, seed: u64) -> Self {
        Self {
            method,
            c,
            seed,
            kmeans_max_iters: 100,
        }
    }
}

/// The reduced set `X_R` used to build the Nystrom blocks.
#[derive(Debug, Clone, PartialEq)]
pub struct LandmarkSet {
    pub points: SampleMatrix,
    /// Column indices into the source data; `None` for synthesized k-means centers.
    pub source_indices: Option<Vec<usize>>,
    /// Set when coreset weights were all zero and uniform sampling was used instead.
    pub fell_back_to_uniform: bool,
}

impl LandmarkSet {
    fn from_indices(x: &SampleMatrix, indices: Vec<usize>) -> Self {
        Self {
            points: select_columns(x, &indices),
            source_indices: Some(indices),
            fell_back_to_uniform: false,
        }
    }

    pub fn len(&self) -> usize {
        self.points.ncols()
    }

    pub fn is_empty(&self) -> bool {
        self.points.ncols() == 0
    }
}

fn check_c(c: usize, n: usize) -> Result<()> {
    if c == 0 || c > n {
        return Err(LkdlError::InvalidParameter(format!(
            "landmark count c={c} must satisfy 1 <= c <= N={n}"
        )));
    }
    Ok(())
}

/// Dispatches on `spec.method`.
pub fn sample(spec: &SamplerSpec, kernel: &Kernel, x: &SampleMatrix) -> Result<LandmarkSet> {
    match spec.method {
        SamplingMethod::Uniform => sample_uniform(x, spec.c, spec.seed),
        SamplingMethod::Diagonal => sample_diagonal(kernel, x, spec.c, spec.seed),
        SamplingMethod::ColumnNorm => sample_column_norm(kernel, x, spec.c, spec.seed),
        SamplingMethod::Kmeans => sample_kmeans(x, spec.c, spec.seed, spec.kmeans_max_iters),
        SamplingMethod::Coreset => sample_coreset(x, spec.c, spec.seed),
    }
}

pub fn sample_uniform(x: &SampleMatrix, c: usize, seed: u64) -> Result<LandmarkSet> {
    check_c(c, x.ncols())?;
    let mut r = rng::stream(seed);
    Ok(LandmarkSet::from_indices(x, uniform_indices(x.ncols(), c, &mut r)))
}

fn uniform_indices(n: usize, c: usize, r: &mut Rng) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..n).collect();
    let (chosen, _) = idx.partial_shuffle(r, c);
    chosen.to_vec()
}

/// Sequential draw-and-renormalize sampling of `c` distinct indices.
/// Once the positive weights are exhausted the remaining draws are uniform.
pub fn weighted_without_replacement(weights: &[f64], c: usize, r: &mut Rng) -> Vec<usize> {
    let mut w = weights.to_vec();
    let mut taken = vec![false; w.len()];
    let mut out = Vec::with_capacity(c);
    for _ in 0..c.min(w.len()) {
        let total: f64 = w.iter().sum();
        let pick = if total > 0.0 {
            let target = r.random::<f64>() * total;
            let mut acc = 0.0;
            let mut pick = None;
            let mut last_positive = 0;
            for (i, &wi) in w.iter().enumerate() {
                if wi > 0.0 {
                    last_positive = i;
                    acc += wi;
                    if acc > target {
                        pick = Some(i);
                        break;
                    }
                }
            }
            pick.unwrap_or(last_positive)
        } else {
            let free: Vec<usize> = (0..w.len()).filter(|&i| !taken[i]).collect();
            free[r.random_range(0..free.len())]
        };
        taken[pick] = true;
        w[pick] = 0.0;
        out.push(pick);
    }
    out
}

fn normalized(mut w: Vec<f64>) -> Vec<f64> {
    let total: f64 = w.iter().sum();
    w.iter_mut().for_each(|v| *v /= total);
    w
}

/// `p_i = K_ii^2 / sum_j K_jj^2`; only the diagonal is evaluated.
pub fn diagonal_weights(kernel: &Kernel, x: &SampleMatrix) -> Result<Vec<f64>> {
    kernel.validate()?;
    let w: Vec<f64> = (0..x.ncols())
        .map(|i| {
            let d = kernel.self_eval(col(x, i));
            d * d
        })
        .collect();
    if w.iter().any(|v| !v.is_finite()) {
        return Err(LkdlError::NonFinite("kernel diagonal"));
    }
    if w.iter().all(|&v| v == 0.0) {
        return Err(LkdlError::Degenerate("kernel diagonal is all zero".into()));
    }
    Ok(normalized(w))
}

pub fn sample_diagonal(kernel: &Kernel, x: &SampleMatrix, c: usize, seed: u64) -> Result<LandmarkSet> {
    check_c(c, x.ncols())?;
    let w = diagonal_weights(kernel, x)?;
    let mut r = rng::stream(seed);
    Ok(LandmarkSet::from_indices(x, weighted_without_replacement(&w, c, &mut r)))
}

/// `p_i = |k^i|^2 / |K|_F^2`. Costs O(N^2) kernel evaluations, so the full
/// kernel matrix must fit in `budget` bytes even though it is streamed.
pub fn column_norm_weights(kernel: &Kernel, x: &SampleMatrix, budget: usize) -> Result<Vec<f64>> {
    let n = x.ncols();
    if n.saturating_mul(n).saturating_mul(8) > budget {
        return Err(LkdlError::MemoryBudget {
            rows: n,
            cols: n,
            budget,
            advice: "column-norm sampling is O(N^2); use the diagonal, uniform or coreset sampler",
        });
    }
    let mut w = vec![0.0; n];
    for_each_block(kernel, x, x, 64 << 20, |start, block| {
        for j in 0..block.ncols() {
            w[start + j] = col(block, j).iter().map(|v| v * v).sum();
        }
        Ok(())
    })?;
    if w.iter().all(|&v| v == 0.0) {
        return Err(LkdlError::Degenerate("kernel matrix is zero".into()));
    }
    Ok(normalized(w))
}

pub fn sample_column_norm(kernel: &Kernel, x: &SampleMatrix, c: usize, seed: u64) -> Result<LandmarkSet> {
    check_c(c, x.ncols())?;
    let w = column_norm_weights(kernel, x, DEFAULT_MEMORY_BUDGET)?;
    let mut r = rng::stream(seed);
    Ok(LandmarkSet::from_indices(x, weighted_without_replacement(&w, c, &mut r)))
}

/// Coreset weights from the representation error of each sample by the
/// data mean, `err_i = |x_i - g_i mu|^2` with the least-squares scalar
/// `g_i = mu.x_i / mu.mu`. Returns `None` when every error vanishes.
pub fn coreset_weights(x: &SampleMatrix) -> Result<Option<Vec<f64>>> {
    let n = x.ncols();
    if n == 0 {
        return Err(LkdlError::InvalidParameter("empty sample set".into()));
    }
    let mu = x.column_mean();
    let mu2 = mu.norm_squared();
    if mu2 == 0.0 {
        return Err(LkdlError::Degenerate("data mean is zero; coreset weights undefined".into()));
    }
    let mu = mu.as_slice();
    let mut scale = 0.0;
    let errs: Vec<f64> = (0..n)
        .map(|i| {
            let xi = col(x, i);
            scale += xi.iter().map(|v| v * v).sum::<f64>();
            let g = xi.iter().zip(mu).map(|(a, b)| a * b).sum::<f64>() / mu2;
            xi.iter().zip(mu).map(|(a, b)| (a - g * b) * (a - g * b)).sum()
        })
        .collect();
    let total: f64 = errs.iter().sum();
    if total <= 1e-20 * scale {
        return Ok(None);
    }
    Ok(Some(normalized(errs)))
}

pub fn sample_coreset(x: &SampleMatrix, c: usize, seed: u64) -> Result<LandmarkSet> {
    check_c(c, x.ncols())?;
    let mut r = rng::stream(seed);
    match coreset_weights(x)? {
        Some(w) => Ok(LandmarkSet::from_indices(x, weighted_without_replacement(&w, c, &mut r))),
        None => {
            log::warn!("coreset errors are all zero; falling back to uniform sampling");
            let mut set = LandmarkSet::from_indices(x, uniform_indices(x.ncols(), c, &mut r));
            set.fell_back_to_uniform = true;
            Ok(set)
        }
    }
}

/// Result of Lloyd's algorithm.
#[derive(Debug, Clone)]
pub struct KMeans {
    pub centers: SampleMatrix,
    pub assignment: Vec<usize>,
    pub iterations: usize,
    pub reseeded: usize,
}

fn dist2(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Nearest center for every column; the lowest center index wins ties.
fn assign(x: &SampleMatrix, centers: &SampleMatrix) -> Vec<(usize, f64)> {
    let nearest = |i: usize| {
        let xi = col(x, i);
        let mut best = (0, f64::INFINITY);
        for j in 0..centers.ncols() {
            let d = dist2(xi, col(centers, j));
            if d < best.1 {
                best = (j, d);
            }
        }
        best
    };
    #[cfg(feature = "parallel")]
    {
        use rayon::prelude::*;
        (0..x.ncols()).into_par_iter().map(nearest).collect()
    }
    #[cfg(not(feature = "parallel"))]
    (0..x.ncols()).map(nearest).collect()
}

/// k-means++ seeding followed by Lloyd iterations until the largest center
/// shift is at most `1e-6` or `max_iters` is reached. Empty clusters are
/// re-seeded from the point farthest from its current center.
pub fn kmeans(x: &SampleMatrix, c: usize, seed: u64, max_iters: usize) -> Result<KMeans> {
    let n = x.ncols();
    check_c(c, n)?;
    let p = x.nrows();
    let mut r = rng::stream(seed);

    let mut chosen = vec![r.random_range(0..n)];
    let mut d2: Vec<f64> = (0..n).map(|i| dist2(col(x, i), col(x, chosen[0]))).collect();
    let mut is_chosen = vec![false; n];
    is_chosen[chosen[0]] = true;
    while chosen.len() < c {
        let w: Vec<f64> = (0..n).map(|i| if is_chosen[i] { 0.0 } else { d2[i] }).collect();
        let next = weighted_without_replacement(&w, 1, &mut r)[0];
        let next = if is_chosen[next] {
            // only chosen points had weight left; take the first free one
            (0..n).find(|&i| !is_chosen[i]).expect("c <= N")
        } else {
            next
        };
        is_chosen[next] = true;
        chosen.push(next);
        for (i, d) in d2.iter_mut().enumerate() {
            *d = d.min(dist2(col(x, i), col(x, next)));
        }
    }
    let mut centers = select_columns(x, &chosen);

    let mut assignment = vec![0; n];
    let mut iterations = 0;
    let mut reseeded = 0;
    for _ in 0..max_iters {
        iterations += 1;
        let mut nearest = assign(x, &centers);
        for (a, &(j, _)) in assignment.iter_mut().zip(&nearest) {
            *a = j;
        }
        let mut sums = DMatrix::<f64>::zeros(p, c);
        let mut counts = vec![0usize; c];
        for i in 0..n {
            let j = assignment[i];
            counts[j] += 1;
            for (s, v) in col_mut(&mut sums, j).iter_mut().zip(col(x, i)) {
                *s += v;
            }
        }
        let mut shift = 0.0f64;
        for j in 0..c {
            let new_center: Vec<f64> = if counts[j] > 0 {
                col(&sums, j).iter().map(|s| s / counts[j] as f64).collect()
            } else {
                let (far, _) = nearest
                    .iter()
                    .enumerate()
                    .fold((0, -1.0), |best, (i, &(_, d))| if d > best.1 { (i, d) } else { best });
                nearest[far].1 = 0.0;
                reseeded += 1;
                col(x, far).to_vec()
            };
            shift = shift.max(dist2(&new_center, col(&centers, j)).sqrt());
            col_mut(&mut centers, j).copy_from_slice(&new_center);
        }
        if shift <= 1e-6 {
            break;
        }
    }
    let final_assign = assign(x, &centers);
    for (a, (j, _)) in assignment.iter_mut().zip(final_assign) {
        *a = j;
    }
    Ok(KMeans {
        centers,
        assignment,
        iterations,
        reseeded,
    })
}

pub fn sample_kmeans(x: &SampleMatrix, c: usize, seed: u64, max_iters: usize) -> Result<LandmarkSet> {
    let km = kmeans(x, c, seed, max_iters)?;
    Ok(LandmarkSet {
        points: km.centers,
        source_indices: None,
        fell_back_to_uniform: false,
    })
}
