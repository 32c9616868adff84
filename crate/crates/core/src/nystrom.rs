//! Nystrom virtual samples.
//!
//! A fitted [`NystromMap`] holds the landmarks `X_R` and the leading
//! eigenpairs of `W = K(X_R, X_R)`. Any sample `x` maps to
//! `f = Sigma_k^{-1/2} V_k^T [k(x_R1, x), ..., k(x_Rc, x)]^T`, so that inner
//! products of mapped samples approximate kernel values and linear
//! algorithms can run on `f` directly.

use nalgebra::{DMatrix, DVector};

use crate::eigen;
use crate::error::{LkdlError, Result};
use crate::kernels::{for_each_block, gram, Kernel, KernelMatrix};
use crate::matrix::{at_b, SampleMatrix};
use crate::sampling::{self, LandmarkSet, SamplerSpec};

/// Eigenvalues below this fraction of the largest are treated as zero.
pub const EIGEN_CUTOFF: f64 = 1e-10;

const TRANSFORM_BLOCK_BYTES: usize = 256 << 20;

#[derive(Debug, Clone, PartialEq)]
pub struct NystromMap {
    pub kernel: Kernel,
    pub landmarks: SampleMatrix,
    pub source_indices: Option<Vec<usize>>,
    /// `c x k` orthonormal eigenvectors of `W`.
    pub eigenvectors: DMatrix<f64>,
    /// The `k` retained eigenvalues of `W`, positive and descending.
    pub eigenvalues: DVector<f64>,
    /// The dimension asked for; larger than `k()` when `W` had too few
    /// eigenvalues above the cutoff.
    pub requested_k: usize,
}

/// Mapped samples, one `k`-dimensional column per input column.
#[derive(Debug, Clone, PartialEq)]
pub struct VirtualSamples {
    pub features: DMatrix<f64>,
}

impl VirtualSamples {
    pub fn dim(&self) -> usize {
        self.features.nrows()
    }

    pub fn len(&self) -> usize {
        self.features.ncols()
    }

    pub fn is_empty(&self) -> bool {
        self.features.ncols() == 0
    }

    /// `F^T F`, the kernel matrix these samples reproduce.
    pub fn inner_products(&self) -> DMatrix<f64> {
        at_b(&self.features, &self.features)
    }
}

impl NystromMap {
    /// Samples landmarks from `x_train` and fits the map.
    pub fn fit(x_train: &SampleMatrix, kernel: &Kernel, sampler: &SamplerSpec, k: usize) -> Result<Self> {
        if k == 0 || k > sampler.c || sampler.c > x_train.ncols() {
            return Err(LkdlError::InvalidParameter(format!(
                "need 1 <= k <= c <= N, got k={k}, c={}, N={}",
                sampler.c,
                x_train.ncols()
            )));
        }
        kernel.validate()?;
        let landmarks = sampling::sample(sampler, kernel, x_train)?;
        Self::from_landmarks(kernel, landmarks, k)
    }

    /// Fits the map on a given landmark set.
    pub fn from_landmarks(kernel: &Kernel, landmarks: LandmarkSet, k: usize) -> Result<Self> {
        let c = landmarks.len();
        if k == 0 || k > c {
            return Err(LkdlError::InvalidParameter(format!("need 1 <= k <= c, got k={k}, c={c}")));
        }
        let w = gram(kernel, &landmarks.points)?;
        let eig = if 5 * k > c || c < 200 {
            let full = eigen::full(&w.entries);
            let min = full.values[c - 1];
            let tolerance = 1e-8 * w.trace().abs();
            if min < -tolerance {
                return Err(LkdlError::NotPsd {
                    kernel: kernel.to_string(),
                    min_eigenvalue: min,
                    tolerance,
                });
            }
            eigen::SymEigen {
                values: full.values.rows(0, k).into_owned(),
                vectors: full.vectors.columns(0, k).into_owned(),
            }
        } else {
            eigen::top_k(&w.entries, k)
        };
        let top = eig.values[0];
        if !(top > 0.0) {
            return Err(LkdlError::Degenerate(
                "landmark kernel matrix has no positive eigenvalue".into(),
            ));
        }
        let kept = eig.values.iter().take_while(|&&v| v > EIGEN_CUTOFF * top).count();
        if kept < k {
            log::warn!("W has only {kept} eigenvalues above the cutoff; reducing k from {k}");
        }
        Ok(Self {
            kernel: *kernel,
            landmarks: landmarks.points,
            source_indices: landmarks.source_indices,
            eigenvectors: eig.vectors.columns(0, kept).into_owned(),
            eigenvalues: eig.values.rows(0, kept).into_owned(),
            requested_k: k,
        })
    }

    /// Effective embedding dimension.
    pub fn k(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn c(&self) -> usize {
        self.landmarks.ncols()
    }

    pub fn p(&self) -> usize {
        self.landmarks.nrows()
    }

    /// True when `k()` fell below the requested dimension.
    pub fn truncated(&self) -> bool {
        self.k() < self.requested_k
    }

    /// `Sigma_k^{-1/2} V_k^T`, the `k x c` matrix applied to landmark kernel columns.
    pub fn projection(&self) -> DMatrix<f64> {
        let mut p = self.eigenvectors.transpose();
        for (i, &s) in self.eigenvalues.iter().enumerate() {
            p.row_mut(i).scale_mut(1.0 / s.sqrt());
        }
        p
    }

    /// Maps every column of `x` into the `k`-dimensional feature space.
    pub fn transform(&self, x: &SampleMatrix) -> Result<VirtualSamples> {
        if x.nrows() != self.p() {
            return Err(LkdlError::DimensionMismatch(format!(
                "samples have dimension {}, the map expects {}",
                x.nrows(),
                self.p()
            )));
        }
        let proj = self.projection();
        let mut features = DMatrix::zeros(self.k(), x.ncols());
        for_each_block(&self.kernel, &self.landmarks, x, TRANSFORM_BLOCK_BYTES, |start, block| {
            features.columns_mut(start, block.ncols()).copy_from(&(&proj * block));
            Ok(())
        })?;
        Ok(VirtualSamples { features })
    }

    pub fn transform_one(&self, x: &[f64]) -> Result<DVector<f64>> {
        let m = DMatrix::from_column_slice(x.len(), 1, x);
        Ok(self.transform(&m)?.features.column(0).into_owned())
    }
}

/// Virtual samples from a full eigendecomposition `K = U Lambda U^T`:
/// `F_k = Lambda_k^{1/2} U_k^T`. Reference path for tests and for the
/// full-kernel configuration.
pub fn exact_virtual_samples(k: &KernelMatrix, rank: usize) -> Result<VirtualSamples> {
    let n = k.nrows();
    if n != k.ncols() {
        return Err(LkdlError::DimensionMismatch("kernel matrix must be square".into()));
    }
    if rank == 0 || rank > n {
        return Err(LkdlError::InvalidParameter(format!("need 1 <= k <= N, got k={rank}, N={n}")));
    }
    let e = eigen::full(&k.entries);
    let tolerance = 1e-8 * k.trace().abs();
    if e.values[n - 1] < -tolerance {
        return Err(LkdlError::NotPsd {
            kernel: "exact".into(),
            min_eigenvalue: e.values[n - 1],
            tolerance,
        });
    }
    let top = e.values[0].max(0.0);
    let kept = e.values.iter().take(rank).take_while(|&&v| v > EIGEN_CUTOFF * top).count();
    let mut features = e.vectors.columns(0, kept).transpose();
    for i in 0..kept {
        features.row_mut(i).scale_mut(e.values[i].sqrt());
    }
    Ok(VirtualSamples { features })
}

/// `|K - K_approx|_F / |K|_F`.
pub fn approximation_error(k: &DMatrix<f64>, k_approx: &DMatrix<f64>) -> Result<f64> {
    if k.shape() != k_approx.shape() {
        return Err(LkdlError::DimensionMismatch(format!(
            "{:?} vs {:?}",
            k.shape(),
            k_approx.shape()
        )));
    }
    let denom = k.norm();
    if denom == 0.0 {
        return Err(LkdlError::Degenerate("reference kernel matrix is zero".into()));
    }
    Ok((k - k_approx).norm() / denom)
}

/// Normalized error of the best rank-`r` approximation of a symmetric `K`.
pub fn svd_truncation_error(k: &DMatrix<f64>, rank: usize) -> Result<f64> {
    Ok(svd_truncation_errors(k, &[rank])?[0])
}

/// [`svd_truncation_error`] for several ranks from one eigendecomposition.
pub fn svd_truncation_errors(k: &DMatrix<f64>, ranks: &[usize]) -> Result<Vec<f64>> {
    let denom = k.norm();
    if denom == 0.0 {
        return Err(LkdlError::Degenerate("reference kernel matrix is zero".into()));
    }
    let mut s2: Vec<f64> = k.clone().symmetric_eigenvalues().iter().map(|v| v * v).collect();
    s2.sort_by(|a, b| b.total_cmp(a));
    Ok(ranks
        .iter()
        .map(|&r| s2.iter().skip(r).sum::<f64>().sqrt() / denom)
        .collect())
}
