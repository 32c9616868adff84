//! Mercer kernels and kernel-matrix construction.

use std::fmt;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{LkdlError, Result};
use crate::matrix::{col, SampleMatrix};

/// Default cap on a materialized kernel matrix: 2 GiB of f64 entries.
pub const DEFAULT_MEMORY_BUDGET: usize = 2 << 30;

/// A Mercer kernel with its hyperparameters.
///
/// The polynomial kernel is homogeneous unless `offset` is set, i.e.
/// `(x·y + offset)^degree`. The Gaussian kernel is `exp(-|x-y|^2 / (2 sigma^2))`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Kernel {
    Linear,
    Polynomial {
        degree: u32,
        #[serde(default)]
        offset: f64,
    },
    Gaussian {
        sigma: f64,
    },
}

impl Kernel {
    pub fn polynomial(degree: u32) -> Self {
        Kernel::Polynomial {
            degree,
            offset: 0.0,
        }
    }

    pub fn gaussian(sigma: f64) -> Self {
        Kernel::Gaussian { sigma }
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            Kernel::Linear => Ok(()),
            Kernel::Polynomial { degree, offset } => {
                if degree < 1 {
                    return Err(LkdlError::InvalidParameter(
                        "polynomial degree must be >= 1".into(),
                    ));
                }
                if !offset.is_finite() || offset < 0.0 {
                    return Err(LkdlError::InvalidParameter(format!(
                        "polynomial offset must be finite and >= 0, got {offset}"
                    )));
                }
                Ok(())
            }
            Kernel::Gaussian { sigma } => {
                if !(sigma.is_finite() && sigma > 0.0) {
                    return Err(LkdlError::InvalidParameter(format!(
                        "gaussian sigma must be positive, got {sigma}"
                    )));
                }
                Ok(())
            }
        }
    }

    /// Evaluates the kernel on two vectors of equal length.
    pub fn eval(&self, x: &[f64], y: &[f64]) -> Result<f64> {
        if x.len() != y.len() || x.is_empty() {
            return Err(LkdlError::DimensionMismatch(format!(
                "kernel arguments have lengths {} and {}",
                x.len(),
                y.len()
            )));
        }
        if x.iter().chain(y).any(|v| !v.is_finite()) {
            return Err(LkdlError::NonFinite("kernel argument"));
        }
        Ok(self.eval_unchecked(x, y))
    }

    /// Evaluates without validation. Symmetric bit-for-bit in its arguments.
    #[inline]
    pub fn eval_unchecked(&self, x: &[f64], y: &[f64]) -> f64 {
        match *self {
            Kernel::Linear => dot(x, y),
            Kernel::Polynomial { degree, offset } => (dot(x, y) + offset).powi(degree as i32),
            Kernel::Gaussian { sigma } => {
                let d2: f64 = x.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum();
                (-d2 / (2.0 * sigma * sigma)).exp()
            }
        }
    }

    /// `k(x, x)` without touching a second vector.
    #[inline]
    pub fn self_eval(&self, x: &[f64]) -> f64 {
        match self {
            Kernel::Gaussian { .. } => 1.0,
            _ => self.eval_unchecked(x, x),
        }
    }
}

impl fmt::Display for Kernel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match *self {
            Kernel::Linear => write!(f, "linear"),
            Kernel::Polynomial { degree, offset } if offset == 0.0 => write!(f, "poly{degree}"),
            Kernel::Polynomial { degree, offset } => write!(f, "poly{degree}+{offset}"),
            Kernel::Gaussian { sigma } => write!(f, "gaussian{sigma}"),
        }
    }
}

#[inline]
fn dot(x: &[f64], y: &[f64]) -> f64 {
    // Four independent accumulators; the order only depends on the
    // position in the vectors, so dot(x, y) == dot(y, x) exactly.
    let mut acc = [0.0f64; 4];
    let chunks = x.len() / 4;
    for c in 0..chunks {
        let i = 4 * c;
        acc[0] += x[i] * y[i];
        acc[1] += x[i + 1] * y[i + 1];
        acc[2] += x[i + 2] * y[i + 2];
        acc[3] += x[i + 3] * y[i + 3];
    }
    let mut tail = 0.0;
    for i in 4 * chunks..x.len() {
        tail += x[i] * y[i];
    }
    (acc[0] + acc[1]) + (acc[2] + acc[3]) + tail
}

/// Dense matrix of kernel values `K[i, j] = k(x_i, y_j)`.
#[derive(Debug, Clone, PartialEq)]
pub struct KernelMatrix {
    pub entries: DMatrix<f64>,
    /// True when rows and columns come from the same sample set.
    pub same_source: bool,
}

impl KernelMatrix {
    pub fn nrows(&self) -> usize {
        self.entries.nrows()
    }

    pub fn ncols(&self) -> usize {
        self.entries.ncols()
    }

    pub fn trace(&self) -> f64 {
        self.entries.diagonal().sum()
    }

    /// Checks the Mercer condition on a square kernel matrix: the smallest
    /// eigenvalue must not fall below `-1e-8 * trace`.
    pub fn check_psd(&self, kernel_name: &str) -> Result<f64> {
        if self.nrows() != self.ncols() {
            return Err(LkdlError::DimensionMismatch(
                "PSD check needs a square kernel matrix".into(),
            ));
        }
        if self.nrows() == 0 {
            return Ok(0.0);
        }
        let min = self
            .entries
            .clone()
            .symmetric_eigenvalues()
            .iter()
            .copied()
            .fold(f64::INFINITY, f64::min);
        let tolerance = 1e-8 * self.trace().abs();
        if min < -tolerance {
            return Err(LkdlError::NotPsd {
                kernel: kernel_name.to_string(),
                min_eigenvalue: min,
                tolerance,
            });
        }
        Ok(min)
    }
}

fn check_dims(x: &SampleMatrix, y: &SampleMatrix) -> Result<()> {
    if x.nrows() != y.nrows() {
        return Err(LkdlError::DimensionMismatch(format!(
            "sample dimensions differ: {} vs {}",
            x.nrows(),
            y.nrows()
        )));
    }
    if x.iter().chain(y.iter()).any(|v| !v.is_finite()) {
        return Err(LkdlError::NonFinite("kernel matrix input"));
    }
    Ok(())
}

/// Fills `out` (column-major, `x.ncols()` rows) with kernel values of the
/// columns of `x` against columns `y_start..` of `y`.
fn fill_columns(kernel: &Kernel, x: &SampleMatrix, y: &SampleMatrix, y_start: usize, out: &mut [f64]) {
    let n = x.ncols();
    if n == 0 {
        return;
    }
    let work = |(j, column): (usize, &mut [f64])| {
        let yj = col(y, y_start + j);
        for (i, slot) in column.iter_mut().enumerate() {
            *slot = kernel.eval_unchecked(col(x, i), yj);
        }
    };
    #[cfg(feature = "parallel")]
    {
        use rayon::prelude::*;
        out.par_chunks_mut(n).enumerate().for_each(work);
    }
    #[cfg(not(feature = "parallel"))]
    out.chunks_mut(n).enumerate().for_each(work);
}

/// Kernel matrix between the columns of `x` and `y`, refusing to allocate
/// more than [`DEFAULT_MEMORY_BUDGET`].
pub fn kernel_matrix(kernel: &Kernel, x: &SampleMatrix, y: &SampleMatrix) -> Result<KernelMatrix> {
    kernel_matrix_with_budget(kernel, x, y, DEFAULT_MEMORY_BUDGET)
}

pub fn kernel_matrix_with_budget(
    kernel: &Kernel,
    x: &SampleMatrix,
    y: &SampleMatrix,
    budget: usize,
) -> Result<KernelMatrix> {
    kernel.validate()?;
    check_dims(x, y)?;
    let (rows, cols) = (x.ncols(), y.ncols());
    if rows.saturating_mul(cols).saturating_mul(8) > budget {
        return Err(LkdlError::MemoryBudget {
            rows,
            cols,
            budget,
            advice: "use the block-wise evaluation or fewer samples",
        });
    }
    let mut data = vec![0.0; rows * cols];
    fill_columns(kernel, x, y, 0, &mut data);
    Ok(KernelMatrix {
        entries: DMatrix::from_vec(rows, cols, data),
        same_source: false,
    })
}

/// Square kernel matrix of a sample set against itself.
pub fn gram(kernel: &Kernel, x: &SampleMatrix) -> Result<KernelMatrix> {
    let mut k = kernel_matrix(kernel, x, x)?;
    k.same_source = true;
    Ok(k)
}

/// Streams `K(x, y)` in column blocks of at most `budget` bytes each,
/// calling `sink(first_column, block)` in order.
pub fn for_each_block<F>(kernel: &Kernel, x: &SampleMatrix, y: &SampleMatrix, budget: usize, mut sink: F) -> Result<()>
where
    F: FnMut(usize, &DMatrix<f64>) -> Result<()>,
{
    kernel.validate()?;
    check_dims(x, y)?;
    let rows = x.ncols().max(1);
    let per_block = (budget / (8 * rows)).max(1);
    let mut start = 0;
    while start < y.ncols() {
        let width = per_block.min(y.ncols() - start);
        let mut data = vec![0.0; x.ncols() * width];
        fill_columns(kernel, x, y, start, &mut data);
        sink(start, &DMatrix::from_vec(x.ncols(), width, data))?;
        start += width;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;
    use approx::assert_relative_eq;
    use proptest::prelude::*;
    use rand_distr::{Distribution, StandardNormal};

    fn random_samples(p: usize, n: usize, seed: u64) -> SampleMatrix {
        let mut r = rng::stream(seed);
        DMatrix::from_fn(p, n, |_, _| StandardNormal.sample(&mut r))
    }

    #[test]
    fn identity_and_zero_distance_cases() {
        let e = [0.0, 1.0, 0.0];
        assert_eq!(Kernel::Linear.eval(&e, &e).unwrap(), 1.0);
        let x = [0.3, -2.0, 5.5];
        assert_eq!(Kernel::gaussian(0.7).eval(&x, &x).unwrap(), 1.0);
        // x.y = 2
        let a = [1.0, 1.0];
        let b = [1.0, 1.0];
        assert_eq!(Kernel::polynomial(4).eval(&a, &b).unwrap(), 16.0);
    }

    #[test]
    fn eval_rejects_bad_inputs() {
        assert!(matches!(
            Kernel::Linear.eval(&[1.0, 2.0], &[1.0]),
            Err(LkdlError::DimensionMismatch(_))
        ));
        assert!(matches!(
            Kernel::Linear.eval(&[1.0, f64::NAN], &[1.0, 0.0]),
            Err(LkdlError::NonFinite(_))
        ));
        assert!(Kernel::gaussian(0.0).validate().is_err());
        assert!(Kernel::polynomial(0).validate().is_err());
    }

    #[test]
    fn small_linear_gram_by_hand() {
        let x = DMatrix::from_column_slice(2, 3, &[1.0, 0.0, 0.0, 1.0, 1.0, 1.0]);
        let k = gram(&Kernel::Linear, &x).unwrap();
        let expected = DMatrix::from_row_slice(3, 3, &[1.0, 0.0, 1.0, 0.0, 1.0, 1.0, 1.0, 1.0, 2.0]);
        assert_eq!(k.entries, expected);
        assert!(k.same_source);
    }

    #[test]
    fn orthonormal_columns_give_identity() {
        let q = random_samples(6, 4, 3).qr().q();
        let k = gram(&Kernel::Linear, &q).unwrap();
        assert_relative_eq!(k.entries, DMatrix::identity(4, 4), epsilon = 1e-12);
    }

    #[test]
    fn gaussian_gram_has_unit_diagonal() {
        let x = random_samples(5, 9, 4);
        let k = gram(&Kernel::gaussian(1.3), &x).unwrap();
        assert!(k.entries.diagonal().iter().all(|&d| d == 1.0));
    }

    #[test]
    fn entries_match_pointwise_eval_and_dims_are_checked() {
        let x = random_samples(3, 4, 5);
        let y = random_samples(3, 6, 6);
        let kern = Kernel::polynomial(3);
        let k = kernel_matrix(&kern, &x, &y).unwrap();
        assert_eq!(k.entries.shape(), (4, 6));
        for i in 0..4 {
            for j in 0..6 {
                assert_eq!(k.entries[(i, j)], kern.eval(col(&x, i), col(&y, j)).unwrap());
            }
        }
        let z = random_samples(2, 6, 7);
        assert!(kernel_matrix(&kern, &x, &z).is_err());
    }

    #[test]
    fn memory_budget_and_blocks() {
        let x = random_samples(3, 10, 8);
        let kern = Kernel::gaussian(1.0);
        let err = kernel_matrix_with_budget(&kern, &x, &x, 8 * 99).unwrap_err();
        assert!(matches!(err, LkdlError::MemoryBudget { .. }));
        let full = gram(&kern, &x).unwrap().entries;
        let mut rebuilt = DMatrix::zeros(10, 10);
        let mut calls = 0;
        for_each_block(&kern, &x, &x, 8 * 30, |start, block| {
            calls += 1;
            rebuilt.columns_mut(start, block.ncols()).copy_from(block);
            Ok(())
        })
        .unwrap();
        assert_eq!(calls, 4);
        assert_eq!(rebuilt, full);
    }

    #[test]
    fn linear_gram_matches_xtx() {
        let x = random_samples(7, 12, 9);
        let k = gram(&Kernel::Linear, &x).unwrap().entries;
        let xtx = x.transpose() * &x;
        assert!((&k - &xtx).norm() / xtx.norm() <= 1e-12);
    }

    #[test]
    fn mercer_check_on_random_sets() {
        let kernels = [Kernel::Linear, Kernel::polynomial(3), Kernel::gaussian(0.8)];
        for seed in 0..50 {
            let n = 2 + (seed as usize * 7) % 29;
            let x = random_samples(4, n, 100 + seed);
            for kern in &kernels {
                gram(kern, &x).unwrap().check_psd(&kern.to_string()).unwrap();
            }
        }
    }

    #[test]
    fn indefinite_matrix_is_rejected() {
        let k = KernelMatrix {
            entries: DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 1.0, 0.0]),
            same_source: true,
        };
        assert!(matches!(k.check_psd("bogus"), Err(LkdlError::NotPsd { .. })));
    }

    proptest! {
        #[test]
        fn kernels_are_exactly_symmetric(
            x in prop::collection::vec(-10.0f64..10.0, 1..12),
            shift in prop::collection::vec(-10.0f64..10.0, 12),
            degree in 1u32..6,
            sigma in 0.05f64..5.0,
        ) {
            let y: Vec<f64> = x.iter().zip(&shift).map(|(a, b)| a + b).collect();
            for kern in [Kernel::Linear, Kernel::polynomial(degree), Kernel::gaussian(sigma)] {
                prop_assert_eq!(kern.eval(&x, &y).unwrap(), kern.eval(&y, &x).unwrap());
            }
        }
    }
}
