//! Shared dense-matrix helpers.

use nalgebra::{DMatrix, DVector};

/// A `p x N` matrix whose columns are signals.
pub type SampleMatrix = DMatrix<f64>;

/// Column `j` of a column-major matrix as a contiguous slice.
#[inline]
pub fn col(m: &DMatrix<f64>, j: usize) -> &[f64] {
    let p = m.nrows();
    &m.as_slice()[j * p..(j + 1) * p]
}

#[inline]
pub fn col_mut(m: &mut DMatrix<f64>, j: usize) -> &mut [f64] {
    let p = m.nrows();
    &mut m.as_mut_slice()[j * p..(j + 1) * p]
}

/// `A^T B` through the blocked product. `tr_mul` falls back to one dot
/// product per entry, which is several times slower for large operands.
pub fn at_b(a: &DMatrix<f64>, b: &DMatrix<f64>) -> DMatrix<f64> {
    a.transpose() * b
}

/// Selects the given columns, in order.
pub fn select_columns(m: &DMatrix<f64>, indices: &[usize]) -> DMatrix<f64> {
    let p = m.nrows();
    let mut data = Vec::with_capacity(p * indices.len());
    for &j in indices {
        data.extend_from_slice(col(m, j));
    }
    DMatrix::from_vec(p, indices.len(), data)
}

/// Pseudo-inverse of a symmetric PSD matrix, zeroing eigenvalues below
/// `rel_cutoff * max_eigenvalue`. Returns the pseudo-inverse and whether any
/// eigenvalue was cut.
pub fn pinv_psd(m: &DMatrix<f64>, rel_cutoff: f64) -> (DMatrix<f64>, bool) {
    let n = m.nrows();
    if n == 0 {
        return (DMatrix::zeros(0, 0), false);
    }
    let eig = m.clone().symmetric_eigen();
    let max = eig.eigenvalues.iter().copied().fold(0.0f64, f64::max);
    let cutoff = rel_cutoff * max;
    let mut cut = false;
    let inv = DVector::from_iterator(
        n,
        eig.eigenvalues.iter().map(|&l| {
            if l > cutoff && l > 0.0 {
                1.0 / l
            } else {
                cut = true;
                0.0
            }
        }),
    );
    let v = &eig.eigenvectors;
    let scaled = DMatrix::from_fn(n, n, |i, j| v[(i, j)] * inv[j]);
    (scaled * v.transpose(), cut)
}

/// Squared Frobenius norm of `a - b`.
pub fn frob_dist2(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    a.iter().zip(b.iter()).map(|(x, y)| (x - y) * (x - y)).sum()
}
