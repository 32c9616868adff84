//! Leading eigenpairs of symmetric matrices.
//!
//! Small problems, or requests for a large fraction of the spectrum, go to a
//! dense symmetric eigensolver. Otherwise a Lanczos iteration with full
//! reorthogonalization extracts only the leading `k` pairs, which keeps the
//! cost near `O(n^2 k)` instead of `O(n^3)`.

use nalgebra::{DMatrix, DVector};
use rand_distr::{Distribution, StandardNormal};

use crate::rng;

/// Eigenpairs sorted by descending eigenvalue.
#[derive(Debug, Clone)]
pub struct SymEigen {
    pub values: DVector<f64>,
    /// Orthonormal eigenvectors, one per column.
    pub vectors: DMatrix<f64>,
}

const LANCZOS_MIN_DIM: usize = 200;

/// All eigenpairs of a symmetric matrix in descending order.
pub fn full(m: &DMatrix<f64>) -> SymEigen {
    let eig = m.clone().symmetric_eigen();
    let mut order: Vec<usize> = (0..eig.eigenvalues.len()).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]).then(a.cmp(&b)));
    let values = DVector::from_iterator(order.len(), order.iter().map(|&i| eig.eigenvalues[i]));
    let vectors = eig.eigenvectors.select_columns(&order);
    SymEigen { values, vectors }
}

/// The `k` algebraically largest eigenpairs of a symmetric matrix.
pub fn top_k(m: &DMatrix<f64>, k: usize) -> SymEigen {
    let n = m.nrows();
    let k = k.min(n);
    if n < LANCZOS_MIN_DIM || 5 * k > n {
        let mut e = full(m);
        e.values = e.values.rows(0, k).into_owned();
        e.vectors = e.vectors.columns(0, k).into_owned();
        return e;
    }
    lanczos(m, k, 1e-11)
}

fn orthogonalize(w: &mut DVector<f64>, basis: &[DVector<f64>]) {
    // two passes of classical Gram-Schmidt
    for _ in 0..2 {
        for q in basis {
            let h = q.dot(w);
            w.axpy(-h, q, 1.0);
        }
    }
}

fn lanczos(m: &DMatrix<f64>, k: usize, tol: f64) -> SymEigen {
    let n = m.nrows();
    let mut r = rng::stream(0x1a2c_205a);
    let mut random_unit = |basis: &[DVector<f64>]| {
        loop {
            let mut v = DVector::from_fn(n, |_, _| StandardNormal.sample(&mut r));
            orthogonalize(&mut v, basis);
            let norm = v.norm();
            if norm > 1e-8 {
                return v / norm;
            }
        }
    };

    let scale = m.norm().max(f64::MIN_POSITIVE);
    let mut basis: Vec<DVector<f64>> = vec![random_unit(&[])];
    let mut alpha: Vec<f64> = Vec::new();
    let mut beta: Vec<f64> = Vec::new();

    loop {
        let j = basis.len() - 1;
        let mut w = m * &basis[j];
        let a = basis[j].dot(&w);
        alpha.push(a);
        orthogonalize(&mut w, &basis);
        let b = w.norm();

        let size = alpha.len();
        let check = size >= k && (size % 4 == 0 || size == n || b <= 1e-12 * scale);
        if check {
            let t = tridiagonal(&alpha, &beta);
            let e = full(&t);
            let theta_max = e.values.iter().fold(0.0f64, |acc, v| acc.max(v.abs())).max(1e-300);
            let converged = size == n
                || (0..k).all(|i| (b * e.vectors[(size - 1, i)]).abs() <= tol * theta_max);
            if converged {
                let q = DMatrix::from_columns(&basis[..size]);
                let vectors = q * e.vectors.columns(0, k);
                return SymEigen {
                    values: e.values.rows(0, k).into_owned(),
                    vectors,
                };
            }
        }

        if b <= 1e-12 * scale {
            // invariant subspace: restart orthogonally, the coupling is zero
            beta.push(0.0);
            let v = random_unit(&basis);
            basis.push(v);
        } else {
            beta.push(b);
            basis.push(w / b);
        }
    }
}

fn tridiagonal(alpha: &[f64], beta: &[f64]) -> DMatrix<f64> {
    let s = alpha.len();
    let mut t = DMatrix::zeros(s, s);
    for i in 0..s {
        t[(i, i)] = alpha[i];
        if i + 1 < s {
            t[(i, i + 1)] = beta[i];
            t[(i + 1, i)] = beta[i];
        }
    }
    t
}
