//! Greedy pursuit: OMP, batch OMP and kernel OMP.
//!
//! All three share one Gram-domain loop. Given correlations `b = D^T z`,
//! the signal energy `|z|^2` and access to Gram columns `G[:, j]`, the loop
//! selects the atom with the largest residual correlation `b - G[:, S] g_S`,
//! extends a Cholesky factor of `G[S, S]` and re-solves the least squares
//! problem on the support. In the kernel case `G = A^T K A` and
//! `b = A^T K(X, z)`.

use nalgebra::DMatrix;

use crate::dict_learning::Dictionary;
use crate::error::{LkdlError, Result};
use crate::kernels::KernelMatrix;
use crate::matrix::{at_b, col};

/// Residual correlations below this fraction of `|z|` count as zero once at
/// least one atom is selected.
const CORRELATION_FLOOR: f64 = 1e-10;

/// A q-sparse coefficient vector in support form.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseCode {
    /// Selected atoms in selection order.
    pub support: Vec<usize>,
    /// Coefficients aligned with `support`.
    pub values: Vec<f64>,
    pub residual_norm: f64,
    /// Set when the loop stopped because the support Gram became singular.
    pub degenerate: bool,
}

impl SparseCode {
    pub fn empty(residual_norm: f64) -> Self {
        Self {
            support: Vec::new(),
            values: Vec::new(),
            residual_norm,
            degenerate: false,
        }
    }

    /// Dense length-`m` coefficient vector.
    pub fn to_dense(&self, m: usize) -> Vec<f64> {
        let mut out = vec![0.0; m];
        for (&j, &v) in self.support.iter().zip(&self.values) {
            out[j] = v;
        }
        out
    }
}

/// Column-sparse `m x N` coefficient matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseCodeMatrix {
    pub n_atoms: usize,
    pub codes: Vec<SparseCode>,
}

impl SparseCodeMatrix {
    pub fn len(&self) -> usize {
        self.codes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.codes.is_empty()
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let mut g = DMatrix::zeros(self.n_atoms, self.codes.len());
        for (i, code) in self.codes.iter().enumerate() {
            for (&j, &v) in code.support.iter().zip(&code.values) {
                g[(j, i)] = v;
            }
        }
        g
    }

    /// Reads the nonzero pattern of a dense matrix. Residual norms are unknown
    /// and set to NaN.
    pub fn from_dense(g: &DMatrix<f64>) -> Self {
        let codes = (0..g.ncols())
            .map(|i| {
                let (support, values) = (0..g.nrows()).filter(|&j| g[(j, i)] != 0.0).map(|j| (j, g[(j, i)])).unzip();
                SparseCode {
                    support,
                    values,
                    residual_norm: f64::NAN,
                    degenerate: false,
                }
            })
            .collect();
        Self {
            n_atoms: g.nrows(),
            codes,
        }
    }

    pub fn any_degenerate(&self) -> bool {
        self.codes.iter().any(|c| c.degenerate)
    }
}

/// The feature-space dictionary `Phi(X) A`, stored as its `N x m` coefficients.
#[derive(Debug, Clone, PartialEq)]
pub struct CoefficientDictionary {
    pub coefficients: DMatrix<f64>,
}

impl CoefficientDictionary {
    pub fn new(coefficients: DMatrix<f64>) -> Self {
        Self { coefficients }
    }

    pub fn n_atoms(&self) -> usize {
        self.coefficients.ncols()
    }

    /// Scales every atom to unit feature-space norm, `a_j^T K a_j = 1`, and
    /// returns the norms divided out. Zero-norm atoms are left untouched.
    pub fn normalize(&mut self, k: &KernelMatrix) -> Vec<f64> {
        let ka = &k.entries * &self.coefficients;
        (0..self.n_atoms())
            .map(|j| {
                let n2 = self.coefficients.column(j).dot(&ka.column(j));
                let norm = n2.max(0.0).sqrt();
                if norm > 0.0 {
                    self.coefficients.column_mut(j).scale_mut(1.0 / norm);
                }
                norm
            })
            .collect()
    }

    /// `a_j^T K a_j` for every atom.
    pub fn feature_norms2(&self, k: &KernelMatrix) -> Vec<f64> {
        let ka = &k.entries * &self.coefficients;
        (0..self.n_atoms()).map(|j| self.coefficients.column(j).dot(&ka.column(j))).collect()
    }
}

/// Incrementally grown lower-triangular Cholesky factor.
struct Cholesky {
    rows: Vec<Vec<f64>>,
}

impl Cholesky {
    fn new() -> Self {
        Self { rows: Vec::new() }
    }

    fn forward(&self, b: &[f64]) -> Vec<f64> {
        let mut y = Vec::with_capacity(b.len());
        for (i, row) in self.rows.iter().enumerate() {
            let s: f64 = row[..i].iter().zip(&y).map(|(l, v)| l * v).sum();
            y.push((b[i] - s) / row[i]);
        }
        y
    }

    fn backward(&self, y: &[f64]) -> Vec<f64> {
        let n = y.len();
        let mut x = vec![0.0; n];
        for i in (0..n).rev() {
            let s: f64 = ((i + 1)..n).map(|k| self.rows[k][i] * x[k]).sum();
            x[i] = (y[i] - s) / self.rows[i][i];
        }
        x
    }

    /// Appends a column with off-diagonal `g` and diagonal `d`; false when
    /// the extended matrix is numerically singular.
    fn push(&mut self, g: &[f64], d: f64) -> bool {
        let w = self.forward(g);
        let pivot2 = d - w.iter().map(|v| v * v).sum::<f64>();
        if !(d > 0.0) || pivot2 <= 1e-12 * d {
            return false;
        }
        let mut row = w;
        row.push(pivot2.sqrt());
        self.rows.push(row);
        true
    }

    fn solve(&self, b: &[f64]) -> Vec<f64> {
        self.backward(&self.forward(b))
    }
}

/// Gram-domain OMP. `gram_column(j)` must return `G[:, j]` (length `m`).
/// The reported residual norm is `sqrt(|z|^2 - g_S . b_S)`.
pub fn pursue<F>(correlations: &[f64], norm2: f64, q: usize, eps: f64, mut gram_column: F) -> SparseCode
where
    F: FnMut(usize) -> Vec<f64>,
{
    let m = correlations.len();
    if m == 0 || q == 0 || !(norm2 > 0.0) {
        return SparseCode::empty(norm2.max(0.0).sqrt());
    }
    let floor = CORRELATION_FLOOR * norm2.sqrt();
    let mut residual = correlations.to_vec();
    let mut in_support = vec![false; m];
    let mut support: Vec<usize> = Vec::new();
    let mut columns: Vec<Vec<f64>> = Vec::new();
    let mut chol = Cholesky::new();
    let mut values: Vec<f64> = Vec::new();
    let mut r2 = norm2;
    let mut degenerate = false;

    while support.len() < q.min(m) {
        if r2.max(0.0).sqrt() <= eps {
            break;
        }
        let mut best = None;
        let mut best_abs = -1.0;
        for (j, &a) in residual.iter().enumerate() {
            if !in_support[j] && a.abs() > best_abs {
                best_abs = a.abs();
                best = Some(j);
            }
        }
        let Some(j) = best else { break };
        if !support.is_empty() && best_abs <= floor {
            break;
        }
        let gj = gram_column(j);
        let off: Vec<f64> = support.iter().map(|&s| gj[s]).collect();
        if !chol.push(&off, gj[j]) {
            degenerate = true;
            break;
        }
        in_support[j] = true;
        support.push(j);
        columns.push(gj);

        let b_s: Vec<f64> = support.iter().map(|&s| correlations[s]).collect();
        values = chol.solve(&b_s);
        residual.copy_from_slice(correlations);
        for (g, &v) in columns.iter().zip(&values) {
            for (r, gi) in residual.iter_mut().zip(g) {
                *r -= gi * v;
            }
        }
        r2 = norm2 - values.iter().zip(&b_s).map(|(v, b)| v * b).sum::<f64>();
    }
    SparseCode {
        support,
        values,
        residual_norm: r2.max(0.0).sqrt(),
        degenerate,
    }
}

fn check_signal(d: &Dictionary, len: usize) -> Result<()> {
    if d.dim() != len {
        return Err(LkdlError::DimensionMismatch(format!(
            "signal has dimension {len}, dictionary atoms have {}",
            d.dim()
        )));
    }
    Ok(())
}

fn explicit_residual(d: &DMatrix<f64>, x: &[f64], code: &SparseCode) -> f64 {
    let mut r = x.to_vec();
    for (&j, &v) in code.support.iter().zip(&code.values) {
        for (ri, di) in r.iter_mut().zip(col(d, j)) {
            *ri -= v * di;
        }
    }
    r.iter().map(|v| v * v).sum::<f64>().sqrt()
}

/// OMP of one signal over a unit-norm dictionary. Stops at `q` atoms or
/// once the residual norm is at most `eps`.
pub fn omp(d: &Dictionary, x: &[f64], q: usize, eps: f64) -> Result<SparseCode> {
    check_signal(d, x.len())?;
    let atoms = d.atoms();
    let b: Vec<f64> = (0..d.len()).map(|j| dot(col(atoms, j), x)).collect();
    let norm2 = dot(x, x);
    let mut code = pursue(&b, norm2, q, eps, |j| {
        let dj = col(atoms, j);
        (0..atoms.ncols()).map(|i| dot(col(atoms, i), dj)).collect()
    });
    code.residual_norm = explicit_residual(atoms, x, &code);
    Ok(code)
}

/// OMP of every column of `x`, sharing one precomputed Gram matrix.
pub fn omp_batch(d: &Dictionary, x: &DMatrix<f64>, q: usize, eps: f64) -> Result<SparseCodeMatrix> {
    if x.ncols() > 0 {
        check_signal(d, x.nrows())?;
    }
    let atoms = d.atoms();
    let gram = at_b(atoms, atoms);
    let dtx = at_b(atoms, x);
    let code_one = |i: usize| {
        let xi = col(x, i);
        let mut code = pursue(col(&dtx, i), dot(xi, xi), q, eps, |j| col(&gram, j).to_vec());
        code.residual_norm = explicit_residual(atoms, xi, &code);
        code
    };
    #[cfg(feature = "parallel")]
    let codes = {
        use rayon::prelude::*;
        (0..x.ncols()).into_par_iter().map(code_one).collect()
    };
    #[cfg(not(feature = "parallel"))]
    let codes = (0..x.ncols()).map(code_one).collect();
    Ok(SparseCodeMatrix {
        n_atoms: d.len(),
        codes,
    })
}

/// Kernel OMP of one signal `z` given `K(X, X)`, the row `K(z, X)` and
/// `k(z, z)`. Each selected atom costs one `K a_j` product, `O(N^2)`.
pub fn komp(
    k_xx: &KernelMatrix,
    k_zx: &[f64],
    kzz: f64,
    a: &CoefficientDictionary,
    q: usize,
    eps: f64,
) -> Result<SparseCode> {
    let n = k_xx.nrows();
    if k_xx.ncols() != n || k_zx.len() != n || a.coefficients.nrows() != n {
        return Err(LkdlError::DimensionMismatch(format!(
            "K is {}x{}, K(z,X) has {} entries, A has {} rows",
            n,
            k_xx.ncols(),
            k_zx.len(),
            a.coefficients.nrows()
        )));
    }
    let coeffs = &a.coefficients;
    let b: Vec<f64> = (0..a.n_atoms()).map(|j| dot(col(coeffs, j), k_zx)).collect();
    Ok(pursue(&b, kzz, q, eps, |j| {
        let kaj = &k_xx.entries * coeffs.column(j);
        (0..coeffs.ncols()).map(|i| dot(col(coeffs, i), kaj.as_slice())).collect()
    }))
}

/// Kernel OMP of every training sample (the columns of `K`), sharing
/// `K A` and `A^T K A`.
pub fn komp_batch(k_xx: &KernelMatrix, a: &CoefficientDictionary, q: usize, eps: f64) -> Result<SparseCodeMatrix> {
    let n = k_xx.nrows();
    if k_xx.ncols() != n || a.coefficients.nrows() != n {
        return Err(LkdlError::DimensionMismatch("K must be square and match A".into()));
    }
    let ka = &k_xx.entries * &a.coefficients;
    let gram = at_b(&a.coefficients, &ka);
    let b_all = ka.transpose();
    let code_one = |i: usize| pursue(col(&b_all, i), k_xx.entries[(i, i)], q, eps, |j| col(&gram, j).to_vec());
    #[cfg(feature = "parallel")]
    let codes = {
        use rayon::prelude::*;
        (0..n).into_par_iter().map(code_one).collect()
    };
    #[cfg(not(feature = "parallel"))]
    let codes = (0..n).map(code_one).collect();
    Ok(SparseCodeMatrix {
        n_atoms: a.n_atoms(),
        codes,
    })
}

#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernels::{gram, Kernel};
    use crate::nystrom::exact_virtual_samples;
    use crate::rng;
    use rand::Rng as _;
    use rand_distr::{Distribution, StandardNormal};

    fn gaussian(p: usize, n: usize, r: &mut rng::Rng) -> DMatrix<f64> {
        DMatrix::from_fn(p, n, |_, _| StandardNormal.sample(r))
    }

    fn random_dict(p: usize, m: usize, seed: u64) -> Dictionary {
        let mut r = rng::stream(seed);
        Dictionary::from_unnormalized(gaussian(p, m, &mut r)).unwrap()
    }

    fn residual_vec(d: &Dictionary, x: &[f64], code: &SparseCode) -> Vec<f64> {
        let mut r = x.to_vec();
        for (&j, &v) in code.support.iter().zip(&code.values) {
            for (ri, di) in r.iter_mut().zip(col(d.atoms(), j)) {
                *ri -= v * di;
            }
        }
        r
    }

    #[test]
    fn atom_is_coded_by_itself() {
        let d = random_dict(6, 9, 1);
        let x = col(d.atoms(), 3).to_vec();
        let code = omp(&d, &x, 1, 0.0).unwrap();
        assert_eq!(code.support, vec![3]);
        assert!((code.values[0] - 1.0).abs() < 1e-12);
        assert!(code.residual_norm < 1e-12);
    }

    #[test]
    fn orthogonal_signal_selects_one_zero_atom() {
        let mut atoms = DMatrix::zeros(3, 2);
        atoms[(0, 0)] = 1.0;
        atoms[(1, 1)] = 1.0;
        let d = Dictionary::new(atoms).unwrap();
        let x = [0.0, 0.0, 2.5];
        let code = omp(&d, &x, 1, 0.0).unwrap();
        assert_eq!(code.support, vec![0]);
        assert_eq!(code.values, vec![0.0]);
        assert_eq!(code.residual_norm, 2.5);
        assert!(omp(&d, &[1.0, 2.0], 1, 0.0).is_err());
    }

    #[test]
    fn eps_stops_early() {
        let d = random_dict(10, 20, 2);
        let mut r = rng::stream(3);
        let x: Vec<f64> = (0..10).map(|_| StandardNormal.sample(&mut r)).collect();
        let full = omp(&d, &x, 8, 0.0).unwrap();
        let partial = omp(&d, &x, 8, full.residual_norm * 1.5 + 0.3).unwrap();
        assert!(partial.support.len() < full.support.len());
        assert!(partial.residual_norm <= full.residual_norm * 1.5 + 0.3 || partial.support.len() == 8);
    }

    #[test]
    fn residual_orthogonal_monotone_and_distinct() {
        for seed in 0..30 {
            let d = random_dict(12, 25, 100 + seed);
            let mut r = rng::stream(seed);
            let x: Vec<f64> = (0..12).map(|_| StandardNormal.sample(&mut r)).collect();
            let mut prev = f64::INFINITY;
            for q in 1..=8 {
                let code = omp(&d, &x, q, 0.0).unwrap();
                let res = residual_vec(&d, &x, &code);
                for &j in &code.support {
                    assert!(dot(&res, col(d.atoms(), j)).abs() <= 1e-8);
                }
                let mut s = code.support.clone();
                s.sort_unstable();
                s.dedup();
                assert_eq!(s.len(), code.support.len());
                assert!(code.residual_norm <= prev + 1e-12);
                prev = code.residual_norm;
            }
        }
    }

    #[test]
    fn batch_matches_single_and_handles_edges() {
        for seed in 0..100 {
            let d = random_dict(10, 15, 200 + seed);
            let mut r = rng::stream(seed);
            let x = gaussian(10, 3, &mut r);
            let q = 1 + (seed as usize % 4);
            let batch = omp_batch(&d, &x, q, 0.0).unwrap();
            for i in 0..3 {
                let single = omp(&d, col(&x, i), q, 0.0).unwrap();
                assert_eq!(single.support, batch.codes[i].support);
                for (a, b) in single.values.iter().zip(&batch.codes[i].values) {
                    assert!((a - b).abs() <= 1e-10);
                }
            }
        }
        let d = random_dict(5, 5, 9);
        let codes = omp_batch(&d, d.atoms(), 1, 0.0).unwrap();
        let dense = codes.to_dense();
        assert!((dense - DMatrix::<f64>::identity(5, 5)).amax() < 1e-12);
        let empty = omp_batch(&d, &DMatrix::zeros(5, 0), 2, 0.0).unwrap();
        assert!(empty.is_empty());
        assert_eq!(empty.to_dense().shape(), (5, 0));
    }

    #[test]
    fn singular_support_gram_flags_degeneracy() {
        // two identical atoms: after picking one, the copy has zero residual
        // correlation, so pick a third atom collinear with a combination
        let atoms = DMatrix::from_column_slice(2, 3, &[1.0, 0.0, 0.0, 1.0, std::f64::consts::FRAC_1_SQRT_2, std::f64::consts::FRAC_1_SQRT_2]);
        let d = Dictionary::new(atoms).unwrap();
        let code = omp(&d, &[0.3, 1.0], 3, 0.0).unwrap();
        assert!(code.support.len() <= 2);
        let gram = DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 1.0, 1.0]);
        let code = pursue(&[1.0, 1.0], 2.0, 2, 0.0, |j| col(&gram, j).to_vec());
        assert_eq!(code.support.len(), 1);
        let code = pursue(&[1.0, 0.5], 2.0, 2, 0.0, |j| col(&gram, j).to_vec());
        assert!(code.degenerate);
    }

    #[test]
    fn exhaustive_pair_oracle() {
        use itertools_free::pairs;
        let mut worse = 0;
        for seed in 0..200 {
            let d = random_dict(8, 12, 1000 + seed);
            let mut r = rng::stream(5000 + seed);
            let i = r.random_range(0..12);
            let mut j = r.random_range(0..11);
            if j >= i {
                j += 1;
            }
            let mut x = vec![0.0; 8];
            for (idx, c) in [(i, 1.0 + r.random::<f64>()), (j, -1.0 - r.random::<f64>())] {
                for (xi, di) in x.iter_mut().zip(col(d.atoms(), idx)) {
                    *xi += c * di;
                }
            }
            let oracle = pairs(12)
                .map(|(a, b)| ls_residual2(&d, &x, &[a, b]))
                .fold(f64::INFINITY, f64::min);
            let code = omp(&d, &x, 2, 0.0).unwrap();
            let obj = code.residual_norm * code.residual_norm;
            // no size-2 support beats the exhaustive optimum
            assert!(oracle <= obj + 1e-12);
            if obj > 1.05 * oracle + 1e-20 {
                worse += 1;
            }
        }
        eprintln!("omp worse than 1.05x oracle on {worse}/200");
    }

    mod itertools_free {
        pub fn pairs(m: usize) -> impl Iterator<Item = (usize, usize)> {
            (0..m).flat_map(move |a| ((a + 1)..m).map(move |b| (a, b)))
        }
    }

    fn ls_residual2(d: &Dictionary, x: &[f64], support: &[usize]) -> f64 {
        let ds = crate::matrix::select_columns(d.atoms(), support);
        let xv = nalgebra::DVector::from_column_slice(x);
        let g = ds.tr_mul(&ds);
        let coef = g.lu().solve(&ds.tr_mul(&xv)).unwrap();
        (xv - ds * coef).norm_squared()
    }

    #[test]
    fn komp_equals_omp_under_linear_kernel() {
        for seed in 0..100 {
            let mut r = rng::stream(300 + seed);
            let p = 12;
            let n = 20 + (seed as usize % 30);
            let m = 5 + (seed as usize % 20).min(n - 1);
            let x = gaussian(p, n, &mut r);
            // dictionary atoms are the first m (normalized) samples
            let k = gram(&Kernel::Linear, &x).unwrap();
            let mut a = DMatrix::zeros(n, m);
            for j in 0..m {
                a[(j, j)] = 1.0;
            }
            let mut a = CoefficientDictionary::new(a);
            a.normalize(&k);
            let d = Dictionary::from_unnormalized(&x * &a.coefficients).unwrap();
            let z: Vec<f64> = (0..p).map(|_| StandardNormal.sample(&mut r)).collect();
            let kzx: Vec<f64> = (0..n).map(|i| dot(col(&x, i), &z)).collect();
            let q = 1 + seed as usize % 5;
            let kc = komp(&k, &kzx, dot(&z, &z), &a, q, 0.0).unwrap();
            let lc = omp(&d, &z, q, 0.0).unwrap();
            assert_eq!(kc.support, lc.support, "seed {seed}");
            for (u, v) in kc.values.iter().zip(&lc.values) {
                assert!((u - v).abs() <= 1e-8);
            }
            // kernel residual correlations vanish on the support
            let ka = &k.entries * &a.coefficients;
            let gamma = kc.to_dense(m);
            for &j in &kc.support {
                let corr = dot(&kzx, col(&a.coefficients, j))
                    - (0..m).map(|i| gamma[i] * a.coefficients.column(i).dot(&ka.column(j))).sum::<f64>();
                assert!(corr.abs() <= 1e-6);
            }
        }
    }

    #[test]
    fn komp_codes_a_feature_space_atom() {
        let mut r = rng::stream(7);
        let x = gaussian(4, 15, &mut r);
        let kern = Kernel::gaussian(1.0);
        let k = gram(&kern, &x).unwrap();
        let mut a = CoefficientDictionary::new(gaussian(15, 6, &mut r));
        a.normalize(&k);
        // z := Phi(X) a_2, so K(z, X) = (K a_2)^T and k(z, z) = 1
        let kzx = (&k.entries * a.coefficients.column(2)).as_slice().to_vec();
        let code = komp(&k, &kzx, 1.0, &a, 1, 0.0).unwrap();
        assert_eq!(code.support, vec![2]);
        assert!((code.values[0] - 1.0).abs() < 1e-10);
        assert!(code.residual_norm < 1e-6);
        for v in a.feature_norms2(&k) {
            assert!((v - 1.0).abs() < 1e-8);
        }
    }

    #[test]
    fn komp_matches_omp_on_exact_virtual_samples() {
        for seed in 0..20 {
            let mut r = rng::stream(400 + seed);
            let b = gaussian(20, 20, &mut r);
            let k = KernelMatrix {
                entries: &b * b.transpose(),
                same_source: true,
            };
            let f = exact_virtual_samples(&k, 20).unwrap();
            let mut a = CoefficientDictionary::new(gaussian(20, 10, &mut r));
            a.normalize(&k);
            let d = Dictionary::from_unnormalized(&f.features * &a.coefficients).unwrap();
            let i = seed as usize % 20;
            let kc = komp(&k, k.entries.row(i).transpose().as_slice(), k.entries[(i, i)], &a, 3, 0.0).unwrap();
            let lc = omp(&d, col(&f.features, i), 3, 0.0).unwrap();
            let (ok, ol) = (kc.residual_norm.powi(2), lc.residual_norm.powi(2));
            assert!((ok - ol).abs() <= 1e-8 * k.entries[(i, i)].max(1.0), "{ok} vs {ol}");
        }
    }

    #[test]
    fn komp_batch_matches_single() {
        let mut r = rng::stream(8);
        let x = gaussian(5, 25, &mut r);
        let k = gram(&Kernel::polynomial(2), &x).unwrap();
        let mut a = CoefficientDictionary::new(gaussian(25, 8, &mut r));
        a.normalize(&k);
        let batch = komp_batch(&k, &a, 3, 0.0).unwrap();
        for i in 0..25 {
            let row = k.entries.row(i).transpose();
            let single = komp(&k, row.as_slice(), k.entries[(i, i)], &a, 3, 0.0).unwrap();
            assert_eq!(single.support, batch.codes[i].support);
            for (u, v) in single.values.iter().zip(&batch.codes[i].values) {
                assert!((u - v).abs() < 1e-9);
            }
        }
    }
}
