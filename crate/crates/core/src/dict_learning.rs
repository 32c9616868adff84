//! Dictionary learning: MOD and K-SVD in input (or virtual) space, and
//! kernel MOD over a coefficient dictionary.
//!
//! `learn` alternates batch OMP with a dictionary update. After each
//! update the fresh OMP code of a signal is kept only if it does not
//! represent the signal worse than the updated previous code, so the
//! objective trace never increases.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{LkdlError, Result};
use crate::kernels::KernelMatrix;
use crate::matrix::{at_b, col, col_mut, pinv_psd};
use crate::rng;
use crate::sparse_coding::{komp_batch, omp_batch, CoefficientDictionary, SparseCode, SparseCodeMatrix};

/// Relative eigenvalue cutoff of the `Gamma Gamma^T` pseudo-inverse.
pub const PINV_CUTOFF: f64 = 1e-10;

/// `d x m` matrix of unit-norm atoms.
#[derive(Debug, Clone, PartialEq)]
pub struct Dictionary {
    atoms: DMatrix<f64>,
}

impl Dictionary {
    /// Wraps atoms that are already unit-norm (within `1e-10`).
    pub fn new(atoms: DMatrix<f64>) -> Result<Self> {
        if atoms.iter().any(|v| !v.is_finite()) {
            return Err(LkdlError::NonFinite("dictionary"));
        }
        for j in 0..atoms.ncols() {
            let n = atoms.column(j).norm();
            if (n - 1.0).abs() > 1e-10 {
                return Err(LkdlError::InvalidParameter(format!("atom {j} has norm {n}, expected 1")));
            }
        }
        Ok(Self { atoms })
    }

    /// Normalizes every column; zero columns are an error.
    pub fn from_unnormalized(mut atoms: DMatrix<f64>) -> Result<Self> {
        for j in 0..atoms.ncols() {
            let n = atoms.column(j).norm();
            if !(n > 0.0) || !n.is_finite() {
                return Err(LkdlError::Degenerate(format!("atom {j} has norm {n}")));
            }
            atoms.column_mut(j).scale_mut(1.0 / n);
        }
        Ok(Self { atoms })
    }

    pub fn atoms(&self) -> &DMatrix<f64> {
        &self.atoms
    }

    pub fn into_atoms(self) -> DMatrix<f64> {
        self.atoms
    }

    /// Row dimension `d`.
    pub fn dim(&self) -> usize {
        self.atoms.nrows()
    }

    /// Number of atoms `m`.
    pub fn len(&self) -> usize {
        self.atoms.ncols()
    }

    pub fn is_empty(&self) -> bool {
        self.atoms.ncols() == 0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LearnMethod {
    Mod,
    Ksvd,
}

#[derive(Debug, Clone)]
pub enum Init {
    /// A seeded random subset of `m` training columns.
    DataColumns,
    Provided(Dictionary),
}

#[derive(Debug, Clone)]
pub struct LearnConfig {
    pub m: usize,
    pub q: usize,
    pub iterations: usize,
    pub method: LearnMethod,
    pub init: Init,
    pub seed: u64,
    /// Residual tolerance handed to OMP; 0 means fixed cardinality.
    pub eps: f64,
}

impl LearnConfig {
    pub fn new(m: usize, q: usize, iterations: usize, method: LearnMethod, seed: u64) -> Self {
        Self {
            m,
            q,
            iterations,
            method,
            init: Init::DataColumns,
            seed,
            eps: 0.0,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct LearnReport {
    /// `|X - D Gamma|_F^2` after initialization and after every iteration.
    pub objective_trace: Vec<f64>,
    pub iterations: usize,
    pub replaced_atoms: usize,
    /// A pseudo-inverse cut an eigenvalue or OMP hit a singular support.
    pub degenerate: bool,
}

#[derive(Debug, Clone)]
pub struct Learned {
    pub dictionary: Dictionary,
    pub codes: SparseCodeMatrix,
    pub report: LearnReport,
}

#[derive(Debug, Clone)]
pub struct KernelLearned {
    pub dictionary: CoefficientDictionary,
    pub codes: SparseCodeMatrix,
    pub report: LearnReport,
}

/// Indices of the initial atoms: `min(m, N)` distinct columns.
pub fn init_columns(n: usize, m: usize, seed: u64) -> Vec<usize> {
    use rand::seq::SliceRandom;
    let mut idx: Vec<usize> = (0..n).collect();
    let mut r = rng::stream(seed);
    let (chosen, _) = idx.partial_shuffle(&mut r, m.min(n));
    chosen.to_vec()
}

fn initial_dictionary(x: &DMatrix<f64>, m: usize, seed: u64) -> Result<Dictionary> {
    use rand_distr::{Distribution, StandardNormal};
    let n = x.ncols();
    if m > n {
        log::warn!("requested {m} atoms from only {n} samples; padding with random atoms");
    }
    let idx = init_columns(n, m, seed);
    let mut r = rng::stream(rng::derive_seed(seed, 1));
    let mut atoms = DMatrix::zeros(x.nrows(), m);
    for j in 0..m {
        let source = idx.get(j).map(|&i| col(x, i));
        let usable = source.filter(|s| s.iter().any(|&v| v != 0.0));
        match usable {
            Some(s) => col_mut(&mut atoms, j).copy_from_slice(s),
            None => col_mut(&mut atoms, j).iter_mut().for_each(|v| *v = StandardNormal.sample(&mut r)),
        }
    }
    Dictionary::from_unnormalized(atoms)
}

fn residual_norms2(x: &DMatrix<f64>, atoms: &DMatrix<f64>, codes: &SparseCodeMatrix) -> Vec<f64> {
    (0..x.ncols())
        .map(|i| {
            let mut r = col(x, i).to_vec();
            let code = &codes.codes[i];
            for (&j, &v) in code.support.iter().zip(&code.values) {
                for (ri, di) in r.iter_mut().zip(col(atoms, j)) {
                    *ri -= v * di;
                }
            }
            r.iter().map(|v| v * v).sum()
        })
        .collect()
}

/// `|X - D Gamma|_F^2`.
pub fn objective(x: &DMatrix<f64>, d: &Dictionary, codes: &SparseCodeMatrix) -> f64 {
    residual_norms2(x, d.atoms(), codes).iter().sum()
}

/// Result of a MOD step.
#[derive(Debug, Clone)]
pub struct ModUpdate {
    pub dictionary: Dictionary,
    /// Codes with rows rescaled so that `D Gamma` is unchanged by the atom normalization.
    pub gamma: DMatrix<f64>,
    pub replaced_atoms: usize,
    pub degenerate: bool,
}

/// Replaces atom `j` by the worst-represented signal not yet used.
fn replacement_signal(x: &DMatrix<f64>, residual2: &[f64], used: &mut [bool]) -> Option<Vec<f64>> {
    let mut order: Vec<usize> = (0..x.ncols()).collect();
    order.sort_by(|&a, &b| residual2[b].total_cmp(&residual2[a]).then(a.cmp(&b)));
    for i in order {
        if used[i] {
            continue;
        }
        let xi = col(x, i);
        let n = xi.iter().map(|v| v * v).sum::<f64>().sqrt();
        if n > 0.0 {
            used[i] = true;
            return Some(xi.iter().map(|v| v / n).collect());
        }
    }
    None
}

/// `D = X Gamma^+`, then unit-normalizes the atoms and scales the rows of
/// `Gamma` to keep `D Gamma` fixed. Atoms that come out zero are replaced.
pub fn mod_update(x: &DMatrix<f64>, gamma: &DMatrix<f64>) -> Result<ModUpdate> {
    if gamma.ncols() != x.ncols() {
        return Err(LkdlError::DimensionMismatch(format!(
            "X has {} columns, Gamma has {}",
            x.ncols(),
            gamma.ncols()
        )));
    }
    let (pinv, cut) = pinv_psd(&(gamma * gamma.transpose()), PINV_CUTOFF);
    let mut d = x * gamma.transpose() * pinv;
    let mut gamma = gamma.clone();
    let norms: Vec<f64> = (0..d.ncols()).map(|j| d.column(j).norm()).collect();
    let max_norm = norms.iter().copied().fold(0.0, f64::max);
    let mut dead = Vec::new();
    for (j, &n) in norms.iter().enumerate() {
        if n > 1e-12 * max_norm && n > 0.0 {
            d.column_mut(j).scale_mut(1.0 / n);
            gamma.row_mut(j).scale_mut(n);
        } else {
            dead.push(j);
        }
    }
    if !dead.is_empty() {
        let r = x - &d * &gamma;
        let residual2: Vec<f64> = (0..r.ncols()).map(|i| r.column(i).norm_squared()).collect();
        let mut used = vec![false; x.ncols()];
        for &j in &dead {
            let atom = replacement_signal(x, &residual2, &mut used)
                .ok_or_else(|| LkdlError::Degenerate("no nonzero signal to replace a dead atom".into()))?;
            col_mut(&mut d, j).copy_from_slice(&atom);
            gamma.row_mut(j).fill(0.0);
        }
    }
    Ok(ModUpdate {
        dictionary: Dictionary::new(d)?,
        gamma,
        replaced_atoms: dead.len(),
        degenerate: cut,
    })
}

/// Leading singular triplet of `e` by power iteration on `e e^T`, started
/// from `u0`. Returns `(u, s * v)`.
fn rank_one(e: &DMatrix<f64>, u0: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let mut u = nalgebra::DVector::from_column_slice(u0);
    let mut v = e.tr_mul(&u);
    let mut sigma = v.norm();
    for _ in 0..1000 {
        if sigma == 0.0 {
            break;
        }
        let ev = e * &v;
        let n = ev.norm();
        if n == 0.0 {
            break;
        }
        u = ev / n;
        v = e.tr_mul(&u);
        let next = v.norm();
        let done = (next - sigma).abs() <= 1e-10 * next;
        sigma = next;
        if done {
            break;
        }
    }
    (u.as_slice().to_vec(), v.as_slice().to_vec())
}

/// One K-SVD sweep: atoms in ascending order, each replaced together with
/// its nonzero coefficients by the rank-1 approximation of the residual
/// restricted to the signals that use it. Supports are unchanged.
pub fn ksvd_update(x: &DMatrix<f64>, d: &Dictionary, codes: &SparseCodeMatrix) -> Result<(Dictionary, SparseCodeMatrix, usize)> {
    if codes.len() != x.ncols() || codes.n_atoms != d.len() || d.dim() != x.nrows() {
        return Err(LkdlError::DimensionMismatch("X, D and Gamma shapes disagree".into()));
    }
    let p = x.nrows();
    let m = d.len();
    let mut atoms = d.atoms().clone();
    let mut codes = codes.clone();
    let gamma = codes.to_dense();
    let mut r = x - &atoms * &gamma;

    // users[j] = (signal, position of j in that signal's support)
    let mut users: Vec<Vec<(usize, usize)>> = vec![Vec::new(); m];
    for (i, code) in codes.codes.iter().enumerate() {
        for (pos, &j) in code.support.iter().enumerate() {
            users[j].push((i, pos));
        }
    }

    let mut dead = Vec::new();
    for j in 0..m {
        let uses = &users[j];
        if uses.is_empty() {
            dead.push(j);
            continue;
        }
        let mut e = DMatrix::zeros(p, uses.len());
        for (c, &(i, pos)) in uses.iter().enumerate() {
            let g = codes.codes[i].values[pos];
            for ((ev, rv), dv) in col_mut(&mut e, c).iter_mut().zip(col(&r, i)).zip(col(&atoms, j)) {
                *ev = rv + dv * g;
            }
        }
        let (u, sv) = rank_one(&e, col(&atoms, j));
        col_mut(&mut atoms, j).copy_from_slice(&u);
        for (c, &(i, pos)) in uses.iter().enumerate() {
            codes.codes[i].values[pos] = sv[c];
            for ((rv, ev), uv) in col_mut(&mut r, i).iter_mut().zip(col(&e, c)).zip(&u) {
                *rv = ev - uv * sv[c];
            }
        }
    }
    if !dead.is_empty() {
        let residual2: Vec<f64> = (0..r.ncols()).map(|i| r.column(i).norm_squared()).collect();
        let mut used = vec![false; x.ncols()];
        for &j in &dead {
            if let Some(atom) = replacement_signal(x, &residual2, &mut used) {
                col_mut(&mut atoms, j).copy_from_slice(&atom);
            }
        }
    }
    // power iteration returns unit vectors; renormalize to clear drift
    let dictionary = Dictionary::from_unnormalized(atoms)?;
    Ok((dictionary, codes, dead.len()))
}

/// The codes of `codes` with their values re-read from `gamma`, keeping
/// each support and its order.
fn reread_values(codes: &SparseCodeMatrix, gamma: &DMatrix<f64>) -> SparseCodeMatrix {
    SparseCodeMatrix {
        n_atoms: codes.n_atoms,
        codes: codes
            .codes
            .iter()
            .enumerate()
            .map(|(i, c)| SparseCode {
                values: c.support.iter().map(|&j| gamma[(j, i)]).collect(),
                ..c.clone()
            })
            .collect(),
    }
}

/// Atoms whose absolute inner product with an earlier atom reaches this
/// are treated as duplicates.
pub const DUPLICATE_COHERENCE: f64 = 0.99;

/// Unused atoms and duplicates of earlier atoms (or, when there are none,
/// the least-used atom), each paired with the worst-represented signal
/// that should replace it. The caller keeps the swap only if it lowers
/// the objective. Works from the atom Gram matrix so the input-space and
/// feature-space learners agree.
fn atoms_to_clear(gram: &DMatrix<f64>, codes: &SparseCodeMatrix, residual2: &[f64], norms2: &[f64]) -> Option<Vec<(usize, usize)>> {
    let m = gram.ncols();
    let mut used = vec![false; m];
    for c in &codes.codes {
        for (&j, &v) in c.support.iter().zip(&c.values) {
            if v != 0.0 {
                used[j] = true;
            }
        }
    }
    let mut clear = Vec::new();
    for j in 0..m {
        let dup = (0..j).any(|l| !clear.contains(&l) && gram[(l, j)].abs() >= DUPLICATE_COHERENCE * (gram[(l, l)] * gram[(j, j)]).sqrt());
        if !used[j] || dup {
            clear.push(j);
        }
    }
    if clear.is_empty() {
        let mut count = vec![0usize; m];
        for c in &codes.codes {
            for &j in &c.support {
                count[j] += 1;
            }
        }
        let least = (0..m).min_by_key(|&j| (count[j], j))?;
        clear.push(least);
    }
    let mut order: Vec<usize> = (0..residual2.len()).filter(|&i| norms2[i] > 0.0).collect();
    order.sort_by(|&a, &b| residual2[b].total_cmp(&residual2[a]).then(a.cmp(&b)));
    let swaps: Vec<(usize, usize)> = clear.into_iter().zip(order).collect();
    (!swaps.is_empty()).then_some(swaps)
}

/// Keeps, per signal, whichever code has the smaller residual.
fn keep_better(fresh: SparseCodeMatrix, fresh_r2: &[f64], old: SparseCodeMatrix, old_r2: &[f64]) -> (SparseCodeMatrix, f64) {
    let mut total = 0.0;
    let codes = fresh
        .codes
        .into_iter()
        .zip(old.codes)
        .enumerate()
        .map(|(i, (f, o))| {
            if fresh_r2[i] <= old_r2[i] {
                total += fresh_r2[i];
                f
            } else {
                total += old_r2[i];
                SparseCode {
                    residual_norm: old_r2[i].sqrt(),
                    ..o
                }
            }
        })
        .collect();
    (
        SparseCodeMatrix {
            n_atoms: fresh.n_atoms,
            codes,
        },
        total,
    )
}

/// Alternates batch OMP and the chosen dictionary update.
pub fn learn(x: &DMatrix<f64>, cfg: &LearnConfig) -> Result<Learned> {
    if cfg.q == 0 || cfg.m == 0 {
        return Err(LkdlError::InvalidParameter("m and q must be at least 1".into()));
    }
    if x.ncols() == 0 {
        return Err(LkdlError::InvalidParameter("no training samples".into()));
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(LkdlError::NonFinite("training samples"));
    }
    let mut d = match &cfg.init {
        Init::DataColumns => initial_dictionary(x, cfg.m, cfg.seed)?,
        Init::Provided(d) => {
            if d.dim() != x.nrows() {
                return Err(LkdlError::DimensionMismatch("initial dictionary dimension".into()));
            }
            d.clone()
        }
    };
    let mut codes = omp_batch(&d, x, cfg.q, cfg.eps)?;
    let mut report = LearnReport::default();
    report.degenerate |= codes.any_degenerate();
    report.objective_trace.push(residual_norms2(x, d.atoms(), &codes).iter().sum());

    for _ in 0..cfg.iterations {
        let (next_d, updated) = match cfg.method {
            LearnMethod::Mod => {
                let up = mod_update(x, &codes.to_dense())?;
                report.replaced_atoms += up.replaced_atoms;
                report.degenerate |= up.degenerate;
                let carried = reread_values(&codes, &up.gamma);
                (up.dictionary, carried)
            }
            LearnMethod::Ksvd => {
                let (nd, nc, replaced) = ksvd_update(x, &d, &codes)?;
                report.replaced_atoms += replaced;
                (nd, nc)
            }
        };
        d = next_d;
        let old_r2 = residual_norms2(x, d.atoms(), &updated);
        let fresh = omp_batch(&d, x, cfg.q, cfg.eps)?;
        report.degenerate |= fresh.any_degenerate();
        let fresh_r2: Vec<f64> = fresh.codes.iter().map(|c| c.residual_norm * c.residual_norm).collect();
        let (kept, total) = keep_better(fresh, &fresh_r2, updated, &old_r2);
        if !total.is_finite() {
            return Err(LkdlError::Numerical(format!(
                "objective became non-finite at iteration {}",
                report.iterations + 1
            )));
        }
        codes = kept;
        let mut total = total;
        let kept_r2 = residual_norms2(x, d.atoms(), &codes);
        let gram = at_b(d.atoms(), d.atoms());
        let norms2: Vec<f64> = (0..x.ncols()).map(|i| x.column(i).norm_squared()).collect();
        if let Some(swaps) = atoms_to_clear(&gram, &codes, &kept_r2, &norms2) {
            let mut atoms = d.atoms().clone();
            for &(j, i) in &swaps {
                let xi = x.column(i);
                atoms.column_mut(j).copy_from(&(xi / xi.norm()));
            }
            let trial = Dictionary::from_unnormalized(atoms)?;
            let trial_codes = omp_batch(&trial, x, cfg.q, cfg.eps)?;
            let trial_total: f64 = trial_codes.codes.iter().map(|c| c.residual_norm * c.residual_norm).sum();
            if trial_total <= total {
                d = trial;
                codes = trial_codes;
                total = trial_total;
                report.replaced_atoms += swaps.len();
            }
        }
        report.objective_trace.push(total);
        report.iterations += 1;
    }
    Ok(Learned {
        dictionary: d,
        codes,
        report,
    })
}

/// Feature-space residual `k(z,z) - 2 g^T b + g^T G g` of every training
/// sample, with `b = (K A)^T` columns and `G = A^T K A`.
fn kernel_residuals2(k: &KernelMatrix, ka: &DMatrix<f64>, gram: &DMatrix<f64>, codes: &SparseCodeMatrix) -> Vec<f64> {
    codes
        .codes
        .iter()
        .enumerate()
        .map(|(i, c)| {
            let mut cross = 0.0;
            let mut quad = 0.0;
            for (s, (&j, &gj)) in c.support.iter().zip(&c.values).enumerate() {
                cross += gj * ka[(i, j)];
                for (&l, &gl) in c.support[..s].iter().zip(&c.values[..s]) {
                    quad += 2.0 * gj * gl * gram[(j, l)];
                }
                quad += gj * gj * gram[(j, j)];
            }
            (k.entries[(i, i)] - 2.0 * cross + quad).max(0.0)
        })
        .collect()
}

/// `trace(K) - 2 trace(K A Gamma) + trace(Gamma^T A^T K A Gamma)`.
pub fn kernel_objective(k: &KernelMatrix, a: &CoefficientDictionary, codes: &SparseCodeMatrix) -> f64 {
    let ka = &k.entries * &a.coefficients;
    let gram = at_b(&a.coefficients, &ka);
    kernel_residuals2(k, &ka, &gram, codes).iter().sum()
}

/// Kernel dictionary learning with KOMP coding and the MOD update
/// `A = Gamma^+`, all through the training kernel matrix.
pub fn kernel_mod_learn(k: &KernelMatrix, m: usize, q: usize, iterations: usize, seed: u64) -> Result<KernelLearned> {
    let n = k.nrows();
    if k.ncols() != n || n == 0 {
        return Err(LkdlError::DimensionMismatch("kernel matrix must be square and non-empty".into()));
    }
    if q == 0 || m == 0 {
        return Err(LkdlError::InvalidParameter("m and q must be at least 1".into()));
    }
    if m > n {
        return Err(LkdlError::InvalidParameter(format!(
            "kernel MOD needs m <= N, got m={m}, N={n}"
        )));
    }
    let idx = init_columns(n, m, seed);
    let mut a = DMatrix::zeros(n, m);
    for (j, &i) in idx.iter().enumerate() {
        let kii = k.entries[(i, i)];
        if !(kii > 0.0) {
            return Err(LkdlError::Degenerate(format!("sample {i} has zero feature norm")));
        }
        a[(i, j)] = 1.0 / kii.sqrt();
    }
    let mut a = CoefficientDictionary::new(a);
    let mut codes = komp_batch(k, &a, q, 0.0)?;
    let mut report = LearnReport::default();
    report.degenerate |= codes.any_degenerate();
    let ka = &k.entries * &a.coefficients;
    let gram = at_b(&a.coefficients, &ka);
    report.objective_trace.push(kernel_residuals2(k, &ka, &gram, &codes).iter().sum());

    for _ in 0..iterations {
        let gamma = codes.to_dense();
        let (pinv, cut) = pinv_psd(&(&gamma * gamma.transpose()), PINV_CUTOFF);
        report.degenerate |= cut;
        let mut next = CoefficientDictionary::new(gamma.transpose() * pinv);
        let norms = next.normalize(k);
        let max_norm = norms.iter().copied().fold(0.0, f64::max);
        let mut gamma = gamma;
        let mut dead = Vec::new();
        for (j, &s) in norms.iter().enumerate() {
            if s > 1e-12 * max_norm && s > 0.0 {
                gamma.row_mut(j).scale_mut(s);
            } else {
                dead.push(j);
            }
        }
        if !dead.is_empty() {
            let ka = &k.entries * &next.coefficients;
            let g = at_b(&next.coefficients, &ka);
            let carried = reread_values(&codes, &gamma);
            let r2 = kernel_residuals2(k, &ka, &g, &carried);
            let mut order: Vec<usize> = (0..n).collect();
            order.sort_by(|&x, &y| r2[y].total_cmp(&r2[x]).then(x.cmp(&y)));
            let mut candidates = order.into_iter().filter(|&i| k.entries[(i, i)] > 0.0);
            for &j in &dead {
                let i = candidates
                    .next()
                    .ok_or_else(|| LkdlError::Degenerate("no sample left to replace a dead atom".into()))?;
                next.coefficients.column_mut(j).fill(0.0);
                next.coefficients[(i, j)] = 1.0 / k.entries[(i, i)].sqrt();
                gamma.row_mut(j).fill(0.0);
            }
            report.replaced_atoms += dead.len();
        }
        a = next;
        let carried = reread_values(&codes, &gamma);
        let ka = &k.entries * &a.coefficients;
        let gram = at_b(&a.coefficients, &ka);
        let old_r2 = kernel_residuals2(k, &ka, &gram, &carried);
        let fresh = komp_batch(k, &a, q, 0.0)?;
        report.degenerate |= fresh.any_degenerate();
        let fresh_r2 = kernel_residuals2(k, &ka, &gram, &fresh);
        let (kept, total) = keep_better(fresh, &fresh_r2, carried, &old_r2);
        if !total.is_finite() {
            return Err(LkdlError::Numerical("kernel objective became non-finite".into()));
        }
        codes = kept;
        let mut total = total;
        let kept_r2 = kernel_residuals2(k, &ka, &gram, &codes);
        let norms2: Vec<f64> = (0..n).map(|i| k.entries[(i, i)]).collect();
        if let Some(swaps) = atoms_to_clear(&gram, &codes, &kept_r2, &norms2) {
            let mut trial = a.clone();
            for &(j, i) in &swaps {
                trial.coefficients.column_mut(j).fill(0.0);
                trial.coefficients[(i, j)] = 1.0 / k.entries[(i, i)].sqrt();
            }
            let trial_codes = komp_batch(k, &trial, q, 0.0)?;
            let tka = &k.entries * &trial.coefficients;
            let tgram = at_b(&trial.coefficients, &tka);
            let trial_total: f64 = kernel_residuals2(k, &tka, &tgram, &trial_codes).iter().sum();
            if trial_total <= total {
                a = trial;
                codes = trial_codes;
                total = trial_total;
                report.replaced_atoms += swaps.len();
            }
        }
        report.objective_trace.push(total);
        report.iterations += 1;
    }
    Ok(KernelLearned {
        dictionary: a,
        codes,
        report,
    })
}
