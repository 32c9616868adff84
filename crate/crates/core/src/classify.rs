//! Per-class dictionaries and minimum-residual classification, the exact
//! kernel baseline built from KOMP and kernel MOD, and test-set corruption.

use nalgebra::DMatrix;
use rand::seq::SliceRandom;
use rand_distr::{Distribution, Normal};

use crate::datasets::LabeledDataset;
use crate::dict_learning::{kernel_mod_learn, learn, Dictionary, LearnConfig, LearnMethod};
use crate::error::{LkdlError, Result};
use crate::kernels::{gram, Kernel};
use crate::matrix::{at_b, col, col_mut};
use crate::rng;
use crate::sparse_coding::{omp, pursue, CoefficientDictionary};

#[derive(Debug, Clone, PartialEq)]
pub struct ClassDictionary {
    pub label: u32,
    pub dictionary: Dictionary,
}

/// One learned dictionary per class, all in the same space.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassDictionaryModel {
    pub classes: Vec<ClassDictionary>,
    pub q: usize,
    pub space_dim: usize,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClassTrainConfig {
    pub m_per_class: usize,
    pub q: usize,
    pub iterations: usize,
    pub method: LearnMethod,
    pub seed: u64,
}

/// Label and the squared residual against every class, in class order.
#[derive(Debug, Clone, PartialEq)]
pub struct Prediction {
    pub label: u32,
    pub residuals: Vec<f64>,
}

fn class_partition(labels: &[u32], n: usize) -> Result<Vec<(u32, Vec<usize>)>> {
    if labels.len() != n {
        return Err(LkdlError::DimensionMismatch(format!("{n} samples but {} labels", labels.len())));
    }
    let mut classes: Vec<u32> = labels.to_vec();
    classes.sort_unstable();
    classes.dedup();
    if classes.is_empty() {
        return Err(LkdlError::InvalidParameter("no training samples".into()));
    }
    Ok(classes
        .into_iter()
        .map(|l| (l, (0..n).filter(|&i| labels[i] == l).collect()))
        .collect())
}

fn warn_small_class(label: u32, size: usize, m: usize) {
    if m > size {
        log::warn!("class {label} has {size} samples but {m} atoms were requested");
    }
}

/// Learns a dictionary for every class independently. Class `l` is seeded
/// with `derive_seed(seed, l)`.
pub fn train_per_class(f: &DMatrix<f64>, labels: &[u32], cfg: &ClassTrainConfig) -> Result<ClassDictionaryModel> {
    let parts = class_partition(labels, f.ncols())?;
    let mut classes = Vec::with_capacity(parts.len());
    for (label, idx) in parts {
        warn_small_class(label, idx.len(), cfg.m_per_class);
        let xc = crate::matrix::select_columns(f, &idx);
        let lc = LearnConfig::new(cfg.m_per_class, cfg.q, cfg.iterations, cfg.method, rng::derive_seed(cfg.seed, label as u64));
        let out = learn(&xc, &lc)?;
        classes.push(ClassDictionary {
            label,
            dictionary: out.dictionary,
        });
    }
    Ok(ClassDictionaryModel {
        classes,
        q: cfg.q,
        space_dim: f.nrows(),
    })
}

/// Smallest residual wins; exact ties go to the lowest label.
fn pick(labels: impl Iterator<Item = u32>, residuals: Vec<f64>) -> Prediction {
    let mut best: Option<(u32, f64)> = None;
    for (label, &r) in labels.zip(&residuals) {
        if best.is_none_or(|(bl, br)| r < br || (r == br && label < bl)) {
            best = Some((label, r));
        }
    }
    Prediction {
        label: best.map_or(0, |b| b.0),
        residuals,
    }
}

fn map_columns<T: Send, F>(n: usize, f: F) -> Result<Vec<T>>
where
    F: Fn(usize) -> Result<T> + Sync + Send,
{
    #[cfg(feature = "parallel")]
    {
        use rayon::prelude::*;
        (0..n).into_par_iter().map(f).collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        (0..n).map(f).collect()
    }
}

impl ClassDictionaryModel {
    pub fn labels(&self) -> Vec<u32> {
        self.classes.iter().map(|c| c.label).collect()
    }

    /// Codes `f` over every class dictionary with `q` atoms.
    pub fn classify(&self, f: &[f64]) -> Result<Prediction> {
        if f.len() != self.space_dim {
            return Err(LkdlError::DimensionMismatch(format!(
                "sample has dimension {}, model expects {}",
                f.len(),
                self.space_dim
            )));
        }
        let mut residuals = Vec::with_capacity(self.classes.len());
        for c in &self.classes {
            let code = omp(&c.dictionary, f, self.q, 0.0)?;
            residuals.push(code.residual_norm * code.residual_norm);
        }
        Ok(pick(self.classes.iter().map(|c| c.label), residuals))
    }

    pub fn classify_batch(&self, f: &DMatrix<f64>) -> Result<Vec<Prediction>> {
        map_columns(f.ncols(), |i| self.classify(col(f, i)))
    }
}

/// Fraction of predictions matching `truth`.
pub fn accuracy(predictions: &[Prediction], truth: &[u32]) -> f64 {
    if predictions.is_empty() {
        return 0.0;
    }
    let hits = predictions.iter().zip(truth).filter(|(p, &t)| p.label == t).count();
    hits as f64 / predictions.len() as f64
}

/// Exact kernel class model: coefficient dictionary over the class's own
/// training samples.
#[derive(Debug, Clone, PartialEq)]
pub struct KernelClass {
    pub label: u32,
    pub samples: DMatrix<f64>,
    pub dictionary: CoefficientDictionary,
    /// `A^T K A`, shared by every test sample.
    pub atom_gram: DMatrix<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct KernelClassModel {
    pub kernel: Kernel,
    pub classes: Vec<KernelClass>,
    pub q: usize,
}

/// Per-class KOMP + kernel MOD. Includes building every class kernel
/// matrix, so timing this call covers the whole baseline training cost.
pub fn train_kernel_per_class(x: &DMatrix<f64>, labels: &[u32], kernel: &Kernel, cfg: &ClassTrainConfig) -> Result<KernelClassModel> {
    kernel.validate()?;
    let parts = class_partition(labels, x.ncols())?;
    let mut classes = Vec::with_capacity(parts.len());
    for (label, idx) in parts {
        let m = cfg.m_per_class.min(idx.len());
        warn_small_class(label, idx.len(), cfg.m_per_class);
        let xc = crate::matrix::select_columns(x, &idx);
        let k = gram(kernel, &xc)?;
        let out = kernel_mod_learn(&k, m, cfg.q, cfg.iterations, rng::derive_seed(cfg.seed, label as u64))?;
        let atom_gram = at_b(&out.dictionary.coefficients, &(&k.entries * &out.dictionary.coefficients));
        classes.push(KernelClass {
            label,
            samples: xc,
            dictionary: out.dictionary,
            atom_gram,
        });
    }
    Ok(KernelClassModel {
        kernel: kernel.clone(),
        classes,
        q: cfg.q,
    })
}

impl KernelClassModel {
    pub fn labels(&self) -> Vec<u32> {
        self.classes.iter().map(|c| c.label).collect()
    }

    /// KOMP of `z` over every class; the residual is the feature-space one.
    pub fn classify(&self, z: &[f64]) -> Result<Prediction> {
        let kzz = self.kernel.self_eval(z);
        let mut residuals = Vec::with_capacity(self.classes.len());
        for c in &self.classes {
            if c.samples.nrows() != z.len() {
                return Err(LkdlError::DimensionMismatch("test sample dimension".into()));
            }
            let k_zx: Vec<f64> = (0..c.samples.ncols())
                .map(|i| self.kernel.eval_unchecked(col(&c.samples, i), z))
                .collect();
            let a = &c.dictionary.coefficients;
            let b: Vec<f64> = (0..a.ncols()).map(|j| col(a, j).iter().zip(&k_zx).map(|(u, v)| u * v).sum()).collect();
            let code = pursue(&b, kzz, self.q, 0.0, |j| col(&c.atom_gram, j).to_vec());
            residuals.push(code.residual_norm * code.residual_norm);
        }
        Ok(pick(self.classes.iter().map(|c| c.label), residuals))
    }

    pub fn classify_batch(&self, x: &DMatrix<f64>) -> Result<Vec<Prediction>> {
        map_columns(x.ncols(), |i| self.classify(col(x, i)))
    }
}

fn renormalize_columns(x: &mut DMatrix<f64>) {
    for i in 0..x.ncols() {
        let c = col_mut(x, i);
        let n = c.iter().map(|v| v * v).sum::<f64>().sqrt();
        if n > 0.0 {
            c.iter_mut().for_each(|v| *v /= n);
        }
    }
}

/// Adds i.i.d. `N(0, sigma^2)` noise to every entry, then optionally
/// rescales columns to unit norm. The noise stream depends only on the
/// seed and the matrix shape, so different `sigma` share one noise draw.
pub fn corrupt_gaussian(x: &DMatrix<f64>, sigma: f64, seed: u64, renormalize: bool) -> Result<DMatrix<f64>> {
    if !(sigma >= 0.0) || !sigma.is_finite() {
        return Err(LkdlError::InvalidParameter(format!("noise sigma must be >= 0, got {sigma}")));
    }
    let mut out = x.clone();
    if sigma > 0.0 {
        let normal = Normal::new(0.0, 1.0).expect("unit normal");
        let mut r = rng::stream(seed);
        for v in out.iter_mut() {
            *v += sigma * normal.sample(&mut r);
        }
    }
    if renormalize {
        renormalize_columns(&mut out);
    }
    Ok(out)
}

/// Zeroes `floor(fraction * p)` uniformly chosen entries of every column,
/// then optionally rescales columns to unit norm. Returns the indices of
/// columns that ended up entirely zero.
pub fn corrupt_missing(x: &DMatrix<f64>, fraction: f64, seed: u64, renormalize: bool) -> Result<(DMatrix<f64>, Vec<usize>)> {
    if !(0.0..=1.0).contains(&fraction) {
        return Err(LkdlError::InvalidParameter(format!("missing fraction must be in [0, 1], got {fraction}")));
    }
    let p = x.nrows();
    let count = (fraction * p as f64).floor() as usize;
    let mut out = x.clone();
    let mut r = rng::stream(seed);
    let mut idx: Vec<usize> = (0..p).collect();
    for i in 0..out.ncols() {
        let (chosen, _) = idx.partial_shuffle(&mut r, count);
        let c = col_mut(&mut out, i);
        for &row in chosen.iter() {
            c[row] = 0.0;
        }
    }
    if renormalize {
        renormalize_columns(&mut out);
    }
    let zero: Vec<usize> = (0..out.ncols()).filter(|&i| col(&out, i).iter().all(|&v| v == 0.0)).collect();
    if !zero.is_empty() {
        log::warn!("{} columns are entirely zero after corruption", zero.len());
    }
    Ok((out, zero))
}

/// Shorthand for corrupting the samples of a dataset.
pub fn corrupt_dataset_gaussian(ds: &LabeledDataset, sigma: f64, seed: u64, renormalize: bool) -> Result<LabeledDataset> {
    Ok(LabeledDataset {
        samples: corrupt_gaussian(&ds.samples, sigma, seed, renormalize)?,
        ..ds.clone()
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datasets::normalize_unit;
    use rand_distr::StandardNormal;

    fn cfg(m: usize, q: usize) -> ClassTrainConfig {
        ClassTrainConfig {
            m_per_class: m,
            q,
            iterations: 3,
            method: LearnMethod::Ksvd,
            seed: 5,
        }
    }

    fn axis_classes() -> (DMatrix<f64>, Vec<u32>) {
        // class 1 lives in coordinates 0..2, class 2 in 2..4
        let mut r = rng::stream(1);
        let mut x = DMatrix::zeros(4, 40);
        let mut labels = Vec::new();
        for i in 0..40 {
            let off = if i < 20 { 0 } else { 2 };
            for k in 0..2 {
                x[(off + k, i)] = StandardNormal.sample(&mut r);
            }
            labels.push(if i < 20 { 1 } else { 2 });
        }
        (x, labels)
    }

    #[test]
    fn disjoint_class_subspaces() {
        let (x, labels) = axis_classes();
        let model = train_per_class(&x, &labels, &cfg(2, 2)).unwrap();
        for c in &model.classes {
            let other = if c.label == 1 { 2..4 } else { 0..2 };
            for r in other {
                assert!(c.dictionary.atoms().row(r).norm() < 1e-10);
            }
        }
        let p = model.classify(&[0.3, -1.0, 0.0, 0.0]).unwrap();
        assert_eq!(p.label, 1);
        assert!(p.residuals[0] < 1e-20 && p.residuals[1] > 1.0);
        let preds = model.classify_batch(&x).unwrap();
        assert_eq!(accuracy(&preds, &labels), 1.0);
        assert_eq!(model, train_per_class(&x, &labels, &cfg(2, 2)).unwrap());
    }

    #[test]
    fn atom_of_class_has_zero_residual() {
        let (x, labels) = axis_classes();
        let model = train_per_class(&x, &labels, &cfg(2, 1)).unwrap();
        let atom = model.classes[1].dictionary.atoms().column(0).into_owned();
        let p = model.classify(atom.as_slice()).unwrap();
        assert_eq!(p.label, 2);
        assert!(p.residuals[1] < 1e-20);
    }

    #[test]
    fn orthogonal_sample_ties_at_its_norm() {
        let mut x = DMatrix::zeros(3, 4);
        x[(0, 0)] = 1.0;
        x[(0, 1)] = 2.0;
        x[(1, 2)] = 1.0;
        x[(1, 3)] = -1.0;
        let model = train_per_class(&x, &[2, 2, 1, 1], &cfg(1, 1)).unwrap();
        let p = model.classify(&[0.0, 0.0, 3.0]).unwrap();
        assert_eq!(p.residuals, vec![9.0, 9.0]);
        assert_eq!(p.label, 1);
    }

    #[test]
    fn label_invariant_to_positive_scaling() {
        let ds = normalize_unit(&crate::datasets::synth_gaussian_classes(6, 3, 30, 0.4, 2).unwrap()).unwrap();
        let model = train_per_class(&ds.samples, &ds.labels, &cfg(5, 2)).unwrap();
        for i in 0..ds.len() {
            let f = col(&ds.samples, i);
            let a = model.classify(f).unwrap().label;
            let scaled: Vec<f64> = f.iter().map(|v| v * 3.7).collect();
            assert_eq!(model.classify(&scaled).unwrap().label, a);
        }
    }

    #[test]
    fn empty_input_is_rejected() {
        let x = DMatrix::zeros(2, 0);
        assert!(train_per_class(&x, &[], &cfg(1, 1)).is_err());
        assert!(train_per_class(&DMatrix::zeros(2, 2), &[1], &cfg(1, 1)).is_err());
    }

    #[test]
    fn kernel_baseline_linear_agrees_with_features() {
        let ds = normalize_unit(&crate::datasets::synth_gaussian_classes(5, 2, 25, 0.3, 3).unwrap()).unwrap();
        let model = train_kernel_per_class(&ds.samples, &ds.labels, &Kernel::Linear, &cfg(6, 2)).unwrap();
        let preds = model.classify_batch(&ds.samples).unwrap();
        assert!(accuracy(&preds, &ds.labels) > 0.9);
        for p in &preds {
            assert!(p.residuals.iter().all(|r| *r >= 0.0 && *r <= 1.0 + 1e-9));
        }
    }

    #[test]
    fn gaussian_corruption() {
        let x = DMatrix::from_fn(10, 10_000, |i, j| ((i + j) % 7) as f64);
        assert_eq!(corrupt_gaussian(&x, 0.0, 1, false).unwrap(), x);
        let y = corrupt_gaussian(&x, 0.3, 1, false).unwrap();
        let d = &y - &x;
        let mean = d.mean();
        let std = (d.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / d.len() as f64).sqrt();
        assert!((std - 0.3).abs() < 0.02 * 0.3, "std {std}");
        let z = corrupt_gaussian(&x, 0.3, 1, true).unwrap();
        for i in 0..50 {
            assert!((z.column(i).norm() - 1.0).abs() < 1e-12);
        }
        // shared noise draw across sigma
        let y2 = corrupt_gaussian(&x, 0.6, 1, false).unwrap();
        assert!(((&y2 - &x) - 2.0 * d).norm() < 1e-9);
    }

    #[test]
    fn missing_corruption() {
        let x = DMatrix::from_element(10, 20, 1.0);
        assert_eq!(corrupt_missing(&x, 0.0, 1, false).unwrap().0, x);
        let (y, zero) = corrupt_missing(&x, 0.35, 1, false).unwrap();
        assert!(zero.is_empty());
        for i in 0..20 {
            assert_eq!(y.column(i).iter().filter(|v| **v == 0.0).count(), 3);
        }
        let (_, zero) = corrupt_missing(&x, 1.0, 1, true).unwrap();
        assert_eq!(zero.len(), 20);
        let (z, _) = corrupt_missing(&x, 0.5, 2, true).unwrap();
        assert!((z.column(0).norm() - 1.0).abs() < 1e-12);
    }
}
