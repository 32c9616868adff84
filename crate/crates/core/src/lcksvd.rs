//! Label-consistent K-SVD. Reconstruction, label-consistency and
//! classifier terms are stacked into one matrix and learned with K-SVD.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::dict_learning::{learn, Dictionary, Init, LearnConfig, LearnMethod, LearnReport};
use crate::error::{LkdlError, Result};
use crate::matrix::col;
use crate::rng;
use crate::sparse_coding::{omp, omp_batch, SparseCodeMatrix};

pub const DEFAULT_TAU2: f64 = 1e-4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Variant {
    /// Reconstruction and label consistency; classifier fitted afterwards.
    Lc1,
    /// Classifier learned jointly.
    Lc2,
}

/// One-hot labels `H` (`L x N`), ideal codes `Q` (`m x N`) and the class
/// each atom belongs to.
#[derive(Debug, Clone, PartialEq)]
pub struct LabelStructures {
    pub classes: Vec<u32>,
    pub h: DMatrix<f64>,
    pub q: DMatrix<f64>,
    pub atom_class: Vec<u32>,
}

/// Splits `m` atoms as evenly as possible over `classes`, giving the
/// remainder to the lowest labels.
pub fn even_atom_counts(classes: usize, m: usize) -> Vec<usize> {
    (0..classes).map(|c| m / classes + usize::from(c < m % classes)).collect()
}

fn sorted_classes(labels: &[u32]) -> Vec<u32> {
    let mut c = labels.to_vec();
    c.sort_unstable();
    c.dedup();
    c
}

/// Atoms are assigned to classes contiguously, in ascending label order.
pub fn build_label_structures(labels: &[u32], m: usize, class_atom_counts: &[usize]) -> Result<LabelStructures> {
    let classes = sorted_classes(labels);
    if class_atom_counts.len() != classes.len() || class_atom_counts.iter().sum::<usize>() != m {
        return Err(LkdlError::InvalidParameter(format!(
            "atom counts {class_atom_counts:?} must cover {} classes and sum to m={m}",
            classes.len()
        )));
    }
    let atom_class: Vec<u32> = classes
        .iter()
        .zip(class_atom_counts)
        .flat_map(|(&l, &n)| std::iter::repeat_n(l, n))
        .collect();
    let n = labels.len();
    let class_row = |l: u32| classes.binary_search(&l).expect("label from the same list");
    let h = DMatrix::from_fn(classes.len(), n, |r, i| f64::from(u8::from(class_row(labels[i]) == r)));
    let q = DMatrix::from_fn(m, n, |j, i| f64::from(u8::from(atom_class[j] == labels[i])));
    Ok(LabelStructures {
        classes,
        h,
        q,
        atom_class,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct LcKsvdConfig {
    pub m: usize,
    pub q: usize,
    pub alpha: f64,
    pub beta: f64,
    pub iterations: usize,
    pub variant: Variant,
    pub tau2: f64,
    pub seed: u64,
    /// Atoms per class; even split when absent.
    pub class_atom_counts: Option<Vec<usize>>,
}

impl LcKsvdConfig {
    pub fn new(m: usize, q: usize, alpha: f64, beta: f64, iterations: usize, variant: Variant, seed: u64) -> Self {
        Self {
            m,
            q,
            alpha,
            beta,
            iterations,
            variant,
            tau2: DEFAULT_TAU2,
            seed,
            class_atom_counts: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LcKsvdModel {
    pub dictionary: Dictionary,
    /// `m x m` transform of the label-consistency term.
    pub t: DMatrix<f64>,
    /// `L x m` linear classifier.
    pub theta: DMatrix<f64>,
    pub classes: Vec<u32>,
    pub atom_class: Vec<u32>,
    pub sqrt_alpha: f64,
    pub sqrt_beta: f64,
    pub variant: Variant,
    pub tau2: f64,
    pub q: usize,
    /// Norm of each atom's input block inside the stacked dictionary.
    pub atom_scales: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct LcKsvdTrained {
    pub model: LcKsvdModel,
    /// Trace of the stacked objective.
    pub report: LearnReport,
}

/// `Theta = H Gamma^T (Gamma Gamma^T + tau2 I)^-1`.
pub fn ridge_classifier(gamma: &DMatrix<f64>, h: &DMatrix<f64>, tau2: f64) -> Result<DMatrix<f64>> {
    if !(tau2 > 0.0) {
        return Err(LkdlError::InvalidParameter(format!("tau2 must be > 0, got {tau2}")));
    }
    let m = gamma.nrows();
    let a = gamma * gamma.transpose() + DMatrix::identity(m, m) * tau2;
    let chol = a
        .cholesky()
        .ok_or_else(|| LkdlError::Numerical("Gamma Gamma^T + tau2 I is not positive definite".into()))?;
    // Theta^T = A^-1 Gamma H^T since A is symmetric
    Ok(chol.solve(&(gamma * h.transpose())).transpose())
}

/// Initial atoms: atom `j` of class `c` is a distinct random sample of
/// class `c`, normalized. Classes with fewer samples than atoms reuse
/// their samples.
pub fn initial_dictionary(x: &DMatrix<f64>, labels: &[u32], structures: &LabelStructures, seed: u64) -> Result<Dictionary> {
    use rand::seq::SliceRandom;
    let mut atoms = DMatrix::zeros(x.nrows(), structures.atom_class.len());
    let mut r = rng::stream(seed);
    let mut j = 0;
    for &label in &structures.classes {
        let count = structures.atom_class.iter().filter(|&&c| c == label).count();
        let mut members: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == label).collect();
        members.shuffle(&mut r);
        for k in 0..count {
            let i = members[k % members.len()];
            atoms.column_mut(j).copy_from(&x.column(i));
            j += 1;
        }
    }
    Dictionary::from_unnormalized(atoms)
}

fn stack(blocks: &[&DMatrix<f64>]) -> DMatrix<f64> {
    let rows: usize = blocks.iter().map(|b| b.nrows()).sum();
    let mut out = DMatrix::zeros(rows, blocks[0].ncols());
    let mut at = 0;
    for b in blocks {
        out.view_mut((at, 0), (b.nrows(), b.ncols())).copy_from(*b);
        at += b.nrows();
    }
    out
}

pub fn train(x: &DMatrix<f64>, labels: &[u32], cfg: &LcKsvdConfig) -> Result<LcKsvdTrained> {
    if labels.len() != x.ncols() {
        return Err(LkdlError::DimensionMismatch(format!("{} samples but {} labels", x.ncols(), labels.len())));
    }
    if !(cfg.alpha >= 0.0 && cfg.beta >= 0.0) {
        return Err(LkdlError::InvalidParameter("alpha and beta must be >= 0".into()));
    }
    if !(cfg.tau2 > 0.0) {
        return Err(LkdlError::InvalidParameter(format!("tau2 must be > 0, got {}", cfg.tau2)));
    }
    if cfg.variant == Variant::Lc2 && (cfg.alpha == 0.0 || cfg.beta == 0.0) {
        log::warn!("LC-KSVD2 with a zero weight degenerates to a simpler objective");
    }
    let classes = sorted_classes(labels);
    let counts = cfg
        .class_atom_counts
        .clone()
        .unwrap_or_else(|| even_atom_counts(classes.len(), cfg.m));
    let ls = build_label_structures(labels, cfg.m, &counts)?;
    let sa = cfg.alpha.sqrt();
    let sb = cfg.beta.sqrt();
    let with_h = cfg.variant == Variant::Lc2;

    let d0 = initial_dictionary(x, labels, &ls, rng::derive_seed(cfg.seed, 0))?;
    let gamma0 = omp_batch(&d0, x, cfg.q, 0.0)?.to_dense();
    let t0 = DMatrix::<f64>::identity(cfg.m, cfg.m);
    let theta0 = ridge_classifier(&gamma0, &ls.h, cfg.tau2)?;

    let sq = &ls.q * sa;
    let sh = &ls.h * sb;
    let st0 = &t0 * sa;
    let stheta0 = &theta0 * sb;
    let (x_new, d_new0) = if with_h {
        (stack(&[x, &sq, &sh]), stack(&[d0.atoms(), &st0, &stheta0]))
    } else {
        (stack(&[x, &sq]), stack(&[d0.atoms(), &st0]))
    };
    let mut lc = LearnConfig::new(cfg.m, cfg.q, cfg.iterations, LearnMethod::Ksvd, rng::derive_seed(cfg.seed, 1));
    lc.init = Init::Provided(Dictionary::from_unnormalized(d_new0)?);
    let learned = learn(&x_new, &lc)?;

    // Stacked atom j is (d_j; sa t_j; sb theta_j) with unit norm. Writing
    // s_j = |d_j| and coding over d_j / s_j multiplies the code by s_j, so
    // dividing t_j and theta_j by s_j keeps T Gamma and Theta Gamma fixed.
    let p = x.nrows();
    let stacked = learned.dictionary.atoms();
    let mut d = stacked.rows(0, p).into_owned();
    let scales: Vec<f64> = (0..cfg.m).map(|j| d.column(j).norm()).collect();
    for (j, &s) in scales.iter().enumerate() {
        if !(s > 0.0) {
            return Err(LkdlError::Degenerate(format!("atom {j} has no input-space component")));
        }
        d.column_mut(j).scale_mut(1.0 / s);
    }
    let dictionary = Dictionary::new(d)?;
    let unscale = |block: DMatrix<f64>, weight: f64| {
        let mut b = block / weight;
        for (j, &s) in scales.iter().enumerate() {
            b.column_mut(j).scale_mut(1.0 / s);
        }
        b
    };
    let t = if sa > 0.0 {
        unscale(stacked.rows(p, cfg.m).into_owned(), sa)
    } else {
        t0
    };
    let theta = if with_h && sb > 0.0 {
        unscale(stacked.rows(p + cfg.m, ls.classes.len()).into_owned(), sb)
    } else {
        let gamma = omp_batch(&dictionary, x, cfg.q, 0.0)?.to_dense();
        ridge_classifier(&gamma, &ls.h, cfg.tau2)?
    };
    Ok(LcKsvdTrained {
        model: LcKsvdModel {
            dictionary,
            t,
            theta,
            classes: ls.classes,
            atom_class: ls.atom_class,
            sqrt_alpha: sa,
            sqrt_beta: sb,
            variant: cfg.variant,
            tau2: cfg.tau2,
            q: cfg.q,
            atom_scales: scales,
        },
        report: learned.report,
    })
}

impl LcKsvdModel {
    /// Codes `x` over `D` with `q` atoms and applies `Theta`. The label is
    /// the highest score, lowest label on ties.
    pub fn predict(&self, x: &[f64], q: usize) -> Result<(u32, Vec<f64>)> {
        let code = omp(&self.dictionary, x, q, 0.0)?;
        let mut scores = vec![0.0; self.classes.len()];
        for (&j, &v) in code.support.iter().zip(&code.values) {
            for (s, t) in scores.iter_mut().zip(self.theta.column(j).iter()) {
                *s += t * v;
            }
        }
        let mut best = 0;
        for (c, &s) in scores.iter().enumerate() {
            if s > scores[best] {
                best = c;
            }
        }
        Ok((self.classes[best], scores))
    }

    pub fn predict_batch(&self, x: &DMatrix<f64>, q: usize) -> Result<Vec<(u32, Vec<f64>)>> {
        (0..x.ncols()).map(|i| self.predict(col(x, i), q)).collect()
    }

    /// The stacked dictionary implied by the extracted blocks.
    pub fn restack(&self) -> DMatrix<f64> {
        let scale = |b: &DMatrix<f64>, w: f64| {
            let mut b = b * w;
            for (j, &s) in self.atom_scales.iter().enumerate() {
                b.column_mut(j).scale_mut(s);
            }
            b
        };
        let d = scale(self.dictionary.atoms(), 1.0);
        let t = scale(&self.t, self.sqrt_alpha);
        match self.variant {
            Variant::Lc2 => stack(&[&d, &t, &scale(&self.theta, self.sqrt_beta)]),
            Variant::Lc1 => stack(&[&d, &t]),
        }
    }
}

/// Sum of absolute coefficients per atom.
pub fn atom_abs_sums(codes: &SparseCodeMatrix) -> Vec<f64> {
    let mut out = vec![0.0; codes.n_atoms];
    for c in &codes.codes {
        for (&j, &v) in c.support.iter().zip(&c.values) {
            out[j] += v.abs();
        }
    }
    out
}
