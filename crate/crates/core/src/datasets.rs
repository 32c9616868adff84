//! Labeled datasets: IDX and CSV ingestion, normalization, subsampling and
//! synthetic generators.

use std::collections::BTreeSet;
use std::fs;
use std::path::{Path, PathBuf};

use nalgebra::DMatrix;
use rand::seq::SliceRandom;
use rand::Rng as _;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::dict_learning::Dictionary;
use crate::error::{LkdlError, Result};
use crate::matrix::{at_b, col, col_mut, select_columns};
use crate::rng;
use crate::sparse_coding::{SparseCode, SparseCodeMatrix};

/// `p x N` samples (one per column) with one integer label each.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledDataset {
    pub samples: DMatrix<f64>,
    pub labels: Vec<u32>,
    pub source: String,
}

impl LabeledDataset {
    pub fn new(samples: DMatrix<f64>, labels: Vec<u32>, source: impl Into<String>) -> Result<Self> {
        if samples.ncols() != labels.len() {
            return Err(LkdlError::DimensionMismatch(format!(
                "{} samples but {} labels",
                samples.ncols(),
                labels.len()
            )));
        }
        Ok(Self {
            samples,
            labels,
            source: source.into(),
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.samples.nrows()
    }

    /// Distinct labels in ascending order.
    pub fn classes(&self) -> Vec<u32> {
        self.labels.iter().copied().collect::<BTreeSet<_>>().into_iter().collect()
    }

    pub fn class_indices(&self, label: u32) -> Vec<usize> {
        (0..self.len()).filter(|&i| self.labels[i] == label).collect()
    }

    pub fn class_samples(&self, label: u32) -> DMatrix<f64> {
        select_columns(&self.samples, &self.class_indices(label))
    }

    pub fn subset(&self, indices: &[usize]) -> Self {
        Self {
            samples: select_columns(&self.samples, indices),
            labels: indices.iter().map(|&i| self.labels[i]).collect(),
            source: self.source.clone(),
        }
    }
}

fn read_be_u32(bytes: &[u8], at: usize, path: &Path) -> Result<u32> {
    bytes
        .get(at..at + 4)
        .map(|b| u32::from_be_bytes([b[0], b[1], b[2], b[3]]))
        .ok_or_else(|| LkdlError::Format(format!("{}: truncated header", path.display())))
}

/// Reads an IDX image file (magic `0x00000803`) and label file (magic
/// `0x00000801`). Pixels are scaled to `[0, 1]`; each image becomes one
/// column with its pixels in file order.
pub fn load_idx(images_path: &Path, labels_path: &Path) -> Result<LabeledDataset> {
    let images = fs::read(images_path)?;
    let labels = fs::read(labels_path)?;
    let magic = read_be_u32(&images, 0, images_path)?;
    if magic != 0x0000_0803 {
        return Err(LkdlError::Format(format!(
            "{}: bad image magic {magic:#010x}",
            images_path.display()
        )));
    }
    let n = read_be_u32(&images, 4, images_path)? as usize;
    let rows = read_be_u32(&images, 8, images_path)? as usize;
    let cols = read_be_u32(&images, 12, images_path)? as usize;
    let p = rows * cols;
    let body = &images[16..];
    if body.len() < n * p {
        return Err(LkdlError::Format(format!(
            "{}: truncated, expected {} pixel bytes, found {}",
            images_path.display(),
            n * p,
            body.len()
        )));
    }
    let label_magic = read_be_u32(&labels, 0, labels_path)?;
    if label_magic != 0x0000_0801 {
        return Err(LkdlError::Format(format!(
            "{}: bad label magic {label_magic:#010x}",
            labels_path.display()
        )));
    }
    let n_labels = read_be_u32(&labels, 4, labels_path)? as usize;
    if n_labels != n {
        return Err(LkdlError::Format(format!(
            "{} images but {} labels",
            n, n_labels
        )));
    }
    let label_body = &labels[8..];
    if label_body.len() < n {
        return Err(LkdlError::Format(format!("{}: truncated labels", labels_path.display())));
    }
    let samples = DMatrix::from_iterator(p, n, body[..n * p].iter().map(|&b| b as f64 / 255.0));
    LabeledDataset::new(
        samples,
        label_body[..n].iter().map(|&b| b as u32).collect(),
        format!("idx:{}", images_path.display()),
    )
}

/// Writes an IDX pair; pixel values are clamped to `[0, 1]` and quantized.
pub fn write_idx(dataset: &LabeledDataset, rows: usize, cols: usize, images_path: &Path, labels_path: &Path) -> Result<()> {
    if rows * cols != dataset.dim() {
        return Err(LkdlError::DimensionMismatch(format!(
            "{rows}x{cols} images do not hold {} pixels",
            dataset.dim()
        )));
    }
    let n = dataset.len() as u32;
    let mut img = Vec::with_capacity(16 + dataset.samples.len());
    for v in [0x0803u32, n, rows as u32, cols as u32] {
        img.extend_from_slice(&v.to_be_bytes());
    }
    img.extend(dataset.samples.iter().map(|v| (v.clamp(0.0, 1.0) * 255.0).round() as u8));
    let mut lab = Vec::with_capacity(8 + dataset.len());
    lab.extend_from_slice(&0x0801u32.to_be_bytes());
    lab.extend_from_slice(&n.to_be_bytes());
    for &l in &dataset.labels {
        lab.push(u8::try_from(l).map_err(|_| LkdlError::InvalidParameter(format!("label {l} does not fit a byte")))?);
    }
    fs::write(images_path, img)?;
    fs::write(labels_path, lab)?;
    Ok(())
}

fn parse_label(cell: &str) -> std::result::Result<u32, String> {
    let t = cell.trim();
    if let Ok(v) = t.parse::<u32>() {
        return Ok(v);
    }
    match t.parse::<f64>() {
        Ok(v) if v >= 0.0 && v.fract() == 0.0 && v <= u32::MAX as f64 => Ok(v as u32),
        _ => Err(format!("label {t:?} is not a non-negative integer")),
    }
}

/// Rows are samples; `label_column` holds the integer label and every
/// other cell is a feature.
pub fn load_csv(path: &Path, label_column: usize, has_header: bool) -> Result<LabeledDataset> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(has_header)
        .flexible(true)
        .from_path(path)
        .map_err(|e| csv_error(path, e))?;
    let mut values = Vec::new();
    let mut labels = Vec::new();
    let mut width = None;
    for record in reader.records() {
        let record = record.map_err(|e| csv_error(path, e))?;
        let line = record.position().map_or(0, |p| p.line());
        let parse_err = |message: String| LkdlError::Parse {
            path: path.display().to_string(),
            line,
            message,
        };
        if record.len() <= label_column {
            return Err(parse_err(format!(
                "label column {label_column} missing, row has {} cells",
                record.len()
            )));
        }
        match width {
            None => width = Some(record.len()),
            Some(w) if w != record.len() => {
                return Err(parse_err(format!("ragged row: {} cells, expected {w}", record.len())))
            }
            _ => {}
        }
        for (c, cell) in record.iter().enumerate() {
            if c == label_column {
                labels.push(parse_label(cell).map_err(parse_err)?);
            } else {
                let v: f64 = cell
                    .trim()
                    .parse()
                    .map_err(|_| parse_err(format!("cell {c} is not a number: {cell:?}")))?;
                values.push(v);
            }
        }
    }
    let p = width.map_or(0, |w| w - 1);
    let samples = DMatrix::from_column_slice(p, labels.len(), &values);
    LabeledDataset::new(samples, labels, format!("csv:{}", path.display()))
}

fn csv_error(path: &Path, e: csv::Error) -> LkdlError {
    let line = e.position().map_or(0, |p| p.line());
    match e.into_kind() {
        csv::ErrorKind::Io(io) => LkdlError::Io(io),
        other => LkdlError::Parse {
            path: path.display().to_string(),
            line,
            message: format!("{other:?}"),
        },
    }
}

/// Writes one row per sample with the label in column 0 and no header.
pub fn write_csv(dataset: &LabeledDataset, path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_error(path, e))?;
    for i in 0..dataset.len() {
        let mut row = vec![dataset.labels[i].to_string()];
        // `{:?}` prints the shortest string that parses back to the same f64
        row.extend(col(&dataset.samples, i).iter().map(|v| format!("{v:?}")));
        w.write_record(&row).map_err(|e| csv_error(path, e))?;
    }
    w.flush()?;
    Ok(())
}

/// Scales every column to unit l2 norm.
pub fn normalize_unit(dataset: &LabeledDataset) -> Result<LabeledDataset> {
    let mut out = dataset.clone();
    for i in 0..out.len() {
        let c = col_mut(&mut out.samples, i);
        let n = c.iter().map(|v| v * v).sum::<f64>().sqrt();
        if !(n > 0.0) {
            return Err(LkdlError::Degenerate(format!("sample {i} has zero norm")));
        }
        // columns already unit up to rounding are left untouched, which makes
        // normalization exactly idempotent
        if (n - 1.0).abs() > 8.0 * f64::EPSILON {
            c.iter_mut().for_each(|v| *v /= n);
        }
    }
    Ok(out)
}

/// Uniform subsample of `round(fraction * N)` samples without replacement,
/// in drawn order. Errors if a class of the input disappears.
pub fn subsample_fraction(dataset: &LabeledDataset, fraction: f64, seed: u64) -> Result<LabeledDataset> {
    if !(fraction > 0.0 && fraction <= 1.0) {
        return Err(LkdlError::InvalidParameter(format!("fraction must be in (0, 1], got {fraction}")));
    }
    let n = dataset.len();
    let count = ((fraction * n as f64).round() as usize).clamp(1.min(n), n);
    let mut idx: Vec<usize> = (0..n).collect();
    let mut r = rng::stream(seed);
    let (chosen, _) = idx.partial_shuffle(&mut r, count);
    let out = dataset.subset(chosen);
    let kept: BTreeSet<u32> = out.labels.iter().copied().collect();
    if let Some(&missing) = dataset.classes().iter().find(|l| !kept.contains(l)) {
        return Err(LkdlError::EmptyClass(missing));
    }
    Ok(out)
}

/// Relative half-width of each annulus.
pub const CIRCLE_BAND: f64 = 0.1;

/// 2-D concentric annuli, one class per radius (labels `1..=radii.len()`),
/// with isotropic Gaussian noise of standard deviation `noise_sigma`.
pub fn synth_circles(n_per_class: usize, radii: &[f64], noise_sigma: f64, seed: u64) -> Result<LabeledDataset> {
    if radii.is_empty() || radii.iter().any(|&r| !(r > 0.0)) {
        return Err(LkdlError::InvalidParameter("radii must be positive and non-empty".into()));
    }
    if noise_sigma < 0.0 || !noise_sigma.is_finite() {
        return Err(LkdlError::InvalidParameter(format!("noise sigma must be >= 0, got {noise_sigma}")));
    }
    let mut r = rng::stream(seed);
    let n = n_per_class * radii.len();
    let mut samples = DMatrix::zeros(2, n);
    let mut labels = Vec::with_capacity(n);
    for (c, &radius) in radii.iter().enumerate() {
        for s in 0..n_per_class {
            let i = c * n_per_class + s;
            let theta = r.random::<f64>() * std::f64::consts::TAU;
            let rho = radius * (1.0 + CIRCLE_BAND * (2.0 * r.random::<f64>() - 1.0));
            let nx: f64 = StandardNormal.sample(&mut r);
            let ny: f64 = StandardNormal.sample(&mut r);
            samples[(0, i)] = rho * theta.cos() + noise_sigma * nx;
            samples[(1, i)] = rho * theta.sin() + noise_sigma * ny;
            labels.push(c as u32 + 1);
        }
    }
    LabeledDataset::new(samples, labels, format!("circles(seed={seed})"))
}

/// Largest absolute inner product between distinct unit-norm atoms.
pub fn mutual_coherence(d: &DMatrix<f64>) -> f64 {
    let g = at_b(d, d);
    let mut mu: f64 = 0.0;
    for j in 0..g.ncols() {
        for i in 0..j {
            mu = mu.max(g[(i, j)].abs());
        }
    }
    mu
}

/// Planted dictionaries are redrawn until their coherence `mu` satisfies
/// `mu (2q - 1) < 1`, under which OMP provably recovers every q-sparse
/// combination of the atoms.
pub fn planted_coherence_bound(q: usize) -> f64 {
    1.0 / (2 * q - 1) as f64
}

const PLANTED_ATTEMPTS: usize = 2000;

#[derive(Debug, Clone)]
pub struct Planted {
    pub dataset: LabeledDataset,
    pub dictionary: Dictionary,
    pub codes: SparseCodeMatrix,
    pub coherence: f64,
}

/// `X = D0 Gamma0` with a random unit-norm `D0` (`p x m`) and exactly
/// `q`-sparse columns of `Gamma0` whose nonzeros have magnitude in
/// `[0.5, 1.5]` and random sign. Labels are all 1.
pub fn synth_planted_sparse(p: usize, n: usize, m: usize, q: usize, seed: u64) -> Result<Planted> {
    if q == 0 || q > m || p == 0 {
        return Err(LkdlError::InvalidParameter(format!("need 1 <= q <= m and p >= 1 (q={q}, m={m}, p={p})")));
    }
    let bound = planted_coherence_bound(q);
    let mut r = rng::stream(seed);
    let mut best: Option<(f64, DMatrix<f64>)> = None;
    for _ in 0..PLANTED_ATTEMPTS {
        let raw = DMatrix::from_fn(p, m, |_, _| StandardNormal.sample(&mut r));
        let d = Dictionary::from_unnormalized(raw)?.into_atoms();
        let mu = mutual_coherence(&d);
        if best.as_ref().is_none_or(|(b, _)| mu < *b) {
            best = Some((mu, d));
        }
        if mu < bound {
            break;
        }
    }
    let (coherence, d0) = best.expect("at least one attempt");
    if coherence >= bound {
        log::warn!("planted dictionary coherence {coherence:.3} does not meet the recovery bound {bound:.3}");
    }
    let mut idx: Vec<usize> = (0..m).collect();
    let mut codes = Vec::with_capacity(n);
    for _ in 0..n {
        let (support, _) = idx.partial_shuffle(&mut r, q);
        let mut support = support.to_vec();
        support.sort_unstable();
        let values: Vec<f64> = support
            .iter()
            .map(|_| {
                let mag = 0.5 + r.random::<f64>();
                if r.random::<bool>() { mag } else { -mag }
            })
            .collect();
        codes.push(SparseCode {
            support,
            values,
            residual_norm: 0.0,
            degenerate: false,
        });
    }
    let codes = SparseCodeMatrix { n_atoms: m, codes };
    let x = &d0 * codes.to_dense();
    Ok(Planted {
        dataset: LabeledDataset::new(x, vec![1; n], format!("planted(seed={seed})"))?,
        dictionary: Dictionary::new(d0)?,
        codes,
        coherence,
    })
}

/// Isotropic Gaussian clusters around random unit-norm centers, one class
/// per cluster (labels `1..=classes`), `spread` the per-coordinate
/// standard deviation.
pub fn synth_gaussian_classes(p: usize, classes: usize, n_per_class: usize, spread: f64, seed: u64) -> Result<LabeledDataset> {
    gaussian_classes(p, classes, n_per_class, spread, seed, None)
}

/// Like [`synth_gaussian_classes`] with the centers drawn from `seed` and the
/// samples from `sample_seed`, so independent splits share their classes.
pub fn synth_gaussian_split(p: usize, classes: usize, n_per_class: usize, spread: f64, seed: u64, sample_seed: u64) -> Result<LabeledDataset> {
    gaussian_classes(p, classes, n_per_class, spread, seed, Some(sample_seed))
}

fn gaussian_classes(p: usize, classes: usize, n_per_class: usize, spread: f64, seed: u64, sample_seed: Option<u64>) -> Result<LabeledDataset> {
    if p == 0 || classes == 0 || !(spread >= 0.0) {
        return Err(LkdlError::InvalidParameter("need p >= 1, classes >= 1, spread >= 0".into()));
    }
    let mut r = rng::stream(seed);
    let centers = Dictionary::from_unnormalized(DMatrix::from_fn(p, classes, |_, _| StandardNormal.sample(&mut r)))?
        .into_atoms();
    if let Some(s) = sample_seed {
        r = rng::stream(rng::derive_seed(s, 0x5eed));
    }
    let n = classes * n_per_class;
    let mut samples = DMatrix::zeros(p, n);
    let mut labels = Vec::with_capacity(n);
    for c in 0..classes {
        for s in 0..n_per_class {
            let i = c * n_per_class + s;
            for (row, v) in col_mut(&mut samples, i).iter_mut().enumerate() {
                let z: f64 = StandardNormal.sample(&mut r);
                *v = centers[(row, c)] + spread * z;
            }
            labels.push(c as u32 + 1);
        }
    }
    let name = match sample_seed {
        Some(s) => format!("gaussian-classes(seed={seed},sample_seed={s})"),
        None => format!("gaussian-classes(seed={seed})"),
    };
    LabeledDataset::new(samples, labels, name)
}

/// Where a dataset comes from, as written in a manifest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum DataSource {
    Idx {
        images: PathBuf,
        labels: PathBuf,
    },
    Csv {
        path: PathBuf,
        #[serde(default)]
        label_column: usize,
        #[serde(default)]
        header: bool,
    },
    Circles {
        n_per_class: usize,
        #[serde(default = "default_radii")]
        radii: Vec<f64>,
        #[serde(default)]
        noise_sigma: f64,
        #[serde(default)]
        seed: u64,
    },
    Gaussian {
        p: usize,
        classes: usize,
        n_per_class: usize,
        spread: f64,
        #[serde(default)]
        seed: u64,
        /// Seed for the samples alone; the centers still come from `seed`.
        #[serde(default)]
        sample_seed: Option<u64>,
    },
    Planted {
        p: usize,
        n: usize,
        m: usize,
        q: usize,
        #[serde(default)]
        seed: u64,
    },
}

fn default_radii() -> Vec<f64> {
    vec![1.0, 2.0]
}

fn default_true() -> bool {
    true
}

/// Train/test sources plus preprocessing flags.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetManifest {
    pub train: DataSource,
    pub test: DataSource,
    #[serde(default = "default_true")]
    pub normalize: bool,
}

impl DataSource {
    /// Relative paths are resolved against `base`.
    pub fn load(&self, base: &Path) -> Result<LabeledDataset> {
        let at = |p: &Path| if p.is_absolute() { p.to_path_buf() } else { base.join(p) };
        match self {
            DataSource::Idx { images, labels } => load_idx(&at(images), &at(labels)),
            DataSource::Csv {
                path,
                label_column,
                header,
            } => load_csv(&at(path), *label_column, *header),
            DataSource::Circles {
                n_per_class,
                radii,
                noise_sigma,
                seed,
            } => synth_circles(*n_per_class, radii, *noise_sigma, *seed),
            DataSource::Gaussian {
                p,
                classes,
                n_per_class,
                spread,
                seed,
                sample_seed,
            } => gaussian_classes(*p, *classes, *n_per_class, *spread, *seed, *sample_seed),
            DataSource::Planted { p, n, m, q, seed } => Ok(synth_planted_sparse(*p, *n, *m, *q, *seed)?.dataset),
        }
    }
}

impl DatasetManifest {
    /// Loads both splits, normalizing them when the manifest asks for it.
    pub fn load(&self, base: &Path) -> Result<(LabeledDataset, LabeledDataset)> {
        let mut train = self.train.load(base)?;
        let mut test = self.test.load(base)?;
        if self.normalize {
            train = normalize_unit(&train)?;
            test = normalize_unit(&test)?;
        }
        Ok((train, test))
    }
}
