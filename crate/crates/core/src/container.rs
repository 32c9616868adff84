//! Versioned little-endian binary container shared by every persisted
//! artifact.
//!
//! Layout: magic `LKDL`, `u16` version, `u8` payload kind, kernel spec
//! (`u8` tag, `u32` degree, `f64` sigma, `f64` offset), then `p`, `c`, `k`
//! as `u64`, then the payload. Matrices are written as `u64` rows, `u64`
//! cols and row-major `f64` values.

use std::fs;
use std::path::Path;

use nalgebra::{DMatrix, DVector};

use crate::classify::{ClassDictionary, ClassDictionaryModel, KernelClass, KernelClassModel};
use crate::dict_learning::Dictionary;
use crate::error::{LkdlError, Result};
use crate::kernels::Kernel;
use crate::lcksvd::{LcKsvdModel, Variant};
use crate::nystrom::NystromMap;
use crate::pipeline::TrainedModel;
use crate::sparse_coding::CoefficientDictionary;

pub const MAGIC: &[u8; 4] = b"LKDL";
pub const VERSION: u16 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u8)]
pub enum PayloadKind {
    NystromMap = 1,
    Dictionary = 2,
    CoefficientDictionary = 3,
    ClassModel = 4,
    KernelClassModel = 5,
    LcKsvdModel = 6,
    Features = 7,
}

impl PayloadKind {
    fn from_u8(v: u8) -> Result<Self> {
        Ok(match v {
            1 => Self::NystromMap,
            2 => Self::Dictionary,
            3 => Self::CoefficientDictionary,
            4 => Self::ClassModel,
            5 => Self::KernelClassModel,
            6 => Self::LcKsvdModel,
            7 => Self::Features,
            other => return Err(LkdlError::Format(format!("unknown payload kind {other}"))),
        })
    }
}

/// Fixed-size header preceding every payload.
#[derive(Debug, Clone, PartialEq)]
pub struct Header {
    pub kind: PayloadKind,
    pub kernel: Option<Kernel>,
    pub p: u64,
    pub c: u64,
    pub k: u64,
}

#[derive(Default)]
struct Writer {
    buf: Vec<u8>,
}

impl Writer {
    fn u8(&mut self, v: u8) {
        self.buf.push(v);
    }
    fn u32(&mut self, v: u32) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }
    fn u64(&mut self, v: u64) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }
    fn usize(&mut self, v: usize) {
        self.u64(v as u64);
    }
    fn f64(&mut self, v: f64) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }
    fn matrix(&mut self, m: &DMatrix<f64>) {
        self.usize(m.nrows());
        self.usize(m.ncols());
        for r in 0..m.nrows() {
            for c in 0..m.ncols() {
                self.f64(m[(r, c)]);
            }
        }
    }
    fn f64s(&mut self, v: &[f64]) {
        self.usize(v.len());
        v.iter().for_each(|&x| self.f64(x));
    }
    fn u32s(&mut self, v: &[u32]) {
        self.usize(v.len());
        v.iter().for_each(|&x| self.u32(x));
    }
    fn header(&mut self, h: &Header) {
        self.buf.extend_from_slice(MAGIC);
        self.buf.extend_from_slice(&VERSION.to_le_bytes());
        self.u8(h.kind as u8);
        let (tag, degree, sigma, offset) = match h.kernel {
            None => (0, 0, 0.0, 0.0),
            Some(Kernel::Linear) => (1, 0, 0.0, 0.0),
            Some(Kernel::Polynomial { degree, offset }) => (2, degree, 0.0, offset),
            Some(Kernel::Gaussian { sigma }) => (3, 0, sigma, 0.0),
        };
        self.u8(tag);
        self.u32(degree);
        self.f64(sigma);
        self.f64(offset);
        self.u64(h.p);
        self.u64(h.c);
        self.u64(h.k);
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    at: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.at.checked_add(n).filter(|&e| e <= self.bytes.len()).ok_or_else(|| {
            LkdlError::Format(format!("truncated container: wanted {n} bytes at offset {}", self.at))
        })?;
        let s = &self.bytes[self.at..end];
        self.at = end;
        Ok(s)
    }
    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }
    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }
    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }
    fn usize(&mut self) -> Result<usize> {
        usize::try_from(self.u64()?).map_err(|_| LkdlError::Format("length does not fit in memory".into()))
    }
    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }
    fn len(&mut self, elem: usize) -> Result<usize> {
        let n = self.usize()?;
        // reject lengths the remaining bytes cannot hold before allocating
        if n.saturating_mul(elem) > self.bytes.len() - self.at {
            return Err(LkdlError::Format(format!("declared length {n} exceeds the container")));
        }
        Ok(n)
    }
    fn matrix(&mut self) -> Result<DMatrix<f64>> {
        let rows = self.usize()?;
        let cols = self.usize()?;
        let n = rows
            .checked_mul(cols)
            .filter(|n| n.saturating_mul(8) <= self.bytes.len() - self.at)
            .ok_or_else(|| LkdlError::Format(format!("matrix {rows}x{cols} exceeds the container")))?;
        let mut vals = Vec::with_capacity(n);
        for _ in 0..n {
            vals.push(self.f64()?);
        }
        Ok(DMatrix::from_row_slice(rows, cols, &vals))
    }
    fn f64s(&mut self) -> Result<Vec<f64>> {
        let n = self.len(8)?;
        (0..n).map(|_| self.f64()).collect()
    }
    fn u32s(&mut self) -> Result<Vec<u32>> {
        let n = self.len(4)?;
        (0..n).map(|_| self.u32()).collect()
    }
    fn header(&mut self) -> Result<Header> {
        if self.take(4)? != MAGIC {
            return Err(LkdlError::Format("not an LKDL container (bad magic)".into()));
        }
        let version = u16::from_le_bytes(self.take(2)?.try_into().expect("2 bytes"));
        if version != VERSION {
            return Err(LkdlError::Format(format!("unsupported container version {version}")));
        }
        let kind = PayloadKind::from_u8(self.u8()?)?;
        let tag = self.u8()?;
        let degree = self.u32()?;
        let sigma = self.f64()?;
        let offset = self.f64()?;
        let kernel = match tag {
            0 => None,
            1 => Some(Kernel::Linear),
            2 => Some(Kernel::Polynomial { degree, offset }),
            3 => Some(Kernel::Gaussian { sigma }),
            other => return Err(LkdlError::Format(format!("unknown kernel tag {other}"))),
        };
        Ok(Header {
            kind,
            kernel,
            p: self.u64()?,
            c: self.u64()?,
            k: self.u64()?,
        })
    }
    fn expect(&mut self, kind: PayloadKind) -> Result<Header> {
        let h = self.header()?;
        if h.kind != kind {
            return Err(LkdlError::Format(format!("expected a {kind:?} container, found {:?}", h.kind)));
        }
        Ok(h)
    }
    fn finish(&self) -> Result<()> {
        if self.at != self.bytes.len() {
            return Err(LkdlError::Format(format!("{} trailing bytes", self.bytes.len() - self.at)));
        }
        Ok(())
    }
}

/// Reads only the header, e.g. to dispatch on the payload kind.
pub fn read_header(bytes: &[u8]) -> Result<Header> {
    Reader { bytes, at: 0 }.header()
}

/// Artifacts that round-trip through the container.
pub trait Persist: Sized {
    fn to_bytes(&self) -> Vec<u8>;
    fn from_bytes(bytes: &[u8]) -> Result<Self>;

    fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_bytes())?;
        Ok(())
    }

    fn load(path: &Path) -> Result<Self> {
        Self::from_bytes(&fs::read(path)?)
    }
}

fn decode<T>(bytes: &[u8], kind: PayloadKind, body: impl FnOnce(&Header, &mut Reader) -> Result<T>) -> Result<T> {
    let mut r = Reader { bytes, at: 0 };
    let h = r.expect(kind)?;
    let out = body(&h, &mut r)?;
    r.finish()?;
    Ok(out)
}

impl Persist for NystromMap {
    fn to_bytes(&self) -> Vec<u8> {
        let mut w = Writer::default();
        w.header(&Header {
            kind: PayloadKind::NystromMap,
            kernel: Some(self.kernel.clone()),
            p: self.p() as u64,
            c: self.c() as u64,
            k: self.k() as u64,
        });
        w.matrix(&self.landmarks);
        w.matrix(&self.eigenvectors);
        w.f64s(self.eigenvalues.as_slice());
        w.usize(self.requested_k);
        match &self.source_indices {
            None => w.u8(0),
            Some(idx) => {
                w.u8(1);
                w.usize(idx.len());
                idx.iter().for_each(|&i| w.usize(i));
            }
        }
        w.buf
    }

    fn from_bytes(bytes: &[u8]) -> Result<Self> {
        decode(bytes, PayloadKind::NystromMap, |h, r| {
            let kernel = h.kernel.clone().ok_or_else(|| LkdlError::Format("Nystrom map without kernel".into()))?;
            let landmarks = r.matrix()?;
            let eigenvectors = r.matrix()?;
            let eigenvalues = DVector::from_vec(r.f64s()?);
            let requested_k = r.usize()?;
            let source_indices = match r.u8()? {
                0 => None,
                _ => {
                    let n = r.len(8)?;
                    Some((0..n).map(|_| r.usize()).collect::<Result<Vec<_>>>()?)
                }
            };
            if eigenvectors.nrows() != landmarks.ncols() || eigenvectors.ncols() != eigenvalues.len() {
                return Err(LkdlError::Format("inconsistent Nystrom map shapes".into()));
            }
            Ok(NystromMap {
                kernel,
                landmarks,
                source_indices,
                eigenvectors,
                eigenvalues,
                requested_k,
            })
        })
    }
}

impl Persist for Dictionary {
    fn to_bytes(&self) -> Vec<u8> {
        let mut w = Writer::default();
        w.header(&Header {
            kind: PayloadKind::Dictionary,
            kernel: None,
            p: self.dim() as u64,
            c: 0,
            k: self.len() as u64,
        });
        w.matrix(self.atoms());
        w.buf
    }

    fn from_bytes(bytes: &[u8]) -> Result<Self> {
        decode(bytes, PayloadKind::Dictionary, |_, r| Dictionary::new(r.matrix()?))
    }
}

impl Persist for CoefficientDictionary {
    fn to_bytes(&self) -> Vec<u8> {
        let mut w = Writer::default();
        w.header(&Header {
            kind: PayloadKind::CoefficientDictionary,
            kernel: None,
            p: 0,
            c: self.coefficients.nrows() as u64,
            k: self.n_atoms() as u64,
        });
        w.matrix(&self.coefficients);
        w.buf
    }

    fn from_bytes(bytes: &[u8]) -> Result<Self> {
        decode(bytes, PayloadKind::CoefficientDictionary, |_, r| Ok(CoefficientDictionary::new(r.matrix()?)))
    }
}

impl Persist for ClassDictionaryModel {
    fn to_bytes(&self) -> Vec<u8> {
        let mut w = Writer::default();
        w.header(&Header {
            kind: PayloadKind::ClassModel,
            kernel: None,
            p: self.space_dim as u64,
            c: self.classes.len() as u64,
            k: self.q as u64,
        });
        for c in &self.classes {
            w.u32(c.label);
            w.matrix(c.dictionary.atoms());
        }
        w.buf
    }

    fn from_bytes(bytes: &[u8]) -> Result<Self> {
        decode(bytes, PayloadKind::ClassModel, |h, r| {
            let classes = (0..h.c)
                .map(|_| {
                    let label = r.u32()?;
                    Ok(ClassDictionary {
                        label,
                        dictionary: Dictionary::new(r.matrix()?)?,
                    })
                })
                .collect::<Result<Vec<_>>>()?;
            Ok(ClassDictionaryModel {
                classes,
                q: h.k as usize,
                space_dim: h.p as usize,
            })
        })
    }
}

impl Persist for KernelClassModel {
    fn to_bytes(&self) -> Vec<u8> {
        let mut w = Writer::default();
        w.header(&Header {
            kind: PayloadKind::KernelClassModel,
            kernel: Some(self.kernel.clone()),
            p: self.classes.first().map_or(0, |c| c.samples.nrows()) as u64,
            c: self.classes.len() as u64,
            k: self.q as u64,
        });
        for c in &self.classes {
            w.u32(c.label);
            w.matrix(&c.samples);
            w.matrix(&c.dictionary.coefficients);
            w.matrix(&c.atom_gram);
        }
        w.buf
    }

    fn from_bytes(bytes: &[u8]) -> Result<Self> {
        decode(bytes, PayloadKind::KernelClassModel, |h, r| {
            let kernel = h.kernel.clone().ok_or_else(|| LkdlError::Format("kernel model without kernel".into()))?;
            let classes = (0..h.c)
                .map(|_| {
                    Ok(KernelClass {
                        label: r.u32()?,
                        samples: r.matrix()?,
                        dictionary: CoefficientDictionary::new(r.matrix()?),
                        atom_gram: r.matrix()?,
                    })
                })
                .collect::<Result<Vec<_>>>()?;
            Ok(KernelClassModel {
                kernel,
                classes,
                q: h.k as usize,
            })
        })
    }
}

impl Persist for LcKsvdModel {
    fn to_bytes(&self) -> Vec<u8> {
        let mut w = Writer::default();
        w.header(&Header {
            kind: PayloadKind::LcKsvdModel,
            kernel: None,
            p: self.dictionary.dim() as u64,
            c: self.classes.len() as u64,
            k: self.dictionary.len() as u64,
        });
        w.u8(match self.variant {
            Variant::Lc1 => 1,
            Variant::Lc2 => 2,
        });
        w.usize(self.q);
        w.f64(self.tau2);
        w.f64(self.sqrt_alpha);
        w.f64(self.sqrt_beta);
        w.matrix(self.dictionary.atoms());
        w.matrix(&self.t);
        w.matrix(&self.theta);
        w.u32s(&self.classes);
        w.u32s(&self.atom_class);
        w.f64s(&self.atom_scales);
        w.buf
    }

    fn from_bytes(bytes: &[u8]) -> Result<Self> {
        decode(bytes, PayloadKind::LcKsvdModel, |_, r| {
            let variant = match r.u8()? {
                1 => Variant::Lc1,
                2 => Variant::Lc2,
                other => return Err(LkdlError::Format(format!("unknown LC-KSVD variant {other}"))),
            };
            Ok(LcKsvdModel {
                variant,
                q: r.usize()?,
                tau2: r.f64()?,
                sqrt_alpha: r.f64()?,
                sqrt_beta: r.f64()?,
                dictionary: Dictionary::new(r.matrix()?)?,
                t: r.matrix()?,
                theta: r.matrix()?,
                classes: r.u32s()?,
                atom_class: r.u32s()?,
                atom_scales: r.f64s()?,
            })
        })
    }
}

/// A feature matrix (e.g. virtual samples) with its labels.
#[derive(Debug, Clone, PartialEq)]
pub struct Features {
    pub features: DMatrix<f64>,
    pub labels: Vec<u32>,
}

/// Any trained classifier, dispatched on the payload kind.
impl Persist for TrainedModel {
    fn to_bytes(&self) -> Vec<u8> {
        match self {
            TrainedModel::Classes(m) => m.to_bytes(),
            TrainedModel::Kernel(m) => m.to_bytes(),
            TrainedModel::Lcksvd(m) => m.to_bytes(),
        }
    }

    fn from_bytes(bytes: &[u8]) -> Result<Self> {
        match read_header(bytes)?.kind {
            PayloadKind::ClassModel => Ok(TrainedModel::Classes(ClassDictionaryModel::from_bytes(bytes)?)),
            PayloadKind::KernelClassModel => Ok(TrainedModel::Kernel(KernelClassModel::from_bytes(bytes)?)),
            PayloadKind::LcKsvdModel => Ok(TrainedModel::Lcksvd(LcKsvdModel::from_bytes(bytes)?)),
            other => Err(LkdlError::Format(format!("{other:?} is not a trained model"))),
        }
    }
}

impl Persist for Features {
    fn to_bytes(&self) -> Vec<u8> {
        let mut w = Writer::default();
        w.header(&Header {
            kind: PayloadKind::Features,
            kernel: None,
            p: self.features.nrows() as u64,
            c: 0,
            k: self.features.ncols() as u64,
        });
        w.matrix(&self.features);
        w.u32s(&self.labels);
        w.buf
    }

    fn from_bytes(bytes: &[u8]) -> Result<Self> {
        decode(bytes, PayloadKind::Features, |_, r| {
            let features = r.matrix()?;
            let labels = r.u32s()?;
            if labels.len() != features.ncols() {
                return Err(LkdlError::Format("feature and label counts differ".into()));
            }
            Ok(Features { features, labels })
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sampling::{SamplerSpec, SamplingMethod};

    fn map() -> NystromMap {
        use rand_distr::{Distribution, StandardNormal};
        let mut r = crate::rng::stream(3);
        let x = DMatrix::from_fn(3, 12, |_, _| StandardNormal.sample(&mut r));
        NystromMap::fit(&x, &Kernel::gaussian(1.3), &SamplerSpec::new(SamplingMethod::Uniform, 6, 2), 4).unwrap()
    }

    #[test]
    fn nystrom_round_trip_and_header() {
        let m = map();
        let bytes = m.to_bytes();
        assert_eq!(&bytes[..4], b"LKDL");
        assert_eq!(u16::from_le_bytes([bytes[4], bytes[5]]), VERSION);
        let h = read_header(&bytes).unwrap();
        assert_eq!((h.kind, h.p, h.c, h.k), (PayloadKind::NystromMap, 3, 6, 4));
        assert_eq!(h.kernel, Some(Kernel::gaussian(1.3)));
        assert_eq!(NystromMap::from_bytes(&bytes).unwrap(), m);
    }

    #[test]
    fn matrices_are_row_major() {
        let d = Dictionary::new(DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, -1.0])).unwrap();
        let bytes = d.to_bytes();
        let body = &bytes[bytes.len() - 32..];
        let vals: Vec<f64> = body.chunks(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect();
        assert_eq!(vals, vec![1.0, 0.0, 0.0, -1.0]);
        assert_eq!(Dictionary::from_bytes(&bytes).unwrap(), d);
    }

    #[test]
    fn corrupt_inputs_are_rejected() {
        let bytes = map().to_bytes();
        assert!(NystromMap::from_bytes(&bytes[..bytes.len() - 3]).is_err());
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(NystromMap::from_bytes(&bad).is_err());
        let mut extra = bytes.clone();
        extra.push(0);
        assert!(NystromMap::from_bytes(&extra).is_err());
        assert!(Dictionary::from_bytes(&bytes).is_err());
        let mut huge = Features {
            features: DMatrix::zeros(1, 1),
            labels: vec![1],
        }
        .to_bytes();
        let at = huge.len() - 8 - 4 - 8 - 8;
        huge[at..at + 8].copy_from_slice(&u64::MAX.to_le_bytes());
        assert!(Features::from_bytes(&huge).is_err());
    }

    #[test]
    fn models_round_trip() {
        let ds = crate::datasets::normalize_unit(&crate::datasets::synth_gaussian_classes(4, 2, 10, 0.3, 1).unwrap()).unwrap();
        let cfg = crate::classify::ClassTrainConfig {
            m_per_class: 3,
            q: 2,
            iterations: 2,
            method: crate::dict_learning::LearnMethod::Mod,
            seed: 1,
        };
        let cm = crate::classify::train_per_class(&ds.samples, &ds.labels, &cfg).unwrap();
        assert_eq!(ClassDictionaryModel::from_bytes(&cm.to_bytes()).unwrap(), cm);
        let km = crate::classify::train_kernel_per_class(&ds.samples, &ds.labels, &Kernel::polynomial(2), &cfg).unwrap();
        assert_eq!(KernelClassModel::from_bytes(&km.to_bytes()).unwrap(), km);
        let lc = crate::lcksvd::train(
            &ds.samples,
            &ds.labels,
            &crate::lcksvd::LcKsvdConfig::new(4, 2, 1.0, 1.0, 2, Variant::Lc2, 1),
        )
        .unwrap()
        .model;
        assert_eq!(LcKsvdModel::from_bytes(&lc.to_bytes()).unwrap(), lc);
        let f = Features {
            features: ds.samples.clone(),
            labels: ds.labels.clone(),
        };
        assert_eq!(Features::from_bytes(&f.to_bytes()).unwrap(), f);
        let a = CoefficientDictionary::new(DMatrix::identity(3, 2));
        assert_eq!(CoefficientDictionary::from_bytes(&a.to_bytes()).unwrap(), a);
    }

    #[test]
    fn save_and_load() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("map.lkdl");
        let m = map();
        m.save(&p).unwrap();
        assert_eq!(NystromMap::load(&p).unwrap(), m);
    }
}
