//! Linearized kernel dictionary learning.
//!
//! Kernelizes linear dictionary-learning pipelines by mapping samples to
//! Nystrom "virtual samples" whose inner products approximate the kernel,
//! then learning ordinary dictionaries (MOD, K-SVD, LC-KSVD) on them.
//! Exact-kernel baselines (kernel OMP with kernel MOD) are included for
//! comparison.

pub mod error;
pub mod rng;
pub mod matrix;
pub mod kernels;
pub mod sampling;
pub mod eigen;
pub mod nystrom;
pub mod sparse_coding;
pub mod dict_learning;
pub mod datasets;
pub mod classify;
pub mod lcksvd;
pub mod container;
pub mod pipeline;

/// Crate version, echoed into run manifests.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");

pub use error::{LkdlError, Result};
pub use kernels::{Kernel, KernelMatrix};
pub use matrix::SampleMatrix;
pub use nystrom::{NystromMap, VirtualSamples};
pub use sampling::{LandmarkSet, SamplerSpec, SamplingMethod};
pub use datasets::LabeledDataset;
pub use dict_learning::{Dictionary, LearnConfig, LearnMethod};
pub use sparse_coding::{CoefficientDictionary, SparseCode, SparseCodeMatrix};
pub use classify::{ClassDictionaryModel, KernelClassModel, Prediction};
pub use container::Persist;
pub use lcksvd::{LcKsvdModel, Variant};
pub use pipeline::{run_pipeline, Learner, PipelineKind, PipelineSpec};
