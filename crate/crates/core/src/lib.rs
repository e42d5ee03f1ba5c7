//! Nullspace kernel maximum margin metric learning.
//!
//! Training data is first projected onto the null projecting directions of
//! the within-class scatter, collapsing every class to a single point. A
//! kernel maximum margin criterion with unit-norm discriminants in feature
//! space is then solved on those coordinates, giving the final embedding.
//!
//! ```
//! use nk3ml::data::synth_gaussian_classes;
//! use nk3ml::pipeline::{nk3ml_fit, PipelineConfig};
//!
//! let train = synth_gaussian_classes(5, 3, 60, 1.0, 10.0, 7).unwrap();
//! let model = nk3ml_fit(&train, &PipelineConfig::default()).unwrap();
//! let embedded = model.transform_rows(train.features()).unwrap();
//! assert_eq!(embedded.nrows(), 15);
//! ```

pub mod data;
pub mod error;
pub mod eval;
pub mod kernel;
pub mod linalg;
pub mod maxmargin;
pub mod nfst;
pub mod pipeline;

#[cfg(test)]
mod testutil;

pub use data::{LabeledDataset, SplitSpec};
pub use error::{Error, Result, Stage};
pub use eval::{CmcCurve, DistanceKind, EvalConfig, RocResult};
pub use kernel::{Kernel, KernelKind, KernelSpec, KernelWidth};
pub use linalg::{EigenResult, Matrix, ScatterSet, Vector};
pub use maxmargin::{KernelDiscriminant, LinearDiscriminants, NkmmcOptions, Weighting};
pub use nfst::NullspaceProjection;
pub use pipeline::{Nk3mlModel, PipelineConfig};
