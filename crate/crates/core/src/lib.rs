//! Supervised tensor decompositions for classifying multiway samples.
//!
//! * [`hoda`]: higher-order discriminant analysis (backward projections).
//! * [`forward`]: activation patterns that reconstruct inputs from latents.
//! * [`bttda`]: block-term discriminant analysis by deflation; all-rank-1
//!   blocks (`theta = 0`) give the PARAFAC-structured variant.
//! * [`pipeline`]: whitening, Fisher-score selection and LDA on the
//!   extracted features.
//! * [`eval`]: synthetic data, stratified cross-validation, nested tuning
//!   and result files.

pub mod bttda;
pub mod dataset;
pub mod discriminant;
pub mod error;
pub mod eval;
pub mod forward;
pub mod hoda;
pub mod pipeline;
pub mod tensor;
pub mod util;

pub use crate::bttda::{bttda_transform, fit_bttda, nmse, select_ranks, Block, BttdaFit, BttdaModel};
pub use crate::dataset::LabeledDataset;
pub use crate::discriminant::{class_statistics, ClassStats, EigenOrder, EigenResult};
pub use crate::error::{Error, Result};
pub use crate::forward::{fit_hoda_forward, reconstruct, ActivationSet};
pub use crate::hoda::{fisher_ratio, fit_hoda_backward, hoda_transform, FitOptions, HodaModel, InitStrategy, Shrinkage};
pub use crate::pipeline::{Decoder, FeaturePipeline, LdaShrinkage};
pub use crate::tensor::{Matrix, Tensor};
