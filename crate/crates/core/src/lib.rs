//! Hypersphere embedding losses with controllable gradient re-scaling.
//!
//! The crate provides:
//!
//! * exact cosine/angle kernels and their tangent gradients ([`geometry`]),
//! * sigmoid, piecewise and constant gradient re-scale functions ([`rescale`]),
//! * the sigmoid-constrained hypersphere loss with block-gradient semantics ([`sface`]),
//! * the softmax / normalized-softmax / CosFace / ArcFace family and its
//!   equivalent re-scaled metric form ([`margin`]),
//! * a central finite-difference oracle ([`gradcheck`]),
//! * seeded noisy-label datasets on the unit sphere ([`synthetic`]),
//! * a plain SGD trainer with step decay and norm-drift tracking ([`trainer`]),
//! * angle statistics and hyperparameter sweeps ([`analysis`]).
//!
//! All arithmetic is `f64`.

pub mod analysis;
pub mod batch;
#[cfg(feature = "cli")]
pub mod cli;
pub mod csvio;
pub mod error;
pub mod geometry;
pub mod gradcheck;
pub mod margin;
pub mod rescale;
pub mod sface;
pub mod synthetic;
pub mod trainer;

pub use batch::{CenterMatrix, EmbeddingBatch, LossGradReport, Matrix};
pub use error::{Error, Result};
pub use margin::{MarginSpec, MarginVariant};
pub use rescale::{RescaleFamily, RescaleSpec};
