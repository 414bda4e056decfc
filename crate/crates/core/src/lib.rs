//! Supervised mixed-norm autoencoders (SMNAE) and a three-stage vidlet
//! pipeline for verifying kinship between two face videos.

pub mod data;
pub mod error;
pub mod eval;
pub mod layer;
pub mod mixed_norm;
pub mod numerics;
pub mod pipeline;
pub mod svm;

pub use error::{Error, Result};
