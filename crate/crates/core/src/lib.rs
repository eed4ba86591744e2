//! Writer-independent signature verification in the dissimilarity space.
//!
//! The pipeline: feature vectors are paired through the dichotomy
//! transformation (coordinatewise absolute difference), the resulting
//! two-class dissimilarity set is standardized and condensed, a single
//! RBF-kernel dichotomizer is trained by SMO for all writers, and
//! questioned signatures are verified by fusing per-reference signed
//! distances. Sample difficulty is characterized with the kDN instance
//! hardness measure.

pub mod datamodel;
pub mod dichotomy;
pub mod dichotomizer;
pub mod error;
pub mod evaluation;
pub mod hardness;
pub mod neighborhood;
pub mod pipeline;
pub mod prototype;
pub mod verification;

pub use error::{Error, Result};
