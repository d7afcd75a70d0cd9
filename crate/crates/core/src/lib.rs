//! Page stream segmentation.
//!
//! Classifies every page of an ordered scan stream as the first page of a
//! new document (ND) or a continuation of the current one (SD), then cuts
//! the stream at ND pages. Two classifier families are provided: a linear
//! SVM over engineered text features and a fusion MLP over text-CNN,
//! topic and image-CNN features.

pub(crate) mod binio;
pub mod corpus;
pub mod error;
pub mod hashing;
pub mod imaging;
pub mod neural;
pub mod pipeline;
pub mod svm;
pub mod textproc;
pub mod topics;

pub use error::{Error, Result};
