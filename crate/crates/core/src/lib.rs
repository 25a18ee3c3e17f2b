//! Class-level-confidence dynamic thresholding and re-sampling for
//! semi-supervised point-cloud classification.
//!
//! The per-epoch scheduler lives in [`confidence`], [`pseudolabel`] and
//! [`resample`]. [`model`] and [`data`] provide a small differentiable
//! classifier and a synthetic long-tail benchmark. [`harness`] runs and
//! compares experiments.

mod codec;
pub mod confidence;
pub mod data;
pub mod error;
pub mod harness;
pub mod model;
pub mod pseudolabel;
pub mod resample;
pub mod rng;
pub mod types;

pub use error::{Error, Result};
