//! Texture CNNs for histopathology image classification.
//!
//! The crate covers the numeric engine, the TCNN and TCNN-Inception models,
//! Adadelta training with early stopping, patient-wise data handling, affine
//! augmentation, and patient-level metrics with Friedman/Nemenyi analysis.

pub mod augment;
pub mod data;
pub mod engine;
mod error;
pub mod eval;
pub mod model;
pub mod optim;
pub mod seed;

pub use error::{Error, Result};
