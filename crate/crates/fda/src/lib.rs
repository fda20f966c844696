//! Batch Fourier domain adaptation.
//!
//! File-level layer over [`fda_core`]: image decode and encode, dataset
//! manifests, seeded pairing, resizing, tensor files, the parallel job runner
//! and the `fda` command line.

pub mod cli;
mod error;
pub mod image_io;
pub mod job;
pub mod manifest;
pub mod pairing;
pub mod preprocess;
pub mod tensor;

pub use error::{Error, Result};
pub use fda_core;
