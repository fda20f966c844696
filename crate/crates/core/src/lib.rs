//! Fourier domain adaptation kernels.
//!
//! Replaces the low-frequency amplitude spectrum of a source image with the
//! one of a target image while keeping the source phase, so the output keeps
//! the source content but picks up the target's global appearance. Also
//! carries the loss kernels used when training on such data (cross-entropy,
//! Charbonnier-weighted entropy) and the multi-band pseudo-label ensembler.
//!
//! The crate is `no_std` and only needs `alloc`. File formats, image codecs
//! and the batch runner live in the `fda` crate.

#![cfg_attr(not(test), no_std)]

extern crate alloc;

mod error;
pub mod ensemble;
pub mod fft;
pub mod losses;
pub mod maps;
pub mod raster;
pub mod spectral;
pub mod transfer;

pub use error::{Error, Result};
pub use maps::{LabelMap, PredictionMap, IGNORE_LABEL};
pub use raster::RasterImage;
pub use spectral::{
    forward_fft, inverse_fft, recombine, split_amplitude_phase, AmplitudePhase, ChannelSpectrum,
    Reconstruction,
};
pub use transfer::{
    build_mask, multi_beta_transfer, spectral_transfer, BetaMask, TransferOptions, TransferResult,
    ZeroBeta,
};
