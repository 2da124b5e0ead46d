//! Separation of two machine sounds recorded on one microphone.
//!
//! The pipeline mixes two unit-power sources, takes a Hann STFT of the
//! mixture, and recovers each source by masking the mixture spectrogram:
//! either with oracle binary/soft masks computed from the true sources, or
//! with a soft mask predicted by a fully connected network trained on
//! chunked log-magnitude features. A FastICA baseline works on a two-channel
//! observation instead. All estimates are scored with BSS Eval energy ratios.

pub mod audio;
pub mod bsseval;
pub mod error;
pub mod fastica;
pub mod harness;
pub mod masking;
pub mod neuralnet;
pub mod spectral;

pub use error::{Error, Result};
