//! Single-iteration compressive-sensing reconstruction of sparse multitone
//! signals from randomly positioned samples.
//!
//! The reference pipeline ([`recon`]) detects the spectral support by
//! thresholding the DFT of the available samples against the noise level
//! that missing samples induce, then solves for exact amplitudes by least
//! squares on the partial DFT matrix. [`hw`] and [`datapath`] model the
//! fixed-point threshold hardware (table logarithm, non-restoring square
//! root, comparator) and cross-check it against the reference path.

pub mod datapath;
pub mod error;
pub mod harness;
pub mod hw;
pub mod io;
pub mod linalg;
pub mod recon;
pub mod signal;

pub use error::{Error, Result};
pub use recon::{
    reconstruct, AmpMode, DetectionResult, ReconStatus, ReconstructionResult, Spectrum,
    ThresholdConfig, ThresholdVariant,
};
pub use signal::{random_pattern, sample, synthesize, Measurement, SamplingPattern, SparseSpec, Tone};
