//! Sparse phase retrieval.
//!
//! Recovers sparse real signals from their power spectral density (or a
//! random subset of it) through a lifted weighted-l1 semidefinite program
//! with support-guided reweighting, and recovers complex sparse signals
//! from designed masked phaseless measurements combinatorially.

pub mod combinatorial;
pub mod conic;
pub mod error;
pub mod fourier;
pub mod harness;
pub mod rng;
pub mod retrieval;
pub mod signal;

pub use error::{Error, Result};
pub use signal::{
    autocorrelation, equivalent, psd, random_sparse_signal, Autocorrelation, EquivalenceReport,
    PowerSpectralDensity, SparseSignal,
};
