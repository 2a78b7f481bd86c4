//! Matrix-free windowed active-set Lasso for convolutional spike
//! deconvolution.
//!
//! The observed multi-electrode signal is modeled as a sum of known
//! per-neuron waveforms placed at unknown times with unknown amplitudes,
//! plus noise. Recovering the activations is a Lasso problem whose design
//! matrix is block Toeplitz; this crate keeps that matrix implicit (a
//! [`ShapeBank`] plus convolution/correlation routines) and solves the
//! Lasso with an active-set strategy whose optimality scans run inside a
//! sliding temporal window, giving total work linear in the signal length.
//!
//! Besides the solvers, the crate ships the supporting toolkit: a seeded
//! simulator (Poisson trains, synthetic biphasic waveforms, calibrated
//! noise), overlap-group statistics with the matching theoretical bound,
//! recovery metrics (tolerance-matched F1 and a smoothed train-comparison
//! score), a runtime-scaling benchmark harness, and binary/CSV file formats
//! with reproducibility manifests.

pub mod activation;
pub mod active_set;
pub mod bench;
pub mod error;
pub mod io;
pub mod lasso;
pub mod metrics;
pub mod operator;
pub mod overlap;
pub mod report;
pub mod seed;
pub mod shapes;
pub mod signal;
pub mod simulate;

pub use activation::{Activation, ActivationSet};
pub use error::{Error, Result};
pub use shapes::ShapeBank;
pub use signal::MultiSignal;
