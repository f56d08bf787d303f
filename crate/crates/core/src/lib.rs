//! Randomized-measurement expectation estimation with readout-error
//! mitigation.
//!
//! The crate simulates shots of randomly rotated single-qubit measurements
//! (uniform sphere, pole-concentrated, or the 12-element tetrahedral group),
//! turns them into unbiased Pauli expectation estimates, and divides out
//! readout noise using suppression factors calibrated on `|0...0>`.
//!
//! Exact density-matrix objects in [`pauli`] and [`channels`] are small-`Q`
//! oracles; the sampling path in [`simulator`] and [`estimator`] never builds
//! `2^Q x 2^Q` matrices for product states.

pub mod channels;
pub mod error;
pub mod estimator;
pub mod experiments;
pub mod linalg;
pub mod mitigation;
pub mod pauli;
pub mod sampling;
pub mod simulator;

pub use channels::{Mask, QuantumChannel, ReadoutErrorModel};
pub use error::{Error, Result};
pub use estimator::{EstimateResult, ShotRecord};
pub use pauli::{DensityMatrix, Observable, Pauli, PauliString};
pub use sampling::{MeasurementFrame, SamplerKind};
