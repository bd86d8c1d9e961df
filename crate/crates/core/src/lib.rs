//! Toeplitz quantization of functions on the Riemann sphere and the
//! majorization geometry of its spectra.
//!
//! The pipeline: a [`SphereSymbol`] is quantized into a Hermitian
//! [`ToeplitzMatrix`]; its [`Spectrum`] yields the step function `Λ^m`, which
//! converges to the decreasing rearrangement `f*`. Diagonals of matrices with
//! a fixed spectrum fill the permutohedron, and dyadic permutations
//! approximate measure-preserving maps of `[0, 1)`.

mod assignment;
pub mod error;
pub mod interval_maps;
pub mod limsup;
pub mod majorize;
pub mod numeric;
pub mod rearrange;
pub mod spectra;
pub mod sphere_domain;
pub mod toeplitz;

pub use error::{Error, Result};
pub use interval_maps::{DyadicPermutation, IntervalMap, MeasurePreservingMap, TransportMatrix};
pub use limsup::ExperimentReport;
pub use majorize::MajorizationCertificate;
pub use rearrange::{DistributionProfile, Rearrangement};
pub use spectra::{Spectrum, StepFunction};
pub use sphere_domain::{QuadratureRule, SphereSymbol};
pub use toeplitz::ToeplitzMatrix;
