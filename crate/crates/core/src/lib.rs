//! Near-field secure downlink with a dynamic artificial-noise hybrid precoder.
//!
//! The crate is organised bottom-up:
//!
//! - [`geometry`]: planar array layout, spherical-wave (NUSW) line-of-sight
//!   channels, scatterer paths and their covariance.
//! - [`precoding`]: SVD analog precoder, zero-forcing baseband precoder with
//!   null-space artificial noise and the two power-allocation rules.
//! - [`numerics`]: special functions, the doubly non-central F density,
//!   samplers and semi-infinite quadrature.
//! - [`analysis`]: closed-form average SINR, rates, secrecy capacity,
//!   eavesdropper SINR statistics, secrecy outage and secrecy maps.
//! - [`montecarlo`]: link-level simulation (symbols, received signals,
//!   demodulation, BER / secrecy-rate / outage estimation).
//! - [`experiments`]: configuration files, experiment orchestration and CSV
//!   artifacts used by the `nfsec` command line tool.

pub mod analysis;
pub mod error;
pub mod experiments;
pub mod geometry;
pub mod linalg;
pub mod montecarlo;
pub mod numerics;
pub mod precoding;
pub mod rng;

pub use error::{Error, Result};
pub use linalg::{CMat, CVec};
