//! Numerical experiments on ball mean oscillation.

pub mod catalog;
pub mod cli;
pub mod config;
pub mod error;
pub mod oscillation;
pub mod quadrature;
pub mod rng;
pub mod verification;
pub mod weak_norm;

pub use catalog::{ScalarField, SmoothnessTag, TestFunction};
pub use error::{Error, Result};
pub use quadrature::{BallSample, EstimatedValue, Method, QuadratureSpec};
