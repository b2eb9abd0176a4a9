//! Estimation of ordered-probit sample-selection ("ordered Heckman") models.
//!
//! Selection into one of `J` ordered stages follows an ordered probit; one or
//! more stages carry a Gaussian outcome equation whose error is correlated
//! with the selection error. The crate provides the joint likelihood and its
//! analytic gradient, FIML, two-step and imputation-based estimators,
//! cluster-robust inference, an exclusion-restriction validity test, data
//! preparation from CSV, and a Monte Carlo harness.

pub mod data;
pub mod error;
pub mod estimators;
pub mod inference;
pub mod ivtest;
pub mod linalg;
pub mod model;
pub mod normal;
pub mod optim;
pub mod rng;
pub mod sim;

pub use error::{Error, Result};
