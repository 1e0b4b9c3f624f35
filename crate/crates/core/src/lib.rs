//! Two-arm experimental designs under equal and unequal allocation.
//!
//! The crate builds designs (complete randomization, block designs,
//! perfect-balance pairs), evaluates the worst-case, mean and tail MSE
//! criteria of the difference-in-means estimator from closed forms, and runs
//! seeded Monte Carlo grids over GLM response types.

pub mod config;
pub mod criteria;
pub mod design;
pub mod error;
pub mod estimator;
pub mod exec;
pub mod response;
pub mod seed;
pub mod sim;
pub mod verify;

pub use error::{Error, Result};
