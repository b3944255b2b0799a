//! Safeguarded hybrid acceleration for variance-reduced stochastic methods
//! on finite-sum composite problems.

pub mod accel;
pub mod bench;
pub mod data;
pub mod driver;
pub mod engine;
pub mod error;
pub mod linalg;
pub mod problem;
pub mod state;

pub use error::{Error, Result};
