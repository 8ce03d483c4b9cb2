//! Attitude determination from coarse sensors: synthetic pass generation,
//! a TRIAD baseline and a small windowed neural regressor.

pub mod catalog;
pub mod error;
pub mod features;
pub mod harness;
pub mod net;
pub mod passlog;
pub mod refmodels;
pub mod rotation;
pub mod synth;
pub mod triad;

pub use error::{Error, Result};
pub use rotation::{Dcm, Mrp, Quaternion, Vec3};
