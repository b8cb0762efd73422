//! Simulator for Byzantine-robust, variance-reduced distributed optimisation
//! with partial participation, compression and server-side clipping.

pub mod aggregation;
pub mod algorithms;
pub mod attacks;
pub mod compression;
pub mod error;
pub mod harness;
pub mod numerics;
pub mod problem;
pub mod sampling;

pub use error::{Error, Result};
pub use numerics::{ClipLevel, RealVector, RngStream};
