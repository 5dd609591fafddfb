//! Communication-constrained multi-robot exploration toolkit.

pub mod comms;
pub mod dsu;
pub mod env;
pub mod error;
pub mod geometry;
pub mod grid;
pub mod harness;
pub mod mapgen;
pub mod policy;
pub mod roadmap;

pub use error::{Error, Result};
