//! Semi-discrete optimal transport for the compressible semi-geostrophic
//! equations in geostrophic coordinates.

pub mod analytic;
pub mod cli;
pub mod config;
pub mod cost;
pub mod domain;
pub mod dual;
pub mod dynamics;
pub mod error;
pub mod geometry;
pub mod io;
pub mod measures;
pub mod model;
pub mod tessellation;

#[cfg(test)]
mod testutil;

pub use error::{Error, Result};
