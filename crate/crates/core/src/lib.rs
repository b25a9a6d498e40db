//! Tight-binding reduction laboratory for the one-dimensional
//! Gross-Pitaevskii equation with a deep periodic potential.

pub mod basis;
pub mod config;
pub mod eigen;
pub mod dnls;
pub mod error;
pub mod experiment;
pub mod fit;
pub mod gpe;
pub mod grid;
pub mod harness;
pub mod io;
pub mod model;
pub mod spectral;

pub use error::{Error, Result};
