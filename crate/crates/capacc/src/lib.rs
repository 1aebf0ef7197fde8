//! File formats, simulation studies and the command line for the anomaly
//! detector in `capacc-core`.

pub mod cli;
pub mod config;
pub mod error;
pub mod io;
pub mod simlab;

pub use error::{Error, Result};
