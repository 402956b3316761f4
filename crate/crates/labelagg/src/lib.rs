//! File formats, checkpoints, reports and the command-line front end for
//! [`labelagg_core`].

pub mod checkpoint;
pub mod cli;
pub mod config;
pub mod error;
pub mod experiment;
pub mod io;
pub mod report;

pub use error::{Error, Result};
pub use io::Dataset;
