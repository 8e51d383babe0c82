//! Dataset handling, caching, training, prediction and evaluation around
//! `bedsal-core`, plus the `bedsal` command line.

pub mod cache;
pub mod checkpoint;
pub mod cli;
pub mod config;
pub mod dataset;
pub mod error;
pub mod fixture;
pub mod imageio;
pub mod parallel;
pub mod pipeline;
pub mod report;
pub mod run;
pub mod tensor;

pub use error::{Error, Result};
