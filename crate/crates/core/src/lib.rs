//! Noisy-label learning toolkit.

pub mod cli;
pub mod config;
pub mod dataset;
pub mod detection;
pub mod error;
pub mod evaluation;
pub mod nn;
pub mod rundir;
pub mod trainer;

pub use error::{NlabError, Result};
