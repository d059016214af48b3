//! Standard-library side of kucnet: dataset text formats, binary caches and
//! checkpoints, JSON/DOT export, a rayon executor and the command line.

pub mod binary;
pub mod cli;
pub mod config;
pub mod dataset;
pub mod error;
pub mod exec;
pub mod export;
pub mod report;
pub mod text;

pub use error::{Error, Result};
