//! Experiment laboratory around the core training library: config files,
//! run orchestration, on-disk artifacts, and report generation.

pub mod config;
pub mod error;
pub mod formats;
pub mod report;
pub mod runner;

pub use error::{LabError, Result};
