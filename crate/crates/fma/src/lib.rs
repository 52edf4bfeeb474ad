//! Simulation studies, data ingestion, cross-validation and report output
//! around [`fma_core`].

pub mod cv;
pub mod data;
pub mod harness;
pub mod modelset_io;
pub mod report;

pub use fma_core;
