pub mod config;
pub mod emd;
pub mod error;
pub mod ingest;
pub mod lmm;
pub mod pipeline;
pub mod report;
pub mod rhythm;
pub mod simulator;
pub mod stats;
pub mod types;

pub use error::{Error, Result};
