//! Library surface of the experiment harness; the binary is a thin wrapper
//! so tests can drive configuration parsing and execution directly.

pub mod config;
pub mod plot;
pub mod runner;

pub use config::{parse_config, RunConfig};
pub use runner::{execute, RunReport};
