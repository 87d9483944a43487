//! Deterministic Wi-Fi fault simulation and multi-modal diagnosis benchmark.

pub mod config;
pub mod dataset;
pub mod diagnosis;
pub mod domain;
pub mod error;
pub mod jsonio;
pub mod llmclient;
pub mod preprocess;
pub mod reasoning;
pub mod sim;
pub mod telemetry;

pub use error::{Error, Result};
