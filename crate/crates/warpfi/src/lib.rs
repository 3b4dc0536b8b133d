//! Campaign driver for the `warpfi-core` simulator.
//!
//! Adds what the core leaves out: binary matrix and weight files, TOML
//! campaign configs, a parallel runner writing replayable JSON-lines logs,
//! and JSON/CSV/markdown reports. The `warpfi` binary exposes all of it.

pub mod assets;
pub mod campaign;
pub mod config;
pub mod error;
pub mod formats;
pub mod log;
pub mod report;
pub mod target;

pub use campaign::{replay, run_campaign, run_in_memory, Replayer, RunOptions, Summary};
pub use config::CampaignConfig;
pub use error::{Error, Result};
pub use log::CampaignLog;
pub use report::Format;

pub use warpfi_core as core;
