//! File formats, checkpoints and the `kgcrs` command line around
//! `kgcrs-core`.

pub mod artifacts;
pub mod bench;
pub mod commands;
pub mod config;
pub mod formats;
pub mod interact;
pub mod report;

pub use commands::{run, Cli};
