//! Command-line driver: configuration, subcommands and dataset statistics.

pub mod commands;
pub mod config;
pub mod error;
pub mod output;
pub mod stats;
