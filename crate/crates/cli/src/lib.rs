//! Command-line front-end: configuration, run directories and subcommands.

pub mod commands;
pub mod config;
pub mod error;
pub mod output;
