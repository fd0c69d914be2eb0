//! Library side of the `ecoflow` command line: configuration loading and
//! the subcommands, usable from tests without spawning the binary.

pub mod commands;
pub mod config;
pub mod error;
