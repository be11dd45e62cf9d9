//! Command-line front end: WAV I/O, run configuration and subcommands.

pub mod cli;
pub mod commands;
pub mod config;
pub mod wav;
