//! Configuration, system generators and subcommands behind the `pw` binary.

pub mod artifact;
pub mod commands;
pub mod config;
pub mod error;
pub mod model;
