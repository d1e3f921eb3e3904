//! Library half of the `nashseek` experiment runner.
//!
//! The binary is a thin wrapper: it parses arguments, loads a config, and
//! dispatches to [`commands`]. Keeping the command implementations in a
//! library crate lets integration tests call them in-process instead of
//! shelling out for every case.

pub mod commands;
pub mod config;
pub mod error;
