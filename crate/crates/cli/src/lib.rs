//! Argument handling and subcommand drivers for the `stereo-bp` binary.

pub mod args;
pub mod commands;
