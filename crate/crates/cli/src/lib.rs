//! Configuration, subcommands and artifact output for the `tack` binary.

pub mod config;
pub mod manifest;
pub mod plot;
pub mod reproduce;
pub mod run;
