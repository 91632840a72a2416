//! Command-line driver: configuration layering, output bookkeeping and one
//! function per experiment step.

pub mod artifacts;
pub mod commands;
pub mod config;
pub mod error;
pub mod seeds;
