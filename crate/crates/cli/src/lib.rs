//! Command-line companion to `shallowface-core`: file formats, run
//! manifests, thread-pool plumbing, and the subcommand implementations
//! behind the `shallowface` binary.

#![deny(unsafe_code)]

pub mod commands;
pub mod error;
pub mod formats;
pub mod manifest;
pub mod parallel;
