//! Subcommand implementations. Each takes parsed arguments, performs
//! the library calls, writes outputs plus manifests, and returns what
//! the binary should print.

pub mod eval;
pub mod extract;
pub mod fit;
pub mod predict;
