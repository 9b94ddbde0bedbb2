//! On-disk formats. Every format is plain text (CSV or JSON), written
//! with a stable field order and shortest round-trip float formatting
//! so identical runs produce identical bytes.

pub mod config;
pub mod features;
pub mod images;
pub mod model;
pub mod projection;
pub mod report;
pub mod split;
