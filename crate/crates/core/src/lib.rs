//! Core algorithms for shallowing a pre-trained feed-forward network and
//! solving the open-set family-verification task on its features.
//!
//! The pipeline has four stages:
//!
//! 1. [`nn`] — a minimal feed-forward inference engine over a layer graph,
//!    with truncation at a chosen depth to turn a deep classifier prefix
//!    into a feature extractor.
//! 2. [`embed`] — the post-processing head attached to the truncated
//!    network: mean subtraction, projection onto the unit sphere, and a
//!    supervised-PCA linear layer fitted by maximizing between-identity
//!    spread against within-identity spread.
//! 3. [`matcher`] — the open-set decision rule: nearest-gallery distance,
//!    a threshold test, the MF/MO/MR error taxonomy, and exact threshold
//!    optimization.
//! 4. [`protocol`] — the evaluation harness: seeded identity splits,
//!    per-family-set trials with leave-one-out scoring, mean/max
//!    aggregation, and a grid search over the head's hyperparameters.
//!
//! The crate is `no_std`-compatible (`alloc` required); all IO, file
//! formats, and the command-line front end live in the companion
//! `shallowface` crate. Every function here is a pure, deterministic
//! function of its inputs: equal arguments give bitwise-equal results
//! regardless of thread count or call order.

#![cfg_attr(not(feature = "std"), no_std)]
#![deny(unsafe_code)]

extern crate alloc;

pub mod dataset;
pub mod eigen;
pub mod embed;
pub mod matcher;
pub mod nn;
pub mod protocol;

mod math;

pub use dataset::{FeatureDataset, FeatureRecord, SplitPlan};
pub use embed::{ProjectionModel, QuadraticForm};
pub use matcher::{Decision, ErrorReport, Gallery, GalleryMember, Label, Scored};
pub use nn::{Layer, LayerGraph, Tensor3};
pub use protocol::{AggregateReport, ExperimentConfig, JobMap, Objective, RateSummary, Serial};
