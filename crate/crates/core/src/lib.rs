//! Core library for statepipe: a batch pipeline that turns timestamped
//! narrations of instructional videos into frame-wise multi-label object-state
//! annotations, trains small temporal models on them, and evaluates the result.
//!
//! The pipeline has four phases:
//!
//! 1. [`ingest`] curates videos whose narration mentions the tracked object
//!    and at least one verb associated with its states.
//! 2. [`llm`] runs a three-stage prompt chain over the narration: extract
//!    manipulation actions, trace state descriptions across actions, and infer
//!    a ternary (positive / negative / unassigned) verdict per state.
//! 3. [`align`] grounds per-action verdicts to individual frames with
//!    pluggable vision scorers, producing [`types::PseudoLabelTimeline`]s.
//! 4. [`trainer`] fits an MLP and a multi-stage temporal convolutional
//!    network on the pseudo-labels, then refines them by ensemble
//!    self-training. [`metrics`] scores the outcome.
//!
//! Everything is deterministic under a fixed seed: parallel sections reduce
//! in index order (see [`exec`]), file formats are byte-stable, and all
//! randomness flows from explicitly seeded generators.

pub mod align;
pub mod error;
pub mod exec;
pub mod features;
pub mod ingest;
pub mod labels;
pub mod llm;
pub mod metrics;
pub mod models;
pub mod nn;
pub mod pipeline;
pub mod synth;
pub mod textnorm;
pub mod trainer;
pub mod transcripts;
pub mod types;

pub use error::{Error, Result};
