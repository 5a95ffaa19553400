//! Core pipeline for embedding-space dataset profiling and benchmark
//! compression: load a JSONL dataset plus its embedding sidecar, cluster
//! the normalized vectors, measure cluster quality, pick a retention rate,
//! draw a stratified subset, and score how faithfully the subset ranks
//! models against the full set.
//!
//! Every stage is deterministic for a given seed: identical inputs produce
//! byte-identical artifacts, with or without the `parallel` feature.

pub mod dataset;
mod exec;
pub mod fidelity;
pub mod geometry;
pub mod sampler;
pub mod seeding;
pub mod xray;

pub use dataset::{CompressedSet, Dataset, EmbeddingRecord, Sample, SchemaMapping, WriteReceipt};
pub use geometry::{ClusterModel, EmbeddingMatrix};
pub use sampler::{CompressionPlan, IntervalMode};
pub use xray::{Verdict, XRayReport, XRayThresholds};
