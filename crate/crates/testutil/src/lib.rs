//! Shared helpers for tests and benches: synthetic corpora with known
//! cluster structure, JSONL writers, and an instrumented stub embedding
//! server. Not part of the public toolkit API.

pub mod corpus;
pub mod stub;
