pub mod compress;
pub mod embed;
pub mod fidelity;
pub mod xray;

use std::path::Path;

use serde::Serialize;

use dsxray_core::dataset::{self, Dataset};
use dsxray_core::geometry::{l2_normalize, EmbeddingMatrix};

use crate::config::RunConfig;
use crate::errors::CmdError;

/// Loads the dataset and its sidecar, aligns them, and normalizes rows to
/// the unit sphere — the common front half of xray and compress.
pub(crate) fn load_aligned(config: &RunConfig) -> Result<(Dataset, EmbeddingMatrix), CmdError> {
    let dataset = dataset::load_samples(config.dataset_path()?, &config.schema)?;
    let records = dataset::load_embeddings(&config.embeddings_path())?;
    let matrix = dataset::align(&dataset, &records)?;
    let normalized = l2_normalize(&matrix)?;
    Ok((dataset, normalized))
}

/// Writes a value as pretty JSON (trailing newline), atomically.
pub(crate) fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), CmdError> {
    let doc = serde_json::to_string_pretty(value).expect("artifacts serialize");
    dataset::write_atomic(path, std::iter::once(doc))?;
    Ok(())
}

pub(crate) fn ensure_output_dir(config: &RunConfig) -> Result<(), CmdError> {
    std::fs::create_dir_all(&config.paths.output_dir)?;
    Ok(())
}
