//! Run configuration: one JSON document describing every stage, with CLI
//! flags layered on top. Captured in full by the output artifacts' seeds
//! and hashes, so a config file plus a dataset reproduces a run exactly.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use dsxray_client::EmbedConfig;
use dsxray_core::dataset::SchemaMapping;
use dsxray_core::sampler::IntervalMode;
use dsxray_core::xray::XRayThresholds;

use crate::errors::{validation, CmdError};

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub paths: Paths,
    pub schema: SchemaMapping,
    pub embed: EmbedConfig,
    pub kmeans: KMeansConfig,
    pub xray: XRayConfig,
    pub sampler: SamplerConfig,
    pub fidelity: FidelityConfig,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Paths {
    /// Source dataset (JSONL). Required by embed/xray/compress.
    pub dataset: PathBuf,
    /// Embedding sidecar. Written by `embed`, read by `xray`/`compress`.
    /// Empty means `<output_dir>/embeddings.jsonl`.
    pub embeddings: PathBuf,
    /// All artifacts land here.
    pub output_dir: PathBuf,
}

impl Default for Paths {
    fn default() -> Self {
        Paths {
            dataset: PathBuf::new(),
            embeddings: PathBuf::new(),
            output_dir: PathBuf::from("out"),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct KMeansConfig {
    pub k: usize,
    /// Seeds the whole run: clustering, silhouette subsampling, and
    /// compression draws.
    pub seed: u64,
    pub max_iter: usize,
    pub tol: f64,
}

impl Default for KMeansConfig {
    fn default() -> Self {
        KMeansConfig { k: 100, seed: 42, max_iter: 300, tol: 1e-4 }
    }
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct XRayConfig {
    pub thresholds: XRayThresholds,
    /// Cap on silhouette evaluation points; null means the library default.
    pub silhouette_subsample: Option<usize>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SamplerConfig {
    pub n_intervals: usize,
    /// Fixed retention rate; overrides the x-ray recommendation.
    pub retention_override: Option<f64>,
    pub mode: IntervalMode,
    /// When set, `compress` also writes generation seeds by substituting
    /// each kept question into this template at `{question}`.
    pub gen_template: Option<String>,
}

impl Default for SamplerConfig {
    fn default() -> Self {
        SamplerConfig {
            n_intervals: 5,
            retention_override: None,
            mode: IntervalMode::EqualWidth,
            gen_template: None,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FidelityConfig {
    /// Relative accuracy drop (compressed -> generated) that flags
    /// contamination.
    pub drop_threshold: f64,
}

impl Default for FidelityConfig {
    fn default() -> Self {
        FidelityConfig { drop_threshold: 0.10 }
    }
}

impl RunConfig {
    pub fn load(path: Option<&Path>) -> Result<RunConfig, CmdError> {
        let Some(path) = path else { return Ok(RunConfig::default()) };
        let bytes = std::fs::read(path).map_err(|e| {
            if e.kind() == std::io::ErrorKind::NotFound {
                validation(format!("config file {} not found", path.display()))
            } else {
                CmdError::Runtime(format!("reading {}: {e}", path.display()))
            }
        })?;
        serde_json::from_slice(&bytes)
            .map_err(|e| validation(format!("config file {}: {e}", path.display())))
    }

    pub fn apply_overrides(&mut self, seed: Option<u64>, output_dir: Option<PathBuf>) {
        if let Some(s) = seed {
            self.kmeans.seed = s;
        }
        if let Some(dir) = output_dir {
            self.paths.output_dir = dir;
        }
    }

    pub fn dataset_path(&self) -> Result<&Path, CmdError> {
        if self.paths.dataset.as_os_str().is_empty() {
            return Err(validation("paths.dataset is required for this command"));
        }
        Ok(&self.paths.dataset)
    }

    pub fn embeddings_path(&self) -> PathBuf {
        if self.paths.embeddings.as_os_str().is_empty() {
            self.paths.output_dir.join("embeddings.jsonl")
        } else {
            self.paths.embeddings.clone()
        }
    }

    pub fn xray_report_path(&self) -> PathBuf {
        self.paths.output_dir.join("xray_report.json")
    }

    pub fn cluster_model_path(&self) -> PathBuf {
        self.paths.output_dir.join("cluster_model.json")
    }

    pub fn projection_path(&self) -> PathBuf {
        self.paths.output_dir.join("projection.csv")
    }

    pub fn compressed_path(&self) -> PathBuf {
        self.paths.output_dir.join("compressed.jsonl")
    }

    pub fn plan_path(&self) -> PathBuf {
        self.paths.output_dir.join("plan.json")
    }

    pub fn gen_seeds_path(&self) -> PathBuf {
        self.paths.output_dir.join("gen_seeds.jsonl")
    }

    pub fn fidelity_report_path(&self) -> PathBuf {
        self.paths.output_dir.join("fidelity_report.json")
    }
}
