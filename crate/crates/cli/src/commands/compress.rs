//! `dsxray compress`: draw the stratified subset at the recommended (or
//! overridden) retention rate and export it with its audit plan.

use sha2::{Digest, Sha256};

use dsxray_core::dataset::export_gen_seeds;
use dsxray_core::dataset::export_subset;
use dsxray_core::geometry::{kmeans, ClusterModel};
use dsxray_core::sampler::{compress_with, SamplerOptions};
use dsxray_core::xray::XRayReport;

use crate::config::RunConfig;
use crate::errors::{validation, CmdError};

use super::{ensure_output_dir, load_aligned, write_json};

pub fn run(config: &RunConfig, retention_flag: Option<f64>) -> Result<(), CmdError> {
    let (dataset, matrix) = load_aligned(config)?;

    // Reuse the model fitted by `xray` when present, so the subset is drawn
    // from exactly the clustering the report described.
    let model_path = config.cluster_model_path();
    let model: ClusterModel = if model_path.exists() {
        let bytes = std::fs::read(&model_path)?;
        let model: ClusterModel = serde_json::from_slice(&bytes).map_err(|e| {
            validation(format!("unreadable cluster model {}: {e}", model_path.display()))
        })?;
        model.check_against(&matrix)?;
        model
    } else {
        let km = &config.kmeans;
        kmeans(&matrix, km.k, km.seed, km.max_iter, km.tol)?
    };

    let (retention, provenance) = pick_retention(config, retention_flag)?;
    let opts = SamplerOptions {
        retention,
        seed: config.kmeans.seed,
        n_intervals: config.sampler.n_intervals,
        mode: config.sampler.mode,
        provenance,
    };
    let (plan, set) = compress_with(&dataset, &matrix, &model, &opts)?;

    ensure_output_dir(config)?;
    write_json(&config.plan_path(), &plan)?;
    let receipt = export_subset(&dataset, &set, &config.compressed_path())?;
    if let Some(template) = &config.sampler.gen_template {
        export_gen_seeds(&set, &dataset, template, &config.gen_seeds_path())?;
    }

    println!(
        "{}",
        serde_json::json!({
            "selected": receipt.count,
            "achieved_retention": plan.achieved_retention,
            "sha256": receipt.sha256,
        })
    );
    Ok(())
}

/// Retention comes from, in priority order: the --retention flag, the
/// config override, or the x-ray report already in the output directory.
/// The provenance string records which one, hashing the report it trusted.
fn pick_retention(
    config: &RunConfig,
    retention_flag: Option<f64>,
) -> Result<(f64, String), CmdError> {
    if let Some(r) = retention_flag {
        return Ok((r, "cli:--retention".to_string()));
    }
    if let Some(r) = config.sampler.retention_override {
        return Ok((r, "config:retention_override".to_string()));
    }
    let report_path = config.xray_report_path();
    if report_path.exists() {
        let bytes = std::fs::read(&report_path)?;
        let report: XRayReport = serde_json::from_slice(&bytes).map_err(|e| {
            validation(format!("unreadable x-ray report {}: {e}", report_path.display()))
        })?;
        let digest = Sha256::digest(&bytes);
        let short: String = digest.iter().take(8).map(|b| format!("{b:02x}")).collect();
        return Ok((report.recommended_retention, format!("xray_report:sha256:{short}")));
    }
    Err(validation(
        "no retention rate available: run `dsxray xray` first, set sampler.retention_override, \
         or pass --retention",
    ))
}
