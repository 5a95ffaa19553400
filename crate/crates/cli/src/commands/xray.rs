//! `dsxray xray`: cluster the embedded dataset, profile its redundancy,
//! and emit the report, the fitted cluster model, and a 2-D projection.

use dsxray_core::dataset;
use dsxray_core::geometry::kmeans;
use dsxray_core::xray::{project_2d, run_xray};

use crate::config::RunConfig;
use crate::errors::CmdError;

use super::{ensure_output_dir, load_aligned, write_json};

pub fn run(config: &RunConfig) -> Result<(), CmdError> {
    let (dataset, matrix) = load_aligned(config)?;
    let km = &config.kmeans;
    let model = kmeans(&matrix, km.k, km.seed, km.max_iter, km.tol)?;
    let report = run_xray(
        &matrix,
        &model,
        &config.xray.thresholds,
        config.xray.silhouette_subsample,
        km.seed,
    )?;
    let projection = project_2d(&matrix)?;

    ensure_output_dir(config)?;
    write_json(&config.cluster_model_path(), &model)?;
    write_json(&config.xray_report_path(), &report)?;

    let header = std::iter::once("id,x,y".to_string());
    let rows = dataset
        .samples()
        .iter()
        .zip(&projection.coords)
        .map(|(s, c)| format!("{},{},{}", s.id, c[0], c[1]));
    dataset::write_atomic(&config.projection_path(), header.chain(rows))?;

    if projection.degenerate {
        eprintln!("warning: embedding variance has rank < 2; projection y-column is zero");
    }
    println!(
        "samples={} clusters={} silhouette_mean={:.4} core_fraction={:.4} sparse_fraction={:.4}",
        dataset.len(),
        model.k,
        report.silhouette_mean,
        report.core_fraction,
        report.sparse_fraction,
    );
    println!(
        "verdict={:?} recommended_retention={}",
        report.verdict, report.recommended_retention
    );
    Ok(())
}
