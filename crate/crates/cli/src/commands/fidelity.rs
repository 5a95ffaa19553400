//! `dsxray fidelity`: compare model accuracies on full vs compressed (and
//! optionally regenerated) evals; report deltas, rank agreement, and
//! contamination flags.

use std::collections::HashSet;
use std::path::{Path, PathBuf};

use serde::Serialize;

use dsxray_core::dataset::{load_samples, SchemaMapping};
use dsxray_core::fidelity::{
    accuracy, contamination_check, fidelity_report, load_eval_records, EvalRecord, EvalSource,
    FidelityReport,
};

use crate::config::RunConfig;
use crate::errors::{validation, CmdError};

use super::{ensure_output_dir, write_json};

#[derive(Debug, Serialize)]
struct ComparisonEntry {
    comp_path: String,
    #[serde(flatten)]
    report: FidelityReport,
}

#[derive(Debug, Serialize)]
struct ContaminationEntry {
    model: String,
    acc_comp: f64,
    acc_gen: f64,
    relative_drop: f64,
    flagged: bool,
}

#[derive(Debug, Serialize)]
struct FidelityArtifact {
    reports: Vec<ComparisonEntry>,
    contamination: Vec<ContaminationEntry>,
}

pub fn run(
    config: &RunConfig,
    full_path: &Path,
    comp_paths: &[PathBuf],
    gen_path: Option<&Path>,
) -> Result<(), CmdError> {
    let full = load_eval_records(full_path, EvalSource::Full)?;
    let subset = load_subset_ids(config)?;

    let mut reports = Vec::with_capacity(comp_paths.len());
    let mut first_comp: Option<Vec<EvalRecord>> = None;
    for path in comp_paths {
        let comp = load_eval_records(path, EvalSource::Compressed)?;
        check_against_subset(&comp, subset.as_ref(), path)?;
        let report = fidelity_report(&full, &comp)?;
        reports.push(ComparisonEntry { comp_path: path.display().to_string(), report });
        if first_comp.is_none() {
            first_comp = Some(comp);
        }
    }

    let mut contamination = Vec::new();
    if let Some(gen_path) = gen_path {
        let gen = load_eval_records(gen_path, EvalSource::Generalization)?;
        check_against_subset(&gen, subset.as_ref(), gen_path)?;
        let comp = first_comp.as_ref().expect("at least one comp eval");
        let mut gen_sorted: Vec<&EvalRecord> = gen.iter().collect();
        gen_sorted.sort_by(|a, b| a.model.cmp(&b.model));
        for gen_record in gen_sorted {
            let Some(comp_record) = comp.iter().find(|r| r.model == gen_record.model) else {
                return Err(validation(format!(
                    "generalization eval covers model '{}' absent from {}",
                    gen_record.model,
                    comp_paths[0].display()
                )));
            };
            let acc_comp = accuracy(comp_record, None)?;
            let acc_gen = accuracy(gen_record, None)?;
            let signal = contamination_check(acc_comp, acc_gen, config.fidelity.drop_threshold)?;
            contamination.push(ContaminationEntry {
                model: gen_record.model.clone(),
                acc_comp,
                acc_gen,
                relative_drop: signal.relative_drop,
                flagged: signal.flagged,
            });
        }
    }

    for entry in &reports {
        for row in &entry.report.per_model {
            println!(
                "comp={} model={} acc_full={:.4} acc_comp={:.4} delta={:+.4}%",
                entry.comp_path,
                row.model,
                row.acc_full,
                row.acc_comp,
                row.delta * 100.0
            );
        }
        match (entry.report.spearman_rho, &entry.report.note) {
            (Some(rho), _) => println!("comp={} spearman={:.4}", entry.comp_path, rho),
            (None, Some(note)) => println!("comp={} note: {note}", entry.comp_path),
            (None, None) => {}
        }
    }
    for c in &contamination {
        println!(
            "contamination model={} acc_comp={:.4} acc_gen={:.4} drop={:+.2}% flagged={}",
            c.model,
            c.acc_comp,
            c.acc_gen,
            c.relative_drop * 100.0,
            c.flagged
        );
    }

    ensure_output_dir(config)?;
    write_json(&config.fidelity_report_path(), &FidelityArtifact { reports, contamination })?;
    Ok(())
}

/// Ids of the compressed subset previously exported into the output dir,
/// when present; evals are then checked against it.
fn load_subset_ids(config: &RunConfig) -> Result<Option<HashSet<String>>, CmdError> {
    let path = config.compressed_path();
    if !path.exists() {
        return Ok(None);
    }
    // The exporter writes canonical field names regardless of input schema.
    let subset = load_samples(&path, &SchemaMapping::default())?;
    Ok(Some(subset.samples().iter().map(|s| s.id.clone()).collect()))
}

fn check_against_subset(
    records: &[EvalRecord],
    subset: Option<&HashSet<String>>,
    path: &Path,
) -> Result<(), CmdError> {
    let Some(subset) = subset else { return Ok(()) };
    for record in records {
        if let Some(unknown) = record.correctness.keys().find(|id| !subset.contains(*id)) {
            return Err(validation(format!(
                "{}: model '{}' has a record for id '{unknown}' which is not in the compressed \
                 subset",
                path.display(),
                record.model
            )));
        }
    }
    Ok(())
}
