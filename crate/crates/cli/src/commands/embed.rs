//! `dsxray embed`: fetch embeddings for the dataset and write the sidecar.

use dsxray_core::dataset;

use crate::config::RunConfig;
use crate::errors::CmdError;

use super::ensure_output_dir;

pub fn run(config: &RunConfig) -> Result<(), CmdError> {
    let dataset = dataset::load_samples(config.dataset_path()?, &config.schema)?;
    let records = dsxray_client::embed_batch(&config.embed, dataset.samples())?;
    let dims = records[0].embedding.len();

    ensure_output_dir(config)?;
    let sidecar = config.embeddings_path();
    if let Some(parent) = sidecar.parent() {
        if !parent.as_os_str().is_empty() {
            std::fs::create_dir_all(parent)?;
        }
    }
    let receipt = dataset::write_atomic(
        &sidecar,
        records.iter().map(|r| serde_json::to_string(r).expect("record serializes")),
    )?;

    println!("{}", serde_json::json!({ "count": receipt.count, "d": dims }));
    Ok(())
}
