//! Synthetic corpora with planted cluster structure, plus JSONL writers
//! matching the dataset/sidecar formats the toolkit consumes.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Points drawn around well-separated planted centers. `labels[i]` is the
/// index of the center that generated `points[i]`.
pub struct Blobs {
    pub points: Vec<Vec<f64>>,
    pub labels: Vec<usize>,
    pub centers: Vec<Vec<f64>>,
}

/// Generates `sizes.len()` blobs in `dims` dimensions. Centers are sampled
/// uniformly from [-center_scale, center_scale]^dims; points add uniform
/// noise of half-width `spread` per coordinate. Points are interleaved
/// round-robin across blobs so cluster id never correlates with row order.
pub fn blobs(seed: u64, sizes: &[usize], dims: usize, center_scale: f64, spread: f64) -> Blobs {
    assert!(!sizes.is_empty() && dims >= 1);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let centers: Vec<Vec<f64>> = (0..sizes.len())
        .map(|_| (0..dims).map(|_| rng.gen_range(-center_scale..=center_scale)).collect())
        .collect();

    let total: usize = sizes.iter().sum();
    let mut points = Vec::with_capacity(total);
    let mut labels = Vec::with_capacity(total);
    let mut remaining: Vec<usize> = sizes.to_vec();
    while points.len() < total {
        for (c, left) in remaining.iter_mut().enumerate() {
            if *left == 0 {
                continue;
            }
            *left -= 1;
            let p: Vec<f64> = centers[c]
                .iter()
                .map(|&x| x + rng.gen_range(-spread..=spread))
                .collect();
            points.push(p);
            labels.push(c);
        }
    }
    Blobs { points, labels, centers }
}

/// Same-size convenience wrapper around [`blobs`].
pub fn uniform_blobs(seed: u64, clusters: usize, per_cluster: usize, dims: usize) -> Blobs {
    blobs(seed, &vec![per_cluster; clusters], dims, 10.0, 0.5)
}

/// Sequential sample ids: "q000000", "q000001", ...
pub fn ids(count: usize) -> Vec<String> {
    (0..count).map(|i| format!("q{i:06}")).collect()
}

/// Writes a dataset JSONL file with `id`, `question`, and `answer` fields.
/// `questions[i]` and `answers[i]` pair with `ids[i]`.
pub fn write_dataset(
    path: &Path,
    ids: &[String],
    questions: &[String],
    answers: &[String],
) -> std::io::Result<()> {
    assert_eq!(ids.len(), questions.len());
    assert_eq!(ids.len(), answers.len());
    let mut w = BufWriter::new(File::create(path)?);
    for i in 0..ids.len() {
        let line = serde_json::json!({
            "id": ids[i],
            "question": questions[i],
            "answer": answers[i],
        });
        writeln!(w, "{line}")?;
    }
    w.flush()
}

/// Writes an embedding sidecar JSONL file: {"id": ..., "embedding": [...]}.
pub fn write_sidecar(path: &Path, ids: &[String], vectors: &[Vec<f64>]) -> std::io::Result<()> {
    assert_eq!(ids.len(), vectors.len());
    let mut w = BufWriter::new(File::create(path)?);
    for i in 0..ids.len() {
        let line = serde_json::json!({ "id": ids[i], "embedding": vectors[i] });
        writeln!(w, "{line}")?;
    }
    w.flush()
}
