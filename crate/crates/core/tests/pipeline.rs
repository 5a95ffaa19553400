//! Full library pipeline on synthetic corpora: normalize, cluster, profile,
//! compress, export. Checks the determinism and coverage guarantees the
//! CLI relies on.

use std::collections::HashSet;

use dsxray_core::dataset::{export_subset, load_samples, Dataset, Sample};
use dsxray_core::geometry::{kmeans, l2_normalize, ClusterModel, EmbeddingMatrix};
use dsxray_core::sampler::{compress, compress_with, IntervalMode, SamplerOptions};
use dsxray_core::xray::{run_xray, Verdict, XRayThresholds};
use dsxray_core::SchemaMapping;
use dsxray_testutil::corpus;

fn dataset_of(n: usize) -> Dataset {
    let samples = corpus::ids(n)
        .into_iter()
        .map(|id| Sample {
            question: format!("question for {id}?"),
            id,
            answer: None,
            meta: Default::default(),
        })
        .collect();
    Dataset::new(samples).unwrap()
}

#[test]
fn profile_of_planted_blobs_recommends_aggressive_retention() {
    let blobs = corpus::uniform_blobs(41, 8, 60, 6);
    let matrix = l2_normalize(&EmbeddingMatrix::from_rows(blobs.points).unwrap()).unwrap();
    let model = kmeans(&matrix, 8, 7, 300, 1e-4).unwrap();
    let report = run_xray(&matrix, &model, &XRayThresholds::default(), None, 7).unwrap();

    assert!(report.silhouette_mean > 0.6, "silhouette {}", report.silhouette_mean);
    assert_eq!(report.verdict, Verdict::HighRedundancy);
    assert_eq!(report.recommended_retention, 0.10);
    assert_eq!(report.per_cluster.len(), 8);
    let total: usize = report.per_cluster.iter().map(|c| c.size).sum();
    assert_eq!(total, 480);
    for c in &report.per_cluster {
        assert!(c.size > 0);
        assert!(c.mean_distance <= c.max_distance);
        assert_eq!(c.histogram.iter().sum::<usize>(), c.size);
    }
    // Blob noise is tiny next to the centroid directions, so nearly all mass
    // is core and nothing reaches the antipode.
    assert!(report.core_fraction > 0.95);
    assert_eq!(report.sparse_fraction, 0.0);
}

#[test]
fn compression_covers_every_bin_within_retention_bounds() {
    let blobs = corpus::uniform_blobs(42, 8, 60, 6);
    let dataset = dataset_of(480);
    let matrix = l2_normalize(&EmbeddingMatrix::from_rows(blobs.points).unwrap()).unwrap();
    let model = kmeans(&matrix, 8, 7, 300, 1e-4).unwrap();

    let (plan, set) = compress(&dataset, &matrix, &model, 0.2, 11).unwrap();

    // Bounds: at least the target, at most target + one extra per bin.
    let m = dataset.len() as f64;
    assert!(plan.achieved_retention >= 0.2 - 1e-12);
    assert!(plan.achieved_retention <= 0.2 + (8.0 * 5.0) / m);
    assert_eq!(set.retention_rate, plan.achieved_retention);
    assert_eq!(set.source_dataset_id, dataset.fingerprint());

    // Every selected id exists, exactly once.
    let unique: HashSet<&String> = plan.selected_ids.iter().collect();
    assert_eq!(unique.len(), plan.selected_ids.len());
    for id in &plan.selected_ids {
        assert!(dataset.row_of(id).is_some());
    }

    // Min-one per non-empty interval, and sizes account for every member.
    for sel in &plan.per_cluster {
        assert_eq!(sel.bin_sizes.len(), 5);
        for (size, selected) in sel.bin_sizes.iter().zip(&sel.selected_per_bin) {
            if *size > 0 {
                assert!(!selected.is_empty(), "non-empty interval lost all members");
                assert!(selected.len() <= *size);
            } else {
                assert!(selected.is_empty());
            }
        }
    }
    let per_cluster_total: usize = plan
        .per_cluster
        .iter()
        .map(|s| s.selected_per_bin.iter().map(Vec::len).sum::<usize>())
        .sum();
    assert_eq!(per_cluster_total, plan.selected_ids.len());
}

#[test]
fn identical_seeds_identical_plans_different_seeds_differ() {
    let blobs = corpus::uniform_blobs(43, 6, 50, 5);
    let dataset = dataset_of(300);
    let matrix = l2_normalize(&EmbeddingMatrix::from_rows(blobs.points).unwrap()).unwrap();
    let model = kmeans(&matrix, 6, 3, 300, 1e-4).unwrap();

    let (plan_a, set_a) = compress(&dataset, &matrix, &model, 0.15, 5).unwrap();
    let (plan_b, set_b) = compress(&dataset, &matrix, &model, 0.15, 5).unwrap();
    assert_eq!(
        serde_json::to_string(&plan_a).unwrap(),
        serde_json::to_string(&plan_b).unwrap()
    );
    assert_eq!(set_a, set_b);

    let (plan_c, _) = compress(&dataset, &matrix, &model, 0.15, 6).unwrap();
    assert_ne!(plan_a.selected_ids, plan_c.selected_ids);
}

#[test]
fn full_retention_returns_dataset_order() {
    let blobs = corpus::uniform_blobs(44, 4, 25, 4);
    let dataset = dataset_of(100);
    let matrix = l2_normalize(&EmbeddingMatrix::from_rows(blobs.points).unwrap()).unwrap();
    let model = kmeans(&matrix, 4, 9, 300, 1e-4).unwrap();

    let (plan, set) = compress(&dataset, &matrix, &model, 1.0, 1).unwrap();
    assert_eq!(plan.achieved_retention, 1.0);
    assert_eq!(plan.selected_ids.len(), 100);

    // Exported at full retention, the file reproduces the dataset exactly.
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("compressed.jsonl");
    export_subset(&dataset, &set, &out).unwrap();
    let reloaded = load_samples(&out, &SchemaMapping::default()).unwrap();
    assert_eq!(reloaded.samples(), dataset.samples());
    assert_eq!(reloaded.fingerprint(), dataset.fingerprint());
}

#[test]
fn quantile_mode_balances_interval_sizes() {
    let blobs = corpus::uniform_blobs(45, 3, 200, 4);
    let dataset = dataset_of(600);
    let matrix = l2_normalize(&EmbeddingMatrix::from_rows(blobs.points).unwrap()).unwrap();
    let model = kmeans(&matrix, 3, 2, 300, 1e-4).unwrap();

    let opts = SamplerOptions {
        mode: IntervalMode::Quantile,
        ..SamplerOptions::new(0.1, 3)
    };
    let (plan, _) = compress_with(&dataset, &matrix, &model, &opts).unwrap();
    for sel in &plan.per_cluster {
        let size: usize = sel.bin_sizes.iter().sum();
        let max = *sel.bin_sizes.iter().max().unwrap();
        // Quantile edges keep any one interval from dominating the cluster.
        assert!(max * 2 <= size, "interval holds {max} of {size}");
    }
}

#[test]
fn hand_built_model_with_empty_cluster_is_tolerated() {
    // External models may reserve cluster ids that received no members.
    let rows = vec![
        vec![0.0, 0.1],
        vec![0.0, -0.1],
        vec![5.0, 0.0],
        vec![5.0, 0.2],
    ];
    let matrix = EmbeddingMatrix::from_rows(rows).unwrap();
    let dataset = dataset_of(4);
    let model = ClusterModel {
        k: 3,
        centroids: vec![vec![0.0, 0.0], vec![5.0, 0.1], vec![99.0, 99.0]],
        assignments: vec![0, 0, 1, 1],
        inertia: 0.0,
        iterations_run: 1,
        seed: 0,
        inertia_trace: vec![0.0],
    };

    let report = run_xray(&matrix, &model, &XRayThresholds::default(), None, 1).unwrap();
    assert_eq!(report.per_cluster.len(), 3);
    assert_eq!(report.per_cluster[2].size, 0);
    assert_eq!(report.per_cluster[2].mean_distance, 0.0);
    // The report must stay serializable (no NaN from the empty cluster).
    serde_json::to_string(&report).unwrap();

    let (plan, _) = compress(&dataset, &matrix, &model, 0.5, 1).unwrap();
    // The empty cluster contributes no selection entry.
    assert_eq!(plan.per_cluster.len(), 2);
    let clusters: Vec<usize> = plan.per_cluster.iter().map(|s| s.cluster_id).collect();
    assert_eq!(clusters, [0, 1]);
}

#[test]
fn six_figure_corpus_compresses_within_bounds() {
    // Scale check at realistic size: 109,043 rows, planted assignments so
    // the test exercises distances, stratification, and sampling, not Lloyd
    // iterations.
    let m = 109_043;
    let k = 100;
    let dims = 8;
    let blobs = corpus::blobs(46, &vec![m / k + 1; k], dims, 10.0, 0.5);
    let points: Vec<Vec<f64>> = blobs.points.into_iter().take(m).collect();
    let labels: Vec<usize> = blobs.labels.into_iter().take(m).collect();
    let dataset = dataset_of(m);
    let matrix = l2_normalize(&EmbeddingMatrix::from_rows(points).unwrap()).unwrap();

    // Centroids at the normalized planted centers are close enough for a
    // valid (if unfitted) model; distances just need to be well-defined.
    let centroids: Vec<Vec<f64>> = blobs
        .centers
        .iter()
        .map(|c| {
            let norm = c.iter().map(|x| x * x).sum::<f64>().sqrt();
            c.iter().map(|x| x / norm).collect()
        })
        .collect();
    let model = ClusterModel {
        k,
        centroids,
        assignments: labels,
        inertia: 0.0,
        iterations_run: 1,
        seed: 0,
        inertia_trace: vec![0.0],
    };

    let (plan, set) = compress(&dataset, &matrix, &model, 0.1, 17).unwrap();
    assert!(plan.achieved_retention >= 0.1 - 1e-12);
    assert!(plan.achieved_retention <= 0.1 + (k * 5) as f64 / m as f64);
    assert_eq!(set.selected_ids.len(), plan.selected_ids.len());

    // Selected ids are in (cluster, interval, dataset-row) order: flatten
    // the per-cluster structure and compare.
    let flattened: Vec<&String> = plan
        .per_cluster
        .iter()
        .flat_map(|s| s.selected_per_bin.iter().flatten())
        .collect();
    assert!(flattened.into_iter().eq(plan.selected_ids.iter()));
}
