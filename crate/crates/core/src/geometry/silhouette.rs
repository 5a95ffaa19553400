//! Mean silhouette coefficient over exact pairwise distances.
//!
//! For each evaluated point: a = mean distance to its own cluster (others
//! only), b = smallest mean distance to any other cluster, s = (b - a) /
//! max(a, b). Singleton clusters score 0 by convention, as does the
//! degenerate all-coincident case (max(a, b) = 0).

use rand::Rng;

use super::{dist, EmbeddingMatrix, GeometryError, Result};
use crate::exec;
use crate::seeding;

/// Evaluation cap applied when no explicit subsample size is given. Mean
/// distances still use every point; only the set of evaluated centers
/// shrinks.
pub const DEFAULT_SUBSAMPLE: usize = 2000;

/// Mean silhouette over evaluated points. `subsample = None` caps
/// evaluation at [`DEFAULT_SUBSAMPLE`] seeded draws; `Some(s)` evaluates
/// `min(s, rows)` points, which for `s >= rows` is exactly the full sweep.
pub fn silhouette_mean(
    matrix: &EmbeddingMatrix,
    assignments: &[usize],
    subsample: Option<usize>,
    seed: u64,
) -> Result<f64> {
    let m = matrix.rows();
    if assignments.len() != m {
        return Err(GeometryError::Mismatch {
            context: "silhouette",
            reason: format!("{} assignments for {m} rows", assignments.len()),
        });
    }
    let k_upper = assignments.iter().max().map_or(0, |&a| a + 1);
    let mut counts = vec![0usize; k_upper];
    for &a in assignments {
        counts[a] += 1;
    }
    if counts.iter().filter(|&&c| c > 0).count() < 2 {
        return Err(GeometryError::SingleCluster);
    }

    let target = subsample.unwrap_or(DEFAULT_SUBSAMPLE).min(m);
    let evaluated: Vec<usize> = if target == m {
        (0..m).collect()
    } else {
        // Partial Fisher-Yates, then ascending order so the mean below is
        // independent of draw order.
        let mut rng = seeding::stream(seed, &[seeding::TAG_SILHOUETTE]);
        let mut idx: Vec<usize> = (0..m).collect();
        for i in 0..target {
            let j = rng.gen_range(i..m);
            idx.swap(i, j);
        }
        let mut picked = idx[..target].to_vec();
        picked.sort_unstable();
        picked
    };

    let scores = exec::map_indexed(evaluated.len(), |e| {
        let i = evaluated[e];
        let own = assignments[i];
        if counts[own] == 1 {
            return 0.0;
        }
        let mut sums = vec![0.0f64; k_upper];
        let row = matrix.row(i);
        for j in 0..m {
            if j != i {
                sums[assignments[j]] += dist(row, matrix.row(j));
            }
        }
        let a = sums[own] / (counts[own] - 1) as f64;
        let mut b = f64::INFINITY;
        for c in 0..k_upper {
            if c != own && counts[c] > 0 {
                b = b.min(sums[c] / counts[c] as f64);
            }
        }
        let denom = a.max(b);
        if denom == 0.0 {
            0.0
        } else {
            (b - a) / denom
        }
    });

    Ok(scores.iter().sum::<f64>() / scores.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::EmbeddingMatrix;

    #[test]
    fn tight_separated_pairs_score_near_one() {
        // a = 0.01 within pairs, b ~ 10 across; s ~ 1 - a/b.
        let m = EmbeddingMatrix::from_rows(vec![
            vec![0.0, 0.0],
            vec![0.01, 0.0],
            vec![10.0, 0.0],
            vec![10.01, 0.0],
        ])
        .unwrap();
        let s = silhouette_mean(&m, &[0, 0, 1, 1], None, 1).unwrap();
        assert!(s > 0.98 && s <= 1.0, "s = {s}");
    }

    #[test]
    fn duplicated_points_split_across_clusters_score_minus_one_over_n() {
        // n positions, each duplicated once per cluster. For any point,
        // a = S / (n - 1) over its own cluster and b = S / n over the other
        // (the extra term is its zero-distance duplicate), where S is the
        // same distance sum. Hence s = (b - a) / a = -1/n for every point.
        let positions = [0.0, 1.0, 2.0, 3.0];
        let n = positions.len() as f64;
        let mut rows = Vec::new();
        let mut labels = Vec::new();
        for &p in &positions {
            rows.push(vec![p, 0.0]);
            labels.push(0);
            rows.push(vec![p, 0.0]);
            labels.push(1);
        }
        let m = EmbeddingMatrix::from_rows(rows).unwrap();
        let s = silhouette_mean(&m, &labels, None, 1).unwrap();
        assert!((s - (-1.0 / n)).abs() < 1e-12, "s = {s}, expected {}", -1.0 / n);
    }

    #[test]
    fn all_coincident_points_score_zero() {
        let m = EmbeddingMatrix::from_rows(vec![vec![1.0, 1.0]; 6]).unwrap();
        let s = silhouette_mean(&m, &[0, 1, 0, 1, 0, 1], None, 1).unwrap();
        assert_eq!(s, 0.0);
    }

    #[test]
    fn singleton_cluster_contributes_zero() {
        let m = EmbeddingMatrix::from_rows(vec![
            vec![0.0, 0.0],
            vec![0.1, 0.0],
            vec![50.0, 0.0],
        ])
        .unwrap();
        // Point 2 is a singleton: s(2) = 0. Points 0 and 1 are a tight pair
        // far from the singleton, so s ~ 1; mean = (s0 + s1 + 0) / 3.
        let s = silhouette_mean(&m, &[0, 0, 1], None, 1).unwrap();
        let expected = (2.0 * (1.0 - 0.1 / 49.95)) / 3.0;
        assert!((s - expected).abs() < 1e-6, "s = {s}, expected ~ {expected}");
    }

    #[test]
    fn explicit_full_subsample_matches_auto_on_small_input() {
        let m = EmbeddingMatrix::from_rows(vec![
            vec![0.0, 0.0],
            vec![0.2, 0.0],
            vec![9.0, 0.0],
            vec![9.4, 0.0],
            vec![0.1, 0.3],
        ])
        .unwrap();
        let labels = [0, 0, 1, 1, 0];
        let auto = silhouette_mean(&m, &labels, None, 9).unwrap();
        let full = silhouette_mean(&m, &labels, Some(usize::MAX), 9).unwrap();
        assert_eq!(auto.to_bits(), full.to_bits());
    }

    #[test]
    fn subsampled_estimate_stays_close_to_full_sweep() {
        // 400 points in two separated blobs; 120-point subsample should
        // land near the exact mean.
        let mut rows = Vec::new();
        let mut labels = Vec::new();
        for i in 0..200 {
            let t = (i as f64) * 0.003;
            rows.push(vec![t.sin() * 0.1, t.cos() * 0.1]);
            labels.push(0);
            rows.push(vec![8.0 + t.cos() * 0.1, 8.0 + t.sin() * 0.1]);
            labels.push(1);
        }
        let m = EmbeddingMatrix::from_rows(rows).unwrap();
        let full = silhouette_mean(&m, &labels, Some(usize::MAX), 3).unwrap();
        let sub = silhouette_mean(&m, &labels, Some(120), 3).unwrap();
        assert!((full - sub).abs() < 0.05, "full {full} vs sub {sub}");
    }

    #[test]
    fn single_cluster_rejected() {
        let m = EmbeddingMatrix::from_rows(vec![vec![0.0, 0.0], vec![1.0, 0.0]]).unwrap();
        assert!(matches!(
            silhouette_mean(&m, &[0, 0], None, 1),
            Err(GeometryError::SingleCluster)
        ));
    }
}
