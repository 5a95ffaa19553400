//! Lloyd's k-means with D²-weighted ("k-means++") seeding, best of several
//! independent starts.
//!
//! Determinism contract: identical (matrix, k, seed, max_iter, tol) produce
//! an identical model, independent of the `parallel` feature. Ties in
//! assignment go to the lowest cluster index; ties in restart inertia go to
//! the earliest restart; empty clusters are repaired in-loop by donating
//! the point farthest from its current centroid.

use serde::{Deserialize, Serialize};

use super::{dist, sq_dist, EmbeddingMatrix, GeometryError, Result};
use crate::exec;
use crate::seeding;

use rand::Rng;

/// A fitted clustering. `assignments` pairs with the matrix rows the model
/// was fitted on; `inertia` is the sum of squared distances to assigned
/// centroids, and `inertia_trace` records it per iteration (non-increasing).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterModel {
    pub k: usize,
    pub centroids: Vec<Vec<f64>>,
    pub assignments: Vec<usize>,
    pub inertia: f64,
    pub iterations_run: usize,
    pub seed: u64,
    pub inertia_trace: Vec<f64>,
}

impl ClusterModel {
    /// Shape compatibility with a matrix the model claims to describe.
    pub fn check_against(&self, matrix: &EmbeddingMatrix) -> Result<()> {
        if self.centroids.len() != self.k || self.k == 0 {
            return Err(GeometryError::Mismatch {
                context: "cluster model",
                reason: format!("{} centroids for k={}", self.centroids.len(), self.k),
            });
        }
        if self.assignments.len() != matrix.rows() {
            return Err(GeometryError::Mismatch {
                context: "cluster model",
                reason: format!(
                    "{} assignments for {} rows",
                    self.assignments.len(),
                    matrix.rows()
                ),
            });
        }
        if self.centroids.iter().any(|c| c.len() != matrix.dims()) {
            return Err(GeometryError::Mismatch {
                context: "cluster model",
                reason: "centroid dimension differs from matrix".into(),
            });
        }
        if self.assignments.iter().any(|&a| a >= self.k) {
            return Err(GeometryError::Mismatch {
                context: "cluster model",
                reason: "assignment references a cluster out of range".into(),
            });
        }
        Ok(())
    }
}

/// Independent D²-seeded starts per fit. Lloyd only finds local optima;
/// keeping the best of several seeded starts is what holds small-instance
/// fits near the global optimum.
const RESTARTS: u64 = 8;

/// Clusters the rows of `matrix` into `k` groups: several independent
/// D²-seeded Lloyd runs, lowest final inertia wins. Each run stops when the
/// largest centroid displacement falls below `tol` or after `max_iter`
/// iterations.
pub fn kmeans(
    matrix: &EmbeddingMatrix,
    k: usize,
    seed: u64,
    max_iter: usize,
    tol: f64,
) -> Result<ClusterModel> {
    let m = matrix.rows();
    if k == 0 || k > m {
        return Err(GeometryError::InvalidClusterCount { k, rows: m });
    }

    let mut best: Option<ClusterModel> = None;
    for restart in 0..RESTARTS {
        let model = fit_once(matrix, k, seed, restart, max_iter, tol);
        if best.as_ref().is_none_or(|b| model.inertia < b.inertia) {
            best = Some(model);
        }
    }
    Ok(best.expect("at least one restart"))
}

fn fit_once(
    matrix: &EmbeddingMatrix,
    k: usize,
    seed: u64,
    restart: u64,
    max_iter: usize,
    tol: f64,
) -> ClusterModel {
    let m = matrix.rows();
    let mut centroids = seed_centroids(matrix, k, seed, restart);
    let mut assignments = vec![0usize; m];
    let mut trace = Vec::new();
    let mut iterations = 0;

    for iter in 1..=max_iter.max(1) {
        iterations = iter;
        assignments = assign(matrix, &centroids);
        repair_empty_clusters(matrix, &mut centroids, &mut assignments);
        let new_centroids = cluster_means(matrix, &assignments, k);
        let shift = (0..k)
            .map(|c| dist(&centroids[c], &new_centroids[c]))
            .fold(0.0f64, f64::max);
        centroids = new_centroids;
        trace.push(inertia_of(matrix, &assignments, &centroids));
        if shift < tol {
            break;
        }
    }

    let inertia = *trace.last().expect("at least one iteration");
    ClusterModel {
        k,
        centroids,
        assignments,
        inertia,
        iterations_run: iterations,
        seed,
        inertia_trace: trace,
    }
}

/// D²-weighted seeding: first centroid uniform, each next one picked with
/// probability proportional to squared distance from the nearest centroid
/// chosen so far.
fn seed_centroids(matrix: &EmbeddingMatrix, k: usize, seed: u64, restart: u64) -> Vec<Vec<f64>> {
    let m = matrix.rows();
    let mut rng = seeding::stream(seed, &[seeding::TAG_KMEANS, restart]);
    let first = rng.gen_range(0..m);
    let mut chosen = vec![first];
    let mut d2 = exec::map_indexed(m, |i| sq_dist(matrix.row(i), matrix.row(first)));

    while chosen.len() < k {
        // Total and cumulative sum associate identically (same sequential
        // order), so the draw below always lands on an index.
        let total: f64 = d2.iter().sum();
        let next = if total > 0.0 {
            let t = rng.gen::<f64>() * total;
            let mut cum = 0.0;
            let mut pick = m - 1;
            for (i, &w) in d2.iter().enumerate() {
                cum += w;
                if cum > t {
                    pick = i;
                    break;
                }
            }
            pick
        } else {
            // All remaining mass is zero (duplicate-heavy data): any row.
            rng.gen_range(0..m)
        };
        chosen.push(next);
        let row = matrix.row(next).to_vec();
        let new_d2 = exec::map_indexed(m, |i| d2[i].min(sq_dist(matrix.row(i), &row)));
        d2 = new_d2;
    }

    chosen.iter().map(|&i| matrix.row(i).to_vec()).collect()
}

fn assign(matrix: &EmbeddingMatrix, centroids: &[Vec<f64>]) -> Vec<usize> {
    exec::map_indexed(matrix.rows(), |i| {
        let row = matrix.row(i);
        let mut best = 0usize;
        let mut best_d = f64::INFINITY;
        for (c, centroid) in centroids.iter().enumerate() {
            let d = sq_dist(row, centroid);
            // Strict comparison: ties stay with the lowest cluster index.
            if d < best_d {
                best_d = d;
                best = c;
            }
        }
        best
    })
}

/// Reassigns the globally farthest point (from its current centroid, drawn
/// from a cluster that can spare one) to each empty cluster, lowest empty
/// index first, and plants that cluster's centroid on the point.
fn repair_empty_clusters(
    matrix: &EmbeddingMatrix,
    centroids: &mut [Vec<f64>],
    assignments: &mut [usize],
) {
    let k = centroids.len();
    let mut counts = vec![0usize; k];
    for &a in assignments.iter() {
        counts[a] += 1;
    }
    if counts.iter().all(|&c| c > 0) {
        return;
    }

    let d2 = exec::map_indexed(matrix.rows(), |i| {
        sq_dist(matrix.row(i), &centroids[assignments[i]])
    });
    for empty in 0..k {
        if counts[empty] > 0 {
            continue;
        }
        let mut donor = None;
        let mut best = -1.0f64;
        for (i, &w) in d2.iter().enumerate() {
            if counts[assignments[i]] > 1 && w > best {
                best = w;
                donor = Some(i);
            }
        }
        let p = donor.expect("k <= rows guarantees a multi-member cluster");
        counts[assignments[p]] -= 1;
        counts[empty] = 1;
        assignments[p] = empty;
        centroids[empty] = matrix.row(p).to_vec();
    }
}

fn cluster_means(matrix: &EmbeddingMatrix, assignments: &[usize], k: usize) -> Vec<Vec<f64>> {
    let mut members: Vec<Vec<usize>> = vec![Vec::new(); k];
    for (i, &a) in assignments.iter().enumerate() {
        members[a].push(i);
    }
    exec::map_indexed(k, |c| {
        let rows = &members[c];
        let mut sum = vec![0.0f64; matrix.dims()];
        for &i in rows {
            for (s, x) in sum.iter_mut().zip(matrix.row(i)) {
                *s += x;
            }
        }
        let n = rows.len() as f64;
        for s in sum.iter_mut() {
            *s /= n;
        }
        sum
    })
}

fn inertia_of(matrix: &EmbeddingMatrix, assignments: &[usize], centroids: &[Vec<f64>]) -> f64 {
    exec::sum_indexed(matrix.rows(), |i| sq_dist(matrix.row(i), &centroids[assignments[i]]))
}
