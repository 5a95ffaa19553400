//! Stratified compression: per cluster, member distances to the centroid
//! are cut into intervals, and each non-empty interval contributes a fixed
//! fraction (at least one sample), preserving both core and boundary mass.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use rand::Rng;

use crate::dataset::{CompressedSet, Dataset};
use crate::exec;
use crate::geometry::{centroid_distances, ClusterModel, EmbeddingMatrix, GeometryError};
use crate::seeding;

pub type Result<T> = std::result::Result<T, SamplerError>;

#[derive(Debug, Error)]
pub enum SamplerError {
    #[error("interval count must be at least 1")]
    InvalidIntervalCount,
    #[error("cluster {cluster_id} has no members")]
    EmptyCluster { cluster_id: usize },
    #[error("cluster {cluster_id}, id '{id}': distance {value} is not a finite non-negative number")]
    BadDistance { cluster_id: usize, id: String, value: f64 },
    #[error("retention rate {value} outside (0, 1]")]
    RetentionOutOfRange { value: f64 },
    #[error("inputs disagree: {reason}")]
    Mismatch { reason: String },
    #[error(transparent)]
    Geometry(#[from] GeometryError),
}

impl SamplerError {
    pub fn is_validation(&self) -> bool {
        true
    }
}

/// How interval edges are placed over a cluster's distance range.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum IntervalMode {
    /// Equal-width intervals over [0, max distance]. The default.
    EqualWidth,
    /// Edges at empirical distance quantiles, roughly equalizing counts.
    Quantile,
}

/// One cluster's members partitioned into distance intervals. `edges` has
/// `n + 1` entries starting at 0; the last interval is closed on the right.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IntervalPartition {
    pub cluster_id: usize,
    pub edges: Vec<f64>,
    /// Member ids per interval, preserving input (dataset) order.
    pub members_per_bin: Vec<Vec<String>>,
}

/// Equal-width edges over [0, d_max]: n + 1 values with exact endpoints.
/// A zero range falls back to a hair-width span so edges stay ascending.
pub fn interval_edges(d_max: f64, n: usize) -> Vec<f64> {
    assert!(n >= 1, "interval count must be at least 1");
    let top = if d_max > 0.0 { d_max } else { 1e-12 };
    let mut edges: Vec<f64> = (0..=n).map(|k| top * k as f64 / n as f64).collect();
    edges[0] = 0.0;
    edges[n] = top;
    edges
}

/// Interval index for a distance: the largest k with edges[k] <= d, capped
/// at the last interval (which is therefore closed on the right).
pub fn bin_index(d: f64, edges: &[f64]) -> usize {
    let n = edges.len() - 1;
    let mut bin = 0;
    for (k, &e) in edges.iter().enumerate().take(n).skip(1) {
        if d >= e {
            bin = k;
        } else {
            break;
        }
    }
    bin
}

fn quantile_edges(distances: &[f64], n: usize) -> Vec<f64> {
    let mut sorted = distances.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let len = sorted.len();
    let d_max = *sorted.last().unwrap();
    let top = if d_max > 0.0 { d_max } else { 1e-12 };
    let mut edges = Vec::with_capacity(n + 1);
    edges.push(0.0);
    for k in 1..n {
        edges.push(sorted[(len * k) / n].min(top));
    }
    edges.push(top);
    edges
}

/// Splits one cluster's members into `n_intervals` distance intervals.
/// `members` pairs each id with its distance to the cluster centroid, in
/// dataset order; that order is preserved inside every interval.
pub fn stratify(
    cluster_id: usize,
    members: &[(String, f64)],
    n_intervals: usize,
    mode: IntervalMode,
) -> Result<IntervalPartition> {
    if n_intervals < 1 {
        return Err(SamplerError::InvalidIntervalCount);
    }
    if members.is_empty() {
        return Err(SamplerError::EmptyCluster { cluster_id });
    }
    let mut d_max = 0.0f64;
    for (id, d) in members {
        if !d.is_finite() || *d < 0.0 {
            return Err(SamplerError::BadDistance { cluster_id, id: id.clone(), value: *d });
        }
        d_max = d_max.max(*d);
    }

    let edges = match mode {
        IntervalMode::EqualWidth => interval_edges(d_max, n_intervals),
        IntervalMode::Quantile => {
            let dists: Vec<f64> = members.iter().map(|(_, d)| *d).collect();
            quantile_edges(&dists, n_intervals)
        }
    };

    let mut members_per_bin = vec![Vec::new(); n_intervals];
    for (id, d) in members {
        members_per_bin[bin_index(*d, &edges)].push(id.clone());
    }
    Ok(IntervalPartition { cluster_id, edges, members_per_bin })
}

/// Draws `max(1, round(rate * len))` members without replacement (capped at
/// the interval size), half-up rounding. The draw stream is keyed by
/// (seed, cluster, interval), so other intervals' contents never shift the
/// outcome. Selected ids keep their input order.
pub fn sample_bin(
    members: &[String],
    rate: f64,
    seed: u64,
    cluster_id: usize,
    bin: usize,
) -> Result<Vec<String>> {
    if !(rate > 0.0 && rate <= 1.0) {
        return Err(SamplerError::RetentionOutOfRange { value: rate });
    }
    if members.is_empty() {
        return Ok(Vec::new());
    }
    let len = members.len();
    let count = ((rate * len as f64 + 0.5).floor() as usize).max(1).min(len);
    if count == len {
        return Ok(members.to_vec());
    }

    let mut rng = seeding::stream(seed, &[seeding::TAG_SAMPLER, cluster_id as u64, bin as u64]);
    let mut idx: Vec<usize> = (0..len).collect();
    for i in 0..count {
        let j = rng.gen_range(i..len);
        idx.swap(i, j);
    }
    let mut picked = idx[..count].to_vec();
    picked.sort_unstable();
    Ok(picked.into_iter().map(|i| members[i].clone()).collect())
}

/// Everything a compression run needs beyond the fitted geometry.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SamplerOptions {
    pub retention: f64,
    pub seed: u64,
    pub n_intervals: usize,
    pub mode: IntervalMode,
    /// Free-form note recorded on the output set (e.g. a hash of the
    /// analysis that chose the retention rate).
    pub provenance: String,
}

impl SamplerOptions {
    pub fn new(retention: f64, seed: u64) -> Self {
        SamplerOptions {
            retention,
            seed,
            n_intervals: 5,
            mode: IntervalMode::EqualWidth,
            provenance: String::new(),
        }
    }
}

/// One cluster's contribution to a compression plan.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterSelection {
    pub cluster_id: usize,
    pub edges: Vec<f64>,
    pub bin_sizes: Vec<usize>,
    pub selected_per_bin: Vec<Vec<String>>,
}

/// The full audit trail of a compression run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompressionPlan {
    pub retention_target: f64,
    pub seed: u64,
    pub per_cluster: Vec<ClusterSelection>,
    /// All selected ids, ordered by (cluster, interval, dataset row).
    pub selected_ids: Vec<String>,
    pub achieved_retention: f64,
}

/// Stratified compression with default options (5 equal-width intervals).
pub fn compress(
    dataset: &Dataset,
    matrix: &EmbeddingMatrix,
    model: &ClusterModel,
    retention: f64,
    seed: u64,
) -> Result<(CompressionPlan, CompressedSet)> {
    compress_with(dataset, matrix, model, &SamplerOptions::new(retention, seed))
}

/// Stratified compression. Every non-empty interval of every cluster
/// contributes at least one sample, so tails survive even at aggressive
/// rates; the achieved retention can exceed the target by at most
/// (intervals * clusters) / dataset size.
pub fn compress_with(
    dataset: &Dataset,
    matrix: &EmbeddingMatrix,
    model: &ClusterModel,
    opts: &SamplerOptions,
) -> Result<(CompressionPlan, CompressedSet)> {
    if !(opts.retention > 0.0 && opts.retention <= 1.0) {
        return Err(SamplerError::RetentionOutOfRange { value: opts.retention });
    }
    if opts.n_intervals < 1 {
        return Err(SamplerError::InvalidIntervalCount);
    }
    if dataset.len() != matrix.rows() {
        return Err(SamplerError::Mismatch {
            reason: format!("{} samples but {} embedding rows", dataset.len(), matrix.rows()),
        });
    }
    let distances = centroid_distances(matrix, model)?;

    let mut members: Vec<Vec<(String, f64)>> = vec![Vec::new(); model.k];
    for (i, sample) in dataset.samples().iter().enumerate() {
        members[model.assignments[i]].push((sample.id.clone(), distances[i]));
    }

    let selections = exec::map_indexed(model.k, |c| -> Result<Option<ClusterSelection>> {
        if members[c].is_empty() {
            return Ok(None);
        }
        let part = stratify(c, &members[c], opts.n_intervals, opts.mode)?;
        let mut selected_per_bin = Vec::with_capacity(opts.n_intervals);
        for (b, bin_members) in part.members_per_bin.iter().enumerate() {
            selected_per_bin.push(sample_bin(bin_members, opts.retention, opts.seed, c, b)?);
        }
        Ok(Some(ClusterSelection {
            cluster_id: c,
            edges: part.edges,
            bin_sizes: part.members_per_bin.iter().map(Vec::len).collect(),
            selected_per_bin,
        }))
    });

    let mut per_cluster = Vec::new();
    for s in selections {
        if let Some(sel) = s? {
            per_cluster.push(sel);
        }
    }

    let selected_ids: Vec<String> = per_cluster
        .iter()
        .flat_map(|sel| sel.selected_per_bin.iter().flatten().cloned())
        .collect();
    let achieved_retention = selected_ids.len() as f64 / dataset.len() as f64;

    let plan = CompressionPlan {
        retention_target: opts.retention,
        seed: opts.seed,
        per_cluster,
        selected_ids: selected_ids.clone(),
        achieved_retention,
    };
    let set = CompressedSet {
        source_dataset_id: dataset.fingerprint().to_string(),
        selected_ids,
        retention_rate: achieved_retention,
        provenance: opts.provenance.clone(),
    };
    Ok((plan, set))
}
