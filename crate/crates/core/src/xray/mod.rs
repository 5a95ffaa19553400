//! Dataset x-ray: cluster-quality profiling and the retention
//! recommendation derived from it.

mod projection;

pub use projection::{project_2d, Projection};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{centroid_distances, silhouette_mean, ClusterModel, EmbeddingMatrix, GeometryError};
use crate::sampler::{bin_index, interval_edges};

pub type Result<T> = std::result::Result<T, XRayError>;

#[derive(Debug, Error)]
pub enum XRayError {
    #[error("invalid thresholds: {reason}")]
    Thresholds { reason: String },
    #[error("silhouette {value} outside [-1, 1]")]
    SilhouetteOutOfRange { value: f64 },
    #[error("projection needs at least 2 dimensions, got {dims}")]
    DimensionTooSmall { dims: usize },
    #[error(transparent)]
    Geometry(#[from] GeometryError),
}

impl XRayError {
    pub fn is_validation(&self) -> bool {
        true
    }
}

/// Knobs for the profile verdict. Distances are on L2-normalized vectors,
/// so they live in [0, 2].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct XRayThresholds {
    /// Samples at most this far from their centroid count as core mass.
    pub core_distance: f64,
    /// Samples strictly beyond this are sparse outliers.
    pub sparse_distance: f64,
    /// Mean silhouette at or above this knee: aggressive retention applies.
    pub silhouette_aggressive: f64,
    /// Mean silhouette at or below this floor: keep the conservative max.
    pub silhouette_floor: f64,
    /// Retention recommended at the aggressive knee.
    pub retention_aggressive: f64,
    /// Retention approached just below the aggressive knee.
    pub retention_conservative_min: f64,
    /// Retention recommended at or below the silhouette floor.
    pub retention_conservative_max: f64,
}

impl Default for XRayThresholds {
    fn default() -> Self {
        XRayThresholds {
            core_distance: 0.5,
            sparse_distance: 1.2,
            silhouette_aggressive: 0.5,
            silhouette_floor: 0.25,
            retention_aggressive: 0.10,
            retention_conservative_min: 0.20,
            retention_conservative_max: 0.30,
        }
    }
}

impl XRayThresholds {
    pub fn validate(&self) -> Result<()> {
        let err = |reason: &str| Err(XRayError::Thresholds { reason: reason.into() });
        if !(self.core_distance > 0.0 && self.sparse_distance > self.core_distance) {
            return err("need 0 < core_distance < sparse_distance");
        }
        if !(self.silhouette_floor >= -1.0
            && self.silhouette_aggressive > self.silhouette_floor
            && self.silhouette_aggressive <= 1.0)
        {
            return err("need -1 <= silhouette_floor < silhouette_aggressive <= 1");
        }
        if !(self.retention_aggressive > 0.0
            && self.retention_aggressive <= self.retention_conservative_min
            && self.retention_conservative_min <= self.retention_conservative_max
            && self.retention_conservative_max <= 1.0)
        {
            return err("retention knees must satisfy 0 < aggressive <= conservative_min <= conservative_max <= 1");
        }
        Ok(())
    }
}

/// How much obvious redundancy the embedding space shows.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Verdict {
    /// Tight, well-separated clusters: compress hard.
    HighRedundancy,
    /// Usable structure: compress, but keep a safety margin.
    ModerateRedundancy,
    /// Weak structure: stratification helps little; keep the most.
    LowRedundancy,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterSummary {
    pub cluster_id: usize,
    pub size: usize,
    pub mean_distance: f64,
    pub max_distance: f64,
    /// Member counts over 5 equal-width distance intervals spanning
    /// [0, max_distance].
    pub histogram: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct XRayReport {
    pub silhouette_mean: f64,
    /// Fraction of samples within `core_distance` of their centroid.
    pub core_fraction: f64,
    /// Fraction strictly beyond `sparse_distance`.
    pub sparse_fraction: f64,
    pub per_cluster: Vec<ClusterSummary>,
    pub recommended_retention: f64,
    pub verdict: Verdict,
}

/// Piecewise retention map: the aggressive rate at or above the aggressive
/// silhouette knee, the conservative maximum at or below the floor, and a
/// linear ramp from (floor, conservative_max) down to (aggressive_knee,
/// conservative_min) in between. Non-increasing in the silhouette.
pub fn recommend_retention(silhouette: f64, t: &XRayThresholds) -> Result<f64> {
    t.validate()?;
    if !(-1.0..=1.0).contains(&silhouette) || silhouette.is_nan() {
        return Err(XRayError::SilhouetteOutOfRange { value: silhouette });
    }
    if silhouette >= t.silhouette_aggressive {
        return Ok(t.retention_aggressive);
    }
    if silhouette <= t.silhouette_floor {
        return Ok(t.retention_conservative_max);
    }
    let span = t.silhouette_aggressive - t.silhouette_floor;
    let slope = (t.retention_conservative_max - t.retention_conservative_min) / span;
    Ok(t.retention_conservative_max - (silhouette - t.silhouette_floor) * slope)
}

pub fn verdict_for(silhouette: f64, t: &XRayThresholds) -> Verdict {
    if silhouette >= t.silhouette_aggressive {
        Verdict::HighRedundancy
    } else if silhouette > t.silhouette_floor {
        Verdict::ModerateRedundancy
    } else {
        Verdict::LowRedundancy
    }
}

/// Full profile of a clustered dataset. `subsample` bounds the silhouette
/// evaluation (None = default cap); distances and per-cluster stats always
/// cover every sample.
pub fn run_xray(
    matrix: &EmbeddingMatrix,
    model: &ClusterModel,
    thresholds: &XRayThresholds,
    subsample: Option<usize>,
    seed: u64,
) -> Result<XRayReport> {
    thresholds.validate()?;
    let distances = centroid_distances(matrix, model)?;
    let silhouette = silhouette_mean(matrix, &model.assignments, subsample, seed)?;

    let m = distances.len() as f64;
    let core = distances.iter().filter(|&&d| d <= thresholds.core_distance).count() as f64 / m;
    let sparse = distances.iter().filter(|&&d| d > thresholds.sparse_distance).count() as f64 / m;

    let mut member_dists: Vec<Vec<f64>> = vec![Vec::new(); model.k];
    for (i, &a) in model.assignments.iter().enumerate() {
        member_dists[a].push(distances[i]);
    }
    let per_cluster = member_dists
        .iter()
        .enumerate()
        .map(|(cluster_id, dists)| {
            let size = dists.len();
            let max_distance = dists.iter().fold(0.0f64, |m, &d| m.max(d));
            // Guard the empty-cluster case (possible in externally built
            // models): a NaN here would poison report serialization.
            let mean_distance =
                if size == 0 { 0.0 } else { dists.iter().sum::<f64>() / size as f64 };
            let edges = interval_edges(max_distance, 5);
            let mut histogram = vec![0usize; 5];
            for &d in dists {
                histogram[bin_index(d, &edges)] += 1;
            }
            ClusterSummary { cluster_id, size, mean_distance, max_distance, histogram }
        })
        .collect();

    let recommended_retention = recommend_retention(silhouette, thresholds)?;
    let verdict = verdict_for(silhouette, thresholds);

    Ok(XRayReport {
        silhouette_mean: silhouette,
        core_fraction: core,
        sparse_fraction: sparse,
        per_cluster,
        recommended_retention,
        verdict,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn retention_map_hits_the_knees() {
        let t = XRayThresholds::default();
        assert_eq!(recommend_retention(0.67, &t).unwrap(), 0.10);
        assert_eq!(recommend_retention(0.5, &t).unwrap(), 0.10);
        assert_eq!(recommend_retention(0.25, &t).unwrap(), 0.30);
        assert_eq!(recommend_retention(-1.0, &t).unwrap(), 0.30);
        let mid = recommend_retention(0.375, &t).unwrap();
        assert!((mid - 0.25).abs() < 1e-12);
        // Just below the aggressive knee the ramp bottoms out near 0.20.
        let near = recommend_retention(0.499999, &t).unwrap();
        assert!((near - 0.20).abs() < 1e-5);
    }

    #[test]
    fn retention_map_is_monotone_non_increasing() {
        let t = XRayThresholds::default();
        let mut prev = f64::INFINITY;
        let mut s = -1.0;
        while s <= 1.0 {
            let r = recommend_retention(s, &t).unwrap();
            assert!(r <= prev + 1e-15, "retention rose at s = {s}");
            assert!((t.retention_aggressive..=t.retention_conservative_max).contains(&r));
            prev = r;
            s += 0.001;
        }
    }

    #[test]
    fn verdict_bands() {
        let t = XRayThresholds::default();
        assert_eq!(verdict_for(0.67, &t), Verdict::HighRedundancy);
        assert_eq!(verdict_for(0.5, &t), Verdict::HighRedundancy);
        assert_eq!(verdict_for(0.4, &t), Verdict::ModerateRedundancy);
        assert_eq!(verdict_for(0.26, &t), Verdict::ModerateRedundancy);
        assert_eq!(verdict_for(0.25, &t), Verdict::LowRedundancy);
        assert_eq!(verdict_for(-0.3, &t), Verdict::LowRedundancy);
    }

    #[test]
    fn rejects_out_of_range_silhouette_and_bad_thresholds() {
        let t = XRayThresholds::default();
        assert!(matches!(
            recommend_retention(1.5, &t),
            Err(XRayError::SilhouetteOutOfRange { .. })
        ));
        assert!(matches!(
            recommend_retention(f64::NAN, &t),
            Err(XRayError::SilhouetteOutOfRange { .. })
        ));
        let bad = XRayThresholds { sparse_distance: 0.3, ..XRayThresholds::default() };
        assert!(matches!(recommend_retention(0.5, &bad), Err(XRayError::Thresholds { .. })));
    }
}
