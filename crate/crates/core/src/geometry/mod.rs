//! Embedding geometry: the row-major matrix type, L2 normalization,
//! k-means clustering, silhouette scoring, and per-sample centroid
//! distances.

mod kmeans;
mod silhouette;

pub use kmeans::{kmeans, ClusterModel};
pub use silhouette::silhouette_mean;

use thiserror::Error;

use crate::exec;

pub type Result<T> = std::result::Result<T, GeometryError>;

#[derive(Debug, Error)]
pub enum GeometryError {
    #[error("matrix must be non-empty and rectangular: {reason}")]
    BadShape { reason: String },
    #[error("non-finite value at row {row}")]
    NonFinite { row: usize },
    #[error("row {row} has zero norm and cannot be normalized")]
    ZeroNormRow { row: usize },
    #[error("cluster count {k} out of range for {rows} rows")]
    InvalidClusterCount { k: usize, rows: usize },
    #[error("fewer than two distinct clusters present")]
    SingleCluster,
    #[error("{context}: {reason}")]
    Mismatch { context: &'static str, reason: String },
}

impl GeometryError {
    pub fn is_validation(&self) -> bool {
        true
    }
}

/// Dense row-major matrix of embeddings: one row per sample, in dataset
/// order. `normalized` records whether rows are unit length.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingMatrix {
    data: Vec<f64>,
    rows: usize,
    dims: usize,
    normalized: bool,
}

impl EmbeddingMatrix {
    pub fn from_flat(data: Vec<f64>, rows: usize, dims: usize) -> Result<Self> {
        if rows == 0 || dims == 0 || data.len() != rows * dims {
            return Err(GeometryError::BadShape {
                reason: format!("{} values for {rows}x{dims}", data.len()),
            });
        }
        for (row, chunk) in data.chunks(dims).enumerate() {
            if chunk.iter().any(|x| !x.is_finite()) {
                return Err(GeometryError::NonFinite { row });
            }
        }
        Ok(EmbeddingMatrix { data, rows, dims, normalized: false })
    }

    pub fn from_rows(rows: Vec<Vec<f64>>) -> Result<Self> {
        if rows.is_empty() {
            return Err(GeometryError::BadShape { reason: "no rows".into() });
        }
        let dims = rows[0].len();
        if rows.iter().any(|r| r.len() != dims) {
            return Err(GeometryError::BadShape { reason: "ragged rows".into() });
        }
        let n = rows.len();
        let mut data = Vec::with_capacity(n * dims);
        for r in rows {
            data.extend_from_slice(&r);
        }
        Self::from_flat(data, n, dims)
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn dims(&self) -> usize {
        self.dims
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.dims..(i + 1) * self.dims]
    }

    pub fn is_normalized(&self) -> bool {
        self.normalized
    }
}

pub(crate) fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    let mut acc = 0.0;
    for i in 0..a.len() {
        let d = a[i] - b[i];
        acc += d * d;
    }
    acc
}

pub(crate) fn dist(a: &[f64], b: &[f64]) -> f64 {
    sq_dist(a, b).sqrt()
}

/// Scales every row to unit L2 norm. Rows that are already unit length come
/// through unchanged up to one rounding step per component. Zero rows are
/// rejected: they have no direction on the sphere.
pub fn l2_normalize(matrix: &EmbeddingMatrix) -> Result<EmbeddingMatrix> {
    let dims = matrix.dims;
    let scaled = exec::map_indexed(matrix.rows, |i| {
        let row = matrix.row(i);
        let norm = row.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm == 0.0 {
            return Err(GeometryError::ZeroNormRow { row: i });
        }
        Ok(row.iter().map(|x| x / norm).collect::<Vec<f64>>())
    });
    let mut data = Vec::with_capacity(matrix.rows * dims);
    for row in scaled {
        data.extend_from_slice(&row?);
    }
    Ok(EmbeddingMatrix { data, rows: matrix.rows, dims, normalized: true })
}

/// Distance from each row to its assigned centroid, in row order.
pub fn centroid_distances(matrix: &EmbeddingMatrix, model: &ClusterModel) -> Result<Vec<f64>> {
    model.check_against(matrix)?;
    Ok(exec::map_indexed(matrix.rows, |i| {
        dist(matrix.row(i), &model.centroids[model.assignments[i]])
    }))
}
