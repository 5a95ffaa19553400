//! Deterministic 2-D PCA projection for plotting, via power iteration with
//! deflation. No seed parameter: start vectors come from a fixed internal
//! stream, so the projection is a pure function of the matrix.

use super::{Result, XRayError};
use crate::exec;
use crate::geometry::EmbeddingMatrix;
use crate::seeding;

use rand::Rng;

const MAX_ITER: usize = 500;
const ALIGN_TOL: f64 = 1e-14;
const START_ATTEMPTS: usize = 8;

#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct Projection {
    /// One (x, y) pair per matrix row, centered on the origin.
    pub coords: Vec<[f64; 2]>,
    /// True when the data had fewer than two directions of variance; the
    /// collapsed component(s) are zero.
    pub degenerate: bool,
}

/// Projects rows onto their top two principal components. Pairwise
/// distances are preserved exactly (up to rounding) whenever the data has
/// rank <= 2, because the returned axes then span the data.
pub fn project_2d(matrix: &EmbeddingMatrix) -> Result<Projection> {
    let m = matrix.rows();
    let d = matrix.dims();
    if d < 2 {
        return Err(XRayError::DimensionTooSmall { dims: d });
    }

    let mu = column_means(matrix);
    // trace(Z^T Z) = total centered mass; the zero-rank yardstick.
    let trace_total = exec::map_chunks(m, |r| {
        let mut acc = 0.0;
        for i in r {
            let row = matrix.row(i);
            for (x, u) in row.iter().zip(&mu) {
                let z = x - u;
                acc += z * z;
            }
        }
        acc
    })
    .iter()
    .sum::<f64>();

    if trace_total == 0.0 {
        return Ok(Projection { coords: vec![[0.0, 0.0]; m], degenerate: true });
    }
    let zero_floor = trace_total * 1e-12;

    let mut rng = seeding::stream(0x70CA, &[]);
    let v1 = dominant_direction(matrix, &mu, None, zero_floor, &mut rng)
        .expect("nonzero variance has a dominant direction");
    let v2 = dominant_direction(matrix, &mu, Some(&v1), zero_floor, &mut rng);
    let degenerate = v2.is_none();

    let mu_dot_1 = dot(&mu, &v1);
    let mu_dot_2 = v2.as_ref().map(|v| dot(&mu, v));
    let coords = exec::map_indexed(m, |i| {
        let row = matrix.row(i);
        let x = dot(row, &v1) - mu_dot_1;
        let y = match (&v2, mu_dot_2) {
            (Some(v), Some(md)) => dot(row, v) - md,
            _ => 0.0,
        };
        [x, y]
    });

    Ok(Projection { coords, degenerate })
}

fn column_means(matrix: &EmbeddingMatrix) -> Vec<f64> {
    let d = matrix.dims();
    let partials = exec::map_chunks(matrix.rows(), |r| {
        let mut acc = vec![0.0f64; d];
        for i in r {
            for (a, x) in acc.iter_mut().zip(matrix.row(i)) {
                *a += x;
            }
        }
        acc
    });
    let mut mu = vec![0.0f64; d];
    for p in partials {
        for (u, v) in mu.iter_mut().zip(p) {
            *u += v;
        }
    }
    let m = matrix.rows() as f64;
    for u in mu.iter_mut() {
        *u /= m;
    }
    mu
}

/// Power iteration on the centered Gram operator, optionally deflated
/// against `against`. Returns None when every start vector collapses, i.e.
/// the data has no variance left in directions orthogonal to `against`.
fn dominant_direction(
    matrix: &EmbeddingMatrix,
    mu: &[f64],
    against: Option<&[f64]>,
    zero_floor: f64,
    rng: &mut impl Rng,
) -> Option<Vec<f64>> {
    let d = matrix.dims();
    'attempt: for _ in 0..START_ATTEMPTS {
        let mut v: Vec<f64> = (0..d).map(|_| rng.gen_range(-1.0..=1.0)).collect();
        if let Some(prev) = against {
            reject(&mut v, prev);
        }
        if normalize(&mut v).is_none() {
            continue;
        }
        for _ in 0..MAX_ITER {
            let mut w = apply_centered_gram(matrix, mu, &v);
            if let Some(prev) = against {
                reject(&mut w, prev);
            }
            let norm = normalize(&mut w);
            let Some(norm) = norm else { continue 'attempt };
            if norm <= zero_floor {
                // No mass along this start; try another direction before
                // concluding the subspace is exhausted.
                continue 'attempt;
            }
            let align = dot(&v, &w).abs();
            v = w;
            if 1.0 - align < ALIGN_TOL {
                break;
            }
        }
        fix_sign(&mut v);
        return Some(v);
    }
    None
}

/// w = Z^T (Z v) for the implicitly centered matrix Z = X - 1 mu^T,
/// computed as sum_i y_i x_i - (sum_i y_i) mu with y_i = (x_i - mu) . v.
/// Chunk partials combine in fixed order, keeping both execution modes
/// bitwise identical.
fn apply_centered_gram(matrix: &EmbeddingMatrix, mu: &[f64], v: &[f64]) -> Vec<f64> {
    let d = matrix.dims();
    let mu_dot_v = dot(mu, v);
    let partials = exec::map_chunks(matrix.rows(), |r| {
        let mut acc = vec![0.0f64; d];
        let mut sum_y = 0.0f64;
        for i in r {
            let row = matrix.row(i);
            let y = dot(row, v) - mu_dot_v;
            sum_y += y;
            for (a, x) in acc.iter_mut().zip(row) {
                *a += y * x;
            }
        }
        (acc, sum_y)
    });
    let mut w = vec![0.0f64; d];
    let mut sum_y = 0.0f64;
    for (acc, s) in partials {
        for (we, a) in w.iter_mut().zip(acc) {
            *we += a;
        }
        sum_y += s;
    }
    for (we, u) in w.iter_mut().zip(mu) {
        *we -= sum_y * u;
    }
    w
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    let mut acc = 0.0;
    for i in 0..a.len() {
        acc += a[i] * b[i];
    }
    acc
}

/// Removes the component of `v` along unit vector `axis`.
fn reject(v: &mut [f64], axis: &[f64]) {
    let c = dot(v, axis);
    for (x, a) in v.iter_mut().zip(axis) {
        *x -= c * a;
    }
}

fn normalize(v: &mut [f64]) -> Option<f64> {
    let norm = dot(v, v).sqrt();
    if norm == 0.0 || !norm.is_finite() {
        return None;
    }
    for x in v.iter_mut() {
        *x /= norm;
    }
    Some(norm)
}

/// Deterministic orientation: the largest-magnitude loading (first such
/// index on ties) is made positive.
fn fix_sign(v: &mut [f64]) {
    let mut idx = 0;
    for (i, x) in v.iter().enumerate() {
        if x.abs() > v[idx].abs() {
            idx = i;
        }
    }
    if v[idx] < 0.0 {
        for x in v.iter_mut() {
            *x = -*x;
        }
    }
}
