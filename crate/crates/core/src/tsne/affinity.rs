//! Symmetrized input-space affinities.

use ndarray::{Array2, ArrayView2};

use crate::scalar::Scalar;

use super::perplexity::calibrate_row;
use super::ProjectionError;

/// Entries below this are raised to it before the final normalization.
pub const AFFINITY_FLOOR: f64 = 1e-12;
pub const MIN_POINTS: usize = 4;

#[derive(Debug, Clone, PartialEq)]
pub struct RowSummary<T> {
    pub beta: T,
    pub perplexity: T,
    pub converged: bool,
}

#[derive(Debug, Clone)]
pub struct Affinities<T> {
    /// Joint affinities; symmetric, zero diagonal, sums to one.
    pub joint: Array2<T>,
    /// Row-conditional probabilities `p_{j|i}` (zero diagonal).
    pub conditional: Array2<T>,
    pub rows: Vec<RowSummary<T>>,
}

impl<T: Scalar> Affinities<T> {
    pub fn uncalibrated_rows(&self) -> Vec<usize> {
        self.rows
            .iter()
            .enumerate()
            .filter(|(_, r)| !r.converged)
            .map(|(i, _)| i)
            .collect()
    }
}

/// Pairwise squared Euclidean distances; exactly symmetric.
pub fn squared_distances<T: Scalar>(points: ArrayView2<T>) -> Array2<T> {
    let n = points.nrows();
    let mut out = Array2::zeros((n, n));
    for i in 0..n {
        for j in (i + 1)..n {
            let d = points
                .row(i)
                .iter()
                .zip(points.row(j).iter())
                .map(|(&a, &b)| (a - b) * (a - b))
                .sum::<T>();
            out[[i, j]] = d;
            out[[j, i]] = d;
        }
    }
    out
}

/// `P_ij = (p_{j|i} + p_{i|j}) / 2n`, floored and renormalized.
pub fn compute_affinities<T: Scalar>(
    embeddings: ArrayView2<T>,
    perplexity: T,
) -> Result<Affinities<T>, ProjectionError> {
    let n = embeddings.nrows();
    if n < MIN_POINTS {
        return Err(ProjectionError::TooFewPoints { n, min: MIN_POINTS });
    }
    let dist = squared_distances(embeddings);

    let mut conditional = Array2::zeros((n, n));
    let mut rows = Vec::with_capacity(n);
    let mut neighbors = Vec::with_capacity(n - 1);
    for i in 0..n {
        neighbors.clear();
        neighbors.extend((0..n).filter(|&j| j != i).map(|j| dist[[i, j]]));
        let cal = calibrate_row(&neighbors, perplexity)?;
        for (k, j) in (0..n).filter(|&j| j != i).enumerate() {
            conditional[[i, j]] = cal.probabilities[k];
        }
        rows.push(RowSummary {
            beta: cal.beta,
            perplexity: cal.perplexity,
            converged: cal.converged,
        });
    }

    let floor = T::lit(AFFINITY_FLOOR);
    let denom = T::lit(2.0 * n as f64);
    let mut joint = Array2::zeros((n, n));
    let mut total = T::zero();
    for i in 0..n {
        for j in (i + 1)..n {
            let v = ((conditional[[i, j]] + conditional[[j, i]]) / denom).max(floor);
            joint[[i, j]] = v;
            joint[[j, i]] = v;
            total = total + v + v;
        }
    }
    joint.mapv_inplace(|v| v / total);

    Ok(Affinities {
        joint,
        conditional,
        rows,
    })
}
