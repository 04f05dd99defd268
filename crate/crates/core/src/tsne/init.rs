//! Initial layouts.

use ndarray::{Array1, Array2, ArrayView2, Axis};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::scalar::Scalar;

/// Standard deviation of the initial layout along its first axis.
pub const INIT_SCALE: f64 = 1e-4;

const POWER_ITERATIONS: usize = 500;

/// `n x 2` Gaussian layout with standard deviation [`INIT_SCALE`].
pub fn random_gaussian<T: Scalar>(n: usize, seed: u64) -> Array2<T> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Array2::from_shape_simple_fn((n, 2), || {
        let z: f64 = StandardNormal.sample(&mut rng);
        T::lit(z * INIT_SCALE)
    })
}

/// Projection onto the top two principal axes, rescaled so the first column
/// has standard deviation [`INIT_SCALE`]. Falls back to [`random_gaussian`]
/// when the embeddings have no spread.
pub fn pca<T: Scalar>(embeddings: ArrayView2<T>, seed: u64) -> Array2<T> {
    let n = embeddings.nrows();
    let d = embeddings.ncols();
    let mean = embeddings
        .mean_axis(Axis(0))
        .unwrap_or_else(|| Array1::zeros(d));
    let centered = &embeddings - &mean;
    let mut cov = centered.t().dot(&centered);

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut axes = Vec::with_capacity(2);
    for _ in 0..2.min(d) {
        let Some((value, axis)) = leading_eigenpair(&cov, &mut rng) else {
            break;
        };
        // rank-one deflation
        for a in 0..d {
            for b in 0..d {
                cov[[a, b]] = cov[[a, b]] - value * axis[a] * axis[b];
            }
        }
        axes.push(axis);
    }
    if axes.is_empty() {
        return random_gaussian(n, seed);
    }

    let mut out = Array2::zeros((n, 2));
    for (k, axis) in axes.iter().enumerate() {
        out.column_mut(k).assign(&centered.dot(axis));
    }
    let std = out.column(0).std(T::zero());
    if !(std > T::zero()) {
        return random_gaussian(n, seed);
    }
    let factor = T::lit(INIT_SCALE) / std;
    out.mapv_inplace(|v| v * factor);
    out
}

/// Power iteration; the returned axis has its largest-magnitude entry positive.
fn leading_eigenpair<T: Scalar>(m: &Array2<T>, rng: &mut ChaCha8Rng) -> Option<(T, Array1<T>)> {
    let d = m.nrows();
    let mut v = Array1::from_shape_simple_fn(d, || {
        let z: f64 = StandardNormal.sample(rng);
        T::lit(z)
    });
    let norm = v.dot(&v).sqrt();
    v.mapv_inplace(|x| x / norm);
    let mut value = T::zero();
    for _ in 0..POWER_ITERATIONS {
        let w = m.dot(&v);
        let norm = w.dot(&w).sqrt();
        if !(norm > T::epsilon()) {
            return None;
        }
        let next = w.mapv(|x| x / norm);
        let delta = (&next - &v).mapv(|x| x.abs()).sum();
        v = next;
        value = norm;
        if delta < T::lit(1e-12) {
            break;
        }
    }
    let pivot = v
        .iter()
        .copied()
        .fold(T::zero(), |acc, x| if x.abs() > acc.abs() { x } else { acc });
    if pivot < T::zero() {
        v.mapv_inplace(|x| -x);
    }
    Some((value, v))
}
