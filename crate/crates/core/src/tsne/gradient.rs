//! Exact Student-t kernel, KL objective and its gradient.

use ndarray::{Array2, ArrayView2};

use crate::scalar::Scalar;

use super::ProjectionError;

/// Lower bound on the kernel normalizer `Z`.
pub const NORMALIZER_FLOOR: f64 = 1e-12;

/// Unnormalized low-dimensional similarities `(1 + |y_i - y_j|^2)^-1` and
/// their off-diagonal sum.
#[derive(Debug, Clone)]
pub(crate) struct Kernel<T> {
    pub weights: Array2<T>,
    pub normalizer: T,
}

impl<T: Scalar> Kernel<T> {
    pub fn new(n: usize) -> Self {
        Self {
            weights: Array2::zeros((n, n)),
            normalizer: T::one(),
        }
    }

    pub fn update(&mut self, y: ArrayView2<T>) {
        let n = y.nrows();
        let mut total = T::zero();
        for i in 0..n {
            self.weights[[i, i]] = T::zero();
            for j in (i + 1)..n {
                let d2 = y
                    .row(i)
                    .iter()
                    .zip(y.row(j).iter())
                    .map(|(&a, &b)| (a - b) * (a - b))
                    .sum::<T>();
                let w = (T::one() + d2).recip();
                self.weights[[i, j]] = w;
                self.weights[[j, i]] = w;
                total = total + w + w;
            }
        }
        self.normalizer = total.max(T::lit(NORMALIZER_FLOOR));
    }

    /// Gradient of KL(`scale * P` || Q) written into `out`.
    pub fn gradient_into(&self, p: ArrayView2<T>, scale: T, y: ArrayView2<T>, out: &mut Array2<T>) {
        let n = y.nrows();
        let dims = y.ncols();
        let four = T::lit(4.0);
        out.fill(T::zero());
        for i in 0..n {
            for j in 0..n {
                if i == j {
                    continue;
                }
                let w = self.weights[[i, j]];
                let q = w / self.normalizer;
                let coeff = (scale * p[[i, j]] - q) * w;
                for k in 0..dims {
                    out[[i, k]] = out[[i, k]] + coeff * (y[[i, k]] - y[[j, k]]);
                }
            }
            for k in 0..dims {
                out[[i, k]] = four * out[[i, k]];
            }
        }
    }

    /// `sum_{i != j} P_ij ln(P_ij / q_ij)`; zero-affinity terms contribute nothing.
    pub fn kl(&self, p: ArrayView2<T>) -> T {
        let n = p.nrows();
        let tiny = T::min_positive_value();
        let mut total = T::zero();
        for i in 0..n {
            for j in 0..n {
                let pij = p[[i, j]];
                if i == j || pij <= T::zero() {
                    continue;
                }
                let q = (self.weights[[i, j]] / self.normalizer).max(tiny);
                total = total + pij * (pij / q).ln();
            }
        }
        total
    }
}

fn check_shapes<T>(p: &ArrayView2<T>, y: &ArrayView2<T>) -> Result<(), ProjectionError> {
    let n = y.nrows();
    if p.nrows() != n || p.ncols() != n {
        return Err(ProjectionError::ShapeMismatch(format!(
            "affinities are {}x{}, layout has {n} rows",
            p.nrows(),
            p.ncols()
        )));
    }
    Ok(())
}

/// `grad_i = 4 sum_j (P_ij - q_ij)(y_i - y_j)(1 + |y_i - y_j|^2)^-1`.
pub fn gradient<T: Scalar>(p: ArrayView2<T>, y: ArrayView2<T>) -> Result<Array2<T>, ProjectionError> {
    check_shapes(&p, &y)?;
    let mut kernel = Kernel::new(y.nrows());
    kernel.update(y);
    let mut out = Array2::zeros(y.raw_dim());
    kernel.gradient_into(p, T::one(), y, &mut out);
    Ok(out)
}

/// KL(P || Q) for layout `y`.
pub fn kl_divergence<T: Scalar>(p: ArrayView2<T>, y: ArrayView2<T>) -> Result<T, ProjectionError> {
    check_shapes(&p, &y)?;
    let mut kernel = Kernel::new(y.nrows());
    kernel.update(y);
    Ok(kernel.kl(p))
}

/// Low-dimensional joint similarities `q_ij` for layout `y`.
pub fn low_dim_similarities<T: Scalar>(y: ArrayView2<T>) -> Array2<T> {
    let mut kernel = Kernel::new(y.nrows());
    kernel.update(y);
    let z = kernel.normalizer;
    kernel.weights.mapv(|w| w / z)
}
