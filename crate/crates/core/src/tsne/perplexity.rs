//! Per-row bandwidth calibration by bisection on the Gaussian precision.

use crate::scalar::Scalar;

use super::ProjectionError;

/// Maximum bisection steps before giving up on a row.
pub const MAX_BISECTION_STEPS: usize = 200;
/// Tolerance on `|log2(achieved perplexity) - log2(target)|`.
pub const LOG2_PERPLEXITY_TOLERANCE: f64 = 1e-4;

/// Outcome of calibrating one row.
#[derive(Debug, Clone, PartialEq)]
pub struct RowCalibration<T> {
    /// Gaussian precision `beta = 1 / (2 sigma^2)`.
    pub beta: T,
    /// Conditional probabilities `p_{j|i}` over the row's neighbors.
    pub probabilities: Vec<T>,
    /// Perplexity actually achieved at `beta`.
    pub perplexity: T,
    /// False when bisection ran out of steps (e.g. all distances equal).
    pub converged: bool,
    pub steps: usize,
}

/// Probabilities and entropy in bits for a given precision.
///
/// Distances are shifted by their minimum before exponentiation; the shift
/// cancels in the normalization and keeps the largest weight at exactly one.
fn evaluate<T: Scalar>(shifted: &[T], beta: T, probs: &mut [T]) -> T {
    let mut total = T::zero();
    for (p, &d) in probs.iter_mut().zip(shifted) {
        *p = (-beta * d).exp();
        total = total + *p;
    }
    let mut weighted = T::zero();
    for (p, &d) in probs.iter_mut().zip(shifted) {
        *p = *p / total;
        weighted = weighted + *p * d;
    }
    (total.ln() + beta * weighted) / T::lit(std::f64::consts::LN_2)
}

/// Find the precision whose conditional distribution over `distances_sq`
/// has perplexity `target_perplexity`.
///
/// The search starts at `beta = 1`, doubles or halves until the target is
/// bracketed and then bisects.
pub fn calibrate_row<T: Scalar>(
    distances_sq: &[T],
    target_perplexity: T,
) -> Result<RowCalibration<T>, ProjectionError> {
    if let Some(index) = distances_sq
        .iter()
        .position(|d| !d.is_finite() || *d < T::zero())
    {
        return Err(ProjectionError::InvalidDistance { index });
    }
    let max = distances_sq.len() as f64;
    let target = target_perplexity.to_f64_lossy();
    if !(target > 1.0 && target <= max) {
        return Err(ProjectionError::InfeasiblePerplexity { target, max });
    }

    let min = distances_sq
        .iter()
        .copied()
        .fold(T::infinity(), T::min);
    let shifted: Vec<T> = distances_sq.iter().map(|&d| d - min).collect();
    let mut probs = vec![T::zero(); shifted.len()];

    let log_target = target_perplexity.log2();
    let tol = T::lit(LOG2_PERPLEXITY_TOLERANCE);
    let two = T::lit(2.0);
    let mut beta = T::one();
    let mut lo = T::zero();
    let mut hi = T::infinity();
    let mut converged = false;
    let mut steps = 0;
    let mut entropy = evaluate(&shifted, beta, &mut probs);

    while steps < MAX_BISECTION_STEPS {
        let diff = entropy - log_target;
        if diff.abs() <= tol {
            converged = true;
            break;
        }
        if diff > T::zero() {
            lo = beta;
            beta = if hi.is_infinite() { beta * two } else { (beta + hi) / two };
        } else {
            hi = beta;
            beta = (beta + lo) / two;
        }
        steps += 1;
        entropy = evaluate(&shifted, beta, &mut probs);
    }
    if !converged && (entropy - log_target).abs() <= tol {
        converged = true;
    }

    Ok(RowCalibration {
        beta,
        probabilities: probs,
        perplexity: entropy.exp2(),
        converged,
        steps,
    })
}

/// Perplexity `2^H` of a discrete distribution, with `0 log 0 = 0`.
pub fn perplexity_of<T: Scalar>(probabilities: &[T]) -> T {
    let entropy = probabilities
        .iter()
        .filter(|p| **p > T::zero())
        .map(|&p| -p * p.log2())
        .sum::<T>();
    entropy.exp2()
}
