//! Exact (O(n^2)) t-SNE projection to two dimensions.
//!
//! The pipeline is the textbook one:
//!
//! 1. calibrate a Gaussian bandwidth per point to the requested perplexity
//!    ([`calibrate_row`]),
//! 2. symmetrize the conditionals into joint affinities `P`
//!    ([`compute_affinities`]),
//! 3. minimize KL(P || Q) under a Student-t kernel with momentum gradient
//!    descent, exaggerating `P` for the first iterations ([`run_projection`]).
//!
//! Every loop is sequential, so a fixed seed reproduces the layout bit for bit.

mod affinity;
mod gradient;
mod init;
mod perplexity;

use ndarray::{Array2, ArrayView2};
use serde::{Deserialize, Serialize};

use crate::scalar::Scalar;

pub use affinity::{compute_affinities, squared_distances, Affinities, RowSummary, AFFINITY_FLOOR};
pub use gradient::{gradient, kl_divergence, low_dim_similarities, NORMALIZER_FLOOR};
pub use init::{pca as pca_init, random_gaussian as random_init, INIT_SCALE};
pub use perplexity::{
    calibrate_row, perplexity_of, RowCalibration, LOG2_PERPLEXITY_TOLERANCE, MAX_BISECTION_STEPS,
};

use gradient::Kernel;

/// The objective is sampled after every this many iterations.
pub const KL_SAMPLE_INTERVAL: usize = 10;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ProjectionError {
    #[error("invalid projection config: {0}")]
    InvalidConfig(String),
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("need at least {min} points, got {n}")]
    TooFewPoints { n: usize, min: usize },
    #[error("squared distance at index {index} is negative or non-finite")]
    InvalidDistance { index: usize },
    #[error("perplexity {target} infeasible; must lie in (1, {max}]")]
    InfeasiblePerplexity { target: f64, max: f64 },
    #[error("objective became non-finite at iteration {iteration}")]
    NonFiniteObjective { iteration: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Initialization {
    #[default]
    RandomGaussian,
    Pca,
}

/// Optimizer hyperparameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar", default)]
pub struct ProjectionConfig<T = f64> {
    pub perplexity: T,
    pub num_iterations: usize,
    pub early_exaggeration_factor: T,
    pub exaggeration_iters: usize,
    pub learning_rate: T,
    pub momentum_initial: T,
    pub momentum_final: T,
    pub momentum_switch_iter: usize,
    pub seed: u64,
    pub init: Initialization,
}

impl<T: Scalar> Default for ProjectionConfig<T> {
    fn default() -> Self {
        Self {
            perplexity: T::lit(30.0),
            num_iterations: 1000,
            early_exaggeration_factor: T::lit(12.0),
            exaggeration_iters: 250,
            learning_rate: T::lit(200.0),
            momentum_initial: T::lit(0.5),
            momentum_final: T::lit(0.8),
            momentum_switch_iter: 250,
            seed: 0,
            init: Initialization::RandomGaussian,
        }
    }
}

impl<T: Scalar> ProjectionConfig<T> {
    /// Largest admissible perplexity for `n` points.
    pub fn max_perplexity(n: usize) -> f64 {
        n.saturating_sub(1) as f64 / 3.0
    }

    pub fn validate(&self, n: usize) -> Result<(), ProjectionError> {
        let bad = |m: String| Err(ProjectionError::InvalidConfig(m));
        let perplexity = self.perplexity.to_f64_lossy();
        if !(perplexity > 0.0) || !perplexity.is_finite() {
            return bad(format!("perplexity must be positive, got {perplexity}"));
        }
        let max = Self::max_perplexity(n);
        if perplexity > max {
            return bad(format!(
                "perplexity {perplexity} exceeds (n - 1) / 3 = {max} for n = {n}"
            ));
        }
        if self.num_iterations == 0 {
            return bad("num_iterations must be positive".into());
        }
        if !(self.early_exaggeration_factor >= T::one()) {
            return bad("early_exaggeration_factor must be at least 1".into());
        }
        if self.exaggeration_iters > self.num_iterations {
            return bad("exaggeration_iters exceeds num_iterations".into());
        }
        if !(self.learning_rate > T::zero()) || !self.learning_rate.is_finite() {
            return bad("learning_rate must be positive".into());
        }
        for (name, m) in [
            ("momentum_initial", self.momentum_initial),
            ("momentum_final", self.momentum_final),
        ] {
            if !(m >= T::zero() && m < T::one()) {
                return bad(format!("{name} must lie in [0, 1)"));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct KlSample<T = f64> {
    /// Number of completed iterations when the sample was taken.
    pub iteration: usize,
    pub kl: T,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct ProjectionDiagnostics<T = f64> {
    /// Rows whose bandwidth search did not reach the tolerance.
    pub uncalibrated_rows: Vec<usize>,
    /// KL (against the unexaggerated affinities) when exaggeration ended.
    pub kl_at_exaggeration_end: Option<T>,
    pub final_kl: T,
    /// True when the run is bit-reproducible for its seed.
    pub deterministic: bool,
    pub scalar: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct ProjectionResult<T = f64> {
    /// `n x 2`, rows in input order.
    pub coordinates: Array2<T>,
    pub kl_trace: Vec<KlSample<T>>,
    pub config_echo: ProjectionConfig<T>,
    pub diagnostics: ProjectionDiagnostics<T>,
}

/// Snapshot handed to a progress observer after each sampled iteration.
#[derive(Debug, Clone, Copy)]
pub struct Progress<T> {
    pub iteration: usize,
    pub total: usize,
    pub kl: T,
}

/// Project `embeddings` (`n x D`) to two dimensions.
pub fn run_projection<T: Scalar>(
    embeddings: ArrayView2<T>,
    config: &ProjectionConfig<T>,
) -> Result<ProjectionResult<T>, ProjectionError> {
    Projector::new(config.clone()).run(embeddings)
}

/// Configurable projection run: custom start layout and progress reporting.
pub struct Projector<'a, T> {
    config: ProjectionConfig<T>,
    initial: Option<Array2<T>>,
    observer: Option<Box<dyn FnMut(Progress<T>) + Send + 'a>>,
}

impl<'a, T: Scalar> Projector<'a, T> {
    pub fn new(config: ProjectionConfig<T>) -> Self {
        Self {
            config,
            initial: None,
            observer: None,
        }
    }

    /// Start from `layout` instead of the configured initialization.
    pub fn with_initial_layout(mut self, layout: Array2<T>) -> Self {
        self.initial = Some(layout);
        self
    }

    pub fn on_progress(mut self, observer: impl FnMut(Progress<T>) + Send + 'a) -> Self {
        self.observer = Some(Box::new(observer));
        self
    }

    pub fn run(mut self, embeddings: ArrayView2<T>) -> Result<ProjectionResult<T>, ProjectionError> {
        let n = embeddings.nrows();
        self.config.validate(n)?;
        let affinities = compute_affinities(embeddings, self.config.perplexity)?;
        let initial = match self.initial.take() {
            Some(layout) => {
                if layout.dim() != (n, 2) {
                    return Err(ProjectionError::ShapeMismatch(format!(
                        "initial layout is {:?}, expected ({n}, 2)",
                        layout.dim()
                    )));
                }
                layout
            }
            None => match self.config.init {
                Initialization::RandomGaussian => init::random_gaussian(n, self.config.seed),
                Initialization::Pca => init::pca(embeddings, self.config.seed),
            },
        };
        self.optimize(&affinities, initial)
    }

    fn optimize(
        &mut self,
        affinities: &Affinities<T>,
        mut y: Array2<T>,
    ) -> Result<ProjectionResult<T>, ProjectionError> {
        let cfg = &self.config;
        let n = y.nrows();
        let p = affinities.joint.view();
        let mut kernel = Kernel::new(n);
        let mut grad = Array2::zeros((n, 2));
        let mut velocity: Array2<T> = Array2::zeros((n, 2));
        let mut trace = Vec::with_capacity(cfg.num_iterations / KL_SAMPLE_INTERVAL + 2);
        let mut kl_at_exaggeration_end = None;

        for iter in 0..cfg.num_iterations {
            let scale = if iter < cfg.exaggeration_iters {
                cfg.early_exaggeration_factor
            } else {
                T::one()
            };
            let momentum = if iter < cfg.momentum_switch_iter {
                cfg.momentum_initial
            } else {
                cfg.momentum_final
            };

            kernel.update(y.view());
            kernel.gradient_into(p, scale, y.view(), &mut grad);
            velocity.zip_mut_with(&grad, |v, &g| *v = momentum * *v - cfg.learning_rate * g);
            y.zip_mut_with(&velocity, |a, &v| *a = *a + v);

            let completed = iter + 1;
            let at_exaggeration_end = completed == cfg.exaggeration_iters;
            if completed % KL_SAMPLE_INTERVAL == 0
                || at_exaggeration_end
                || completed == cfg.num_iterations
            {
                kernel.update(y.view());
                let kl = kernel.kl(p);
                if !kl.is_finite() || y.iter().any(|v| !v.is_finite()) {
                    return Err(ProjectionError::NonFiniteObjective { iteration: completed });
                }
                trace.push(KlSample {
                    iteration: completed,
                    kl,
                });
                if at_exaggeration_end {
                    kl_at_exaggeration_end = Some(kl);
                }
                if let Some(observer) = self.observer.as_mut() {
                    observer(Progress {
                        iteration: completed,
                        total: cfg.num_iterations,
                        kl,
                    });
                }
            }
        }

        let final_kl = trace.last().map(|s| s.kl).unwrap_or_else(T::nan);
        Ok(ProjectionResult {
            coordinates: y,
            kl_trace: trace,
            config_echo: cfg.clone(),
            diagnostics: ProjectionDiagnostics {
                uncalibrated_rows: affinities.uncalibrated_rows(),
                kl_at_exaggeration_end,
                final_kl,
                deterministic: true,
                scalar: T::NAME.to_string(),
            },
        })
    }
}
