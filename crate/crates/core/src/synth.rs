//! Deterministic synthetic datasets with planted confusions.

use std::f64::consts::PI;
use std::str::FromStr;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::dataset::{ClassIndex, Dataset, DatasetError, DatasetIdentity, Instance};
use crate::scalar::Scalar;

pub const CIFAR10_CLASSES: [&str; 10] = [
    "airplane",
    "automobile",
    "bird",
    "cat",
    "deer",
    "dog",
    "frog",
    "horse",
    "ship",
    "truck",
];

/// d3 "category10" palette.
pub const CATEGORY10: [&str; 10] = [
    "#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f",
    "#bcbd22", "#17becf",
];

#[derive(Debug, thiserror::Error)]
pub enum SynthesisError {
    #[error("invalid synthesis parameters: {0}")]
    InvalidParameters(String),
    #[error("invalid confusion pair {from}->{to}: {reason}")]
    InvalidConfusion {
        from: ClassIndex,
        to: ClassIndex,
        reason: String,
    },
    #[error("cannot parse confusion spec {0:?}; expected from:to:fraction")]
    UnparsableConfusion(String),
    #[error(transparent)]
    Dataset(#[from] DatasetError),
}

/// A planted confusion: `fraction` of class `from` is embedded near class
/// `to` and predicted as `to`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Confusion {
    pub from: ClassIndex,
    pub to: ClassIndex,
    pub fraction: f64,
}

impl Confusion {
    /// Exact number of instances moved for a class of `per_class` members.
    pub fn count(&self, per_class: usize) -> usize {
        (self.fraction * per_class as f64).round() as usize
    }

    /// Parse `from:to:fraction`, where classes are indices or names from `class_names`.
    pub fn parse_with_names(s: &str, class_names: &[String]) -> Result<Self, SynthesisError> {
        let unparsable = || SynthesisError::UnparsableConfusion(s.to_string());
        let mut parts = s.split(':');
        let (Some(a), Some(b), Some(f), None) = (parts.next(), parts.next(), parts.next(), parts.next())
        else {
            return Err(unparsable());
        };
        let class = |token: &str| {
            token
                .parse::<usize>()
                .ok()
                .or_else(|| class_names.iter().position(|n| n == token))
                .ok_or_else(unparsable)
        };
        Ok(Self {
            from: class(a)?,
            to: class(b)?,
            fraction: f.parse().map_err(|_| unparsable())?,
        })
    }
}

impl FromStr for Confusion {
    type Err = SynthesisError;

    /// Index-only form; use [`Confusion::parse_with_names`] for class names.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::parse_with_names(s, &[])
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthesisSpec {
    pub num_classes: usize,
    pub per_class: usize,
    pub dimensionality: usize,
    pub confusions: Vec<Confusion>,
    pub seed: u64,
    pub dataset_name: Option<String>,
    pub model_name: Option<String>,
}

impl SynthesisSpec {
    pub fn new(num_classes: usize, per_class: usize, dimensionality: usize, seed: u64) -> Self {
        Self {
            num_classes,
            per_class,
            dimensionality,
            confusions: Vec::new(),
            seed,
            dataset_name: None,
            model_name: None,
        }
    }

    pub fn with_confusion(mut self, from: ClassIndex, to: ClassIndex, fraction: f64) -> Self {
        self.confusions.push(Confusion { from, to, fraction });
        self
    }
}

/// Class names used for `num_classes` classes: CIFAR-10 names for ten, generic otherwise.
pub fn default_class_names(num_classes: usize) -> Vec<String> {
    if num_classes == CIFAR10_CLASSES.len() {
        CIFAR10_CLASSES.iter().map(|s| s.to_string()).collect()
    } else {
        (0..num_classes).map(|c| format!("class_{c}")).collect()
    }
}

pub fn default_class_colors(num_classes: usize) -> Vec<String> {
    if num_classes <= CATEGORY10.len() {
        return CATEGORY10[..num_classes].iter().map(|s| s.to_string()).collect();
    }
    (0..num_classes)
        .map(|c| hsl_hex(360.0 * c as f64 / num_classes as f64, 0.65, 0.5))
        .collect()
}

fn hsl_hex(hue: f64, sat: f64, light: f64) -> String {
    let c = (1.0 - (2.0 * light - 1.0).abs()) * sat;
    let h = hue / 60.0;
    let x = c * (1.0 - (h % 2.0 - 1.0).abs());
    let (r, g, b) = match h as u32 {
        0 => (c, x, 0.0),
        1 => (x, c, 0.0),
        2 => (0.0, c, x),
        3 => (0.0, x, c),
        4 => (x, 0.0, c),
        _ => (c, 0.0, x),
    };
    let m = light - c / 2.0;
    let to_byte = |v: f64| ((v + m) * 255.0).round().clamp(0.0, 255.0) as u8;
    format!("#{:02x}{:02x}{:02x}", to_byte(r), to_byte(g), to_byte(b))
}

/// Class means: evenly spaced on a circle in the first two coordinates, with
/// an extra offset along one further axis per class when `dimensionality > 2`.
fn class_means(num_classes: usize, dimensionality: usize) -> Vec<Vec<f64>> {
    let radius = f64::max(10.0, 6.0 / (PI / num_classes as f64).sin());
    (0..num_classes)
        .map(|c| {
            let angle = 2.0 * PI * c as f64 / num_classes as f64;
            let mut mean = vec![0.0; dimensionality];
            mean[0] = radius * angle.cos();
            mean[1] = radius * angle.sin();
            if dimensionality > 2 {
                mean[2 + c % (dimensionality - 2)] += radius;
            }
            mean
        })
        .collect()
}

fn validate(spec: &SynthesisSpec) -> Result<(), SynthesisError> {
    let bad = |m: &str| Err(SynthesisError::InvalidParameters(m.to_string()));
    if spec.num_classes < 2 {
        return bad("num_classes must be at least 2");
    }
    if spec.per_class < 1 {
        return bad("per_class must be at least 1");
    }
    if spec.dimensionality < 2 {
        return bad("dimensionality must be at least 2");
    }
    let mut moved = vec![0usize; spec.num_classes];
    for c in &spec.confusions {
        let invalid = |reason: &str| {
            Err(SynthesisError::InvalidConfusion {
                from: c.from,
                to: c.to,
                reason: reason.to_string(),
            })
        };
        if c.from >= spec.num_classes || c.to >= spec.num_classes {
            return invalid("class index out of range");
        }
        if c.from == c.to {
            return invalid("a class cannot be confused with itself");
        }
        if !(0.0..=1.0).contains(&c.fraction) {
            return invalid("fraction outside [0, 1]");
        }
        moved[c.from] += c.count(spec.per_class);
        if moved[c.from] > spec.per_class {
            return invalid("confusions exceed the class size");
        }
    }
    Ok(())
}

/// Generate class-conditional Gaussian embeddings with planted confusions.
///
/// Ids run class-major: class `c` owns ids `c * per_class .. (c + 1) * per_class`.
/// Within a class the confused instances come first, in the order the
/// confusions were listed. Each embedding coordinate is its mean plus
/// unit-variance noise. Output is a pure function of `spec`.
pub fn synthesize_dataset<T: Scalar>(spec: &SynthesisSpec) -> Result<Dataset<T>, SynthesisError> {
    validate(spec)?;
    let means = class_means(spec.num_classes, spec.dimensionality);
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut instances = Vec::with_capacity(spec.num_classes * spec.per_class);

    for class in 0..spec.num_classes {
        let mut predicted = Vec::with_capacity(spec.per_class);
        for c in spec.confusions.iter().filter(|c| c.from == class) {
            predicted.extend(std::iter::repeat_n(c.to, c.count(spec.per_class)));
        }
        predicted.resize(spec.per_class, class);

        for (j, &pred) in predicted.iter().enumerate() {
            let center = &means[pred];
            let embedding = center
                .iter()
                .map(|&m| {
                    let noise: f64 = StandardNormal.sample(&mut rng);
                    T::lit(m + noise)
                })
                .collect();
            instances.push(Instance {
                id: (class * spec.per_class + j) as u64,
                embedding,
                true_label: class,
                predicted_label: pred,
                image_ref: None,
                projected: None,
            });
        }
    }

    let identity = DatasetIdentity {
        dataset_name: spec.dataset_name.clone().unwrap_or_else(|| {
            format!(
                "synthetic-{}x{}-d{}-seed{}",
                spec.num_classes, spec.per_class, spec.dimensionality, spec.seed
            )
        }),
        model_name: spec
            .model_name
            .clone()
            .unwrap_or_else(|| "synthetic-classifier".to_string()),
        class_names: default_class_names(spec.num_classes),
        class_colors: default_class_colors(spec.num_classes),
        dimensionality: spec.dimensionality,
    };
    Ok(Dataset::assemble(identity, instances)?)
}
