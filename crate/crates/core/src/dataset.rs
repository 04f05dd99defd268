//! Labeled embedding store: manifest + JSON-lines instances.
//!
//! A dataset on disk is a directory holding `manifest.json` and the instance
//! file it names (by default `instances.jsonl`, one instance object per
//! line). Aggregate statistics declared in the manifest are recomputed from
//! the instances on every load and must agree with what was declared.

use std::collections::HashMap;
use std::fs::{self, File};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::scalar::Scalar;

pub type InstanceId = u64;
pub type ClassIndex = usize;

pub const MANIFEST_FILE: &str = "manifest.json";
pub const DEFAULT_INSTANCES_FILE: &str = "instances.jsonl";

/// Accuracy agreement required between declared and recomputed statistics.
pub const ACCURACY_TOLERANCE: f64 = 1e-9;

#[derive(Debug, thiserror::Error)]
pub enum DatasetError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("cannot parse {path}{}: {source}", line.map(|l| format!(" line {l}")).unwrap_or_default())]
    Parse {
        path: PathBuf,
        line: Option<usize>,
        #[source]
        source: serde_json::Error,
    },
    #[error("instance {id}: embedding has length {found}, manifest declares {expected}")]
    DimensionMismatch {
        id: InstanceId,
        expected: usize,
        found: usize,
    },
    #[error("instance {id}: embedding contains a non-finite value")]
    NonFiniteEmbedding { id: InstanceId },
    #[error("instance {id}: {field} {label} out of range for {num_classes} classes")]
    LabelOutOfRange {
        id: InstanceId,
        field: &'static str,
        label: ClassIndex,
        num_classes: usize,
    },
    #[error("duplicate instance id {0}")]
    DuplicateId(InstanceId),
    #[error("manifest declares {field} = {declared}, instances imply {recomputed}")]
    StatisticMismatch {
        field: String,
        declared: String,
        recomputed: String,
    },
    #[error("invalid manifest: {0}")]
    InvalidManifest(String),
    #[error("unknown instance id {0}")]
    UnknownId(InstanceId),
}

/// One embedded, labeled and predicted data point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct Instance<T = f64> {
    pub id: InstanceId,
    pub embedding: Vec<T>,
    pub true_label: ClassIndex,
    pub predicted_label: ClassIndex,
    /// Relative image path or inline base64 payload.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub image_ref: Option<String>,
    /// Precomputed 2-D layout position, if the file carries one.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub projected: Option<[T; 2]>,
}

impl<T> Instance<T> {
    pub fn is_correct(&self) -> bool {
        self.true_label == self.predicted_label
    }
}

/// Dataset and model identity plus aggregate statistics (the overview payload).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub dataset_name: String,
    pub model_name: String,
    pub num_classes: usize,
    pub class_names: Vec<String>,
    pub class_colors: Vec<String>,
    pub dimensionality: usize,
    pub num_instances: usize,
    pub overall_accuracy: f64,
    /// `null` for a class with zero support.
    pub per_class_accuracy: Vec<Option<f64>>,
    pub class_distribution: Vec<usize>,
    #[serde(default = "default_instances_file")]
    pub instances_file: String,
}

fn default_instances_file() -> String {
    DEFAULT_INSTANCES_FILE.to_string()
}

impl DatasetManifest {
    pub fn class_name(&self, class: ClassIndex) -> &str {
        self.class_names.get(class).map(String::as_str).unwrap_or("?")
    }

    pub fn class_index(&self, name: &str) -> Option<ClassIndex> {
        self.class_names.iter().position(|n| n == name)
    }
}

/// Statistics derived from the instance list alone.
#[derive(Debug, Clone, PartialEq)]
pub struct DerivedStatistics {
    pub num_instances: usize,
    pub correct: usize,
    pub overall_accuracy: f64,
    pub class_distribution: Vec<usize>,
    pub per_class_correct: Vec<usize>,
    pub per_class_accuracy: Vec<Option<f64>>,
}

impl DerivedStatistics {
    pub fn compute<T>(num_classes: usize, instances: &[Instance<T>]) -> Self {
        let mut class_distribution = vec![0usize; num_classes];
        let mut per_class_correct = vec![0usize; num_classes];
        let mut correct = 0;
        for inst in instances {
            class_distribution[inst.true_label] += 1;
            if inst.is_correct() {
                correct += 1;
                per_class_correct[inst.true_label] += 1;
            }
        }
        let overall_accuracy = if instances.is_empty() {
            0.0
        } else {
            correct as f64 / instances.len() as f64
        };
        let per_class_accuracy = class_distribution
            .iter()
            .zip(&per_class_correct)
            .map(|(&support, &ok)| (support > 0).then(|| ok as f64 / support as f64))
            .collect();
        Self {
            num_instances: instances.len(),
            correct,
            overall_accuracy,
            class_distribution,
            per_class_correct,
            per_class_accuracy,
        }
    }
}

/// Identity and presentation metadata; statistics are filled in from instances.
#[derive(Debug, Clone, PartialEq)]
pub struct DatasetIdentity {
    pub dataset_name: String,
    pub model_name: String,
    pub class_names: Vec<String>,
    pub class_colors: Vec<String>,
    pub dimensionality: usize,
}

/// Immutable in-memory dataset.
#[derive(Debug, Clone)]
pub struct Dataset<T = f64> {
    manifest: DatasetManifest,
    instances: Vec<Instance<T>>,
    index: HashMap<InstanceId, usize>,
}

impl<T: Scalar> Dataset<T> {
    /// Validate `instances` against a declared manifest.
    pub fn from_parts(
        manifest: DatasetManifest,
        instances: Vec<Instance<T>>,
    ) -> Result<Self, DatasetError> {
        validate_manifest_shape(&manifest)?;
        let index = validate_instances(manifest.num_classes, manifest.dimensionality, &instances)?;
        let stats = DerivedStatistics::compute(manifest.num_classes, &instances);
        check_declared(&manifest, &stats)?;
        Ok(Self {
            manifest,
            instances,
            index,
        })
    }

    /// Build a dataset whose manifest statistics are computed from `instances`.
    pub fn assemble(
        identity: DatasetIdentity,
        instances: Vec<Instance<T>>,
    ) -> Result<Self, DatasetError> {
        let num_classes = identity.class_names.len();
        let stats = DerivedStatistics::compute_checked(num_classes, &instances)?;
        let manifest = DatasetManifest {
            dataset_name: identity.dataset_name,
            model_name: identity.model_name,
            num_classes,
            class_names: identity.class_names,
            class_colors: identity.class_colors,
            dimensionality: identity.dimensionality,
            num_instances: stats.num_instances,
            overall_accuracy: stats.overall_accuracy,
            per_class_accuracy: stats.per_class_accuracy,
            class_distribution: stats.class_distribution,
            instances_file: default_instances_file(),
        };
        Self::from_parts(manifest, instances)
    }

    pub fn manifest(&self) -> &DatasetManifest {
        &self.manifest
    }

    pub fn instances(&self) -> &[Instance<T>] {
        &self.instances
    }

    pub fn len(&self) -> usize {
        self.instances.len()
    }

    pub fn is_empty(&self) -> bool {
        self.instances.is_empty()
    }

    /// Row position of `id` in [`Dataset::instances`] order.
    pub fn position(&self, id: InstanceId) -> Result<usize, DatasetError> {
        self.index.get(&id).copied().ok_or(DatasetError::UnknownId(id))
    }

    pub fn get_instance(&self, id: InstanceId) -> Result<&Instance<T>, DatasetError> {
        Ok(&self.instances[self.position(id)?])
    }

    /// Instances in request order.
    pub fn get_instances(&self, ids: &[InstanceId]) -> Result<Vec<&Instance<T>>, DatasetError> {
        ids.iter().map(|&id| self.get_instance(id)).collect()
    }

    /// Embeddings as an `n x D` matrix in instance order.
    pub fn embedding_matrix(&self) -> ndarray::Array2<T> {
        let d = self.manifest.dimensionality;
        let mut out = ndarray::Array2::zeros((self.instances.len(), d));
        for (mut row, inst) in out.rows_mut().into_iter().zip(&self.instances) {
            row.assign(&ndarray::ArrayView1::from(&inst.embedding[..]));
        }
        out
    }

    /// Precomputed layout carried by the instance file, if every instance has one.
    pub fn stored_layout(&self) -> Option<ndarray::Array2<T>> {
        let mut out = ndarray::Array2::zeros((self.instances.len(), 2));
        for (i, inst) in self.instances.iter().enumerate() {
            let [x, y] = inst.projected?;
            out[[i, 0]] = x;
            out[[i, 1]] = y;
        }
        (!self.instances.is_empty()).then_some(out)
    }

    pub fn statistics(&self) -> DerivedStatistics {
        DerivedStatistics::compute(self.manifest.num_classes, &self.instances)
    }
}

impl DerivedStatistics {
    fn compute_checked<T: Scalar>(
        num_classes: usize,
        instances: &[Instance<T>],
    ) -> Result<Self, DatasetError> {
        for inst in instances {
            check_labels(inst, num_classes)?;
        }
        Ok(Self::compute(num_classes, instances))
    }
}

fn check_labels<T>(inst: &Instance<T>, num_classes: usize) -> Result<(), DatasetError> {
    for (field, label) in [
        ("true_label", inst.true_label),
        ("predicted_label", inst.predicted_label),
    ] {
        if label >= num_classes {
            return Err(DatasetError::LabelOutOfRange {
                id: inst.id,
                field,
                label,
                num_classes,
            });
        }
    }
    Ok(())
}

fn is_hex_color(s: &str) -> bool {
    let Some(digits) = s.strip_prefix('#') else {
        return false;
    };
    matches!(digits.len(), 3 | 6) && digits.chars().all(|c| c.is_ascii_hexdigit())
}

fn validate_manifest_shape(m: &DatasetManifest) -> Result<(), DatasetError> {
    let bad = |msg: String| Err(DatasetError::InvalidManifest(msg));
    if m.num_classes == 0 {
        return bad("num_classes must be positive".into());
    }
    if m.dimensionality == 0 {
        return bad("dimensionality must be positive".into());
    }
    if m.num_instances == 0 {
        return bad("num_instances must be positive".into());
    }
    for (name, len) in [
        ("class_names", m.class_names.len()),
        ("class_colors", m.class_colors.len()),
        ("per_class_accuracy", m.per_class_accuracy.len()),
        ("class_distribution", m.class_distribution.len()),
    ] {
        if len != m.num_classes {
            return bad(format!(
                "{name} has {len} entries, expected num_classes = {}",
                m.num_classes
            ));
        }
    }
    if let Some(c) = m.class_colors.iter().find(|c| !is_hex_color(c)) {
        return bad(format!("class color {c:?} is not a hex color"));
    }
    if !(0.0..=1.0).contains(&m.overall_accuracy) {
        return bad("overall_accuracy outside [0, 1]".into());
    }
    if m
        .per_class_accuracy
        .iter()
        .flatten()
        .any(|a| !(0.0..=1.0).contains(a))
    {
        return bad("per_class_accuracy entry outside [0, 1]".into());
    }
    Ok(())
}

fn validate_instances<T: Scalar>(
    num_classes: usize,
    dimensionality: usize,
    instances: &[Instance<T>],
) -> Result<HashMap<InstanceId, usize>, DatasetError> {
    let mut index = HashMap::with_capacity(instances.len());
    for (pos, inst) in instances.iter().enumerate() {
        if index.insert(inst.id, pos).is_some() {
            return Err(DatasetError::DuplicateId(inst.id));
        }
        if inst.embedding.len() != dimensionality {
            return Err(DatasetError::DimensionMismatch {
                id: inst.id,
                expected: dimensionality,
                found: inst.embedding.len(),
            });
        }
        if inst.embedding.iter().any(|v| !v.is_finite()) {
            return Err(DatasetError::NonFiniteEmbedding { id: inst.id });
        }
        check_labels(inst, num_classes)?;
    }
    Ok(index)
}

fn check_declared(m: &DatasetManifest, stats: &DerivedStatistics) -> Result<(), DatasetError> {
    let mismatch = |field: &str, declared: String, recomputed: String| {
        Err(DatasetError::StatisticMismatch {
            field: field.to_string(),
            declared,
            recomputed,
        })
    };
    if m.num_instances != stats.num_instances {
        return mismatch(
            "num_instances",
            m.num_instances.to_string(),
            stats.num_instances.to_string(),
        );
    }
    if m.class_distribution != stats.class_distribution {
        return mismatch(
            "class_distribution",
            format!("{:?}", m.class_distribution),
            format!("{:?}", stats.class_distribution),
        );
    }
    if (m.overall_accuracy - stats.overall_accuracy).abs() > ACCURACY_TOLERANCE {
        return mismatch(
            "overall_accuracy",
            m.overall_accuracy.to_string(),
            stats.overall_accuracy.to_string(),
        );
    }
    for (class, (declared, actual)) in m
        .per_class_accuracy
        .iter()
        .zip(&stats.per_class_accuracy)
        .enumerate()
    {
        let agrees = match (declared, actual) {
            (Some(a), Some(b)) => (a - b).abs() <= ACCURACY_TOLERANCE,
            (None, None) => true,
            _ => false,
        };
        if !agrees {
            return mismatch(
                &format!("per_class_accuracy[{class}]"),
                format!("{declared:?}"),
                format!("{actual:?}"),
            );
        }
    }
    Ok(())
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> DatasetError + '_ {
    move |source| DatasetError::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// Load and validate a dataset from its manifest path.
///
/// `manifest_path` may also name the dataset directory, in which case
/// `manifest.json` inside it is used.
pub fn load_dataset<T: Scalar>(manifest_path: &Path) -> Result<Dataset<T>, DatasetError> {
    let manifest_path = if manifest_path.is_dir() {
        manifest_path.join(MANIFEST_FILE)
    } else {
        manifest_path.to_path_buf()
    };
    let text = fs::read_to_string(&manifest_path).map_err(io_err(&manifest_path))?;
    let manifest: DatasetManifest =
        serde_json::from_str(&text).map_err(|source| DatasetError::Parse {
            path: manifest_path.clone(),
            line: None,
            source,
        })?;
    let base = manifest_path.parent().unwrap_or(Path::new("."));
    let instances_path = base.join(&manifest.instances_file);
    let instances = read_instances(&instances_path)?;
    Dataset::from_parts(manifest, instances)
}

fn read_instances<T: Scalar>(path: &Path) -> Result<Vec<Instance<T>>, DatasetError> {
    let file = File::open(path).map_err(io_err(path))?;
    let mut out = Vec::new();
    for (lineno, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(io_err(path))?;
        if line.trim().is_empty() {
            continue;
        }
        let inst = serde_json::from_str(&line).map_err(|source| DatasetError::Parse {
            path: path.to_path_buf(),
            line: Some(lineno + 1),
            source,
        })?;
        out.push(inst);
    }
    Ok(out)
}

/// Write `dataset` into `dir` as `manifest.json` plus its instance file.
/// Returns the manifest path.
pub fn write_dataset<T: Scalar>(dir: &Path, dataset: &Dataset<T>) -> Result<PathBuf, DatasetError> {
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    let manifest_path = dir.join(MANIFEST_FILE);
    let instances_path = dir.join(&dataset.manifest.instances_file);

    let mut w = BufWriter::new(File::create(&instances_path).map_err(io_err(&instances_path))?);
    for inst in &dataset.instances {
        let line = serde_json::to_string(inst).expect("instance serializes");
        writeln!(w, "{line}").map_err(io_err(&instances_path))?;
    }
    w.flush().map_err(io_err(&instances_path))?;

    let text = serde_json::to_string_pretty(&dataset.manifest).expect("manifest serializes");
    fs::write(&manifest_path, text + "\n").map_err(io_err(&manifest_path))?;
    Ok(manifest_path)
}
