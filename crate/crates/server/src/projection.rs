//! Projection interchange file and the background projection job.

use std::collections::HashMap;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex};

use chatpoints_core::tsne::{KlSample, ProjectionDiagnostics};
use chatpoints_core::{Dataset, InstanceId, ProjectionConfig, ProjectionError, ProjectionResult, Projector};
use ndarray::Array2;
use serde::{Deserialize, Serialize};

/// Cached layout inside a served data directory.
pub const PROJECTION_CACHE_FILE: &str = "projection.json";

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Point {
    pub id: InstanceId,
    pub x: f64,
    pub y: f64,
}

/// Written by `chatpoints project` and used as the server's cache.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProjectionFile {
    pub points: Vec<Point>,
    #[serde(default)]
    pub kl_trace: Vec<KlSample>,
    /// Absent for layouts that came with the instance file.
    #[serde(default)]
    pub config: Option<ProjectionConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub diagnostics: Option<ProjectionDiagnostics>,
}

impl ProjectionFile {
    pub fn from_result(dataset: &Dataset, result: &ProjectionResult) -> Self {
        Self {
            points: points(dataset, &result.coordinates),
            kl_trace: result.kl_trace.clone(),
            config: Some(result.config_echo.clone()),
            diagnostics: Some(result.diagnostics.clone()),
        }
    }

    pub fn from_layout(dataset: &Dataset, layout: &Array2<f64>) -> Self {
        Self {
            points: points(dataset, layout),
            kl_trace: Vec::new(),
            config: None,
            diagnostics: None,
        }
    }

    /// Layout rows in dataset order; every instance must appear exactly once.
    pub fn layout_for(&self, dataset: &Dataset) -> Result<Array2<f64>, String> {
        if self.points.len() != dataset.len() {
            return Err(format!(
                "{} points for {} instances",
                self.points.len(),
                dataset.len()
            ));
        }
        let by_id: HashMap<InstanceId, &Point> = self.points.iter().map(|p| (p.id, p)).collect();
        let mut out = Array2::zeros((dataset.len(), 2));
        for (row, inst) in dataset.instances().iter().enumerate() {
            let p = by_id
                .get(&inst.id)
                .ok_or_else(|| format!("no point for instance {}", inst.id))?;
            if !(p.x.is_finite() && p.y.is_finite()) {
                return Err(format!("non-finite point for instance {}", inst.id));
            }
            out[[row, 0]] = p.x;
            out[[row, 1]] = p.y;
        }
        Ok(out)
    }

    pub fn read(path: &Path) -> Result<Self, String> {
        let text = std::fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
        serde_json::from_str(&text).map_err(|e| format!("{}: {e}", path.display()))
    }

    /// Write via a temporary file in the target directory and rename.
    pub fn write(&self, path: &Path) -> std::io::Result<()> {
        let dir = match path.parent() {
            Some(d) if !d.as_os_str().is_empty() => d,
            _ => Path::new("."),
        };
        let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
        tmp.write_all(&serde_json::to_vec(self).expect("projection serializes"))?;
        tmp.as_file().sync_all()?;
        tmp.persist(path).map_err(|e| e.error)?;
        Ok(())
    }
}

fn points(dataset: &Dataset, layout: &Array2<f64>) -> Vec<Point> {
    dataset
        .instances()
        .iter()
        .zip(layout.rows())
        .map(|(inst, row)| Point {
            id: inst.id,
            x: row[0],
            y: row[1],
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LayoutSource {
    /// Computed by this server process.
    Computed,
    /// Loaded from the data directory's projection cache.
    Cache,
    /// Carried by the instance file's `projected` fields.
    Stored,
}

#[derive(Debug)]
pub struct Layout {
    pub coordinates: Array2<f64>,
    pub file: ProjectionFile,
    pub source: LayoutSource,
}

#[derive(Debug, Clone)]
pub enum JobStatus {
    Idle,
    Running {
        config: ProjectionConfig,
        iteration: usize,
        total: usize,
    },
    Done,
    Failed {
        config: ProjectionConfig,
        error: String,
    },
}

#[derive(Debug)]
struct Slot {
    status: JobStatus,
    current: Option<Arc<Layout>>,
}

/// One projection job at a time; the latest finished layout stays readable
/// while a new one runs.
#[derive(Debug, Clone)]
pub struct ProjectionJob {
    dataset: Arc<Dataset>,
    cache_path: PathBuf,
    slot: Arc<Mutex<Slot>>,
}

#[derive(Debug, PartialEq)]
pub enum StartError {
    Busy,
    Invalid(ProjectionError),
}

fn lock<T>(m: &Mutex<T>) -> std::sync::MutexGuard<'_, T> {
    m.lock().unwrap_or_else(|e| e.into_inner())
}

impl ProjectionJob {
    /// Picks up a cached layout from `data_dir`, else one stored with the instances.
    pub fn open(dataset: Arc<Dataset>, data_dir: &Path) -> Self {
        let cache_path = data_dir.join(PROJECTION_CACHE_FILE);
        let mut current = None;
        if cache_path.exists() {
            match ProjectionFile::read(&cache_path).and_then(|f| {
                let coordinates = f.layout_for(&dataset)?;
                Ok(Layout {
                    coordinates,
                    file: f,
                    source: LayoutSource::Cache,
                })
            }) {
                Ok(layout) => current = Some(Arc::new(layout)),
                Err(e) => tracing::warn!(error = %e, "ignoring unusable projection cache"),
            }
        }
        if current.is_none() {
            if let Some(coordinates) = dataset.stored_layout() {
                current = Some(Arc::new(Layout {
                    file: ProjectionFile::from_layout(&dataset, &coordinates),
                    coordinates,
                    source: LayoutSource::Stored,
                }));
            }
        }
        let status = if current.is_some() {
            JobStatus::Done
        } else {
            JobStatus::Idle
        };
        Self {
            dataset,
            cache_path,
            slot: Arc::new(Mutex::new(Slot { status, current })),
        }
    }

    pub fn status(&self) -> JobStatus {
        lock(&self.slot).status.clone()
    }

    pub fn layout(&self) -> Option<Arc<Layout>> {
        lock(&self.slot).current.clone()
    }

    /// Default config with perplexity lowered to what the dataset admits.
    pub fn default_config(&self) -> ProjectionConfig {
        let max = ProjectionConfig::<f64>::max_perplexity(self.dataset.len());
        let mut config = ProjectionConfig::<f64>::default();
        config.perplexity = config.perplexity.min(max);
        config
    }

    /// Validate and launch on the blocking pool. Returns a handle that
    /// resolves when the run ends.
    pub fn start(&self, config: ProjectionConfig) -> Result<tokio::task::JoinHandle<()>, StartError> {
        config
            .validate(self.dataset.len())
            .map_err(StartError::Invalid)?;
        {
            let mut slot = lock(&self.slot);
            if matches!(slot.status, JobStatus::Running { .. }) {
                return Err(StartError::Busy);
            }
            slot.status = JobStatus::Running {
                config: config.clone(),
                iteration: 0,
                total: config.num_iterations,
            };
        }
        let job = self.clone();
        Ok(tokio::task::spawn_blocking(move || job.run(config)))
    }

    fn run(&self, config: ProjectionConfig) {
        let started = std::time::Instant::now();
        let embeddings = self.dataset.embedding_matrix();
        let slot = self.slot.clone();
        let result = Projector::new(config.clone())
            .on_progress(move |p| {
                if let JobStatus::Running { iteration, .. } = &mut lock(&slot).status {
                    *iteration = p.iteration;
                }
            })
            .run(embeddings.view());
        let mut slot = lock(&self.slot);
        match result {
            Ok(result) => {
                let file = ProjectionFile::from_result(&self.dataset, &result);
                if let Err(e) = file.write(&self.cache_path) {
                    tracing::warn!(error = %e, "could not write projection cache");
                }
                tracing::info!(
                    elapsed_ms = started.elapsed().as_millis() as u64,
                    final_kl = result.diagnostics.final_kl,
                    "projection finished"
                );
                slot.current = Some(Arc::new(Layout {
                    coordinates: result.coordinates,
                    file,
                    source: LayoutSource::Computed,
                }));
                slot.status = JobStatus::Done;
            }
            Err(e) => {
                tracing::warn!(error = %e, "projection failed");
                slot.status = JobStatus::Failed {
                    config,
                    error: e.to_string(),
                };
            }
        }
    }
}
