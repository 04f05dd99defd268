//! Selection and whole-dataset statistics quoted by the personas.

use std::cmp::Ordering;
use std::collections::HashSet;

use ndarray::ArrayView2;
use serde::{Deserialize, Serialize};

use crate::dataset::{ClassIndex, Dataset, InstanceId};
use crate::scalar::Scalar;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum AnalyticsError {
    #[error("selection is empty")]
    EmptySelection,
    #[error("unknown instance id {0}")]
    UnknownId(InstanceId),
    #[error("instance id {0} selected more than once")]
    DuplicateId(InstanceId),
    #[error("k = {k} must satisfy 0 < k < {n}")]
    InvalidK { k: usize, n: usize },
    #[error("projection not yet computed")]
    ProjectionUnavailable,
    #[error("layout has {layout} rows but the dataset has {dataset} instances")]
    LayoutMismatch { layout: usize, dataset: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionPair {
    pub true_class: ClassIndex,
    pub predicted_class: ClassIndex,
    pub count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct SelectionStats<T = f64> {
    pub instance_ids: Vec<InstanceId>,
    pub size: usize,
    pub correct_count: usize,
    pub accuracy: f64,
    pub class_counts_true: Vec<usize>,
    pub class_counts_predicted: Vec<usize>,
    /// Misclassified (true, predicted) pairs, most frequent first; ties by
    /// ascending class indices.
    pub confusion_pairs: Vec<ConfusionPair>,
    /// Layout centroid, absent until a projection exists.
    pub centroid: Option<[T; 2]>,
}

impl<T> SelectionStats<T> {
    pub fn top_confusion(&self) -> Option<&ConfusionPair> {
        self.confusion_pairs.first()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassSummary {
    pub class: ClassIndex,
    pub name: String,
    pub support: usize,
    pub correct: usize,
    /// `None` when the class has no instances.
    pub accuracy: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassReport {
    pub classes: Vec<ClassSummary>,
    /// `confusion[t][p]` counts instances of true class `t` predicted as `p`.
    pub confusion: Vec<Vec<usize>>,
    pub total: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NeighborSpace {
    #[default]
    Layout2d,
    EmbeddingD,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct Neighbor<T = f64> {
    pub id: InstanceId,
    pub distance: T,
}

/// Read-only statistics over a dataset and (optionally) its current layout.
#[derive(Debug, Clone, Copy)]
pub struct Analytics<'a, T> {
    dataset: &'a Dataset<T>,
    layout: Option<ArrayView2<'a, T>>,
}

impl<'a, T: Scalar> Analytics<'a, T> {
    /// `layout` rows follow the dataset's instance order.
    pub fn new(
        dataset: &'a Dataset<T>,
        layout: Option<ArrayView2<'a, T>>,
    ) -> Result<Self, AnalyticsError> {
        if let Some(l) = &layout {
            if l.nrows() != dataset.len() || l.ncols() != 2 {
                return Err(AnalyticsError::LayoutMismatch {
                    layout: l.nrows(),
                    dataset: dataset.len(),
                });
            }
        }
        Ok(Self { dataset, layout })
    }

    pub fn dataset(&self) -> &'a Dataset<T> {
        self.dataset
    }

    pub fn has_layout(&self) -> bool {
        self.layout.is_some()
    }

    /// Layout position of `id`, if a layout is present.
    pub fn position_of(&self, id: InstanceId) -> Result<Option<[T; 2]>, AnalyticsError> {
        let row = self.row(id)?;
        Ok(self.layout.map(|l| [l[[row, 0]], l[[row, 1]]]))
    }

    fn row(&self, id: InstanceId) -> Result<usize, AnalyticsError> {
        self.dataset
            .position(id)
            .map_err(|_| AnalyticsError::UnknownId(id))
    }

    pub fn selection_stats(&self, ids: &[InstanceId]) -> Result<SelectionStats<T>, AnalyticsError> {
        if ids.is_empty() {
            return Err(AnalyticsError::EmptySelection);
        }
        let k = self.dataset.manifest().num_classes;
        let mut seen = HashSet::with_capacity(ids.len());
        let mut rows = Vec::with_capacity(ids.len());
        for &id in ids {
            let row = self.row(id)?;
            if !seen.insert(id) {
                return Err(AnalyticsError::DuplicateId(id));
            }
            rows.push(row);
        }

        let instances = self.dataset.instances();
        let mut class_counts_true = vec![0; k];
        let mut class_counts_predicted = vec![0; k];
        let mut pair_counts = vec![vec![0usize; k]; k];
        let mut correct_count = 0;
        for &row in &rows {
            let inst = &instances[row];
            class_counts_true[inst.true_label] += 1;
            class_counts_predicted[inst.predicted_label] += 1;
            if inst.is_correct() {
                correct_count += 1;
            } else {
                pair_counts[inst.true_label][inst.predicted_label] += 1;
            }
        }

        let mut confusion_pairs: Vec<ConfusionPair> = pair_counts
            .iter()
            .enumerate()
            .flat_map(|(t, row)| {
                row.iter().enumerate().filter(|(_, &c)| c > 0).map(move |(p, &count)| {
                    ConfusionPair {
                        true_class: t,
                        predicted_class: p,
                        count,
                    }
                })
            })
            .collect();
        confusion_pairs.sort_by(|a, b| {
            b.count
                .cmp(&a.count)
                .then(a.true_class.cmp(&b.true_class))
                .then(a.predicted_class.cmp(&b.predicted_class))
        });

        let centroid = self.layout.map(|l| {
            let size = T::lit(rows.len() as f64);
            let sx = rows.iter().map(|&r| l[[r, 0]]).sum::<T>();
            let sy = rows.iter().map(|&r| l[[r, 1]]).sum::<T>();
            [sx / size, sy / size]
        });

        Ok(SelectionStats {
            instance_ids: ids.to_vec(),
            size: rows.len(),
            correct_count,
            accuracy: correct_count as f64 / rows.len() as f64,
            class_counts_true,
            class_counts_predicted,
            confusion_pairs,
            centroid,
        })
    }

    pub fn class_report(&self) -> ClassReport {
        let manifest = self.dataset.manifest();
        let k = manifest.num_classes;
        let mut confusion = vec![vec![0usize; k]; k];
        for inst in self.dataset.instances() {
            confusion[inst.true_label][inst.predicted_label] += 1;
        }
        let classes = (0..k)
            .map(|c| {
                let support: usize = confusion[c].iter().sum();
                let correct = confusion[c][c];
                ClassSummary {
                    class: c,
                    name: manifest.class_name(c).to_string(),
                    support,
                    correct,
                    accuracy: (support > 0).then(|| correct as f64 / support as f64),
                }
            })
            .collect();
        ClassReport {
            classes,
            confusion,
            total: self.dataset.len(),
        }
    }

    /// Exact `k` nearest neighbors of `id` by Euclidean distance; ties by ascending id.
    pub fn neighbors(
        &self,
        id: InstanceId,
        k: usize,
        space: NeighborSpace,
    ) -> Result<Vec<Neighbor<T>>, AnalyticsError> {
        let origin = self.row(id)?;
        let n = self.dataset.len();
        if k == 0 || k >= n {
            return Err(AnalyticsError::InvalidK { k, n });
        }
        let instances = self.dataset.instances();
        let distance: Box<dyn Fn(usize) -> T> = match space {
            NeighborSpace::Layout2d => {
                let l = self.layout.ok_or(AnalyticsError::ProjectionUnavailable)?;
                Box::new(move |r| {
                    let dx = l[[r, 0]] - l[[origin, 0]];
                    let dy = l[[r, 1]] - l[[origin, 1]];
                    (dx * dx + dy * dy).sqrt()
                })
            }
            NeighborSpace::EmbeddingD => {
                let a = &instances[origin].embedding;
                Box::new(move |r| {
                    a.iter()
                        .zip(&instances[r].embedding)
                        .map(|(&x, &y)| (x - y) * (x - y))
                        .sum::<T>()
                        .sqrt()
                })
            }
        };
        let mut all: Vec<Neighbor<T>> = (0..n)
            .filter(|&r| r != origin)
            .map(|r| Neighbor {
                id: instances[r].id,
                distance: distance(r),
            })
            .collect();
        all.sort_by(|a, b| {
            a.distance
                .partial_cmp(&b.distance)
                .unwrap_or(Ordering::Equal)
                .then(a.id.cmp(&b.id))
        });
        all.truncate(k);
        Ok(all)
    }
}
