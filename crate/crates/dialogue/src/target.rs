use std::fmt;
use std::str::FromStr;

use chatpoints_core::{Dataset, InstanceId};
use serde::{Deserialize, Serialize};

use crate::DialogueError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TargetKind {
    SingleInstance,
    Cluster,
}

impl TargetKind {
    /// Wording used in prompts and stub replies.
    pub fn label(self) -> &'static str {
        match self {
            TargetKind::SingleInstance => "single data point",
            TargetKind::Cluster => "cluster",
        }
    }
}

/// What a conversation is about: one instance or a brushed group of them.
///
/// Cluster ids are kept sorted so that the same brushed set always maps to
/// the same target regardless of selection order.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ChatTarget {
    pub kind: TargetKind,
    pub instance_ids: Vec<InstanceId>,
}

impl ChatTarget {
    pub fn single(id: InstanceId) -> Self {
        Self {
            kind: TargetKind::SingleInstance,
            instance_ids: vec![id],
        }
    }

    pub fn cluster(ids: impl IntoIterator<Item = InstanceId>) -> Result<Self, DialogueError> {
        Self {
            kind: TargetKind::Cluster,
            instance_ids: ids.into_iter().collect(),
        }
        .normalized()
    }

    /// Check the shape invariants and sort cluster ids.
    pub fn normalized(mut self) -> Result<Self, DialogueError> {
        let invalid = |m: String| Err(DialogueError::InvalidTarget(m));
        match self.kind {
            TargetKind::SingleInstance if self.instance_ids.len() != 1 => {
                return invalid(format!(
                    "a single-instance target needs exactly 1 id, got {}",
                    self.instance_ids.len()
                ))
            }
            TargetKind::Cluster => {
                self.instance_ids.sort_unstable();
                if self.instance_ids.len() < 2 {
                    return invalid("a cluster needs at least 2 ids".into());
                }
                if let Some(w) = self.instance_ids.windows(2).find(|w| w[0] == w[1]) {
                    return invalid(format!("instance id {} listed twice", w[0]));
                }
            }
            TargetKind::SingleInstance => {}
        }
        Ok(self)
    }

    /// Normalize and confirm every id exists in `dataset`.
    pub fn validated<T: chatpoints_core::Scalar>(self, dataset: &Dataset<T>) -> Result<Self, DialogueError> {
        let target = self.normalized()?;
        for &id in &target.instance_ids {
            dataset
                .position(id)
                .map_err(|_| DialogueError::UnknownInstance(id))?;
        }
        Ok(target)
    }

    /// Smallest id; decides the persona of a cluster.
    pub fn anchor_id(&self) -> InstanceId {
        self.instance_ids.iter().copied().min().unwrap_or(0)
    }

    /// Short description used in greetings.
    pub fn subject(&self) -> String {
        match self.kind {
            TargetKind::SingleInstance => format!("data point #{}", self.anchor_id()),
            TargetKind::Cluster => format!("a cluster of {} data points", self.instance_ids.len()),
        }
    }
}

/// `instance:38` or `cluster:7,12,30`.
impl fmt::Display for ChatTarget {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let ids: Vec<String> = self.instance_ids.iter().map(u64::to_string).collect();
        match self.kind {
            TargetKind::SingleInstance => write!(f, "instance:{}", ids.join(",")),
            TargetKind::Cluster => write!(f, "cluster:{}", ids.join(",")),
        }
    }
}

/// Accepts the [`Display`](fmt::Display) form, or a bare comma-separated id
/// list (one id means a single instance).
impl FromStr for ChatTarget {
    type Err = DialogueError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let (kind, list) = match s.split_once(':') {
            Some(("instance", rest)) => (Some(TargetKind::SingleInstance), rest),
            Some(("cluster", rest)) => (Some(TargetKind::Cluster), rest),
            Some(_) => return Err(DialogueError::InvalidTarget(format!("unrecognized target {s:?}"))),
            None => (None, s),
        };
        let ids = list
            .split(',')
            .map(|t| t.trim().parse::<InstanceId>())
            .collect::<Result<Vec<_>, _>>()
            .map_err(|_| DialogueError::InvalidTarget(format!("unparsable id list in {s:?}")))?;
        let kind = kind.unwrap_or(if ids.len() == 1 {
            TargetKind::SingleInstance
        } else {
            TargetKind::Cluster
        });
        ChatTarget {
            kind,
            instance_ids: ids,
        }
        .normalized()
    }
}
