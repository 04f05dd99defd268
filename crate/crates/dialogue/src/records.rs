use chatpoints_gateway::ChatRole;
use serde::{Deserialize, Serialize};

use crate::ChatTarget;

/// Epoch milliseconds.
pub type Timestamp = u64;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatMessage {
    pub role: ChatRole,
    pub text: String,
    pub timestamp: Timestamp,
    /// Set on a user turn whose reply could not be obtained. Such turns are
    /// kept in the history but no longer sent to the provider.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatSession {
    pub session_id: String,
    pub target: ChatTarget,
    pub persona_id: String,
    pub messages: Vec<ChatMessage>,
    pub created_at: Timestamp,
    /// Incremented on every persisted mutation.
    #[serde(default)]
    pub version: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NoteKind {
    Task,
    Insight,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoteRecord {
    pub note_id: String,
    pub kind: NoteKind,
    pub text: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub linked_session_id: Option<String>,
    /// Present for tasks only.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub done: Option<bool>,
    pub created_at: Timestamp,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NewNote {
    pub kind: NoteKind,
    pub text: String,
    #[serde(default)]
    pub linked_session_id: Option<String>,
}

impl NewNote {
    pub fn task(text: impl Into<String>) -> Self {
        Self {
            kind: NoteKind::Task,
            text: text.into(),
            linked_session_id: None,
        }
    }

    pub fn insight(text: impl Into<String>) -> Self {
        Self {
            kind: NoteKind::Insight,
            text: text.into(),
            linked_session_id: None,
        }
    }
}

/// Partial update; absent fields are left unchanged.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct NoteUpdate {
    #[serde(default)]
    pub text: Option<String>,
    #[serde(default)]
    pub done: Option<bool>,
    #[serde(default)]
    pub linked_session_id: Option<String>,
}
