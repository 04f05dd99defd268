use chatpoints_core::{AnalyticsError, InstanceId};
use chatpoints_gateway::GatewayError;

#[derive(Debug, thiserror::Error)]
pub enum DialogueError {
    #[error("invalid target: {0}")]
    InvalidTarget(String),
    #[error("unknown instance id {0}")]
    UnknownInstance(InstanceId),
    #[error("unknown session {0}")]
    UnknownSession(String),
    #[error("session {session_id} has no turn {turn}")]
    UnknownTurn { session_id: String, turn: usize },
    #[error("unknown note {0}")]
    UnknownNote(String),
    #[error("text is empty")]
    EmptyText,
    #[error("text is {len} characters, limit is {max}")]
    TextTooLong { len: usize, max: usize },
    #[error("invalid note: {0}")]
    InvalidNote(String),
    #[error("session {0} is already processing a turn")]
    Busy(String),
    #[error("chat provider failed for session {session_id}: {cause}")]
    Upstream {
        session_id: String,
        cause: GatewayError,
    },
    #[error("persona registry: {0}")]
    Registry(String),
    #[error("analytics: {0}")]
    Analytics(AnalyticsError),
    #[error("storage: {0}")]
    Storage(String),
}

impl From<AnalyticsError> for DialogueError {
    fn from(e: AnalyticsError) -> Self {
        match e {
            AnalyticsError::UnknownId(id) => DialogueError::UnknownInstance(id),
            other => DialogueError::Analytics(other),
        }
    }
}
