//! Personified data points: persona registry, context-aware system prompts
//! and persisted chat sessions with tasks and notes.

mod error;
mod manager;
mod persona;
pub mod prompt;
mod records;
pub mod store;
mod target;

pub use error::DialogueError;
pub use manager::{
    Dialogue, DialogueSettings, SessionStart, TurnOutcome, DEFAULT_HISTORY_CAP, MAX_TEXT_CHARS,
};
pub use persona::{Persona, PersonaRegistry};
pub use prompt::{build_system_prompt, check_sections, PromptContext, SECTION_TITLES};
pub use records::{
    ChatMessage, ChatSession, NewNote, NoteKind, NoteRecord, NoteUpdate, Timestamp,
};
pub use target::{ChatTarget, TargetKind};
