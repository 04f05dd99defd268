//! On-disk layout: `<root>/sessions/<session_id>.json` and `<root>/notes.json`.
//! Every write goes to a temporary file in the same directory and is renamed
//! into place.

use std::io::Write;
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::Serialize;

use crate::{ChatSession, DialogueError, NoteRecord};

pub const SESSIONS_DIR: &str = "sessions";
pub const NOTES_FILE: &str = "notes.json";

#[derive(Debug, Clone)]
pub struct Store {
    root: PathBuf,
}

fn storage(path: &Path, e: impl std::fmt::Display) -> DialogueError {
    DialogueError::Storage(format!("{}: {e}", path.display()))
}

impl Store {
    pub fn open(root: impl Into<PathBuf>) -> Result<Self, DialogueError> {
        let root = root.into();
        let sessions = root.join(SESSIONS_DIR);
        std::fs::create_dir_all(&sessions).map_err(|e| storage(&sessions, e))?;
        Ok(Self { root })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    fn session_path(&self, id: &str) -> PathBuf {
        self.root.join(SESSIONS_DIR).join(format!("{id}.json"))
    }

    pub fn save_session(&self, session: &ChatSession) -> Result<(), DialogueError> {
        write_atomic(&self.session_path(&session.session_id), session)
    }

    pub fn save_notes(&self, notes: &[NoteRecord]) -> Result<(), DialogueError> {
        write_atomic(&self.root.join(NOTES_FILE), &notes)
    }

    pub fn load_sessions(&self) -> Result<Vec<ChatSession>, DialogueError> {
        let dir = self.root.join(SESSIONS_DIR);
        let mut sessions = Vec::new();
        for entry in std::fs::read_dir(&dir).map_err(|e| storage(&dir, e))? {
            let path = entry.map_err(|e| storage(&dir, e))?.path();
            if path.extension().and_then(|e| e.to_str()) == Some("json") {
                sessions.push(read_json::<ChatSession>(&path)?);
            }
        }
        sessions.sort_by(|a, b| (a.created_at, &a.session_id).cmp(&(b.created_at, &b.session_id)));
        Ok(sessions)
    }

    pub fn load_notes(&self) -> Result<Vec<NoteRecord>, DialogueError> {
        let path = self.root.join(NOTES_FILE);
        if !path.exists() {
            return Ok(Vec::new());
        }
        read_json(&path)
    }
}

fn read_json<V: DeserializeOwned>(path: &Path) -> Result<V, DialogueError> {
    let text = std::fs::read_to_string(path).map_err(|e| storage(path, e))?;
    serde_json::from_str(&text).map_err(|e| storage(path, e))
}

fn write_atomic<V: Serialize + ?Sized>(path: &Path, value: &V) -> Result<(), DialogueError> {
    let dir = path.parent().unwrap_or(Path::new("."));
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(|e| storage(dir, e))?;
    let bytes = serde_json::to_vec_pretty(value).map_err(|e| storage(path, e))?;
    tmp.write_all(&bytes).map_err(|e| storage(path, e))?;
    tmp.as_file().sync_all().map_err(|e| storage(path, e))?;
    tmp.persist(path).map_err(|e| storage(path, e.error))?;
    Ok(())
}
