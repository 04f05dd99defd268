use std::collections::{HashMap, HashSet};
use std::path::PathBuf;
use std::sync::{Arc, Mutex, MutexGuard};
use std::time::{SystemTime, UNIX_EPOCH};

use chatpoints_core::Dataset;
use chatpoints_gateway::{
    ChatProvider, ChatRole, ProviderMessage, ProviderReply, ProviderRequest, DEFAULT_MAX_TOKENS,
    DEFAULT_MODEL, DEFAULT_TEMPERATURE,
};

use crate::prompt::{build_system_prompt, PromptContext};
use crate::store::Store;
use crate::{
    ChatMessage, ChatSession, ChatTarget, DialogueError, NewNote, NoteKind, NoteRecord,
    NoteUpdate, Persona, PersonaRegistry, Timestamp,
};

pub const MAX_TEXT_CHARS: usize = 4000;
pub const DEFAULT_HISTORY_CAP: usize = 30;

#[derive(Debug, Clone, PartialEq)]
pub struct DialogueSettings {
    pub model_name: String,
    pub temperature: f64,
    pub max_tokens: u32,
    /// Most recent messages sent verbatim; older ones go into a transcript
    /// appended to the system prompt.
    pub history_cap: usize,
}

impl Default for DialogueSettings {
    fn default() -> Self {
        Self {
            model_name: DEFAULT_MODEL.to_string(),
            temperature: DEFAULT_TEMPERATURE,
            max_tokens: DEFAULT_MAX_TOKENS,
            history_cap: DEFAULT_HISTORY_CAP,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SessionStart {
    pub session: ChatSession,
    /// `true` when an existing session for the target was returned.
    pub resumed: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TurnOutcome {
    pub reply: ProviderReply,
    pub session: ChatSession,
}

#[derive(Default)]
struct State {
    sessions: HashMap<String, ChatSession>,
    notes: Vec<NoteRecord>,
    last_timestamp: Timestamp,
}

impl State {
    /// Wall-clock milliseconds, bumped so that successive values strictly increase.
    fn tick(&mut self) -> Timestamp {
        let now = SystemTime::now()
            .duration_since(UNIX_EPOCH)
            .map(|d| d.as_millis() as Timestamp)
            .unwrap_or(0);
        self.last_timestamp = now.max(self.last_timestamp + 1);
        self.last_timestamp
    }

    fn session_mut(&mut self, id: &str) -> Result<&mut ChatSession, DialogueError> {
        self.sessions
            .get_mut(id)
            .ok_or_else(|| DialogueError::UnknownSession(id.to_string()))
    }

    fn note_mut(&mut self, id: &str) -> Result<&mut NoteRecord, DialogueError> {
        self.notes
            .iter_mut()
            .find(|n| n.note_id == id)
            .ok_or_else(|| DialogueError::UnknownNote(id.to_string()))
    }
}

fn lock<T>(m: &Mutex<T>) -> MutexGuard<'_, T> {
    m.lock().unwrap_or_else(|e| e.into_inner())
}

fn check_text(text: &str) -> Result<(), DialogueError> {
    if text.trim().is_empty() {
        return Err(DialogueError::EmptyText);
    }
    let len = text.chars().count();
    if len > MAX_TEXT_CHARS {
        return Err(DialogueError::TextTooLong {
            len,
            max: MAX_TEXT_CHARS,
        });
    }
    Ok(())
}

struct BusyGuard<'a> {
    busy: &'a Mutex<HashSet<String>>,
    id: String,
}

impl Drop for BusyGuard<'_> {
    fn drop(&mut self) {
        lock(self.busy).remove(&self.id);
    }
}

/// Sessions, notes and the provider they talk to, persisted under one directory.
pub struct Dialogue {
    registry: PersonaRegistry,
    store: Store,
    provider: Arc<dyn ChatProvider>,
    settings: DialogueSettings,
    state: Mutex<State>,
    busy: Mutex<HashSet<String>>,
}

impl Dialogue {
    /// Open (or create) the store at `dir` and load everything persisted there.
    pub fn open(
        dir: impl Into<PathBuf>,
        registry: PersonaRegistry,
        provider: Arc<dyn ChatProvider>,
        settings: DialogueSettings,
    ) -> Result<Self, DialogueError> {
        let store = Store::open(dir)?;
        let mut state = State {
            notes: store.load_notes()?,
            ..State::default()
        };
        for s in store.load_sessions()? {
            state.last_timestamp = state
                .last_timestamp
                .max(s.created_at)
                .max(s.messages.last().map_or(0, |m| m.timestamp));
            state.sessions.insert(s.session_id.clone(), s);
        }
        for n in &state.notes {
            state.last_timestamp = state.last_timestamp.max(n.created_at);
        }
        Ok(Self {
            registry,
            store,
            provider,
            settings,
            state: Mutex::new(state),
            busy: Mutex::new(HashSet::new()),
        })
    }

    pub fn registry(&self) -> &PersonaRegistry {
        &self.registry
    }

    pub fn settings(&self) -> &DialogueSettings {
        &self.settings
    }

    pub fn provider_id(&self) -> &str {
        self.provider.id()
    }

    pub fn persona_of(&self, session: &ChatSession) -> &Persona {
        self.registry
            .get(&session.persona_id)
            .unwrap_or_else(|| self.registry.assign(&session.target))
    }

    /// Resume the target's session, or create one opening with the persona greeting.
    pub fn start_session(
        &self,
        target: ChatTarget,
        dataset: &Dataset,
    ) -> Result<SessionStart, DialogueError> {
        let target = target.validated(dataset)?;
        let mut state = lock(&self.state);
        let existing = state
            .sessions
            .values()
            .filter(|s| s.target == target)
            .min_by_key(|s| (s.created_at, s.session_id.clone()));
        if let Some(s) = existing {
            return Ok(SessionStart {
                session: s.clone(),
                resumed: true,
            });
        }
        let persona = self.registry.assign(&target);
        let created_at = state.tick();
        let greeting_at = state.tick();
        let session = ChatSession {
            session_id: uuid::Uuid::new_v4().to_string(),
            persona_id: persona.persona_id.clone(),
            messages: vec![ChatMessage {
                role: ChatRole::Character,
                text: persona.greeting(&target),
                timestamp: greeting_at,
                error: None,
            }],
            target,
            created_at,
            version: 1,
        };
        self.store.save_session(&session)?;
        state.sessions.insert(session.session_id.clone(), session.clone());
        tracing::debug!(session = %session.session_id, target = %session.target, "session started");
        Ok(SessionStart {
            session,
            resumed: false,
        })
    }

    pub fn session(&self, id: &str) -> Result<ChatSession, DialogueError> {
        lock(&self.state)
            .sessions
            .get(id)
            .cloned()
            .ok_or_else(|| DialogueError::UnknownSession(id.to_string()))
    }

    /// All sessions, or those of one target, oldest first.
    pub fn sessions(&self, target: Option<&ChatTarget>) -> Vec<ChatSession> {
        let state = lock(&self.state);
        let mut out: Vec<ChatSession> = state
            .sessions
            .values()
            .filter(|s| target.is_none_or(|t| &s.target == t))
            .cloned()
            .collect();
        out.sort_by(|a, b| (a.created_at, &a.session_id).cmp(&(b.created_at, &b.session_id)));
        out
    }

    fn append(
        &self,
        id: &str,
        role: ChatRole,
        text: &str,
    ) -> Result<(ChatSession, usize), DialogueError> {
        check_text(text)?;
        let mut state = lock(&self.state);
        let timestamp = state.tick();
        let session = state.session_mut(id)?;
        let mut updated = session.clone();
        updated.messages.push(ChatMessage {
            role,
            text: text.to_string(),
            timestamp,
            error: None,
        });
        updated.version += 1;
        self.store.save_session(&updated)?;
        *session = updated.clone();
        let index = updated.messages.len() - 1;
        Ok((updated, index))
    }

    pub fn append_user_turn(&self, id: &str, text: &str) -> Result<ChatSession, DialogueError> {
        self.append(id, ChatRole::User, text).map(|(s, _)| s)
    }

    pub fn record_character_turn(&self, id: &str, text: &str) -> Result<ChatSession, DialogueError> {
        self.append(id, ChatRole::Character, text).map(|(s, _)| s)
    }

    fn mark_failed(&self, id: &str, index: usize, reason: &str) -> Result<(), DialogueError> {
        let mut state = lock(&self.state);
        let session = state.session_mut(id)?;
        let mut updated = session.clone();
        updated.messages[index].error = Some(reason.to_string());
        updated.version += 1;
        self.store.save_session(&updated)?;
        *session = updated;
        Ok(())
    }

    /// Provider request for the session as it stands: fresh system prompt,
    /// the most recent `history_cap` usable messages, older ones summarized.
    pub fn provider_request(
        &self,
        session: &ChatSession,
        ctx: &PromptContext<'_>,
    ) -> Result<ProviderRequest, DialogueError> {
        let persona = self.persona_of(session);
        let mut history: Vec<ProviderMessage> = Vec::new();
        for m in session.messages.iter().filter(|m| m.error.is_none()) {
            match history.last_mut() {
                // Back-to-back turns of one speaker are merged so roles alternate.
                Some(last) if last.role == m.role => {
                    last.text.push_str("\n\n");
                    last.text.push_str(&m.text);
                }
                _ => history.push(ProviderMessage {
                    role: m.role,
                    text: m.text.clone(),
                }),
            }
        }
        let cap = self.settings.history_cap.max(1);
        let split = history.len().saturating_sub(cap);
        let recent = history.split_off(split);
        let transcript: String = history
            .iter()
            .map(|m| match m.role {
                ChatRole::User => format!("User: {}\n", m.text),
                ChatRole::Character => format!("{}: {}\n", persona.name, m.text),
            })
            .collect();
        let system_prompt = build_system_prompt(
            &session.target,
            persona,
            ctx,
            (!transcript.is_empty()).then_some(transcript.as_str()),
        )?;
        Ok(ProviderRequest {
            system_prompt,
            messages: recent,
            model_name: self.settings.model_name.clone(),
            temperature: self.settings.temperature,
            max_tokens: self.settings.max_tokens,
        })
    }

    /// Append the user's text, ask the provider and append its reply.
    ///
    /// On provider failure the user turn stays in the session with an error
    /// marker and [`DialogueError::Upstream`] is returned. A second turn on
    /// the same session while one is in flight fails with
    /// [`DialogueError::Busy`].
    pub async fn chat_turn(
        &self,
        id: &str,
        text: &str,
        ctx: &PromptContext<'_>,
    ) -> Result<TurnOutcome, DialogueError> {
        check_text(text)?;
        self.session(id)?;
        let _guard = {
            let mut busy = lock(&self.busy);
            if !busy.insert(id.to_string()) {
                return Err(DialogueError::Busy(id.to_string()));
            }
            BusyGuard {
                busy: &self.busy,
                id: id.to_string(),
            }
        };
        let (session, user_index) = self.append(id, ChatRole::User, text)?;
        let request = self.provider_request(&session, ctx)?;
        match self.provider.complete(&request).await {
            Ok(reply) => {
                let (session, _) = self.append(id, ChatRole::Character, &reply.text)?;
                Ok(TurnOutcome { reply, session })
            }
            Err(cause) => {
                tracing::warn!(session = id, error = %cause, "chat turn failed");
                self.mark_failed(id, user_index, &cause.to_string())?;
                Err(DialogueError::Upstream {
                    session_id: id.to_string(),
                    cause,
                })
            }
        }
    }

    /// Text of message `turn` and the voice of the session's persona.
    pub fn speech_for_turn(&self, id: &str, turn: usize) -> Result<(String, String), DialogueError> {
        let session = self.session(id)?;
        let message = session
            .messages
            .get(turn)
            .ok_or_else(|| DialogueError::UnknownTurn {
                session_id: id.to_string(),
                turn,
            })?;
        Ok((message.text.clone(), self.persona_of(&session).voice().to_string()))
    }

    fn check_link(state: &State, link: &Option<String>) -> Result<(), DialogueError> {
        match link {
            Some(id) if !state.sessions.contains_key(id) => {
                Err(DialogueError::UnknownSession(id.clone()))
            }
            _ => Ok(()),
        }
    }

    pub fn add_note(&self, note: NewNote) -> Result<NoteRecord, DialogueError> {
        check_text(&note.text)?;
        let mut state = lock(&self.state);
        Self::check_link(&state, &note.linked_session_id)?;
        let record = NoteRecord {
            note_id: uuid::Uuid::new_v4().to_string(),
            kind: note.kind,
            text: note.text,
            linked_session_id: note.linked_session_id,
            done: (note.kind == NoteKind::Task).then_some(false),
            created_at: state.tick(),
        };
        let mut notes = state.notes.clone();
        notes.push(record.clone());
        self.store.save_notes(&notes)?;
        state.notes = notes;
        Ok(record)
    }

    /// All notes, oldest first.
    pub fn notes(&self) -> Vec<NoteRecord> {
        let mut notes = lock(&self.state).notes.clone();
        notes.sort_by(|a, b| (a.created_at, &a.note_id).cmp(&(b.created_at, &b.note_id)));
        notes
    }

    pub fn note(&self, id: &str) -> Result<NoteRecord, DialogueError> {
        lock(&self.state)
            .notes
            .iter()
            .find(|n| n.note_id == id)
            .cloned()
            .ok_or_else(|| DialogueError::UnknownNote(id.to_string()))
    }

    fn modify_note(
        &self,
        id: &str,
        f: impl FnOnce(&State, &mut NoteRecord) -> Result<(), DialogueError>,
    ) -> Result<NoteRecord, DialogueError> {
        let mut state = lock(&self.state);
        let mut updated = state.note_mut(id)?.clone();
        f(&state, &mut updated)?;
        let mut notes = state.notes.clone();
        if let Some(slot) = notes.iter_mut().find(|n| n.note_id == id) {
            *slot = updated.clone();
        }
        self.store.save_notes(&notes)?;
        state.notes = notes;
        Ok(updated)
    }

    pub fn update_note(&self, id: &str, update: NoteUpdate) -> Result<NoteRecord, DialogueError> {
        self.modify_note(id, |state, note| {
            if let Some(text) = update.text {
                check_text(&text)?;
                note.text = text;
            }
            if let Some(done) = update.done {
                if note.kind == NoteKind::Insight {
                    return Err(DialogueError::InvalidNote(
                        "insight notes have no done state".into(),
                    ));
                }
                note.done = Some(done);
            }
            if update.linked_session_id.is_some() {
                Self::check_link(state, &update.linked_session_id)?;
                note.linked_session_id = update.linked_session_id;
            }
            Ok(())
        })
    }

    pub fn toggle_task_done(&self, id: &str) -> Result<NoteRecord, DialogueError> {
        self.modify_note(id, |_, note| match note.done {
            Some(done) => {
                note.done = Some(!done);
                Ok(())
            }
            None => Err(DialogueError::InvalidNote(
                "insight notes have no done state".into(),
            )),
        })
    }

    pub fn delete_note(&self, id: &str) -> Result<NoteRecord, DialogueError> {
        let mut state = lock(&self.state);
        let removed = state.note_mut(id)?.clone();
        let notes: Vec<NoteRecord> = state.notes.iter().filter(|n| n.note_id != id).cloned().collect();
        self.store.save_notes(&notes)?;
        state.notes = notes;
        Ok(removed)
    }
}
