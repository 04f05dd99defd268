use std::collections::HashSet;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::{ChatTarget, DialogueError};

const BUILTIN: &str = include_str!("../data/personas.json");

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Persona {
    pub persona_id: String,
    pub name: String,
    pub style_directive: String,
    /// May use `{name}` and `{subject}` placeholders.
    pub greeting_template: String,
    /// Text-to-speech voice; the persona id is used when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub voice_id: Option<String>,
}

impl Persona {
    pub fn greeting(&self, target: &ChatTarget) -> String {
        self.greeting_template
            .replace("{name}", &self.name)
            .replace("{subject}", &target.subject())
    }

    pub fn voice(&self) -> &str {
        self.voice_id.as_deref().unwrap_or(&self.persona_id)
    }
}

/// Ordered, non-empty set of personas with unique ids.
#[derive(Debug, Clone, PartialEq)]
pub struct PersonaRegistry {
    personas: Vec<Persona>,
}

impl PersonaRegistry {
    pub fn new(personas: Vec<Persona>) -> Result<Self, DialogueError> {
        if personas.is_empty() {
            return Err(DialogueError::Registry("persona registry is empty".into()));
        }
        let mut seen = HashSet::new();
        for p in &personas {
            if !seen.insert(p.persona_id.as_str()) {
                return Err(DialogueError::Registry(format!(
                    "duplicate persona id {:?}",
                    p.persona_id
                )));
            }
            if p.name.trim().is_empty() || p.style_directive.trim().is_empty() {
                return Err(DialogueError::Registry(format!(
                    "persona {:?} needs a name and a style directive",
                    p.persona_id
                )));
            }
        }
        Ok(Self { personas })
    }

    /// The six personas shipped with the crate.
    pub fn builtin() -> Self {
        Self::from_json(BUILTIN).expect("built-in persona file is valid")
    }

    pub fn from_json(text: &str) -> Result<Self, DialogueError> {
        let personas = serde_json::from_str(text)
            .map_err(|e| DialogueError::Registry(format!("invalid persona file: {e}")))?;
        Self::new(personas)
    }

    pub fn load(path: &Path) -> Result<Self, DialogueError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| DialogueError::Registry(format!("{}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    pub fn len(&self) -> usize {
        self.personas.len()
    }

    pub fn is_empty(&self) -> bool {
        self.personas.is_empty()
    }

    pub fn personas(&self) -> &[Persona] {
        &self.personas
    }

    pub fn get(&self, persona_id: &str) -> Option<&Persona> {
        self.personas.iter().find(|p| p.persona_id == persona_id)
    }

    /// Index of the persona speaking for `target`: the anchor id modulo the
    /// registry size.
    pub fn index_for(&self, target: &ChatTarget) -> usize {
        (target.anchor_id() % self.personas.len() as u64) as usize
    }

    pub fn assign(&self, target: &ChatTarget) -> &Persona {
        &self.personas[self.index_for(target)]
    }
}
