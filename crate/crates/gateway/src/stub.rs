//! Offline provider whose replies are a pure function of the request.
//!
//! The stub reads the system prompt by convention: sections are introduced by
//! heading lines of the form `### <n>. <TITLE>`, the persona section carries a
//! `Persona name:` line and the target section a `Target kind:` line. It then
//! echoes every numeric token of section 6 back, so tests can check that the
//! numbers a persona would quote reached the model.

use std::sync::OnceLock;

use async_trait::async_trait;
use regex::Regex;

use crate::{ChatProvider, FinishReason, GatewayError, ProviderReply, ProviderRequest};

pub const STUB_PROVIDER_ID: &str = "stub";
/// Section of the system prompt whose numbers are echoed.
pub const ECHOED_SECTION: u32 = 6;
const QUESTION_PREVIEW_CHARS: usize = 40;

fn heading_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"(?m)^### (\d+)\. ").unwrap())
}

fn numeric_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"-?\d+(?:\.\d+)?(?:/\d+)?").unwrap())
}

/// Body of section `number` (heading line excluded), if present.
pub fn prompt_section(prompt: &str, number: u32) -> Option<&str> {
    let headings: Vec<(usize, usize, u32)> = heading_re()
        .captures_iter(prompt)
        .map(|c| {
            let m = c.get(0).unwrap();
            (m.start(), m.end(), c[1].parse().unwrap_or(0))
        })
        .collect();
    let idx = headings.iter().position(|h| h.2 == number)?;
    let body_start = prompt[headings[idx].1..]
        .find('\n')
        .map(|off| headings[idx].1 + off + 1)
        .unwrap_or(prompt.len());
    let end = headings.get(idx + 1).map(|h| h.0).unwrap_or(prompt.len());
    Some(&prompt[body_start.min(end)..end])
}

/// Numeric tokens in order of appearance: integers, decimals, negative
/// values and `a/b` fractions (kept whole).
pub fn numeric_tokens(text: &str) -> Vec<&str> {
    numeric_re().find_iter(text).map(|m| m.as_str()).collect()
}

fn labeled_value<'a>(text: &'a str, label: &str) -> Option<&'a str> {
    text.lines()
        .find_map(|l| l.trim().strip_prefix(label))
        .map(str::trim)
}

#[derive(Debug, Clone, Default)]
pub struct StubProvider;

impl StubProvider {
    pub fn new() -> Self {
        Self
    }

    pub fn reply_text(request: &ProviderRequest) -> String {
        let prompt = &request.system_prompt;
        let persona = labeled_value(prompt, "Persona name:").unwrap_or("a data point");
        let kind = labeled_value(prompt, "Target kind:").unwrap_or("unknown target");
        let digits = prompt_section(prompt, ECHOED_SECTION)
            .map(numeric_tokens)
            .unwrap_or_default();
        let digits = if digits.is_empty() {
            "nothing".to_string()
        } else {
            digits.join(", ")
        };
        let asked: String = request
            .last_user_text()
            .unwrap_or("")
            .chars()
            .take(QUESTION_PREVIEW_CHARS)
            .collect();
        format!("As {persona} ({kind}), I report: {digits}. You asked: {asked}")
    }
}

#[async_trait]
impl ChatProvider for StubProvider {
    fn id(&self) -> &str {
        STUB_PROVIDER_ID
    }

    async fn complete(&self, request: &ProviderRequest) -> Result<ProviderReply, GatewayError> {
        Ok(ProviderReply {
            text: Self::reply_text(request),
            finish_reason: FinishReason::Stop,
            latency_ms: 0,
            provider_id: STUB_PROVIDER_ID.to_string(),
        })
    }
}
