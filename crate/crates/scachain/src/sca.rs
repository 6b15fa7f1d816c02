//! The state-condition-action node model and its extraction backends.
//!
//! Every relevant specification sentence maps to one [`ScaNode`] carrying
//! four fields: the state before the transition, the triggering condition,
//! the mandated action, and the resulting state. A field whose value cannot
//! be determined holds the exact sentinel [`SENTINEL`].
//!
//! Two backends implement [`ExtractionBackend`]: a service backend that sends
//! an in-context-learning prompt to the configured inference endpoint, and a
//! deterministic pattern backend used offline and in CI.

use crate::backends::{BackendError, ServiceClient};
use crate::corpus::{detect_references, ClauseRef, SentenceRecord};
use once_cell::sync::Lazy;
use rayon::prelude::*;
use regex::Regex;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::fmt;
use std::sync::Arc;

/// Exact sentinel for a field with no determinable value.
pub const SENTINEL: &str = "Not explicitly defined";

/// Canonical form of the sentinel. Ordinary canonicalization strips
/// underscores from its output, so this value can never collide with the
/// canonical form of any other raw string.
pub const SENTINEL_CANONICAL: &str = "__not_explicitly_defined__";

pub fn is_sentinel(field: &str) -> bool {
    field == SENTINEL
}

const STATE_PREFIXES: &[&str] = &[
    "5gmm", "5gsm", "emm", "esm", "gmm", "mm", "cm", "ecm", "rrc", "rm",
];

/// Lowercases, collapses whitespace, strips surrounding punctuation per
/// token, and joins protocol-state prefixes with their successor token
/// ("5GMM  IDLE mode." becomes "5gmm-idle mode"). The sentinel maps to
/// [`SENTINEL_CANONICAL`].
pub fn canonicalize(state_raw: &str) -> String {
    if is_sentinel(state_raw) || state_raw == SENTINEL_CANONICAL {
        return SENTINEL_CANONICAL.to_string();
    }
    let lowered = state_raw.to_lowercase();
    let tokens: Vec<String> = lowered
        .split_whitespace()
        .map(|t| {
            t.trim_matches(|c: char| !c.is_alphanumeric())
                .replace('_', "-")
        })
        .filter(|t| !t.is_empty())
        .collect();
    let mut merged: Vec<String> = Vec::with_capacity(tokens.len());
    let mut i = 0;
    while i < tokens.len() {
        if i + 1 < tokens.len() && STATE_PREFIXES.contains(&tokens[i].as_str()) {
            merged.push(format!("{}-{}", tokens[i], tokens[i + 1]));
            i += 2;
        } else {
            merged.push(tokens[i].clone());
            i += 1;
        }
    }
    merged.join(" ")
}

/// A state field carrying both its raw extracted text and the canonical form
/// used for equality during linking. The canonical form is derived on
/// construction and cannot drift from the raw value.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct StateText {
    raw: String,
    canonical: String,
}

impl StateText {
    pub fn new(raw: impl Into<String>) -> Self {
        let raw = raw.into();
        let canonical = canonicalize(&raw);
        Self { raw, canonical }
    }

    pub fn sentinel() -> Self {
        Self::new(SENTINEL)
    }

    pub fn raw(&self) -> &str {
        &self.raw
    }

    pub fn canonical(&self) -> &str {
        &self.canonical
    }

    pub fn is_sentinel(&self) -> bool {
        is_sentinel(&self.raw)
    }
}

impl fmt::Display for StateText {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.raw)
    }
}

impl Serialize for StateText {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.serialize_str(&self.raw)
    }
}

impl<'de> Deserialize<'de> for StateText {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        Ok(Self::new(String::deserialize(deserializer)?))
    }
}

/// One self-contained specification transition. Also the node-store record:
/// serialized field names match the store schema exactly.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScaNode {
    pub node_id: u64,
    pub spec_id: String,
    pub clause_id: String,
    pub sentence_id: u64,
    pub start_state: StateText,
    pub condition: String,
    pub action: String,
    pub end_state: StateText,
    pub references: Vec<ClauseRef>,
}

impl ScaNode {
    /// The four fields as raw text, in (start, condition, action, end) order.
    pub fn fields(&self) -> [&str; 4] {
        [
            self.start_state.raw(),
            &self.condition,
            &self.action,
            self.end_state.raw(),
        ]
    }

    pub fn source_citation(&self) -> String {
        format!(
            "{} clause {} sentence {}",
            self.spec_id, self.clause_id, self.sentence_id
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CompletenessScore {
    pub fields_present: u8,
}

/// Counts the non-sentinel fields of a node (0..=4).
pub fn completeness(node: &ScaNode) -> CompletenessScore {
    let fields_present = node.fields().iter().filter(|f| !is_sentinel(f)).count() as u8;
    CompletenessScore { fields_present }
}

/// Raw four-field output of a backend for one sentence.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RawSca {
    pub start: String,
    pub condition: String,
    pub action: String,
    pub end: String,
}

impl RawSca {
    pub fn sentinel() -> Self {
        Self {
            start: SENTINEL.to_string(),
            condition: SENTINEL.to_string(),
            action: SENTINEL.to_string(),
            end: SENTINEL.to_string(),
        }
    }
}

pub trait ExtractionBackend: Sync {
    /// `Ok(None)` when the sentence does not describe a function event.
    fn extract_sentence(&self, sentence: &SentenceRecord) -> Result<Option<RawSca>, BackendError>;

    fn name(&self) -> &'static str;
}

/// A sentence the backend answered for but whose answer could not be used;
/// recorded so nothing is dropped silently.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SkippedSentence {
    pub spec_id: String,
    pub clause_id: String,
    pub sentence_id: u64,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct ExtractionOutcome {
    pub nodes: Vec<ScaNode>,
    pub skipped: Vec<SkippedSentence>,
}

/// Runs the backend over every sentence and assigns node ids consecutively in
/// corpus order. Sentences are judged in parallel; the id assignment is a
/// deterministic post-pass, so worker count never affects the output.
/// Malformed backend output skips the sentence with a log record;
/// [`BackendError::Unavailable`] aborts the run.
pub fn extract(
    sentences: &[SentenceRecord],
    backend: &dyn ExtractionBackend,
) -> Result<ExtractionOutcome, BackendError> {
    let results: Vec<(usize, Result<Option<RawSca>, BackendError>)> = sentences
        .par_iter()
        .enumerate()
        .map(|(idx, s)| (idx, backend.extract_sentence(s)))
        .collect();

    let mut ordered: Vec<(usize, Result<Option<RawSca>, BackendError>)> = results;
    ordered.sort_by_key(|(idx, _)| *idx);

    let mut outcome = ExtractionOutcome::default();
    let mut next_id = 1u64;
    for (idx, result) in ordered {
        let sentence = &sentences[idx];
        match result {
            Ok(Some(raw)) => {
                outcome.nodes.push(build_node(next_id, sentence, raw));
                next_id += 1;
            }
            Ok(None) => {}
            Err(BackendError::Malformed(reason)) => {
                tracing::warn!(
                    spec_id = %sentence.spec_id,
                    clause_id = %sentence.clause_id,
                    sentence_id = sentence.sentence_id,
                    %reason,
                    "skipping sentence: malformed backend output"
                );
                outcome.skipped.push(SkippedSentence {
                    spec_id: sentence.spec_id.clone(),
                    clause_id: sentence.clause_id.clone(),
                    sentence_id: sentence.sentence_id,
                    reason,
                });
            }
            Err(other) => return Err(other),
        }
    }
    Ok(outcome)
}

fn build_node(node_id: u64, sentence: &SentenceRecord, raw: RawSca) -> ScaNode {
    // References: everything the source sentence carried, plus anything
    // detectable inside the extracted fields, deduplicated by target.
    let mut references: Vec<ClauseRef> = Vec::new();
    let mut seen: std::collections::HashSet<(Option<String>, String)> =
        std::collections::HashSet::new();
    let mut push = |r: ClauseRef| {
        if seen.insert((r.target_spec.clone(), r.target_clause.clone())) {
            references.push(r);
        }
    };
    for r in &sentence.references {
        push(r.clone());
    }
    for field in [&raw.start, &raw.condition, &raw.action, &raw.end] {
        if !is_sentinel(field) {
            for r in detect_references(field) {
                push(r);
            }
        }
    }
    ScaNode {
        node_id,
        spec_id: sentence.spec_id.clone(),
        clause_id: sentence.clause_id.clone(),
        sentence_id: sentence.sentence_id,
        start_state: StateText::new(raw.start),
        condition: raw.condition,
        action: raw.action,
        end_state: StateText::new(raw.end),
        references,
    }
}

fn non_empty_or_sentinel(s: &str) -> String {
    let t = s.trim();
    if t.is_empty() {
        SENTINEL.to_string()
    } else {
        t.to_string()
    }
}

/// Parses a backend response into four fields. The wire contract: either
/// `NO EVENT` on the first non-blank line, or up to four lines labeled
/// `Start State:` / `Condition:` / `Action:` / `End State:` (labels matched
/// case-insensitively, missing labels read as the sentinel). A response with
/// neither shape is malformed.
pub fn parse_sca_response(text: &str) -> Result<Option<RawSca>, BackendError> {
    let first = text.lines().map(str::trim).find(|l| !l.is_empty());
    match first {
        None => return Err(BackendError::Malformed("empty response".to_string())),
        Some(l) if l.eq_ignore_ascii_case("no event") => return Ok(None),
        Some(_) => {}
    }

    let mut raw = RawSca::sentinel();
    let mut any_label = false;
    for line in text.lines() {
        let line = line.trim();
        let Some(colon) = line.find(':') else {
            continue;
        };
        let (label, value) = line.split_at(colon);
        let value = &value[1..];
        match label.trim().to_ascii_lowercase().as_str() {
            "start state" => {
                raw.start = non_empty_or_sentinel(value);
                any_label = true;
            }
            "condition" => {
                raw.condition = non_empty_or_sentinel(value);
                any_label = true;
            }
            "action" => {
                raw.action = non_empty_or_sentinel(value);
                any_label = true;
            }
            "end state" => {
                raw.end = non_empty_or_sentinel(value);
                any_label = true;
            }
            _ => {}
        }
    }
    if !any_label {
        return Err(BackendError::Malformed(
            "response carries no recognized field labels".to_string(),
        ));
    }
    Ok(Some(raw))
}

/// In-context examples sent with every extraction prompt, two per
/// specification style as configured by `extractor.examples_per_spec`.
pub const DEFAULT_ICL_EXAMPLES: &[&str] = &[
    "Sentence: Upon receipt of the SERVICE ACCEPT message, the UE in 5GMM-SERVICE-REQUEST-INITIATED state shall reset the service request attempt counter and enter 5GMM-REGISTERED.\nStart State: 5GMM-SERVICE-REQUEST-INITIATED\nCondition: upon receipt of the SERVICE ACCEPT message\nAction: reset the service request attempt counter and enter 5GMM-REGISTERED\nEnd State: 5GMM-REGISTERED",
    "Sentence: The contents of this clause are informative.\nNO EVENT",
];

/// Service-backed extractor: renders the extraction prompt for each sentence
/// and parses the labeled four-field reply.
pub struct ServiceExtractionBackend {
    client: Arc<ServiceClient>,
    examples: String,
    max_response_chars: usize,
}

impl ServiceExtractionBackend {
    pub fn new(client: Arc<ServiceClient>, examples_per_spec: usize, max_response_chars: usize) -> Self {
        let examples = DEFAULT_ICL_EXAMPLES
            .iter()
            .take(examples_per_spec.max(1))
            .copied()
            .collect::<Vec<_>>()
            .join("\n\n");
        Self {
            client,
            examples,
            max_response_chars,
        }
    }
}

impl ExtractionBackend for ServiceExtractionBackend {
    fn extract_sentence(&self, sentence: &SentenceRecord) -> Result<Option<RawSca>, BackendError> {
        let mut slots = BTreeMap::new();
        slots.insert("examples".to_string(), self.examples.clone());
        slots.insert("sentence".to_string(), sentence.text.clone());
        let response = self.client.complete(&crate::backends::PromptRequest {
            template_id: "sca_extract".to_string(),
            slots,
            max_response_chars: self.max_response_chars,
        })?;
        parse_sca_response(&response)
    }

    fn name(&self) -> &'static str {
        "service"
    }
}

/// Configurable state-name lexicon for the pattern backend.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StateLexicon {
    pub state_prefixes: Vec<String>,
}

impl Default for StateLexicon {
    fn default() -> Self {
        Self {
            state_prefixes: ["5GMM", "5GSM", "EMM", "ESM", "GMM", "RRC", "CM", "ECM"]
                .iter()
                .map(|s| s.to_string())
                .collect(),
        }
    }
}

impl StateLexicon {
    fn state_pattern(&self) -> String {
        let prefixes = self
            .state_prefixes
            .iter()
            .map(|p| regex::escape(p))
            .collect::<Vec<_>>()
            .join("|");
        format!(r"(?:{prefixes})[-_ ][A-Z0-9][A-Z0-9_-]*")
    }
}

static MODAL_RE: Lazy<Regex> =
    Lazy::new(|| Regex::new(r"\b(shall|enters?|initiates?)\b").unwrap());
static CONDITION_CUE_RE: Lazy<Regex> =
    Lazy::new(|| Regex::new(r"(?i)\b(upon receipt of|if|when)\b").unwrap());
static STATE_STOP_RE: Lazy<Regex> =
    Lazy::new(|| Regex::new(r"\s+(?:after|when|if|upon|while|because|unless)\b").unwrap());

/// State captures end at clause punctuation; a trailing subordinate clause
/// ("... after it has started ...") is not part of the state.
fn trim_state_capture(capture: &str) -> String {
    let cut = STATE_STOP_RE
        .find(capture)
        .map(|m| m.start())
        .unwrap_or(capture.len());
    capture[..cut].trim().to_string()
}

/// Deterministic extractor driven by condition cues ("upon receipt of",
/// "if", "when"), the "shall"/"enters"/"initiates" modals, and the state
/// lexicon. It never infers missing fields: anything it cannot read off the
/// sentence surface stays the sentinel.
pub struct PatternBackend {
    start_re: Regex,
    end_re: Regex,
}

impl Default for PatternBackend {
    fn default() -> Self {
        Self::new(&StateLexicon::default())
    }
}

impl PatternBackend {
    pub fn new(lexicon: &StateLexicon) -> Self {
        let state = lexicon.state_pattern();
        Self {
            start_re: Regex::new(&format!(r"\bin\s+(?:the\s+state\s+)?({state}[^,.;]*)")).unwrap(),
            end_re: Regex::new(&format!(
                r"\benters?\s+(?:the\s+state\s+)?({state}[^,.;]*)"
            ))
            .unwrap(),
        }
    }
}

impl ExtractionBackend for PatternBackend {
    fn extract_sentence(&self, sentence: &SentenceRecord) -> Result<Option<RawSca>, BackendError> {
        let text = sentence.text.as_str();
        let Some(modal) = MODAL_RE.find(text) else {
            return Ok(None);
        };

        let cue = CONDITION_CUE_RE.find(text);
        let condition = match cue {
            Some(c) if c.start() < modal.start() => {
                // Fronted condition clause: up to the comma that closes it.
                let end = text[c.start()..modal.start()]
                    .find(", ")
                    .map(|p| c.start() + p)
                    .unwrap_or(modal.start());
                text[c.start()..end].trim().trim_end_matches(',').to_string()
            }
            Some(c) => text[c.start()..].trim().trim_end_matches('.').to_string(),
            None => SENTINEL.to_string(),
        };

        let action_region_end = match cue {
            Some(c) if c.start() > modal.end() => c.start(),
            _ => text.len(),
        };
        let action_raw = if modal.as_str().starts_with("shall") {
            &text[modal.end()..action_region_end]
        } else {
            &text[modal.start()..action_region_end]
        };
        let action = non_empty_or_sentinel(action_raw.trim().trim_end_matches('.'));

        let start = self
            .start_re
            .captures(&text[..modal.start()])
            .map(|c| trim_state_capture(c.get(1).unwrap().as_str()))
            .unwrap_or_else(|| SENTINEL.to_string());
        let end = self
            .end_re
            .captures(text)
            .map(|c| trim_state_capture(c.get(1).unwrap().as_str()))
            .unwrap_or_else(|| SENTINEL.to_string());

        Ok(Some(RawSca {
            start,
            condition: non_empty_or_sentinel(&condition),
            action,
            end,
        }))
    }

    fn name(&self) -> &'static str {
        "pattern"
    }
}
