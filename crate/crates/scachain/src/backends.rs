//! Inference-service client and the judge implementations shared by
//! extraction, semantic linking, causal linking, and the security oracle.
//!
//! Every service call goes through [`ServiceClient::complete`], which renders
//! a prompt template, consults an on-disk response cache keyed by the content
//! hash of the rendered prompt, and only then talks to the endpoint with
//! bounded retries. With a frozen cache a run makes zero network calls, which
//! is what makes the otherwise model-dependent pipeline replayable in CI.
//!
//! The deterministic fallbacks live here too: [`similarity_fallback`] (term
//! frequency cosine) and [`causal_fallback`] (enabling-lexicon match).

use crate::oracle::{AttackAction, CheckContext, SecurityProperty};
use crate::sca::{ScaNode, SENTINEL, SENTINEL_CANONICAL};
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, HashMap};
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::{Arc, Condvar, Mutex};
use std::time::Duration;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum BackendError {
    #[error("inference endpoint unavailable after {attempts} attempts: {detail}")]
    Unavailable { attempts: u32, detail: String },
    #[error("backend response exceeds {limit} characters")]
    ResponseTooLarge { limit: usize },
    #[error("malformed backend output: {0}")]
    Malformed(String),
    #[error("prompt template error: {0}")]
    Template(String),
    #[error("response cache error: {0}")]
    Cache(String),
}

/// A fully specified prompt: template id, slot values, and the response size
/// bound enforced on the reply.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PromptRequest {
    pub template_id: String,
    pub slots: BTreeMap<String, String>,
    pub max_response_chars: usize,
}

const TEMPLATES: &[(&str, &str)] = &[
    (
        "sca_extract",
        "You label sentences from cellular protocol specifications.\n\
         Decide whether the sentence describes a function event: a self-contained transition with a trigger and a mandated operation.\n\
         If it does not, reply with exactly: NO EVENT\n\
         If it does, reply with exactly four lines:\n\
         Start State: <text or Not explicitly defined>\n\
         Condition: <text or Not explicitly defined>\n\
         Action: <text or Not explicitly defined>\n\
         End State: <text or Not explicitly defined>\n\
         Keep any clause reference (for example: as specified in subclause X.Y.Z) verbatim in the most relevant field.\n\
         Infer missing states from context when the sentence implies them; otherwise write Not explicitly defined.\n\n\
         {examples}\n\nSentence: {sentence}",
    ),
    (
        "semantic_verify",
        "Two protocol state descriptions follow. Answer YES on the first line if they describe the same specification state (entailment or equivalence), NO otherwise.\n\
         State A: {a}\nState B: {b}",
    ),
    (
        "causal_verify",
        "Two specification transitions follow. Answer YES on the first line if the first transition's state, condition, or action establishes a prerequisite for the second one, NO otherwise.\n\
         First: {src}\nSecond: {dst}",
    ),
    (
        "property_check",
        "A security property, an adversarial action, and one specification transition follow.\n\
         Answer YES on the first line if applying the action to the transition's message can break the property, NO otherwise. After the verdict line, give a one-sentence rationale.\n\
         Property {property_id}: {property_description}\nAttack action: {attack}\nTransition: {node}\nChain context: {context}",
    ),
];

/// Renders a template with the request's slots. Every `{slot}` placeholder
/// named by the template must be filled.
pub fn render_template(request: &PromptRequest) -> Result<String, BackendError> {
    let template = TEMPLATES
        .iter()
        .find(|(id, _)| *id == request.template_id)
        .map(|(_, t)| *t)
        .ok_or_else(|| {
            BackendError::Template(format!("unknown template '{}'", request.template_id))
        })?;
    let mut rendered = template.to_string();
    for (name, value) in &request.slots {
        rendered = rendered.replace(&format!("{{{name}}}"), value);
    }
    if let Some(m) = regex::Regex::new(r"\{[a-z_]+\}").unwrap().find(&rendered) {
        return Err(BackendError::Template(format!(
            "slot {} not filled for template '{}'",
            m.as_str(),
            request.template_id
        )));
    }
    Ok(rendered)
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    use sha2::{Digest, Sha256};
    hex::encode(Sha256::digest(bytes))
}

/// One cache record; `request_digest` is the sha-256 of the rendered prompt,
/// stable across runs for identical prompts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CachedResponse {
    pub request_digest: String,
    pub template_id: String,
    pub response_text: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub timestamp: Option<u64>,
}

/// Disk-backed response cache: JSON lines, loaded once, appended on insert.
pub struct ResponseCache {
    path: Option<PathBuf>,
    entries: Mutex<HashMap<String, CachedResponse>>,
}

impl ResponseCache {
    pub fn in_memory() -> Self {
        Self {
            path: None,
            entries: Mutex::new(HashMap::new()),
        }
    }

    pub fn open(path: &Path) -> Result<Self, BackendError> {
        let mut entries = HashMap::new();
        if path.exists() {
            let data = std::fs::read_to_string(path)
                .map_err(|e| BackendError::Cache(format!("{}: {e}", path.display())))?;
            for (no, line) in data.lines().enumerate() {
                if line.trim().is_empty() {
                    continue;
                }
                let record: CachedResponse = serde_json::from_str(line).map_err(|e| {
                    BackendError::Cache(format!("{} line {}: {e}", path.display(), no + 1))
                })?;
                entries.insert(record.request_digest.clone(), record);
            }
        }
        Ok(Self {
            path: Some(path.to_path_buf()),
            entries: Mutex::new(entries),
        })
    }

    pub fn get(&self, digest: &str) -> Option<String> {
        self.entries
            .lock()
            .unwrap()
            .get(digest)
            .map(|r| r.response_text.clone())
    }

    /// Insert-if-absent; concurrent extractors may race on the same digest
    /// and the first stored response wins.
    pub fn insert(&self, record: CachedResponse) -> Result<(), BackendError> {
        let mut entries = self.entries.lock().unwrap();
        if entries.contains_key(&record.request_digest) {
            return Ok(());
        }
        if let Some(path) = &self.path {
            let mut file = std::fs::OpenOptions::new()
                .create(true)
                .append(true)
                .open(path)
                .map_err(|e| BackendError::Cache(format!("{}: {e}", path.display())))?;
            let line = serde_json::to_string(&record)
                .map_err(|e| BackendError::Cache(e.to_string()))?;
            writeln!(file, "{line}")
                .map_err(|e| BackendError::Cache(format!("{}: {e}", path.display())))?;
        }
        entries.insert(record.request_digest.clone(), record);
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.entries.lock().unwrap().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Counting semaphore bounding concurrent in-flight endpoint calls.
struct Limiter {
    permits: Mutex<usize>,
    cv: Condvar,
}

impl Limiter {
    fn new(permits: usize) -> Self {
        Self {
            permits: Mutex::new(permits.max(1)),
            cv: Condvar::new(),
        }
    }

    fn acquire(&self) -> LimiterGuard<'_> {
        let mut permits = self.permits.lock().unwrap();
        while *permits == 0 {
            permits = self.cv.wait(permits).unwrap();
        }
        *permits -= 1;
        LimiterGuard { limiter: self }
    }
}

struct LimiterGuard<'a> {
    limiter: &'a Limiter,
}

impl Drop for LimiterGuard<'_> {
    fn drop(&mut self) {
        *self.limiter.permits.lock().unwrap() += 1;
        self.limiter.cv.notify_one();
    }
}

pub const ENDPOINT_ENV: &str = "MODEL_ENDPOINT_URL";
pub const API_KEY_ENV: &str = "MODEL_API_KEY";

#[derive(Debug, Clone)]
pub struct ServiceSettings {
    pub endpoint: Option<String>,
    pub max_concurrency: usize,
    pub retry_attempts: u32,
    pub backoff_ms: u64,
}

impl Default for ServiceSettings {
    fn default() -> Self {
        Self {
            endpoint: None,
            max_concurrency: 4,
            retry_attempts: 3,
            backoff_ms: 1000,
        }
    }
}

#[derive(Deserialize)]
struct EndpointReply {
    text: String,
}

/// Blocking client for the inference endpoint. The endpoint URL comes from
/// settings or `MODEL_ENDPOINT_URL`; the credential from `MODEL_API_KEY`.
pub struct ServiceClient {
    endpoint: String,
    api_key: Option<String>,
    http: reqwest::blocking::Client,
    cache: ResponseCache,
    limiter: Limiter,
    retry_attempts: u32,
    backoff: Duration,
}

impl ServiceClient {
    pub fn new(settings: ServiceSettings, cache: ResponseCache) -> Result<Arc<Self>, BackendError> {
        let endpoint = settings
            .endpoint
            .or_else(|| std::env::var(ENDPOINT_ENV).ok())
            .ok_or_else(|| BackendError::Unavailable {
                attempts: 0,
                detail: format!("no endpoint configured ({ENDPOINT_ENV} unset)"),
            })?;
        let http = reqwest::blocking::Client::builder()
            .timeout(Duration::from_secs(60))
            .build()
            .map_err(|e| BackendError::Unavailable {
                attempts: 0,
                detail: e.to_string(),
            })?;
        Ok(Arc::new(Self {
            endpoint,
            api_key: std::env::var(API_KEY_ENV).ok(),
            http,
            cache,
            limiter: Limiter::new(settings.max_concurrency),
            retry_attempts: settings.retry_attempts.max(1),
            backoff: Duration::from_millis(settings.backoff_ms),
        }))
    }

    pub fn cache(&self) -> &ResponseCache {
        &self.cache
    }

    /// Returns the cached response when present; otherwise calls the endpoint
    /// with exponential backoff (base delay doubling per attempt), stores the
    /// reply, and returns it.
    pub fn complete(&self, request: &PromptRequest) -> Result<String, BackendError> {
        let rendered = render_template(request)?;
        let digest = sha256_hex(rendered.as_bytes());
        if let Some(hit) = self.cache.get(&digest) {
            return Ok(hit);
        }

        let _permit = self.limiter.acquire();
        // Another worker may have filled the entry while we waited.
        if let Some(hit) = self.cache.get(&digest) {
            return Ok(hit);
        }

        let mut last_error = String::new();
        for attempt in 0..self.retry_attempts {
            if attempt > 0 {
                std::thread::sleep(self.backoff * (1 << (attempt - 1)));
            }
            let mut call = self
                .http
                .post(&self.endpoint)
                .json(&serde_json::json!({ "prompt": rendered }));
            if let Some(key) = &self.api_key {
                call = call.bearer_auth(key);
            }
            match call.send() {
                Ok(response) if response.status().is_success() => {
                    let reply: EndpointReply = response
                        .json()
                        .map_err(|e| BackendError::Malformed(e.to_string()))?;
                    if reply.text.chars().count() > request.max_response_chars {
                        return Err(BackendError::ResponseTooLarge {
                            limit: request.max_response_chars,
                        });
                    }
                    self.cache.insert(CachedResponse {
                        request_digest: digest,
                        template_id: request.template_id.clone(),
                        response_text: reply.text.clone(),
                        timestamp: Some(
                            std::time::SystemTime::now()
                                .duration_since(std::time::UNIX_EPOCH)
                                .map(|d| d.as_secs())
                                .unwrap_or(0),
                        ),
                    })?;
                    return Ok(reply.text);
                }
                Ok(response) => last_error = format!("status {}", response.status()),
                Err(e) => last_error = e.to_string(),
            }
        }
        Err(BackendError::Unavailable {
            attempts: self.retry_attempts,
            detail: last_error,
        })
    }
}

/// Strict verdict parse: the first non-blank line must be YES or NO.
pub fn parse_verdict(text: &str) -> Result<bool, BackendError> {
    match text.lines().map(str::trim).find(|l| !l.is_empty()) {
        Some(l) if l.eq_ignore_ascii_case("yes") => Ok(true),
        Some(l) if l.eq_ignore_ascii_case("no") => Ok(false),
        other => Err(BackendError::Malformed(format!(
            "expected YES/NO verdict, got {other:?}"
        ))),
    }
}

fn is_blank_or_sentinel(s: &str) -> bool {
    let t = s.trim();
    t.is_empty() || t == SENTINEL || t == SENTINEL_CANONICAL
}

/// Cosine similarity of term-frequency vectors over lowercased word tokens;
/// 0 when either side is empty or the sentinel.
pub fn similarity_fallback(a: &str, b: &str) -> f64 {
    if is_blank_or_sentinel(a) || is_blank_or_sentinel(b) {
        return 0.0;
    }
    let count = |s: &str| {
        let mut tf: HashMap<String, f64> = HashMap::new();
        for token in crate::metrics::tokenize_words(s) {
            *tf.entry(token).or_insert(0.0) += 1.0;
        }
        tf
    };
    let ta = count(a);
    let tb = count(b);
    if ta.is_empty() || tb.is_empty() {
        return 0.0;
    }
    let dot: f64 = ta
        .iter()
        .filter_map(|(tok, ca)| tb.get(tok).map(|cb| ca * cb))
        .sum();
    let norm = |tf: &HashMap<String, f64>| tf.values().map(|c| c * c).sum::<f64>().sqrt();
    dot / (norm(&ta) * norm(&tb))
}

/// One enabling rule: when every `action_tokens` substring occurs in the
/// source node's action, and every `requires_tokens` substring occurs within
/// the destination's start state alone or condition alone, the source enables
/// the destination.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnablingRule {
    pub action_tokens: Vec<String>,
    pub requires_tokens: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnablingLexicon {
    pub rules: Vec<EnablingRule>,
}

impl Default for EnablingLexicon {
    fn default() -> Self {
        let rule = |a: &[&str], r: &[&str]| EnablingRule {
            action_tokens: a.iter().map(|s| s.to_string()).collect(),
            requires_tokens: r.iter().map(|s| s.to_string()).collect(),
        };
        Self {
            rules: vec![
                rule(&["establish", "signalling connection"], &["signalling connection"]),
                rule(
                    &["initiate", "registration procedure"],
                    &["registration procedure", "radio capability"],
                ),
                rule(&["activate", "security context"], &["security context"]),
            ],
        }
    }
}

/// True iff the source node's action establishes something the destination's
/// start state or condition requires, per the enabling lexicon. A sentinel
/// action enables nothing; sentinel fields on the destination are ignored.
pub fn causal_fallback(src: &ScaNode, dst: &ScaNode, lexicon: &EnablingLexicon) -> bool {
    if crate::sca::is_sentinel(&src.action) {
        return false;
    }
    let action = src.action.to_lowercase();
    let mut targets: Vec<String> = Vec::new();
    if !dst.start_state.is_sentinel() {
        targets.push(dst.start_state.raw().to_lowercase());
    }
    if !crate::sca::is_sentinel(&dst.condition) {
        targets.push(dst.condition.to_lowercase());
    }
    lexicon.rules.iter().any(|rule| {
        rule.action_tokens.iter().all(|t| action.contains(t))
            && targets
                .iter()
                .any(|field| rule.requires_tokens.iter().all(|t| field.contains(t)))
    })
}

/// Judge deciding whether two state descriptions are semantically related.
/// `verify` is the optional second gate; judges without one return `None`.
pub trait SimilarityJudge: Sync {
    fn score(&self, a: &str, b: &str) -> Result<f64, BackendError>;

    fn verify(&self, _a: &str, _b: &str) -> Result<Option<bool>, BackendError> {
        Ok(None)
    }
}

/// Judge deciding whether one node enables another.
pub trait CausalJudge: Sync {
    fn causal(&self, src: &ScaNode, dst: &ScaNode) -> Result<bool, BackendError>;
}

/// Judge deciding whether an attacked node can break a security property.
/// Returns the rationale when it can.
pub trait PropertyJudge: Sync {
    fn check(
        &self,
        property: &SecurityProperty,
        node: &ScaNode,
        action: AttackAction,
        ctx: &CheckContext,
    ) -> Result<Option<String>, BackendError>;
}

/// Deterministic similarity judge: TF cosine, no verification stage.
#[derive(Default)]
pub struct FallbackSimilarityJudge;

impl SimilarityJudge for FallbackSimilarityJudge {
    fn score(&self, a: &str, b: &str) -> Result<f64, BackendError> {
        Ok(similarity_fallback(a, b))
    }
}

/// Deterministic causal judge backed by the enabling lexicon.
#[derive(Default)]
pub struct LexiconCausalJudge {
    pub lexicon: EnablingLexicon,
}

impl CausalJudge for LexiconCausalJudge {
    fn causal(&self, src: &ScaNode, dst: &ScaNode) -> Result<bool, BackendError> {
        Ok(causal_fallback(src, dst, &self.lexicon))
    }
}

fn node_summary(node: &ScaNode) -> String {
    format!(
        "start: {} | condition: {} | action: {} | end: {}",
        node.start_state.raw(),
        node.condition,
        node.action,
        node.end_state.raw()
    )
}

/// Service-backed similarity judge: the score gate stays the deterministic
/// cosine, pairs passing it are confirmed through the verification prompt.
pub struct ServiceSimilarityJudge {
    pub client: Arc<ServiceClient>,
    pub max_response_chars: usize,
}

impl SimilarityJudge for ServiceSimilarityJudge {
    fn score(&self, a: &str, b: &str) -> Result<f64, BackendError> {
        Ok(similarity_fallback(a, b))
    }

    fn verify(&self, a: &str, b: &str) -> Result<Option<bool>, BackendError> {
        let mut slots = BTreeMap::new();
        slots.insert("a".to_string(), a.to_string());
        slots.insert("b".to_string(), b.to_string());
        let reply = self.client.complete(&PromptRequest {
            template_id: "semantic_verify".to_string(),
            slots,
            max_response_chars: self.max_response_chars,
        })?;
        parse_verdict(&reply).map(Some)
    }
}

pub struct ServiceCausalJudge {
    pub client: Arc<ServiceClient>,
    pub max_response_chars: usize,
}

impl CausalJudge for ServiceCausalJudge {
    fn causal(&self, src: &ScaNode, dst: &ScaNode) -> Result<bool, BackendError> {
        let mut slots = BTreeMap::new();
        slots.insert("src".to_string(), node_summary(src));
        slots.insert("dst".to_string(), node_summary(dst));
        let reply = self.client.complete(&PromptRequest {
            template_id: "causal_verify".to_string(),
            slots,
            max_response_chars: self.max_response_chars,
        })?;
        parse_verdict(&reply)
    }
}

pub struct ServicePropertyJudge {
    pub client: Arc<ServiceClient>,
    pub max_response_chars: usize,
}

impl PropertyJudge for ServicePropertyJudge {
    fn check(
        &self,
        property: &SecurityProperty,
        node: &ScaNode,
        action: AttackAction,
        ctx: &CheckContext,
    ) -> Result<Option<String>, BackendError> {
        let mut slots = BTreeMap::new();
        slots.insert("property_id".to_string(), property.property_id.clone());
        slots.insert(
            "property_description".to_string(),
            property.description.clone(),
        );
        slots.insert("attack".to_string(), action.id().to_string());
        slots.insert("node".to_string(), node_summary(node));
        slots.insert("context".to_string(), ctx.neighborhood.clone());
        let reply = self.client.complete(&PromptRequest {
            template_id: "property_check".to_string(),
            slots,
            max_response_chars: self.max_response_chars,
        })?;
        if parse_verdict(&reply)? {
            let rationale = reply
                .lines()
                .map(str::trim)
                .filter(|l| !l.is_empty())
                .nth(1)
                .unwrap_or("flagged by the service judge")
                .to_string();
            Ok(Some(rationale))
        } else {
            Ok(None)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::{BufRead, BufReader, Read, Write as IoWrite};
    use std::net::TcpListener;
    use std::sync::atomic::{AtomicUsize, Ordering};

    fn request(template_id: &str, slots: &[(&str, &str)]) -> PromptRequest {
        PromptRequest {
            template_id: template_id.to_string(),
            slots: slots
                .iter()
                .map(|(k, v)| (k.to_string(), v.to_string()))
                .collect(),
            max_response_chars: 4000,
        }
    }

    /// Minimal HTTP endpoint answering every POST with a fixed JSON reply.
    /// Returns (url, hit counter).
    fn stub_endpoint(reply_text: &str) -> (String, Arc<AtomicUsize>) {
        let listener = TcpListener::bind("127.0.0.1:0").unwrap();
        let addr = listener.local_addr().unwrap();
        let hits = Arc::new(AtomicUsize::new(0));
        let counter = Arc::clone(&hits);
        let body = serde_json::json!({ "text": reply_text }).to_string();
        std::thread::spawn(move || {
            for stream in listener.incoming() {
                let Ok(mut stream) = stream else { break };
                counter.fetch_add(1, Ordering::SeqCst);
                let mut reader = BufReader::new(stream.try_clone().unwrap());
                let mut content_length = 0usize;
                loop {
                    let mut line = String::new();
                    if reader.read_line(&mut line).is_err() || line == "\r\n" || line.is_empty() {
                        break;
                    }
                    if let Some(v) = line.to_lowercase().strip_prefix("content-length:") {
                        content_length = v.trim().parse().unwrap_or(0);
                    }
                }
                let mut body_buf = vec![0u8; content_length];
                let _ = reader.read_exact(&mut body_buf);
                let response = format!(
                    "HTTP/1.1 200 OK\r\ncontent-type: application/json\r\ncontent-length: {}\r\n\r\n{}",
                    body.len(),
                    body
                );
                let _ = stream.write_all(response.as_bytes());
            }
        });
        (format!("http://{addr}/complete"), hits)
    }

    fn client_for(endpoint: &str, cache: ResponseCache) -> Arc<ServiceClient> {
        ServiceClient::new(
            ServiceSettings {
                endpoint: Some(endpoint.to_string()),
                max_concurrency: 2,
                retry_attempts: 2,
                backoff_ms: 1,
            },
            cache,
        )
        .unwrap()
    }

    #[test]
    fn template_rendering_requires_every_slot() {
        let err = render_template(&request("semantic_verify", &[("a", "x")])).unwrap_err();
        assert!(matches!(err, BackendError::Template(_)));
        let ok = render_template(&request("semantic_verify", &[("a", "x"), ("b", "y")])).unwrap();
        assert!(ok.contains("State A: x"));
    }

    #[test]
    fn identical_requests_in_one_run_hit_the_endpoint_once() {
        let (url, hits) = stub_endpoint("NO");
        let client = client_for(&url, ResponseCache::in_memory());
        let req = request("semantic_verify", &[("a", "one"), ("b", "two")]);
        let first = client.complete(&req).unwrap();
        let second = client.complete(&req).unwrap();
        assert_eq!(first, second);
        assert_eq!(hits.load(Ordering::SeqCst), 1);
    }

    #[test]
    fn cached_request_makes_zero_network_calls() {
        let req = request("semantic_verify", &[("a", "one"), ("b", "two")]);
        let digest = sha256_hex(render_template(&req).unwrap().as_bytes());
        let cache = ResponseCache::in_memory();
        cache
            .insert(CachedResponse {
                request_digest: digest,
                template_id: "semantic_verify".to_string(),
                response_text: "YES".to_string(),
                timestamp: None,
            })
            .unwrap();
        // Port 9 on localhost is not listening; any network call would fail.
        let client = client_for("http://127.0.0.1:9/none", cache);
        assert_eq!(client.complete(&req).unwrap(), "YES");
    }

    #[test]
    fn endpoint_down_is_unavailable_after_retries() {
        let client = client_for("http://127.0.0.1:9/none", ResponseCache::in_memory());
        let err = client
            .complete(&request("semantic_verify", &[("a", "x"), ("b", "y")]))
            .unwrap_err();
        match err {
            BackendError::Unavailable { attempts, .. } => assert_eq!(attempts, 2),
            other => panic!("expected Unavailable, got {other:?}"),
        }
    }

    #[test]
    fn oversized_reply_is_rejected() {
        let (url, _) = stub_endpoint("this reply is far too long");
        let client = client_for(&url, ResponseCache::in_memory());
        let mut req = request("semantic_verify", &[("a", "x"), ("b", "y")]);
        req.max_response_chars = 5;
        assert!(matches!(
            client.complete(&req),
            Err(BackendError::ResponseTooLarge { limit: 5 })
        ));
    }

    #[test]
    fn cache_round_trips_through_disk() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("cache.jsonl");
        {
            let cache = ResponseCache::open(&path).unwrap();
            cache
                .insert(CachedResponse {
                    request_digest: "d1".to_string(),
                    template_id: "semantic_verify".to_string(),
                    response_text: "YES".to_string(),
                    timestamp: Some(7),
                })
                .unwrap();
        }
        let reopened = ResponseCache::open(&path).unwrap();
        assert_eq!(reopened.get("d1").as_deref(), Some("YES"));
        assert_eq!(reopened.len(), 1);
    }

    #[test]
    fn verdict_parse_is_strict() {
        assert!(parse_verdict("YES\nbecause").unwrap());
        assert!(!parse_verdict("  no ").unwrap());
        assert!(parse_verdict("maybe").is_err());
    }

    #[test]
    fn similarity_identical_and_disjoint() {
        assert!((similarity_fallback("same words here", "same words here") - 1.0).abs() < 1e-12);
        assert_eq!(similarity_fallback("alpha beta", "gamma delta"), 0.0);
        assert_eq!(similarity_fallback("", "anything"), 0.0);
        assert_eq!(similarity_fallback(SENTINEL, "anything"), 0.0);
        assert_eq!(similarity_fallback(SENTINEL_CANONICAL, "anything"), 0.0);
    }

    #[test]
    fn similarity_hand_computed_cosine() {
        // TF vectors (1,1,1) and (1,1,0): cos = 2 / sqrt(3*2).
        let expected = 2.0 / 6.0_f64.sqrt();
        assert!((similarity_fallback("5gmm idle mode", "5gmm idle") - expected).abs() < 1e-12);
    }

    fn node(action: &str, start: &str, condition: &str) -> ScaNode {
        ScaNode {
            node_id: 1,
            spec_id: "TS 24.501".to_string(),
            clause_id: "5.4".to_string(),
            sentence_id: 1,
            start_state: crate::sca::StateText::new(start),
            condition: condition.to_string(),
            action: action.to_string(),
            end_state: crate::sca::StateText::sentinel(),
            references: vec![],
        }
    }

    #[test]
    fn causal_fallback_matches_enabling_lexicon() {
        let lexicon = EnablingLexicon::default();
        let src = node("establishes an N1 NAS signalling connection", SENTINEL, SENTINEL);
        let dst = node(SENTINEL, "signalling connection is already active", SENTINEL);
        assert!(causal_fallback(&src, &dst, &lexicon));

        let unrelated = node(SENTINEL, "timer T3510 is running", SENTINEL);
        assert!(!causal_fallback(&src, &unrelated, &lexicon));

        let sentinel_src = node(SENTINEL, SENTINEL, SENTINEL);
        assert!(!causal_fallback(&sentinel_src, &dst, &lexicon));
    }

    #[test]
    fn causal_fallback_requires_tokens_within_one_field() {
        let lexicon = EnablingLexicon::default();
        let src = node(
            "initiate the registration procedure for the update",
            SENTINEL,
            SENTINEL,
        );
        // requires = ["registration procedure", "radio capability"]; split
        // across start and condition the pair must not count.
        let split = node(
            SENTINEL,
            "the registration procedure is ongoing",
            "a radio capability change occurred",
        );
        assert!(!causal_fallback(&src, &split, &lexicon));

        let joined = node(
            SENTINEL,
            SENTINEL,
            "the registration procedure was triggered by a radio capability change",
        );
        assert!(causal_fallback(&src, &joined, &lexicon));
    }
}
