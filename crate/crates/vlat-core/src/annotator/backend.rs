//! Chat-completion backends: the wire request shape, the backend trait with
//! retry/rate-limit submission, and the deterministic mock and replay
//! backends used for offline runs and tests.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;
use std::sync::Mutex;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use super::batch::BatchRequest;
use crate::taxonomy::Label;

/// One message of a chat-completion request.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatMessage {
    pub role: String,
    pub content: String,
}

/// The full wire request: a system+user message pair plus sampling settings.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ChatRequest {
    pub model: String,
    pub temperature: f64,
    pub structured_output: bool,
    pub messages: Vec<ChatMessage>,
}

impl ChatRequest {
    pub fn from_batch(batch: &BatchRequest, config: &BackendConfig) -> ChatRequest {
        ChatRequest {
            model: config.model_name.clone(),
            temperature: config.temperature,
            structured_output: config.structured_output,
            messages: vec![
                ChatMessage {
                    role: "system".into(),
                    content: batch.rendered_system.clone(),
                },
                ChatMessage {
                    role: "user".into(),
                    content: batch.rendered_user.clone(),
                },
            ],
        }
    }

    /// Content hash used as the replay-fixture key.
    pub fn digest(&self) -> String {
        let mut hasher = Sha256::new();
        hasher.update(self.model.as_bytes());
        hasher.update(self.temperature.to_le_bytes());
        hasher.update([self.structured_output as u8]);
        for message in &self.messages {
            hasher.update(message.role.as_bytes());
            hasher.update([0]);
            hasher.update(message.content.as_bytes());
            hasher.update([0]);
        }
        hex_string(&hasher.finalize())
    }
}

fn hex_string(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

/// Token counts reported by a backend, when it reports them.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TokenUsage {
    pub prompt_tokens: u64,
    pub completion_tokens: u64,
}

/// A backend's textual completion.
#[derive(Debug, Clone, PartialEq)]
pub struct Completion {
    pub text: String,
    pub usage: Option<TokenUsage>,
}

#[derive(Debug, Error)]
pub enum BackendError {
    /// Worth retrying: timeouts, rate-limit responses, 5xx-class failures.
    #[error("transient backend failure: {0}")]
    Transient(String),
    #[error("authentication failure: {0}")]
    Auth(String),
    #[error("backend failure: {0}")]
    Fatal(String),
    #[error("retries exhausted after {attempts} attempts: {last}")]
    RetriesExhausted { attempts: u32, last: String },
    #[error("malformed endpoint {0:?}: {1}")]
    MalformedEndpoint(String, String),
}

/// Connection and sampling settings for a chat-completion backend.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BackendConfig {
    pub endpoint: String,
    pub model_name: String,
    pub temperature: f64,
    pub structured_output: bool,
    pub max_retries: u32,
    pub request_timeout: Duration,
    /// Requests per minute across all concurrent batches; 0 disables limiting.
    pub rate_limit_per_min: f64,
    /// Name of the environment variable holding the bearer token.
    pub api_key_env: String,
    /// First retry delay; doubles per attempt.
    pub backoff_base: Duration,
}

impl Default for BackendConfig {
    fn default() -> Self {
        BackendConfig {
            endpoint: "https://api.openai.com/v1/chat/completions".into(),
            model_name: "annotator-model".into(),
            temperature: 0.1,
            structured_output: true,
            max_retries: 3,
            request_timeout: Duration::from_secs(120),
            rate_limit_per_min: 0.0,
            api_key_env: "VLAT_API_KEY".into(),
            backoff_base: Duration::from_millis(500),
        }
    }
}

#[derive(Debug, Error)]
#[error("invalid backend config: {0}")]
pub struct ConfigError(pub String);

impl BackendConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        if !(0.0..=2.0).contains(&self.temperature) {
            return Err(ConfigError(format!(
                "temperature {} outside [0, 2]",
                self.temperature
            )));
        }
        if self.rate_limit_per_min < 0.0 {
            return Err(ConfigError("rate limit must be non-negative".into()));
        }
        Ok(())
    }
}

/// Anything that can answer a chat-completion request.
pub trait Backend: Send + Sync {
    fn complete(&self, request: &ChatRequest) -> Result<Completion, BackendError>;
    fn name(&self) -> &str;
}

/// Shared minimum-interval rate limiter; safe under concurrent use.
pub struct RateLimiter {
    interval: Duration,
    next_free: Mutex<Instant>,
}

impl RateLimiter {
    pub fn new(requests_per_minute: f64) -> RateLimiter {
        let interval = if requests_per_minute > 0.0 {
            Duration::from_secs_f64(60.0 / requests_per_minute)
        } else {
            Duration::ZERO
        };
        RateLimiter {
            interval,
            next_free: Mutex::new(Instant::now()),
        }
    }

    /// Block until a request slot is available.
    pub fn acquire(&self) {
        if self.interval.is_zero() {
            return;
        }
        let wait = {
            let mut next_free = self.next_free.lock().unwrap();
            let now = Instant::now();
            let start = (*next_free).max(now);
            *next_free = start + self.interval;
            start.saturating_duration_since(now)
        };
        if !wait.is_zero() {
            std::thread::sleep(wait);
        }
    }
}

/// A completed submission plus how many retries it took.
#[derive(Debug, Clone, PartialEq)]
pub struct SubmitOutcome {
    pub completion: Completion,
    pub retries: u32,
}

/// Send one batch request, honoring the shared rate limit and retrying
/// transient failures with exponential backoff up to `config.max_retries`.
pub fn submit(
    backend: &dyn Backend,
    request: &BatchRequest,
    config: &BackendConfig,
    limiter: &RateLimiter,
) -> Result<SubmitOutcome, BackendError> {
    let chat = ChatRequest::from_batch(request, config);
    submit_chat(backend, &chat, config, limiter)
}

pub(crate) fn submit_chat(
    backend: &dyn Backend,
    chat: &ChatRequest,
    config: &BackendConfig,
    limiter: &RateLimiter,
) -> Result<SubmitOutcome, BackendError> {
    let mut attempt = 0u32;
    loop {
        limiter.acquire();
        match backend.complete(chat) {
            Ok(completion) => {
                return Ok(SubmitOutcome {
                    completion,
                    retries: attempt,
                })
            }
            Err(BackendError::Transient(message)) => {
                if attempt >= config.max_retries {
                    return Err(BackendError::RetriesExhausted {
                        attempts: attempt + 1,
                        last: message,
                    });
                }
                let delay = config.backoff_base.saturating_mul(1 << attempt.min(16));
                std::thread::sleep(delay);
                attempt += 1;
            }
            Err(other) => return Err(other),
        }
    }
}

/// One keyword-trigger rule of the mock backend.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LexiconRule {
    /// Case-insensitive substring that triggers the rule.
    pub trigger: String,
    /// Canonical label code assigned when the trigger matches.
    pub code: String,
}

/// Configuration of the deterministic mock backend.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct MockRules {
    /// First matching rule wins; unmatched posts are non-violent.
    #[serde(default)]
    pub rules: Vec<LexiconRule>,
    /// Posts containing any of these terms are silently dropped from the
    /// response, which makes the whole batch fail alignment. Used to test
    /// recovery paths.
    #[serde(default)]
    pub poison_terms: Vec<String>,
    /// Batch-size sensitivity dial: maps a request's post count to the coarse
    /// class distribution (non-violent, explicit, implicit) the mock enforces
    /// over that request via largest-remainder quotas. Posts are assigned in
    /// ordinal order (non-violent first), which also induces a position
    /// effect. When the post count has no entry, keyword rules apply.
    #[serde(default)]
    pub dial: BTreeMap<usize, [f64; 3]>,
}

impl MockRules {
    /// A small lexicon covering all seven labels.
    pub fn default_lexicon() -> MockRules {
        let rules = [
            ("beat him", "EV-D"),
            ("beat her", "EV-D"),
            ("deserves the rope", "EV-G"),
            ("kill them all", "EV-G"),
            ("end it tonight", "EV-S"),
            ("kill myself", "EV-S"),
            ("nasty accident", "IV-D"),
            ("what's coming", "IV-G"),
            ("get what they deserve", "IV-G"),
            ("without me around", "IV-S"),
            ("stopped showing up", "IV-S"),
        ]
        .into_iter()
        .map(|(trigger, code)| LexiconRule {
            trigger: trigger.to_string(),
            code: code.to_string(),
        })
        .collect();
        MockRules {
            rules,
            poison_terms: Vec::new(),
            dial: BTreeMap::new(),
        }
    }

    pub fn load(path: &Path) -> Result<MockRules, BackendError> {
        let file = File::open(path)
            .map_err(|e| BackendError::Fatal(format!("cannot read mock rules: {e}")))?;
        serde_json::from_reader(BufReader::new(file))
            .map_err(|e| BackendError::Fatal(format!("bad mock rules file: {e}")))
    }
}

/// Deterministic offline backend driven by keyword rules. Reasons echo the
/// matched trigger and the full post text, so alignment can be checked from
/// the output alone.
pub struct MockBackend {
    rules: MockRules,
}

impl MockBackend {
    pub fn new(rules: MockRules) -> MockBackend {
        MockBackend { rules }
    }

    pub fn with_default_lexicon() -> MockBackend {
        MockBackend::new(MockRules::default_lexicon())
    }

    fn label_for(&self, text: &str) -> (Label, Option<String>) {
        let lowered = text.to_lowercase();
        for rule in &self.rules.rules {
            if lowered.contains(&rule.trigger.to_lowercase()) {
                let label = Label::parse_code(&rule.code)
                    .unwrap_or(Label::NON_VIOLENT);
                return (label, Some(rule.trigger.clone()));
            }
        }
        (Label::NON_VIOLENT, None)
    }

    fn dial_labels(&self, shares: &[f64; 3], n: usize) -> Vec<Label> {
        let counts = largest_remainder_quotas(shares, n);
        let mut labels = Vec::with_capacity(n);
        for (class_idx, &count) in counts.iter().enumerate() {
            let label = match class_idx {
                0 => Label::NON_VIOLENT,
                1 => Label::parse_code("EV-G").unwrap(),
                _ => Label::parse_code("IV-G").unwrap(),
            };
            labels.extend(std::iter::repeat_n(label, count));
        }
        labels
    }
}

/// Integer quotas for `n` items matching `shares` as closely as possible:
/// floor allocation, then remaining items by largest fractional part (ties
/// toward the earlier class).
pub fn largest_remainder_quotas(shares: &[f64; 3], n: usize) -> [usize; 3] {
    let exact: Vec<f64> = shares.iter().map(|s| s * n as f64).collect();
    let mut counts = [0usize; 3];
    let mut assigned = 0usize;
    for i in 0..3 {
        counts[i] = exact[i].floor() as usize;
        assigned += counts[i];
    }
    let mut order: Vec<usize> = (0..3).collect();
    order.sort_by(|&a, &b| {
        let fa = exact[a] - exact[a].floor();
        let fb = exact[b] - exact[b].floor();
        fb.partial_cmp(&fa).unwrap().then(a.cmp(&b))
    });
    for &i in order.iter().cycle().take(n.saturating_sub(assigned)) {
        counts[i] += 1;
    }
    counts
}

fn parse_user_posts(content: &str) -> Vec<(u32, String)> {
    let mut posts = Vec::new();
    for line in content.lines() {
        if let Some(rest) = line.strip_prefix("Post ") {
            if let Some((number, text)) = rest.split_once(": ") {
                if let Ok(ordinal) = number.trim().parse::<u32>() {
                    posts.push((ordinal, text.to_string()));
                }
            }
        }
    }
    posts
}

impl Backend for MockBackend {
    fn complete(&self, request: &ChatRequest) -> Result<Completion, BackendError> {
        let user = request
            .messages
            .iter()
            .find(|m| m.role == "user")
            .ok_or_else(|| BackendError::Fatal("no user message".into()))?;
        let posts = parse_user_posts(&user.content);
        let dial_labels = self
            .rules
            .dial
            .get(&posts.len())
            .map(|shares| self.dial_labels(shares, posts.len()));
        let mut entries: Vec<(u32, Label, String)> = Vec::new();
        for (idx, (ordinal, text)) in posts.iter().enumerate() {
            if self
                .rules
                .poison_terms
                .iter()
                .any(|t| !t.is_empty() && text.contains(t))
            {
                continue; // dropped ordinal: the batch will fail alignment
            }
            let (label, trigger) = match &dial_labels {
                Some(labels) => (labels[idx], None),
                None => self.label_for(text),
            };
            let reason = match trigger {
                Some(t) => format!("most important words: '{t}'; echo: {text}"),
                None => format!("echo: {text}"),
            };
            entries.push((*ordinal, label, reason));
        }
        let text = if request.structured_output {
            let mut object = serde_json::Map::new();
            for (ordinal, label, reason) in &entries {
                let mut fields = serde_json::Map::new();
                fields.insert("reason".into(), serde_json::Value::String(reason.clone()));
                fields.insert(
                    "violence".into(),
                    serde_json::Value::String(label.violence().name().into()),
                );
                if label.is_violent() {
                    fields.insert(
                        "direction".into(),
                        serde_json::Value::String(label.direction().name().into()),
                    );
                }
                object.insert(ordinal.to_string(), serde_json::Value::Object(fields));
            }
            serde_json::to_string(&serde_json::Value::Object(object)).unwrap()
        } else {
            entries
                .iter()
                .map(|(ordinal, label, reason)| {
                    if label.is_violent() {
                        format!(
                            "Post {ordinal}: {}, {} — {reason}",
                            label.violence().name(),
                            label.direction().name()
                        )
                    } else {
                        format!("Post {ordinal}: {} — {reason}", label.violence().name())
                    }
                })
                .collect::<Vec<_>>()
                .join("\n")
        };
        Ok(Completion { text, usage: None })
    }

    fn name(&self) -> &str {
        "mock"
    }
}

/// One recorded request/response pair.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ReplayEntry {
    pub key: String,
    pub response: String,
}

/// A set of recorded responses keyed by request digest.
#[derive(Debug, Clone, Default)]
pub struct ReplayFixture {
    entries: BTreeMap<String, String>,
}

impl ReplayFixture {
    pub fn new() -> ReplayFixture {
        ReplayFixture::default()
    }

    pub fn insert(&mut self, request: &ChatRequest, response: impl Into<String>) {
        self.entries.insert(request.digest(), response.into());
    }

    pub fn insert_key(&mut self, key: impl Into<String>, response: impl Into<String>) {
        self.entries.insert(key.into(), response.into());
    }

    pub fn save(&self, path: &Path) -> Result<(), BackendError> {
        let mut file = File::create(path)
            .map_err(|e| BackendError::Fatal(format!("cannot write fixture: {e}")))?;
        for (key, response) in &self.entries {
            let entry = ReplayEntry {
                key: key.clone(),
                response: response.clone(),
            };
            writeln!(file, "{}", serde_json::to_string(&entry).unwrap())
                .map_err(|e| BackendError::Fatal(format!("cannot write fixture: {e}")))?;
        }
        Ok(())
    }

    pub fn load(path: &Path) -> Result<ReplayFixture, BackendError> {
        let file = File::open(path)
            .map_err(|e| BackendError::Fatal(format!("cannot read fixture {}: {e}", path.display())))?;
        let mut fixture = ReplayFixture::new();
        for line in BufReader::new(file).lines() {
            let line =
                line.map_err(|e| BackendError::Fatal(format!("cannot read fixture: {e}")))?;
            if line.trim().is_empty() {
                continue;
            }
            let entry: ReplayEntry = serde_json::from_str(&line)
                .map_err(|e| BackendError::Fatal(format!("bad fixture line: {e}")))?;
            fixture.entries.insert(entry.key, entry.response);
        }
        Ok(fixture)
    }
}

/// Replays recorded responses byte-for-byte; unknown requests are fatal.
pub struct ReplayBackend {
    fixture: ReplayFixture,
}

impl ReplayBackend {
    pub fn new(fixture: ReplayFixture) -> ReplayBackend {
        ReplayBackend { fixture }
    }

    pub fn from_path(path: &Path) -> Result<ReplayBackend, BackendError> {
        Ok(ReplayBackend::new(ReplayFixture::load(path)?))
    }
}

impl Backend for ReplayBackend {
    fn complete(&self, request: &ChatRequest) -> Result<Completion, BackendError> {
        let key = request.digest();
        match self.fixture.entries.get(&key) {
            Some(response) => Ok(Completion {
                text: response.clone(),
                usage: None,
            }),
            None => Err(BackendError::Fatal(format!(
                "no recorded response for request digest {key}"
            ))),
        }
    }

    fn name(&self) -> &str {
        "replay"
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn chat(user: &str, structured: bool) -> ChatRequest {
        ChatRequest {
            model: "m".into(),
            temperature: 0.1,
            structured_output: structured,
            messages: vec![
                ChatMessage {
                    role: "system".into(),
                    content: "classify\nThe posts are:".into(),
                },
                ChatMessage {
                    role: "user".into(),
                    content: user.into(),
                },
            ],
        }
    }

    #[test]
    fn mock_is_deterministic() {
        let backend = MockBackend::with_default_lexicon();
        let request = chat("Post 1: they deserves the rope\nPost 2: nice day", true);
        let a = backend.complete(&request).unwrap();
        let b = backend.complete(&request).unwrap();
        assert_eq!(a, b);
        assert!(a.text.contains("deserves the rope"));
    }

    #[test]
    fn mock_plain_mode_lines() {
        let backend = MockBackend::with_default_lexicon();
        let request = chat("Post 1: i will end it tonight\nPost 2: lovely weather", false);
        let completion = backend.complete(&request).unwrap();
        let lines: Vec<&str> = completion.text.lines().collect();
        assert_eq!(lines.len(), 2);
        assert!(lines[0].starts_with("Post 1: explicit, self-directed —"));
        assert!(lines[1].starts_with("Post 2: non-violent —"));
    }

    #[test]
    fn mock_poison_drops_ordinals() {
        let mut rules = MockRules::default_lexicon();
        rules.poison_terms.push("@@poison@@".into());
        let backend = MockBackend::new(rules);
        let request = chat("Post 1: fine\nPost 2: bad @@poison@@ text", true);
        let completion = backend.complete(&request).unwrap();
        let parsed: serde_json::Value = serde_json::from_str(&completion.text).unwrap();
        assert!(parsed.get("1").is_some());
        assert!(parsed.get("2").is_none());
    }

    #[test]
    fn dial_quotas_are_exact_for_clean_shares() {
        assert_eq!(largest_remainder_quotas(&[0.6, 0.3, 0.1], 10), [6, 3, 1]);
        assert_eq!(largest_remainder_quotas(&[0.7, 0.2, 0.1], 50), [35, 10, 5]);
        let counts = largest_remainder_quotas(&[0.5, 0.3, 0.2], 7);
        assert_eq!(counts.iter().sum::<usize>(), 7);
    }

    #[test]
    fn replay_returns_recorded_bytes() {
        let request = chat("Post 1: x", true);
        let mut fixture = ReplayFixture::new();
        fixture.insert(&request, "{\"1\": {\"violence\": \"non-violent\"}}");
        let backend = ReplayBackend::new(fixture);
        let completion = backend.complete(&request).unwrap();
        assert_eq!(completion.text, "{\"1\": {\"violence\": \"non-violent\"}}");
        let other = chat("Post 1: y", true);
        assert!(matches!(
            backend.complete(&other),
            Err(BackendError::Fatal(_))
        ));
    }

    #[test]
    fn replay_fixture_round_trips() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("fixture.jsonl");
        let request = chat("Post 1: x", true);
        let mut fixture = ReplayFixture::new();
        fixture.insert(&request, "resp");
        fixture.save(&path).unwrap();
        let backend = ReplayBackend::from_path(&path).unwrap();
        assert_eq!(backend.complete(&request).unwrap().text, "resp");
    }

    struct FlakyBackend {
        failures_before_success: Mutex<u32>,
    }

    impl Backend for FlakyBackend {
        fn complete(&self, _request: &ChatRequest) -> Result<Completion, BackendError> {
            let mut left = self.failures_before_success.lock().unwrap();
            if *left > 0 {
                *left -= 1;
                return Err(BackendError::Transient("injected".into()));
            }
            Ok(Completion {
                text: "{}".into(),
                usage: None,
            })
        }

        fn name(&self) -> &str {
            "flaky"
        }
    }

    #[test]
    fn submit_retries_transient_failures() {
        let backend = FlakyBackend {
            failures_before_success: Mutex::new(2),
        };
        let config = BackendConfig {
            max_retries: 3,
            backoff_base: Duration::from_millis(1),
            ..BackendConfig::default()
        };
        let limiter = RateLimiter::new(0.0);
        let request = chat("Post 1: x", true);
        let outcome = submit_chat(&backend, &request, &config, &limiter).unwrap();
        assert_eq!(outcome.retries, 2);
    }

    #[test]
    fn submit_exhausts_retries() {
        let backend = FlakyBackend {
            failures_before_success: Mutex::new(10),
        };
        let config = BackendConfig {
            max_retries: 2,
            backoff_base: Duration::from_millis(1),
            ..BackendConfig::default()
        };
        let limiter = RateLimiter::new(0.0);
        let request = chat("Post 1: x", true);
        let result = submit_chat(&backend, &request, &config, &limiter);
        assert!(matches!(
            result,
            Err(BackendError::RetriesExhausted { attempts: 3, .. })
        ));
    }

    #[test]
    fn rate_limiter_spaces_requests() {
        let limiter = RateLimiter::new(1200.0); // 50ms interval
        let start = Instant::now();
        for _ in 0..3 {
            limiter.acquire();
        }
        // first slot is immediate; the next two wait ~50ms each
        assert!(start.elapsed() >= Duration::from_millis(90));
    }

    #[test]
    fn config_validation() {
        let mut config = BackendConfig::default();
        assert!(config.validate().is_ok());
        config.temperature = 2.5;
        assert!(config.validate().is_err());
    }
}
