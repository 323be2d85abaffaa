//! HTTP client for a chat-completion endpoint. The wire shape is a message
//! list plus model name and temperature, with an optional JSON-object
//! response format; auth is a bearer token read from the environment
//! variable named in the config.

use serde::Deserialize;
use serde_json::json;

use super::backend::{Backend, BackendConfig, BackendError, ChatRequest, Completion, TokenUsage};

pub struct RemoteBackend {
    endpoint: String,
    api_key: String,
    client: reqwest::blocking::Client,
}

impl RemoteBackend {
    pub fn new(config: &BackendConfig) -> Result<RemoteBackend, BackendError> {
        let url = reqwest::Url::parse(&config.endpoint)
            .map_err(|e| BackendError::MalformedEndpoint(config.endpoint.clone(), e.to_string()))?;
        if !matches!(url.scheme(), "http" | "https") {
            return Err(BackendError::MalformedEndpoint(
                config.endpoint.clone(),
                format!("unsupported scheme {:?}", url.scheme()),
            ));
        }
        let api_key = std::env::var(&config.api_key_env).map_err(|_| {
            BackendError::Auth(format!(
                "environment variable {} is not set",
                config.api_key_env
            ))
        })?;
        let client = reqwest::blocking::Client::builder()
            .timeout(config.request_timeout)
            .build()
            .map_err(|e| BackendError::Fatal(format!("cannot build HTTP client: {e}")))?;
        Ok(RemoteBackend {
            endpoint: config.endpoint.clone(),
            api_key,
            client,
        })
    }
}

#[derive(Deserialize)]
struct WireResponse {
    choices: Vec<WireChoice>,
    #[serde(default)]
    usage: Option<WireUsage>,
}

#[derive(Deserialize)]
struct WireChoice {
    message: WireMessage,
}

#[derive(Deserialize)]
struct WireMessage {
    content: String,
}

#[derive(Deserialize)]
struct WireUsage {
    prompt_tokens: u64,
    completion_tokens: u64,
}

impl Backend for RemoteBackend {
    fn complete(&self, request: &ChatRequest) -> Result<Completion, BackendError> {
        let mut body = json!({
            "model": request.model,
            "temperature": request.temperature,
            "messages": request.messages,
        });
        if request.structured_output {
            body["response_format"] = json!({"type": "json_object"});
        }
        let response = self
            .client
            .post(&self.endpoint)
            .bearer_auth(&self.api_key)
            .json(&body)
            .send()
            .map_err(|e| BackendError::Transient(format!("request failed: {e}")))?;
        let status = response.status();
        if status.as_u16() == 401 || status.as_u16() == 403 {
            return Err(BackendError::Auth(format!("endpoint returned {status}")));
        }
        if status.as_u16() == 408 || status.as_u16() == 429 || status.is_server_error() {
            let detail = response.text().unwrap_or_default();
            return Err(BackendError::Transient(format!(
                "endpoint returned {status}: {}",
                truncate(&detail, 200)
            )));
        }
        if !status.is_success() {
            let detail = response.text().unwrap_or_default();
            return Err(BackendError::Fatal(format!(
                "endpoint returned {status}: {}",
                truncate(&detail, 200)
            )));
        }
        let wire: WireResponse = response
            .json()
            .map_err(|e| BackendError::Fatal(format!("unparseable response body: {e}")))?;
        let choice = wire
            .choices
            .into_iter()
            .next()
            .ok_or_else(|| BackendError::Fatal("response carried no choices".into()))?;
        Ok(Completion {
            text: choice.message.content,
            usage: wire.usage.map(|u| TokenUsage {
                prompt_tokens: u.prompt_tokens,
                completion_tokens: u.completion_tokens,
            }),
        })
    }

    fn name(&self) -> &str {
        "remote"
    }
}

fn truncate(s: &str, max: usize) -> &str {
    match s.char_indices().nth(max) {
        Some((idx, _)) => &s[..idx],
        None => s,
    }
}
