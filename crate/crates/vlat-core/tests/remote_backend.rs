//! Wire-level tests of the remote backend against a scripted local HTTP
//! server: request shape, bearer auth, retry/backoff behavior, and error
//! classification.

use std::io::{Read, Write};
use std::net::TcpListener;
use std::time::Duration;

use vlat_core::annotator::{
    builtin_template, submit, BackendConfig, BackendError, BatchRequest, RateLimiter,
    RemoteBackend,
};
use vlat_core::corpus::Post;

/// One scripted exchange: (status line, body) plus the captured request.
struct Exchange {
    status: &'static str,
    body: String,
}

/// Serve the scripted responses on a local port, one connection each, and
/// return the raw requests that were received.
fn scripted_server(script: Vec<Exchange>) -> (String, std::thread::JoinHandle<Vec<String>>) {
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let address = format!("http://{}/v1/chat/completions", listener.local_addr().unwrap());
    let handle = std::thread::spawn(move || {
        let mut captured = Vec::new();
        for exchange in script {
            let (mut stream, _) = listener.accept().unwrap();
            let mut buffer = Vec::new();
            let mut chunk = [0u8; 4096];
            let request = loop {
                let n = stream.read(&mut chunk).unwrap();
                buffer.extend_from_slice(&chunk[..n]);
                let text = String::from_utf8_lossy(&buffer).into_owned();
                if let Some(header_end) = text.find("\r\n\r\n") {
                    let content_length = text
                        .lines()
                        .find_map(|l| l.to_ascii_lowercase().strip_prefix("content-length:")
                            .map(|v| v.trim().parse::<usize>().unwrap()))
                        .unwrap_or(0);
                    if buffer.len() >= header_end + 4 + content_length {
                        break text;
                    }
                }
                if n == 0 {
                    break text;
                }
            };
            captured.push(request);
            let response = format!(
                "HTTP/1.1 {}\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{}",
                exchange.status,
                exchange.body.len(),
                exchange.body
            );
            stream.write_all(response.as_bytes()).unwrap();
        }
        captured
    });
    (address, handle)
}

fn success_body() -> String {
    serde_json::json!({
        "choices": [{"message": {"role": "assistant", "content": "{\"1\": {\"violence\": \"non-violent\"}}"}}],
        "usage": {"prompt_tokens": 612, "completion_tokens": 40, "total_tokens": 652}
    })
    .to_string()
}

fn test_config(endpoint: &str, key_env: &str, max_retries: u32) -> BackendConfig {
    BackendConfig {
        endpoint: endpoint.into(),
        api_key_env: key_env.into(),
        max_retries,
        request_timeout: Duration::from_secs(5),
        backoff_base: Duration::from_millis(1),
        ..BackendConfig::default()
    }
}

fn one_post_batch() -> BatchRequest {
    let template = builtin_template("final").unwrap();
    let posts = vec![Post {
        post_id: "p1".into(),
        user_id: "u1".into(),
        thread_id: "t1".into(),
        created_at: 0,
        text: "hello there".into(),
    }];
    BatchRequest::new("b0000", &template, &posts)
}

#[test]
fn sends_expected_wire_shape_and_parses_usage() {
    let (endpoint, server) = scripted_server(vec![Exchange {
        status: "200 OK",
        body: success_body(),
    }]);
    std::env::set_var("VLAT_TEST_KEY_SHAPE", "secret-token");
    let config = test_config(&endpoint, "VLAT_TEST_KEY_SHAPE", 0);
    let backend = RemoteBackend::new(&config).unwrap();
    let limiter = RateLimiter::new(0.0);
    let outcome = submit(&backend, &one_post_batch(), &config, &limiter).unwrap();
    assert_eq!(outcome.retries, 0);
    assert!(outcome.completion.text.contains("non-violent"));
    let usage = outcome.completion.usage.unwrap();
    assert_eq!(usage.prompt_tokens, 612);
    assert_eq!(usage.completion_tokens, 40);

    let requests = server.join().unwrap();
    let request = &requests[0];
    assert!(request.starts_with("POST /v1/chat/completions"));
    assert!(request.contains("authorization: Bearer secret-token")
        || request.contains("Authorization: Bearer secret-token"));
    let body_start = request.find("\r\n\r\n").unwrap() + 4;
    let body: serde_json::Value = serde_json::from_str(&request[body_start..]).unwrap();
    assert_eq!(body["temperature"], 0.1);
    assert_eq!(body["messages"][0]["role"], "system");
    assert_eq!(body["messages"][1]["role"], "user");
    assert_eq!(body["messages"][1]["content"], "Post 1: hello there");
    assert_eq!(body["response_format"]["type"], "json_object");
    assert!(body["messages"][0]["content"]
        .as_str()
        .unwrap()
        .ends_with("The posts are:"));
}

#[test]
fn plain_mode_omits_response_format() {
    let (endpoint, server) = scripted_server(vec![Exchange {
        status: "200 OK",
        body: success_body(),
    }]);
    std::env::set_var("VLAT_TEST_KEY_PLAIN", "k");
    let mut config = test_config(&endpoint, "VLAT_TEST_KEY_PLAIN", 0);
    config.structured_output = false;
    let backend = RemoteBackend::new(&config).unwrap();
    submit(&backend, &one_post_batch(), &config, &RateLimiter::new(0.0)).unwrap();
    let requests = server.join().unwrap();
    let body_start = requests[0].find("\r\n\r\n").unwrap() + 4;
    let body: serde_json::Value = serde_json::from_str(&requests[0][body_start..]).unwrap();
    assert!(body.get("response_format").is_none());
}

#[test]
fn retries_server_errors_then_succeeds() {
    let (endpoint, server) = scripted_server(vec![
        Exchange { status: "500 Internal Server Error", body: "busy".into() },
        Exchange { status: "429 Too Many Requests", body: "slow down".into() },
        Exchange { status: "200 OK", body: success_body() },
    ]);
    std::env::set_var("VLAT_TEST_KEY_RETRY", "k");
    let config = test_config(&endpoint, "VLAT_TEST_KEY_RETRY", 3);
    let backend = RemoteBackend::new(&config).unwrap();
    let outcome = submit(&backend, &one_post_batch(), &config, &RateLimiter::new(0.0)).unwrap();
    assert_eq!(outcome.retries, 2);
    assert_eq!(server.join().unwrap().len(), 3);
}

#[test]
fn exhausts_retries_on_persistent_errors() {
    let (endpoint, server) = scripted_server(vec![
        Exchange { status: "503 Service Unavailable", body: "x".into() },
        Exchange { status: "503 Service Unavailable", body: "x".into() },
    ]);
    std::env::set_var("VLAT_TEST_KEY_EXHAUST", "k");
    let config = test_config(&endpoint, "VLAT_TEST_KEY_EXHAUST", 1);
    let backend = RemoteBackend::new(&config).unwrap();
    let result = submit(&backend, &one_post_batch(), &config, &RateLimiter::new(0.0));
    assert!(matches!(
        result,
        Err(BackendError::RetriesExhausted { attempts: 2, .. })
    ));
    server.join().unwrap();
}

#[test]
fn authentication_failures_do_not_retry() {
    let (endpoint, server) = scripted_server(vec![Exchange {
        status: "401 Unauthorized",
        body: "bad key".into(),
    }]);
    std::env::set_var("VLAT_TEST_KEY_AUTH", "wrong");
    let config = test_config(&endpoint, "VLAT_TEST_KEY_AUTH", 5);
    let backend = RemoteBackend::new(&config).unwrap();
    let result = submit(&backend, &one_post_batch(), &config, &RateLimiter::new(0.0));
    assert!(matches!(result, Err(BackendError::Auth(_))));
    assert_eq!(server.join().unwrap().len(), 1);
}

#[test]
fn missing_credentials_fail_at_construction() {
    let config = test_config("http://127.0.0.1:9/v1", "VLAT_TEST_KEY_UNSET_XYZ", 0);
    assert!(matches!(
        RemoteBackend::new(&config),
        Err(BackendError::Auth(_))
    ));
}

#[test]
fn malformed_endpoint_is_rejected() {
    std::env::set_var("VLAT_TEST_KEY_URL", "k");
    let config = test_config("not a url", "VLAT_TEST_KEY_URL", 0);
    assert!(matches!(
        RemoteBackend::new(&config),
        Err(BackendError::MalformedEndpoint(..))
    ));
    let config = test_config("ftp://example.com/x", "VLAT_TEST_KEY_URL", 0);
    assert!(matches!(
        RemoteBackend::new(&config),
        Err(BackendError::MalformedEndpoint(..))
    ));
}

#[test]
fn non_retryable_client_errors_are_fatal() {
    let (endpoint, server) = scripted_server(vec![Exchange {
        status: "400 Bad Request",
        body: "nope".into(),
    }]);
    std::env::set_var("VLAT_TEST_KEY_FATAL", "k");
    let config = test_config(&endpoint, "VLAT_TEST_KEY_FATAL", 5);
    let backend = RemoteBackend::new(&config).unwrap();
    let result = submit(&backend, &one_post_batch(), &config, &RateLimiter::new(0.0));
    assert!(matches!(result, Err(BackendError::Fatal(_))));
    assert_eq!(server.join().unwrap().len(), 1);
}
