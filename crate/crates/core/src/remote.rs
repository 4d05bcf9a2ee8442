//! HTTP client for remote backends.
//!
//! Wire protocol: `POST /invoke` with JSON body
//! `{"function": str, "args": [...], "input_id": str}`; the server answers
//! `{"output": value, "latency_ms": number}`. Observed and reported latency
//! are recorded as metadata only — the cost charged for an invocation is the
//! backend's fixed spec cost, never measured time.

use crate::value::{ReturnKind, Value};
use serde::{Deserialize, Serialize};
use std::time::{Duration, Instant};
use thiserror::Error;

/// Address of a remote backend server.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RemoteEndpoint {
    /// Base URL, e.g. `http://127.0.0.1:9000`. The client posts to
    /// `<url>/invoke`.
    pub url: String,
    #[serde(default = "default_timeout_ms")]
    pub timeout_ms: u64,
}

fn default_timeout_ms() -> u64 {
    5_000
}

#[derive(Debug, Error)]
pub enum RemoteError {
    #[error("network failure contacting {url}: {detail}")]
    Network { url: String, detail: String },
    #[error("request to {url} timed out after {timeout_ms} ms")]
    Timeout { url: String, timeout_ms: u64 },
    #[error("malformed response from {url}: missing field {field:?}")]
    MissingField { url: String, field: &'static str },
    #[error("malformed response from {url}: {detail}")]
    Decode { url: String, detail: String },
    #[error("server at {url} returned HTTP {status}")]
    Http { url: String, status: u16 },
}

/// Result of a remote invocation: the decoded value plus latency metadata.
#[derive(Debug, Clone, PartialEq)]
pub struct RemoteOutcome {
    pub value: Value,
    /// Latency reported by the server in its response body.
    pub reported_latency_ms: f64,
    /// Wall-clock latency observed by this client.
    pub observed_latency_ms: f64,
}

#[derive(Serialize)]
struct InvokeRequest<'a> {
    function: &'a str,
    args: &'a [Value],
    input_id: &'a str,
}

/// Invokes a remote backend.
///
/// `args` are the call's static arguments; the streamed input is identified
/// by `input_id`. The output is decoded against `expected`, the return kind
/// of the generic function being served.
pub fn invoke_remote(
    endpoint: &RemoteEndpoint,
    function: &str,
    args: &[Value],
    input_id: &str,
    expected: ReturnKind,
) -> Result<RemoteOutcome, RemoteError> {
    let url = format!("{}/invoke", endpoint.url.trim_end_matches('/'));
    let payload = serde_json::to_string(&InvokeRequest {
        function,
        args,
        input_id,
    })
    .expect("request serialization cannot fail");

    let agent: ureq::Agent = ureq::Agent::config_builder()
        .timeout_global(Some(Duration::from_millis(endpoint.timeout_ms)))
        .build()
        .into();

    let started = Instant::now();
    let result = agent
        .post(&url)
        .header("content-type", "application/json")
        .send(payload.as_bytes());
    let observed_latency_ms = started.elapsed().as_secs_f64() * 1e3;

    let mut response = match result {
        Ok(r) => r,
        Err(e) => return Err(classify(e, &url, endpoint.timeout_ms)),
    };
    let body = response
        .body_mut()
        .read_to_string()
        .map_err(|e| classify(e, &url, endpoint.timeout_ms))?;

    let json: serde_json::Value =
        serde_json::from_str(&body).map_err(|e| RemoteError::Decode {
            url: url.clone(),
            detail: e.to_string(),
        })?;
    let output = json.get("output").ok_or(RemoteError::MissingField {
        url: url.clone(),
        field: "output",
    })?;
    let latency = json
        .get("latency_ms")
        .ok_or(RemoteError::MissingField {
            url: url.clone(),
            field: "latency_ms",
        })?
        .as_f64()
        .ok_or_else(|| RemoteError::Decode {
            url: url.clone(),
            detail: "latency_ms is not a number".to_string(),
        })?;
    let value = Value::from_json(output, expected).map_err(|detail| RemoteError::Decode {
        url: url.clone(),
        detail,
    })?;

    Ok(RemoteOutcome {
        value,
        reported_latency_ms: latency,
        observed_latency_ms,
    })
}

fn classify(err: ureq::Error, url: &str, timeout_ms: u64) -> RemoteError {
    match err {
        ureq::Error::StatusCode(status) => RemoteError::Http {
            url: url.to_string(),
            status,
        },
        ureq::Error::Timeout(_) => RemoteError::Timeout {
            url: url.to_string(),
            timeout_ms,
        },
        ureq::Error::Io(e) if e.kind() == std::io::ErrorKind::TimedOut => RemoteError::Timeout {
            url: url.to_string(),
            timeout_ms,
        },
        other => RemoteError::Network {
            url: url.to_string(),
            detail: other.to_string(),
        },
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::{BufRead, BufReader, Read, Write};
    use std::net::TcpListener;
    use std::thread;

    /// Minimal one-shot HTTP server for exercising the client.
    fn serve_once(response: Option<String>, delay: Duration) -> String {
        let listener = TcpListener::bind("127.0.0.1:0").unwrap();
        let addr = listener.local_addr().unwrap();
        thread::spawn(move || {
            if let Ok((mut stream, _)) = listener.accept() {
                let mut reader = BufReader::new(stream.try_clone().unwrap());
                let mut content_length = 0usize;
                loop {
                    let mut line = String::new();
                    if reader.read_line(&mut line).is_err() || line.trim().is_empty() {
                        break;
                    }
                    if let Some(v) = line.to_ascii_lowercase().strip_prefix("content-length:") {
                        content_length = v.trim().parse().unwrap_or(0);
                    }
                }
                let mut body = vec![0u8; content_length];
                let _ = reader.read_exact(&mut body);
                thread::sleep(delay);
                if let Some(json) = response {
                    let reply = format!(
                        "HTTP/1.1 200 OK\r\ncontent-type: application/json\r\ncontent-length: {}\r\nconnection: close\r\n\r\n{}",
                        json.len(),
                        json
                    );
                    let _ = stream.write_all(reply.as_bytes());
                }
            }
        });
        format!("http://{addr}")
    }

    #[test]
    fn healthy_endpoint_returns_value_and_latency() {
        let url = serve_once(
            Some(r#"{"output": "yes", "latency_ms": 12.5}"#.to_string()),
            Duration::ZERO,
        );
        let endpoint = RemoteEndpoint {
            url,
            timeout_ms: 2_000,
        };
        let outcome = invoke_remote(
            &endpoint,
            "vqa",
            &[Value::text("is there a cat?")],
            "ep-1",
            ReturnKind::Text,
        )
        .unwrap();
        assert_eq!(outcome.value, Value::text("yes"));
        assert_eq!(outcome.reported_latency_ms, 12.5);
        assert!(outcome.observed_latency_ms >= 0.0);
    }

    #[test]
    fn timeout_is_surfaced_distinctly() {
        let url = serve_once(None, Duration::from_millis(1_500));
        let endpoint = RemoteEndpoint {
            url,
            timeout_ms: 100,
        };
        let err = invoke_remote(&endpoint, "vqa", &[], "ep-1", ReturnKind::Text).unwrap_err();
        assert!(
            matches!(err, RemoteError::Timeout { .. }),
            "expected timeout, got {err:?}"
        );
    }

    #[test]
    fn missing_field_is_named() {
        let url = serve_once(Some(r#"{"latency_ms": 3}"#.to_string()), Duration::ZERO);
        let endpoint = RemoteEndpoint {
            url,
            timeout_ms: 2_000,
        };
        let err = invoke_remote(&endpoint, "vqa", &[], "ep-1", ReturnKind::Text).unwrap_err();
        match err {
            RemoteError::MissingField { field, .. } => assert_eq!(field, "output"),
            other => panic!("expected missing-field error, got {other:?}"),
        }
    }

    #[test]
    fn unreachable_host_is_a_network_error() {
        // Port 1 on localhost is essentially guaranteed closed.
        let endpoint = RemoteEndpoint {
            url: "http://127.0.0.1:1".to_string(),
            timeout_ms: 500,
        };
        let err = invoke_remote(&endpoint, "vqa", &[], "ep-1", ReturnKind::Text).unwrap_err();
        assert!(
            matches!(err, RemoteError::Network { .. } | RemoteError::Timeout { .. }),
            "got {err:?}"
        );
    }

    #[test]
    fn wrong_kind_output_is_a_decode_error() {
        let url = serve_once(
            Some(r#"{"output": 5, "latency_ms": 3}"#.to_string()),
            Duration::ZERO,
        );
        let endpoint = RemoteEndpoint {
            url,
            timeout_ms: 2_000,
        };
        let err = invoke_remote(&endpoint, "vqa", &[], "ep-1", ReturnKind::Text).unwrap_err();
        assert!(matches!(err, RemoteError::Decode { .. }), "got {err:?}");
    }
}
