//! Wire format, retry and auth behavior against a scripted local server.

use std::io::{BufRead, BufReader, Read, Write};
use std::net::TcpListener;
use std::sync::{Arc, Mutex};
use std::thread;

use rephrase_llm::{ChatEndpoint, EndpointConfig, HttpEndpoint, LlmError};
use serde_json::Value;

struct Seen {
    path: String,
    auth: Option<String>,
    body: Value,
}

/// Serves the scripted (status, body) pairs in order, one per request.
fn serve(script: Vec<(u16, &'static str)>) -> (String, Arc<Mutex<Vec<Seen>>>) {
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let addr = listener.local_addr().unwrap();
    let seen = Arc::new(Mutex::new(Vec::new()));
    let log = Arc::clone(&seen);
    thread::spawn(move || {
        let mut script = script.into_iter();
        for stream in listener.incoming() {
            let mut stream = stream.unwrap();
            let mut reader = BufReader::new(stream.try_clone().unwrap());
            loop {
                let mut request_line = String::new();
                if reader.read_line(&mut request_line).unwrap_or(0) == 0 {
                    break;
                }
                let path = request_line.split_whitespace().nth(1).unwrap_or("").to_string();
                let (mut len, mut auth) = (0usize, None);
                loop {
                    let mut h = String::new();
                    reader.read_line(&mut h).unwrap();
                    let h = h.trim_end();
                    if h.is_empty() {
                        break;
                    }
                    let (name, value) = h.split_once(':').unwrap();
                    match name.to_ascii_lowercase().as_str() {
                        "content-length" => len = value.trim().parse().unwrap(),
                        "authorization" => auth = Some(value.trim().to_string()),
                        _ => {}
                    }
                }
                let mut body = vec![0; len];
                reader.read_exact(&mut body).unwrap();
                log.lock().unwrap().push(Seen {
                    path,
                    auth,
                    body: serde_json::from_slice(&body).unwrap(),
                });
                let Some((status, text)) = script.next() else { return };
                let resp = format!(
                    "HTTP/1.1 {status} X\r\nContent-Type: application/json\r\nContent-Length: {}\r\n\r\n{text}",
                    text.len()
                );
                stream.write_all(resp.as_bytes()).unwrap();
            }
        }
    });
    (format!("http://{addr}/v1"), seen)
}

fn cfg(base_url: String) -> EndpointConfig {
    EndpointConfig {
        base_url,
        model_name: "test-model".into(),
        max_retries: 2,
        backoff_ms: 1,
        request_timeout_secs: 5,
        ..Default::default()
    }
}

const OK: &str = r#"{"choices":[{"message":{"role":"assistant","content":"No"}}]}"#;

#[test]
fn request_fields_are_exact() {
    let (url, seen) = serve(vec![(200, OK)]);
    let ep = HttpEndpoint::with_key(&cfg(url), Some("sk-test".into()));
    let c = ep.complete("hello", 0.7, 0).unwrap();
    assert_eq!(c.text, "No");
    let seen = seen.lock().unwrap();
    assert_eq!(seen[0].path, "/v1/chat/completions");
    assert_eq!(seen[0].auth.as_deref(), Some("Bearer sk-test"));
    let body = &seen[0].body;
    let mut keys: Vec<&str> = body.as_object().unwrap().keys().map(String::as_str).collect();
    keys.sort();
    assert_eq!(keys, ["messages", "model", "temperature"]);
    assert_eq!(body["model"], "test-model");
    assert_eq!(body["temperature"], 0.7);
    assert_eq!(body["messages"][0]["role"], "user");
    assert_eq!(body["messages"][0]["content"], "hello");
}

#[test]
fn throttling_and_server_errors_are_retried() {
    let (url, seen) = serve(vec![(429, "{}"), (503, "{}"), (200, OK)]);
    let ep = HttpEndpoint::with_key(&cfg(url), None);
    assert_eq!(ep.complete("p", 1.0, 0).unwrap().text, "No");
    assert_eq!(seen.lock().unwrap().len(), 3);
}

#[test]
fn retries_are_bounded() {
    let (url, seen) = serve(vec![(500, "{}"), (500, "{}"), (500, "{}"), (200, OK)]);
    let ep = HttpEndpoint::with_key(&cfg(url), None);
    let err = ep.complete("p", 1.0, 0).unwrap_err();
    assert!(matches!(err, LlmError::EndpointUnreachable { attempts: 3, .. }), "{err:?}");
    assert_eq!(seen.lock().unwrap().len(), 3);
}

#[test]
fn auth_failures_are_not_retried() {
    let (url, seen) = serve(vec![(401, r#"{"error":"bad key"}"#), (200, OK)]);
    let ep = HttpEndpoint::with_key(&cfg(url), Some("wrong".into()));
    assert!(matches!(ep.complete("p", 1.0, 0), Err(LlmError::AuthError(_))));
    assert_eq!(seen.lock().unwrap().len(), 1);
}

#[test]
fn malformed_bodies_are_reported() {
    let (url, _) = serve(vec![(200, r#"{"choices":[]}"#)]);
    let ep = HttpEndpoint::with_key(&cfg(url), None);
    assert!(matches!(ep.complete("p", 1.0, 0), Err(LlmError::MalformedResponse(_))));
}

#[test]
fn closed_port_is_unreachable() {
    let port = TcpListener::bind("127.0.0.1:0").unwrap().local_addr().unwrap().port();
    let ep = HttpEndpoint::with_key(&cfg(format!("http://127.0.0.1:{port}/v1")), None);
    assert!(matches!(ep.complete("p", 1.0, 0), Err(LlmError::EndpointUnreachable { .. })));
}
