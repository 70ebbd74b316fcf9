//! `HttpProvider` against a scripted chat-completions server on localhost.

use std::io::{BufRead, BufReader, Read, Write};
use std::net::TcpListener;
use std::sync::{Arc, Mutex};
use std::thread;
use std::time::Duration;

use pba_core::generation::{
    chat_completion, ChatRequest, HttpProvider, Provider, ProviderError, RetryPolicy,
    BASELINE_PROMPT,
};
use serde_json::{json, Value};

/// Headers and JSON body of each request received.
type RequestLog = Arc<Mutex<Vec<(Vec<String>, Value)>>>;

struct Server {
    url: String,
    requests: RequestLog,
}

/// Answers each connection with the next scripted `(status, body)`; the last
/// entry repeats once the script runs out.
fn serve(script: Vec<(u16, String)>) -> Server {
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let url = format!(
        "http://{}/v1/chat/completions",
        listener.local_addr().unwrap()
    );
    let requests = Arc::new(Mutex::new(Vec::new()));
    let log = Arc::clone(&requests);
    thread::spawn(move || {
        for (i, stream) in listener.incoming().enumerate() {
            let Ok(mut stream) = stream else { return };
            let mut reader = BufReader::new(stream.try_clone().unwrap());
            let mut headers = Vec::new();
            let mut length = 0;
            loop {
                let mut line = String::new();
                if reader.read_line(&mut line).unwrap_or(0) == 0 {
                    break;
                }
                let line = line.trim_end().to_string();
                if line.is_empty() {
                    break;
                }
                if let Some((k, v)) = line.split_once(':') {
                    if k.eq_ignore_ascii_case("content-length") {
                        length = v.trim().parse().unwrap();
                    }
                }
                headers.push(line);
            }
            let mut body = vec![0; length];
            reader.read_exact(&mut body).unwrap();
            log.lock().unwrap().push((
                headers,
                serde_json::from_slice(&body).unwrap_or(Value::Null),
            ));
            let (status, text) = &script[i.min(script.len() - 1)];
            let reply = format!(
                "HTTP/1.1 {status} X\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{text}",
                text.len()
            );
            let _ = stream.write_all(reply.as_bytes());
        }
    });
    Server { url, requests }
}

fn completion(content: &str) -> String {
    json!({ "choices": [{ "message": { "role": "assistant", "content": content } }] }).to_string()
}

fn request(seq: u64) -> ChatRequest<'static> {
    ChatRequest {
        model: "test-model",
        prompt: BASELINE_PROMPT,
        temperature: 1.0,
        seq,
    }
}

fn fast(max_tries: u32) -> RetryPolicy {
    RetryPolicy {
        max_tries,
        base_delay_ms: 1,
        factor: 2.0,
    }
}

#[test]
fn success_returns_message_content() {
    let server = serve(vec![(200, completion("[{\"name\": \"ada\"}]"))]);
    let provider = HttpProvider::new(&server.url, Some("sk-test".into()), Duration::from_secs(5));
    let text = provider.complete(&request(0)).unwrap();
    assert_eq!(text, "[{\"name\": \"ada\"}]");

    let log = server.requests.lock().unwrap();
    let (headers, body) = &log[0];
    assert_eq!(body["model"], "test-model");
    assert_eq!(body["temperature"], 1.0);
    assert_eq!(body["messages"][0]["role"], "user");
    assert_eq!(body["messages"][0]["content"], BASELINE_PROMPT);
    assert!(headers
        .iter()
        .any(|h| h.eq_ignore_ascii_case("authorization: Bearer sk-test")));
}

#[test]
fn rate_limit_then_success_is_retried() {
    let server = serve(vec![
        (429, "{}".into()),
        (503, "{}".into()),
        (200, completion("ok")),
    ]);
    let provider = HttpProvider::new(&server.url, None, Duration::from_secs(5));
    assert_eq!(
        chat_completion(&provider, &request(0), &fast(5)).unwrap(),
        "ok"
    );
    assert_eq!(server.requests.lock().unwrap().len(), 3);
}

#[test]
fn persistent_server_error_gives_up_after_max_tries() {
    let server = serve(vec![(500, "{}".into())]);
    let provider = HttpProvider::new(&server.url, None, Duration::from_secs(5));
    let err = chat_completion(&provider, &request(0), &fast(3)).unwrap_err();
    assert_eq!(err, ProviderError::HttpStatus(500));
    assert_eq!(server.requests.lock().unwrap().len(), 3);
}

#[test]
fn client_error_is_not_retried() {
    let server = serve(vec![(401, "{}".into())]);
    let provider = HttpProvider::new(&server.url, None, Duration::from_secs(5));
    let err = chat_completion(&provider, &request(0), &fast(5)).unwrap_err();
    assert_eq!(err, ProviderError::HttpStatus(401));
    assert_eq!(server.requests.lock().unwrap().len(), 1);
}

#[test]
fn body_without_content_is_malformed() {
    let server = serve(vec![(200, "{\"choices\": []}".into())]);
    let provider = HttpProvider::new(&server.url, None, Duration::from_secs(5));
    let err = provider.complete(&request(0)).unwrap_err();
    assert!(
        matches!(err, ProviderError::MalformedResponse(_)),
        "{err:?}"
    );
}

#[test]
fn silent_server_times_out() {
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let url = format!("http://{}/", listener.local_addr().unwrap());
    let hold = thread::spawn(move || {
        let conn = listener.accept();
        thread::sleep(Duration::from_millis(1500));
        drop(conn);
    });
    let provider = HttpProvider::new(url, None, Duration::from_millis(300));
    let err = provider.complete(&request(0)).unwrap_err();
    assert_eq!(err, ProviderError::Timeout);
    assert!(err.is_retryable());
    hold.join().unwrap();
}

#[test]
fn refused_connection_is_a_transport_error() {
    let port = {
        let l = TcpListener::bind("127.0.0.1:0").unwrap();
        l.local_addr().unwrap().port()
    };
    let provider = HttpProvider::new(
        format!("http://127.0.0.1:{port}/"),
        None,
        Duration::from_secs(2),
    );
    let err = provider.complete(&request(0)).unwrap_err();
    assert!(matches!(err, ProviderError::Transport(_)), "{err:?}");
}
