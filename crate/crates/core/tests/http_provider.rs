//! The chat-completion adapter against a local stub endpoint.

use dialogmap::pipeline::http::HttpProvider;
use dialogmap::pipeline::{annotate_turn, PipelineError, Provider, ProviderError, ProviderRequest, RetryPolicy, Task};
use dialogmap::types::{IbisTag, SpeakerId, SplitReason, Turn, TurnId};
use serde_json::{json, Value};
use std::io::{BufRead, BufReader, Read, Write};
use std::net::TcpListener;
use std::sync::mpsc;
use std::thread;
use std::time::Duration;

#[derive(Clone)]
enum Reply {
    Json(Value),
    Status(u16),
    Hang,
}

/// Serves `replies` in order, one per connection, and reports each request
/// body plus its Authorization header.
fn stub(replies: Vec<Reply>) -> (String, mpsc::Receiver<(Value, Option<String>)>) {
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let url = format!("http://{}/v1/chat/completions", listener.local_addr().unwrap());
    let (tx, rx) = mpsc::channel();
    thread::spawn(move || {
        for reply in replies {
            let Ok((stream, _)) = listener.accept() else { return };
            let mut reader = BufReader::new(stream.try_clone().unwrap());
            let mut length = 0;
            let mut auth = None;
            loop {
                let mut line = String::new();
                reader.read_line(&mut line).unwrap();
                let line = line.trim_end();
                if line.is_empty() {
                    break;
                }
                let lower = line.to_ascii_lowercase();
                if let Some(v) = lower.strip_prefix("content-length:") {
                    length = v.trim().parse().unwrap();
                }
                if lower.starts_with("authorization:") {
                    auth = Some(line["authorization:".len()..].trim().to_string());
                }
            }
            let mut body = vec![0; length];
            reader.read_exact(&mut body).unwrap();
            let _ = tx.send((serde_json::from_slice(&body).unwrap(), auth));
            let mut stream = stream;
            let (status, text) = match reply {
                Reply::Json(v) => (200, v.to_string()),
                Reply::Status(s) => (s, "{\"error\":\"boom\"}".to_string()),
                Reply::Hang => {
                    thread::sleep(Duration::from_millis(1500));
                    continue;
                }
            };
            let _ = write!(
                stream,
                "HTTP/1.1 {status} X\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{text}",
                text.len()
            );
        }
    });
    (url, rx)
}

fn chat(content: &str) -> Reply {
    Reply::Json(json!({ "choices": [{ "message": { "role": "assistant", "content": content } }] }))
}

fn request() -> ProviderRequest {
    ProviderRequest {
        task: Task::AnnotateTurn,
        payload: json!({ "speaker": "sam", "text": "It is cheap." , "summary_word_limit": 6 }),
        timeout_ms: 500,
        attempt: 0,
        corrective: None,
    }
}

#[test]
fn successful_call_returns_content_and_sends_prompt() {
    let content = r#"{"dialogueTagArray": [{"Tag": "[$Pro]", "Summary": "Cheap", "Quotes": ["It is cheap."]}]}"#;
    let (url, seen) = stub(vec![chat(content)]);
    let provider = HttpProvider::new(url, "test-model", 2000).with_api_key(Some("k123".into()));
    assert_eq!(provider.complete(&request()).unwrap(), content);
    let (body, auth) = seen.recv().unwrap();
    assert_eq!(body["model"], "test-model");
    assert_eq!(body["temperature"], 0);
    assert_eq!(body["messages"][0]["role"], "system");
    assert!(body["messages"][0]["content"].as_str().unwrap().contains("dialogueTagArray"));
    assert!(body["messages"][1]["content"].as_str().unwrap().contains("It is cheap."));
    assert_eq!(auth.as_deref(), Some("Bearer k123"));
}

#[test]
fn annotation_runs_through_the_adapter() {
    let content = r#"Sure! {"dialogueTagArray": [{"Tag": "[$Pro]", "Summary": "Cheap option", "Quotes": ["It is cheap."],},]}"#;
    let (url, _) = stub(vec![chat(content)]);
    let provider = HttpProvider::new(url, "m", 2000);
    let turn = Turn {
        turn_id: TurnId(1),
        seq: 1,
        speaker_id: SpeakerId::new("sam"),
        text: "It is cheap.".into(),
        word_count: 3,
        start_ms: 0,
        end_ms: 0,
        split_reason: SplitReason::StreamEnd,
    };
    let drafts = annotate_turn(&turn, 6, &provider, &RetryPolicy::default()).unwrap();
    assert_eq!(drafts.len(), 1);
    assert_eq!(drafts[0].tag, IbisTag::Pro);
}

#[test]
fn error_status_is_reported() {
    let (url, _) = stub(vec![Reply::Status(503)]);
    let provider = HttpProvider::new(url, "m", 2000);
    match provider.complete(&request()) {
        Err(ProviderError::Status { status, .. }) => assert_eq!(status, 503),
        other => panic!("unexpected {other:?}"),
    }
}

#[test]
fn slow_endpoint_times_out() {
    let (url, _) = stub(vec![Reply::Hang]);
    let provider = HttpProvider::new(url, "m", 200);
    assert_eq!(provider.complete(&request()), Err(ProviderError::Timeout));
}

#[test]
fn repeated_failures_become_provider_unavailable() {
    let (url, seen) = stub(vec![Reply::Status(500), Reply::Status(500)]);
    let provider = HttpProvider::new(url, "m", 2000);
    let turn = Turn {
        turn_id: TurnId(1),
        seq: 1,
        speaker_id: SpeakerId::new("sam"),
        text: "It is cheap.".into(),
        word_count: 3,
        start_ms: 0,
        end_ms: 0,
        split_reason: SplitReason::StreamEnd,
    };
    let err = annotate_turn(&turn, 6, &provider, &RetryPolicy::default()).unwrap_err();
    assert!(matches!(err, PipelineError::ProviderUnavailable(_)), "{err:?}");
    assert_eq!(seen.try_iter().count(), 2);
}
