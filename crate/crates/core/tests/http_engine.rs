//! The HTTP engine against a throwaway local server.

use std::io::{BufRead, BufReader, Read, Write};
use std::net::TcpListener;
use std::sync::{Arc, Mutex};
use std::thread;
use std::time::Duration;

use lmx::backend::{
    read_recording, write_recording, CompletionRequest, Engine, EngineError, FinishReason, HttpConfig,
    HttpEngine, RecordingEngine, ReplayEngine, SamplingParams,
};
use serde_json::{json, Value};

struct Captured {
    headers: Vec<String>,
    body: Value,
}

/// Serves the scripted `(status, body)` replies in order, one per
/// connection, and records every request it saw.
fn serve(replies: Vec<(u16, String)>) -> (String, Arc<Mutex<Vec<Captured>>>) {
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let url = format!("http://{}/v1/completions", listener.local_addr().unwrap());
    let seen = Arc::new(Mutex::new(Vec::new()));
    let log = seen.clone();
    thread::spawn(move || {
        for (status, body) in replies {
            let Ok((stream, _)) = listener.accept() else { return };
            let mut reader = BufReader::new(stream.try_clone().unwrap());
            let mut headers = Vec::new();
            let mut length = 0usize;
            loop {
                let mut line = String::new();
                if reader.read_line(&mut line).unwrap_or(0) == 0 {
                    break;
                }
                let line = line.trim_end().to_string();
                if line.is_empty() {
                    break;
                }
                if let Some(v) = line.to_ascii_lowercase().strip_prefix("content-length:") {
                    length = v.trim().parse().unwrap();
                }
                headers.push(line);
            }
            let mut raw = vec![0u8; length];
            reader.read_exact(&mut raw).unwrap();
            log.lock().unwrap().push(Captured {
                headers,
                body: serde_json::from_slice(&raw).unwrap_or(Value::Null),
            });
            let mut stream = stream;
            let reply = format!(
                "HTTP/1.1 {status} X\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{body}",
                body.len()
            );
            let _ = stream.write_all(reply.as_bytes());
        }
    });
    (url, seen)
}

fn fast(url: &str) -> HttpConfig {
    let mut c = HttpConfig::new(url);
    c.initial_backoff = Duration::from_millis(5);
    c.timeout = Duration::from_secs(10);
    c
}

fn text_reply(text: &str, finish: &str) -> (u16, String) {
    (200, json!({"choices": [{"text": text, "finish_reason": finish}]}).to_string())
}

#[test]
fn request_carries_sampling_fields() {
    let (url, seen) = serve(vec![text_reply("0101\n", "stop")]);
    let mut config = fast(&url);
    config.model = Some("tiny".into());
    config.api_key = Some("sekret".into());
    let engine = HttpEngine::new(config).unwrap();
    let mut params = SamplingParams::default();
    params.temperature = 0.8;
    params.top_k = Some(40);
    params.seed = Some(17);
    params.max_new_tokens = 64;
    params.stop = vec!["\n\n".into()];
    let r = engine.complete(&CompletionRequest::new("0110\n", params)).unwrap();
    assert_eq!(r.text, "0101\n");
    assert_eq!(r.finish_reason, FinishReason::StopSequence);

    let seen = seen.lock().unwrap();
    let body = &seen[0].body;
    assert_eq!(body["model"], "tiny");
    assert_eq!(body["prompt"], "0110\n");
    assert_eq!(body["max_tokens"], 64);
    assert_eq!(body["temperature"], 0.8);
    assert_eq!(body["top_p"], 1.0);
    assert_eq!(body["top_k"], 40);
    assert_eq!(body["seed"], 17);
    assert_eq!(body["stop"], json!(["\n\n"]));
    assert!(body.get("logprobs").is_none());
    assert!(seen[0].headers.iter().any(|h| h == "authorization: Bearer sekret" || h == "Authorization: Bearer sekret"));
}

#[test]
fn optional_fields_are_omitted() {
    let (url, seen) = serve(vec![text_reply("x", "stop")]);
    let engine = HttpEngine::new(fast(&url)).unwrap();
    engine.complete(&CompletionRequest::new("p", SamplingParams::default())).unwrap();
    let body = &seen.lock().unwrap()[0].body;
    for key in ["model", "top_k", "seed", "logprobs"] {
        assert!(body.get(key).is_none(), "{key} present");
    }
}

#[test]
fn retries_server_errors_and_rate_limits() {
    let (url, seen) = serve(vec![
        (500, "{}".into()),
        (429, "{}".into()),
        (503, "{}".into()),
        text_reply("ok", "stop"),
    ]);
    let engine = HttpEngine::new(fast(&url)).unwrap();
    let r = engine.complete(&CompletionRequest::new("p", SamplingParams::default())).unwrap();
    assert_eq!(r.text, "ok");
    assert_eq!(seen.lock().unwrap().len(), 4);
}

#[test]
fn gives_up_after_the_retry_budget() {
    let (url, seen) = serve(vec![(500, "{}".into()); 6]);
    let engine = HttpEngine::new(fast(&url)).unwrap();
    let err = engine.complete(&CompletionRequest::new("p", SamplingParams::default())).unwrap_err();
    assert!(matches!(err, EngineError::Transport(_)), "{err:?}");
    // first try plus three retries
    assert_eq!(seen.lock().unwrap().len(), 4);
}

#[test]
fn client_errors_fail_immediately() {
    let (url, seen) = serve(vec![(400, r#"{"error":"bad"}"#.into()), text_reply("never", "stop")]);
    let engine = HttpEngine::new(fast(&url)).unwrap();
    let err = engine.complete(&CompletionRequest::new("p", SamplingParams::default())).unwrap_err();
    assert!(matches!(err, EngineError::Engine(ref m) if m.contains("400")), "{err:?}");
    assert_eq!(seen.lock().unwrap().len(), 1);
}

#[test]
fn malformed_bodies_are_engine_errors() {
    let (url, _) = serve(vec![(200, "not json".into())]);
    let engine = HttpEngine::new(fast(&url)).unwrap();
    let err = engine.complete(&CompletionRequest::new("p", SamplingParams::default())).unwrap_err();
    assert!(matches!(err, EngineError::Engine(_)));

    let (url, _) = serve(vec![(200, r#"{"choices":[]}"#.into())]);
    let engine = HttpEngine::new(fast(&url)).unwrap();
    assert!(engine.complete(&CompletionRequest::new("p", SamplingParams::default())).is_err());
}

#[test]
fn unreachable_server_is_a_transport_error() {
    let port = TcpListener::bind("127.0.0.1:0").unwrap().local_addr().unwrap().port();
    let engine = HttpEngine::new(fast(&format!("http://127.0.0.1:{port}/v1/completions"))).unwrap();
    let err = engine.complete(&CompletionRequest::new("p", SamplingParams::default())).unwrap_err();
    assert!(matches!(err, EngineError::Transport(_)));
}

#[test]
fn non_http_endpoints_are_rejected() {
    assert!(matches!(HttpEngine::new(HttpConfig::new("ftp://x")), Err(EngineError::Config(_))));
    assert!(HttpEngine::new(HttpConfig::new("localhost:8000")).is_err());
}

#[test]
fn echoed_stop_sequences_are_cut_and_length_is_reported() {
    let (url, _) = serve(vec![text_reply("01\n10\n\nchatter", "stop"), text_reply("0101", "length")]);
    let engine = HttpEngine::new(fast(&url)).unwrap();
    let mut params = SamplingParams::default();
    params.stop = vec!["\n\n".into()];
    let r = engine.complete(&CompletionRequest::new("p", params.clone())).unwrap();
    assert_eq!(r.text, "01\n10");
    assert_eq!(r.finish_reason, FinishReason::StopSequence);
    let r = engine.complete(&CompletionRequest::new("p", params)).unwrap();
    assert_eq!(r.finish_reason, FinishReason::Length);
}

#[test]
fn logprobs_are_converted() {
    let body = json!({"choices": [{
        "text": "01",
        "finish_reason": "length",
        "logprobs": {
            "tokens": ["0", "1"],
            "token_logprobs": [-0.1, -0.7],
            "top_logprobs": [{"0": -0.1, "1": -2.4, "2": -5.0}, {"1": -0.7, "0": -0.7}]
        }
    }]});
    let (url, seen) = serve(vec![(200, body.to_string())]);
    let engine = HttpEngine::new(fast(&url)).unwrap();
    let req = CompletionRequest::new("p", SamplingParams::default()).with_logprobs(2);
    let r = engine.complete(&req).unwrap();
    assert_eq!(seen.lock().unwrap()[0].body["logprobs"], 2);
    let lp = r.token_logprobs.unwrap();
    assert_eq!(lp.len(), 2);
    assert_eq!(lp[0].token, "0");
    assert_eq!(lp[0].logprob, -0.1);
    assert_eq!(lp[0].top, vec![("0".to_string(), -0.1), ("1".to_string(), -2.4)]);
    assert_eq!(lp[1].top.len(), 2);
}

fn probe_reply(top: Value) -> (u16, String) {
    let body = json!({"choices": [{
        "text": "0",
        "logprobs": {"tokens": ["0"], "token_logprobs": [-0.5], "top_logprobs": [top]}
    }]});
    (200, body.to_string())
}

#[test]
fn next_token_distribution_probes_greedily() {
    let (url, seen) = serve(vec![probe_reply(json!({"0": (0.6f64).ln(), "1": (0.2f64).ln(), " ": (0.2f64).ln()}))]);
    let engine = HttpEngine::new(fast(&url)).unwrap();
    let d = engine.next_token_distribution("_0_1\n_", &["0", "1"], 1.0).unwrap();
    assert!((d.prob("0") - 0.75).abs() < 1e-12);
    assert!((d.prob("1") - 0.25).abs() < 1e-12);
    assert!(!d.approximated);
    let body = &seen.lock().unwrap()[0].body;
    assert_eq!(body["max_tokens"], 1);
    assert_eq!(body["temperature"], 0.0);
    assert_eq!(body["logprobs"], 20);
}

#[test]
fn missing_candidates_get_the_floor_and_are_flagged() {
    let (url, _) = serve(vec![probe_reply(json!({"0": (0.5f64).ln(), "a": (0.1f64).ln()}))]);
    let engine = HttpEngine::new(fast(&url)).unwrap();
    let d = engine.next_token_distribution("p", &["0", "1"], 1.0).unwrap();
    assert!(d.approximated);
    assert!((d.prob("0") - 0.5 / 0.6).abs() < 1e-12);
    assert!((d.prob("1") - 0.1 / 0.6).abs() < 1e-12);
}

#[test]
fn probing_without_logprobs_is_a_capability_error() {
    let (url, _) = serve(vec![text_reply("0", "length")]);
    let engine = HttpEngine::new(fast(&url)).unwrap();
    let err = engine.next_token_distribution("p", &["0", "1"], 1.0).unwrap_err();
    assert!(matches!(err, EngineError::Capability(_)), "{err:?}");
}

#[test]
fn recorded_traffic_replays_from_a_file() {
    let (url, _) = serve(vec![text_reply("0101\n", "stop"), text_reply("1111\n", "stop")]);
    let recorder = RecordingEngine::new(HttpEngine::new(fast(&url)).unwrap());
    let params = SamplingParams::default();
    let a = recorder.complete(&CompletionRequest::new("first\n", params.clone())).unwrap();
    let b = recorder.complete(&CompletionRequest::new("second\n", params.clone())).unwrap();

    let dir = std::env::temp_dir().join(format!("lmx-http-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    let path = dir.join("rec.jsonl");
    write_recording(&recorder.recording(), std::fs::File::create(&path).unwrap()).unwrap();
    let text = std::fs::read_to_string(&path).unwrap();
    assert_eq!(text.lines().count(), 2);
    let first: Value = serde_json::from_str(text.lines().next().unwrap()).unwrap();
    assert_eq!(first, json!({"prompt": "first\n", "response": "0101\n"}));

    let replay = ReplayEngine::new(read_recording(BufReader::new(std::fs::File::open(&path).unwrap())).unwrap());
    assert_eq!(replay.complete(&CompletionRequest::new("second\n", params.clone())).unwrap().text, b.text);
    assert_eq!(replay.complete(&CompletionRequest::new("first\n", params.clone())).unwrap().text, a.text);
    assert!(matches!(
        replay.complete(&CompletionRequest::new("first\n", params)),
        Err(EngineError::ReplayMiss(_))
    ));
    std::fs::remove_dir_all(dir).unwrap();
}
