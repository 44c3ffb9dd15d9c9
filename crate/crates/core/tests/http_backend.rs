//! The HTTP backend against a scripted local endpoint.

use std::io::{BufRead, BufReader, Read, Write};
use std::net::TcpListener;
use std::sync::{Arc, Mutex};
use std::time::Duration;

use serde_json::{json, Value};
use steerbench::backend::{
    Answer, BackendConfig, BackendError, BackendKind, Context, Coordinates, HttpChatBackend, LogprobMode, ScoreRequest,
    Scorer, ScoringBackend, TrialIds,
};
use steerbench::persona::{Direction, PersonaStatement};
use steerbench::prompt::prompt_with_steering;

#[derive(Debug, Clone)]
struct Seen {
    path: String,
    body: Value,
    auth: Option<String>,
}

type Handler = dyn Fn(usize, &str, &Value) -> (u16, String) + Send + Sync;

/// Serves `handler` on a fresh port; returns the base URL and the request log.
fn serve(handler: Box<Handler>) -> (String, Arc<Mutex<Vec<Seen>>>) {
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let url = format!("http://{}/v1", listener.local_addr().unwrap());
    let log = Arc::new(Mutex::new(Vec::new()));
    let seen = log.clone();
    std::thread::spawn(move || {
        for (n, stream) in listener.incoming().enumerate() {
            let Ok(mut stream) = stream else { continue };
            let mut reader = BufReader::new(stream.try_clone().unwrap());
            let mut line = String::new();
            reader.read_line(&mut line).unwrap();
            let path = line.split_whitespace().nth(1).unwrap_or("").to_owned();
            let (mut len, mut auth) = (0, None);
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
                    "authorization" => auth = Some(value.trim().to_owned()),
                    _ => {}
                }
            }
            let mut body = vec![0; len];
            reader.read_exact(&mut body).unwrap();
            let body: Value = serde_json::from_slice(&body).unwrap_or(Value::Null);
            let (status, text) = handler(n, &path, &body);
            seen.lock().unwrap().push(Seen { path, body, auth });
            let resp = format!(
                "HTTP/1.1 {status} X\r\ncontent-type: application/json\r\ncontent-length: {}\r\nconnection: close\r\n\r\n{text}",
                text.len()
            );
            let _ = stream.write_all(resp.as_bytes());
        }
    });
    (url, log)
}

fn config(url: &str, mode: LogprobMode) -> BackendConfig {
    BackendConfig {
        kind: BackendKind::HttpChat,
        endpoint_url: Some(url.to_owned()),
        logprob_mode: mode,
        request_timeout_secs: 5.0,
        synthetic: None,
        ..BackendConfig::synthetic("remote-model", Default::default())
    }
}

fn backend(url: &str, mode: LogprobMode) -> HttpChatBackend {
    HttpChatBackend::from_config(&config(url, mode))
        .unwrap()
        .with_backoff(Duration::from_millis(5))
}

fn request() -> ScoreRequest {
    let steer = PersonaStatement::new("I enjoy helping others", "agreeableness", Direction::Positive, 0.95).unwrap();
    let probe = PersonaStatement::new("I often start arguments", "agreeableness", Direction::Negative, 0.9).unwrap();
    ScoreRequest {
        prompt: prompt_with_steering(&[steer], &probe),
        coords: Coordinates {
            dimension: "agreeableness".into(),
            context: Context::Steered(Direction::Positive),
            budget_k: 1,
            trial_ids: TrialIds {
                experiment: 0,
                steering: 0,
            },
        },
    }
}

/// Echo-mode completion: the prompt as one token, the candidate as one
/// token, then one generated token.
fn echo_response(prompt: &str) -> String {
    let forms = [("Yes", -0.2), ("yes", -1.0), ("No", -1.5), ("no", -3.0)];
    let (form, lp) = forms.iter().find(|(f, _)| prompt.ends_with(f)).copied().unwrap();
    let cut = prompt.len() - form.len();
    json!({
        "choices": [{"text": prompt, "logprobs": {
            "tokens": [&prompt[..cut], form, "\n"],
            "token_logprobs": [null, lp, -0.7],
            "text_offset": [0, cut, prompt.len()]
        }}],
        "usage": {"completion_tokens": 1}
    })
    .to_string()
}

fn top_k_response() -> String {
    json!({"choices": [{"message": {"role": "assistant", "content": "No"}, "logprobs": {"content": [{
    "token": "No", "logprob": -0.3,
    "top_logprobs": [
        {"token": "No", "logprob": -0.3},
        {"token": "Yes", "logprob": -1.6},
        {"token": " yes", "logprob": -2.5}
    ]}]}}]})
    .to_string()
}

#[test]
fn echo_mode_scores_every_candidate_form() {
    let (url, log) = serve(Box::new(|_, _, body| {
        (200, echo_response(body["prompt"].as_str().unwrap()))
    }));
    let gap = backend(&url, LogprobMode::Echo).logprob_gap(&request()).unwrap();
    assert!((gap - (-0.2 - -1.5)).abs() < 1e-12, "{gap}");
    let seen = log.lock().unwrap();
    assert_eq!(seen.len(), 4);
    for s in seen.iter() {
        assert_eq!(s.path, "/v1/completions");
        assert_eq!(s.body["echo"], true);
        assert_eq!(s.body["model"], "remote-model");
        let prompt = s.body["prompt"].as_str().unwrap();
        assert!(prompt.contains("I enjoy helping others"));
        assert!(prompt.contains("I often start arguments"));
    }
}

#[test]
fn top_k_mode_uses_chat_roles() {
    let (url, log) = serve(Box::new(|_, _, _| (200, top_k_response())));
    let gap = backend(&url, LogprobMode::TopK).logprob_gap(&request()).unwrap();
    assert!((gap - (-1.6 - -0.3)).abs() < 1e-12);
    let seen = log.lock().unwrap();
    assert_eq!(seen.len(), 1);
    assert_eq!(seen[0].path, "/v1/chat/completions");
    let messages = seen[0].body["messages"].as_array().unwrap();
    assert_eq!(messages[0]["role"], "system");
    assert_eq!(messages[1]["role"], "user");
    assert!(messages[0]["content"]
        .as_str()
        .unwrap()
        .contains("I enjoy helping others"));
    assert!(!messages[1]["content"]
        .as_str()
        .unwrap()
        .contains("I enjoy helping others"));
    assert_eq!(seen[0].body["top_logprobs"], 20);
    assert_eq!(seen[0].auth, None);
}

#[test]
fn scorer_maps_gap_to_answer() {
    let (url, _) = serve(Box::new(|_, _, _| (200, top_k_response())));
    let scorer = Scorer::new(Box::new(backend(&url, LogprobMode::TopK)), None);
    let rec = scorer.score_polar_question(&request()).unwrap();
    assert_eq!(rec.answer, Answer::No);
    assert_eq!(rec.valence, Direction::Negative);
    assert_eq!(rec.context, Context::Steered(Direction::Positive));
    assert_eq!(scorer.backend_calls(), 1);
}

#[test]
fn throttling_and_server_errors_are_retried() {
    let (url, log) = serve(Box::new(|n, _, _| match n {
        0 => (429, "{\"error\": \"slow down\"}".into()),
        1 => (503, "{\"error\": \"overloaded\"}".into()),
        _ => (200, top_k_response()),
    }));
    let gap = backend(&url, LogprobMode::TopK).logprob_gap(&request()).unwrap();
    assert!(gap < 0.0);
    assert_eq!(log.lock().unwrap().len(), 3);
}

#[test]
fn persistent_failures_give_up_as_transport_errors() {
    let (url, log) = serve(Box::new(|_, _, _| (500, "{}".into())));
    let err = backend(&url, LogprobMode::TopK).logprob_gap(&request()).unwrap_err();
    assert!(matches!(err, BackendError::Transport { attempts: 3, .. }), "{err}");
    assert!(!err.is_fatal());
    assert_eq!(log.lock().unwrap().len(), 3);
}

#[test]
fn rejected_logprobs_are_a_fatal_capability_error() {
    let (url, log) = serve(Box::new(|_, _, _| {
        (
            400,
            "{\"error\": {\"message\": \"logprobs are not supported for this model\"}}".into(),
        )
    }));
    let err = backend(&url, LogprobMode::TopK).logprob_gap(&request()).unwrap_err();
    assert!(matches!(err, BackendError::Capability(_)), "{err}");
    assert!(err.is_fatal());
    // no retries for client errors
    assert_eq!(log.lock().unwrap().len(), 1);
}

#[test]
fn response_without_logprobs_is_a_capability_error() {
    let (url, _) = serve(Box::new(|_, _, _| {
        (200, json!({"choices": [{"message": {"content": "Yes"}}]}).to_string())
    }));
    let err = backend(&url, LogprobMode::TopK).logprob_gap(&request()).unwrap_err();
    assert!(matches!(err, BackendError::Capability(_)), "{err}");
}

#[test]
fn other_client_errors_are_protocol_errors() {
    let (url, _) = serve(Box::new(|_, _, _| (404, "{\"error\": \"no such model\"}".into())));
    let err = backend(&url, LogprobMode::Echo).logprob_gap(&request()).unwrap_err();
    assert!(matches!(err, BackendError::Protocol(_)), "{err}");
}

#[test]
fn api_key_is_sent_as_bearer_token() {
    std::env::set_var("STEERBENCH_TEST_KEY", "sk-local");
    let (url, log) = serve(Box::new(|_, _, _| (200, top_k_response())));
    let mut cfg = config(&url, LogprobMode::TopK);
    cfg.api_key_env = Some("STEERBENCH_TEST_KEY".into());
    HttpChatBackend::from_config(&cfg)
        .unwrap()
        .logprob_gap(&request())
        .unwrap();
    assert_eq!(log.lock().unwrap()[0].auth.as_deref(), Some("Bearer sk-local"));

    cfg.api_key_env = Some("STEERBENCH_TEST_KEY_UNSET".into());
    assert!(matches!(
        HttpChatBackend::from_config(&cfg),
        Err(BackendError::Config(_))
    ));
}
