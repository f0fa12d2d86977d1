//! Remote backend contract, exercised entirely against recorded fixtures.
//! No test here opens a network connection.

use std::collections::VecDeque;
use std::sync::Mutex;
use std::time::Duration;

use pestadvisor::gateway::{
    BackendConfig, ChatExchange, CompletionBackend, HttpResponse, Message, RemoteBackend, Role,
    Transport,
};
use pestadvisor::Error;

const OK_FIXTURE: &str = include_str!("fixtures/chat_completion_ok.json");
const SERVER_ERROR_FIXTURE: &str = include_str!("fixtures/server_error.json");

/// Replays a recorded response sequence and captures every request body.
struct FixtureTransport {
    responses: Mutex<VecDeque<Result<HttpResponse, ()>>>,
    requests: Mutex<Vec<String>>,
}

impl FixtureTransport {
    fn new(responses: Vec<Result<HttpResponse, ()>>) -> Self {
        FixtureTransport {
            responses: Mutex::new(responses.into()),
            requests: Mutex::new(Vec::new()),
        }
    }

    fn requests(&self) -> Vec<String> {
        self.requests.lock().unwrap().clone()
    }
}

impl Transport for FixtureTransport {
    fn post_json(
        &self,
        _url: &str,
        _bearer: Option<&str>,
        body: &str,
        timeout: Duration,
    ) -> pestadvisor::Result<HttpResponse> {
        self.requests.lock().unwrap().push(body.to_string());
        match self.responses.lock().unwrap().pop_front() {
            Some(Ok(resp)) => Ok(resp),
            Some(Err(())) => Err(Error::Timeout(timeout)),
            None => panic!("transport called more times than the fixture allows"),
        }
    }
}

fn ok_response() -> HttpResponse {
    HttpResponse {
        status: 200,
        body: OK_FIXTURE.to_string(),
    }
}

fn config(max_retries: u32) -> BackendConfig {
    let mut config = BackendConfig::remote("https://api.example.com/v1/chat/completions", "m-test");
    config.max_retries = max_retries;
    config.retry_base_ms = 1;
    config.api_key_env = None; // keyless endpoint for fixture tests
    config
}

fn exchange() -> ChatExchange {
    ChatExchange {
        messages: vec![
            Message {
                role: Role::System,
                content: "validator profile".into(),
            },
            Message {
                role: Role::User,
                content: "task-type: validate_threshold\n\nanalyse".into(),
            },
            Message {
                role: Role::Tool,
                content: "tool: markdown_reader custom_pma_path\n\n# advice".into(),
            },
        ],
        temperature: 0.0,
        max_output: 512,
        agent: Some("Validator".into()),
    }
}

#[test]
fn replay_extracts_fixture_text_and_usage() {
    let transport = FixtureTransport::new(vec![Ok(ok_response())]);
    let backend = RemoteBackend::with_transport(config(2), transport).with_sleeper(|_| {});
    let completion = backend.complete(&exchange()).unwrap();

    // The extracted text is exactly the recorded assistant message.
    assert!(completion.text.starts_with("Reviewed the threshold conclusion"));
    assert!(completion.text.contains("\"verdict\": \"confirmed\""));
    assert_eq!(completion.usage.attempts, 1);
    assert_eq!(completion.usage.prompt_tokens, Some(1874));
    assert_eq!(completion.usage.completion_tokens, Some(96));

    // And the recorded text parses as a validation report downstream.
    let report = pestadvisor::agents::parse_validation_report(&completion.text).unwrap();
    assert_eq!(report.verdict, pestadvisor::agents::Verdict::Confirmed);
}

#[test]
fn request_body_matches_wire_contract() {
    let transport = FixtureTransport::new(vec![Ok(ok_response())]);
    let backend = RemoteBackend::with_transport(config(0), transport).with_sleeper(|_| {});
    backend.complete(&exchange()).unwrap();

    let requests = backend.transport().requests();
    assert_eq!(requests.len(), 1);
    let body: serde_json::Value = serde_json::from_str(&requests[0]).unwrap();
    assert_eq!(body["model"], "m-test");
    assert_eq!(body["temperature"], 0.0);
    assert_eq!(body["max_tokens"], 512);
    let messages = body["messages"].as_array().unwrap();
    assert_eq!(messages.len(), 3);
    assert_eq!(messages[0]["role"], "system");
    assert_eq!(messages[1]["role"], "user");
    // Tool outputs travel as user turns on the wire.
    assert_eq!(messages[2]["role"], "user");
    assert!(messages[2]["content"]
        .as_str()
        .unwrap()
        .starts_with("tool: markdown_reader"));
}

#[test]
fn transient_failures_retry_with_accounting() {
    let transport = FixtureTransport::new(vec![
        Ok(HttpResponse {
            status: 500,
            body: SERVER_ERROR_FIXTURE.to_string(),
        }),
        Ok(HttpResponse {
            status: 503,
            body: SERVER_ERROR_FIXTURE.to_string(),
        }),
        Ok(ok_response()),
    ]);
    let backend = RemoteBackend::with_transport(config(2), transport).with_sleeper(|_| {});
    let completion = backend.complete(&exchange()).unwrap();
    assert_eq!(completion.usage.attempts, 3, "two retries then success");
}

#[test]
fn zero_retries_means_exactly_one_attempt() {
    let transport = FixtureTransport::new(vec![Ok(HttpResponse {
        status: 500,
        body: SERVER_ERROR_FIXTURE.to_string(),
    })]);
    let backend = RemoteBackend::with_transport(config(0), transport).with_sleeper(|_| {});
    let err = backend.complete(&exchange()).unwrap_err();
    assert!(matches!(err, Error::RemoteRefusal { status: 500, .. }), "{err}");
    assert_eq!(backend.transport().requests().len(), 1);
}

#[test]
fn retries_exhaust_on_timeouts() {
    let transport = FixtureTransport::new(vec![Err(()), Err(()), Err(())]);
    let backend = RemoteBackend::with_transport(config(2), transport).with_sleeper(|_| {});
    let err = backend.complete(&exchange()).unwrap_err();
    assert!(matches!(err, Error::Timeout(_)), "{err}");
    assert_eq!(backend.transport().requests().len(), 3, "max_retries+1 attempts");
}

#[test]
fn non_retryable_status_fails_immediately() {
    let transport = FixtureTransport::new(vec![Ok(HttpResponse {
        status: 401,
        body: "{\"error\": {\"message\": \"bad key\"}}".to_string(),
    })]);
    let backend = RemoteBackend::with_transport(config(3), transport).with_sleeper(|_| {});
    let err = backend.complete(&exchange()).unwrap_err();
    assert!(matches!(err, Error::RemoteRefusal { status: 401, .. }), "{err}");
    assert_eq!(backend.transport().requests().len(), 1, "no retry on 401");
}

#[test]
fn malformed_body_is_rejected() {
    let transport = FixtureTransport::new(vec![Ok(HttpResponse {
        status: 200,
        body: "{\"choices\": []}".to_string(),
    })]);
    let backend = RemoteBackend::with_transport(config(0), transport).with_sleeper(|_| {});
    let err = backend.complete(&exchange()).unwrap_err();
    assert!(matches!(err, Error::MalformedResponse(_)), "{err}");
}

#[test]
fn missing_api_key_env_is_a_config_error() {
    let mut cfg = config(0);
    cfg.api_key_env = Some("PESTADVISOR_TEST_KEY_THAT_IS_UNSET".into());
    let transport = FixtureTransport::new(vec![]);
    let backend = RemoteBackend::with_transport(cfg, transport).with_sleeper(|_| {});
    let err = backend.complete(&exchange()).unwrap_err();
    assert!(matches!(err, Error::Config(_)), "{err}");
    assert!(backend.transport().requests().is_empty(), "no request without a key");
}

#[test]
fn in_flight_requests_respect_the_bound() {
    use std::sync::atomic::{AtomicI32, Ordering};
    use std::sync::Arc as StdArc;

    struct Gauge {
        current: AtomicI32,
        peak: AtomicI32,
    }
    struct SlowTransport(StdArc<Gauge>);
    impl Transport for SlowTransport {
        fn post_json(
            &self,
            _url: &str,
            _bearer: Option<&str>,
            _body: &str,
            _timeout: Duration,
        ) -> pestadvisor::Result<HttpResponse> {
            let now = self.0.current.fetch_add(1, Ordering::SeqCst) + 1;
            self.0.peak.fetch_max(now, Ordering::SeqCst);
            std::thread::sleep(Duration::from_millis(5));
            self.0.current.fetch_sub(1, Ordering::SeqCst);
            Ok(HttpResponse {
                status: 200,
                body: OK_FIXTURE.to_string(),
            })
        }
    }

    let gauge = StdArc::new(Gauge {
        current: AtomicI32::new(0),
        peak: AtomicI32::new(0),
    });
    let mut cfg = config(0);
    cfg.max_in_flight = 2;
    let backend = StdArc::new(
        RemoteBackend::with_transport(cfg, SlowTransport(StdArc::clone(&gauge)))
            .with_sleeper(|_| {}),
    );

    let mut handles = Vec::new();
    for _ in 0..8 {
        let backend = StdArc::clone(&backend);
        handles.push(std::thread::spawn(move || {
            backend.complete(&exchange()).unwrap();
        }));
    }
    for h in handles {
        h.join().unwrap();
    }
    assert!(gauge.peak.load(Ordering::SeqCst) <= 2, "bound exceeded");
    assert!(gauge.peak.load(Ordering::SeqCst) >= 1);
}

#[test]
fn per_agent_model_override_applies() {
    let mut cfg = config(0);
    cfg.model_overrides
        .insert("Validator".to_string(), "m-validator".to_string());
    let transport = FixtureTransport::new(vec![Ok(ok_response())]);
    let backend = RemoteBackend::with_transport(cfg, transport).with_sleeper(|_| {});
    backend.complete(&exchange()).unwrap();
    let body: serde_json::Value =
        serde_json::from_str(&backend.transport().requests()[0]).unwrap();
    assert_eq!(body["model"], "m-validator");
}
