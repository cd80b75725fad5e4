mod common;

use std::io::{BufRead, BufReader, Read, Write};
use std::net::TcpListener;
use std::sync::{Arc, Mutex};
use std::time::Duration;

use serde_json::{json, Value};
use streammem::pipeline::{run, ClockMode, QueryRequest};
use streammem::ports::remote::RemoteGenerator;
use streammem::ports::{remote_call, Endpoint, RemoteBackendConfig, RemoteClient, TextEncoder};
use streammem::Error;

#[derive(Clone)]
struct Reply {
    status: u16,
    body: String,
    delay: Duration,
}

fn ok(body: Value) -> Reply {
    Reply {
        status: 200,
        body: body.to_string(),
        delay: Duration::ZERO,
    }
}

fn status(code: u16) -> Reply {
    Reply {
        status: code,
        body: "{\"error\":\"boom\"}".into(),
        delay: Duration::ZERO,
    }
}

#[derive(Debug, Clone)]
struct Seen {
    path: String,
    authorization: Option<String>,
    body: Value,
}

/// Loopback server answering with `script` in order; the last reply repeats.
fn serve(script: Vec<Reply>) -> (String, Arc<Mutex<Vec<Seen>>>) {
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let url = format!("http://{}", listener.local_addr().unwrap());
    let seen = Arc::new(Mutex::new(Vec::new()));
    let log = Arc::clone(&seen);
    std::thread::spawn(move || {
        for (i, stream) in listener.incoming().enumerate() {
            let Ok(mut stream) = stream else { continue };
            let mut reader = BufReader::new(stream.try_clone().unwrap());
            let mut request_line = String::new();
            reader.read_line(&mut request_line).unwrap();
            let path = request_line.split_whitespace().nth(1).unwrap_or("").to_string();
            let (mut length, mut authorization) = (0usize, None);
            loop {
                let mut line = String::new();
                reader.read_line(&mut line).unwrap();
                let line = line.trim_end();
                if line.is_empty() {
                    break;
                }
                let (name, value) = line.split_once(':').unwrap();
                match name.to_ascii_lowercase().as_str() {
                    "content-length" => length = value.trim().parse().unwrap(),
                    "authorization" => authorization = Some(value.trim().to_string()),
                    _ => {}
                }
            }
            let mut body = vec![0; length];
            reader.read_exact(&mut body).unwrap();
            log.lock().unwrap().push(Seen {
                path,
                authorization,
                body: serde_json::from_slice(&body).unwrap_or(Value::Null),
            });
            let reply = script[i.min(script.len() - 1)].clone();
            std::thread::sleep(reply.delay);
            let _ = write!(
                stream,
                "HTTP/1.1 {} X\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{}",
                reply.status,
                reply.body.len(),
                reply.body
            );
        }
    });
    (url, seen)
}

fn cfg(url: &str) -> RemoteBackendConfig {
    RemoteBackendConfig {
        base_url: url.to_string(),
        timeout: 5.0,
        retry_count: 0,
        api_key_env_var: None,
        backoff: 0.0,
    }
}

#[test]
fn echoed_vector_comes_back_verbatim() {
    let v = [0.25, -1.5, 3.0, 1e-3];
    let (url, seen) = serve(vec![ok(json!({ "vectors": [v] }))]);
    let client = Arc::new(RemoteClient::new(cfg(&url)).unwrap());
    let got = streammem::ports::remote::RemoteTextEncoder::new(client)
        .encode("red cup")
        .unwrap();
    assert_eq!(got, v);
    let seen = seen.lock().unwrap();
    assert_eq!(seen[0].path, "/embed");
    assert_eq!(seen[0].body, json!({ "texts": ["red cup"] }));
}

#[test]
fn retries_until_success() {
    let (url, seen) = serve(vec![status(500), status(500), ok(json!({ "caption": "scene: lake" }))]);
    let c = RemoteBackendConfig {
        retry_count: 3,
        backoff: 0.01,
        ..cfg(&url)
    };
    let resp = remote_call(&c, Endpoint::Caption, &json!({ "captions": [], "tags": ["lake"] })).unwrap();
    assert_eq!(resp["caption"], "scene: lake");
    assert_eq!(seen.lock().unwrap().len(), 3);
}

#[test]
fn exhausted_retries_report_endpoint_and_attempts() {
    let (url, _) = serve(vec![status(503)]);
    let c = RemoteBackendConfig {
        retry_count: 2,
        ..cfg(&url)
    };
    match remote_call(&c, Endpoint::Judge, &json!({})) {
        Err(Error::Backend {
            endpoint,
            attempts,
            message,
        }) => {
            assert_eq!(endpoint, "judge");
            assert_eq!(attempts, 3);
            assert!(message.contains("503"), "{message}");
        }
        other => panic!("{other:?}"),
    }
}

#[test]
fn slow_server_times_out() {
    let (url, _) = serve(vec![Reply {
        delay: Duration::from_millis(1500),
        ..ok(json!({ "text": "late" }))
    }]);
    let c = RemoteBackendConfig {
        timeout: 0.2,
        ..cfg(&url)
    };
    let err = remote_call(&c, Endpoint::Generate, &json!({ "bundle": {} })).unwrap_err();
    assert!(matches!(err, Error::Backend { attempts: 1, .. }), "{err:?}");
    assert_eq!(err.exit_code(), 3);
}

#[test]
fn malformed_response_is_a_protocol_error() {
    let (url, _) = serve(vec![ok(json!({ "vectors": "nope" }))]);
    let client = Arc::new(RemoteClient::new(cfg(&url)).unwrap());
    let err = streammem::ports::remote::RemoteTextEncoder::new(client)
        .encode("x")
        .unwrap_err();
    assert!(matches!(err, Error::Protocol { .. }), "{err:?}");
}

#[test]
fn bearer_token_is_sent() {
    let var = "STREAMMEM_REMOTE_TEST_KEY";
    std::env::set_var(var, "s3cret");
    let (url, seen) = serve(vec![ok(json!({ "verdict": "yes", "score": 4 }))]);
    let c = RemoteBackendConfig {
        api_key_env_var: Some(var.into()),
        ..cfg(&url)
    };
    remote_call(
        &c,
        Endpoint::Judge,
        &json!({ "question": "q", "reference": "r", "prediction": "p" }),
    )
    .unwrap();
    assert_eq!(seen.lock().unwrap()[0].authorization.as_deref(), Some("Bearer s3cret"));
}

#[test]
fn failing_generator_marks_answers_and_run_continues() {
    let (url, _) = serve(vec![Reply {
        delay: Duration::from_millis(400),
        ..ok(json!({ "text": "late" }))
    }]);
    let (cfg_e, mut ports) = common::base();
    let client = Arc::new(
        RemoteClient::new(RemoteBackendConfig {
            timeout: 0.1,
            ..cfg(&url)
        })
        .unwrap(),
    );
    ports.generator = Arc::new(RemoteGenerator::new(client));
    let frames = common::frames_of(&common::short_spec(1));
    let n = frames.len() as u64;
    let queries = vec![
        QueryRequest::new("What did you see in the kitchen?", 5.0),
        QueryRequest::new("What did you see in the garden?", 9.0),
    ];
    let report = run(common::source(frames), queries, &cfg_e, &ports, ClockMode::Sim).unwrap();
    assert_eq!(report.frames_in, n);
    assert!(report.chunks > 0);
    assert_eq!(report.answers.len(), 2);
    for a in &report.answers {
        assert!(a.error.as_deref().is_some_and(|e| e.contains("generate")), "{a:?}");
        assert!(a.answer.is_empty());
        assert!(a.bundle_digest.is_some());
        assert!(a.rpd >= 0.0);
    }
}
