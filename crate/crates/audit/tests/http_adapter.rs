//! The HTTP transport against a scripted local server.

use std::io::{BufRead, BufReader, Read, Write};
use std::net::TcpListener;
use std::sync::{Arc, Mutex};
use std::thread;

use disco_audit::config::{BackendConfig, RequestStyle};
use disco_audit::gateway::Gateway;
use disco_audit::http::HttpTransport;
use disco_core::query::{
    logit_stream, Backend, BackendDescriptor, BackendKind, Capability, GatewayError, ImagePayload, QueryMode,
    QueryRequest,
};
use serde_json::{json, Value};

struct Server {
    url: String,
    bodies: Arc<Mutex<Vec<Value>>>,
    headers: Arc<Mutex<Vec<String>>>,
}

/// Answers each incoming connection with the next scripted (status, body).
fn serve(script: Vec<(u16, String)>) -> Server {
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let url = format!("http://{}/v1/chat/completions", listener.local_addr().unwrap());
    let bodies = Arc::new(Mutex::new(Vec::new()));
    let headers = Arc::new(Mutex::new(Vec::new()));
    let (b, h) = (Arc::clone(&bodies), Arc::clone(&headers));
    thread::spawn(move || {
        for (status, reply) in script {
            let (stream, _) = listener.accept().unwrap();
            let mut reader = BufReader::new(stream.try_clone().unwrap());
            let mut length = 0usize;
            let mut head = String::new();
            loop {
                let mut line = String::new();
                reader.read_line(&mut line).unwrap();
                if line == "\r\n" || line.is_empty() {
                    break;
                }
                if let Some(v) = line.to_ascii_lowercase().strip_prefix("content-length:") {
                    length = v.trim().parse().unwrap();
                }
                head.push_str(&line);
            }
            let mut body = vec![0u8; length];
            reader.read_exact(&mut body).unwrap();
            b.lock().unwrap().push(serde_json::from_slice(&body).unwrap());
            h.lock().unwrap().push(head);
            let mut stream = stream;
            write!(
                stream,
                "HTTP/1.1 {status} X\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{reply}",
                reply.len()
            )
            .unwrap();
        }
    });
    Server { url, bodies, headers }
}

fn completion(text: &str) -> String {
    json!({"choices": [{"message": {"role": "assistant", "content": text}}]}).to_string()
}

fn gateway(url: &str, retry_limit: u32, auth: Option<&str>, style: RequestStyle) -> Gateway {
    let descriptor = BackendDescriptor {
        name: "local".into(),
        kind: BackendKind::RemoteHttp,
        endpoint_url: Some(url.into()),
        auth_env_var: auth.map(str::to_string),
        capabilities: [Capability::Freeform, Capability::Logits].into_iter().collect(),
        max_images_per_prompt: 1,
        max_inflight: 1,
        retry_limit,
    };
    let mut config = BackendConfig::mock(descriptor.clone());
    config.model = Some("test-model".into());
    config.request_style = style;
    config.timeout_s = 5;
    Gateway::new(descriptor, Box::new(HttpTransport::from_config(&config).unwrap())).with_sleeper(Arc::new(|_| {}))
}

fn image_request() -> QueryRequest {
    let mut r = QueryRequest::new(QueryMode::FreeformImage, "Which movie is this frame from?");
    r.images.push(ImagePayload::new("image/png", vec![1, 2, 3]));
    r.frame_ids.push("f1".into());
    r
}

#[test]
fn request_shape_and_reply() {
    let s = serve(vec![(200, completion("Frozen"))]);
    let g = gateway(&s.url, 0, None, RequestStyle::ChatCompletions);
    let r = g.complete(&image_request()).unwrap();
    assert_eq!(r.raw_text, "Frozen");
    assert_eq!(r.backend_name, "local");
    let body = &s.bodies.lock().unwrap()[0];
    assert_eq!(body["temperature"], json!(0.0));
    assert_eq!(body["model"], json!("test-model"));
    let content = body["messages"][0]["content"].as_array().unwrap();
    assert_eq!(content[0]["text"], json!("Which movie is this frame from?"));
    assert_eq!(content[1]["image_url"]["url"], json!("data:image/png;base64,AQID"));
    assert!(body.get("logprobs").is_none());
    assert!(body.get("response_format").is_none());
}

#[test]
fn json_style_asks_for_a_title_field() {
    let s = serve(vec![(200, completion("{\"movie_title\": \"Frozen\"}"))]);
    let g = gateway(&s.url, 0, None, RequestStyle::ChatCompletionsJson);
    g.complete(&image_request()).unwrap();
    let body = &s.bodies.lock().unwrap()[0];
    assert_eq!(body["response_format"]["type"], json!("json_object"));
    assert!(body["messages"][0]["content"][0]["text"].as_str().unwrap().contains("movie_title"));
}

#[test]
fn server_errors_are_retried() {
    let s = serve(vec![
        (503, "{}".into()),
        (429, "{}".into()),
        (200, completion("Moana")),
    ]);
    let g = gateway(&s.url, 2, None, RequestStyle::ChatCompletions);
    assert_eq!(g.complete(&image_request()).unwrap().raw_text, "Moana");
    assert_eq!(g.transport_calls(), 3);
}

#[test]
fn retries_run_out() {
    let s = serve(vec![(500, "{}".into()), (500, "{}".into())]);
    let g = gateway(&s.url, 1, None, RequestStyle::ChatCompletions);
    match g.complete(&image_request()) {
        Err(GatewayError::TransportFailure { attempts, .. }) => assert_eq!(attempts, 2),
        other => panic!("{other:?}"),
    }
}

#[test]
fn client_errors_are_refusals() {
    let s = serve(vec![(400, "{\"error\": \"content policy\"}".into())]);
    let g = gateway(&s.url, 3, None, RequestStyle::ChatCompletions);
    assert!(matches!(g.complete(&image_request()), Err(GatewayError::BackendRefusal(_))));
    assert_eq!(g.transport_calls(), 1);
}

#[test]
fn missing_key_fails_before_sending() {
    let g = gateway("http://127.0.0.1:9/unused", 3, Some("DISCO_TEST_KEY_THAT_IS_NOT_SET"), RequestStyle::ChatCompletions);
    assert!(matches!(g.complete(&image_request()), Err(GatewayError::AuthMissing(_))));
}

#[test]
fn key_goes_in_bearer_header() {
    std::env::set_var("DISCO_TEST_KEY_SET", "sk-local");
    let s = serve(vec![(200, completion("Frozen"))]);
    let g = gateway(&s.url, 0, Some("DISCO_TEST_KEY_SET"), RequestStyle::ChatCompletions);
    g.complete(&image_request()).unwrap();
    assert!(s.headers.lock().unwrap()[0].to_ascii_lowercase().contains("authorization: bearer sk-local"));
}

#[test]
fn top_logprobs_become_partial_vectors() {
    let alts = |ps: [f64; 5]| -> Vec<Value> {
        ps.iter().enumerate().map(|(i, p)| json!({"token": format!("t{i}"), "logprob": p.ln()})).collect()
    };
    let reply = json!({"choices": [{
        "message": {"content": "Frozen"},
        "logprobs": {"content": [
            {"token": "Fro", "logprob": 0.6f64.ln(), "top_logprobs": alts([0.1, 0.6, 0.1, 0.05, 0.05])},
            {"token": "zen", "logprob": 0.9f64.ln(), "top_logprobs": alts([0.9, 0.02, 0.01, 0.01, 0.01])},
        ]},
    }]});
    let s = serve(vec![(200, reply.to_string())]);
    let g = gateway(&s.url, 0, None, RequestStyle::ChatCompletions);
    let (_, dists) = logit_stream(&g, &image_request()).unwrap();
    assert_eq!(dists.len(), 2);
    assert_eq!(dists[0].k(), 5);
    assert!((dists[0].probs[0] - 0.6).abs() < 1e-12);
    assert!(dists.iter().all(|d| d.mass() < 1.0));
    let body = &s.bodies.lock().unwrap()[0];
    assert_eq!(body["logprobs"], json!(true));
    assert_eq!(body["top_logprobs"], json!(5));
}
