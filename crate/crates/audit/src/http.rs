//! Chat-completion style HTTP transport.

use std::time::{Duration, Instant};

use anyhow::Context;
use base64::Engine;
use disco_core::query::{GatewayError, QueryMode, QueryRequest, QueryResponse, Segment, TokenDistribution};
use serde_json::{json, Value};

use crate::config::{BackendConfig, RequestStyle};
use crate::gateway::{Transport, TransportError};

const JSON_INSTRUCTION: &str = "\n\nRespond with a JSON object whose only field is \"movie_title\".";

pub struct HttpTransport {
    endpoint: String,
    model: Option<String>,
    auth_env_var: Option<String>,
    style: RequestStyle,
    top_logprobs: u32,
    agent: ureq::Agent,
}

impl HttpTransport {
    pub fn from_config(config: &BackendConfig) -> anyhow::Result<Self> {
        let endpoint = config
            .descriptor
            .endpoint_url
            .clone()
            .with_context(|| format!("backend `{}` has no endpoint_url", config.descriptor.name))?;
        Ok(Self {
            endpoint,
            model: config.model.clone(),
            auth_env_var: config.descriptor.auth_env_var.clone(),
            style: config.request_style,
            top_logprobs: config.top_logprobs.unwrap_or(5),
            agent: ureq::AgentBuilder::new()
                .timeout(Duration::from_secs(config.timeout_s))
                .build(),
        })
    }

    /// Request body for `request`.
    pub fn body(&self, request: &QueryRequest) -> Value {
        let wants_json = self.style == RequestStyle::ChatCompletionsJson
            && matches!(request.mode, QueryMode::FreeformImage | QueryMode::FreeformCaption);
        let mut text = request.prompt_text.clone();
        if wants_json {
            text.push_str(JSON_INSTRUCTION);
        }
        let mut content = vec![json!({"type": "text", "text": text})];
        for image in &request.images {
            let data = base64::engine::general_purpose::STANDARD.encode(&image.bytes);
            content.push(json!({
                "type": "image_url",
                "image_url": {"url": format!("data:{};base64,{data}", image.media_type)},
            }));
        }
        let mut body = json!({
            "messages": [{"role": "user", "content": content}],
            "temperature": request.temperature,
            "max_tokens": request.max_output_tokens,
        });
        if let Some(model) = &self.model {
            body["model"] = json!(model);
        }
        if wants_json {
            body["response_format"] = json!({"type": "json_object"});
        }
        if request.want_distributions {
            body["logprobs"] = json!(true);
            body["top_logprobs"] = json!(self.top_logprobs);
        }
        body
    }
}

/// Text and per-position top-k vectors from a chat-completion response.
pub fn parse_reply(reply: &Value) -> Result<(String, Option<Vec<TokenDistribution>>), String> {
    let choice = reply
        .get("choices")
        .and_then(|c| c.get(0))
        .ok_or("response has no choices")?;
    let text = choice
        .pointer("/message/content")
        .and_then(Value::as_str)
        .ok_or("response has no message content")?
        .to_string();
    let positions = choice.pointer("/logprobs/content").and_then(Value::as_array);
    let dists = positions.map(|positions| {
        positions
            .iter()
            .map(|pos| {
                let mut probs: Vec<f64> = match pos.get("top_logprobs").and_then(Value::as_array) {
                    Some(alts) if !alts.is_empty() => alts
                        .iter()
                        .filter_map(|a| a.get("logprob").and_then(Value::as_f64))
                        .map(f64::exp)
                        .collect(),
                    _ => pos.get("logprob").and_then(Value::as_f64).map(f64::exp).into_iter().collect(),
                };
                probs.sort_by(|a, b| b.total_cmp(a));
                TokenDistribution::top_k(Segment::Text, probs)
            })
            .collect()
    });
    Ok((text, dists))
}

impl Transport for HttpTransport {
    fn send(&self, request: &QueryRequest) -> Result<QueryResponse, TransportError> {
        let mut call = self.agent.post(&self.endpoint).set("Content-Type", "application/json");
        if let Some(var) = &self.auth_env_var {
            let key = std::env::var(var)
                .ok()
                .filter(|k| !k.is_empty())
                .ok_or_else(|| TransportError::Fatal(GatewayError::AuthMissing(var.clone())))?;
            call = call.set("Authorization", &format!("Bearer {key}"));
        }
        let started = Instant::now();
        let reply = match call.send_json(self.body(request)) {
            Ok(r) => r,
            Err(ureq::Error::Status(code, r)) => {
                let detail = format!("HTTP {code}: {}", r.into_string().unwrap_or_default());
                return Err(if code == 429 || code >= 500 {
                    TransportError::Retryable(detail)
                } else {
                    TransportError::Refusal(detail)
                });
            }
            Err(ureq::Error::Transport(t)) => return Err(TransportError::Retryable(t.to_string())),
        };
        let value: Value = reply
            .into_json()
            .map_err(|e| TransportError::Retryable(format!("unreadable response body: {e}")))?;
        let (raw_text, token_distributions) = parse_reply(&value).map_err(TransportError::Refusal)?;
        Ok(QueryResponse {
            raw_text,
            token_distributions,
            from_cache: false,
            latency_ms: started.elapsed().as_millis() as u64,
            backend_name: String::new(),
        })
    }
}
