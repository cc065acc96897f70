//! OpenAI-compatible `POST /v1/chat/completions` backend.

use std::time::Duration;

use serde_json::{json, Map, Value};

use super::{Backend, CompletionRequest, GatewayError, RawCompletion};

pub struct HttpBackend {
    client: reqwest::blocking::Client,
}

impl HttpBackend {
    pub fn new(timeout: Duration) -> Result<Self, GatewayError> {
        let client = reqwest::blocking::Client::builder()
            .timeout(timeout)
            .build()
            .map_err(|e| GatewayError::Config(format!("http client: {e}")))?;
        Ok(HttpBackend { client })
    }
}

/// Resolve a configured base URL to the chat-completions route.
pub fn completions_url(base: &str) -> String {
    let base = base.trim_end_matches('/');
    if base.ends_with("/chat/completions") {
        base.to_owned()
    } else if base.ends_with("/v1") {
        format!("{base}/chat/completions")
    } else {
        format!("{base}/v1/chat/completions")
    }
}

/// Request body for one completion.
pub fn request_body(req: &CompletionRequest<'_>) -> Value {
    let mut body = Map::new();
    body.insert("model".into(), json!(req.agent.model_name));
    body.insert(
        "messages".into(),
        json!([{"role": "user", "content": req.prompt.text}]),
    );
    body.insert("temperature".into(), json!(req.temperature));
    body.insert("max_tokens".into(), json!(req.max_tokens));
    match &req.agent.extra_params_key {
        Some(key) => {
            body.insert(key.clone(), json!({"top_k": req.top_k}));
        }
        None => {
            body.insert("top_k".into(), json!(req.top_k));
        }
    }
    Value::Object(body)
}

/// Pull content, reasoning, and usage out of a chat-completions response.
pub fn parse_response(v: &Value) -> Result<RawCompletion, GatewayError> {
    let choice = v
        .get("choices")
        .and_then(|c| c.get(0))
        .ok_or_else(|| GatewayError::BadResponse("no choices".into()))?;
    let message = choice
        .get("message")
        .ok_or_else(|| GatewayError::BadResponse("choice has no message".into()))?;
    let content = message
        .get("content")
        .and_then(Value::as_str)
        .unwrap_or_default()
        .to_owned();
    let reasoning = ["reasoning_content", "reasoning", "thinking"]
        .iter()
        .find_map(|k| message.get(*k).and_then(Value::as_str))
        .filter(|s| !s.trim().is_empty())
        .map(str::to_owned);
    let usage = v.get("usage");
    let count = |k: &str| usage.and_then(|u| u.get(k)).and_then(Value::as_u64).unwrap_or(0);
    Ok(RawCompletion {
        content,
        reasoning,
        prompt_tokens: count("prompt_tokens"),
        output_tokens: count("completion_tokens"),
        finish_reason: choice
            .get("finish_reason")
            .and_then(Value::as_str)
            .map(str::to_owned),
    })
}

impl Backend for HttpBackend {
    fn dispatch(&self, req: &CompletionRequest<'_>) -> Result<RawCompletion, GatewayError> {
        let url = match &req.agent.endpoint {
            super::Endpoint::Http(url) => completions_url(url),
            super::Endpoint::Scripted(p) => {
                return Err(GatewayError::Config(format!(
                    "scripted endpoint {} routed to http backend",
                    p.display()
                )))
            }
        };
        let mut builder = self.client.post(&url).json(&request_body(req));
        if let Some(var) = &req.agent.api_key_env {
            if let Ok(key) = std::env::var(var) {
                builder = builder.bearer_auth(key);
            }
        }
        let resp = builder.send().map_err(|e| GatewayError::Transport(e.to_string()))?;
        let status = resp.status();
        let text = resp.text().map_err(|e| GatewayError::Transport(e.to_string()))?;
        if !status.is_success() {
            return Err(GatewayError::Http {
                status: status.as_u16(),
                body: text.chars().take(500).collect(),
            });
        }
        let v: Value =
            serde_json::from_str(&text).map_err(|e| GatewayError::BadResponse(format!("invalid json: {e}")))?;
        parse_response(&v)
    }
}
