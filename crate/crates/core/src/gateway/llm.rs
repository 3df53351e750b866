use std::time::Duration;

use serde_json::{json, Value};

use super::{LlmProvider, PromptRequest};
use crate::error::ProviderError;
use crate::http::{agent, classify_status, transport_error};

/// Client for an OpenAI-compatible `/chat/completions` endpoint.
#[derive(Debug, Clone)]
pub struct HttpLlm {
    endpoint: String,
    model: String,
    api_key: Option<String>,
    timeout: Duration,
}

impl HttpLlm {
    pub fn new(endpoint: impl Into<String>, model: impl Into<String>, api_key: Option<String>) -> Self {
        Self {
            endpoint: endpoint.into(),
            model: model.into(),
            api_key,
            timeout: Duration::from_secs(600),
        }
    }

    pub fn with_timeout(mut self, timeout: Duration) -> Self {
        self.timeout = timeout;
        self
    }

    fn body(&self, request: &PromptRequest) -> Value {
        let mut body = json!({
            "model": self.model,
            "messages": [
                {"role": "system", "content": request.system_prompt()},
                {"role": "user", "content": request.render()},
            ],
        });
        if let Some(schema) = request.template.output_schema() {
            body["response_format"] = json!({
                "type": "json_schema",
                "json_schema": {"name": request.template.id(), "schema": schema},
            });
        }
        body
    }
}

impl LlmProvider for HttpLlm {
    fn complete(&self, request: &PromptRequest) -> Result<String, ProviderError> {
        let url = format!("{}/chat/completions", self.endpoint.trim_end_matches('/'));
        let mut req = agent(self.timeout).post(&url);
        if let Some(key) = &self.api_key {
            req = req.header("Authorization", &format!("Bearer {key}"));
        }
        let mut resp = req.send_json(self.body(request)).map_err(transport_error)?;
        let status = resp.status().as_u16();
        let text = resp.body_mut().read_to_string().map_err(transport_error)?;
        if !(200..300).contains(&status) {
            return Err(classify_status(status, &text));
        }
        let v: Value = serde_json::from_str(&text)
            .map_err(|e| ProviderError::Other(format!("bad completion payload: {e}")))?;
        v.pointer("/choices/0/message/content")
            .and_then(Value::as_str)
            .map(str::to_owned)
            .ok_or_else(|| ProviderError::Other("completion payload has no message content".into()))
    }
}
